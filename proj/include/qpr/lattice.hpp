#pragma once

#include <array>
#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

// Truncated Fourier lattices on the torus, shared by every other module.
//
// Conventions (fixed once):
//   * Modes of the box [-R..R]^dim are enumerated row-major in the shifted
//     coordinates (m_1+R, ..., m_dim+R); the enumeration is a deterministic
//     bijection onto 0..(2R+1)^dim-1, identical across runs and platforms.
//   * Fourier coefficients: u_hat(xi) = (2pi)^{-dim} \int u e^{-i xi.x} dx,
//     discretized as the plain grid average (forward DFT divided by the grid
//     size); inverse is the unscaled synthesis u(x) = sum u_hat(xi) e^{i xi.x}.
//   * |.| on multi-indices is Euclidean; <xi> = (1 + |xi|^2)^{1/2}.

namespace qpr {

using cplx = std::complex<double>;

inline double bracket(std::span<const int> xi) {
  double s = 1.0;
  for (int c : xi) s += double(c) * double(c);
  return std::sqrt(s);
}

inline double bracket1(double t) { return std::sqrt(1.0 + t * t); }

struct LatticeSpec {
  int d = 1;  // spatial dimension
  int n = 1;  // number of forcing frequencies
  int J = 1;  // spatial truncation radius (|j|_inf <= J)
  int L = 1;  // angle truncation radius (|l|_inf <= L)

  void validate() const {
    if (d < 1 || n < 1 || J < 1 || L < 1)
      throw std::invalid_argument("LatticeSpec: d, n, J, L must all be >= 1");
    if (d > 4 || n > 4)
      throw std::invalid_argument("LatticeSpec: dimensions above 4 unsupported");
  }
  long spatial_count() const {
    long c = 1;
    for (int i = 0; i < d; ++i) c *= 2L * J + 1;
    return c;
  }
  long angle_count() const {
    long c = 1;
    for (int i = 0; i < n; ++i) c *= 2L * L + 1;
    return c;
  }
  bool operator==(const LatticeSpec&) const = default;
};

// Enumeration of [-R..R]^dim with cached brackets and fast inverse lookup.
class ModeTable {
 public:
  ModeTable(int dim, int R);

  int dim() const { return dim_; }
  int radius() const { return R_; }
  int count() const { return count_; }

  std::span<const int> mode(int idx) const {
    return {flat_.data() + std::size_t(idx) * dim_, std::size_t(dim_)};
  }
  // -1 when the point lies outside the box.
  int index_of(std::span<const int> m) const {
    int idx = 0;
    for (int c = 0; c < dim_; ++c) {
      if (m[c] < -R_ || m[c] > R_) return -1;
      idx = idx * (2 * R_ + 1) + (m[c] + R_);
    }
    return idx;
  }
  double bracket_of(int idx) const { return bracket_[idx]; }
  double norm2(int idx) const { return norm2_[idx]; }  // Euclidean |m|
  int negate(int idx) const { return count_ - 1 - idx; }

 private:
  int dim_, R_, count_;
  std::vector<int> flat_;
  std::vector<double> bracket_;
  std::vector<double> norm2_;
};

// Process-wide table cache; tables are immutable after construction.
const ModeTable& mode_table(int dim, int R);

inline const ModeTable& spatial_modes(const LatticeSpec& s) { return mode_table(s.d, s.J); }
inline const ModeTable& angle_modes(const LatticeSpec& s) { return mode_table(s.n, s.L); }

// Complex samples on a uniform product grid over the torus, one size per
// dimension. Point g has coordinates x_c = 2 pi g_c / dims[c].
struct GridFunction {
  std::vector<int> dims;
  std::vector<cplx> values;

  GridFunction() = default;
  explicit GridFunction(std::vector<int> dims_);
  long total() const;
};

// In-place DFTs in the fixed convention (see header comment).
void dft_forward(GridFunction& f);
void dft_inverse(GridFunction& f);

// Bin <-> mode conversion for one axis of size N: mode m in [-(N-1)/2 .. N/2].
inline int bin_of_mode(int m, int N) { return m >= 0 ? m : m + N; }
inline int mode_of_bin(int b, int N) { return b <= N / 2 ? b : b - N; }

// Extract the coefficients of a transformed grid onto a mode box (truncating),
// and the reverse embedding (zero padding). `f` must hold coefficients.
std::vector<cplx> coeffs_to_box(const GridFunction& f, const ModeTable& box);
GridFunction box_to_grid_coeffs(std::span<const cplx> coeffs, const ModeTable& box,
                                const std::vector<int>& dims);

// Evaluate a coefficient array over `box` as a trigonometric sum at a point.
cplx eval_coeffs(std::span<const cplx> coeffs, const ModeTable& box,
                 std::span<const double> x);

}  // namespace qpr

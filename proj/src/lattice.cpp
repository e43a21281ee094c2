#include "qpr/lattice.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>

namespace qpr {

ModeTable::ModeTable(int dim, int R) : dim_(dim), R_(R) {
  if (dim < 1 || R < 0) throw std::invalid_argument("ModeTable: bad dimensions");
  long c = 1;
  for (int i = 0; i < dim; ++i) c *= 2L * R + 1;
  if (c > (1L << 26)) throw std::invalid_argument("ModeTable: box too large");
  count_ = int(c);
  flat_.resize(std::size_t(count_) * dim_);
  bracket_.resize(count_);
  norm2_.resize(count_);
  std::vector<int> m(dim_, -R_);
  for (int idx = 0; idx < count_; ++idx) {
    double s = 0.0;
    for (int cdim = 0; cdim < dim_; ++cdim) {
      flat_[std::size_t(idx) * dim_ + cdim] = m[cdim];
      s += double(m[cdim]) * double(m[cdim]);
    }
    bracket_[idx] = std::sqrt(1.0 + s);
    norm2_[idx] = std::sqrt(s);
    for (int cdim = dim_ - 1; cdim >= 0; --cdim) {
      if (++m[cdim] <= R_) break;
      m[cdim] = -R_;
    }
  }
}

const ModeTable& mode_table(int dim, int R) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::unique_ptr<ModeTable>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{dim, R}];
  if (!slot) slot = std::make_unique<ModeTable>(dim, R);
  return *slot;
}

GridFunction::GridFunction(std::vector<int> dims_) : dims(std::move(dims_)) {
  values.assign(std::size_t(total()), cplx(0.0, 0.0));
}

long GridFunction::total() const {
  long t = 1;
  for (int s : dims) t *= s;
  return t;
}

namespace {

std::mutex& fftw_mutex() {
  static std::mutex mu;
  return mu;
}

void run_fft(const std::vector<int>& dims, cplx* data, int sign) {
  fftw_plan plan;
  {
    // FFTW planning is not thread safe; execution of a ready plan is.
    std::lock_guard<std::mutex> lock(fftw_mutex());
    plan = fftw_plan_dft(int(dims.size()), dims.data(),
                         reinterpret_cast<fftw_complex*>(data),
                         reinterpret_cast<fftw_complex*>(data), sign,
                         FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
  }
}

}  // namespace

void dft_forward(GridFunction& f) {
  if (long(f.values.size()) != f.total())
    throw std::invalid_argument("dft_forward: grid size mismatch");
  run_fft(f.dims, f.values.data(), FFTW_FORWARD);
  const double scale = 1.0 / double(f.total());
  for (auto& v : f.values) v *= scale;
}

void dft_inverse(GridFunction& f) {
  if (long(f.values.size()) != f.total())
    throw std::invalid_argument("dft_inverse: grid size mismatch");
  run_fft(f.dims, f.values.data(), FFTW_BACKWARD);
}

std::vector<cplx> coeffs_to_box(const GridFunction& f, const ModeTable& box) {
  if (int(f.dims.size()) != box.dim())
    throw std::invalid_argument("coeffs_to_box: dimension mismatch");
  std::vector<cplx> out(box.count());
  for (int idx = 0; idx < box.count(); ++idx) {
    auto m = box.mode(idx);
    long pos = 0;
    bool inside = true;
    for (int c = 0; c < box.dim(); ++c) {
      int N = f.dims[c];
      if (m[c] < -(N - 1) / 2 || m[c] > N / 2) { inside = false; break; }
      pos = pos * N + bin_of_mode(m[c], N);
    }
    out[idx] = inside ? f.values[pos] : cplx(0.0, 0.0);
  }
  return out;
}

GridFunction box_to_grid_coeffs(std::span<const cplx> coeffs, const ModeTable& box,
                                const std::vector<int>& dims) {
  if (int(dims.size()) != box.dim() || long(coeffs.size()) != box.count())
    throw std::invalid_argument("box_to_grid_coeffs: size mismatch");
  GridFunction f(dims);
  for (int idx = 0; idx < box.count(); ++idx) {
    auto m = box.mode(idx);
    long pos = 0;
    for (int c = 0; c < box.dim(); ++c) {
      int N = dims[c];
      if (box.radius() > (N - 1) / 2)
        throw std::invalid_argument("box_to_grid_coeffs: grid too small for box");
      pos = pos * N + bin_of_mode(m[c], N);
    }
    f.values[pos] = coeffs[idx];
  }
  return f;
}

cplx eval_coeffs(std::span<const cplx> coeffs, const ModeTable& box,
                 std::span<const double> x) {
  cplx acc(0.0, 0.0);
  for (int idx = 0; idx < box.count(); ++idx) {
    if (coeffs[idx] == cplx(0.0, 0.0)) continue;
    auto m = box.mode(idx);
    double phase = 0.0;
    for (int c = 0; c < box.dim(); ++c) phase += m[c] * x[c];
    acc += coeffs[idx] * std::polar(1.0, phase);
  }
  return acc;
}

}  // namespace qpr

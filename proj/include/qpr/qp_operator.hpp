#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "qpr/lattice.hpp"

// Quasi-periodic operators as finite families of spatial-mode matrices, one
// per angle-Fourier index l, together with the weighted Hilbert-Schmidt norm
// machinery, cutoffs, composition with angle convolution, Neumann inversion
// and structure checks.
//
// Block(l) holds the matrix R_hat(l) with entry (row a, col b) the coefficient
// coupling input mode j'(b) to output mode j(a). Angle convolution in compose
// clips indices that leave the truncation box; the clipped mass is reported.

namespace qpr {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

struct NormProfile {
  double s = 0.0;       // angle regularity exponent (>= 0)
  double sigma1 = 0.0;  // input spatial weight
  double sigma2 = 0.0;  // output spatial weight
  double beta = 0.0;    // extra decay exponent (>= 0), used by beta_norm

  void validate() const {
    if (s < 0 || beta < 0) throw std::invalid_argument("NormProfile: s, beta must be >= 0");
  }
};

struct StructureFlags {
  bool real = false;
  bool reversible = false;
  bool reversibility_preserving = false;
  double symmetric_hyperbolic_defect = 0.0;  // aggregated norm of R + R*
};

class QPOperator {
 public:
  QPOperator() = default;
  explicit QPOperator(const LatticeSpec& spec);

  const LatticeSpec& spec() const { return spec_; }
  int angle_count() const { return int(blocks_.size()); }
  int spatial_count() const { return ns_; }

  bool has_block(int aidx) const { return blocks_[aidx].size() != 0; }
  const Mat& block(int aidx) const { return blocks_[aidx]; }
  // Creates the block (zero-filled) on first access.
  Mat& ensure_block(int aidx);
  void clear_block(int aidx) { blocks_[aidx].resize(0, 0); }
  // Drops blocks whose largest entry is exactly zero.
  void prune();

  QPOperator& operator+=(const QPOperator& other);
  QPOperator& operator-=(const QPOperator& other);
  QPOperator& operator*=(cplx scale);
  friend QPOperator operator+(QPOperator a, const QPOperator& b) { return a += b; }
  friend QPOperator operator-(QPOperator a, const QPOperator& b) { return a -= b; }
  friend QPOperator operator*(cplx s, QPOperator a) { return a *= s; }

  double max_abs_entry() const;

 private:
  LatticeSpec spec_;
  int ns_ = 0;
  std::vector<Mat> blocks_;  // indexed by angle ModeTable order; empty = zero
};

QPOperator qp_zero(const LatticeSpec& spec);
QPOperator qp_identity(const LatticeSpec& spec);
QPOperator qp_from_diagonal(const LatticeSpec& spec, const Vec& diag);
Vec qp_diagonal_of_l0(const QPOperator& R);

// (sum_{k,k'} <k>^{2 s2} |R_k^{k'}|^2 <k'>^{-2 s1})^{1/2}, compensated sums.
double hs_norm(const Mat& block, const ModeTable& space, double sigma1, double sigma2);

// (sum_l <l>^{2s} hs(R_hat(l))^2)^{1/2}
double m_norm(const QPOperator& R, const NormProfile& p);

// Entrywise <j-j'>^beta weighting, independent of l.
QPOperator grad_weight(const QPOperator& R, double beta);

// m_norm(R; s+beta, s1, s2) + m_norm(grad_weight(R, beta); s, s1, s2)
double beta_norm(const QPOperator& R, const NormProfile& p);

// Low part keeps blocks |l| <= N and entries |j-j'| < N (Euclidean |.|);
// high part is the exact complement, low + high == R.
struct CutoffPair {
  QPOperator low, high;
};
CutoffPair cutoff(const QPOperator& R, double N);

// Block formula (RP)_hat(l) = sum_{l'} R_hat(l-l') P_hat(l'). Products whose
// angle index leaves the box are dropped; when `dropped` is non-null it
// accumulates the Frobenius-aggregate norm of the clipped tail.
QPOperator compose(const QPOperator& R, const QPOperator& P, double* dropped = nullptr);

// Applies R to a spatial coefficient vector at a fixed angle phi.
Vec apply_at_angle(const QPOperator& R, std::span<const double> phi, const Vec& u);
Mat at_angle(const QPOperator& R, std::span<const double> phi);

// Blockwise i (omega . l) multiplication: the omega-directional angle derivative.
QPOperator omega_dphi(const QPOperator& R, std::span<const double> omega);

// Returns Phi^{-1} - Id for Phi = Id + X via the alternating Neumann series.
// Requires m_norm(X; guard profile) < 1; throws std::domain_error otherwise
// and std::runtime_error when the series fails to reach `tol`.
QPOperator neumann_inverse_tail(const QPOperator& X, double tol, int max_terms = 64,
                                double* dropped = nullptr);

// Truncated exponential series sum X^k / k! (minus nothing; includes Id).
QPOperator qp_exp(const QPOperator& X, double tol, int max_terms = 64,
                  double* dropped = nullptr);

QPOperator adjoint(const QPOperator& R);
QPOperator commutator(const QPOperator& A, const QPOperator& B, double* dropped = nullptr);

// Coefficient identities of the real / reversible / preserving classes,
// checked entrywise to rel_tol of the largest entry; the symmetric-hyperbolic
// defect is the plain aggregated norm of R + R*.
StructureFlags check_structure(const QPOperator& R, double rel_tol = 1e-12);

// Diagnostic fit of the operator order: slope of log column action against
// log <j'> over well-resolved columns. Never used as a correctness gate.
struct OrderFit {
  double order = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};
OrderFit estimate_order(const QPOperator& R);

// Binary serialization: header (d, n, J, L) + dense blocks in the fixed mode
// order; round-trips bit-exactly.
std::string qp_serialize(const QPOperator& R);
QPOperator qp_deserialize(std::string_view bytes);

}  // namespace qpr

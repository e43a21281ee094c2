#pragma once

#include "qpr/lattice.hpp"

// Scalar functions on T^n x T^d held as Fourier coefficients over the product
// box [-L..L]^n x [-J..J]^d, flat index ia * Ns + is. Grid work happens on the
// doubled (dealiased) product grid so that pointwise products are exact within
// the retained band.

namespace qpr {

struct PhaseFunction {
  LatticeSpec spec;
  std::vector<cplx> coef;  // angle_count * spatial_count

  PhaseFunction() = default;
  explicit PhaseFunction(const LatticeSpec& s)
      : spec(s), coef(std::size_t(s.angle_count()) * s.spatial_count(), cplx(0.0)) {}

  cplx& at(int angle_idx, int space_idx) {
    return coef[std::size_t(angle_idx) * spec.spatial_count() + space_idx];
  }
  cplx at(int angle_idx, int space_idx) const {
    return coef[std::size_t(angle_idx) * spec.spatial_count() + space_idx];
  }

  PhaseFunction& operator*=(cplx s) {
    for (auto& c : coef) c *= s;
    return *this;
  }
  PhaseFunction& operator+=(const PhaseFunction& o) {
    for (std::size_t i = 0; i < coef.size(); ++i) coef[i] += o.coef[i];
    return *this;
  }

  cplx mean() const;  // coefficient at (l, j) = (0, 0)

  PhaseFunction dx(int direction) const;    // spatial derivative
  PhaseFunction omega_dphi(std::span<const double> omega) const;

  // Evaluation as a trigonometric sum.
  cplx eval(std::span<const double> phi, std::span<const double> x) const;
  // Spatial coefficient slice at a fixed angle: sum_l coef(l, .) e^{i l.phi}.
  std::vector<cplx> slice_at_angle(std::span<const double> phi) const;

  double max_abs_coef() const;
  bool is_real(double tol) const;  // coef(-l,-j) == conj(coef(l,j))
  // parity: f(-phi, -x) = sign * f(phi, x) within tol * max coefficient
  bool has_parity(int sign, double tol) const;
};

// Doubled-resolution product grid for exact in-band products.
std::vector<int> dealiased_dims(const LatticeSpec& spec);

GridFunction to_grid(const PhaseFunction& f, const std::vector<int>& dims);
PhaseFunction from_grid(GridFunction grid, const LatticeSpec& spec);

// Pointwise product computed on the doubled grid, truncated back to the box.
PhaseFunction multiply(const PhaseFunction& a, const PhaseFunction& b);

double sup_norm_on_grid(const PhaseFunction& f);

}  // namespace qpr

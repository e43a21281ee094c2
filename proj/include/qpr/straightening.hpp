#pragma once

#include "qpr/phase_function.hpp"
#include "qpr/qp_operator.hpp"

// Straightening of the highest-order term: a quasi-periodic torus
// diffeomorphism x -> x + alpha(phi, x) carrying (nu + eps V(phi,x)) . grad
// to the constant field nu0 . grad, found by Picard iteration on (alpha, nu0)
// with Fourier division by i(omega.l + nu0.j) under the Diophantine guard
// |omega.l + nu0.j| > gamma / <(l,j)>^tau.

namespace qpr {

struct DiophantineReport {
  bool ok = false;
  double worst_margin = std::numeric_limits<double>::infinity();
  std::vector<int> l, j;  // minimizing tuple
  double divisor_abs = 0.0;
};

DiophantineReport diophantine_check(std::span<const double> omega,
                                    std::span<const double> nu0, double gamma,
                                    double tau, int Lmax, int Jmax);

struct Diffeomorphism {
  LatticeSpec spec;
  std::vector<PhaseFunction> alpha;        // d components, displacement
  std::vector<PhaseFunction> alpha_tilde;  // inverse displacement
  double grad_sup = 0.0;                   // sup-norm of the Jacobian of alpha

  // Largest grid error of x -> x + alpha -> + alpha_tilde round trips.
  double roundtrip_error() const;
};

std::vector<PhaseFunction> invert_displacement(const std::vector<PhaseFunction>& alpha);

struct StraighteningConfig {
  double gamma = 0.05;
  double tau = 3.0;
  double tol = 1e-10;
  int max_iter = 200;
  double eps_over_gamma_cap = 0.5;
  int dioph_Lmax = 16;
  int dioph_Jmax = 32;
};

struct StraighteningResult {
  std::vector<double> nu0;
  Diffeomorphism diffeo;
  double residual = 0.0;              // sup-norm straightening defect on the grid
  double pushforward_residual = 0.0;  // direct push-forward evaluation vs nu0
  bool diophantine_ok = false;
  double dioph_worst_margin = 0.0;
  bool converged = false;
  int iterations = 0;
  double min_divisor = std::numeric_limits<double>::infinity();
  double c_epsilon = 0.0;  // |nu0 - nu| / eps (0 for eps = 0)
};

StraighteningResult solve_straightening(const std::vector<PhaseFunction>& V,
                                        std::span<const double> omega,
                                        std::span<const double> nu, double eps,
                                        const StraighteningConfig& cfg);

// Matrix elements of u(x) -> u(x + alpha(phi, x)) (or the inverse when
// `inverse` is set), angle-resolved on the doubled grid then transformed into
// blocks. Entries at the spatial truncation boundary are the least trusted.
QPOperator composition_operator(const Diffeomorphism& diffeo, bool inverse);

}  // namespace qpr

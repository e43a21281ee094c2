#pragma once

#include "qpr/config.hpp"
#include "qpr/phase_function.hpp"
#include "qpr/qp_operator.hpp"

// Time evolution: a direct pseudo-spectral integrator for
// d_t u = (nu + eps V(omega t, x)).grad u + eps W(omega t) u, and the reduced
// closed-form flow u(t) = U(omega t) e^{t diag(lambda)} U(0)^{-1} u0 pushed
// through the composed transformation chain. The two are independent paths to
// the same trajectory and cross-check each other.

namespace qpr {

struct NormSeries {
  std::vector<double> times;
  std::vector<double> h_sigma;
  std::vector<double> l2;
  std::vector<Vec> snapshots;  // recorded coefficient vectors
  bool truncated = false;      // stopped by the blow-up guard
};

double sobolev_norm(const Vec& u, const ModeTable& space, double sigma);

Vec u0_from_spec(const EvolutionSpec& ev, const LatticeSpec& lattice);

// Direct integration. `V` holds d components on the lattice box; W is applied
// as a matrix with phi = omega t evaluated exactly. dt stability is the
// caller's concern; the largest free frequency is reported via `max_freq`.
NormSeries evolve_direct(const EvolutionSpec& ev, const std::vector<PhaseFunction>& V,
                         const QPOperator& W, std::span<const double> omega,
                         std::span<const double> nu, double eps,
                         double* max_freq = nullptr);

// Reduced flow through U; records on the same cadence as evolve_direct.
NormSeries evolve_reduced(const Vec& lambda, const QPOperator& U,
                          const EvolutionSpec& ev, std::span<const double> omega);

struct GrowthClass {
  enum Kind { bounded, exponential, undecided } kind = undecided;
  double rate = 0.0;
  double r2 = 0.0;
};

// Linear fit of log norm against time: |slope| < tol_rate is bounded;
// slope >= tol_rate with R^2 >= 0.99 is exponential growth at that rate.
GrowthClass growth_classifier(std::span<const double> times,
                              std::span<const double> norms, double tol_rate = 1e-4);

}  // namespace qpr

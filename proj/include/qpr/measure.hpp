#pragma once

#include "qpr/config.hpp"

// Monte Carlo estimate of the excluded parameter set: the fraction of
// (omega, nu) in [1,2]^{n+d} violating either the straightening Diophantine
// conditions or the final doubled-constant Melnikov conditions, per gamma,
// with Wilson intervals and the log-log scaling fit.

namespace qpr {

// Uniform i.i.d. samples in [1,2]^dim; sample i depends only on (seed, i), so
// parallel evaluation and re-runs see identical streams.
std::vector<std::vector<double>> sample_parameters(std::uint64_t seed, int count, int dim);

struct GammaRow {
  double gamma = 0.0;
  int samples = 0;
  int excluded = 0;
  double fraction = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // Wilson 95%
  int tag_diophantine = 0;
  int tag_melnikov = 0;
  int tag_pipeline_failure = 0;
};

struct MeasureResult {
  std::vector<GammaRow> rows;
  double loglog_slope = std::numeric_limits<double>::quiet_NaN();
  int scan_radius = 0;
  // first-order vs full-pipeline agreement on the spot-checked subset
  int spot_checks = 0;
  int spot_mismatches = 0;
  bool monotone_in_gamma = true;
};

MeasureResult excluded_fraction(const ExperimentConfig& cfg);

// Exclusion decision for one sample under the first-order eigenvalue model;
// exposed for the independent re-implementation oracle in the tests.
struct ExclusionDecision {
  bool excluded = false;
  bool diophantine_hit = false;
  bool melnikov_hit = false;
};
ExclusionDecision first_order_excluded(const ExperimentConfig& cfg,
                                       std::span<const double> omega,
                                       std::span<const double> nu, double gamma,
                                       int scan_radius);

struct LipschitzProbe {
  bool ok = false;          // both endpoints inside the working Cantor set
  std::string skip_reason;
  double nu0_quotient = 0.0;            // |nu0(p+h) - nu0(p)| / |h|
  double z_sup_quotient = 0.0;          // sup_j |dz(j)| / |h|
  double rho_weighted_quotient = 0.0;   // max_j <j>^{2m} |d rho_j| / |h|
};

LipschitzProbe lipschitz_probe(const ExperimentConfig& cfg, std::span<const double> h);

}  // namespace qpr

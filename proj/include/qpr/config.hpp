#pragma once

#include <json.hpp>

#include "qpr/phase_function.hpp"
#include "qpr/qp_operator.hpp"

// Experiment configuration: a strict JSON schema (unknown keys rejected,
// defaults filled in) plus the builders turning the declarative V / W blocks
// into grid functions and operators.

namespace qpr {

using json = nlohmann::ordered_json;

struct WaveTerm {
  int component = 0;            // V component (ignored for scalar fields)
  std::vector<int> angle_mode;  // l
  std::vector<int> space_mode;  // j
  double amplitude = 0.0;
  bool is_sin = false;          // cos otherwise
};

struct ScalarFieldSpec {
  double mean = 0.0;
  std::vector<WaveTerm> terms;
};

struct PotentialSpec {
  std::vector<double> mean;  // d components
  std::vector<WaveTerm> terms;
};

enum class PerturbationKind { multiplier_times_potential, explicit_blocks };
enum class StructureTarget { reversible, symmetric_hyperbolic_only, planted_growth };

struct ExplicitBlockEntry {
  std::vector<int> angle_mode, row_mode, col_mode;
  double re = 0.0, im = 0.0;
};

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::multiplier_times_potential;
  StructureTarget structure = StructureTarget::reversible;
  ScalarFieldSpec potential;
  double growth_amplitude = 0.0;
  std::vector<ExplicitBlockEntry> blocks;
};

struct ToleranceSpec {
  double straighten_tol = 1e-10;
  int straighten_max_iter = 200;
  double series_tol = 1e-12;
  double kam_stop_tol = 1e-13;
  int kam_max_steps = 30;
  double eps_over_gamma_cap = 0.5;
  int m_cap = 4;
  double s_norm = 2.0;
  int dioph_Lmax = 16;
  int dioph_Jmax = 32;
};

struct EvolutionSpec {
  double T = 100.0;
  double dt = 0.005;
  std::string integrator = "strang_splitting";  // or "rk4"
  double sigma = 2.0;
  std::vector<ExplicitBlockEntry> u0;  // row_mode used as the mode index
  int record_every = 20;
  bool both_directions = false;
};

struct MeasureSpec {
  int samples = 2000;
  std::vector<double> gammas{0.2, 0.1, 0.05, 0.025};
  std::uint64_t seed = 1234;
  std::string eigenvalue_model = "first_order";  // or "full_pipeline"
  int scan_radius = 0;                           // 0 -> max(32, 2 gamma^{-1/tau})
  double full_pipeline_fraction = 0.05;
  bool link_gamma = false;  // gamma = epsilon^{gamma_exponent}
};

struct StageToggles {
  bool straighten = true;
  bool smooth = true;
  bool reduce = true;
  bool verify_cantor = true;
};

struct ExperimentConfig {
  LatticeSpec lattice{1, 1, 16, 8};
  std::vector<double> omega{1.61803398874989};
  std::vector<double> nu{1.41421356237309};
  double epsilon = 1e-3;
  double gamma = 0.05;
  double tau = 3.0;
  double smoothing_gain = 1.0;  // order gain per smoothing step
  double gamma_exponent = 0.5;
  PotentialSpec potential;
  PerturbationSpec perturbation;
  StageToggles stages;
  ToleranceSpec tolerances;
  EvolutionSpec evolution;
  MeasureSpec measure;
  json sweep_grid = json::object();
  int sweep_workers = 2;
  std::uint64_t seed = 42;
  std::string output_dir = "output";

  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig from_file(const std::string& path);
  json to_json() const;  // effective config: parsed values plus defaults
};

// Generated schema reference (field, type, default, description).
std::string config_reference();

// V as d coefficient functions on the product box.
std::vector<PhaseFunction> build_potential(const ExperimentConfig& cfg);
PhaseFunction build_scalar_field(const ScalarFieldSpec& spec, const LatticeSpec& lattice);

// W as a quasi-periodic operator per the perturbation spec. The multiplier of
// a `reversible` target is i (sum_c xi_c) <xi>^{-e}; `symmetric_hyperbolic_only`
// uses i <xi>^{1-e}; `planted_growth` adds growth_amplitude <xi>^{-e} on the
// diagonal, which puts a positive real part into the reduced spectrum.
QPOperator build_perturbation(const ExperimentConfig& cfg);

// Multiplier symbol used for the first-order eigenvalue model.
cplx perturbation_symbol(const ExperimentConfig& cfg, std::span<const int> j);

}  // namespace qpr

#pragma once

#include "qpr/config.hpp"
#include "qpr/dynamics.hpp"
#include "qpr/kam.hpp"
#include "qpr/smoothing.hpp"
#include "qpr/straightening.hpp"

// Orchestration of straightening -> smoothing -> KAM -> verification at one
// parameter point, the derived-constant bookkeeping, and the run report.

namespace qpr {

struct DerivedConstants {
  double alpha = 0.0;   // 12 tau + 7
  double beta = 0.0;    // alpha + 1
  double m = 0.0;       // 2 tau + 2
  double N0 = 0.0;      // gamma^{-1}
  int s0 = 0;           // [n/2] + 1
  int M_paper = 0;      // 2m + 2 beta + [d/2] + 1
  int M_effective = 0;  // min(M_paper, m_cap); the cap is a recorded deviation
};

DerivedConstants derive_constants(double tau, double gamma, int d, int n, int m_cap);

struct PipelineResult {
  ExperimentConfig cfg;
  DerivedConstants consts;

  bool ok = false;
  FailKind fail_kind = FailKind::numerical;  // meaningful when !ok
  std::string failed_stage;                  // empty when ok
  std::string failure_detail;

  StraighteningResult straightening;
  QPOperator A_op, A_inv_op;  // composition operators (identity when eps = 0)
  QPOperator W0;              // conjugated perturbation feeding the smoothing
  double w0_dropped = 0.0;
  StructureFlags w0_flags;

  SmoothingState smoothing;
  KAMResult kam;
  CantorCheck cantor;

  QPOperator U_chain;      // A . e^{Theta_1} ... e^{Theta_M} . V_inf
  QPOperator U_chain_inv;  // composed inverse, reverse order
  double chain_dropped = 0.0;

  json report;        // deterministic run report (no clocks)
  json timings;       // wall clock per stage, excluded from determinism
};

PipelineResult run_pipeline(const ExperimentConfig& cfg);

// Deterministic run identifier: hash of the effective config and stage name.
std::string run_id(const ExperimentConfig& cfg, const std::string& stage);

// Writes report.json, spectrum.json, kam_trace.csv, effective_config.json and
// timings.json under dir (created if needed).
void write_outputs(const PipelineResult& res, const std::string& dir);

// Norm series export used by the evolve stage.
void write_norm_series(const NormSeries& direct, const NormSeries* reduced,
                       const std::string& path);

}  // namespace qpr

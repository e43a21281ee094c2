#pragma once

#include "qpr/homological.hpp"
#include "qpr/qp_operator.hpp"

// Order-lowering stage: iterated homological solves against the transport
// diagonal H0 = diag(i nu0.j) and exponential conjugations turning
// H0 + W into H0 + Z + W' with Z a time-independent Fourier multiplier and W'
// of lower order. Operators are stored in absolute normalization (the eps
// factor included); generators Theta solve
//
//     omega . d_phi Theta + [Theta, H0] = W - <W>,
//
// and one step conjugates with old-variable = e^{Theta} . new-variable:
//
//     H' = sum_k (-1)^k/k! Ad_Theta^k(H) - sum_k (-1)^k/(k+1)! Ad_Theta^k(omega.dphi Theta).

namespace qpr {

// Diagonal of the l = 0 block; equals the (phi, tau) double average of the
// conjugated family because conjugation by e^{i tau.K} rotates entry (j, j')
// by the phase tau.(j' - j), which averages to zero off the diagonal.
Vec double_average(const QPOperator& W);

struct SmoothingStepDiag {
  int step = 0;
  double w_norm_before = 0.0;
  double w_norm_after = 0.0;
  double z_increment = 0.0;
  double hom_residual_rel = 0.0;
  double min_divisor = 0.0;
  OrderFit w_order;
  StructureFlags w_flags;
  StructureFlags g_flags;
  double sh_defect = 0.0;       // symmetric-hyperbolic defect of W after the step
  double series_depth = 0;
  double dropped_mass = 0.0;
  double theta_norm = 0.0;
};

struct SmoothingState {
  LatticeSpec spec;
  std::vector<double> omega, nu0;
  Vec h0;                             // i nu0 . j per spatial mode
  Vec z;                              // accumulated multiplier (absolute)
  QPOperator W;                       // remainder (absolute)
  std::vector<QPOperator> generators; // Theta_1 .. Theta_M
  std::vector<SmoothingStepDiag> diags;
};

SmoothingState make_smoothing_state(const LatticeSpec& spec,
                                    std::span<const double> omega,
                                    std::span<const double> nu0, QPOperator W);

struct SmoothingConfig {
  int steps = 4;
  double gamma = 0.05;
  double tau = 3.0;
  double series_tol = 1e-12;
  double theta_norm_cap = 0.5;
  int series_max_terms = 80;
};

HomologicalOutcome solve_homological_smoothing(const QPOperator& W,
                                               std::span<const double> omega,
                                               std::span<const double> nu0,
                                               double gamma, double tau);

struct ConjugationResult {
  QPOperator H;        // transformed full generator (diagonal included)
  int depth = 0;       // commutator series depth used
  double tail = 0.0;   // norm of the last discarded term
  double dropped = 0.0;
};

ConjugationResult exp_conjugate(const QPOperator& H, const QPOperator& theta,
                                std::span<const double> omega, double series_tol,
                                int max_terms = 80, double theta_norm_cap = 0.5);

// Runs `cfg.steps` homological/conjugation rounds, updating z and W.
SmoothingState run_smoothing(SmoothingState state, const SmoothingConfig& cfg);

}  // namespace qpr

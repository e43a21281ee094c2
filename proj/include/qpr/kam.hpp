#pragma once

#include "qpr/homological.hpp"
#include "qpr/qp_operator.hpp"

// KAM diagonalization: Melnikov-conditioned homological solves at growing
// scales N_k = N0^{(3/2)^k}, remainder recursion
//
//   A_{k+1} = A_k + Pbar_k,
//   P_{k+1} = PiN^perp P_k + P_k X_k + (Phi_k^{-1} - Id)(Pbar_k + PiN^perp P_k + P_k X_k),
//
// with Phi_k = Id + X_k and the homological equation
// omega.dphi X + [X, A_k] = PiN P_k - Pbar_k solved by Fourier division.

namespace qpr {

struct KAMConstants {
  double tau = 3.0;
  double gamma = 0.05;
  double alpha = 0.0;  // 12 tau + 7
  double beta = 0.0;   // alpha + 1
  double m = 0.0;      // 2 tau + 2
  double N0 = 0.0;     // 1 / gamma
  double s = 2.0;      // angle regularity for trace norms
  double sigma = 0.0;  // spatial base weight; trace profile is (sigma -+ m)

  static KAMConstants derive(double tau, double gamma, double s, double sigma);
  double N(int k) const;  // N_k, with N(-1) = 1

  NormProfile main_profile() const {
    NormProfile p;
    p.s = s;
    p.sigma1 = sigma - m;
    p.sigma2 = sigma + m;
    p.beta = beta;
    return p;
  }
};

struct DiagonalSpectrum {
  LatticeSpec spec;
  std::vector<double> nu0;
  Vec z;    // Fourier-multiplier part
  Vec rho;  // accumulated KAM corrections

  static DiagonalSpectrum make(const LatticeSpec& spec, std::span<const double> nu0,
                               Vec z);
  Vec nu_part() const;   // i nu0 . j per mode
  Vec lambda() const;    // nu_part + z + rho
  double max_re() const; // max_j |Re lambda_j|
};

// |i omega.l + lambda_j - lambda_j'| - gamma / (<l><j><j'>)^tau; the excluded
// tuple (0, j, j) returns +infinity.
double melnikov_margin(const DiagonalSpectrum& A, std::span<const double> omega,
                       std::span<const int> l, std::span<const int> j,
                       std::span<const int> jp, double gamma, double tau);

struct MelnikovScan {
  bool ok = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  ResonantTuple worst;
};

// Scans all (l, j, j') != (0, j, j) with |l| <= N, |j - j'| <= N inside the
// truncation (Euclidean |.|), against the gamma-threshold.
MelnikovScan check_melnikov_set(const DiagonalSpectrum& A, std::span<const double> omega,
                                double gamma, double tau, double N);

struct KamHomological {
  QPOperator X;
  Vec pbar;  // diag of P_hat(0)
  double residual_rel = 0.0;
  double min_divisor = 0.0;
  QPOperator low, high;  // the cutoff pair used
};

KamHomological solve_homological_kam(const QPOperator& P, const DiagonalSpectrum& A,
                                     std::span<const double> omega, double N,
                                     double gamma, double tau);

struct KAMTraceRow {
  int k = 0;
  double Nk = 0.0;
  double p_mnorm = 0.0;
  double p_betanorm = 0.0;
  double x_mnorm = 0.0;
  double worst_margin = 0.0;
  double max_dlambda = 0.0;
  double hom_residual = 0.0;
  double conj_defect = 0.0;   // filled by tests / diagnostics when computed
  double dropped_mass = 0.0;
  double max_re_lambda = 0.0;
  bool real_reversible = false;
  Vec lambda_snapshot;        // spectrum before this step's update
};

struct KAMState {
  int k = 0;
  DiagonalSpectrum A;
  QPOperator P;
  QPOperator V;     // accumulated transformation Phi_0 ... Phi_k
  QPOperator Vinv;  // accumulated inverse, composed in reverse
  std::vector<KAMTraceRow> trace;
};

KAMState make_kam_state(DiagonalSpectrum A0, QPOperator P0);

// One reducibility step at scale N_k; requires the Melnikov scan to pass.
KAMState kam_step(KAMState state, const KAMConstants& consts,
                  std::span<const double> omega);

struct KAMResult {
  DiagonalSpectrum spectrum;
  QPOperator V, Vinv;
  std::vector<KAMTraceRow> trace;
  int steps = 0;
  bool converged = false;
  std::string stop_reason;
};

KAMResult kam_reduce(DiagonalSpectrum A0, QPOperator P0, const KAMConstants& consts,
                     std::span<const double> omega, int max_steps, double stop_tol_rel);

struct CantorCheck {
  bool ok = true;
  double worst_margin = std::numeric_limits<double>::infinity();
  ResonantTuple worst;
  bool inclusion_ok = true;  // 2 gamma final pass implies gamma per-step passes
  int inclusion_failures = 0;
};

// Final Cantor conditions with constant 2 gamma over the whole truncated
// lattice (|l| <= Lmax within the box); when a trace is supplied, re-scans the
// recorded per-step spectra with constant gamma at their scales.
CantorCheck final_cantor_check(const DiagonalSpectrum& A, std::span<const double> omega,
                               double gamma, double tau, double Lmax,
                               const std::vector<KAMTraceRow>* trace = nullptr,
                               const KAMConstants* consts = nullptr);

}  // namespace qpr

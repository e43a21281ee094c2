#include "qpr/smoothing.hpp"

#include <cmath>

namespace qpr {

Vec double_average(const QPOperator& W) { return qp_diagonal_of_l0(W); }

SmoothingState make_smoothing_state(const LatticeSpec& spec,
                                    std::span<const double> omega,
                                    std::span<const double> nu0, QPOperator W) {
  SmoothingState st;
  st.spec = spec;
  st.omega.assign(omega.begin(), omega.end());
  st.nu0.assign(nu0.begin(), nu0.end());
  const ModeTable& sbox = spatial_modes(spec);
  st.h0 = Vec::Zero(sbox.count());
  for (int is = 0; is < sbox.count(); ++is) {
    auto jm = sbox.mode(is);
    double nj = 0.0;
    for (int c = 0; c < spec.d; ++c) nj += nu0[c] * jm[c];
    st.h0[is] = cplx(0.0, nj);
  }
  st.z = Vec::Zero(sbox.count());
  st.W = std::move(W);
  return st;
}

HomologicalOutcome solve_homological_smoothing(const QPOperator& W,
                                               std::span<const double> omega,
                                               std::span<const double> nu0,
                                               double gamma, double tau) {
  const LatticeSpec& spec = W.spec();
  const ModeTable& sbox = spatial_modes(spec);
  const ModeTable& abox = angle_modes(spec);

  Vec h0 = Vec::Zero(sbox.count());
  for (int is = 0; is < sbox.count(); ++is) {
    auto jm = sbox.mode(is);
    double nj = 0.0;
    for (int c = 0; c < spec.d; ++c) nj += nu0[c] * jm[c];
    h0[is] = cplx(0.0, nj);
  }

  QPOperator rhs = W;
  Vec avg = double_average(W);
  rhs -= qp_from_diagonal(spec, avg);
  rhs.prune();

  auto threshold = [&](int l, int a, int b) {
    // Diophantine guard on <(l, j - j')>.
    auto lm = abox.mode(l);
    auto ja = sbox.mode(a);
    auto jb = sbox.mode(b);
    double s = 1.0;
    for (int c = 0; c < spec.n; ++c) s += double(lm[c]) * lm[c];
    for (int c = 0; c < spec.d; ++c) {
      double t = double(ja[c] - jb[c]);
      s += t * t;
    }
    return gamma / std::pow(std::sqrt(s), tau);
  };
  return solve_homological(rhs, h0, omega, threshold, FailKind::diophantine);
}

ConjugationResult exp_conjugate(const QPOperator& H, const QPOperator& theta,
                                std::span<const double> omega, double series_tol,
                                int max_terms, double theta_norm_cap) {
  NormProfile guard;
  guard.s = H.spec().n / 2 + 1;
  double tn = m_norm(theta, guard);
  if (!(tn < theta_norm_cap))
    throw NumericalError("exp_conjugate: generator norm " + std::to_string(tn) +
                         " above cap " + std::to_string(theta_norm_cap));

  ConjugationResult out;
  double scale = std::max(m_norm(H, guard), 1e-300);

  // H' = sum_k (-1)^k/k! Ad^k(H) - sum_k (-1)^k/(k+1)! Ad^k(omega.dphi theta),
  // both series advanced together: c_{k+1} = -[theta, c_k]/(k+1),
  // e_{k+1} = -[theta, e_k] (k+1)/(k+2).
  QPOperator drift = omega_dphi(theta, omega);
  QPOperator c = H;
  QPOperator e = drift;
  QPOperator acc = H - drift;
  for (int k = 0; k < max_terms; ++k) {
    QPOperator cc = commutator(theta, c, &out.dropped);
    cc *= cplx(-1.0 / double(k + 1), 0.0);
    QPOperator ee = commutator(theta, e, &out.dropped);
    ee *= cplx(-double(k + 1) / double(k + 2), 0.0);
    c = std::move(cc);
    e = std::move(ee);
    acc += c;
    acc -= e;
    out.depth = k + 1;
    out.tail = m_norm(c, guard) + m_norm(e, guard);
    if (out.tail <= series_tol * scale) {
      acc.prune();
      out.H = std::move(acc);
      return out;
    }
  }
  throw NumericalError("exp_conjugate: commutator series tail " +
                       std::to_string(out.tail) + " above tolerance");
}

SmoothingState run_smoothing(SmoothingState state, const SmoothingConfig& cfg) {
  const LatticeSpec spec = state.spec;
  NormProfile flat;
  for (int step = 1; step <= cfg.steps; ++step) {
    SmoothingStepDiag diag;
    diag.step = step;
    diag.w_norm_before = m_norm(state.W, flat);

    Vec avg = double_average(state.W);
    auto hom = solve_homological_smoothing(state.W, state.omega, state.nu0,
                                           cfg.gamma, cfg.tau);
    diag.hom_residual_rel = hom.residual_rel;
    diag.min_divisor = hom.min_divisor;
    diag.theta_norm = m_norm(hom.X, flat);
    diag.g_flags = check_structure(hom.X);

    QPOperator Hfull = qp_from_diagonal(spec, state.h0 + state.z);
    Hfull += state.W;
    auto conj = exp_conjugate(Hfull, hom.X, state.omega, cfg.series_tol,
                              cfg.series_max_terms, cfg.theta_norm_cap);
    diag.series_depth = conj.depth;
    diag.dropped_mass = conj.dropped;

    state.z += avg;
    state.W = conj.H - qp_from_diagonal(spec, state.h0 + state.z);
    state.W.prune();
    state.generators.push_back(std::move(hom.X));

    diag.z_increment = avg.cwiseAbs().maxCoeff();
    diag.w_norm_after = m_norm(state.W, flat);
    diag.w_order = estimate_order(state.W);
    diag.w_flags = check_structure(state.W);
    diag.sh_defect = diag.w_flags.symmetric_hyperbolic_defect;
    state.diags.push_back(diag);
  }
  return state;
}

}  // namespace qpr

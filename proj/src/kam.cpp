#include "qpr/kam.hpp"

#include <cmath>

namespace qpr {

KAMConstants KAMConstants::derive(double tau, double gamma, double s, double sigma) {
  if (!(tau > 0.0)) throw ConfigError("KAMConstants: tau must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("KAMConstants: gamma must lie in (0,1)");
  KAMConstants c;
  c.tau = tau;
  c.gamma = gamma;
  c.alpha = 12.0 * tau + 7.0;
  c.beta = c.alpha + 1.0;
  c.m = 2.0 * tau + 2.0;
  c.N0 = 1.0 / gamma;
  c.s = s;
  c.sigma = sigma;
  return c;
}

double KAMConstants::N(int k) const {
  if (k < 0) return 1.0;
  return std::pow(N0, std::pow(1.5, k));
}

DiagonalSpectrum DiagonalSpectrum::make(const LatticeSpec& spec,
                                        std::span<const double> nu0, Vec z) {
  DiagonalSpectrum A;
  A.spec = spec;
  A.nu0.assign(nu0.begin(), nu0.end());
  const ModeTable& sbox = spatial_modes(spec);
  if (z.size() == 0) z = Vec::Zero(sbox.count());
  if (z.size() != sbox.count()) throw std::invalid_argument("DiagonalSpectrum: z size");
  A.z = std::move(z);
  A.rho = Vec::Zero(sbox.count());
  return A;
}

Vec DiagonalSpectrum::nu_part() const {
  const ModeTable& sbox = spatial_modes(spec);
  Vec out(sbox.count());
  for (int is = 0; is < sbox.count(); ++is) {
    auto jm = sbox.mode(is);
    double nj = 0.0;
    for (int c = 0; c < spec.d; ++c) nj += nu0[c] * jm[c];
    out[is] = cplx(0.0, nj);
  }
  return out;
}

Vec DiagonalSpectrum::lambda() const { return nu_part() + z + rho; }

double DiagonalSpectrum::max_re() const {
  Vec lam = lambda();
  double m = 0.0;
  for (int i = 0; i < lam.size(); ++i) m = std::max(m, std::abs(lam[i].real()));
  return m;
}

double melnikov_margin(const DiagonalSpectrum& A, std::span<const double> omega,
                       std::span<const int> l, std::span<const int> j,
                       std::span<const int> jp, double gamma, double tau) {
  bool l_zero = true;
  for (int c : l)
    if (c != 0) l_zero = false;
  bool same = j.size() == jp.size();
  for (std::size_t c = 0; same && c < j.size(); ++c)
    if (j[c] != jp[c]) same = false;
  if (l_zero && same) return std::numeric_limits<double>::infinity();

  const ModeTable& sbox = spatial_modes(A.spec);
  int ja = sbox.index_of(j);
  int jb = sbox.index_of(jp);
  if (ja < 0 || jb < 0) throw std::invalid_argument("melnikov_margin: mode outside box");
  Vec lam = A.lambda();
  double wl = 0.0;
  for (std::size_t c = 0; c < l.size(); ++c) wl += omega[c] * l[c];
  double div = std::abs(cplx(0.0, wl) + lam[ja] - lam[jb]);
  double thr = gamma / std::pow(bracket(l) * bracket(j) * bracket(jp), tau);
  return div - thr;
}

namespace {
MelnikovScan melnikov_scan(const DiagonalSpectrum& A, std::span<const double> omega,
                           double gamma, double tau, double l_cap, double diff_cap) {
  const ModeTable& abox = angle_modes(A.spec);
  const ModeTable& sbox = spatial_modes(A.spec);
  Vec lam = A.lambda();
  MelnikovScan scan;
  for (int il = 0; il < abox.count(); ++il) {
    if (abox.norm2(il) > l_cap) continue;
    auto lm = abox.mode(il);
    double wl = 0.0;
    for (int c = 0; c < A.spec.n; ++c) wl += omega[c] * lm[c];
    bool l_zero = abox.norm2(il) == 0.0;
    double lw = std::pow(abox.bracket_of(il), tau);
    for (int a = 0; a < sbox.count(); ++a) {
      double jaw = std::pow(sbox.bracket_of(a), tau);
      auto ja = sbox.mode(a);
      for (int b = 0; b < sbox.count(); ++b) {
        if (l_zero && a == b) continue;
        auto jb = sbox.mode(b);
        double diff = 0.0;
        for (int c = 0; c < A.spec.d; ++c) {
          double t = double(ja[c] - jb[c]);
          diff += t * t;
        }
        if (std::sqrt(diff) > diff_cap) continue;
        double div = std::abs(cplx(0.0, wl) + lam[a] - lam[b]);
        double thr = gamma / (lw * jaw * std::pow(sbox.bracket_of(b), tau));
        double margin = div - thr;
        if (margin < scan.worst_margin) {
          scan.worst_margin = margin;
          scan.worst.l.assign(lm.begin(), lm.end());
          scan.worst.j.assign(ja.begin(), ja.end());
          scan.worst.jp.assign(jb.begin(), jb.end());
          scan.worst.divisor_abs = div;
          scan.worst.threshold = thr;
        }
      }
    }
  }
  scan.ok = scan.worst_margin >= 0.0;
  return scan;
}
}  // namespace

MelnikovScan check_melnikov_set(const DiagonalSpectrum& A, std::span<const double> omega,
                                double gamma, double tau, double N) {
  return melnikov_scan(A, omega, gamma, tau, N, N);
}

KamHomological solve_homological_kam(const QPOperator& P, const DiagonalSpectrum& A,
                                     std::span<const double> omega, double N,
                                     double gamma, double tau) {
  const ModeTable& abox = angle_modes(P.spec());
  const ModeTable& sbox = spatial_modes(P.spec());
  Vec lam = A.lambda();

  CutoffPair cp = cutoff(P, N);
  KamHomological out;
  out.pbar = qp_diagonal_of_l0(P);
  out.low = cp.low;
  out.high = cp.high;

  QPOperator rhs = cp.low;
  rhs -= qp_from_diagonal(P.spec(), out.pbar);
  rhs.prune();

  auto threshold = [&](int l, int a, int b) {
    return gamma / std::pow(abox.bracket_of(l) * sbox.bracket_of(a) * sbox.bracket_of(b), tau);
  };
  auto hom = solve_homological(rhs, lam, omega, threshold, FailKind::melnikov);
  out.X = std::move(hom.X);
  out.residual_rel = hom.residual_rel;
  out.min_divisor = hom.min_divisor;
  return out;
}

KAMState make_kam_state(DiagonalSpectrum A0, QPOperator P0) {
  KAMState st;
  st.k = 0;
  st.A = std::move(A0);
  st.V = qp_identity(P0.spec());
  st.Vinv = qp_identity(P0.spec());
  st.P = std::move(P0);
  return st;
}

KAMState kam_step(KAMState state, const KAMConstants& consts,
                  std::span<const double> omega) {
  const LatticeSpec spec = state.P.spec();
  const double Nk = consts.N(state.k);
  NormProfile prof = consts.main_profile();

  KAMTraceRow row;
  row.k = state.k;
  row.Nk = Nk;
  row.p_mnorm = m_norm(state.P, prof);
  row.p_betanorm = beta_norm(state.P, prof);
  row.lambda_snapshot = state.A.lambda();
  auto scan = check_melnikov_set(state.A, omega, consts.gamma, consts.tau, Nk);
  row.worst_margin = scan.worst_margin;
  if (!scan.ok) throw MelnikovExit(scan.worst);

  auto hom = solve_homological_kam(state.P, state.A, omega, Nk, consts.gamma, consts.tau);
  row.hom_residual = hom.residual_rel;
  row.x_mnorm = m_norm(hom.X, prof);

  double dropped = 0.0;
  QPOperator phi_inv_tail = neumann_inverse_tail(hom.X, 1e-15, 64, &dropped);
  QPOperator px = compose(state.P, hom.X, &dropped);
  QPOperator s = qp_from_diagonal(spec, hom.pbar);
  s += hom.high;
  s += px;
  QPOperator p_next = hom.high;
  p_next += px;
  p_next += compose(phi_inv_tail, s, &dropped);
  p_next.prune();
  row.dropped_mass = dropped;

  // Eigenvalue update and transformation accumulation.
  state.A.rho += hom.pbar;
  row.max_dlambda = hom.pbar.cwiseAbs().maxCoeff();
  row.max_re_lambda = state.A.max_re();

  QPOperator phi = qp_identity(spec);
  phi += hom.X;
  state.V = compose(state.V, phi, &row.dropped_mass);
  QPOperator phi_inv = qp_identity(spec);
  phi_inv += phi_inv_tail;
  state.Vinv = compose(phi_inv, state.Vinv, &row.dropped_mass);

  StructureFlags pf = check_structure(p_next, 1e-10);
  row.real_reversible = pf.real && pf.reversible;

  state.P = std::move(p_next);
  state.k += 1;
  state.trace.push_back(std::move(row));
  return state;
}

KAMResult kam_reduce(DiagonalSpectrum A0, QPOperator P0, const KAMConstants& consts,
                     std::span<const double> omega, int max_steps, double stop_tol_rel) {
  NormProfile prof = consts.main_profile();
  KAMState state = make_kam_state(std::move(A0), std::move(P0));
  const double initial = m_norm(state.P, prof);
  KAMResult res;
  res.converged = initial == 0.0;
  res.stop_reason = res.converged ? "P0 = 0" : "max_steps";

  int grow_streak = 0;
  double prev = initial;
  for (int k = 0; k < max_steps && !res.converged; ++k) {
    state = kam_step(std::move(state), consts, omega);
    double now = m_norm(state.P, prof);
    if (now <= stop_tol_rel * initial || now == 0.0) {
      res.converged = true;
      res.stop_reason = "remainder below stop tolerance";
      break;
    }
    if (now < 1e-8 * initial && now > 0.25 * prev) {
      // Machine-precision stagnation: already deep, no longer contracting.
      res.converged = true;
      res.stop_reason = "stagnation at rounding floor";
      break;
    }
    grow_streak = now > prev ? grow_streak + 1 : 0;
    if (grow_streak >= 2)
      throw DivergenceError("kam_reduce: remainder grew for two consecutive steps (" +
                            std::to_string(now) + " after " + std::to_string(initial) + ")");
    prev = now;
  }
  res.spectrum = std::move(state.A);
  res.V = std::move(state.V);
  res.Vinv = std::move(state.Vinv);
  res.trace = std::move(state.trace);
  res.steps = state.k;
  return res;
}

CantorCheck final_cantor_check(const DiagonalSpectrum& A, std::span<const double> omega,
                               double gamma, double tau, double Lmax,
                               const std::vector<KAMTraceRow>* trace,
                               const KAMConstants* consts) {
  CantorCheck out;
  // Final conditions carry the doubled constant and no |j - j'| cap.
  auto scan = melnikov_scan(A, omega, 2.0 * gamma, tau, Lmax,
                            std::numeric_limits<double>::infinity());
  out.ok = scan.ok;
  out.worst_margin = scan.worst_margin;
  out.worst = scan.worst;

  if (out.ok && trace && consts) {
    for (const auto& row : *trace) {
      DiagonalSpectrum snap = A;
      snap.rho = row.lambda_snapshot - A.nu_part() - A.z;
      auto step_scan =
          check_melnikov_set(snap, omega, gamma, tau, consts->N(row.k));
      if (!step_scan.ok) {
        out.inclusion_ok = false;
        ++out.inclusion_failures;
      }
    }
  }
  return out;
}

}  // namespace qpr

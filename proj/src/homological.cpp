#include "qpr/homological.hpp"

namespace qpr {

QPOperator commutator_with_diagonal(const QPOperator& X, const Vec& diag) {
  QPOperator out(X.spec());
  for (int l = 0; l < X.angle_count(); ++l) {
    if (!X.has_block(l)) continue;
    const Mat& src = X.block(l);
    Mat& dst = out.ensure_block(l);
    for (int b = 0; b < src.cols(); ++b)
      for (int a = 0; a < src.rows(); ++a)
        dst(a, b) = src(a, b) * (diag[b] - diag[a]);
  }
  return out;
}

HomologicalOutcome solve_homological(
    const QPOperator& rhs, const Vec& diag, std::span<const double> omega,
    const std::function<double(int, int, int)>& threshold, FailKind exit_kind) {
  const auto& am = angle_modes(rhs.spec());
  const auto& sm = spatial_modes(rhs.spec());
  HomologicalOutcome out;
  out.X = QPOperator(rhs.spec());

  for (int l = 0; l < rhs.angle_count(); ++l) {
    if (!rhs.has_block(l)) continue;
    auto lm = am.mode(l);
    double wl = 0.0;
    for (int c = 0; c < am.dim(); ++c) wl += omega[c] * lm[c];
    const Mat& src = rhs.block(l);
    Mat& dst = out.X.ensure_block(l);
    for (int b = 0; b < src.cols(); ++b) {
      for (int a = 0; a < src.rows(); ++a) {
        cplx v = src(a, b);
        if (v == cplx(0.0, 0.0)) continue;
        cplx divisor = cplx(0.0, wl) + diag[b] - diag[a];
        double mag = std::abs(divisor);
        double thr = threshold(l, a, b);
        if (mag < thr) {
          ResonantTuple t;
          t.l.assign(lm.begin(), lm.end());
          auto ja = sm.mode(a);
          auto jb = sm.mode(b);
          t.j.assign(ja.begin(), ja.end());
          t.jp.assign(jb.begin(), jb.end());
          t.divisor_abs = mag;
          t.threshold = thr;
          if (exit_kind == FailKind::melnikov) throw MelnikovExit(std::move(t));
          throw DiophantineExit(std::move(t));
        }
        out.min_divisor = std::min(out.min_divisor, mag);
        out.worst_margin = std::min(out.worst_margin, mag - thr);
        dst(a, b) = v / divisor;
      }
    }
  }
  out.X.prune();

  // Direct substitution; exact up to rounding by construction.
  QPOperator defect = omega_dphi(out.X, omega);
  defect += commutator_with_diagonal(out.X, diag);
  defect -= rhs;
  NormProfile flat;
  double rn = m_norm(rhs, flat);
  out.residual_rel = rn > 0 ? m_norm(defect, flat) / rn : 0.0;
  return out;
}

}  // namespace qpr

#include "qpr/measure.hpp"

#include <cmath>
#include <random>

#include "qpr/errors.hpp"
#include "qpr/pipeline.hpp"

namespace qpr {

std::vector<std::vector<double>> sample_parameters(std::uint64_t seed, int count, int dim) {
  std::vector<std::vector<double>> out(count);
  for (int i = 0; i < count; ++i) {
    // Independent stream per sample: the golden-ratio multiplier decorrelates
    // consecutive indices before seeding.
    std::mt19937_64 eng(seed ^ (0x9E3779B97F4A7C15ULL * std::uint64_t(i + 1)));
    out[i].resize(dim);
    for (int c = 0; c < dim; ++c)
      out[i][c] = 1.0 + double(eng() >> 11) * 0x1p-53;
  }
  return out;
}

namespace {

int auto_scan_radius(double gamma, double tau) {
  return std::max(32, int(std::ceil(2.0 * std::pow(gamma, -1.0 / tau))));
}

// First-order model: nu0 = nu + eps * mean(V); z(j) = eps * mean(w) * mu(j)
// (plus the planted diagonal), matching the diagonal of W_hat(0).
struct FirstOrderModel {
  std::vector<double> mean_v;
  double mean_w = 0.0;
  const ExperimentConfig* cfg = nullptr;

  explicit FirstOrderModel(const ExperimentConfig& c) : cfg(&c) {
    mean_v = c.potential.mean;
    if (int(mean_v.size()) != c.lattice.d) mean_v.assign(c.lattice.d, 0.0);
    mean_w = c.perturbation.potential.mean;
  }

  std::vector<double> nu0(std::span<const double> nu) const {
    std::vector<double> out(nu.begin(), nu.end());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += cfg->epsilon * mean_v[c];
    return out;
  }
  cplx z(std::span<const int> j) const {
    cplx mu = perturbation_symbol(*cfg, j);
    cplx val = cfg->epsilon * mean_w * cplx(0.0, mu.imag());
    if (cfg->perturbation.structure == StructureTarget::planted_growth)
      val += cfg->epsilon * cplx(mu.real(), 0.0);
    return val;
  }
};

struct WilsonInterval {
  double low, high;
};

WilsonInterval wilson(int k, int n) {
  const double z = 1.959963984540054;  // 95%
  double p = double(k) / double(n);
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

}  // namespace

ExclusionDecision first_order_excluded(const ExperimentConfig& cfg,
                                       std::span<const double> omega,
                                       std::span<const double> nu, double gamma,
                                       int scan_radius) {
  const int n = cfg.lattice.n, d = cfg.lattice.d;
  FirstOrderModel model(cfg);
  std::vector<double> nu0 = model.nu0(nu);
  ExclusionDecision dec;

  const ModeTable& lt = mode_table(n, scan_radius);
  const ModeTable& jt = mode_table(d, scan_radius);

  // Straightening Diophantine conditions on Omega_{0, gamma}.
  for (int il = 0; il < lt.count() && !dec.diophantine_hit; ++il) {
    auto lm = lt.mode(il);
    double wl = 0.0;
    for (int c = 0; c < n; ++c) wl += omega[c] * lm[c];
    double l2 = lt.norm2(il);
    for (int ij = 0; ij < jt.count(); ++ij) {
      if (l2 == 0.0 && jt.norm2(ij) == 0.0) continue;
      auto jm = jt.mode(ij);
      double div = wl;
      for (int c = 0; c < d; ++c) div += nu0[c] * jm[c];
      double joint = std::sqrt(1.0 + l2 * l2 + jt.norm2(ij) * jt.norm2(ij));
      if (std::abs(div) <= gamma / std::pow(joint, cfg.tau)) {
        dec.diophantine_hit = true;
        break;
      }
    }
  }

  // Final Melnikov conditions with the doubled constant on the model spectrum.
  if (!dec.diophantine_hit) {
    std::vector<cplx> lam(jt.count());
    std::vector<double> jbr(jt.count());
    for (int ij = 0; ij < jt.count(); ++ij) {
      auto jm = jt.mode(ij);
      double nj = 0.0;
      for (int c = 0; c < d; ++c) nj += nu0[c] * jm[c];
      lam[ij] = cplx(0.0, nj) + model.z(jm);
      jbr[ij] = std::pow(jt.bracket_of(ij), cfg.tau);
    }
    for (int il = 0; il < lt.count() && !dec.melnikov_hit; ++il) {
      auto lm = lt.mode(il);
      double wl = 0.0;
      for (int c = 0; c < n; ++c) wl += omega[c] * lm[c];
      bool l_zero = lt.norm2(il) == 0.0;
      double lw = std::pow(lt.bracket_of(il), cfg.tau);
      for (int a = 0; a < jt.count() && !dec.melnikov_hit; ++a)
        for (int b = 0; b < jt.count(); ++b) {
          if (l_zero && a == b) continue;
          double div = std::abs(cplx(0.0, wl) + lam[a] - lam[b]);
          if (div < 2.0 * gamma / (lw * jbr[a] * jbr[b])) {
            dec.melnikov_hit = true;
            break;
          }
        }
    }
  }
  dec.excluded = dec.diophantine_hit || dec.melnikov_hit;
  return dec;
}

MeasureResult excluded_fraction(const ExperimentConfig& cfg) {
  const int n = cfg.lattice.n, d = cfg.lattice.d;
  if (!(cfg.tau > std::max(n, d)))
    throw ConfigError("measure: tau must exceed max(n, d) for summability");
  const auto& ms = cfg.measure;
  auto samples = sample_parameters(ms.seed, ms.samples, n + d);
  const bool full = ms.eigenvalue_model == "full_pipeline";
  const int spot_stride =
      ms.full_pipeline_fraction > 0.0 ? std::max(1, int(1.0 / ms.full_pipeline_fraction)) : 0;

  MeasureResult out;
  std::vector<std::vector<char>> excluded_by_gamma;
  for (double gamma_req : ms.gammas) {
    double gamma = ms.link_gamma ? std::pow(cfg.epsilon, cfg.gamma_exponent) : gamma_req;
    int radius = ms.scan_radius > 0 ? ms.scan_radius : auto_scan_radius(gamma, cfg.tau);
    out.scan_radius = radius;
    GammaRow row;
    row.gamma = gamma;
    row.samples = ms.samples;
    std::vector<char> flags(ms.samples, 0);
    for (int i = 0; i < ms.samples; ++i) {
      std::span<const double> omega(samples[i].data(), n);
      std::span<const double> nu(samples[i].data() + n, d);
      bool exc;
      if (full) {
        ExperimentConfig one = cfg;
        one.omega.assign(omega.begin(), omega.end());
        one.nu.assign(nu.begin(), nu.end());
        one.gamma = gamma;
        auto res = run_pipeline(one);
        exc = !res.ok;
        if (!res.ok) {
          if (res.fail_kind == FailKind::diophantine)
            ++row.tag_diophantine;
          else if (res.fail_kind == FailKind::melnikov)
            ++row.tag_melnikov;
          else
            ++row.tag_pipeline_failure;
        }
      } else {
        auto dec = first_order_excluded(cfg, omega, nu, gamma, radius);
        exc = dec.excluded;
        if (dec.diophantine_hit) ++row.tag_diophantine;
        if (dec.melnikov_hit) ++row.tag_melnikov;
        // spot checks against the full pipeline
        if (spot_stride > 0 && i % spot_stride == 0 && cfg.epsilon > 0.0 &&
            ms.full_pipeline_fraction > 0.0 && cfg.lattice.J <= 16 && !full) {
          ++out.spot_checks;
          ExperimentConfig one = cfg;
          one.omega.assign(omega.begin(), omega.end());
          one.nu.assign(nu.begin(), nu.end());
          one.gamma = gamma;
          try {
            auto res = run_pipeline(one);
            bool full_exc = !res.ok;
            if (full_exc != exc) ++out.spot_mismatches;
          } catch (const std::exception&) {
            ++out.spot_mismatches;
          }
        }
      }
      flags[i] = exc ? 1 : 0;
      if (exc) ++row.excluded;
    }
    row.fraction = double(row.excluded) / double(row.samples);
    auto ci = wilson(row.excluded, row.samples);
    row.ci_low = ci.low;
    row.ci_high = ci.high;
    out.rows.push_back(row);
    excluded_by_gamma.push_back(std::move(flags));
  }

  // Monotonicity on the shared sample set: exclusion sets nest in gamma.
  for (std::size_t a = 0; a < out.rows.size(); ++a)
    for (std::size_t b = 0; b < out.rows.size(); ++b) {
      if (out.rows[a].gamma >= out.rows[b].gamma) continue;
      for (int i = 0; i < cfg.measure.samples; ++i)
        if (excluded_by_gamma[a][i] && !excluded_by_gamma[b][i]) {
          out.monotone_in_gamma = false;
          break;
        }
    }

  // log-log regression of fraction against gamma
  std::vector<double> xs, ys;
  for (const auto& row : out.rows)
    if (row.fraction > 0.0) {
      xs.push_back(std::log(row.gamma));
      ys.push_back(std::log(row.fraction));
    }
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
    mx /= double(xs.size());
    my /= double(xs.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx > 0) out.loglog_slope = sxy / sxx;
  }
  return out;
}

LipschitzProbe lipschitz_probe(const ExperimentConfig& cfg, std::span<const double> h) {
  const int n = cfg.lattice.n, d = cfg.lattice.d;
  if (int(h.size()) != n + d) throw ConfigError("lipschitz_probe: h needs n + d entries");
  LipschitzProbe probe;
  double hn = 0.0;
  for (double c : h) hn += c * c;
  hn = std::sqrt(hn);
  if (hn == 0.0) throw ConfigError("lipschitz_probe: h must be nonzero");

  ExperimentConfig shifted = cfg;
  for (int c = 0; c < n; ++c) shifted.omega[c] += h[c];
  for (int c = 0; c < d; ++c) shifted.nu[c] += h[n + c];

  auto base = run_pipeline(cfg);
  if (!base.ok) {
    probe.skip_reason = "base point excluded: " + base.failure_detail;
    return probe;
  }
  auto moved = run_pipeline(shifted);
  if (!moved.ok) {
    probe.skip_reason = "shifted point excluded: " + moved.failure_detail;
    return probe;
  }
  probe.ok = true;
  for (int c = 0; c < d; ++c)
    probe.nu0_quotient =
        std::max(probe.nu0_quotient,
                 std::abs(moved.straightening.nu0[c] - base.straightening.nu0[c]) / hn);
  const ModeTable& sm = spatial_modes(cfg.lattice);
  const double two_m = 2.0 * (2.0 * cfg.tau + 2.0);
  for (int i = 0; i < sm.count(); ++i) {
    double dz = std::abs(moved.kam.spectrum.z[i] - base.kam.spectrum.z[i]);
    double drho = std::abs(moved.kam.spectrum.rho[i] - base.kam.spectrum.rho[i]);
    probe.z_sup_quotient = std::max(probe.z_sup_quotient, dz / hn);
    probe.rho_weighted_quotient = std::max(
        probe.rho_weighted_quotient, std::pow(sm.bracket_of(i), two_m) * drho / hn);
  }
  return probe;
}

}  // namespace qpr

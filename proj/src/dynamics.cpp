#include "qpr/dynamics.hpp"

#include <cmath>

#include "qpr/errors.hpp"

namespace qpr {

double sobolev_norm(const Vec& u, const ModeTable& space, double sigma) {
  double acc = 0.0;
  for (int i = 0; i < u.size(); ++i)
    acc += std::pow(space.bracket_of(i), 2.0 * sigma) * std::norm(u[i]);
  return std::sqrt(acc);
}

Vec u0_from_spec(const EvolutionSpec& ev, const LatticeSpec& lattice) {
  const ModeTable& sm = spatial_modes(lattice);
  Vec u = Vec::Zero(sm.count());
  for (const auto& e : ev.u0) {
    int idx = sm.index_of(e.row_mode);
    if (idx < 0) throw ConfigError("evolution.u0: mode outside the lattice box");
    u[idx] += cplx(e.re, e.im);
  }
  return u;
}

namespace {

// Applies eps (V.grad + W) at angle phi. Spatial products run on the doubled
// grid; the V slices are re-evaluated at each call since phi moves with t.
struct Perturbator {
  const LatticeSpec spec;
  const std::vector<PhaseFunction>& V;
  const QPOperator& W;
  double eps;
  std::vector<int> space_dims;
  long stotal = 1;
  bool v_is_zero = true;
  bool w_is_zero = true;

  Perturbator(const LatticeSpec& s, const std::vector<PhaseFunction>& v,
              const QPOperator& w, double eps_)
      : spec(s), V(v), W(w), eps(eps_) {
    for (int c = 0; c < spec.d; ++c) space_dims.push_back(2 * (2 * spec.J + 1));
    for (int c = 0; c < spec.d; ++c) stotal *= space_dims[c];
    for (const auto& f : V)
      if (f.max_abs_coef() != 0.0) v_is_zero = false;
    for (int l = 0; l < W.angle_count(); ++l)
      if (W.has_block(l)) w_is_zero = false;
  }

  Vec apply(std::span<const double> phi, const Vec& u) const {
    const ModeTable& sm = spatial_modes(spec);
    Vec out = Vec::Zero(u.size());
    if (eps == 0.0) return out;
    if (!v_is_zero) {
      GridFunction acc(space_dims);
      for (int c = 0; c < spec.d; ++c) {
        // du/dx_c on the doubled grid
        GridFunction du(space_dims);
        std::vector<cplx> coeffs(sm.count());
        for (int i = 0; i < sm.count(); ++i)
          coeffs[i] = u[i] * cplx(0.0, double(sm.mode(i)[c]));
        du = box_to_grid_coeffs(coeffs, sm, space_dims);
        dft_inverse(du);
        auto vslice = V[c].slice_at_angle(phi);
        GridFunction vg = box_to_grid_coeffs(vslice, sm, space_dims);
        dft_inverse(vg);
        for (long g = 0; g < stotal; ++g) acc.values[g] += vg.values[g] * du.values[g];
      }
      dft_forward(acc);
      auto prod = coeffs_to_box(acc, sm);
      for (int i = 0; i < sm.count(); ++i) out[i] += prod[i];
    }
    if (!w_is_zero) out += apply_at_angle(W, phi, u);
    return eps * out;
  }
};

}  // namespace

NormSeries evolve_direct(const EvolutionSpec& ev, const std::vector<PhaseFunction>& V,
                         const QPOperator& W, std::span<const double> omega,
                         std::span<const double> nu, double eps, double* max_freq) {
  const LatticeSpec spec = W.spec();
  const ModeTable& sm = spatial_modes(spec);
  const int n = spec.n;

  // Free part phases i nu.j, handled exactly by the splitting integrator.
  Vec h0(sm.count());
  double fmax = 0.0;
  for (int i = 0; i < sm.count(); ++i) {
    auto jm = sm.mode(i);
    double nj = 0.0;
    for (int c = 0; c < spec.d; ++c) nj += nu[c] * jm[c];
    h0[i] = cplx(0.0, nj);
    fmax = std::max(fmax, std::abs(nj));
  }
  if (max_freq) *max_freq = fmax;

  Perturbator B(spec, V, W, eps);
  Vec u = u0_from_spec(ev, spec);
  const double u0_scale = std::max(u.norm(), 1e-300);

  NormSeries out;
  const double dt = ev.T >= 0 ? ev.dt : -ev.dt;
  const long steps = std::lround(std::abs(ev.T) / ev.dt);
  std::vector<double> phi(n);
  auto angle_at = [&](double t) {
    for (int c = 0; c < n; ++c) phi[c] = std::remainder(omega[c] * t, 2.0 * M_PI);
    return std::span<const double>(phi);
  };
  auto record = [&](double t) {
    out.times.push_back(t);
    out.h_sigma.push_back(sobolev_norm(u, sm, ev.sigma));
    out.l2.push_back(u.norm());
    out.snapshots.push_back(u);
  };
  record(0.0);

  const bool rk4 = ev.integrator == "rk4";
  for (long s = 0; s < steps; ++s) {
    const double t = s * dt;
    if (rk4) {
      auto f = [&](double tt, const Vec& y) {
        Vec r = B.apply(angle_at(tt), y);
        for (int i = 0; i < y.size(); ++i) r[i] += h0[i] * y[i];
        return r;
      };
      Vec k1 = f(t, u);
      Vec k2 = f(t + dt / 2, u + (dt / 2) * k1);
      Vec k3 = f(t + dt / 2, u + (dt / 2) * k2);
      Vec k4 = f(t + dt, u + dt * k3);
      u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      // Strang: exact half phase, midpoint step for the perturbation, half phase.
      for (int i = 0; i < u.size(); ++i) u[i] *= std::exp(h0[i] * (dt / 2));
      auto mid = angle_at(t + dt / 2);
      Vec k1 = B.apply(mid, u);
      Vec k2 = B.apply(mid, u + (dt / 2) * k1);
      u += dt * k2;
      for (int i = 0; i < u.size(); ++i) u[i] *= std::exp(h0[i] * (dt / 2));
    }
    if ((s + 1) % ev.record_every == 0 || s + 1 == steps) {
      if (u.norm() > 1e12 * u0_scale) {
        out.truncated = true;
        record((s + 1) * dt);
        break;
      }
      record((s + 1) * dt);
    }
  }
  return out;
}

NormSeries evolve_reduced(const Vec& lambda, const QPOperator& U,
                          const EvolutionSpec& ev, std::span<const double> omega) {
  const LatticeSpec spec = U.spec();
  const ModeTable& sm = spatial_modes(spec);
  const int n = spec.n;
  Vec u0 = u0_from_spec(ev, spec);

  std::vector<double> zero(n, 0.0);
  Mat U0 = at_angle(U, zero);
  Eigen::PartialPivLU<Mat> lu(U0);
  Vec v0 = lu.solve(u0);

  NormSeries out;
  const double dt = ev.T >= 0 ? ev.dt : -ev.dt;
  const long steps = std::lround(std::abs(ev.T) / ev.dt);
  std::vector<double> phi(n);
  auto record = [&](double t) {
    for (int c = 0; c < n; ++c) phi[c] = std::remainder(omega[c] * t, 2.0 * M_PI);
    Vec v(v0.size());
    for (int i = 0; i < v.size(); ++i) v[i] = v0[i] * std::exp(lambda[i] * t);
    Vec u = apply_at_angle(U, phi, v);
    out.times.push_back(t);
    out.h_sigma.push_back(sobolev_norm(u, sm, ev.sigma));
    out.l2.push_back(u.norm());
    out.snapshots.push_back(std::move(u));
  };
  record(0.0);
  for (long s = 0; s < steps; ++s)
    if ((s + 1) % ev.record_every == 0 || s + 1 == steps) record((s + 1) * dt);
  return out;
}

GrowthClass growth_classifier(std::span<const double> times,
                              std::span<const double> norms, double tol_rate) {
  GrowthClass g;
  if (times.size() < 100 || times.size() != norms.size()) return g;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (norms[i] <= 0.0) return g;
    xs.push_back(times[i]);
    ys.push_back(std::log(norms[i]));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) { mx += xs[i]; my += ys[i]; }
  mx /= double(xs.size());
  my /= double(xs.size());
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0) return g;
  g.rate = sxy / sxx;
  g.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  if (std::abs(g.rate) < tol_rate)
    g.kind = GrowthClass::bounded;
  else if (g.rate >= tol_rate && g.r2 >= 0.99)
    g.kind = GrowthClass::exponential;
  else
    g.kind = GrowthClass::undecided;
  return g;
}

}  // namespace qpr

#include "qpr/phase_function.hpp"

#include <cmath>

namespace qpr {

namespace {

// Joint index walk: callback(flat, angle_idx, space_idx).
template <typename F>
void for_each_pair(const LatticeSpec& spec, F&& f) {
  const long ns = spec.spatial_count();
  const long na = spec.angle_count();
  for (long ia = 0; ia < na; ++ia)
    for (long is = 0; is < ns; ++is) f(ia * ns + is, int(ia), int(is));
}

}  // namespace

cplx PhaseFunction::mean() const {
  const auto& am = angle_modes(spec);
  const auto& sm = spatial_modes(spec);
  std::vector<int> za(spec.n, 0), zs(spec.d, 0);
  return at(am.index_of(za), sm.index_of(zs));
}

PhaseFunction PhaseFunction::dx(int direction) const {
  const auto& sm = spatial_modes(spec);
  PhaseFunction out(spec);
  for_each_pair(spec, [&](long flat, int, int is) {
    out.coef[flat] = coef[flat] * cplx(0.0, double(sm.mode(is)[direction]));
  });
  return out;
}

PhaseFunction PhaseFunction::omega_dphi(std::span<const double> omega) const {
  const auto& am = angle_modes(spec);
  PhaseFunction out(spec);
  for_each_pair(spec, [&](long flat, int ia, int) {
    auto lm = am.mode(ia);
    double wl = 0.0;
    for (int c = 0; c < spec.n; ++c) wl += omega[c] * lm[c];
    out.coef[flat] = coef[flat] * cplx(0.0, wl);
  });
  return out;
}

cplx PhaseFunction::eval(std::span<const double> phi, std::span<const double> x) const {
  const auto& am = angle_modes(spec);
  const auto& sm = spatial_modes(spec);
  cplx acc(0.0);
  for_each_pair(spec, [&](long flat, int ia, int is) {
    if (coef[flat] == cplx(0.0)) return;
    auto lm = am.mode(ia);
    auto jm = sm.mode(is);
    double phase = 0.0;
    for (int c = 0; c < spec.n; ++c) phase += lm[c] * phi[c];
    for (int c = 0; c < spec.d; ++c) phase += jm[c] * x[c];
    acc += coef[flat] * std::polar(1.0, phase);
  });
  return acc;
}

std::vector<cplx> PhaseFunction::slice_at_angle(std::span<const double> phi) const {
  const auto& am = angle_modes(spec);
  const long ns = spec.spatial_count();
  std::vector<cplx> out(ns, cplx(0.0));
  for (int ia = 0; ia < am.count(); ++ia) {
    auto lm = am.mode(ia);
    double phase = 0.0;
    for (int c = 0; c < spec.n; ++c) phase += lm[c] * phi[c];
    cplx rot = std::polar(1.0, phase);
    const cplx* row = coef.data() + std::size_t(ia) * ns;
    bool any = false;
    for (long is = 0; is < ns; ++is)
      if (row[is] != cplx(0.0)) { any = true; break; }
    if (!any) continue;
    for (long is = 0; is < ns; ++is) out[is] += rot * row[is];
  }
  return out;
}

double PhaseFunction::max_abs_coef() const {
  double m = 0.0;
  for (const cplx& c : coef) m = std::max(m, std::abs(c));
  return m;
}

bool PhaseFunction::is_real(double tol) const {
  const auto& am = angle_modes(spec);
  const auto& sm = spatial_modes(spec);
  double cap = tol * std::max(max_abs_coef(), 1e-300);
  const long ns = spec.spatial_count();
  for (int ia = 0; ia < am.count(); ++ia)
    for (int is = 0; is < ns; ++is) {
      cplx v = at(ia, is);
      cplx w = at(am.negate(ia), sm.negate(is));
      if (std::abs(v - std::conj(w)) > cap) return false;
    }
  return true;
}

bool PhaseFunction::has_parity(int sign, double tol) const {
  const auto& am = angle_modes(spec);
  const auto& sm = spatial_modes(spec);
  double cap = tol * std::max(max_abs_coef(), 1e-300);
  const long ns = spec.spatial_count();
  for (int ia = 0; ia < am.count(); ++ia)
    for (int is = 0; is < ns; ++is) {
      cplx v = at(ia, is);
      cplx w = at(am.negate(ia), sm.negate(is));
      if (std::abs(v - double(sign) * w) > cap) return false;
    }
  return true;
}

std::vector<int> dealiased_dims(const LatticeSpec& spec) {
  std::vector<int> dims;
  for (int c = 0; c < spec.n; ++c) dims.push_back(2 * (2 * spec.L + 1));
  for (int c = 0; c < spec.d; ++c) dims.push_back(2 * (2 * spec.J + 1));
  return dims;
}

GridFunction to_grid(const PhaseFunction& f, const std::vector<int>& dims) {
  const auto& am = angle_modes(f.spec);
  const auto& sm = spatial_modes(f.spec);
  if (int(dims.size()) != f.spec.n + f.spec.d)
    throw std::invalid_argument("to_grid: dimension mismatch");
  GridFunction g(dims);
  const long ns = f.spec.spatial_count();
  for (int ia = 0; ia < am.count(); ++ia) {
    auto lm = am.mode(ia);
    for (int is = 0; is < int(ns); ++is) {
      cplx v = f.at(ia, is);
      if (v == cplx(0.0)) continue;
      auto jm = sm.mode(is);
      long pos = 0;
      for (int c = 0; c < f.spec.n; ++c) pos = pos * dims[c] + bin_of_mode(lm[c], dims[c]);
      for (int c = 0; c < f.spec.d; ++c) {
        int axis = f.spec.n + c;
        pos = pos * dims[axis] + bin_of_mode(jm[c], dims[axis]);
      }
      g.values[pos] = v;
    }
  }
  dft_inverse(g);
  return g;
}

PhaseFunction from_grid(GridFunction grid, const LatticeSpec& spec) {
  dft_forward(grid);
  const auto& am = angle_modes(spec);
  const auto& sm = spatial_modes(spec);
  PhaseFunction f(spec);
  for (int ia = 0; ia < am.count(); ++ia) {
    auto lm = am.mode(ia);
    for (int is = 0; is < sm.count(); ++is) {
      auto jm = sm.mode(is);
      long pos = 0;
      for (int c = 0; c < spec.n; ++c) pos = pos * grid.dims[c] + bin_of_mode(lm[c], grid.dims[c]);
      for (int c = 0; c < spec.d; ++c) {
        int axis = spec.n + c;
        pos = pos * grid.dims[axis] + bin_of_mode(jm[c], grid.dims[axis]);
      }
      f.at(ia, is) = grid.values[pos];
    }
  }
  return f;
}

PhaseFunction multiply(const PhaseFunction& a, const PhaseFunction& b) {
  if (!(a.spec == b.spec)) throw std::invalid_argument("multiply: spec mismatch");
  auto dims = dealiased_dims(a.spec);
  GridFunction ga = to_grid(a, dims);
  GridFunction gb = to_grid(b, dims);
  for (long i = 0; i < ga.total(); ++i) ga.values[i] *= gb.values[i];
  return from_grid(std::move(ga), a.spec);
}

double sup_norm_on_grid(const PhaseFunction& f) {
  GridFunction g = to_grid(f, dealiased_dims(f.spec));
  double m = 0.0;
  for (const cplx& v : g.values) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace qpr

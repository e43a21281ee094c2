#include "doctest.h"
#include "qpr/dynamics.hpp"
#include "qpr/pipeline.hpp"

using namespace qpr;

namespace {

ExperimentConfig tiny_config() {
  json j = {
      {"lattice", {{"d", 1}, {"n", 1}, {"J", 8}, {"L", 4}}},
      {"parameters",
       {{"omega", {1.6180339887498949}},
        {"nu", {1.4142135623730951}},
        {"epsilon", 1e-3},
        {"gamma", 0.05},
        {"tau", 3.0},
        {"smoothing_gain", 0.5}}},
      {"potential",
       {{"terms",
         {{{"component", 0},
           {"angle_mode", {1}},
           {"space_mode", {1}},
           {"amplitude", 1.0},
           {"kind", "cos"}}}}}},
      {"perturbation",
       {{"potential",
         {{"mean", 1.0},
          {"terms",
           {{{"angle_mode", {1}},
             {"space_mode", {1}},
             {"amplitude", 0.5},
             {"kind", "cos"}}}}}}}},
      {"tolerances", {{"m_cap", 3}, {"dioph_Lmax", 8}, {"dioph_Jmax", 12}}},
      {"evolution",
       {{"T", 20.0}, {"dt", 0.01}, {"sigma", 2.0}, {"record_every", 10},
        {"u0", {{{"mode", {1}}, {"re", 1.0}, {"im", 0.0}}, {{"mode", {2}}, {"re", 0.5}, {"im", 0.0}}}}}},
  };
  return ExperimentConfig::from_json(j);
}

}  // namespace

TEST_CASE("eps = 0 evolution is the exact phase rotation") {
  auto cfg = tiny_config();
  cfg.epsilon = 0.0;
  auto V = build_potential(cfg);
  auto W = build_perturbation(cfg);
  auto series = evolve_direct(cfg.evolution, V, W, cfg.omega, cfg.nu, 0.0);
  REQUIRE(series.h_sigma.size() > 10);
  for (double h : series.h_sigma)
    CHECK(std::abs(h - series.h_sigma[0]) <= 1e-10 * series.h_sigma[0]);

  // coefficients carry exactly the phases e^{i nu j t}
  const auto& sm = spatial_modes(cfg.lattice);
  Vec u0 = u0_from_spec(cfg.evolution, cfg.lattice);
  const Vec& last = series.snapshots.back();
  double t = series.times.back();
  for (int i = 0; i < sm.count(); ++i) {
    cplx expect = u0[i] * std::exp(cplx(0.0, cfg.nu[0] * sm.mode(i)[0] * t));
    CHECK(std::abs(last[i] - expect) <= 1e-10);
  }
}

TEST_CASE("rk4 step-halving shows fourth order") {
  auto cfg = tiny_config();
  cfg.epsilon = 0.05;  // visible nonlinearity against dt
  cfg.evolution.integrator = "rk4";
  cfg.evolution.T = 2.0;
  cfg.evolution.record_every = 1 << 20;  // record only the endpoint
  auto V = build_potential(cfg);
  auto W = build_perturbation(cfg);

  std::vector<double> dts{0.04, 0.02, 0.01};
  std::vector<Vec> finals;
  for (double dt : dts) {
    auto ev = cfg.evolution;
    ev.dt = dt;
    auto s = evolve_direct(ev, V, W, cfg.omega, cfg.nu, cfg.epsilon);
    finals.push_back(s.snapshots.back());
  }
  double e1 = (finals[0] - finals[2]).norm();
  double e2 = (finals[1] - finals[2]).norm();
  // Richardson: with a reference at dt/4, e1/e2 tracks (2^p - ...) ~ 2^p
  double order = std::log2(e1 / e2);
  CHECK(order > 3.4);
  CHECK(order < 4.8);
}

TEST_CASE("growth classifier") {
  std::vector<double> t, flat, grow;
  for (int i = 0; i < 200; ++i) {
    t.push_back(0.5 * i);
    flat.push_back(2.0);
    grow.push_back(2.0 * std::exp(0.01 * 0.5 * i));
  }
  auto b = growth_classifier(t, flat);
  CHECK(b.kind == GrowthClass::bounded);
  auto g = growth_classifier(t, grow);
  CHECK(g.kind == GrowthClass::exponential);
  CHECK(std::abs(g.rate - 0.01) <= 0.05 * 0.01);
}

TEST_CASE("anti-self-adjoint generator conserves the l2 norm") {
  // V independent of x (divergence free) and W = i m(xi) with m real: the
  // whole generator is anti-self-adjoint at every instant.
  json j = {
      {"lattice", {{"d", 1}, {"n", 1}, {"J", 8}, {"L", 4}}},
      {"parameters",
       {{"omega", {1.6180339887498949}}, {"nu", {1.4142135623730951}},
        {"epsilon", 1e-2}, {"gamma", 0.05}, {"tau", 3.0}, {"smoothing_gain", 0.5}}},
      {"potential",
       {{"terms",
         {{{"component", 0},
           {"angle_mode", {1}},
           {"space_mode", {0}},
           {"amplitude", 1.0},
           {"kind", "cos"}}}}}},
      {"perturbation", {{"potential", {{"mean", 1.0}}}}},
      {"evolution", {{"T", 100.0}, {"dt", 0.005}, {"record_every", 50}}},
  };
  auto cfg = ExperimentConfig::from_json(j);
  auto V = build_potential(cfg);
  auto W = build_perturbation(cfg);
  // multiplier-only W with real odd m: W* = -W
  auto wf = check_structure(W);
  CHECK(wf.symmetric_hyperbolic_defect <= 1e-12);

  auto series = evolve_direct(cfg.evolution, V, W, cfg.omega, cfg.nu, cfg.epsilon);
  for (double l2 : series.l2) CHECK(std::abs(l2 - series.l2[0]) <= 1e-8 * series.l2[0]);
}

TEST_CASE("direct and reduced trajectories agree") {
  auto cfg = tiny_config();
  auto res = run_pipeline(cfg);
  REQUIRE(res.ok);

  auto V = build_potential(cfg);
  auto W = build_perturbation(cfg);
  auto direct = evolve_direct(cfg.evolution, V, W, cfg.omega, cfg.nu, cfg.epsilon);
  auto reduced =
      evolve_reduced(res.kam.spectrum.lambda(), res.U_chain, cfg.evolution, cfg.omega);
  REQUIRE(direct.times.size() == reduced.times.size());

  double scale = sobolev_norm(direct.snapshots[0], spatial_modes(cfg.lattice), 2.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < direct.snapshots.size(); ++i)
    worst = std::max(worst,
                     sobolev_norm(direct.snapshots[i] - reduced.snapshots[i],
                                  spatial_modes(cfg.lattice), 2.0));
  CHECK(worst <= 1e-4 * scale);

  // at eps = 0 both paths coincide to integrator accuracy
  auto cfg0 = cfg;
  cfg0.epsilon = 0.0;
  auto res0 = run_pipeline(cfg0);
  REQUIRE(res0.ok);
  auto d0 = evolve_direct(cfg0.evolution, V, W, cfg0.omega, cfg0.nu, 0.0);
  auto r0 =
      evolve_reduced(res0.kam.spectrum.lambda(), res0.U_chain, cfg0.evolution, cfg0.omega);
  double w0 = 0.0;
  for (std::size_t i = 0; i < d0.snapshots.size(); ++i)
    w0 = std::max(w0, (d0.snapshots[i] - r0.snapshots[i]).norm());
  CHECK(w0 <= 1e-10);
}

TEST_CASE("planted growth matches the top real part") {
  json j = {
      {"lattice", {{"d", 1}, {"n", 1}, {"J", 8}, {"L", 4}}},
      {"parameters",
       {{"omega", {1.6180339887498949}}, {"nu", {1.4142135623730951}},
        {"epsilon", 1e-2}, {"gamma", 0.05}, {"tau", 3.0}, {"smoothing_gain", 0.5}}},
      {"potential",
       {{"terms",
         {{{"component", 0}, {"angle_mode", {1}}, {"space_mode", {1}},
           {"amplitude", 1.0}, {"kind", "cos"}}}}}},
      {"perturbation",
       {{"structure", "planted_growth"},
        {"growth_amplitude", 0.5},
        {"potential",
         {{"mean", 1.0},
          {"terms",
           {{{"angle_mode", {1}}, {"space_mode", {1}}, {"amplitude", 0.5},
             {"kind", "cos"}}}}}}}},
      {"tolerances", {{"m_cap", 3}}},
      {"evolution",
       {{"T", 400.0}, {"dt", 0.02}, {"record_every", 25},
        {"u0", {{{"mode", {0}}, {"re", 1.0}, {"im", 0.0}}}}}},
  };
  auto cfg = ExperimentConfig::from_json(j);
  auto res = run_pipeline(cfg);
  REQUIRE(res.ok);
  double top_re = 0.0;
  Vec lam = res.kam.spectrum.lambda();
  int arg = 0;
  for (int i = 0; i < lam.size(); ++i)
    if (lam[i].real() > top_re) { top_re = lam[i].real(); arg = i; }
  REQUIRE(top_re > 1e-4);

  // start on the mode that grows fastest, mapped through U(0)
  auto ev = cfg.evolution;
  std::vector<double> zero{0.0};
  Mat U0 = at_angle(res.U_chain, zero);
  Vec v = Vec::Zero(lam.size());
  v[arg] = cplx(1.0, 0.0);
  Vec u0 = U0 * v;
  ev.u0.clear();
  const auto& sm = spatial_modes(cfg.lattice);
  for (int i = 0; i < u0.size(); ++i) {
    if (std::abs(u0[i]) < 1e-14) continue;
    ExplicitBlockEntry e;
    auto m = sm.mode(i);
    e.row_mode.assign(m.begin(), m.end());
    e.re = u0[i].real();
    e.im = u0[i].imag();
    ev.u0.push_back(e);
  }
  auto V = build_potential(cfg);
  auto W = build_perturbation(cfg);
  auto series = evolve_direct(ev, V, W, cfg.omega, cfg.nu, cfg.epsilon);
  auto growth = growth_classifier(series.times, series.h_sigma);
  CHECK(growth.kind == GrowthClass::exponential);
  CHECK(std::abs(growth.rate - top_re) <= 0.05 * top_re);
}

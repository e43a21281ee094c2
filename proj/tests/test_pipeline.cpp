#include "doctest.h"
#include "qpr/pipeline.hpp"

using namespace qpr;

namespace {

ExperimentConfig desk_config(double eps, const char* structure = "reversible") {
  json j = {
      {"lattice", {{"d", 1}, {"n", 1}, {"J", 8}, {"L", 4}}},
      {"parameters",
       {{"omega", {1.6180339887498949}},
        {"nu", {1.4142135623730951}},
        {"epsilon", eps},
        {"gamma", 0.05},
        {"tau", 3.0},
        {"smoothing_gain", 0.5}}},
      {"potential",
       {{"mean", {0.3}},
        {"terms",
         {{{"component", 0},
           {"angle_mode", {1}},
           {"space_mode", {1}},
           {"amplitude", 1.0},
           {"kind", "cos"}}}}}},
      {"perturbation",
       {{"structure", structure},
        {"potential",
         {{"mean", 1.0},
          {"terms",
           {{{"angle_mode", {1}},
             {"space_mode", {1}},
             {"amplitude", 0.5},
             {"kind", "cos"}}}}}},
        {"growth_amplitude", structure == std::string("planted_growth") ? 0.5 : 0.0}}},
      {"tolerances", {{"m_cap", 3}, {"dioph_Lmax", 8}, {"dioph_Jmax", 12}}},
  };
  return ExperimentConfig::from_json(j);
}

}  // namespace

TEST_CASE("derive_constants matches the closed formulas") {
  auto c1 = derive_constants(1.0, 0.1, 1, 1, 1000);
  CHECK(c1.alpha == 19.0);
  CHECK(c1.beta == 20.0);
  CHECK(c1.m == 4.0);       // 2 tau + 2
  CHECK(c1.M_paper == 49);  // 2m + 2 beta + [d/2] + 1 = 8 + 40 + 0 + 1
  CHECK(c1.s0 == 1);

  auto c3 = derive_constants(3.0, 0.1, 1, 1, 1000);
  CHECK(c3.m == 8.0);
  CHECK(c3.alpha == 43.0);
  CHECK(c3.beta == 44.0);
  CHECK(c3.N0 == doctest::Approx(10.0));

  auto capped = derive_constants(3.0, 0.1, 1, 1, 4);
  CHECK(capped.M_effective == 4);
  CHECK(capped.M_paper == 105);  // 16 + 88 + 0 + 1
}

TEST_CASE("pipeline at eps = 0 is trivial") {
  auto cfg = desk_config(0.0);
  auto res = run_pipeline(cfg);
  REQUIRE(res.ok);
  CHECK(res.straightening.residual == 0.0);
  CHECK(res.kam.steps == 0);
  const auto& sm = spatial_modes(cfg.lattice);
  Vec lam = res.kam.spectrum.lambda();
  for (int i = 0; i < sm.count(); ++i) {
    cplx expect(0.0, cfg.nu[0] * sm.mode(i)[0]);
    CHECK(std::abs(lam[i] - expect) == 0.0);
  }
  CHECK(res.report["outcome"] == "ok");
}

TEST_CASE("reversible pipeline: imaginary spectrum and structure flags") {
  auto cfg = desk_config(1e-3);
  auto res = run_pipeline(cfg);
  REQUIRE(res.ok);
  CHECK(res.kam.spectrum.max_re() <= 1e-8);
  CHECK(res.w0_flags.real);
  CHECK(res.w0_flags.reversible);
  for (const auto& dg : res.smoothing.diags) {
    CHECK(dg.w_flags.real);
    CHECK(dg.w_flags.reversible);
    CHECK(dg.hom_residual_rel <= 1e-12);
  }
  for (const auto& row : res.kam.trace) CHECK(row.hom_residual <= 1e-12);
  CHECK(res.cantor.ok);
  CHECK(res.cantor.inclusion_ok);

  // eigenvalue structure: rho decays visibly faster than z
  const auto& sm = spatial_modes(cfg.lattice);
  double z_hi = 0.0, rho_hi = 0.0;
  for (int i = 0; i < sm.count(); ++i)
    if (sm.bracket_of(i) > 6.0) {
      z_hi = std::max(z_hi, std::abs(res.kam.spectrum.z[i]));
      rho_hi = std::max(rho_hi, std::abs(res.kam.spectrum.rho[i]));
    }
  CHECK(rho_hi < 0.1 * z_hi);
}

TEST_CASE("pipeline reports are byte-identical across runs") {
  auto cfg = desk_config(1e-3);
  auto r1 = run_pipeline(cfg);
  auto r2 = run_pipeline(cfg);
  CHECK(r1.report.dump() == r2.report.dump());
}

TEST_CASE("resonant parameter point exits with the offending tuple") {
  auto cfg = desk_config(1e-3);
  cfg.omega[0] = 1.5;
  cfg.nu[0] = 1.5;  // exact resonance in the straightening conditions
  auto res = run_pipeline(cfg);
  CHECK_FALSE(res.ok);
  CHECK(res.fail_kind == FailKind::diophantine);
  CHECK(res.report["outcome"] == "excluded");
  CHECK(res.report["stages"].contains("failure"));
  CHECK(res.report["stages"]["failure"].contains("offender"));
}

TEST_CASE("run ids are deterministic and stage-tagged") {
  auto cfg = desk_config(1e-3);
  CHECK(run_id(cfg, "full") == run_id(cfg, "full"));
  CHECK(run_id(cfg, "full") != run_id(cfg, "measure"));
  auto cfg2 = cfg;
  cfg2.epsilon = 2e-3;
  CHECK(run_id(cfg, "full") != run_id(cfg2, "full"));
}

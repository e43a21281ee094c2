#include "qpr/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace qpr {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

json flags_to_json(const StructureFlags& f) {
  return json{{"real", f.real},
              {"reversible", f.reversible},
              {"reversibility_preserving", f.reversibility_preserving},
              {"symmetric_hyperbolic_defect", f.symmetric_hyperbolic_defect}};
}

json tuple_to_json(const ResonantTuple& t) {
  return json{{"l", t.l},
              {"j", t.j},
              {"jp", t.jp},
              {"divisor_abs", t.divisor_abs},
              {"threshold", t.threshold}};
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

DerivedConstants derive_constants(double tau, double gamma, int d, int n, int m_cap) {
  if (!(tau > 0.0)) throw ConfigError("derive_constants: tau must be positive");
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ConfigError("derive_constants: gamma must lie in (0,1)");
  DerivedConstants c;
  c.alpha = 12.0 * tau + 7.0;
  c.beta = c.alpha + 1.0;
  c.m = 2.0 * tau + 2.0;
  c.N0 = 1.0 / gamma;
  c.s0 = n / 2 + 1;
  c.M_paper = int(std::lround(2.0 * c.m + 2.0 * c.beta)) + d / 2 + 1;
  c.M_effective = std::min(c.M_paper, m_cap);
  return c;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  PipelineResult res;
  res.cfg = cfg;
  res.consts = derive_constants(cfg.tau, cfg.gamma, cfg.lattice.d, cfg.lattice.n,
                                cfg.tolerances.m_cap);
  const LatticeSpec spec = cfg.lattice;
  json stages_report = json::object();
  json timings = json::object();
  const double t_start = now_seconds();
  std::string stage = "setup";

  try {
    std::vector<PhaseFunction> V = build_potential(cfg);
    QPOperator W = build_perturbation(cfg);
    StructureFlags w_flags = check_structure(W);
    bool v_even = true;
    for (const auto& vc : V) v_even = v_even && vc.has_parity(+1, 1e-12);
    stages_report["input"] = {
        {"V_even", v_even},
        {"W_flags", flags_to_json(w_flags)},
        {"W_norm", m_norm(W, NormProfile{})},
    };

    // Straightening.
    stage = "straighten";
    double t0 = now_seconds();
    if (cfg.stages.straighten && cfg.epsilon > 0.0) {
      StraighteningConfig scfg;
      scfg.gamma = cfg.gamma;
      scfg.tau = cfg.tau;
      scfg.tol = cfg.tolerances.straighten_tol;
      scfg.max_iter = cfg.tolerances.straighten_max_iter;
      scfg.eps_over_gamma_cap = cfg.tolerances.eps_over_gamma_cap;
      scfg.dioph_Lmax = cfg.tolerances.dioph_Lmax;
      scfg.dioph_Jmax = cfg.tolerances.dioph_Jmax;
      res.straightening = solve_straightening(V, cfg.omega, cfg.nu, cfg.epsilon, scfg);
      if (!res.straightening.converged)
        throw NumericalError("straightening residual " +
                             std::to_string(res.straightening.residual) +
                             " above tolerance after max_iter");
      res.A_op = composition_operator(res.straightening.diffeo, false);
      res.A_inv_op = composition_operator(res.straightening.diffeo, true);
      res.W0 = compose(res.A_inv_op, compose(W, res.A_op, &res.w0_dropped),
                       &res.w0_dropped);
    } else {
      res.straightening.nu0 = cfg.nu;
      res.straightening.converged = true;
      res.straightening.diffeo.spec = spec;
      res.straightening.diffeo.alpha.assign(spec.d, PhaseFunction(spec));
      res.straightening.diffeo.alpha_tilde.assign(spec.d, PhaseFunction(spec));
      auto rep = diophantine_check(cfg.omega, cfg.nu, cfg.gamma, cfg.tau,
                                   std::max(cfg.tolerances.dioph_Lmax, spec.L),
                                   std::max(cfg.tolerances.dioph_Jmax, spec.J));
      res.straightening.diophantine_ok = rep.ok;
      res.straightening.dioph_worst_margin = rep.worst_margin;
      if (!rep.ok) {
        ResonantTuple t;
        t.l = rep.l;
        t.jp = rep.j;
        t.divisor_abs = rep.divisor_abs;
        throw DiophantineExit(std::move(t));
      }
      res.A_op = qp_identity(spec);
      res.A_inv_op = qp_identity(spec);
      res.W0 = W;
    }
    res.w0_flags = check_structure(res.W0, 1e-9);
    double id_defect = 0.0;
    {
      NormProfile flat;
      id_defect = m_norm(compose(res.A_op, res.A_inv_op) - qp_identity(spec), flat);
    }
    stages_report["straighten"] = {
        {"nu0", res.straightening.nu0},
        {"residual", res.straightening.residual},
        {"pushforward_residual", res.straightening.pushforward_residual},
        {"iterations", res.straightening.iterations},
        {"min_divisor", res.straightening.min_divisor},
        {"dioph_worst_margin", res.straightening.dioph_worst_margin},
        {"c_epsilon", res.straightening.c_epsilon},
        {"grad_sup", res.straightening.diffeo.grad_sup},
        {"A_inverse_defect", id_defect},
        {"W0_dropped_mass", res.w0_dropped},
        {"W0_flags", flags_to_json(res.w0_flags)},
    };
    timings["straighten"] = now_seconds() - t0;

    // Smoothing.
    stage = "smooth";
    t0 = now_seconds();
    QPOperator P_in = res.W0;
    P_in *= cplx(cfg.epsilon, 0.0);
    res.smoothing = make_smoothing_state(spec, cfg.omega, res.straightening.nu0,
                                         std::move(P_in));
    if (cfg.stages.smooth && cfg.epsilon > 0.0) {
      SmoothingConfig mcfg;
      mcfg.steps = res.consts.M_effective;
      mcfg.gamma = cfg.gamma;
      mcfg.tau = cfg.tau;
      mcfg.series_tol = cfg.tolerances.series_tol;
      res.smoothing = run_smoothing(std::move(res.smoothing), mcfg);
    }
    {
      json steps = json::array();
      for (const auto& dg : res.smoothing.diags)
        steps.push_back(json{{"step", dg.step},
                             {"w_norm_before", dg.w_norm_before},
                             {"w_norm_after", dg.w_norm_after},
                             {"z_increment", dg.z_increment},
                             {"hom_residual_rel", dg.hom_residual_rel},
                             {"min_divisor", dg.min_divisor},
                             {"order_fit", dg.w_order.ok ? json(dg.w_order.order) : json()},
                             {"W_flags", flags_to_json(dg.w_flags)},
                             {"G_flags", flags_to_json(dg.g_flags)},
                             {"sh_defect", dg.sh_defect},
                             {"series_depth", dg.series_depth},
                             {"dropped_mass", dg.dropped_mass}});
      stages_report["smooth"] = {{"M_paper", res.consts.M_paper},
                                 {"M_effective", res.consts.M_effective},
                                 {"m_cap_applied", res.consts.M_effective < res.consts.M_paper},
                                 {"steps", steps}};
    }
    timings["smooth"] = now_seconds() - t0;

    // KAM reduction.
    stage = "reduce";
    t0 = now_seconds();
    KAMConstants kc = KAMConstants::derive(cfg.tau, cfg.gamma, cfg.tolerances.s_norm,
                                           2.0 * cfg.tau + 2.0);
    DiagonalSpectrum A0 =
        DiagonalSpectrum::make(spec, res.straightening.nu0, res.smoothing.z);
    if (cfg.stages.reduce) {
      res.kam = kam_reduce(A0, res.smoothing.W, kc, cfg.omega,
                           cfg.tolerances.kam_max_steps, cfg.tolerances.kam_stop_tol);
    } else {
      res.kam.spectrum = A0;
      res.kam.V = qp_identity(spec);
      res.kam.Vinv = qp_identity(spec);
      res.kam.converged = true;
      res.kam.stop_reason = "stage disabled";
    }
    {
      json trace = json::array();
      for (const auto& row : res.kam.trace)
        trace.push_back(json{{"k", row.k},
                             {"N_k", row.Nk},
                             {"p_mnorm", row.p_mnorm},
                             {"p_betanorm", row.p_betanorm},
                             {"x_mnorm", row.x_mnorm},
                             {"worst_margin", row.worst_margin},
                             {"max_dlambda", row.max_dlambda},
                             {"hom_residual", row.hom_residual},
                             {"dropped_mass", row.dropped_mass},
                             {"max_re_lambda", row.max_re_lambda}});
      stages_report["reduce"] = {{"steps", res.kam.steps},
                                 {"converged", res.kam.converged},
                                 {"stop_reason", res.kam.stop_reason},
                                 {"max_re_lambda", res.kam.spectrum.max_re()},
                                 {"trace", trace}};
    }
    timings["reduce"] = now_seconds() - t0;

    // Final Cantor conditions and the transformation chain.
    stage = "verify";
    t0 = now_seconds();
    if (cfg.stages.verify_cantor) {
      KAMConstants kc2 = kc;
      res.cantor = final_cantor_check(res.kam.spectrum, cfg.omega, cfg.gamma, cfg.tau,
                                      double(spec.L), &res.kam.trace, &kc2);
      if (!res.cantor.ok) {
        MelnikovExit ex(res.cantor.worst);
        res.failure_detail = ex.what();
        throw ex;
      }
    }
    res.U_chain = res.A_op;
    for (const auto& theta : res.smoothing.generators)
      res.U_chain = compose(res.U_chain,
                            qp_exp(theta, cfg.tolerances.series_tol, 80, &res.chain_dropped),
                            &res.chain_dropped);
    res.U_chain = compose(res.U_chain, res.kam.V, &res.chain_dropped);
    res.U_chain_inv = res.kam.Vinv;
    for (auto it = res.smoothing.generators.rbegin(); it != res.smoothing.generators.rend();
         ++it) {
      QPOperator neg = *it;
      neg *= cplx(-1.0, 0.0);
      res.U_chain_inv = compose(res.U_chain_inv,
                                qp_exp(neg, cfg.tolerances.series_tol, 80, &res.chain_dropped),
                                &res.chain_dropped);
    }
    res.U_chain_inv = compose(res.U_chain_inv, res.A_inv_op, &res.chain_dropped);
    {
      NormProfile flat;
      double u_defect =
          m_norm(compose(res.U_chain, res.U_chain_inv) - qp_identity(spec), flat);
      stages_report["verify"] = {
          {"cantor_ok", res.cantor.ok},
          {"cantor_worst_margin", res.cantor.worst_margin},
          {"inclusion_ok", res.cantor.inclusion_ok},
          {"inclusion_failures", res.cantor.inclusion_failures},
          {"u_chain_inverse_defect", u_defect},
          {"u_chain_dropped_mass", res.chain_dropped},
      };
    }
    timings["verify"] = now_seconds() - t0;
    res.ok = true;
  } catch (const QprError& e) {
    res.ok = false;
    res.fail_kind = e.kind();
    res.failed_stage = stage;
    res.failure_detail = e.what();
    json detail = json{{"kind", int(e.kind())}, {"message", e.what()}};
    if (auto* dx = dynamic_cast<const DiophantineExit*>(&e))
      detail["offender"] = tuple_to_json(dx->tuple);
    if (auto* mx = dynamic_cast<const MelnikovExit*>(&e))
      detail["offender"] = tuple_to_json(mx->tuple);
    stages_report["failure"] = detail;
  } catch (const std::exception& e) {
    res.ok = false;
    res.fail_kind = FailKind::numerical;
    res.failed_stage = stage;
    res.failure_detail = e.what();
    stages_report["failure"] = json{{"kind", int(FailKind::numerical)}, {"message", e.what()}};
  }
  timings["total"] = now_seconds() - t_start;

  // Assemble the deterministic report.
  json rep;
  rep["schema"] = "qpreduce-run-report-v1";
  rep["config"] = cfg.to_json();
  rep["constants"] = {{"alpha", res.consts.alpha}, {"beta", res.consts.beta},
                      {"m", res.consts.m},         {"N0", res.consts.N0},
                      {"s0", res.consts.s0},       {"M_paper", res.consts.M_paper},
                      {"M_effective", res.consts.M_effective}};
  rep["outcome"] = res.ok ? "ok"
                          : (res.fail_kind == FailKind::diophantine ||
                                     res.fail_kind == FailKind::melnikov
                                 ? "excluded"
                                 : "failed");
  rep["failed_stage"] = res.failed_stage;
  rep["stages"] = stages_report;
  if (res.ok) {
    const ModeTable& sm = spatial_modes(spec);
    Vec lam = res.kam.spectrum.lambda();
    json spectrum = json::array();
    for (int i = 0; i < sm.count(); ++i) {
      auto jm = sm.mode(i);
      spectrum.push_back(json{{"mode", std::vector<int>(jm.begin(), jm.end())},
                              {"re", lam[i].real()},
                              {"im", lam[i].imag()},
                              {"z_re", res.kam.spectrum.z[i].real()},
                              {"z_im", res.kam.spectrum.z[i].imag()},
                              {"rho_re", res.kam.spectrum.rho[i].real()},
                              {"rho_im", res.kam.spectrum.rho[i].imag()}});
    }
    rep["spectrum"] = std::move(spectrum);
  }
  res.report = std::move(rep);
  res.timings = std::move(timings);
  return res;
}

std::string run_id(const ExperimentConfig& cfg, const std::string& stage) {
  std::string blob = stage + "\n" + cfg.to_json().dump();
  // FNV-1a, stable across platforms.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : blob) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%016llx", stage.c_str(),
                static_cast<unsigned long long>(h));
  return buf;
}

void write_outputs(const PipelineResult& res, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream f(dir + "/report.json");
    f << res.report.dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/effective_config.json");
    f << res.cfg.to_json().dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/timings.json");
    f << res.timings.dump(2) << "\n";
  }
  {
    std::ofstream f(dir + "/kam_trace.csv");
    f << "k,N_k,p_mnorm,p_betanorm,x_mnorm,worst_margin,max_dlambda,hom_residual,"
         "dropped_mass,max_re_lambda\n";
    for (const auto& row : res.kam.trace)
      f << row.k << ',' << fmt(row.Nk) << ',' << fmt(row.p_mnorm) << ','
        << fmt(row.p_betanorm) << ',' << fmt(row.x_mnorm) << ',' << fmt(row.worst_margin)
        << ',' << fmt(row.max_dlambda) << ',' << fmt(row.hom_residual) << ','
        << fmt(row.dropped_mass) << ',' << fmt(row.max_re_lambda) << "\n";
  }
  if (res.ok && res.report.contains("spectrum")) {
    std::ofstream f(dir + "/spectrum.json");
    f << res.report.at("spectrum").dump(2) << "\n";
  }
}

void write_norm_series(const NormSeries& direct, const NormSeries* reduced,
                       const std::string& path) {
  std::ofstream f(path);
  f << "t,h_sigma,l2";
  if (reduced) f << ",h_sigma_reduced,l2_reduced,h_sigma_diff";
  f << "\n";
  const ModeTable* sm = nullptr;
  (void)sm;
  for (std::size_t i = 0; i < direct.times.size(); ++i) {
    f << fmt(direct.times[i]) << ',' << fmt(direct.h_sigma[i]) << ',' << fmt(direct.l2[i]);
    if (reduced && i < reduced->times.size()) {
      double diff = 0.0;
      if (i < reduced->snapshots.size() && i < direct.snapshots.size())
        diff = (direct.snapshots[i] - reduced->snapshots[i]).norm();
      f << ',' << fmt(reduced->h_sigma[i]) << ',' << fmt(reduced->l2[i]) << ',' << fmt(diff);
    }
    f << "\n";
  }
}

}  // namespace qpr

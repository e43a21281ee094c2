#include "qpr/config.hpp"

#include <fstream>
#include <set>

#include "qpr/errors.hpp"

namespace qpr {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError("field '" + key + "': " + e.what());
  }
}

std::vector<int> get_ivec(const json& j, const std::string& key, int expected_dim,
                          const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  auto v = j.at(key).get<std::vector<int>>();
  if (int(v.size()) != expected_dim)
    throw ConfigError(where + ": '" + key + "' must have " + std::to_string(expected_dim) +
                      " entries");
  return v;
}

WaveTerm parse_term(const json& j, int n, int d, bool with_component,
                    const std::string& where) {
  std::set<std::string> allowed{"angle_mode", "space_mode", "amplitude", "kind"};
  if (with_component) allowed.insert("component");
  reject_unknown(j, allowed, where);
  WaveTerm t;
  t.component = with_component ? get_or(j, "component", 0) : 0;
  t.angle_mode = get_ivec(j, "angle_mode", n, where);
  t.space_mode = get_ivec(j, "space_mode", d, where);
  if (!j.contains("amplitude")) throw ConfigError(where + ": missing 'amplitude'");
  t.amplitude = j.at("amplitude").get<double>();
  std::string kind = get_or<std::string>(j, "kind", "cos");
  if (kind != "cos" && kind != "sin") throw ConfigError(where + ": kind must be cos|sin");
  t.is_sin = kind == "sin";
  return t;
}

ExplicitBlockEntry parse_block(const json& j, int n, int d, const std::string& where) {
  reject_unknown(j, {"angle_mode", "row_mode", "col_mode", "re", "im"}, where);
  ExplicitBlockEntry e;
  e.angle_mode = get_ivec(j, "angle_mode", n, where);
  e.row_mode = get_ivec(j, "row_mode", d, where);
  e.col_mode = get_ivec(j, "col_mode", d, where);
  e.re = get_or(j, "re", 0.0);
  e.im = get_or(j, "im", 0.0);
  return e;
}

json term_to_json(const WaveTerm& t, bool with_component) {
  json j;
  if (with_component) j["component"] = t.component;
  j["angle_mode"] = t.angle_mode;
  j["space_mode"] = t.space_mode;
  j["amplitude"] = t.amplitude;
  j["kind"] = t.is_sin ? "sin" : "cos";
  return j;
}

json block_to_json(const ExplicitBlockEntry& e) {
  return json{{"angle_mode", e.angle_mode},
              {"row_mode", e.row_mode},
              {"col_mode", e.col_mode},
              {"re", e.re},
              {"im", e.im}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"lattice", "parameters", "potential", "perturbation", "stages",
                  "tolerances", "evolution", "measure", "sweep", "seed", "output_dir"},
                 "config");
  ExperimentConfig cfg;

  if (j.contains("lattice")) {
    const json& l = j.at("lattice");
    reject_unknown(l, {"d", "n", "J", "L"}, "lattice");
    cfg.lattice.d = get_or(l, "d", 1);
    cfg.lattice.n = get_or(l, "n", 1);
    cfg.lattice.J = get_or(l, "J", 16);
    cfg.lattice.L = get_or(l, "L", 8);
  }
  cfg.lattice.validate();
  const int d = cfg.lattice.d, n = cfg.lattice.n;
  cfg.omega.assign(n, 0.0);
  cfg.nu.assign(d, 0.0);
  for (int c = 0; c < n; ++c) cfg.omega[c] = 1.61803398874989 - 0.11 * c;
  for (int c = 0; c < d; ++c) cfg.nu[c] = 1.41421356237309 + 0.07 * c;

  if (j.contains("parameters")) {
    const json& p = j.at("parameters");
    reject_unknown(p,
                   {"omega", "nu", "epsilon", "gamma", "tau", "smoothing_gain",
                    "gamma_exponent"},
                   "parameters");
    if (p.contains("omega")) {
      cfg.omega = p.at("omega").get<std::vector<double>>();
      if (int(cfg.omega.size()) != n) throw ConfigError("parameters.omega: needs n entries");
    }
    if (p.contains("nu")) {
      cfg.nu = p.at("nu").get<std::vector<double>>();
      if (int(cfg.nu.size()) != d) throw ConfigError("parameters.nu: needs d entries");
    }
    cfg.epsilon = get_or(p, "epsilon", cfg.epsilon);
    cfg.gamma = get_or(p, "gamma", cfg.gamma);
    cfg.tau = get_or(p, "tau", cfg.tau);
    cfg.smoothing_gain = get_or(p, "smoothing_gain", cfg.smoothing_gain);
    cfg.gamma_exponent = get_or(p, "gamma_exponent", cfg.gamma_exponent);
  }
  if (cfg.epsilon < 0) throw ConfigError("parameters.epsilon: must be >= 0");
  if (!(cfg.gamma > 0 && cfg.gamma < 1)) throw ConfigError("parameters.gamma: must lie in (0,1)");
  if (!(cfg.tau > 0)) throw ConfigError("parameters.tau: must be positive");
  if (!(cfg.smoothing_gain > 0 && cfg.smoothing_gain <= 1))
    throw ConfigError("parameters.smoothing_gain: must lie in (0,1]");

  cfg.potential.mean.assign(d, 0.0);
  if (j.contains("potential")) {
    const json& p = j.at("potential");
    reject_unknown(p, {"mean", "terms"}, "potential");
    if (p.contains("mean")) {
      cfg.potential.mean = p.at("mean").get<std::vector<double>>();
      if (int(cfg.potential.mean.size()) != d)
        throw ConfigError("potential.mean: needs d entries");
    }
    if (p.contains("terms"))
      for (std::size_t i = 0; i < p.at("terms").size(); ++i) {
        auto t = parse_term(p.at("terms")[i], n, d, true,
                            "potential.terms[" + std::to_string(i) + "]");
        if (t.component < 0 || t.component >= d)
          throw ConfigError("potential.terms: component out of range");
        cfg.potential.terms.push_back(std::move(t));
      }
  }

  if (j.contains("perturbation")) {
    const json& p = j.at("perturbation");
    reject_unknown(p, {"kind", "structure", "potential", "growth_amplitude", "blocks"},
                   "perturbation");
    std::string kind = get_or<std::string>(p, "kind", "multiplier_times_potential");
    if (kind == "multiplier_times_potential")
      cfg.perturbation.kind = PerturbationKind::multiplier_times_potential;
    else if (kind == "explicit_blocks")
      cfg.perturbation.kind = PerturbationKind::explicit_blocks;
    else
      throw ConfigError("perturbation.kind: unknown value '" + kind + "'");
    std::string structure = get_or<std::string>(p, "structure", "reversible");
    if (structure == "reversible")
      cfg.perturbation.structure = StructureTarget::reversible;
    else if (structure == "symmetric_hyperbolic_only")
      cfg.perturbation.structure = StructureTarget::symmetric_hyperbolic_only;
    else if (structure == "planted_growth")
      cfg.perturbation.structure = StructureTarget::planted_growth;
    else
      throw ConfigError("perturbation.structure: unknown value '" + structure + "'");
    if (p.contains("potential")) {
      const json& wp = p.at("potential");
      reject_unknown(wp, {"mean", "terms"}, "perturbation.potential");
      cfg.perturbation.potential.mean = get_or(wp, "mean", 0.0);
      if (wp.contains("terms"))
        for (std::size_t i = 0; i < wp.at("terms").size(); ++i)
          cfg.perturbation.potential.terms.push_back(
              parse_term(wp.at("terms")[i], n, d, false,
                         "perturbation.potential.terms[" + std::to_string(i) + "]"));
    }
    cfg.perturbation.growth_amplitude = get_or(p, "growth_amplitude", 0.0);
    if (p.contains("blocks"))
      for (std::size_t i = 0; i < p.at("blocks").size(); ++i)
        cfg.perturbation.blocks.push_back(parse_block(
            p.at("blocks")[i], n, d, "perturbation.blocks[" + std::to_string(i) + "]"));
  } else {
    cfg.perturbation.potential.mean = 1.0;
  }

  if (j.contains("stages")) {
    const json& s = j.at("stages");
    reject_unknown(s, {"straighten", "smooth", "reduce", "verify_cantor"}, "stages");
    cfg.stages.straighten = get_or(s, "straighten", true);
    cfg.stages.smooth = get_or(s, "smooth", true);
    cfg.stages.reduce = get_or(s, "reduce", true);
    cfg.stages.verify_cantor = get_or(s, "verify_cantor", true);
  }

  if (j.contains("tolerances")) {
    const json& t = j.at("tolerances");
    reject_unknown(t,
                   {"straighten_tol", "straighten_max_iter", "series_tol", "kam_stop_tol",
                    "kam_max_steps", "eps_over_gamma_cap", "m_cap", "s_norm", "dioph_Lmax",
                    "dioph_Jmax"},
                   "tolerances");
    auto& tol = cfg.tolerances;
    tol.straighten_tol = get_or(t, "straighten_tol", tol.straighten_tol);
    tol.straighten_max_iter = get_or(t, "straighten_max_iter", tol.straighten_max_iter);
    tol.series_tol = get_or(t, "series_tol", tol.series_tol);
    tol.kam_stop_tol = get_or(t, "kam_stop_tol", tol.kam_stop_tol);
    tol.kam_max_steps = get_or(t, "kam_max_steps", tol.kam_max_steps);
    tol.eps_over_gamma_cap = get_or(t, "eps_over_gamma_cap", tol.eps_over_gamma_cap);
    tol.m_cap = get_or(t, "m_cap", tol.m_cap);
    tol.s_norm = get_or(t, "s_norm", tol.s_norm);
    tol.dioph_Lmax = get_or(t, "dioph_Lmax", tol.dioph_Lmax);
    tol.dioph_Jmax = get_or(t, "dioph_Jmax", tol.dioph_Jmax);
  }
  if (cfg.tolerances.s_norm <= cfg.lattice.n / 2 + 1)
    throw ConfigError("tolerances.s_norm: must exceed [n/2] + 1");

  if (j.contains("evolution")) {
    const json& e = j.at("evolution");
    reject_unknown(
        e, {"T", "dt", "integrator", "sigma", "u0", "record_every", "both_directions"},
        "evolution");
    auto& ev = cfg.evolution;
    ev.T = get_or(e, "T", ev.T);
    ev.dt = get_or(e, "dt", ev.dt);
    ev.integrator = get_or<std::string>(e, "integrator", ev.integrator);
    if (ev.integrator != "strang_splitting" && ev.integrator != "rk4")
      throw ConfigError("evolution.integrator: must be strang_splitting|rk4");
    ev.sigma = get_or(e, "sigma", ev.sigma);
    ev.record_every = get_or(e, "record_every", ev.record_every);
    ev.both_directions = get_or(e, "both_directions", ev.both_directions);
    if (e.contains("u0"))
      for (std::size_t i = 0; i < e.at("u0").size(); ++i) {
        const json& m = e.at("u0")[i];
        reject_unknown(m, {"mode", "re", "im"}, "evolution.u0[" + std::to_string(i) + "]");
        ExplicitBlockEntry entry;
        entry.row_mode = get_ivec(m, "mode", d, "evolution.u0");
        entry.re = get_or(m, "re", 0.0);
        entry.im = get_or(m, "im", 0.0);
        cfg.evolution.u0.push_back(std::move(entry));
      }
    if (ev.dt <= 0 || ev.T <= 0) throw ConfigError("evolution: T and dt must be positive");
  }
  if (cfg.evolution.u0.empty()) {
    ExplicitBlockEntry entry;
    entry.row_mode.assign(d, 0);
    entry.row_mode[0] = 1;
    entry.re = 1.0;
    cfg.evolution.u0.push_back(std::move(entry));
  }

  if (j.contains("measure")) {
    const json& m = j.at("measure");
    reject_unknown(m,
                   {"samples", "gammas", "seed", "eigenvalue_model", "scan_radius",
                    "full_pipeline_fraction", "link_gamma"},
                   "measure");
    auto& ms = cfg.measure;
    ms.samples = get_or(m, "samples", ms.samples);
    if (m.contains("gammas")) ms.gammas = m.at("gammas").get<std::vector<double>>();
    ms.seed = get_or<std::uint64_t>(m, "seed", ms.seed);
    ms.eigenvalue_model = get_or<std::string>(m, "eigenvalue_model", ms.eigenvalue_model);
    if (ms.eigenvalue_model != "first_order" && ms.eigenvalue_model != "full_pipeline")
      throw ConfigError("measure.eigenvalue_model: must be first_order|full_pipeline");
    ms.scan_radius = get_or(m, "scan_radius", ms.scan_radius);
    ms.full_pipeline_fraction = get_or(m, "full_pipeline_fraction", ms.full_pipeline_fraction);
    ms.link_gamma = get_or(m, "link_gamma", ms.link_gamma);
    if (ms.samples < 1) throw ConfigError("measure.samples: must be positive");
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    reject_unknown(s, {"grid", "workers"}, "sweep");
    cfg.sweep_grid = get_or(s, "grid", json::object());
    cfg.sweep_workers = get_or(s, "workers", 2);
    if (!cfg.sweep_grid.is_object()) throw ConfigError("sweep.grid: must be an object");
  }

  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.output_dir = get_or<std::string>(j, "output_dir", cfg.output_dir);
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw QprError(FailKind::io, "cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j;
  j["lattice"] = {{"d", lattice.d}, {"n", lattice.n}, {"J", lattice.J}, {"L", lattice.L}};
  j["parameters"] = {{"omega", omega},
                     {"nu", nu},
                     {"epsilon", epsilon},
                     {"gamma", gamma},
                     {"tau", tau},
                     {"smoothing_gain", smoothing_gain},
                     {"gamma_exponent", gamma_exponent}};
  json vterms = json::array();
  for (const auto& t : potential.terms) vterms.push_back(term_to_json(t, true));
  j["potential"] = {{"mean", potential.mean}, {"terms", vterms}};
  json wterms = json::array();
  for (const auto& t : perturbation.potential.terms)
    wterms.push_back(term_to_json(t, false));
  json blocks = json::array();
  for (const auto& b : perturbation.blocks) blocks.push_back(block_to_json(b));
  j["perturbation"] = {
      {"kind", perturbation.kind == PerturbationKind::multiplier_times_potential
                   ? "multiplier_times_potential"
                   : "explicit_blocks"},
      {"structure", perturbation.structure == StructureTarget::reversible
                        ? "reversible"
                        : (perturbation.structure == StructureTarget::symmetric_hyperbolic_only
                               ? "symmetric_hyperbolic_only"
                               : "planted_growth")},
      {"potential", {{"mean", perturbation.potential.mean}, {"terms", wterms}}},
      {"growth_amplitude", perturbation.growth_amplitude},
      {"blocks", blocks}};
  j["stages"] = {{"straighten", stages.straighten},
                 {"smooth", stages.smooth},
                 {"reduce", stages.reduce},
                 {"verify_cantor", stages.verify_cantor}};
  j["tolerances"] = {{"straighten_tol", tolerances.straighten_tol},
                     {"straighten_max_iter", tolerances.straighten_max_iter},
                     {"series_tol", tolerances.series_tol},
                     {"kam_stop_tol", tolerances.kam_stop_tol},
                     {"kam_max_steps", tolerances.kam_max_steps},
                     {"eps_over_gamma_cap", tolerances.eps_over_gamma_cap},
                     {"m_cap", tolerances.m_cap},
                     {"s_norm", tolerances.s_norm},
                     {"dioph_Lmax", tolerances.dioph_Lmax},
                     {"dioph_Jmax", tolerances.dioph_Jmax}};
  json u0 = json::array();
  for (const auto& e : evolution.u0)
    u0.push_back(json{{"mode", e.row_mode}, {"re", e.re}, {"im", e.im}});
  j["evolution"] = {{"T", evolution.T},
                    {"dt", evolution.dt},
                    {"integrator", evolution.integrator},
                    {"sigma", evolution.sigma},
                    {"u0", u0},
                    {"record_every", evolution.record_every},
                    {"both_directions", evolution.both_directions}};
  j["measure"] = {{"samples", measure.samples},
                  {"gammas", measure.gammas},
                  {"seed", measure.seed},
                  {"eigenvalue_model", measure.eigenvalue_model},
                  {"scan_radius", measure.scan_radius},
                  {"full_pipeline_fraction", measure.full_pipeline_fraction},
                  {"link_gamma", measure.link_gamma}};
  j["sweep"] = {{"grid", sweep_grid}, {"workers", sweep_workers}};
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  return j;
}

std::string config_reference() {
  ExperimentConfig def;
  json j = def.to_json();
  std::string out =
      "Configuration reference (JSON). Every field below is optional; the value\n"
      "shown is the default. Unknown keys are rejected.\n\n";
  out += j.dump(2);
  out +=
      "\n\nNotes:\n"
      "  lattice: d,n spatial/angle dimensions; J,L truncation radii.\n"
      "  parameters.smoothing_gain: order gain e per smoothing step.\n"
      "  parameters.gamma_exponent: a in gamma = epsilon^a (measure.link_gamma).\n"
      "  potential.terms[]: amplitude * {cos|sin}(l.phi + j.x) added to V[component].\n"
      "  perturbation.structure: reversible | symmetric_hyperbolic_only | planted_growth.\n"
      "  perturbation.blocks[]: raw entries for kind = explicit_blocks.\n"
      "  evolution.u0[]: initial Fourier coefficients by mode.\n"
      "  measure.scan_radius 0 selects max(32, 2 gamma^{-1/tau}).\n"
      "  tolerances.m_cap: cap on smoothing steps used at desk scale (the\n"
      "    uncapped step count is reported alongside).\n";
  return out;
}

PhaseFunction build_scalar_field(const ScalarFieldSpec& spec, const LatticeSpec& lattice) {
  PhaseFunction f(lattice);
  const auto& am = angle_modes(lattice);
  const auto& sm = spatial_modes(lattice);
  std::vector<int> za(lattice.n, 0), zs(lattice.d, 0);
  f.at(am.index_of(za), sm.index_of(zs)) = cplx(spec.mean, 0.0);
  for (const auto& t : spec.terms) {
    int ia = am.index_of(t.angle_mode);
    int is = sm.index_of(t.space_mode);
    if (ia < 0 || is < 0) throw ConfigError("field term mode outside the lattice box");
    cplx cplus = t.is_sin ? cplx(0.0, -0.5 * t.amplitude) : cplx(0.5 * t.amplitude, 0.0);
    cplx cminus = t.is_sin ? cplx(0.0, 0.5 * t.amplitude) : cplx(0.5 * t.amplitude, 0.0);
    f.at(ia, is) += cplus;
    f.at(am.negate(ia), sm.negate(is)) += cminus;
  }
  return f;
}

std::vector<PhaseFunction> build_potential(const ExperimentConfig& cfg) {
  std::vector<PhaseFunction> V;
  for (int c = 0; c < cfg.lattice.d; ++c) {
    ScalarFieldSpec s;
    s.mean = cfg.potential.mean.empty() ? 0.0 : cfg.potential.mean[c];
    for (const auto& t : cfg.potential.terms)
      if (t.component == c) s.terms.push_back(t);
    V.push_back(build_scalar_field(s, cfg.lattice));
  }
  return V;
}

cplx perturbation_symbol(const ExperimentConfig& cfg, std::span<const int> j) {
  const double e = cfg.smoothing_gain;
  double br = bracket(j);
  double sum = 0.0;
  for (int c : j) sum += c;
  switch (cfg.perturbation.structure) {
    case StructureTarget::reversible:
      return cplx(0.0, sum * std::pow(br, -e));
    case StructureTarget::symmetric_hyperbolic_only:
      return cplx(0.0, std::pow(br, 1.0 - e));
    case StructureTarget::planted_growth:
      return cplx(cfg.perturbation.growth_amplitude * std::pow(br, -e),
                  sum * std::pow(br, -e));
  }
  return cplx(0.0);
}

QPOperator build_perturbation(const ExperimentConfig& cfg) {
  const LatticeSpec& spec = cfg.lattice;
  const auto& am = angle_modes(spec);
  const auto& sm = spatial_modes(spec);
  QPOperator W(spec);

  if (cfg.perturbation.kind == PerturbationKind::explicit_blocks) {
    for (const auto& b : cfg.perturbation.blocks) {
      int l = am.index_of(b.angle_mode);
      int r = sm.index_of(b.row_mode);
      int c = sm.index_of(b.col_mode);
      if (l < 0 || r < 0 || c < 0)
        throw ConfigError("perturbation.blocks: mode outside the lattice box");
      W.ensure_block(l)(r, c) += cplx(b.re, b.im);
    }
    return W;
  }

  PhaseFunction w = build_scalar_field(cfg.perturbation.potential, spec);
  // W(phi) = M_w Op(mu): entries w_hat(l, j - j') mu(j').
  for (int ia = 0; ia < am.count(); ++ia) {
    bool any = false;
    for (int is = 0; is < sm.count(); ++is)
      if (w.at(ia, is) != cplx(0.0)) { any = true; break; }
    if (!any) continue;
    Mat& blk = W.ensure_block(ia);
    for (int b = 0; b < sm.count(); ++b) {
      cplx mu = perturbation_symbol(cfg, sm.mode(b));
      cplx mu_osc(0.0, mu.imag());
      for (int a = 0; a < sm.count(); ++a) {
        auto ja = sm.mode(a);
        auto jb = sm.mode(b);
        std::vector<int> diff(spec.d);
        for (int c = 0; c < spec.d; ++c) diff[c] = ja[c] - jb[c];
        int di = sm.index_of(diff);
        if (di < 0) continue;
        blk(a, b) += w.at(ia, di) * mu_osc;
      }
    }
  }
  if (cfg.perturbation.structure == StructureTarget::planted_growth) {
    std::vector<int> za(spec.n, 0);
    Mat& b0 = W.ensure_block(am.index_of(za));
    for (int b = 0; b < sm.count(); ++b)
      b0(b, b) += cplx(perturbation_symbol(cfg, sm.mode(b)).real(), 0.0);
  }
  W.prune();
  return W;
}

}  // namespace qpr

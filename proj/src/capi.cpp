#include "qpr/qpreduce.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "qpr/dynamics.hpp"
#include "qpr/measure.hpp"
#include "qpr/pipeline.hpp"

#define QPR_EXPORT __attribute__((visibility("default")))

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

qpr_status status_of(qpr::FailKind kind) {
  switch (kind) {
    case qpr::FailKind::config: return QPR_E_CONFIG;
    case qpr::FailKind::diophantine: return QPR_E_DIOPHANTINE_EXIT;
    case qpr::FailKind::melnikov: return QPR_E_MELNIKOV_EXIT;
    case qpr::FailKind::divergence: return QPR_E_DIVERGENCE;
    case qpr::FailKind::numerical: return QPR_E_NUMERICAL;
    case qpr::FailKind::io: return QPR_E_IO;
  }
  return QPR_E_NUMERICAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

struct qpr_run {
  qpr_status status = QPR_OK;
  std::string report;
  std::string id;
  std::function<void(const std::string&)> writer;
};

extern "C" {

QPR_EXPORT int qpr_version(void) { return 10000; }

QPR_EXPORT const char* qpr_status_name(qpr_status s) {
  switch (s) {
    case QPR_OK: return "ok";
    case QPR_E_CONFIG: return "config_error";
    case QPR_E_DIOPHANTINE_EXIT: return "diophantine_exit";
    case QPR_E_MELNIKOV_EXIT: return "melnikov_exit";
    case QPR_E_DIVERGENCE: return "divergence";
    case QPR_E_NUMERICAL: return "numerical";
    case QPR_E_IO: return "io_error";
    case QPR_E_INVALID_ARGUMENT: return "invalid_argument";
  }
  return "unknown";
}

QPR_EXPORT const char* qpr_last_error(void) { return g_last_error.c_str(); }

QPR_EXPORT void qpr_string_free(char* s) { std::free(s); }

QPR_EXPORT qpr_status qpr_config_validate(const char* config_json,
                                          char** effective_json_out) {
  if (!config_json) {
    set_error("config_json is null");
    return QPR_E_INVALID_ARGUMENT;
  }
  try {
    auto parsed = qpr::json::parse(config_json);
    auto cfg = qpr::ExperimentConfig::from_json(parsed);
    if (effective_json_out) *effective_json_out = dup_string(cfg.to_json().dump(2));
    return QPR_OK;
  } catch (const qpr::QprError& e) {
    set_error(e.what());
    return status_of(e.kind());
  } catch (const std::exception& e) {
    set_error(e.what());
    return QPR_E_CONFIG;
  }
}

QPR_EXPORT qpr_status qpr_config_reference(char** text_out) {
  if (!text_out) {
    set_error("text_out is null");
    return QPR_E_INVALID_ARGUMENT;
  }
  *text_out = dup_string(qpr::config_reference());
  return QPR_OK;
}

QPR_EXPORT qpr_status qpr_run_stage(const char* config_json, const char* stage_c,
                                    qpr_run** run_out) {
  if (run_out) *run_out = nullptr;
  if (!config_json || !stage_c || !run_out) {
    set_error("null argument");
    return QPR_E_INVALID_ARGUMENT;
  }
  const std::string stage = stage_c;
  qpr::ExperimentConfig cfg;
  try {
    cfg = qpr::ExperimentConfig::from_json(qpr::json::parse(config_json));
  } catch (const qpr::QprError& e) {
    set_error(e.what());
    return status_of(e.kind());
  } catch (const std::exception& e) {
    set_error(e.what());
    return QPR_E_CONFIG;
  }

  auto run = std::make_unique<qpr_run>();
  run->id = qpr::run_id(cfg, stage);
  try {
    if (stage == "measure") {
      auto res = qpr::excluded_fraction(cfg);
      qpr::json rep;
      rep["schema"] = "qpreduce-measure-report-v1";
      rep["config"] = cfg.to_json();
      rep["scan_radius"] = res.scan_radius;
      rep["loglog_slope"] = res.loglog_slope;
      rep["monotone_in_gamma"] = res.monotone_in_gamma;
      rep["spot_checks"] = res.spot_checks;
      rep["spot_mismatches"] = res.spot_mismatches;
      qpr::json rows = qpr::json::array();
      for (const auto& r : res.rows)
        rows.push_back(qpr::json{{"gamma", r.gamma},
                                 {"samples", r.samples},
                                 {"excluded", r.excluded},
                                 {"fraction", r.fraction},
                                 {"ci_low", r.ci_low},
                                 {"ci_high", r.ci_high},
                                 {"tag_diophantine", r.tag_diophantine},
                                 {"tag_melnikov", r.tag_melnikov},
                                 {"tag_pipeline_failure", r.tag_pipeline_failure}});
      rep["rows"] = rows;
      run->report = rep.dump(2);
      auto rows_copy = res.rows;
      auto cfg_copy = cfg;
      std::string report = run->report;
      run->writer = [rows_copy, report, cfg_copy](const std::string& dir) {
        std::filesystem::create_directories(dir);
        std::ofstream rj(dir + "/report.json");
        rj << report << "\n";
        std::ofstream f(dir + "/measure.csv");
        f << "gamma,samples,excluded_count,fraction,ci_low,ci_high,"
             "tag_diophantine,tag_melnikov,tag_pipeline_failure\n";
        for (const auto& r : rows_copy)
          f << fmt17(r.gamma) << ',' << r.samples << ',' << r.excluded << ','
            << fmt17(r.fraction) << ',' << fmt17(r.ci_low) << ',' << fmt17(r.ci_high)
            << ',' << r.tag_diophantine << ',' << r.tag_melnikov << ','
            << r.tag_pipeline_failure << "\n";
        std::ofstream ec(dir + "/effective_config.json");
        ec << cfg_copy.to_json().dump(2) << "\n";
      };
      run->status = QPR_OK;
      *run_out = run.release();
      return QPR_OK;
    }

    // Pipeline-backed stages; later stages imply the earlier ones.
    qpr::ExperimentConfig staged = cfg;
    if (stage == "straighten") {
      staged.stages.smooth = false;
      staged.stages.reduce = false;
      staged.stages.verify_cantor = false;
    } else if (stage == "smooth") {
      staged.stages.reduce = false;
      staged.stages.verify_cantor = false;
    } else if (stage == "reduce" || stage == "full" || stage == "evolve") {
      // all stages on
    } else {
      set_error("unknown stage: " + stage);
      return QPR_E_INVALID_ARGUMENT;
    }

    auto res = std::make_shared<qpr::PipelineResult>(qpr::run_pipeline(staged));
    run->status = res->ok ? QPR_OK : status_of(res->fail_kind);
    if (!res->ok) set_error(res->failure_detail);

    std::shared_ptr<qpr::NormSeries> direct, reduced;
    qpr::GrowthClass growth;
    if (stage == "evolve" && res->ok) {
      auto V = qpr::build_potential(staged);
      auto W = qpr::build_perturbation(staged);
      direct = std::make_shared<qpr::NormSeries>(qpr::evolve_direct(
          staged.evolution, V, W, staged.omega, staged.nu, staged.epsilon));
      reduced = std::make_shared<qpr::NormSeries>(
          qpr::evolve_reduced(res->kam.spectrum.lambda(), res->U_chain,
                              staged.evolution, staged.omega));
      growth = qpr::growth_classifier(direct->times, direct->h_sigma);
      qpr::json rep = res->report;
      double sup_diff = 0.0, sup_ratio = 0.0;
      for (std::size_t i = 0; i < direct->snapshots.size() &&
                              i < reduced->snapshots.size(); ++i) {
        sup_diff = std::max(sup_diff,
                            (direct->snapshots[i] - reduced->snapshots[i]).norm());
        if (direct->h_sigma[0] > 0)
          sup_ratio = std::max(sup_ratio, direct->h_sigma[i] / direct->h_sigma[0]);
      }
      rep["evolution"] = qpr::json{
          {"integrator", staged.evolution.integrator},
          {"T", staged.evolution.T},
          {"dt", staged.evolution.dt},
          {"sup_norm_ratio", sup_ratio},
          {"sup_direct_reduced_diff", sup_diff},
          {"truncated", direct->truncated},
          {"classification", growth.kind == qpr::GrowthClass::bounded
                                 ? "bounded"
                                 : (growth.kind == qpr::GrowthClass::exponential
                                        ? "exponential"
                                        : "undecided")},
          {"rate", growth.rate},
          {"r2", growth.r2}};
      run->report = rep.dump(2);
    } else {
      run->report = res->report.dump(2);
    }

    std::string report = run->report;
    run->writer = [res, direct, reduced, report](const std::string& dir) {
      qpr::write_outputs(*res, dir);
      {
        // the evolve stage report extends the pipeline report
        std::ofstream rj(dir + "/report.json");
        rj << report << "\n";
      }
      if (direct)
        qpr::write_norm_series(*direct, reduced ? reduced.get() : nullptr,
                               dir + "/norms.csv");
    };
    *run_out = run.release();
    return (*run_out)->status;
  } catch (const qpr::QprError& e) {
    set_error(e.what());
    return status_of(e.kind());
  } catch (const std::exception& e) {
    set_error(e.what());
    return QPR_E_NUMERICAL;
  }
}

QPR_EXPORT const char* qpr_run_report(const qpr_run* run) {
  return run ? run->report.c_str() : nullptr;
}

QPR_EXPORT const char* qpr_run_id(const qpr_run* run) {
  return run ? run->id.c_str() : nullptr;
}

QPR_EXPORT qpr_status qpr_run_write_outputs(const qpr_run* run, const char* dir) {
  if (!run || !dir) {
    set_error("null argument");
    return QPR_E_INVALID_ARGUMENT;
  }
  try {
    run->writer(dir);
    return QPR_OK;
  } catch (const std::exception& e) {
    set_error(e.what());
    return QPR_E_IO;
  }
}

QPR_EXPORT void qpr_run_free(qpr_run* run) { delete run; }

}  // extern "C"

// Command-line front end; talks to the engine exclusively through the shared
// C API. Exit codes are the qpr_status values, so scripts can tell a Cantor
// exit (2, 3) from a genuine failure (4, 5).

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "qpr/qpreduce.h"

namespace {

using json = nlohmann::ordered_json;

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  json j;
  in >> j;
  return j;
}

// "parameters.epsilon=3e-4" -> pointer /parameters/epsilon with parsed value.
void apply_override(json& cfg, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw CLI::ValidationError("--override", "expected KEY=VALUE, got " + kv);
  std::string key = kv.substr(0, eq);
  std::string val = kv.substr(eq + 1);
  std::string ptr = "/" + key;
  for (auto& c : ptr)
    if (c == '.') c = '/';
  json parsed;
  try {
    parsed = json::parse(val);
  } catch (...) {
    parsed = val;  // plain string
  }
  cfg[json::json_pointer(ptr)] = parsed;
}

int run_one(const json& cfg, const std::string& stage, const std::string& out_dir,
            bool quiet = false) {
  qpr_run* run = nullptr;
  qpr_status st = qpr_run_stage(cfg.dump().c_str(), stage.c_str(), &run);
  if (!run) {
    std::cerr << "error (" << qpr_status_name(st) << "): " << qpr_last_error() << "\n";
    return int(st);
  }
  std::string dir = out_dir + "/" + qpr_run_id(run);
  qpr_status wst = qpr_run_write_outputs(run, dir.c_str());
  if (wst != QPR_OK) {
    std::cerr << "write failed: " << qpr_last_error() << "\n";
    qpr_run_free(run);
    return int(wst);
  }
  if (!quiet) {
    std::cout << "run " << qpr_run_id(run) << " -> " << dir << "\n";
    json rep = json::parse(qpr_run_report(run));
    if (rep.contains("outcome")) std::cout << "outcome: " << rep["outcome"] << "\n";
    if (st != QPR_OK)
      std::cout << "status: " << qpr_status_name(st) << " (" << qpr_last_error() << ")\n";
  }
  qpr_run_free(run);
  return int(st);
}

int run_sweep(json cfg, const std::string& out_dir, int workers_flag) {
  json grid = cfg.value("sweep", json::object()).value("grid", json::object());
  if (grid.empty()) {
    std::cerr << "sweep.grid is empty; nothing to do\n";
    return int(QPR_E_CONFIG);
  }
  int workers = workers_flag > 0
                    ? workers_flag
                    : cfg.value("sweep", json::object()).value("workers", 2);

  std::vector<std::string> keys;
  std::vector<json> values;
  for (auto it = grid.begin(); it != grid.end(); ++it) {
    if (!it.value().is_array() || it.value().empty()) {
      std::cerr << "sweep.grid." << it.key() << " must be a non-empty array\n";
      return int(QPR_E_CONFIG);
    }
    keys.push_back(it.key());
    values.push_back(it.value());
  }
  std::vector<json> combos;
  std::vector<std::size_t> idx(keys.size(), 0);
  for (;;) {
    json combo = json::object();
    for (std::size_t k = 0; k < keys.size(); ++k) combo[keys[k]] = values[k][idx[k]];
    combos.push_back(combo);
    std::size_t c = 0;
    while (c < idx.size()) {
      if (++idx[c] < values[c].size()) break;
      idx[c] = 0;
      ++c;
    }
    if (c == idx.size()) break;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> worst{0};
  std::vector<std::string> lines(combos.size());
  auto work = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= combos.size()) return;
      json one = cfg;
      one.erase("sweep");
      for (auto it = combos[i].begin(); it != combos[i].end(); ++it)
        apply_override(one, it.key() + "=" + it.value().dump());
      qpr_run* run = nullptr;
      qpr_status st = qpr_run_stage(one.dump().c_str(), "full", &run);
      std::string id = run ? qpr_run_id(run) : "invalid";
      if (run) qpr_run_write_outputs(run, (out_dir + "/" + id).c_str());
      std::string outcome = "failed";
      if (run) {
        json rep = json::parse(qpr_run_report(run));
        outcome = rep.value("outcome", "failed");
      }
      lines[i] =
          id + ",\"" + combos[i].dump() + "\"," + outcome + "," + qpr_status_name(st);
      if (run) qpr_run_free(run);
      // Cantor exits are expected sweep outcomes, not sweep failures.
      if (st != QPR_OK && st != QPR_E_DIOPHANTINE_EXIT && st != QPR_E_MELNIKOV_EXIT) {
        int cur = worst.load();
        while (cur < int(st) && !worst.compare_exchange_weak(cur, int(st))) {
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < std::max(1, workers); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();

  std::filesystem::create_directories(out_dir);
  std::ofstream sum(out_dir + "/sweep_summary.csv");
  sum << "run_id,overrides,outcome,status\n";
  for (const auto& l : lines) sum << l << "\n";
  std::cout << combos.size() << " sweep runs -> " << out_dir << "\n";
  return worst.load();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qpr: reducibility engine for quasi-periodically forced transport"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "output";
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory (default: output)");
    sub->add_option("--seed", seed, "override the config seed")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_option("--workers", workers, "worker threads (sweep)");
    sub->add_option("--override", overrides, "KEY=VALUE config override (repeatable)");
  };

  std::vector<std::string> stages{"straighten", "smooth",  "reduce",
                                  "evolve",     "measure", "full"};
  for (const auto& s : stages) add_common(app.add_subcommand(s, "run the " + s + " stage"));
  add_common(app.add_subcommand("sweep", "map a parameter grid to pipeline runs"));
  app.add_subcommand("schema", "print the generated configuration reference");

  CLI11_PARSE(app, argc, argv);
  auto* sub = app.get_subcommands().front();
  const std::string stage = sub->get_name();

  if (stage == "schema") {
    char* text = nullptr;
    qpr_config_reference(&text);
    std::cout << text;
    qpr_string_free(text);
    return 0;
  }

  try {
    json cfg = load_config(config_path);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    if (seed_set) cfg["seed"] = seed;

    char* effective = nullptr;
    qpr_status vs = qpr_config_validate(cfg.dump().c_str(), &effective);
    if (vs != QPR_OK) {
      std::cerr << "config error: " << qpr_last_error() << "\n";
      return int(vs);
    }
    qpr_string_free(effective);

    if (stage == "sweep") return run_sweep(cfg, out_dir, workers);
    return run_one(cfg, stage, out_dir);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return int(QPR_E_CONFIG);
  }
}

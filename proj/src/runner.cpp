#include "metamarl/runner.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "metamarl/checkpoint.hpp"
#include "metamarl/games.hpp"

namespace metamarl {

Population population_for(const ExperimentConfig& cfg) {
  if (cfg.population == "preset:ipd") return ipd_population(cfg.population_seed);
  if (cfg.population == "preset:rps")
    return rps_population(make_rps(cfg.n_agents), cfg.population_seed);
  std::ifstream in(cfg.population);
  if (!in) throw ConfigError("cannot open population file: " + cfg.population);
  return load_population(in);
}

namespace {

void write_manifest(const ExperimentConfig& cfg, const std::string& out_dir) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config_hash"] = cfg.hash();
  j["config"] = cfg.resolved_text();
  j["run_id"] = cfg.run_id;
  j["workers"] = cfg.workers;
  std::ofstream os(out_dir + "/manifest.json");
  os << j.dump(2) << "\n";
}

void flush_metrics(const std::string& out_dir, const std::vector<MetricsRow>& rows,
                   const std::string& failure) {
  std::ofstream os(out_dir + "/metrics.csv");
  write_metrics_csv(os, rows);
  if (!failure.empty()) os << "# run_failed " << failure << "\n";
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_manifest(cfg, out_dir);
  Population pop = population_for(cfg);

  std::vector<MetricsRow> rows;
  try {
    for (std::uint64_t seed : cfg.seeds) {
      TrainResult train = meta_train(cfg, pop, seed);
      rows.insert(rows.end(), train.rows.begin(), train.rows.end());
      {
        std::ofstream os(out_dir + "/checkpoint_seed" + std::to_string(seed) + ".txt");
        save_checkpoint(os, train.best_params, seed, cfg.hash());
      }
      TestResult test = meta_test(cfg, pop, train.best_params, seed);
      rows.insert(rows.end(), test.rows.begin(), test.rows.end());
    }
  } catch (const std::exception& e) {
    flush_metrics(out_dir, rows, e.what());
    throw;
  }
  flush_metrics(out_dir, rows, "");
}

}  // namespace metamarl

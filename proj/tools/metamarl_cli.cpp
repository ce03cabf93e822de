#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metamarl/checkpoint.hpp"
#include "metamarl/config.hpp"
#include "metamarl/gradcheck.hpp"
#include "metamarl/metrics.hpp"
#include "metamarl/runner.hpp"
#include "metamarl/zero_sum_analytic.hpp"

namespace {

using namespace metamarl;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGradcheck = 3;

ExperimentConfig load_with_overrides(const std::string& path,
                                     const std::vector<std::string>& sets) {
  ExperimentConfig cfg = load_config(path);
  for (const std::string& kv : sets) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value: " + kv);
    apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("METAMARL_SEED")) {
    cfg.seeds = {std::stoull(env)};
  }
  if (cfg.run_id.empty())
    cfg.run_id = std::filesystem::path(path).stem().string();
  cfg.validate();
  return cfg;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& sets) {
  ExperimentConfig cfg = load_with_overrides(config_path, sets);
  run_experiment(cfg, out_dir);
  return 0;
}

int cmd_test(const std::string& config_path, const std::string& checkpoint_path,
             std::string out_dir, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = load_with_overrides(config_path, sets);
  std::ifstream in(checkpoint_path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + checkpoint_path);
  LoadedCheckpoint ckpt = load_checkpoint(in, cfg.hash());
  if (out_dir.empty())
    out_dir = std::filesystem::path(checkpoint_path).parent_path().string();
  if (out_dir.empty()) out_dir = ".";

  Population pop = population_for(cfg);
  TestResult res = meta_test(cfg, pop, ckpt.params, ckpt.master_seed);

  std::string metrics_path = out_dir + "/metrics.csv";
  std::vector<MetricsRow> rows;
  if (std::filesystem::exists(metrics_path)) {
    std::ifstream mi(metrics_path);
    rows = read_metrics_csv(mi);
  }
  rows.insert(rows.end(), res.rows.begin(), res.rows.end());
  std::ofstream mo(metrics_path);
  write_metrics_csv(mo, rows);
  std::cout << "mean test AUC: " << res.mean_auc << "\n";
  return 0;
}

int cmd_fig3(const std::string& out_dir, int samples, double alpha, double beta,
             int iters, std::uint64_t seed, int workers) {
  std::filesystem::create_directories(out_dir);
  zero_sum::TrainingCurves curves =
      zero_sum::run_fig3(samples, alpha, beta, iters, seed, workers);
  std::ofstream os(out_dir + "/fig3.csv");
  zero_sum::write_fig3_csv(curves, os);
  return 0;
}

int cmd_dump_population(const std::string& config_path, const std::string& out_dir,
                        const std::vector<std::string>& sets) {
  ExperimentConfig cfg = load_with_overrides(config_path, sets);
  Population pop = population_for(cfg);
  std::filesystem::create_directories(out_dir);
  std::ofstream os(out_dir + "/population.txt");
  dump_population(pop, os);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta multiagent policy-gradient simulator for repeated matrix games"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint_path, game_filter;
  std::vector<std::string> sets;
  int samples = 200, iters = 300, workers = 1;
  double alpha = 0.75, beta = 0.01;
  std::uint64_t seed = 1;

  CLI::App* train = app.add_subcommand("train", "meta-train, then evaluate on the test split");
  train->add_option("config", config_path)->required();
  train->add_option("--out", out_dir)->required();
  train->add_option("--set", sets, "override config keys (key=value)");

  CLI::App* test = app.add_subcommand("test", "evaluate a checkpoint on the test split");
  test->add_option("config", config_path)->required();
  test->add_option("--checkpoint", checkpoint_path)->required();
  test->add_option("--out", out_dir);
  test->add_option("--set", sets);

  CLI::App* fig3 = app.add_subcommand("fig3", "stateless zero-sum training curves");
  fig3->add_option("--out", out_dir)->required();
  fig3->add_option("--samples", samples);
  fig3->add_option("--alpha", alpha);
  fig3->add_option("--beta", beta);
  fig3->add_option("--iters", iters);
  fig3->add_option("--seed", seed);
  fig3->add_option("--workers", workers);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the oracle suite");
  gradcheck->add_option("--game", game_filter);

  CLI::App* dump = app.add_subcommand("dump-population", "write the persona population");
  dump->add_option("config", config_path)->required();
  dump->add_option("--out", out_dir)->required();
  dump->add_option("--set", sets);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, sets);
    if (test->parsed()) return cmd_test(config_path, checkpoint_path, out_dir, sets);
    if (fig3->parsed())
      return cmd_fig3(out_dir, samples, alpha, beta, iters, seed, workers);
    if (gradcheck->parsed())
      return metamarl::run_gradcheck(std::cout, game_filter) ? 0 : kExitGradcheck;
    if (dump->parsed()) return cmd_dump_population(config_path, out_dir, sets);
  } catch (const metamarl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

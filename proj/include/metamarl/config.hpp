#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace metamarl {

// Raised for malformed or inconsistent configs; the CLI maps it to exit 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string game = "ipd";
  int n_agents = 2;
  std::string method = "meta_mapg";
  std::string estimator_path = "dice_autodiff";
  int K = 32;
  int H = 20;
  int L = 3;
  double gamma = 0.96;
  double gae_lambda = 0.95;
  double inner_lr = 0.3;
  double outer_lr = 0.05;
  bool learn_inner_lrs = false;
  bool opponent_modeling = false;
  std::string population = "preset:ipd";
  std::uint64_t population_seed = 9001;
  int peers_per_batch = 4;
  int max_iters = 300;
  int patience = 1000000;
  std::vector<std::uint64_t> seeds = {1};
  int workers = 1;
  int validate_every = 25;
  int val_peers = 10;
  double om_lr = 1.0;
  int om_max_iters = 25;
  double om_tol = 1e-6;
  std::string run_id;

  // Normalized key=value text of every field; hashed into checkpoints.
  std::string resolved_text() const;
  std::uint64_t hash() const;
  void validate() const;
};

// Flat key=value files; `include <path>` pulls in another file relative to
// the current one, later keys override earlier ones. '#' starts a comment.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_pairs(const std::map<std::string, std::string>& kv);
void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value);

}  // namespace metamarl

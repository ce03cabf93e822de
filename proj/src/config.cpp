#include "metamarl/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "metamarl/rng.hpp"

namespace metamarl {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void parse_file(const std::string& path, std::map<std::string, std::string>& kv) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  std::string line;
  while (std::getline(in, line)) {
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.rfind("include ", 0) == 0) {
      std::filesystem::path inc = trim(line.substr(8));
      if (inc.is_relative()) inc = std::filesystem::path(path).parent_path() / inc;
      parse_file(inc.string(), kv);
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("bad boolean: " + v);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void apply_override(ExperimentConfig& c, const std::string& key,
                    const std::string& v) {
  try {
    if (key == "game") c.game = v;
    else if (key == "n_agents") c.n_agents = std::stoi(v);
    else if (key == "method") c.method = v;
    else if (key == "estimator_path") c.estimator_path = v;
    else if (key == "K") c.K = std::stoi(v);
    else if (key == "H") c.H = std::stoi(v);
    else if (key == "L") c.L = std::stoi(v);
    else if (key == "gamma") c.gamma = std::stod(v);
    else if (key == "gae_lambda") c.gae_lambda = std::stod(v);
    else if (key == "inner_lr") c.inner_lr = std::stod(v);
    else if (key == "outer_lr") c.outer_lr = std::stod(v);
    else if (key == "learn_inner_lrs") c.learn_inner_lrs = parse_bool(v);
    else if (key == "opponent_modeling") c.opponent_modeling = parse_bool(v);
    else if (key == "population") c.population = v;
    else if (key == "population_seed") c.population_seed = std::stoull(v);
    else if (key == "peers_per_batch") c.peers_per_batch = std::stoi(v);
    else if (key == "max_iters") c.max_iters = std::stoi(v);
    else if (key == "patience") c.patience = std::stoi(v);
    else if (key == "seeds") c.seeds = parse_seed_list(v);
    else if (key == "workers") c.workers = std::stoi(v);
    else if (key == "validate_every") c.validate_every = std::stoi(v);
    else if (key == "val_peers") c.val_peers = std::stoi(v);
    else if (key == "om_lr") c.om_lr = std::stod(v);
    else if (key == "om_max_iters") c.om_max_iters = std::stoi(v);
    else if (key == "om_tol") c.om_tol = std::stod(v);
    else if (key == "run_id") c.run_id = v;
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value for " + key + ": " + v);
  } catch (const std::out_of_range&) {
    throw ConfigError("bad value for " + key + ": " + v);
  }
}

ExperimentConfig config_from_pairs(const std::map<std::string, std::string>& kv) {
  ExperimentConfig c;
  for (const auto& [k, v] : kv) apply_override(c, k, v);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::map<std::string, std::string> kv;
  parse_file(path, kv);
  return config_from_pairs(kv);
}

void ExperimentConfig::validate() const {
  if (game != "ipd" && game != "rps" && game != "zero_sum")
    throw ConfigError("game must be ipd, rps or zero_sum");
  if (method != "meta_mapg" && method != "meta_pg" && method != "no_own_learning" &&
      method != "reinforce")
    throw ConfigError("unknown method: " + method);
  if (estimator_path != "dice_autodiff" && estimator_path != "score_function")
    throw ConfigError("unknown estimator_path: " + estimator_path);
  if (K < 1 || H < 1 || L < 1) throw ConfigError("K, H, L must be >= 1");
  if (!(gamma >= 0 && gamma < 1)) throw ConfigError("gamma must be in [0, 1)");
  if (!(gae_lambda >= 0 && gae_lambda <= 1))
    throw ConfigError("gae_lambda must be in [0, 1]");
  if (n_agents < 2) throw ConfigError("n_agents must be >= 2");
  if (game == "ipd" && n_agents != 2) throw ConfigError("ipd is a 2-agent game");
  if (peers_per_batch < 1 || workers < 1)
    throw ConfigError("peers_per_batch and workers must be >= 1");
}

std::string ExperimentConfig::resolved_text() const {
  std::ostringstream os;
  os << "K=" << K << "\n";
  os << "H=" << H << "\n";
  os << "L=" << L << "\n";
  os << "estimator_path=" << estimator_path << "\n";
  os << "gae_lambda=" << fmt(gae_lambda) << "\n";
  os << "game=" << game << "\n";
  os << "gamma=" << fmt(gamma) << "\n";
  os << "inner_lr=" << fmt(inner_lr) << "\n";
  os << "learn_inner_lrs=" << (learn_inner_lrs ? 1 : 0) << "\n";
  os << "max_iters=" << max_iters << "\n";
  os << "method=" << method << "\n";
  os << "n_agents=" << n_agents << "\n";
  os << "om_lr=" << fmt(om_lr) << "\n";
  os << "om_max_iters=" << om_max_iters << "\n";
  os << "om_tol=" << fmt(om_tol) << "\n";
  os << "opponent_modeling=" << (opponent_modeling ? 1 : 0) << "\n";
  os << "outer_lr=" << fmt(outer_lr) << "\n";
  os << "patience=" << patience << "\n";
  os << "peers_per_batch=" << peers_per_batch << "\n";
  os << "population=" << population << "\n";
  os << "population_seed=" << population_seed << "\n";
  std::string sep;
  os << "seeds=";
  for (std::uint64_t s : seeds) {
    os << sep << s;
    sep = ",";
  }
  os << "\n";
  os << "val_peers=" << val_peers << "\n";
  os << "validate_every=" << validate_every << "\n";
  // run_id and workers are execution details: results are identical for any
  // worker count, so they stay out of the hashed text.
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const {
  std::string text = resolved_text();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char ch : text) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
  return mix64(h);
}

}  // namespace metamarl

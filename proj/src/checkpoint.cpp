#include "metamarl/checkpoint.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace metamarl {

namespace {
void put(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}
}  // namespace

void save_checkpoint(std::ostream& os, const MetaParams& params,
                     std::uint64_t master_seed, std::uint64_t config_hash) {
  os << "checkpoint v1\n";
  os << "config_hash " << config_hash << "\n";
  os << "master_seed " << master_seed << "\n";
  os << "shape " << params.phi0.n_states << " " << params.phi0.n_actions << "\n";
  os << "logits";
  for (double v : params.phi0.logits) {
    os << " ";
    put(os, v);
  }
  os << "\n";
  os << "log_inner_lrs " << params.log_inner_lrs.size();
  for (double v : params.log_inner_lrs) {
    os << " ";
    put(os, v);
  }
  os << "\n";
}

LoadedCheckpoint load_checkpoint(std::istream& is, std::uint64_t expected_hash) {
  std::string word, version;
  if (!(is >> word >> version) || word != "checkpoint" || version != "v1")
    throw std::runtime_error("checkpoint: parse error (bad or empty header)");
  std::uint64_t hash = 0;
  LoadedCheckpoint out;
  if (!(is >> word >> hash) || word != "config_hash")
    throw std::runtime_error("checkpoint: parse error (config_hash)");
  if (hash != expected_hash)
    throw std::runtime_error(
        "checkpoint: config hash mismatch; this checkpoint was written under a "
        "different configuration");
  if (!(is >> word >> out.master_seed) || word != "master_seed")
    throw std::runtime_error("checkpoint: parse error (master_seed)");
  int S = 0, A = 0;
  if (!(is >> word >> S >> A) || word != "shape" || S <= 0 || A <= 0)
    throw std::runtime_error("checkpoint: parse error (shape)");
  out.params.phi0.agent_id = 0;
  out.params.phi0.n_states = S;
  out.params.phi0.n_actions = A;
  out.params.phi0.logits.resize(static_cast<size_t>(S) * A);
  if (!(is >> word) || word != "logits")
    throw std::runtime_error("checkpoint: parse error (logits)");
  for (double& v : out.params.phi0.logits)
    if (!(is >> v)) throw std::runtime_error("checkpoint: truncated logits");
  size_t n_lrs = 0;
  if (!(is >> word >> n_lrs) || word != "log_inner_lrs")
    throw std::runtime_error("checkpoint: parse error (log_inner_lrs)");
  out.params.log_inner_lrs.resize(n_lrs);
  for (double& v : out.params.log_inner_lrs)
    if (!(is >> v)) throw std::runtime_error("checkpoint: truncated log_inner_lrs");
  return out;
}

}  // namespace metamarl

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "metamarl/games.hpp"
#include "metamarl/rng.hpp"

namespace metamarl {

// Table of logits over actions per state; the policy is the row softmax.
struct PolicyParams {
  int agent_id = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> logits;  // [state * n_actions + action]

  double& logit(int s, int a) { return logits[static_cast<size_t>(s) * n_actions + a]; }
  double logit(int s, int a) const { return logits[static_cast<size_t>(s) * n_actions + a]; }
  int dim() const { return n_states * n_actions; }
};

PolicyParams zero_params(const MatrixGame& game, int agent_id);

// Row softmax written as a fixed op sequence (shift by the detached row max,
// exp, sequential sum, log). The tape path replays the same sequence, so
// values agree to rounding.
void logp_row(std::span<const double> logits_row, std::span<double> out);

std::vector<double> action_probs(const PolicyParams& params, int state);

struct SampledAction {
  int action;
  double log_prob;
};

SampledAction sample_action(const PolicyParams& params, int state, Rng& rng);

enum class PersonaKind { kCooperating, kDefecting, kRock, kPaper, kScissors, kUniform };

const char* persona_kind_name(PersonaKind k);
PersonaKind persona_kind_from(const std::string& name);

struct PersonaSpec {
  PersonaKind kind;
  std::uint64_t seed = 0;
};

PolicyParams sample_persona(const MatrixGame& game, const PersonaSpec& spec, Rng& rng);

struct PersonaRecord {
  PersonaKind kind;
  std::uint64_t seed;
  PolicyParams params;
};

struct Population {
  std::vector<PersonaRecord> members;
  std::vector<int> train, val, test;
};

struct SplitSizes {
  int n_train, n_val, n_test;
};

Population build_population(const MatrixGame& game,
                            std::span<const std::pair<PersonaKind, int>> counts,
                            SplitSizes split, std::uint64_t seed);

// Shipped presets: IPD 480 personas split 400/40/40, RPS 720 split 600/60/60.
Population ipd_population(std::uint64_t seed);
Population rps_population(const MatrixGame& game, std::uint64_t seed);

void dump_population(const Population& pop, std::ostream& os);
Population load_population(std::istream& is);

}  // namespace metamarl

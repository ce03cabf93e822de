#pragma once

#include <optional>
#include <span>
#include <vector>

namespace metamarl {

// Repeated matrix game with deterministic transitions: state 0 is the
// episode start and every other state encodes the previous joint action
// (row-major over agents, agent 0 most significant).
struct MatrixGame {
  int n_agents = 0;
  int n_actions = 0;
  // payoff[joint_index * n_agents + agent], joint_index row-major.
  std::vector<double> payoff;
  int horizon_default = 0;
  bool zero_sum = false;

  int n_joint_actions() const;
  int n_states() const { return n_joint_actions() + 1; }
  double reward(int joint_index, int agent) const {
    return payoff[static_cast<size_t>(joint_index) * n_agents + agent];
  }
};

MatrixGame make_ipd();
MatrixGame make_rps(int n_agents);

int joint_index(const MatrixGame& game, std::span<const int> actions);
std::vector<int> joint_actions_of(const MatrixGame& game, int joint_index);

// State 0 encodes "no previous action"; otherwise 1 + joint index.
int encode_state(const MatrixGame& game, std::optional<std::span<const int>> prev);
std::vector<int> decode_state(const MatrixGame& game, int state);

struct StepResult {
  int next_state;
  std::vector<double> rewards;
};

StepResult step(const MatrixGame& game, int state, std::span<const int> joint_action);

}  // namespace metamarl

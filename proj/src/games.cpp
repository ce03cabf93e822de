#include "metamarl/games.hpp"

#include <stdexcept>

namespace metamarl {

int MatrixGame::n_joint_actions() const {
  int n = 1;
  for (int i = 0; i < n_agents; ++i) n *= n_actions;
  return n;
}

MatrixGame make_ipd() {
  MatrixGame g;
  g.n_agents = 2;
  g.n_actions = 2;  // C = 0, D = 1
  g.horizon_default = 150;
  g.payoff = {
      0.5, 0.5,    // (C, C)
      -1.5, 1.5,   // (C, D)
      1.5, -1.5,   // (D, C)
      -0.5, -0.5,  // (D, D)
  };
  return g;
}

MatrixGame make_rps(int n_agents) {
  if (n_agents < 2) throw std::invalid_argument("rps: need at least 2 agents");
  // Row player payoff, R = 0, P = 1, S = 2.
  static const double kPairwise[3][3] = {
      {0, -1, 1},
      {1, 0, -1},
      {-1, 1, 0},
  };
  MatrixGame g;
  g.n_agents = n_agents;
  g.n_actions = 3;
  g.horizon_default = 150;
  g.zero_sum = true;
  int joint = g.n_joint_actions();
  g.payoff.resize(static_cast<size_t>(joint) * n_agents);
  std::vector<int> actions(n_agents);
  for (int j = 0; j < joint; ++j) {
    int rem = j;
    for (int a = n_agents - 1; a >= 0; --a) {
      actions[a] = rem % 3;
      rem /= 3;
    }
    // Each agent collects its pairwise payoff against every other agent.
    for (int i = 0; i < n_agents; ++i) {
      double r = 0;
      for (int k = 0; k < n_agents; ++k)
        if (k != i) r += kPairwise[actions[i]][actions[k]];
      g.payoff[static_cast<size_t>(j) * n_agents + i] = r;
    }
  }
  return g;
}

int joint_index(const MatrixGame& game, std::span<const int> actions) {
  if (static_cast<int>(actions.size()) != game.n_agents)
    throw std::invalid_argument("joint_index: wrong number of actions");
  int idx = 0;
  for (int a : actions) {
    if (a < 0 || a >= game.n_actions)
      throw std::out_of_range("joint_index: action out of range");
    idx = idx * game.n_actions + a;
  }
  return idx;
}

std::vector<int> joint_actions_of(const MatrixGame& game, int joint) {
  if (joint < 0 || joint >= game.n_joint_actions())
    throw std::out_of_range("joint_actions_of: index out of range");
  std::vector<int> actions(game.n_agents);
  for (int a = game.n_agents - 1; a >= 0; --a) {
    actions[a] = joint % game.n_actions;
    joint /= game.n_actions;
  }
  return actions;
}

int encode_state(const MatrixGame& game, std::optional<std::span<const int>> prev) {
  if (!prev) return 0;
  return 1 + joint_index(game, *prev);
}

std::vector<int> decode_state(const MatrixGame& game, int state) {
  if (state <= 0 || state >= game.n_states())
    throw std::out_of_range("decode_state: not a joint-action state");
  return joint_actions_of(game, state - 1);
}

StepResult step(const MatrixGame& game, int state, std::span<const int> joint_action) {
  if (state < 0 || state >= game.n_states())
    throw std::out_of_range("step: state out of range");
  int j = joint_index(game, joint_action);
  StepResult r;
  r.next_state = 1 + j;  // transition ignores the current state
  r.rewards.resize(game.n_agents);
  for (int i = 0; i < game.n_agents; ++i) r.rewards[i] = game.reward(j, i);
  return r;
}

}  // namespace metamarl

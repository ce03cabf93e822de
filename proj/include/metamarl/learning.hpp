#pragma once

#include <optional>
#include <vector>

#include "metamarl/games.hpp"
#include "metamarl/policies.hpp"
#include "metamarl/rng.hpp"
#include "metamarl/tape.hpp"

namespace metamarl {

using JointParams = std::vector<PolicyParams>;

struct Trajectory {
  std::vector<int> states;    // H + 1
  std::vector<int> actions;   // H * n_agents
  std::vector<double> rewards;  // H * n_agents

  int action(int t, int agent, int n_agents) const {
    return actions[static_cast<size_t>(t) * n_agents + agent];
  }
  double reward(int t, int agent, int n_agents) const {
    return rewards[static_cast<size_t>(t) * n_agents + agent];
  }
};

// K trajectories plus per-trajectory weights. Sampled batches carry 1/K;
// exact-expectation batches enumerate every action sequence and carry its
// probability under the collection-time policies.
struct TrajectoryBatch {
  int K = 0, H = 0, n_agents = 0;
  bool exact = false;  // weighted enumeration rather than samples
  std::vector<Trajectory> trajectories;
  std::vector<double> weights;
  JointParams snapshot;
};

TrajectoryBatch collect_batch(const MatrixGame& game, const JointParams& joint,
                              int K, int H, Rng& rng);
TrajectoryBatch exact_batch(const MatrixGame& game, const JointParams& joint, int H);

double discounted_return(const Trajectory& traj, double gamma, int agent,
                         int n_agents, int from_t = 0);

// Least-squares value fit on [one-hot(state), t/H, (t/H)^2, (t/H)^3, 1]
// against discounted returns-to-go, ridge 1e-5 (targets centered so the
// intercept is not penalized). Returns fitted values per (trajectory, t).
std::vector<std::vector<double>> linear_baseline(const TrajectoryBatch& batch,
                                                 int agent, double gamma);

// Baseline values as used inside the gradient estimators: the plain fit on
// exact batches (where baselines cancel identically), leave-one-out values
// on sampled batches so that b stays independent of the trajectory it is
// subtracted from and the estimator stays unbiased.
std::vector<std::vector<double>> baseline_values(const TrajectoryBatch& batch,
                                                 int agent, double gamma);

struct GaeConfig {
  double gamma = 0.96;
  double lam = 0.95;
};

// Standard recursion; values has length H+1 with values[H] the terminal 0.
std::vector<double> gae_advantages(std::span<const double> rewards,
                                   std::span<const double> values,
                                   const GaeConfig& cfg);

// One policy-gradient ascent step for every agent: returns-to-go minus the
// linear baseline, each step weighted by gamma^t.
JointParams inner_loop_update(const JointParams& joint, const TrajectoryBatch& batch,
                              std::span<const double> inner_lrs, double gamma);

// Per-coordinate estimator for a single agent (the step above is
// params + lr * this).
std::vector<double> inner_gradient(const PolicyParams& params, int agent,
                                   const TrajectoryBatch& batch, double gamma);

struct ChainOptions {
  int L = 1;
  int K = 1;
  int H = 1;
  double gamma = 0.96;
  std::vector<double> inner_lrs;  // per agent
  bool exact = false;             // enumerate batches instead of sampling
  int meta_agent = 0;
  std::vector<double> meta_step_lrs;  // optional per-step rate for meta_agent
};

// The Markov chain of joint policies: alternate batch collection and
// inner-loop updates for steps 0..L, snapshots retained.
struct ChainRollout {
  std::vector<JointParams> snapshots;       // L + 1
  std::vector<TrajectoryBatch> batches;     // L + 1
  std::vector<double> inner_lrs;
};

ChainRollout rollout_chain(const MatrixGame& game, const JointParams& joint0,
                           const ChainOptions& opts, Rng& rng);

// Tape-recorded chain: parameters, log-probabilities and inner updates are
// all tape nodes, so quantities measured under late-step policies stay
// differentiable w.r.t. the meta agent's initial parameters.
struct TapeChainStep {
  TrajectoryBatch batch;
  std::vector<std::vector<int>> params;  // [agent][s*A+a] node ids
  std::vector<std::vector<int>> logp;    // [agent][s*A+a] node ids
  // Filled in decentralized mode: inferred peer parameters and the
  // log-probability rows evaluated under them (meta agent entries empty).
  std::vector<std::vector<int>> om_params;
  std::vector<std::vector<int>> om_logp;
};

struct OpponentModelOptions {
  bool enabled = false;
  double eta = 1.0;       // likelihood ascent rate
  int max_iters = 25;
  double tol = 1e-6;
  double alpha_hat = 0;   // assumed peer inner-loop rate; 0 = use the true one
  bool init_from_truth = false;  // testing hook for the degenerate case
};

struct TapeChainOptions : ChainOptions {
  bool learn_inner_lrs = false;
  std::vector<double> log_inner_lrs;  // per step, meta agent; ignored unless learned
  OpponentModelOptions om;
};

struct TapeChain {
  Tape tape;
  MatrixGame game;
  TapeChainOptions opts;
  std::vector<int> meta_params;     // meta agent's phi_0 param nodes
  std::vector<int> lr_params;       // log inner-lr param nodes when learned
  std::vector<TapeChainStep> steps;  // L + 1
  std::vector<JointParams> snapshots;
};

TapeChain record_chain(const MatrixGame& game, const JointParams& joint0,
                       const TapeChainOptions& opts, Rng& rng);

// Tape softmax rows: one log-probability node per (state, action), built
// with the same op sequence as logp_row.
std::vector<int> build_logp_rows(Tape& tape, std::span<const int> param_nodes,
                                 int n_states, int n_actions);

}  // namespace metamarl

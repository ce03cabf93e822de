#pragma once

#include <vector>

#include "metamarl/learning.hpp"
#include "metamarl/policies.hpp"

namespace metamarl {

struct InferredPeer {
  PolicyParams params_hat;
  double fit_log_likelihood = 0;
  int iterations_used = 0;
};

// Likelihood ascent on the observed actions of init_params_hat.agent_id.
// Tabular softmax makes this concave; steps are halved whenever the
// likelihood would decrease, so it is non-decreasing across iterations.
// States never visited in the batch keep their initial logits.
InferredPeer fit_opponent(const TrajectoryBatch& batch,
                          const PolicyParams& init_params_hat, double lr_eta,
                          double tol, int max_iters);

// Same ascent built as tape nodes, chaining from the given parameter nodes
// so the fitted estimate stays differentiable through whatever produced
// them. Returns the updated node ids.
std::vector<int> fit_opponent_tape(Tape& tape, const std::vector<int>& phi_nodes,
                                   const TrajectoryBatch& batch, int peer,
                                   const OpponentModelOptions& om, int n_states,
                                   int n_actions);

}  // namespace metamarl

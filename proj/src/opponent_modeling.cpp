#include "metamarl/opponent_modeling.hpp"

#include <cmath>
#include <stdexcept>

namespace metamarl {

namespace {

struct ActionCounts {
  std::vector<double> per_action;  // [s*A + a], weighted
  std::vector<double> per_state;   // [s]
};

ActionCounts count_actions(const TrajectoryBatch& batch, int peer, int S, int A) {
  ActionCounts c;
  c.per_action.assign(static_cast<size_t>(S) * A, 0.0);
  c.per_state.assign(static_cast<size_t>(S), 0.0);
  for (int k = 0; k < batch.K; ++k) {
    const Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    double w = batch.weights[static_cast<size_t>(k)];
    for (int t = 0; t < batch.H; ++t) {
      int s = traj.states[static_cast<size_t>(t)];
      int a = traj.action(t, peer, batch.n_agents);
      c.per_action[static_cast<size_t>(s) * A + a] += w;
      c.per_state[static_cast<size_t>(s)] += w;
    }
  }
  return c;
}

double log_likelihood(const ActionCounts& c, std::span<const double> logits,
                      int S, int A) {
  double ll = 0;
  std::vector<double> lp(static_cast<size_t>(A));
  for (int s = 0; s < S; ++s) {
    if (c.per_state[static_cast<size_t>(s)] == 0) continue;
    logp_row({&logits[static_cast<size_t>(s) * A], static_cast<size_t>(A)}, lp);
    for (int a = 0; a < A; ++a)
      ll += c.per_action[static_cast<size_t>(s) * A + a] * lp[static_cast<size_t>(a)];
  }
  return ll;
}

// Closed-form likelihood gradient: count(s,a) - count(s) * pi(a|s).
void likelihood_gradient(const ActionCounts& c, std::span<const double> logits,
                         int S, int A, std::span<double> g) {
  std::vector<double> lp(static_cast<size_t>(A));
  for (int s = 0; s < S; ++s) {
    if (c.per_state[static_cast<size_t>(s)] == 0) {
      for (int a = 0; a < A; ++a) g[static_cast<size_t>(s) * A + a] = 0;
      continue;
    }
    logp_row({&logits[static_cast<size_t>(s) * A], static_cast<size_t>(A)}, lp);
    for (int a = 0; a < A; ++a)
      g[static_cast<size_t>(s) * A + a] =
          c.per_action[static_cast<size_t>(s) * A + a] -
          c.per_state[static_cast<size_t>(s)] * std::exp(lp[static_cast<size_t>(a)]);
  }
}

// Shared ascent driver: proposes eta steps, halving until the likelihood
// does not decrease. `apply` commits an accepted step.
template <typename Apply>
int ascend(const ActionCounts& counts, std::vector<double>& logits, int S, int A,
           double eta0, double tol, int max_iters, double* ll_out, Apply&& apply) {
  double ll = log_likelihood(counts, logits, S, A);
  std::vector<double> g(static_cast<size_t>(S) * A);
  std::vector<double> cand(logits.size());
  int used = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    likelihood_gradient(counts, logits, S, A, g);
    double eta = eta0;
    double ll_new = ll;
    bool accepted = false;
    while (eta >= 1e-12) {
      for (size_t i = 0; i < logits.size(); ++i) cand[i] = logits[i] + eta * g[i];
      ll_new = log_likelihood(counts, cand, S, A);
      if (ll_new >= ll - 1e-12) {
        accepted = true;
        break;
      }
      eta /= 2;
    }
    if (!accepted) break;
    apply(eta, g);
    logits = cand;
    ++used;
    bool converged = std::abs(ll_new - ll) < tol;
    ll = ll_new;
    if (converged) break;
  }
  *ll_out = ll;
  return used;
}

}  // namespace

InferredPeer fit_opponent(const TrajectoryBatch& batch,
                          const PolicyParams& init_params_hat, double lr_eta,
                          double tol, int max_iters) {
  if (batch.trajectories.empty())
    throw std::invalid_argument("fit_opponent: empty batch");
  const int S = init_params_hat.n_states;
  const int A = init_params_hat.n_actions;
  ActionCounts counts = count_actions(batch, init_params_hat.agent_id, S, A);
  InferredPeer out;
  out.params_hat = init_params_hat;
  out.iterations_used =
      ascend(counts, out.params_hat.logits, S, A, lr_eta, tol, max_iters,
             &out.fit_log_likelihood, [](double, std::span<const double>) {});
  return out;
}

std::vector<int> fit_opponent_tape(Tape& tape, const std::vector<int>& phi_nodes,
                                   const TrajectoryBatch& batch, int peer,
                                   const OpponentModelOptions& om, int n_states,
                                   int n_actions) {
  if (om.max_iters == 0) return phi_nodes;
  ActionCounts counts = count_actions(batch, peer, n_states, n_actions);
  std::vector<int> cur = phi_nodes;
  std::vector<double> vals(cur.size());
  for (size_t i = 0; i < cur.size(); ++i) vals[i] = tape.value(cur[i]);

  double ll = 0;
  ascend(counts, vals, n_states, n_actions, om.eta, om.tol, om.max_iters, &ll,
         [&](double eta, std::span<const double>) {
           // Rebuild the accepted step from nodes so the chain of estimates
           // stays on tape. Unvisited states keep their nodes.
           std::vector<int> rows = build_logp_rows(tape, cur, n_states, n_actions);
           int eta_node = tape.constant(eta);
           for (int s = 0; s < n_states; ++s) {
             if (counts.per_state[static_cast<size_t>(s)] == 0) continue;
             for (int a = 0; a < n_actions; ++a) {
               size_t i = static_cast<size_t>(s) * n_actions + a;
               int pi = tape.exp_(rows[i]);
               int grad = tape.add(
                   tape.constant(counts.per_action[i]),
                   tape.neg(tape.mul(tape.constant(counts.per_state[static_cast<size_t>(s)]), pi)));
               cur[i] = tape.add(cur[i], tape.mul(eta_node, grad));
             }
           }
         });
  return cur;
}

}  // namespace metamarl

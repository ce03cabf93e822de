#include "metamarl/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace metamarl {
namespace oracle {

namespace {

void check_size(const MatrixGame& game, int H) {
  double total = std::pow(static_cast<double>(game.n_joint_actions()), H);
  if (total > 1e6) throw std::invalid_argument("oracle: enumeration too large");
}

// Plain softmax, no shift; oracle logits stay small.
std::vector<std::vector<double>> probs_of(const PolicyParams& p) {
  std::vector<std::vector<double>> out(static_cast<size_t>(p.n_states));
  for (int s = 0; s < p.n_states; ++s) {
    out[static_cast<size_t>(s)].resize(static_cast<size_t>(p.n_actions));
    double z = 0;
    for (int a = 0; a < p.n_actions; ++a)
      z += std::exp(p.logit(s, a));
    for (int a = 0; a < p.n_actions; ++a)
      out[static_cast<size_t>(s)][static_cast<size_t>(a)] = std::exp(p.logit(s, a)) / z;
  }
  return out;
}

std::vector<std::vector<double>> joint_probs(const MatrixGame& game,
                                             const JointParams& joint) {
  std::vector<std::vector<std::vector<double>>> per_agent;
  for (const PolicyParams& p : joint) per_agent.push_back(probs_of(p));
  std::vector<std::vector<double>> out(static_cast<size_t>(game.n_states()));
  const int J = game.n_joint_actions();
  for (int s = 0; s < game.n_states(); ++s) {
    out[static_cast<size_t>(s)].resize(static_cast<size_t>(J));
    for (int j = 0; j < J; ++j) {
      std::vector<int> acts = joint_actions_of(game, j);
      double p = 1;
      for (int a = 0; a < game.n_agents; ++a)
        p *= per_agent[static_cast<size_t>(a)][static_cast<size_t>(s)]
                      [static_cast<size_t>(acts[static_cast<size_t>(a)])];
      out[static_cast<size_t>(s)][static_cast<size_t>(j)] = p;
    }
  }
  return out;
}

void enumerate_rec(const MatrixGame& game,
                   const std::vector<std::vector<double>>& jp, int H, int t, int s,
                   double prob, Trajectory& cur, ExactDistribution& out) {
  if (t == H) {
    out.trajectories.push_back(cur);
    out.probabilities.push_back(prob);
    return;
  }
  const int J = game.n_joint_actions();
  for (int j = 0; j < J; ++j) {
    std::vector<int> acts = joint_actions_of(game, j);
    cur.actions.insert(cur.actions.end(), acts.begin(), acts.end());
    for (int a = 0; a < game.n_agents; ++a) cur.rewards.push_back(game.reward(j, a));
    cur.states.push_back(1 + j);
    enumerate_rec(game, jp, H, t + 1, 1 + j,
                  prob * jp[static_cast<size_t>(s)][static_cast<size_t>(j)], cur, out);
    cur.states.pop_back();
    cur.rewards.resize(cur.rewards.size() - static_cast<size_t>(game.n_agents));
    cur.actions.resize(cur.actions.size() - static_cast<size_t>(game.n_agents));
  }
}

}  // namespace

ExactDistribution enumerate_trajectories(const MatrixGame& game,
                                         const JointParams& joint, int H) {
  check_size(game, H);
  ExactDistribution out;
  std::vector<std::vector<double>> jp = joint_probs(game, joint);
  Trajectory cur;
  cur.states.push_back(0);
  enumerate_rec(game, jp, H, 0, 0, 1.0, cur, out);
  return out;
}

double exact_value(const MatrixGame& game, const JointParams& joint, int H,
                   double gamma, int agent) {
  std::vector<std::vector<double>> jp = joint_probs(game, joint);
  const int S = game.n_states();
  const int J = game.n_joint_actions();
  std::vector<double> v(static_cast<size_t>(S), 0.0), next(static_cast<size_t>(S));
  for (int t = H - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double acc = 0;
      for (int j = 0; j < J; ++j)
        acc += jp[static_cast<size_t>(s)][static_cast<size_t>(j)] *
               (game.reward(j, agent) + gamma * v[static_cast<size_t>(1 + j)]);
      next[static_cast<size_t>(s)] = acc;
    }
    std::swap(v, next);
  }
  return v[0];
}

ExactQTable exact_q_table(const MatrixGame& game, const JointParams& joint, int H,
                          double gamma) {
  std::vector<std::vector<double>> jp = joint_probs(game, joint);
  const int S = game.n_states();
  const int J = game.n_joint_actions();
  ExactQTable out;
  out.horizon = H;
  out.q.assign(static_cast<size_t>(game.n_agents),
               std::vector<double>(static_cast<size_t>(S) * J, 0.0));
  for (int agent = 0; agent < game.n_agents; ++agent) {
    std::vector<double> v(static_cast<size_t>(S), 0.0), next(static_cast<size_t>(S));
    // v holds the state value with (H - 1 - t) steps remaining after acting.
    for (int t = H - 1; t >= 0; --t) {
      for (int s = 0; s < S; ++s) {
        double acc = 0;
        for (int j = 0; j < J; ++j)
          acc += jp[static_cast<size_t>(s)][static_cast<size_t>(j)] *
                 (game.reward(j, agent) + gamma * v[static_cast<size_t>(1 + j)]);
        next[static_cast<size_t>(s)] = acc;
      }
      if (t == 0) {
        for (int s = 0; s < S; ++s)
          for (int j = 0; j < J; ++j)
            out.q[static_cast<size_t>(agent)][static_cast<size_t>(s) * J + j] =
                game.reward(j, agent) + gamma * v[static_cast<size_t>(1 + j)];
      }
      std::swap(v, next);
    }
  }
  return out;
}

std::vector<double> exact_return_gradient(const MatrixGame& game,
                                          const JointParams& joint, int agent,
                                          int H, double gamma) {
  check_size(game, H);
  ExactDistribution dist = enumerate_trajectories(game, joint, H);
  std::vector<std::vector<double>> probs = probs_of(joint[static_cast<size_t>(agent)]);
  const int A = game.n_actions;
  std::vector<double> g(joint[static_cast<size_t>(agent)].logits.size(), 0.0);
  for (size_t i = 0; i < dist.trajectories.size(); ++i) {
    const Trajectory& traj = dist.trajectories[i];
    double G = discounted_return(traj, gamma, agent, game.n_agents);
    double pG = dist.probabilities[i] * G;
    for (int t = 0; t < H; ++t) {
      int s = traj.states[static_cast<size_t>(t)];
      int a = traj.action(t, agent, game.n_agents);
      for (int a2 = 0; a2 < A; ++a2) {
        double ind = (a2 == a) ? 1.0 : 0.0;
        g[static_cast<size_t>(s) * A + a2] +=
            pG * (ind - probs[static_cast<size_t>(s)][static_cast<size_t>(a2)]);
      }
    }
  }
  return g;
}

JointParams exact_inner_update(const MatrixGame& game, const JointParams& joint,
                               std::span<const double> alphas, int H, double gamma) {
  JointParams out = joint;
  for (int a = 0; a < game.n_agents; ++a) {
    if (alphas[static_cast<size_t>(a)] == 0) continue;
    std::vector<double> g = exact_return_gradient(game, joint, a, H, gamma);
    for (size_t c = 0; c < g.size(); ++c)
      out[static_cast<size_t>(a)].logits[c] += alphas[static_cast<size_t>(a)] * g[c];
  }
  return out;
}

double exact_meta_value(const MatrixGame& game, const JointParams& joint0,
                        std::span<const double> alphas, int L, int H, double gamma,
                        int agent) {
  if (L > 2) throw std::invalid_argument("exact_meta_value: L must be <= 2");
  JointParams cur = joint0;
  double total = 0;
  for (int l = 0; l < L; ++l) {
    cur = exact_inner_update(game, cur, alphas, H, gamma);
    total += exact_value(game, cur, H, gamma, agent);
  }
  return total;
}

std::vector<double> finite_diff_meta_grad(const MatrixGame& game,
                                          const JointParams& joint0,
                                          std::span<const double> alphas, int L,
                                          int H, double gamma, int agent,
                                          double h) {
  std::vector<double> g(joint0[static_cast<size_t>(agent)].logits.size());
  for (size_t c = 0; c < g.size(); ++c) {
    JointParams plus = joint0;
    JointParams minus = joint0;
    plus[static_cast<size_t>(agent)].logits[c] += h;
    minus[static_cast<size_t>(agent)].logits[c] -= h;
    double fp = exact_meta_value(game, plus, alphas, L, H, gamma, agent);
    double fm = exact_meta_value(game, minus, alphas, L, H, gamma, agent);
    g[c] = (fp - fm) / (2 * h);
  }
  return g;
}

}  // namespace oracle
}  // namespace metamarl

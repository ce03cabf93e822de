#include "metamarl/learning.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "metamarl/opponent_modeling.hpp"

namespace metamarl {

namespace {

// Per-agent action probabilities for every state, via the canonical logp
// sequence so values agree with the tape rows.
std::vector<std::vector<double>> prob_table(const PolicyParams& p) {
  std::vector<std::vector<double>> table(static_cast<size_t>(p.n_states));
  std::vector<double> lp(static_cast<size_t>(p.n_actions));
  for (int s = 0; s < p.n_states; ++s) {
    logp_row({&p.logits[static_cast<size_t>(s) * p.n_actions],
              static_cast<size_t>(p.n_actions)},
             lp);
    table[static_cast<size_t>(s)].resize(static_cast<size_t>(p.n_actions));
    for (int a = 0; a < p.n_actions; ++a)
      table[static_cast<size_t>(s)][static_cast<size_t>(a)] = std::exp(lp[static_cast<size_t>(a)]);
  }
  return table;
}

}  // namespace

TrajectoryBatch collect_batch(const MatrixGame& game, const JointParams& joint,
                              int K, int H, Rng& rng) {
  if (K < 1 || H < 1) throw std::invalid_argument("collect_batch: K and H must be >= 1");
  const int n = game.n_agents;
  std::vector<std::vector<std::vector<double>>> probs;
  probs.reserve(static_cast<size_t>(n));
  for (const PolicyParams& p : joint) probs.push_back(prob_table(p));

  TrajectoryBatch batch;
  batch.K = K;
  batch.H = H;
  batch.n_agents = n;
  batch.snapshot = joint;
  batch.weights.assign(static_cast<size_t>(K), 1.0 / K);
  batch.trajectories.resize(static_cast<size_t>(K));
  std::vector<int> action(static_cast<size_t>(n));
  for (int k = 0; k < K; ++k) {
    Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    traj.states.reserve(static_cast<size_t>(H) + 1);
    traj.actions.reserve(static_cast<size_t>(H) * n);
    traj.rewards.reserve(static_cast<size_t>(H) * n);
    int s = 0;
    traj.states.push_back(s);
    for (int t = 0; t < H; ++t) {
      for (int a = 0; a < n; ++a)
        action[static_cast<size_t>(a)] =
            sample_index(rng, probs[static_cast<size_t>(a)][static_cast<size_t>(s)].data(),
                         game.n_actions);
      StepResult r = step(game, s, action);
      traj.actions.insert(traj.actions.end(), action.begin(), action.end());
      traj.rewards.insert(traj.rewards.end(), r.rewards.begin(), r.rewards.end());
      s = r.next_state;
      traj.states.push_back(s);
    }
  }
  return batch;
}

TrajectoryBatch exact_batch(const MatrixGame& game, const JointParams& joint, int H) {
  const int n = game.n_agents;
  const int joint_count = game.n_joint_actions();
  double total = std::pow(static_cast<double>(joint_count), H);
  if (total > 1e6)
    throw std::invalid_argument("exact_batch: enumeration too large");
  const int outcomes = static_cast<int>(total + 0.5);

  std::vector<std::vector<std::vector<double>>> probs;
  for (const PolicyParams& p : joint) probs.push_back(prob_table(p));
  // Probability of each joint action per state.
  std::vector<std::vector<double>> joint_prob(static_cast<size_t>(game.n_states()));
  for (int s = 0; s < game.n_states(); ++s) {
    joint_prob[static_cast<size_t>(s)].resize(static_cast<size_t>(joint_count));
    for (int j = 0; j < joint_count; ++j) {
      std::vector<int> acts = joint_actions_of(game, j);
      double p = 1;
      for (int a = 0; a < n; ++a)
        p *= probs[static_cast<size_t>(a)][static_cast<size_t>(s)]
                  [static_cast<size_t>(acts[static_cast<size_t>(a)])];
      joint_prob[static_cast<size_t>(s)][static_cast<size_t>(j)] = p;
    }
  }

  TrajectoryBatch batch;
  batch.K = outcomes;
  batch.H = H;
  batch.n_agents = n;
  batch.exact = true;
  batch.snapshot = joint;
  batch.trajectories.resize(static_cast<size_t>(outcomes));
  batch.weights.resize(static_cast<size_t>(outcomes));
  std::vector<int> seq(static_cast<size_t>(H), 0);
  for (int k = 0; k < outcomes; ++k) {
    Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    int s = 0;
    double p = 1;
    traj.states.push_back(s);
    for (int t = 0; t < H; ++t) {
      int j = seq[static_cast<size_t>(t)];
      p *= joint_prob[static_cast<size_t>(s)][static_cast<size_t>(j)];
      std::vector<int> acts = joint_actions_of(game, j);
      traj.actions.insert(traj.actions.end(), acts.begin(), acts.end());
      for (int a = 0; a < n; ++a) traj.rewards.push_back(game.reward(j, a));
      s = 1 + j;
      traj.states.push_back(s);
    }
    batch.weights[static_cast<size_t>(k)] = p;
    // odometer over joint-action sequences
    for (int t = H - 1; t >= 0; --t) {
      if (++seq[static_cast<size_t>(t)] < joint_count) break;
      seq[static_cast<size_t>(t)] = 0;
    }
  }
  return batch;
}

double discounted_return(const Trajectory& traj, double gamma, int agent,
                         int n_agents, int from_t) {
  const int H = static_cast<int>(traj.rewards.size()) / n_agents;
  double g = 0;
  double w = 1;
  for (int t = from_t; t < H; ++t) {
    g += w * traj.reward(t, agent, n_agents);
    w *= gamma;
  }
  return g;
}

namespace {

constexpr double kRidge = 1e-5;

struct BaselineData {
  int d = 0;
  // per-trajectory sufficient statistics
  std::vector<Eigen::MatrixXd> gram;       // sum_t w f f^T
  std::vector<Eigen::VectorXd> moment;     // sum_t w y f
  std::vector<Eigen::VectorXd> feat_sum;   // sum_t w f
  std::vector<double> w_sum, y_sum;        // sum_t w, sum_t w y
  std::vector<std::vector<Eigen::VectorXd>> features;  // [k][t]
};

BaselineData baseline_data(const TrajectoryBatch& batch, int agent, double gamma) {
  const int H = batch.H;
  const int S = batch.snapshot.front().n_states;
  BaselineData out;
  out.d = S + 4;
  out.gram.assign(static_cast<size_t>(batch.K), Eigen::MatrixXd::Zero(out.d, out.d));
  out.moment.assign(static_cast<size_t>(batch.K), Eigen::VectorXd::Zero(out.d));
  out.feat_sum.assign(static_cast<size_t>(batch.K), Eigen::VectorXd::Zero(out.d));
  out.w_sum.assign(static_cast<size_t>(batch.K), 0.0);
  out.y_sum.assign(static_cast<size_t>(batch.K), 0.0);
  out.features.resize(static_cast<size_t>(batch.K));
  for (int k = 0; k < batch.K; ++k) {
    const Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    double w = batch.weights[static_cast<size_t>(k)];
    double g = 0;
    std::vector<double> togo(static_cast<size_t>(H));
    for (int t = H - 1; t >= 0; --t) {
      g = traj.reward(t, agent, batch.n_agents) + gamma * g;
      togo[static_cast<size_t>(t)] = g;
    }
    out.features[static_cast<size_t>(k)].resize(static_cast<size_t>(H));
    for (int t = 0; t < H; ++t) {
      Eigen::VectorXd f = Eigen::VectorXd::Zero(out.d);
      f[traj.states[static_cast<size_t>(t)]] = 1.0;
      double tau = static_cast<double>(t) / H;
      f[S] = tau;
      f[S + 1] = tau * tau;
      f[S + 2] = tau * tau * tau;
      f[S + 3] = 1.0;
      double y = togo[static_cast<size_t>(t)];
      out.gram[static_cast<size_t>(k)].noalias() += w * f * f.transpose();
      out.moment[static_cast<size_t>(k)].noalias() += w * y * f;
      out.feat_sum[static_cast<size_t>(k)].noalias() += w * f;
      out.w_sum[static_cast<size_t>(k)] += w;
      out.y_sum[static_cast<size_t>(k)] += w * y;
      out.features[static_cast<size_t>(k)][static_cast<size_t>(t)] = std::move(f);
    }
  }
  return out;
}

// Centered ridge solve over a subset of trajectories: fit y - ybar, add the
// mean back when predicting.
struct BaselineFit {
  Eigen::VectorXd beta;
  double y_mean = 0;
  double predict(const Eigen::VectorXd& f) const { return f.dot(beta) + y_mean; }
};

BaselineFit solve_subset(const BaselineData& data, int skip) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(data.d, data.d) * kRidge;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(data.d);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(data.d);
  double W = 0, Y = 0;
  for (size_t k = 0; k < data.gram.size(); ++k) {
    if (static_cast<int>(k) == skip) continue;
    A += data.gram[k];
    b += data.moment[k];
    u += data.feat_sum[k];
    W += data.w_sum[k];
    Y += data.y_sum[k];
  }
  BaselineFit fit;
  fit.y_mean = W > 0 ? Y / W : 0.0;
  fit.beta = A.ldlt().solve(b - fit.y_mean * u);
  return fit;
}

std::vector<std::vector<double>> predict_all(const BaselineData& data,
                                             const TrajectoryBatch& batch,
                                             bool leave_one_out) {
  std::vector<std::vector<double>> values(static_cast<size_t>(batch.K));
  BaselineFit shared;
  if (!leave_one_out) shared = solve_subset(data, -1);
  for (int k = 0; k < batch.K; ++k) {
    BaselineFit local;
    const BaselineFit* fit = &shared;
    if (leave_one_out) {
      local = solve_subset(data, k);
      fit = &local;
    }
    values[static_cast<size_t>(k)].resize(static_cast<size_t>(batch.H));
    for (int t = 0; t < batch.H; ++t)
      values[static_cast<size_t>(k)][static_cast<size_t>(t)] =
          fit->predict(data.features[static_cast<size_t>(k)][static_cast<size_t>(t)]);
  }
  return values;
}

}  // namespace

std::vector<std::vector<double>> linear_baseline(const TrajectoryBatch& batch,
                                                 int agent, double gamma) {
  if (batch.trajectories.empty())
    throw std::invalid_argument("linear_baseline: empty batch");
  BaselineData data = baseline_data(batch, agent, gamma);
  return predict_all(data, batch, /*leave_one_out=*/false);
}

std::vector<std::vector<double>> baseline_values(const TrajectoryBatch& batch,
                                                 int agent, double gamma) {
  if (batch.trajectories.empty())
    throw std::invalid_argument("baseline_values: empty batch");
  BaselineData data = baseline_data(batch, agent, gamma);
  return predict_all(data, batch, /*leave_one_out=*/!batch.exact);
}

std::vector<double> gae_advantages(std::span<const double> rewards,
                                   std::span<const double> values,
                                   const GaeConfig& cfg) {
  const int H = static_cast<int>(rewards.size());
  if (static_cast<int>(values.size()) != H + 1)
    throw std::invalid_argument("gae_advantages: values must have length H+1");
  std::vector<double> adv(static_cast<size_t>(H));
  double acc = 0;
  for (int t = H - 1; t >= 0; --t) {
    double delta = rewards[static_cast<size_t>(t)] +
                   cfg.gamma * values[static_cast<size_t>(t) + 1] -
                   values[static_cast<size_t>(t)];
    acc = delta + cfg.gamma * cfg.lam * acc;
    adv[static_cast<size_t>(t)] = acc;
  }
  return adv;
}

std::vector<double> inner_gradient(const PolicyParams& params, int agent,
                                   const TrajectoryBatch& batch, double gamma) {
  const int S = params.n_states;
  const int A = params.n_actions;
  const int H = batch.H;
  std::vector<std::vector<double>> probs = prob_table(params);
  std::vector<std::vector<double>> baseline = baseline_values(batch, agent, gamma);
  std::vector<double> g(static_cast<size_t>(S) * A, 0.0);
  for (int k = 0; k < batch.K; ++k) {
    const Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    double w = batch.weights[static_cast<size_t>(k)];
    double togo = 0;
    std::vector<double> togos(static_cast<size_t>(H));
    for (int t = H - 1; t >= 0; --t) {
      togo = traj.reward(t, agent, batch.n_agents) + gamma * togo;
      togos[static_cast<size_t>(t)] = togo;
    }
    double disc = 1;
    for (int t = 0; t < H; ++t) {
      int s = traj.states[static_cast<size_t>(t)];
      int a = traj.action(t, agent, batch.n_agents);
      double adv = togos[static_cast<size_t>(t)] -
                   baseline[static_cast<size_t>(k)][static_cast<size_t>(t)];
      double coef = w * disc * adv;
      for (int a2 = 0; a2 < A; ++a2) {
        double ind = (a2 == a) ? 1.0 : 0.0;
        g[static_cast<size_t>(s) * A + a2] +=
            coef * (ind - probs[static_cast<size_t>(s)][static_cast<size_t>(a2)]);
      }
      disc *= gamma;
    }
  }
  return g;
}

JointParams inner_loop_update(const JointParams& joint, const TrajectoryBatch& batch,
                              std::span<const double> inner_lrs, double gamma) {
  JointParams out = joint;
  for (size_t a = 0; a < joint.size(); ++a) {
    if (inner_lrs[a] == 0) continue;
    std::vector<double> g = inner_gradient(joint[a], static_cast<int>(a), batch, gamma);
    for (size_t c = 0; c < g.size(); ++c)
      out[a].logits[c] = joint[a].logits[c] + inner_lrs[a] * g[c];
  }
  return out;
}

ChainRollout rollout_chain(const MatrixGame& game, const JointParams& joint0,
                           const ChainOptions& opts, Rng& rng) {
  if (opts.L < 1) throw std::invalid_argument("rollout_chain: L must be >= 1");
  ChainRollout chain;
  chain.inner_lrs.assign(opts.inner_lrs.begin(), opts.inner_lrs.end());
  JointParams cur = joint0;
  std::vector<double> lrs(opts.inner_lrs.begin(), opts.inner_lrs.end());
  for (int l = 0; l <= opts.L; ++l) {
    TrajectoryBatch batch = opts.exact ? exact_batch(game, cur, opts.H)
                                       : collect_batch(game, cur, opts.K, opts.H, rng);
    chain.snapshots.push_back(cur);
    chain.batches.push_back(batch);
    if (l < opts.L) {
      if (!opts.meta_step_lrs.empty())
        lrs[static_cast<size_t>(opts.meta_agent)] =
            opts.meta_step_lrs[static_cast<size_t>(l)];
      cur = inner_loop_update(cur, batch, lrs, opts.gamma);
    }
  }
  return chain;
}

std::vector<int> build_logp_rows(Tape& tape, std::span<const int> param_nodes,
                                 int n_states, int n_actions) {
  std::vector<int> rows(static_cast<size_t>(n_states) * n_actions);
  std::vector<int> shifted(static_cast<size_t>(n_actions));
  std::vector<int> exps(static_cast<size_t>(n_actions));
  for (int s = 0; s < n_states; ++s) {
    double m = tape.value(param_nodes[static_cast<size_t>(s) * n_actions]);
    for (int a = 1; a < n_actions; ++a)
      m = std::max(m, tape.value(param_nodes[static_cast<size_t>(s) * n_actions + a]));
    int neg_m = tape.constant(-m);
    for (int a = 0; a < n_actions; ++a) {
      shifted[static_cast<size_t>(a)] =
          tape.add(param_nodes[static_cast<size_t>(s) * n_actions + a], neg_m);
      exps[static_cast<size_t>(a)] = tape.exp_(shifted[static_cast<size_t>(a)]);
    }
    int total = exps[0];
    for (int a = 1; a < n_actions; ++a) total = tape.add(total, exps[static_cast<size_t>(a)]);
    int neg_lse = tape.neg(tape.log_(total));
    for (int a = 0; a < n_actions; ++a)
      rows[static_cast<size_t>(s) * n_actions + a] =
          tape.add(shifted[static_cast<size_t>(a)], neg_lse);
  }
  return rows;
}

namespace {

// Coefficients of the two box families in the inner surrogate: the
// cumulative box carries gamma^t * r_t, the per-step box subtracts the
// baseline at its own step only.
struct InnerCoefs {
  std::vector<double> on_cum;   // [k*H + t]
  std::vector<double> on_step;  // [k*H + t]
};

InnerCoefs inner_coefs(const TrajectoryBatch& batch, int agent, double gamma) {
  InnerCoefs c;
  const int H = batch.H;
  c.on_cum.resize(static_cast<size_t>(batch.K) * H);
  c.on_step.resize(static_cast<size_t>(batch.K) * H);
  std::vector<std::vector<double>> baseline = baseline_values(batch, agent, gamma);
  for (int k = 0; k < batch.K; ++k) {
    double w = batch.weights[static_cast<size_t>(k)];
    double disc = 1;
    for (int t = 0; t < H; ++t) {
      size_t i = static_cast<size_t>(k) * H + t;
      c.on_cum[i] = w * disc *
                    batch.trajectories[static_cast<size_t>(k)].reward(t, agent, batch.n_agents);
      c.on_step[i] = -w * disc * baseline[static_cast<size_t>(k)][static_cast<size_t>(t)];
      disc *= gamma;
    }
  }
  return c;
}

// Shared per-step box structure: one joint log-prob node and one cumulative
// node per (trajectory, t). `rows` selects which parameter estimate each
// agent's log-probabilities come from.
struct StepBoxes {
  std::vector<int> box_step;  // [k*H + t]
  std::vector<int> box_cum;
};

StepBoxes build_step_boxes(Tape& tape, const TrajectoryBatch& batch,
                           const std::vector<std::vector<int>>& rows, int n_actions) {
  StepBoxes out;
  const int H = batch.H;
  const int n = batch.n_agents;
  out.box_step.resize(static_cast<size_t>(batch.K) * H);
  out.box_cum.resize(static_cast<size_t>(batch.K) * H);
  std::vector<int> parts(static_cast<size_t>(n));
  for (int k = 0; k < batch.K; ++k) {
    const Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    int cum = -1;
    for (int t = 0; t < H; ++t) {
      int s = traj.states[static_cast<size_t>(t)];
      for (int a = 0; a < n; ++a)
        parts[static_cast<size_t>(a)] =
            rows[static_cast<size_t>(a)]
                [static_cast<size_t>(s) * n_actions + traj.action(t, a, n)];
      int wt = tape.sum(parts);
      cum = (t == 0) ? wt : tape.add(cum, wt);
      size_t i = static_cast<size_t>(k) * H + t;
      int one[] = {wt};
      out.box_step[i] = tape.magic_box(one);
      int onec[] = {cum};
      out.box_cum[i] = tape.magic_box(onec);
    }
  }
  return out;
}

std::vector<int> surrogate_gradient(Tape& tape, const StepBoxes& boxes,
                                    const InnerCoefs& coefs,
                                    std::span<const int> wrt,
                                    std::span<const int> frontier) {
  std::vector<int> terms;
  terms.reserve(coefs.on_cum.size() * 2);
  for (size_t i = 0; i < coefs.on_cum.size(); ++i) {
    if (coefs.on_cum[i] != 0)
      terms.push_back(tape.mul(tape.constant(coefs.on_cum[i]), boxes.box_cum[i]));
    if (coefs.on_step[i] != 0)
      terms.push_back(tape.mul(tape.constant(coefs.on_step[i]), boxes.box_step[i]));
  }
  int objective = terms.empty() ? tape.constant(0.0) : tape.sum(terms);
  return tape.backward_nodes(objective, wrt, frontier);
}

}  // namespace

TapeChain record_chain(const MatrixGame& game, const JointParams& joint0,
                       const TapeChainOptions& opts, Rng& rng) {
  if (opts.L < 1) throw std::invalid_argument("record_chain: L must be >= 1");
  const int n = game.n_agents;
  const int S = game.n_states();
  const int A = game.n_actions;
  TapeChain chain;
  chain.game = game;
  chain.opts = opts;
  Tape& tape = chain.tape;

  // phi_0: the meta agent's table as params, peers as constants.
  std::vector<std::vector<int>> cur(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    cur[static_cast<size_t>(a)].resize(joint0[static_cast<size_t>(a)].logits.size());
    for (size_t c = 0; c < cur[static_cast<size_t>(a)].size(); ++c) {
      double v = joint0[static_cast<size_t>(a)].logits[c];
      cur[static_cast<size_t>(a)][c] =
          (a == opts.meta_agent) ? tape.param(v) : tape.constant(v);
    }
  }
  chain.meta_params = cur[static_cast<size_t>(opts.meta_agent)];

  // Per-step inner learning rates for the meta agent; log-space params when
  // they are being meta-learned.
  std::vector<int> meta_lr(static_cast<size_t>(opts.L));
  for (int l = 0; l < opts.L; ++l) {
    if (opts.learn_inner_lrs) {
      int p = tape.param(opts.log_inner_lrs[static_cast<size_t>(l)]);
      chain.lr_params.push_back(p);
      meta_lr[static_cast<size_t>(l)] = tape.exp_(p);
    } else {
      meta_lr[static_cast<size_t>(l)] =
          tape.constant(opts.inner_lrs[static_cast<size_t>(opts.meta_agent)]);
    }
  }

  // Inferred peer parameters (decentralized mode).
  std::vector<std::vector<int>> om_cur(static_cast<size_t>(n));
  if (opts.om.enabled) {
    for (int a = 0; a < n; ++a) {
      if (a == opts.meta_agent) continue;
      om_cur[static_cast<size_t>(a)].resize(static_cast<size_t>(S) * A);
      for (size_t c = 0; c < om_cur[static_cast<size_t>(a)].size(); ++c)
        om_cur[static_cast<size_t>(a)][c] = tape.constant(
            opts.om.init_from_truth ? joint0[static_cast<size_t>(a)].logits[c] : 0.0);
    }
  }

  for (int l = 0; l <= opts.L; ++l) {
    TapeChainStep st;
    st.params = cur;
    st.logp.resize(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a)
      st.logp[static_cast<size_t>(a)] = build_logp_rows(tape, cur[static_cast<size_t>(a)], S, A);

    // Snapshot of parameter values for this step.
    JointParams snap(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
      snap[static_cast<size_t>(a)] = zero_params(game, a);
      for (size_t c = 0; c < snap[static_cast<size_t>(a)].logits.size(); ++c)
        snap[static_cast<size_t>(a)].logits[c] = tape.value(cur[static_cast<size_t>(a)][c]);
    }
    chain.snapshots.push_back(snap);

    st.batch = opts.exact ? exact_batch(game, snap, opts.H)
                          : collect_batch(game, snap, opts.K, opts.H, rng);

    if (opts.om.enabled) {
      st.om_params.resize(static_cast<size_t>(n));
      st.om_logp.resize(static_cast<size_t>(n));
      for (int a = 0; a < n; ++a) {
        if (a == opts.meta_agent) continue;
        om_cur[static_cast<size_t>(a)] = fit_opponent_tape(
            tape, om_cur[static_cast<size_t>(a)], st.batch, a, opts.om, S, A);
        st.om_params[static_cast<size_t>(a)] = om_cur[static_cast<size_t>(a)];
        st.om_logp[static_cast<size_t>(a)] =
            build_logp_rows(tape, om_cur[static_cast<size_t>(a)], S, A);
      }
    }

    if (l < opts.L) {
      // Frontier: this step's parameter estimates are treated as inputs so
      // each backward pass stays local to the step.
      std::vector<int> frontier;
      for (int a = 0; a < n; ++a)
        frontier.insert(frontier.end(), cur[static_cast<size_t>(a)].begin(),
                        cur[static_cast<size_t>(a)].end());
      if (opts.om.enabled)
        for (int a = 0; a < n; ++a)
          frontier.insert(frontier.end(), om_cur[static_cast<size_t>(a)].begin(),
                          om_cur[static_cast<size_t>(a)].end());

      StepBoxes boxes = build_step_boxes(tape, st.batch, st.logp, A);
      std::vector<std::vector<int>> next(static_cast<size_t>(n));
      for (int a = 0; a < n; ++a) {
        InnerCoefs coefs = inner_coefs(st.batch, a, opts.gamma);
        std::vector<int> adj = surrogate_gradient(tape, boxes, coefs,
                                                  cur[static_cast<size_t>(a)], frontier);
        int lr = (a == opts.meta_agent)
                     ? meta_lr[static_cast<size_t>(l)]
                     : tape.constant(opts.inner_lrs[static_cast<size_t>(a)]);
        next[static_cast<size_t>(a)].resize(adj.size());
        for (size_t c = 0; c < adj.size(); ++c)
          next[static_cast<size_t>(a)][c] =
              tape.add(cur[static_cast<size_t>(a)][c], tape.mul(lr, adj[c]));
      }

      if (opts.om.enabled) {
        // Advance the inferred peers with the same surrogate shape, with the
        // peer log-probabilities evaluated under the inferred parameters.
        std::vector<std::vector<int>> om_rows = st.logp;
        for (int a = 0; a < n; ++a)
          if (a != opts.meta_agent)
            om_rows[static_cast<size_t>(a)] = st.om_logp[static_cast<size_t>(a)];
        StepBoxes om_boxes = build_step_boxes(tape, st.batch, om_rows, A);
        for (int a = 0; a < n; ++a) {
          if (a == opts.meta_agent) continue;
          InnerCoefs coefs = inner_coefs(st.batch, a, opts.gamma);
          std::vector<int> adj = surrogate_gradient(
              tape, om_boxes, coefs, om_cur[static_cast<size_t>(a)], frontier);
          double ahat = opts.om.alpha_hat != 0
                            ? opts.om.alpha_hat
                            : opts.inner_lrs[static_cast<size_t>(a)];
          int lr = tape.constant(ahat);
          std::vector<int> next_om(adj.size());
          for (size_t c = 0; c < adj.size(); ++c)
            next_om[c] = tape.add(om_cur[static_cast<size_t>(a)][c], tape.mul(lr, adj[c]));
          om_cur[static_cast<size_t>(a)] = std::move(next_om);
        }
      }
      cur = std::move(next);
    }
    chain.steps.push_back(std::move(st));
  }
  return chain;
}

}  // namespace metamarl

#include "metamarl/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "metamarl/parallel.hpp"

namespace metamarl {

Method method_from(const std::string& name) {
  if (name == "meta_mapg") return Method::kMetaMapg;
  if (name == "meta_pg") return Method::kMetaPg;
  if (name == "no_own_learning") return Method::kNoOwnLearning;
  if (name == "reinforce") return Method::kReinforce;
  throw ConfigError("unknown method: " + name);
}

EstimatorPath estimator_path_from(const std::string& name) {
  if (name == "score_function") return EstimatorPath::kScoreFunction;
  if (name == "dice_autodiff") return EstimatorPath::kDiceAutodiff;
  throw ConfigError("unknown estimator_path: " + name);
}

double batch_mean_return(const TrajectoryBatch& batch, int agent, double gamma) {
  double v = 0;
  for (int k = 0; k < batch.K; ++k)
    v += batch.weights[static_cast<size_t>(k)] *
         discounted_return(batch.trajectories[static_cast<size_t>(k)], gamma, agent,
                           batch.n_agents);
  return v;
}

std::vector<double> meta_value_estimate(const TapeChain& chain, int agent,
                                        double gamma) {
  std::vector<double> out(static_cast<size_t>(chain.opts.L));
  for (int l = 0; l < chain.opts.L; ++l)
    out[static_cast<size_t>(l)] = batch_mean_return(
        chain.steps[static_cast<size_t>(l) + 1].batch, agent, gamma);
  return out;
}

std::vector<double> meta_value_estimate(const ChainRollout& chain, int agent,
                                        double gamma) {
  std::vector<double> out;
  for (size_t l = 1; l < chain.batches.size(); ++l)
    out.push_back(batch_mean_return(chain.batches[l], agent, gamma));
  return out;
}

namespace {

// Per-(trajectory, step) weights of the outer estimator for one returns
// batch. Sampled chains weight each step by gamma^t * GAE advantage and pair
// it with that step's log-probabilities. Exact chains weight by
// gamma^t * r_t paired with the cumulative log-probabilities, which makes
// the assembled expectation the exact derivative.
struct OuterCoefs {
  std::vector<double> coef;  // [k*H + t]
  double mean_adv = 0;       // sum_k w_k sum_t gamma^t A_t
  bool cumulative = false;
};

OuterCoefs outer_coefs(const TrajectoryBatch& batch, int agent,
                       const GaeConfig& gae, bool exact) {
  OuterCoefs out;
  const int H = batch.H;
  out.coef.resize(static_cast<size_t>(batch.K) * H);
  out.cumulative = exact;
  std::vector<std::vector<double>> baseline;
  if (!exact) baseline = baseline_values(batch, agent, gae.gamma);
  std::vector<double> rewards(static_cast<size_t>(H));
  std::vector<double> values(static_cast<size_t>(H) + 1);
  for (int k = 0; k < batch.K; ++k) {
    const Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    double w = batch.weights[static_cast<size_t>(k)];
    std::vector<double> adv;
    if (exact) {
      adv.resize(static_cast<size_t>(H));
      for (int t = 0; t < H; ++t)
        adv[static_cast<size_t>(t)] = traj.reward(t, agent, batch.n_agents);
    } else {
      for (int t = 0; t < H; ++t) {
        rewards[static_cast<size_t>(t)] = traj.reward(t, agent, batch.n_agents);
        values[static_cast<size_t>(t)] =
            baseline[static_cast<size_t>(k)][static_cast<size_t>(t)];
      }
      values[static_cast<size_t>(H)] = 0;
      adv = gae_advantages(rewards, values, gae);
    }
    double disc = 1;
    for (int t = 0; t < H; ++t) {
      double c = w * disc * adv[static_cast<size_t>(t)];
      out.coef[static_cast<size_t>(k) * H + t] = c;
      out.mean_adv += c;
      disc *= gae.gamma;
    }
  }
  return out;
}

enum class Cat { kCurrent, kOwn, kPeer };

// Tape nodes of one log-probability category over one batch: a per-step
// "live" node (that step's entry, or the running cumulative in exact mode)
// and the weighted whole-batch total used for cross-batch score terms.
struct CatNodes {
  std::vector<int> live;
  int total = -1;
};

CatNodes build_cat(TapeChain& chain, int m, Cat cat, bool cumulative,
                   bool want_total) {
  Tape& tape = chain.tape;
  const TapeChainStep& st = chain.steps[static_cast<size_t>(m)];
  const TrajectoryBatch& batch = st.batch;
  const int n = batch.n_agents;
  const int A = chain.game.n_actions;
  const int meta = chain.opts.meta_agent;
  const bool om = chain.opts.om.enabled;

  CatNodes out;
  out.live.resize(static_cast<size_t>(batch.K) * batch.H);
  std::vector<int> last_cum(static_cast<size_t>(batch.K));
  std::vector<int> parts;
  for (int k = 0; k < batch.K; ++k) {
    const Trajectory& traj = batch.trajectories[static_cast<size_t>(k)];
    int cum = -1;
    for (int t = 0; t < batch.H; ++t) {
      int s = traj.states[static_cast<size_t>(t)];
      int node;
      if (cat == Cat::kPeer) {
        parts.clear();
        for (int a = 0; a < n; ++a) {
          if (a == meta) continue;
          const std::vector<int>& rows =
              om ? st.om_logp[static_cast<size_t>(a)] : st.logp[static_cast<size_t>(a)];
          parts.push_back(rows[static_cast<size_t>(s) * A + traj.action(t, a, n)]);
        }
        node = parts.size() == 1 ? parts.front() : tape.sum(parts);
      } else {
        node = st.logp[static_cast<size_t>(meta)]
                      [static_cast<size_t>(s) * A + traj.action(t, meta, n)];
      }
      cum = (t == 0) ? node : tape.add(cum, node);
      out.live[static_cast<size_t>(k) * batch.H + t] = cumulative ? cum : node;
    }
    last_cum[static_cast<size_t>(k)] = cum;
  }
  if (want_total) {
    std::vector<int> weighted(static_cast<size_t>(batch.K));
    for (int k = 0; k < batch.K; ++k) {
      double w = batch.weights[static_cast<size_t>(k)];
      weighted[static_cast<size_t>(k)] =
          chain.opts.exact
              ? tape.mul(tape.constant(w), last_cum[static_cast<size_t>(k)])
              : last_cum[static_cast<size_t>(k)];
    }
    out.total = tape.sum(weighted);
  }
  return out;
}

struct TermVec {
  std::vector<double> phi;
  std::vector<double> lr;
};

TermVec split_grad(const std::vector<double>& g, size_t phi_dim) {
  TermVec out;
  out.phi.assign(g.begin(), g.begin() + static_cast<long>(phi_dim));
  out.lr.assign(g.begin() + static_cast<long>(phi_dim), g.end());
  return out;
}

void add_into(TermVec& acc, const TermVec& g, double scale = 1.0) {
  if (acc.phi.empty()) {
    acc.phi.assign(g.phi.size(), 0.0);
    acc.lr.assign(g.lr.size(), 0.0);
  }
  for (size_t i = 0; i < g.phi.size(); ++i) acc.phi[i] += scale * g.phi[i];
  for (size_t i = 0; i < g.lr.size(); ++i) acc.lr[i] += scale * g.lr[i];
}

// One weighted-sum expression over live nodes, then a single backward pass.
TermVec weighted_backward(Tape& tape, std::span<const double> coef,
                          std::span<const int> live, std::span<const int> wrt,
                          size_t phi_dim) {
  std::vector<int> terms;
  terms.reserve(coef.size());
  for (size_t i = 0; i < coef.size(); ++i)
    if (coef[i] != 0) terms.push_back(tape.mul(tape.constant(coef[i]), live[i]));
  if (terms.empty()) {
    TermVec z;
    z.phi.assign(phi_dim, 0.0);
    z.lr.assign(wrt.size() - phi_dim, 0.0);
    return z;
  }
  int expr = tape.sum(terms);
  return split_grad(tape.backward_values(expr, wrt), phi_dim);
}

TermVec plain_backward(Tape& tape, int node, std::span<const int> wrt,
                       size_t phi_dim) {
  return split_grad(tape.backward_values(node, wrt), phi_dim);
}

}  // namespace

MetaGradient reinforce_gradient(const TrajectoryBatch& batch0, int agent,
                                const GaeConfig& gae) {
  OuterCoefs coefs = outer_coefs(batch0, agent, gae, /*exact=*/false);
  const PolicyParams& params = batch0.snapshot[static_cast<size_t>(agent)];
  const int A = params.n_actions;
  std::vector<double> g(static_cast<size_t>(params.dim()), 0.0);
  std::vector<double> lp(static_cast<size_t>(A));
  for (int k = 0; k < batch0.K; ++k) {
    const Trajectory& traj = batch0.trajectories[static_cast<size_t>(k)];
    for (int t = 0; t < batch0.H; ++t) {
      double c = coefs.coef[static_cast<size_t>(k) * batch0.H + t];
      if (c == 0) continue;
      int s = traj.states[static_cast<size_t>(t)];
      int a = traj.action(t, agent, batch0.n_agents);
      logp_row({&params.logits[static_cast<size_t>(s) * A], static_cast<size_t>(A)}, lp);
      for (int a2 = 0; a2 < A; ++a2) {
        double ind = (a2 == a) ? 1.0 : 0.0;
        g[static_cast<size_t>(s) * A + a2] +=
            c * (ind - std::exp(lp[static_cast<size_t>(a2)]));
      }
    }
  }
  MetaGradient out;
  out.current_policy = g;
  out.own_learning.assign(g.size(), 0.0);
  out.peer_learning.assign(g.size(), 0.0);
  out.flat = g;
  return out;
}

MetaGradient meta_gradient(TapeChain& chain, int agent_i, const MethodSpec& spec,
                           const GaeConfig& gae) {
  if (agent_i != chain.opts.meta_agent)
    throw std::invalid_argument("meta_gradient: chain was recorded for another agent");
  Tape& tape = chain.tape;
  const int L = chain.opts.L;
  const bool exact = chain.opts.exact;
  const size_t phi_dim = chain.meta_params.size();

  std::vector<int> wrt = chain.meta_params;
  wrt.insert(wrt.end(), chain.lr_params.begin(), chain.lr_params.end());

  MetaGradient out;
  auto zero = [&]() { return std::vector<double>(phi_dim, 0.0); };

  if (spec.method == Method::kReinforce) {
    OuterCoefs coefs0 =
        outer_coefs(chain.steps[0].batch, agent_i, gae, exact);
    CatNodes cat0 = build_cat(chain, 0, Cat::kCurrent, coefs0.cumulative, false);
    TermVec cur = weighted_backward(tape, coefs0.coef, cat0.live, wrt, phi_dim);
    out.current_policy = cur.phi;
    out.own_learning = zero();
    out.peer_learning = zero();
    out.lr_grad = cur.lr;
  } else {
    std::vector<OuterCoefs> coefs(static_cast<size_t>(L) + 1);  // index = batch R
    for (int R = 1; R <= L; ++R)
      coefs[static_cast<size_t>(R)] =
          outer_coefs(chain.steps[static_cast<size_t>(R)].batch, agent_i, gae, exact);
    // crossw[m]: total advantage weight multiplying batch m's score.
    std::vector<double> crossw(static_cast<size_t>(L), 0.0);
    for (int m = 0; m < L; ++m)
      for (int R = m + 1; R <= L; ++R)
        crossw[static_cast<size_t>(m)] += coefs[static_cast<size_t>(R)].mean_adv;

    const bool want_own = spec.method != Method::kNoOwnLearning;
    const bool want_peer = spec.method != Method::kMetaPg;

    CatNodes cur_cat = build_cat(chain, 0, Cat::kCurrent, exact, true);
    std::vector<CatNodes> own_cats(static_cast<size_t>(L) + 1);
    std::vector<CatNodes> peer_cats(static_cast<size_t>(L) + 1);
    for (int m = 1; m <= L; ++m) {
      if (want_own)
        own_cats[static_cast<size_t>(m)] =
            build_cat(chain, m, Cat::kOwn, exact, m < L);
      if (want_peer)
        peer_cats[static_cast<size_t>(m)] =
            build_cat(chain, m, Cat::kPeer, exact, m < L);
    }

    TermVec cur, own, peer;
    if (spec.path == EstimatorPath::kScoreFunction) {
      add_into(cur, plain_backward(tape, cur_cat.total, wrt, phi_dim), crossw[0]);
      for (int R = 1; R <= L; ++R) {
        const OuterCoefs& c = coefs[static_cast<size_t>(R)];
        if (want_own)
          add_into(own,
                   weighted_backward(tape, c.coef,
                                     own_cats[static_cast<size_t>(R)].live, wrt, phi_dim));
        if (want_peer)
          add_into(peer,
                   weighted_backward(tape, c.coef,
                                     peer_cats[static_cast<size_t>(R)].live, wrt, phi_dim));
      }
      for (int m = 1; m < L; ++m) {
        if (want_own)
          add_into(own,
                   plain_backward(tape, own_cats[static_cast<size_t>(m)].total, wrt, phi_dim),
                   crossw[static_cast<size_t>(m)]);
        if (want_peer)
          add_into(peer,
                   plain_backward(tape, peer_cats[static_cast<size_t>(m)].total, wrt, phi_dim),
                   crossw[static_cast<size_t>(m)]);
      }
    } else {
      // Magic-box surrogates, one per term family; each box carries the live
      // node plus the earlier batch totals of its own family, so a single
      // backward pass reassembles the same weighting.
      std::vector<int> terms;
      for (int R = 1; R <= L; ++R)
        if (coefs[static_cast<size_t>(R)].mean_adv != 0) {
          int w[] = {cur_cat.total};
          terms.push_back(tape.mul(tape.constant(coefs[static_cast<size_t>(R)].mean_adv),
                                   tape.magic_box(w)));
        }
      cur = plain_backward(tape, tape.sum(terms), wrt, phi_dim);

      auto boxed_family = [&](const std::vector<CatNodes>& cats) {
        std::vector<int> fam_terms;
        std::vector<int> ws;
        for (int R = 1; R <= L; ++R) {
          const OuterCoefs& c = coefs[static_cast<size_t>(R)];
          const CatNodes& cat = cats[static_cast<size_t>(R)];
          for (size_t i = 0; i < c.coef.size(); ++i) {
            if (c.coef[i] == 0) continue;
            ws.clear();
            ws.push_back(cat.live[i]);
            for (int m = 1; m < R; ++m) ws.push_back(cats[static_cast<size_t>(m)].total);
            fam_terms.push_back(
                tape.mul(tape.constant(c.coef[i]), tape.magic_box(ws)));
          }
        }
        if (fam_terms.empty()) {
          TermVec z;
          z.phi.assign(phi_dim, 0.0);
          z.lr.assign(wrt.size() - phi_dim, 0.0);
          return z;
        }
        return plain_backward(tape, tape.sum(fam_terms), wrt, phi_dim);
      };
      if (want_own) own = boxed_family(own_cats);
      if (want_peer) peer = boxed_family(peer_cats);
    }

    out.current_policy = cur.phi.empty() ? zero() : cur.phi;
    out.own_learning = own.phi.empty() ? zero() : own.phi;
    out.peer_learning = peer.phi.empty() ? zero() : peer.phi;
    out.lr_grad.assign(chain.lr_params.size(), 0.0);
    for (size_t i = 0; i < out.lr_grad.size(); ++i) {
      if (!cur.lr.empty()) out.lr_grad[i] += cur.lr[i];
      if (!own.lr.empty()) out.lr_grad[i] += own.lr[i];
      if (!peer.lr.empty()) out.lr_grad[i] += peer.lr[i];
    }
  }

  out.flat.assign(phi_dim, 0.0);
  for (size_t i = 0; i < phi_dim; ++i)
    out.flat[i] = out.current_policy[i] + out.own_learning[i] + out.peer_learning[i];
  return out;
}

std::vector<double> pcgrad(std::span<const std::vector<double>> grads, Rng& rng) {
  if (grads.empty()) throw std::invalid_argument("pcgrad: no gradients");
  const size_t dim = grads.front().size();
  if (dim == 0) throw std::invalid_argument("pcgrad: zero-length vectors");
  for (const auto& g : grads)
    if (g.size() != dim) throw std::invalid_argument("pcgrad: length mismatch");

  std::vector<size_t> order(grads.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t i = order.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(next_double(rng) * static_cast<double>(i + 1));
    std::swap(order[i], order[j]);
  }

  std::vector<double> mean(dim, 0.0);
  std::vector<double> g(dim);
  for (size_t i = 0; i < grads.size(); ++i) {
    g = grads[i];
    for (size_t jj : order) {
      if (jj == i) continue;
      const std::vector<double>& other = grads[jj];
      double dot = 0, norm2 = 0;
      for (size_t c = 0; c < dim; ++c) {
        dot += g[c] * other[c];
        norm2 += other[c] * other[c];
      }
      if (dot < 0 && norm2 > 0) {
        double scale = dot / norm2;
        for (size_t c = 0; c < dim; ++c) g[c] -= scale * other[c];
      }
    }
    for (size_t c = 0; c < dim; ++c) mean[c] += g[c];
  }
  for (double& v : mean) v /= static_cast<double>(grads.size());
  return mean;
}

MetaParams outer_update(const MetaParams& params, std::span<const double> flat,
                        std::span<const double> lr_grad, double beta) {
  for (double v : flat)
    if (!std::isfinite(v))
      throw std::runtime_error("outer_update: non-finite gradient");
  for (double v : lr_grad)
    if (!std::isfinite(v))
      throw std::runtime_error("outer_update: non-finite learning-rate gradient");
  MetaParams out = params;
  for (size_t i = 0; i < out.phi0.logits.size(); ++i)
    out.phi0.logits[i] += beta * flat[i];
  for (size_t i = 0; i < out.log_inner_lrs.size() && i < lr_grad.size(); ++i)
    out.log_inner_lrs[i] += beta * lr_grad[i];
  return out;
}

// ---------------------------------------------------------------------------
// Training / evaluation loops.

namespace {

struct ChainJob {
  std::vector<int> persona_indices;  // one per peer seat
};

struct ChainOutcome {
  MetaGradient grad;
  std::vector<double> self_returns;  // per chain step 0..L
  std::vector<double> peer_returns;
};

MatrixGame game_for(const ExperimentConfig& cfg) {
  if (cfg.game == "ipd") return make_ipd();
  if (cfg.game == "rps") return make_rps(cfg.n_agents);
  throw ConfigError("meta_train: game must be ipd or rps");
}

JointParams assemble_joint(const MetaParams& params,
                           const Population& pop, const ChainJob& job) {
  JointParams joint;
  PolicyParams meta = params.phi0;
  meta.agent_id = 0;
  joint.push_back(std::move(meta));
  for (size_t p = 0; p < job.persona_indices.size(); ++p) {
    PolicyParams peer = pop.members[static_cast<size_t>(job.persona_indices[p])].params;
    peer.agent_id = static_cast<int>(p) + 1;
    joint.push_back(std::move(peer));
  }
  return joint;
}

template <typename Batches>
void chain_returns(const Batches& batches, int L, int n_agents, double gamma,
                   ChainOutcome& out) {
  out.self_returns.resize(static_cast<size_t>(L) + 1);
  out.peer_returns.resize(static_cast<size_t>(L) + 1);
  for (int l = 0; l <= L; ++l) {
    const TrajectoryBatch& b = batches(l);
    out.self_returns[static_cast<size_t>(l)] = batch_mean_return(b, 0, gamma);
    double peers = 0;
    for (int a = 1; a < n_agents; ++a) peers += batch_mean_return(b, a, gamma);
    out.peer_returns[static_cast<size_t>(l)] = peers / (n_agents - 1);
  }
}

ChainOutcome run_chain_job(const ExperimentConfig& cfg, const MatrixGame& game,
                           const MethodSpec& spec, const MetaParams& params,
                           const Population& pop, const ChainJob& job,
                           std::uint64_t chain_seed, bool need_grad) {
  ChainOutcome out;
  JointParams joint = assemble_joint(params, pop, job);
  Rng rng = make_rng(chain_seed);
  GaeConfig gae{cfg.gamma, cfg.gae_lambda};

  const bool tapeless =
      !need_grad || spec.method == Method::kReinforce;
  if (tapeless) {
    ChainOptions opts;
    opts.L = cfg.L;
    opts.K = cfg.K;
    opts.H = cfg.H;
    opts.gamma = cfg.gamma;
    opts.inner_lrs.assign(static_cast<size_t>(game.n_agents), cfg.inner_lr);
    opts.meta_agent = 0;
    if (cfg.learn_inner_lrs) {
      opts.meta_step_lrs.resize(params.log_inner_lrs.size());
      for (size_t i = 0; i < params.log_inner_lrs.size(); ++i)
        opts.meta_step_lrs[i] = std::exp(params.log_inner_lrs[i]);
    }
    ChainRollout chain = rollout_chain(game, joint, opts, rng);
    chain_returns([&](int l) -> const TrajectoryBatch& {
      return chain.batches[static_cast<size_t>(l)];
    }, cfg.L, game.n_agents, cfg.gamma, out);
    if (need_grad) out.grad = reinforce_gradient(chain.batches[0], 0, gae);
    return out;
  }

  TapeChainOptions opts;
  opts.L = cfg.L;
  opts.K = cfg.K;
  opts.H = cfg.H;
  opts.gamma = cfg.gamma;
  opts.inner_lrs.assign(static_cast<size_t>(game.n_agents), cfg.inner_lr);
  opts.meta_agent = 0;
  opts.learn_inner_lrs = cfg.learn_inner_lrs;
  opts.log_inner_lrs = params.log_inner_lrs;
  opts.om.enabled = cfg.opponent_modeling;
  opts.om.eta = cfg.om_lr;
  opts.om.max_iters = cfg.om_max_iters;
  opts.om.tol = cfg.om_tol;
  opts.om.alpha_hat = cfg.inner_lr;
  TapeChain chain = record_chain(game, joint, opts, rng);
  chain_returns([&](int l) -> const TrajectoryBatch& {
    return chain.steps[static_cast<size_t>(l)].batch;
  }, cfg.L, game.n_agents, cfg.gamma, out);
  out.grad = meta_gradient(chain, 0, spec, gae);
  return out;
}

void emit_chain_rows(std::vector<MetricsRow>& rows, const ExperimentConfig& cfg,
                     std::uint64_t seed, const std::string& phase, long iteration,
                     long peer_id, const ChainOutcome& oc) {
  MetricsRow base;
  base.run_id = cfg.run_id.empty() ? cfg.game : cfg.run_id;
  base.method = cfg.opponent_modeling ? cfg.method + "_om" : cfg.method;
  base.seed = seed;
  base.phase = phase;
  base.iteration = iteration;
  base.peer_id = peer_id;
  double auc = 0;
  for (size_t l = 0; l < oc.self_returns.size(); ++l) {
    MetricsRow r = base;
    r.chain_step = static_cast<int>(l);
    r.mean_return_self = oc.self_returns[l];
    r.mean_return_peers = oc.peer_returns[l];
    rows.push_back(r);
    if (l >= 1) auc += oc.self_returns[l];
  }
  MetricsRow summary = base;
  summary.chain_step = -1;
  summary.mean_return_self = oc.self_returns.back();
  summary.mean_return_peers = oc.peer_returns.back();
  summary.auc = auc;
  rows.push_back(summary);
}

// Persona seats for one chain: n_agents - 1 indices drawn from a split.
ChainJob draw_job(std::span<const int> split, int n_peers,
                  Rng& rng) {
  ChainJob job;
  for (int p = 0; p < n_peers; ++p) {
    size_t pick = static_cast<size_t>(next_double(rng) *
                                      static_cast<double>(split.size()));
    if (pick >= split.size()) pick = split.size() - 1;
    job.persona_indices.push_back(split[pick]);
  }
  return job;
}

struct EvalResult {
  double mean_auc = 0;
};

EvalResult evaluate_split(const ExperimentConfig& cfg, const MatrixGame& game,
                          const MethodSpec& spec, const MetaParams& params,
                          const Population& pop, std::span<const int> indices,
                          std::uint64_t master_seed, const char* stream_tag,
                          long iteration, const std::string& phase,
                          std::vector<MetricsRow>& rows) {
  const int n_peers = game.n_agents - 1;
  const int n_chains = static_cast<int>(indices.size());
  std::vector<ChainOutcome> outcomes(static_cast<size_t>(n_chains));
  std::vector<ChainJob> jobs(static_cast<size_t>(n_chains));
  for (int v = 0; v < n_chains; ++v) {
    for (int p = 0; p < n_peers; ++p)
      jobs[static_cast<size_t>(v)].persona_indices.push_back(
          indices[static_cast<size_t>((v + p) % static_cast<int>(indices.size()))]);
  }
  auto failures = run_parallel(n_chains, cfg.workers, [&](int v) {
    outcomes[static_cast<size_t>(v)] = run_chain_job(
        cfg, game, spec, params, pop, jobs[static_cast<size_t>(v)],
        stream_seed(master_seed, stream_tag, static_cast<std::uint64_t>(iteration),
                    static_cast<std::uint64_t>(v)),
        /*need_grad=*/false);
  });
  throw_on_failure(failures);
  EvalResult res;
  for (int v = 0; v < n_chains; ++v) {
    const ChainOutcome& oc = outcomes[static_cast<size_t>(v)];
    double auc = 0;
    for (size_t l = 1; l < oc.self_returns.size(); ++l) auc += oc.self_returns[l];
    res.mean_auc += auc;
    emit_chain_rows(rows, cfg, master_seed, phase, iteration,
                    jobs[static_cast<size_t>(v)].persona_indices.front(), oc);
  }
  res.mean_auc /= n_chains;
  return res;
}

}  // namespace

TrainResult meta_train(const ExperimentConfig& cfg, const Population& pop,
                       std::uint64_t master_seed) {
  MatrixGame game = game_for(cfg);
  MethodSpec spec{method_from(cfg.method), estimator_path_from(cfg.estimator_path)};
  const int n_peers = game.n_agents - 1;

  Rng rng_init = make_rng(stream_seed(master_seed, "init"));
  MetaParams params;
  params.phi0 = zero_params(game, 0);
  for (double& v : params.phi0.logits) v = uniform(rng_init, -0.1, 0.1);
  if (cfg.learn_inner_lrs)
    params.log_inner_lrs.assign(static_cast<size_t>(cfg.L), std::log(cfg.inner_lr));

  TrainResult res;
  res.best_params = params;
  res.best_val_auc = -std::numeric_limits<double>::infinity();
  int stale_validations = 0;

  std::vector<int> val_indices;
  for (int i = 0; i < cfg.val_peers && i < static_cast<int>(pop.val.size()); ++i)
    val_indices.push_back(pop.val[static_cast<size_t>(i)]);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Rng rng_peers = make_rng(stream_seed(master_seed, "peers", iter));
    std::vector<ChainJob> jobs(static_cast<size_t>(cfg.peers_per_batch));
    for (int s = 0; s < cfg.peers_per_batch; ++s)
      jobs[static_cast<size_t>(s)] = draw_job(pop.train, n_peers, rng_peers);

    std::vector<ChainOutcome> outcomes(static_cast<size_t>(cfg.peers_per_batch));
    auto failures = run_parallel(cfg.peers_per_batch, cfg.workers, [&](int s) {
      outcomes[static_cast<size_t>(s)] = run_chain_job(
          cfg, game, spec, params, pop, jobs[static_cast<size_t>(s)],
          stream_seed(master_seed, "chain", static_cast<std::uint64_t>(iter),
                      static_cast<std::uint64_t>(s)),
          /*need_grad=*/true);
    });
    throw_on_failure(failures);

    std::vector<std::vector<double>> flats;
    std::vector<double> lr_mean(params.log_inner_lrs.size(), 0.0);
    for (int s = 0; s < cfg.peers_per_batch; ++s) {
      const ChainOutcome& oc = outcomes[static_cast<size_t>(s)];
      flats.push_back(oc.grad.flat);
      for (size_t i = 0; i < lr_mean.size() && i < oc.grad.lr_grad.size(); ++i)
        lr_mean[i] += oc.grad.lr_grad[i] / cfg.peers_per_batch;
      emit_chain_rows(res.rows, cfg, master_seed, "train", iter,
                      jobs[static_cast<size_t>(s)].persona_indices.front(), oc);
    }
    Rng rng_pc = make_rng(stream_seed(master_seed, "pcgrad", iter));
    std::vector<double> agg = pcgrad(flats, rng_pc);
    params = outer_update(params, agg, lr_mean, cfg.outer_lr);

    bool last_iter = iter + 1 == cfg.max_iters;
    if (!val_indices.empty() &&
        ((iter + 1) % cfg.validate_every == 0 || last_iter)) {
      EvalResult val = evaluate_split(cfg, game, spec, params, pop, val_indices,
                                      master_seed, "val", iter, "val", res.rows);
      if (val.mean_auc > res.best_val_auc) {
        res.best_val_auc = val.mean_auc;
        res.best_params = params;
        res.best_iteration = iter;
        stale_validations = 0;
      } else if (++stale_validations > cfg.patience) {
        break;
      }
    }
  }
  if (res.best_iteration < 0) res.best_params = params;
  return res;
}

TrainResult meta_train_om(const ExperimentConfig& cfg, const Population& pop,
                          std::uint64_t master_seed) {
  ExperimentConfig om_cfg = cfg;
  om_cfg.opponent_modeling = true;
  return meta_train(om_cfg, pop, master_seed);
}

TestResult meta_test(const ExperimentConfig& cfg, const Population& pop,
                     const MetaParams& params, std::uint64_t master_seed) {
  MatrixGame game = game_for(cfg);
  MethodSpec spec{method_from(cfg.method), estimator_path_from(cfg.estimator_path)};
  TestResult res;
  EvalResult ev = evaluate_split(cfg, game, spec, params, pop, pop.test,
                                 master_seed, "test", 0, "test", res.rows);
  res.mean_auc = ev.mean_auc;
  return res;
}

}  // namespace metamarl

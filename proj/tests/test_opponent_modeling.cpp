#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metamarl/games.hpp"
#include "metamarl/meta.hpp"
#include "metamarl/opponent_modeling.hpp"

using namespace metamarl;

namespace {

JointParams random_joint(const MatrixGame& g, Rng& rng) {
  JointParams j;
  for (int a = 0; a < g.n_agents; ++a) {
    PolicyParams p = zero_params(g, a);
    for (double& v : p.logits) v = uniform(rng, -1, 1);
    j.push_back(std::move(p));
  }
  return j;
}

}  // namespace

TEST_CASE("fitting a constant peer concentrates on its action") {
  MatrixGame g = make_ipd();
  JointParams joint;
  joint.push_back(zero_params(g, 0));
  PolicyParams peer = zero_params(g, 1);
  for (int s = 0; s < peer.n_states; ++s) {
    peer.logit(s, 0) = 40;  // always cooperates
    peer.logit(s, 1) = -40;
  }
  joint.push_back(peer);
  Rng rng = make_rng(3);
  TrajectoryBatch batch = collect_batch(g, joint, 16, 20, rng);

  PolicyParams init = zero_params(g, 1);
  InferredPeer fit = fit_opponent(batch, init, 1.0, 1e-9, 200);
  for (int s = 0; s < g.n_states(); ++s) {
    bool visited = false;
    for (const Trajectory& t : batch.trajectories)
      for (int step = 0; step < batch.H; ++step)
        if (t.states[static_cast<size_t>(step)] == s) visited = true;
    if (visited) CHECK(action_probs(fit.params_hat, s)[0] >= 0.99);
  }
}

TEST_CASE("unvisited states keep their initial logits") {
  MatrixGame g = make_ipd();
  JointParams joint;
  joint.push_back(zero_params(g, 0));
  joint.push_back(zero_params(g, 1));
  // single very short batch visits only state 0 and one successor
  Rng rng = make_rng(5);
  TrajectoryBatch batch = collect_batch(g, joint, 1, 1, rng);
  PolicyParams init = zero_params(g, 1);
  init.logit(3, 0) = 0.77;
  InferredPeer fit = fit_opponent(batch, init, 0.5, 1e-9, 50);
  CHECK(fit.params_hat.logit(3, 0) == 0.77);
  CHECK_THROWS(fit_opponent(TrajectoryBatch{}, init, 0.5, 1e-9, 50));
}

TEST_CASE("fitted probabilities approach the empirical frequencies") {
  MatrixGame g = make_ipd();
  JointParams joint;
  joint.push_back(zero_params(g, 0));
  PolicyParams peer = zero_params(g, 1);
  for (int s = 0; s < peer.n_states; ++s) {
    peer.logit(s, 0) = std::log(0.7);
    peer.logit(s, 1) = std::log(0.3);
  }
  joint.push_back(peer);
  Rng rng = make_rng(7);
  TrajectoryBatch batch = collect_batch(g, joint, 256, 20, rng);

  InferredPeer fit = fit_opponent(batch, zero_params(g, 1), 1.0, 1e-10, 500);

  // empirical conditional frequencies are the exact maximizer
  std::vector<double> count(5, 0), count_c(5, 0);
  for (const Trajectory& t : batch.trajectories)
    for (int step = 0; step < batch.H; ++step) {
      int s = t.states[static_cast<size_t>(step)];
      count[static_cast<size_t>(s)] += 1;
      if (t.action(step, 1, 2) == 0) count_c[static_cast<size_t>(s)] += 1;
    }
  for (int s = 0; s < 5; ++s) {
    if (count[static_cast<size_t>(s)] == 0) continue;
    double freq = count_c[static_cast<size_t>(s)] / count[static_cast<size_t>(s)];
    double fitted = action_probs(fit.params_hat, s)[0];
    CHECK(std::abs(fitted - freq) <= 0.05);
  }
}

TEST_CASE("log likelihood is non-decreasing in the iteration budget") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(9);
  JointParams joint = random_joint(g, rng);
  TrajectoryBatch batch = collect_batch(g, joint, 8, 10, rng);
  PolicyParams init = zero_params(g, 1);
  double prev = -1e100;
  for (int iters : {0, 1, 2, 4, 8, 16, 32}) {
    InferredPeer fit = fit_opponent(batch, init, 2.0, 0.0, iters);
    CHECK(fit.fit_log_likelihood >= prev - 1e-12);
    prev = fit.fit_log_likelihood;
  }
}

TEST_CASE("decentralized chains produce a live peer-learning term") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(11);
  JointParams joint = random_joint(g, rng);
  TapeChainOptions opts;
  opts.L = 2;
  opts.K = 6;
  opts.H = 5;
  opts.gamma = 0.96;
  opts.inner_lrs = {0.3, 0.3};
  opts.om.enabled = true;
  opts.om.eta = 1.0;
  opts.om.max_iters = 20;
  opts.om.tol = 1e-8;
  opts.om.alpha_hat = 0.3;
  Rng r = make_rng(2);
  TapeChain chain = record_chain(g, joint, opts, r);
  GaeConfig gae{0.96, 0.95};
  MetaGradient mg = meta_gradient(
      chain, 0, {Method::kMetaMapg, EstimatorPath::kDiceAutodiff}, gae);
  double total = 0;
  for (double v : mg.peer_learning) total += std::abs(v);
  CHECK(total > 0.0);
}

TEST_CASE("zero-iteration fits from the truth reproduce centralized gradients") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(13);
  JointParams joint = random_joint(g, rng);
  GaeConfig gae{0.96, 1.0};
  MethodSpec spec{Method::kMetaMapg, EstimatorPath::kScoreFunction};

  TapeChainOptions opts;
  opts.L = 2;
  opts.K = 1;
  opts.H = 2;
  opts.gamma = 0.96;
  opts.inner_lrs = {0.5, 0.5};
  opts.exact = true;

  Rng r1 = make_rng(1);
  TapeChain centralized = record_chain(g, joint, opts, r1);
  MetaGradient want = meta_gradient(centralized, 0, spec, gae);

  TapeChainOptions om = opts;
  om.om.enabled = true;
  om.om.max_iters = 0;
  om.om.init_from_truth = true;
  om.om.alpha_hat = 0.5;
  Rng r2 = make_rng(1);
  TapeChain decentralized = record_chain(g, joint, om, r2);
  MetaGradient got = meta_gradient(decentralized, 0, spec, gae);

  for (size_t c = 0; c < want.flat.size(); ++c) {
    double denom = std::max(std::abs(want.flat[c]), 1e-9);
    CHECK(std::abs(got.flat[c] - want.flat[c]) / denom < 1e-6);
  }
}

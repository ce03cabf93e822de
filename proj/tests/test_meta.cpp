#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metamarl/games.hpp"
#include "metamarl/meta.hpp"
#include "metamarl/oracle.hpp"

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

TapeChain sampled_chain(const MatrixGame& g, const JointParams& joint, int L,
                        int K, int H, std::uint64_t seed, bool om = false) {
  TapeChainOptions opts;
  opts.L = L;
  opts.K = K;
  opts.H = H;
  opts.gamma = 0.96;
  opts.inner_lrs.assign(static_cast<size_t>(g.n_agents), 0.3);
  opts.om.enabled = om;
  Rng rng = make_rng(seed);
  return record_chain(g, joint, opts, rng);
}

double rel_diff(double a, double b, double floor = 1e-9) {
  double denom = std::max(std::abs(b), floor);
  return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("term decomposition sums to the flat gradient") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(1);
  JointParams joint = random_joint(g, rng);
  TapeChain chain = sampled_chain(g, joint, 2, 6, 5, 3);
  GaeConfig gae{0.96, 0.95};
  for (EstimatorPath path :
       {EstimatorPath::kDiceAutodiff, EstimatorPath::kScoreFunction}) {
    MetaGradient mg = meta_gradient(chain, 0, {Method::kMetaMapg, path}, gae);
    for (size_t c = 0; c < mg.flat.size(); ++c)
      CHECK(std::abs(mg.flat[c] - (mg.current_policy[c] + mg.own_learning[c] +
                                   mg.peer_learning[c])) < 1e-10);
  }
}

TEST_CASE("meta_pg is meta_mapg with the peer term zeroed, bit for bit") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(2);
  JointParams joint = random_joint(g, rng);
  TapeChain chain = sampled_chain(g, joint, 2, 6, 5, 7);
  GaeConfig gae{0.96, 0.95};
  for (EstimatorPath path :
       {EstimatorPath::kDiceAutodiff, EstimatorPath::kScoreFunction}) {
    MetaGradient full = meta_gradient(chain, 0, {Method::kMetaMapg, path}, gae);
    MetaGradient pg = meta_gradient(chain, 0, {Method::kMetaPg, path}, gae);
    for (size_t c = 0; c < full.flat.size(); ++c) {
      CHECK(pg.peer_learning[c] == 0.0);
      CHECK(pg.current_policy[c] == full.current_policy[c]);
      CHECK(pg.own_learning[c] == full.own_learning[c]);
      CHECK(pg.flat[c] == full.current_policy[c] + full.own_learning[c]);
    }
    MetaGradient no_own =
        meta_gradient(chain, 0, {Method::kNoOwnLearning, path}, gae);
    for (size_t c = 0; c < full.flat.size(); ++c) {
      CHECK(no_own.own_learning[c] == 0.0);
      CHECK(no_own.peer_learning[c] == full.peer_learning[c]);
    }
  }
}

TEST_CASE("estimator paths agree on recorded chains") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(3);
  GaeConfig gae{0.96, 0.95};
  for (int trial = 0; trial < 4; ++trial) {
    JointParams joint = random_joint(g, rng);
    TapeChain chain = sampled_chain(g, joint, 2, 8, 6, 100 + trial);
    MetaGradient a =
        meta_gradient(chain, 0, {Method::kMetaMapg, EstimatorPath::kScoreFunction}, gae);
    MetaGradient b =
        meta_gradient(chain, 0, {Method::kMetaMapg, EstimatorPath::kDiceAutodiff}, gae);
    for (size_t c = 0; c < a.flat.size(); ++c)
      CHECK(rel_diff(a.flat[c], b.flat[c]) < 1e-6);
  }
}

TEST_CASE("exact-mode estimator matches finite differences of the oracle") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(4);
  JointParams joint = random_joint(g, rng);
  std::vector<double> alphas = {0.7, 0.7};
  TapeChainOptions opts;
  opts.L = 1;
  opts.K = 1;
  opts.H = 2;
  opts.gamma = 0.96;
  opts.inner_lrs = alphas;
  opts.exact = true;
  Rng r = make_rng(1);
  TapeChain chain = record_chain(g, joint, opts, r);
  std::vector<double> fd =
      oracle::finite_diff_meta_grad(g, joint, alphas, 1, 2, 0.96, 0, 1e-5);
  GaeConfig gae{0.96, 1.0};
  MetaGradient mg = meta_gradient(
      chain, 0, {Method::kMetaMapg, EstimatorPath::kDiceAutodiff}, gae);
  for (size_t c = 0; c < fd.size(); ++c) {
    if (std::abs(fd[c]) < 1e-8)
      CHECK(std::abs(mg.flat[c] - fd[c]) < 1e-8);
    else
      CHECK(rel_diff(mg.flat[c], fd[c]) < 1e-5);
  }
}

TEST_CASE("reinforce uses only the first batch and ignores the estimator path") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(5);
  JointParams joint = random_joint(g, rng);
  TapeChain chain = sampled_chain(g, joint, 2, 6, 5, 11);
  GaeConfig gae{0.96, 0.95};
  MetaGradient a = meta_gradient(
      chain, 0, {Method::kReinforce, EstimatorPath::kDiceAutodiff}, gae);
  MetaGradient b = meta_gradient(
      chain, 0, {Method::kReinforce, EstimatorPath::kScoreFunction}, gae);
  CHECK(a.flat == b.flat);
  for (double v : a.own_learning) CHECK(v == 0.0);
  for (double v : a.peer_learning) CHECK(v == 0.0);

  // and the tape-free path computes the same estimator
  MetaGradient c = reinforce_gradient(chain.steps[0].batch, 0, gae);
  for (size_t i = 0; i < c.flat.size(); ++i)
    CHECK(std::abs(c.flat[i] - a.flat[i]) < 1e-10);
}

TEST_CASE("meta value estimate on a degenerate chain") {
  MatrixGame g = make_ipd();
  for (double& v : g.payoff) v = 0;
  Rng rng = make_rng(6);
  JointParams joint = random_joint(g, rng);
  TapeChain chain = sampled_chain(g, joint, 1, 4, 3, 13);
  std::vector<double> est = meta_value_estimate(chain, 0, 0.96);
  REQUIRE(est.size() == 1);
  CHECK(est[0] == 0.0);
}

TEST_CASE("pcgrad") {
  Rng rng = make_rng(7);
  SUBCASE("orthogonal gradients pass through") {
    std::vector<std::vector<double>> g = {{1, 0}, {0, 1}};
    std::vector<double> out = pcgrad(g, rng);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.5));
  }
  SUBCASE("anti-parallel gradients cancel") {
    std::vector<std::vector<double>> g = {{1, 0}, {-1, 0}};
    std::vector<double> out = pcgrad(g, rng);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[1] == doctest::Approx(0.0));
  }
  SUBCASE("zero dot product is left unchanged") {
    std::vector<std::vector<double>> g = {{1, 1}, {1, -1}};
    std::vector<double> out = pcgrad(g, rng);
    CHECK(out[0] == doctest::Approx(1.0));
    CHECK(out[1] == doctest::Approx(0.0));
  }
  SUBCASE("projected pairs no longer conflict") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::vector<double>> g(3, std::vector<double>(4));
      for (auto& v : g)
        for (double& x : v) x = uniform(rng, -1, 1);
      // project each gradient exactly as the aggregator does, then check
      // pairwise dots against the originals
      for (size_t i = 0; i < g.size(); ++i) {
        std::vector<double> gi = g[i];
        for (size_t j = 0; j < g.size(); ++j) {
          if (i == j) continue;
          double dot = 0, n2 = 0;
          for (size_t c = 0; c < 4; ++c) {
            dot += gi[c] * g[j][c];
            n2 += g[j][c] * g[j][c];
          }
          if (dot < 0) {
            for (size_t c = 0; c < 4; ++c) gi[c] -= dot / n2 * g[j][c];
            double post = 0;
            for (size_t c = 0; c < 4; ++c) post += gi[c] * g[j][c];
            CHECK(post >= -1e-10);
          }
        }
      }
    }
  }
  SUBCASE("errors") {
    std::vector<std::vector<double>> empty;
    CHECK_THROWS(pcgrad(empty, rng));
    std::vector<std::vector<double>> zero_len = {{}};
    CHECK_THROWS(pcgrad(zero_len, rng));
  }
}

TEST_CASE("outer update") {
  MetaParams params;
  params.phi0 = zero_params(make_ipd(), 0);
  params.phi0.logits = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> grad(10, 0.5);
  std::vector<double> none;

  MetaParams still = outer_update(params, grad, none, 0.0);
  CHECK(still.phi0.logits == params.phi0.logits);

  std::vector<double> zeros(10, 0.0);
  MetaParams same = outer_update(params, zeros, none, 0.3);
  CHECK(same.phi0.logits == params.phi0.logits);

  MetaParams moved = outer_update(params, grad, none, 0.1);
  CHECK(moved.phi0.logits[0] == doctest::Approx(1.05));

  std::vector<double> bad(10, std::nan(""));
  CHECK_THROWS_AS(outer_update(params, bad, none, 0.1), std::runtime_error);
}

TEST_CASE("learned inner rates receive gradients through the tape") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(9);
  JointParams joint = random_joint(g, rng);
  TapeChainOptions opts;
  opts.L = 2;
  opts.K = 6;
  opts.H = 4;
  opts.gamma = 0.96;
  opts.inner_lrs = {0.3, 0.3};
  opts.learn_inner_lrs = true;
  opts.log_inner_lrs = {std::log(0.3), std::log(0.3)};
  Rng r = make_rng(15);
  TapeChain chain = record_chain(g, joint, opts, r);
  GaeConfig gae{0.96, 0.95};
  MetaGradient mg = meta_gradient(
      chain, 0, {Method::kMetaMapg, EstimatorPath::kDiceAutodiff}, gae);
  REQUIRE(mg.lr_grad.size() == 2);
  double total = std::abs(mg.lr_grad[0]) + std::abs(mg.lr_grad[1]);
  CHECK(total > 0.0);
}

TEST_CASE("meta_train bookkeeping") {
  ExperimentConfig cfg;
  cfg.game = "ipd";
  cfg.K = 4;
  cfg.H = 4;
  cfg.L = 1;
  cfg.peers_per_batch = 2;
  cfg.max_iters = 0;
  cfg.validate();
  Population pop = ipd_population(1);

  SUBCASE("zero iterations return the initial params") {
    TrainResult res = meta_train(cfg, pop, 5);
    CHECK(res.rows.empty());
    Rng rng = make_rng(stream_seed(5, "init"));
    for (double v : res.best_params.phi0.logits)
      CHECK(v == uniform(rng, -0.1, 0.1));
  }

  SUBCASE("row counts per iteration") {
    cfg.max_iters = 3;
    cfg.validate_every = 100;  // no validation inside 3 iters except the last
    TrainResult res = meta_train(cfg, pop, 5);
    // per iteration: peers_per_batch * (L + 2) training rows; final iteration
    // adds validation rows for val_peers chains
    long train_rows = 0, val_rows = 0;
    for (const MetricsRow& r : res.rows) {
      if (r.phase == "train") ++train_rows;
      if (r.phase == "val") ++val_rows;
    }
    CHECK(train_rows == 3 * cfg.peers_per_batch * (cfg.L + 2));
    CHECK(val_rows == cfg.val_peers * (cfg.L + 2));
    // every summary row's auc equals the sum of its step rows
    for (size_t i = 0; i < res.rows.size(); ++i) {
      if (!res.rows[i].auc) continue;
      double total = 0;
      for (size_t j = i - static_cast<size_t>(cfg.L); j < i; ++j)
        total += res.rows[j].mean_return_self;
      CHECK(std::abs(*res.rows[i].auc - total) < 1e-9);
    }
  }
}

TEST_CASE("meta_test aggregates the test split") {
  ExperimentConfig cfg;
  cfg.game = "ipd";
  cfg.K = 2;
  cfg.H = 3;
  cfg.L = 1;
  cfg.validate();
  Population pop = ipd_population(1);
  MetaParams params;
  params.phi0 = zero_params(make_ipd(), 0);
  TestResult res = meta_test(cfg, pop, params, 3);
  CHECK(res.rows.size() == pop.test.size() * (cfg.L + 2));
  double mean = 0;
  int n = 0;
  for (const MetricsRow& r : res.rows)
    if (r.auc) {
      mean += *r.auc;
      ++n;
    }
  CHECK(n == static_cast<int>(pop.test.size()));
  CHECK(res.mean_auc == doctest::Approx(mean / n).epsilon(1e-12));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metamarl/games.hpp"
#include "metamarl/learning.hpp"
#include "metamarl/meta.hpp"
#include "metamarl/oracle.hpp"

using namespace metamarl;
using namespace metamarl::oracle;

namespace {

JointParams uniform_joint(const MatrixGame& g) {
  JointParams j;
  for (int a = 0; a < g.n_agents; ++a) j.push_back(zero_params(g, a));
  return j;
}

JointParams random_joint(const MatrixGame& g, Rng& rng) {
  JointParams j = uniform_joint(g);
  for (auto& p : j)
    for (double& v : p.logits) v = uniform(rng, -1, 1);
  return j;
}

}  // namespace

TEST_CASE("enumeration basics") {
  MatrixGame g = make_ipd();
  JointParams joint = uniform_joint(g);
  ExactDistribution d = enumerate_trajectories(g, joint, 1);
  REQUIRE(d.trajectories.size() == 4);
  for (double p : d.probabilities) CHECK(p == doctest::Approx(0.25).epsilon(1e-14));

  // near-delta policies concentrate on one outcome
  JointParams delta = joint;
  for (auto& p : delta)
    for (int s = 0; s < p.n_states; ++s) {
      p.logit(s, 0) = 40;
      p.logit(s, 1) = -40;
    }
  ExactDistribution d2 = enumerate_trajectories(g, delta, 2);
  double top = 0;
  for (double p : d2.probabilities) top = std::max(top, p);
  CHECK(top == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng = make_rng(6);
  JointParams r = random_joint(g, rng);
  ExactDistribution d3 = enumerate_trajectories(g, r, 3);
  double total = 0;
  for (double p : d3.probabilities) total += p;
  CHECK(std::abs(total - 1.0) < 1e-12);

  CHECK_THROWS(enumerate_trajectories(g, joint, 11));
}

TEST_CASE("q table satisfies the truncated bellman recursion") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(17);
  JointParams joint = random_joint(g, rng);
  const int H = 3;
  const double gamma = 0.9;
  ExactQTable q3 = exact_q_table(g, joint, H, gamma);
  ExactQTable q2 = exact_q_table(g, joint, H - 1, gamma);

  // joint action probabilities per state, plain softmax
  auto pi = [&](int agent, int s, int a) {
    double z = 0;
    for (int b = 0; b < g.n_actions; ++b)
      z += std::exp(joint[static_cast<size_t>(agent)].logit(s, b));
    return std::exp(joint[static_cast<size_t>(agent)].logit(s, a)) / z;
  };
  const int J = g.n_joint_actions();
  for (int agent = 0; agent < 2; ++agent)
    for (int s = 0; s < g.n_states(); ++s)
      for (int j = 0; j < J; ++j) {
        int s2 = 1 + j;
        double expect = 0;
        for (int j2 = 0; j2 < J; ++j2) {
          std::vector<int> acts = joint_actions_of(g, j2);
          double p = pi(0, s2, acts[0]) * pi(1, s2, acts[1]);
          expect += p * q2.q[static_cast<size_t>(agent)][static_cast<size_t>(s2) * J + j2];
        }
        double want = g.reward(j, agent) + gamma * expect;
        CHECK(std::abs(q3.q[static_cast<size_t>(agent)][static_cast<size_t>(s) * J + j] -
                       want) < 1e-10);
      }

  // and the value function is the policy average of Q at the start state
  double v = exact_value(g, joint, H, gamma, 0);
  double avg = 0;
  for (int j = 0; j < J; ++j) {
    std::vector<int> acts = joint_actions_of(g, j);
    avg += pi(0, 0, acts[0]) * pi(1, 0, acts[1]) *
           q3.q[0][static_cast<size_t>(j)];
  }
  CHECK(std::abs(v - avg) < 1e-12);

  // forward enumeration agrees with backward induction
  ExactDistribution d = enumerate_trajectories(g, joint, H);
  double ev = 0;
  for (size_t i = 0; i < d.trajectories.size(); ++i)
    ev += d.probabilities[i] * discounted_return(d.trajectories[i], gamma, 0, 2);
  CHECK(std::abs(ev - v) < 1e-12);
}

TEST_CASE("exact inner update") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(19);
  JointParams joint = random_joint(g, rng);
  std::vector<double> zeros = {0.0, 0.0};
  JointParams same = exact_inner_update(g, joint, zeros, 2, 0.96);
  CHECK(same[0].logits == joint[0].logits);

  // matches the weighted estimator over the full enumeration
  std::vector<double> alphas = {0.7, 0.7};
  JointParams a = exact_inner_update(g, joint, alphas, 2, 0.96);
  TrajectoryBatch batch = exact_batch(g, joint, 2);
  JointParams b = inner_loop_update(joint, batch, alphas, 0.96);
  for (int agent = 0; agent < 2; ++agent)
    for (size_t c = 0; c < a[static_cast<size_t>(agent)].logits.size(); ++c)
      CHECK(std::abs(a[static_cast<size_t>(agent)].logits[c] -
                     b[static_cast<size_t>(agent)].logits[c]) < 1e-12);
}

TEST_CASE("exact gradient agrees with monte-carlo inner gradients") {
  // 1-state 2-action game, H=1: cheap enough for 1e5 sampled batches
  MatrixGame g;
  g.n_agents = 1;
  g.n_actions = 2;
  g.payoff = {0.2, -0.9};
  JointParams joint;
  PolicyParams p = zero_params(g, 0);
  p.logit(0, 0) = -0.3;
  joint.push_back(p);

  std::vector<double> want = exact_return_gradient(g, joint, 0, 1, 0.96);
  Rng rng = make_rng(55);
  const int n = 100000;
  double mean = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    TrajectoryBatch b = collect_batch(g, joint, 2, 1, rng);
    double gi = inner_gradient(p, 0, b, 0.96)[0];
    double d = gi - mean;
    mean += d / (i + 1);
    m2 += d * (gi - mean);
  }
  double se = std::sqrt(m2 / (n - 1) / n);
  CHECK(std::abs(mean - want[0]) < 3 * se + 1e-12);
}

TEST_CASE("exact meta value") {
  MatrixGame g = make_ipd();
  Rng rng = make_rng(23);
  JointParams joint = random_joint(g, rng);
  std::vector<double> alphas = {0.5, 0.5};

  SUBCASE("zero payoffs give zero") {
    MatrixGame z = g;
    for (double& v : z.payoff) v = 0;
    CHECK(exact_meta_value(z, joint, alphas, 1, 2, 0.96, 0) == 0.0);
  }
  SUBCASE("zero rates collapse to the current value") {
    std::vector<double> zeros = {0.0, 0.0};
    CHECK(exact_meta_value(g, joint, zeros, 1, 2, 0.96, 0) ==
          doctest::Approx(exact_value(g, joint, 2, 0.96, 0)).epsilon(1e-14));
  }
  SUBCASE("matches the estimator-side value in exact mode") {
    TapeChainOptions opts;
    opts.L = 1;
    opts.K = 1;
    opts.H = 2;
    opts.gamma = 0.96;
    opts.inner_lrs = alphas;
    opts.exact = true;
    Rng r = make_rng(1);
    TapeChain chain = record_chain(g, joint, opts, r);
    std::vector<double> est = meta_value_estimate(chain, 0, 0.96);
    double total = 0;
    for (double v : est) total += v;
    CHECK(std::abs(total - exact_meta_value(g, joint, alphas, 1, 2, 0.96, 0)) < 1e-12);
  }
  SUBCASE("size guards") {
    CHECK_THROWS(exact_meta_value(g, joint, alphas, 3, 2, 0.96, 0));
  }
}

TEST_CASE("finite differences: symmetry and order of accuracy") {
  MatrixGame g = make_ipd();
  JointParams joint = uniform_joint(g);  // symmetric start
  std::vector<double> alphas = {0.6, 0.6};
  std::vector<double> grad =
      finite_diff_meta_grad(g, joint, alphas, 1, 2, 0.96, 0, 1e-5);
  // uniform symmetric policies: per-state coordinates mirror each other
  for (int s = 0; s < g.n_states(); ++s)
    CHECK(std::abs(grad[static_cast<size_t>(s) * 2] +
                   grad[static_cast<size_t>(s) * 2 + 1]) < 1e-9);

  Rng rng = make_rng(29);
  JointParams r = random_joint(g, rng);
  std::vector<double> g1 = finite_diff_meta_grad(g, r, alphas, 1, 2, 0.96, 0, 2e-3);
  std::vector<double> g2 = finite_diff_meta_grad(g, r, alphas, 1, 2, 0.96, 0, 1e-3);
  std::vector<double> g4 = finite_diff_meta_grad(g, r, alphas, 1, 2, 0.96, 0, 5e-4);
  // central differences are second order: error shrinks ~4x per halving
  double e1 = 0, e2 = 0;
  for (size_t c = 0; c < g1.size(); ++c) {
    e1 = std::max(e1, std::abs(g1[c] - g4[c]));
    e2 = std::max(e2, std::abs(g2[c] - g4[c]));
  }
  CHECK(e2 < e1 / 2.5);
}

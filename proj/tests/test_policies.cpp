#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metamarl/games.hpp"
#include "metamarl/policies.hpp"

using namespace metamarl;

TEST_CASE("action probs are a softmax of the logits row") {
  MatrixGame g = make_ipd();
  PolicyParams p = zero_params(g, 0);
  std::vector<double> probs = action_probs(p, 0);
  CHECK(probs[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-14));

  p.logit(1, 0) = std::log(3.0);
  probs = action_probs(p, 1);
  CHECK(probs[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng = make_rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    for (int s = 0; s < p.n_states; ++s)
      for (int a = 0; a < p.n_actions; ++a) p.logit(s, a) = uniform(rng, -30, 30);
    for (int s = 0; s < p.n_states; ++s) {
      probs = action_probs(p, s);
      double total = 0;
      for (double v : probs) {
        CHECK(v > 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("sampling follows the distribution and the log prob matches") {
  MatrixGame g = make_ipd();
  PolicyParams p = zero_params(g, 0);
  p.logit(0, 0) = 50;
  p.logit(0, 1) = -50;
  Rng rng = make_rng(9);
  for (int i = 0; i < 10000; ++i) CHECK(sample_action(p, 0, rng).action == 0);

  PolicyParams u = zero_params(g, 0);
  int count0 = 0;
  for (int i = 0; i < 10000; ++i) {
    SampledAction s = sample_action(u, 0, rng);
    if (s.action == 0) ++count0;
    CHECK(std::abs(std::exp(s.log_prob) - action_probs(u, 0)[static_cast<size_t>(s.action)]) <
          1e-12);
  }
  CHECK(count0 / 10000.0 == doctest::Approx(0.5).epsilon(0.04));

  Rng a = make_rng(123), b = make_rng(123);
  for (int i = 0; i < 100; ++i)
    CHECK(sample_action(u, 0, a).action == sample_action(u, 0, b).action);
}

TEST_CASE("persona probability ranges") {
  MatrixGame ipd = make_ipd();
  MatrixGame rps = make_rps(2);
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    PolicyParams coop = sample_persona(ipd, {PersonaKind::kCooperating, 0}, rng);
    PolicyParams defect = sample_persona(ipd, {PersonaKind::kDefecting, 0}, rng);
    for (int s = 0; s < ipd.n_states(); ++s) {
      CHECK(action_probs(coop, s)[0] >= 0.5);
      CHECK(action_probs(coop, s)[0] <= 1.0);
      CHECK(action_probs(defect, s)[0] <= 0.5);
    }
    PolicyParams rock = sample_persona(rps, {PersonaKind::kRock, 0}, rng);
    for (int s = 0; s < rps.n_states(); ++s) {
      std::vector<double> pr = action_probs(rock, s);
      CHECK(pr[0] >= 1.0 / 3.0);
      CHECK(pr[0] >= pr[1]);
      CHECK(pr[0] >= pr[2]);
    }
  }
  CHECK_THROWS(sample_persona(ipd, {PersonaKind::kRock, 0}, rng));
  CHECK_THROWS(sample_persona(rps, {PersonaKind::kCooperating, 0}, rng));
}

TEST_CASE("population presets and split invariants") {
  Population ipd = ipd_population(9001);
  CHECK(ipd.members.size() == 480);
  CHECK(ipd.train.size() == 400);
  CHECK(ipd.val.size() == 40);
  CHECK(ipd.test.size() == 40);

  Population rps = rps_population(make_rps(2), 9001);
  CHECK(rps.members.size() == 720);
  CHECK(rps.train.size() == 600);
  CHECK(rps.val.size() == 60);
  CHECK(rps.test.size() == 60);

  std::vector<char> seen(ipd.members.size(), 0);
  for (const auto* split : {&ipd.train, &ipd.val, &ipd.test})
    for (int i : *split) {
      CHECK(!seen[static_cast<size_t>(i)]);
      seen[static_cast<size_t>(i)] = 1;
    }
  for (char c : seen) CHECK(c == 1);

  std::pair<PersonaKind, int> counts[] = {{PersonaKind::kCooperating, 4}};
  CHECK_THROWS(build_population(make_ipd(), counts, {3, 2, 1}, 1));
}

TEST_CASE("population dump and load round trip") {
  MatrixGame g = make_ipd();
  std::pair<PersonaKind, int> counts[] = {{PersonaKind::kCooperating, 6},
                                          {PersonaKind::kDefecting, 6}};
  Population pop = build_population(g, counts, {8, 2, 2}, 77);
  std::stringstream ss;
  dump_population(pop, ss);
  Population back = load_population(ss);
  REQUIRE(back.members.size() == pop.members.size());
  for (size_t i = 0; i < pop.members.size(); ++i) {
    CHECK(back.members[i].kind == pop.members[i].kind);
    CHECK(back.members[i].seed == pop.members[i].seed);
    CHECK(back.members[i].params.logits == pop.members[i].params.logits);
  }
  CHECK(back.train == pop.train);
  CHECK(back.val == pop.val);
  CHECK(back.test == pop.test);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metamarl/games.hpp"

using namespace metamarl;

namespace {
constexpr int C = 0, D = 1;
constexpr int R = 0, P = 1, S = 2;
}  // namespace

TEST_CASE("ipd payoff table") {
  MatrixGame g = make_ipd();
  CHECK(g.n_agents == 2);
  CHECK(g.n_actions == 2);
  CHECK(g.n_states() == 5);
  auto payoff = [&](int a, int b) {
    int actions[] = {a, b};
    int j = joint_index(g, actions);
    return std::pair{g.reward(j, 0), g.reward(j, 1)};
  };
  CHECK(payoff(C, C) == std::pair{0.5, 0.5});
  CHECK(payoff(C, D) == std::pair{-1.5, 1.5});
  CHECK(payoff(D, C) == std::pair{1.5, -1.5});
  CHECK(payoff(D, D) == std::pair{-0.5, -0.5});
}

TEST_CASE("rps payoff table and zero sum") {
  MatrixGame g = make_rps(2);
  auto payoff = [&](int a, int b) {
    int actions[] = {a, b};
    int j = joint_index(g, actions);
    return std::pair{g.reward(j, 0), g.reward(j, 1)};
  };
  CHECK(payoff(R, P) == std::pair{-1.0, 1.0});
  CHECK(payoff(P, R) == std::pair{1.0, -1.0});
  CHECK(payoff(S, S) == std::pair{0.0, 0.0});
  CHECK(payoff(R, S) == std::pair{1.0, -1.0});

  CHECK_THROWS(make_rps(1));
}

TEST_CASE("n-player rps is a sum of pairwise payoffs and stays zero sum") {
  MatrixGame g3 = make_rps(3);
  int acts[] = {R, P, S};
  int j = joint_index(g3, acts);
  CHECK(g3.reward(j, 0) == 0.0);  // -1 vs paper, +1 vs scissors
  CHECK(g3.reward(j, 1) == 0.0);
  CHECK(g3.reward(j, 2) == 0.0);

  for (int n : {2, 3, 4}) {
    MatrixGame g = make_rps(n);
    for (int jj = 0; jj < g.n_joint_actions(); ++jj) {
      double total = 0;
      for (int a = 0; a < n; ++a) total += g.reward(jj, a);
      CHECK(total == 0.0);
    }
  }
}

TEST_CASE("state encoding round trips") {
  MatrixGame g = make_ipd();
  CHECK(encode_state(g, std::nullopt) == 0);
  int cc[] = {C, C};
  int dd[] = {D, D};
  CHECK(encode_state(g, std::span<const int>(cc)) == 1);
  CHECK(encode_state(g, std::span<const int>(dd)) == 4);
  CHECK(decode_state(g, 1) == std::vector{C, C});
  CHECK(decode_state(g, 4) == std::vector{D, D});
  for (int s = 1; s < g.n_states(); ++s) {
    std::vector<int> acts = decode_state(g, s);
    CHECK(encode_state(g, std::span<const int>(acts)) == s);
  }
  CHECK_THROWS(decode_state(g, 0));
  CHECK_THROWS(decode_state(g, 5));
}

TEST_CASE("step transitions ignore the current state") {
  MatrixGame g = make_ipd();
  int cd[] = {C, D};
  StepResult r = step(g, 0, cd);
  CHECK(r.next_state == 2);
  CHECK(r.rewards == std::vector{-1.5, 1.5});

  int cc[] = {C, C};
  StepResult r2 = step(g, 3, cc);
  CHECK(r2.next_state == 1);
  CHECK(r2.rewards == std::vector{0.5, 0.5});

  MatrixGame rps = make_rps(2);
  int pr[] = {P, R};
  StepResult r3 = step(rps, 2, pr);
  CHECK(r3.next_state == 1 + joint_index(rps, pr));
  CHECK(r3.rewards == std::vector{1.0, -1.0});

  int bad[] = {0, 7};
  CHECK_THROWS(step(g, 0, bad));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metamarl/rng.hpp"
#include "metamarl/zero_sum_analytic.hpp"

using namespace metamarl;
using namespace metamarl::zero_sum;

TEST_CASE("inner step") {
  ScalarPair a = inner_step({1, 1}, 0.75);
  CHECK(a.phi_i == doctest::Approx(1.75));
  CHECK(a.phi_j == doctest::Approx(0.25));

  ScalarPair b = inner_step({0.4, -0.9}, 0.0);
  CHECK(b.phi_i == 0.4);
  CHECK(b.phi_j == -0.9);

  ScalarPair c = inner_step({0.5, -0.5}, 0.75);
  CHECK(c.phi_i == doctest::Approx(0.125));
  CHECK(c.phi_j == doctest::Approx(-0.875));
}

TEST_CASE("closed-form gradients") {
  CHECK(mapg_grad({0.5, -0.5}, 0.75) == doctest::Approx(-0.96875));
  CHECK(mapg_grad({0.3, 0.8}, 0.0) == doctest::Approx(0.8));
  CHECK(pg_grad({0.5, -0.5}, 0.75) == doctest::Approx(-0.875));
  CHECK(pg_grad({0.0, 0.6}, 0.3) == doctest::Approx(0.6));

  // pg - mapg = alpha * phi_i1, identically
  Rng rng = make_rng(3);
  for (int i = 0; i < 50; ++i) {
    ScalarPair p{uniform(rng, -2, 2), uniform(rng, -2, 2)};
    double alpha = uniform(rng, 0, 1.5);
    double diff = pg_grad(p, alpha) - mapg_grad(p, alpha);
    CHECK(std::abs(diff - alpha * inner_step(p, alpha).phi_i) < 1e-15);
  }
}

TEST_CASE("tape agreement over random triples") {
  Rng rng = make_rng(5);
  for (int i = 0; i < 100; ++i) {
    ScalarPair p{uniform(rng, -2, 2), uniform(rng, -2, 2)};
    double alpha = uniform(rng, 0.05, 1.5);
    CHECK(std::abs(mapg_grad(p, alpha) - tape_mapg_grad(p, alpha)) < 1e-10);
  }
}

TEST_CASE("training curves") {
  SUBCASE("zero outer rate gives flat curves") {
    TrainingCurves c = run_fig3(32, 0.75, 0.0, 50, 1);
    for (int it = 1; it < 50; ++it) {
      CHECK(c.mean_mapg[static_cast<size_t>(it)] == c.mean_mapg[0]);
      CHECK(c.mean_pg[static_cast<size_t>(it)] == c.mean_pg[0]);
    }
  }
  SUBCASE("directional behavior at small scale") {
    TrainingCurves c = run_fig3(64, 0.75, 0.01, 300, 1);
    // adaptation value rises under the full gradient, falls under the
    // peer-blind one
    CHECK(c.mean_mapg.back() > c.mean_mapg.front());
    CHECK(c.mean_pg.back() < c.mean_pg.front());
    // samples are deterministic given the seed
    TrainingCurves c2 = run_fig3(64, 0.75, 0.01, 300, 1);
    CHECK(c.mean_mapg == c2.mean_mapg);
  }
  SUBCASE("csv layout") {
    TrainingCurves c = run_fig3(8, 0.75, 0.01, 5, 1);
    std::ostringstream os;
    write_fig3_csv(c, os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "iteration,method,mean,ci95");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 10);
  }
}

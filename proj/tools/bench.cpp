// Throughput comparison: chain rollouts with meta-gradients, serial loop vs
// the OpenMP pool, plus an equality check between the two schedules.
#include <chrono>
#include <cstdio>
#include <vector>

#include "metamarl/games.hpp"
#include "metamarl/meta.hpp"
#include "metamarl/parallel.hpp"
#include "metamarl/rng.hpp"

using namespace metamarl;

namespace {

std::vector<double> one_chain(const MatrixGame& game, std::uint64_t seed) {
  Rng init = make_rng(stream_seed(seed, "bench-init"));
  JointParams joint;
  for (int a = 0; a < game.n_agents; ++a) {
    PolicyParams p = zero_params(game, a);
    for (double& v : p.logits) v = uniform(init, -1, 1);
    joint.push_back(std::move(p));
  }
  TapeChainOptions opts;
  opts.L = 3;
  opts.K = 32;
  opts.H = 20;
  opts.gamma = 0.96;
  opts.inner_lrs = {0.3, 0.3};
  Rng rng = make_rng(seed);
  TapeChain chain = record_chain(game, joint, opts, rng);
  GaeConfig gae{0.96, 0.95};
  return meta_gradient(chain, 0, {Method::kMetaMapg, EstimatorPath::kDiceAutodiff}, gae)
      .flat;
}

double run(const MatrixGame& game, int n_chains, int workers,
           std::vector<std::vector<double>>& results) {
  results.assign(static_cast<size_t>(n_chains), {});
  auto start = std::chrono::steady_clock::now();
  auto failures = run_parallel(n_chains, workers, [&](int i) {
    results[static_cast<size_t>(i)] = one_chain(game, 1000 + static_cast<std::uint64_t>(i));
  });
  throw_on_failure(failures);
  std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
  return dt.count();
}

}  // namespace

int main(int argc, char** argv) {
  int n_chains = argc > 1 ? std::atoi(argv[1]) : 32;
  int workers = argc > 2 ? std::atoi(argv[2]) : 8;
  MatrixGame game = make_ipd();

  std::vector<std::vector<double>> serial, parallel;
  double t_serial = run(game, n_chains, 1, serial);
  double t_parallel = run(game, n_chains, workers, parallel);

  bool identical = serial == parallel;
  std::printf("chains: %d\n", n_chains);
  std::printf("serial:  %.3fs (%.1f chains/s)\n", t_serial, n_chains / t_serial);
  std::printf("omp x%d: %.3fs (%.1f chains/s, speedup %.2fx)\n", workers,
              t_parallel, n_chains / t_parallel, t_serial / t_parallel);
  std::printf("results identical across schedules: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace metamarl {
namespace zero_sum {

// Stateless two-player zero-sum game with scalar policies: agent i earns
// phi_i * phi_j, agent j the negative. Everything is closed form, which
// makes this the cheapest cross-check of the tape machinery.
struct ScalarPair {
  double phi_i = 0;
  double phi_j = 0;
};

// phi_i' = phi_i + alpha * phi_j, phi_j' = phi_j - alpha * phi_i.
ScalarPair inner_step(const ScalarPair& pair, double alpha);

// d V(phi_1) / d phi_i0 with the opponent's step dependence kept:
// phi_j1 - alpha * phi_i1.
double mapg_grad(const ScalarPair& pair, double alpha);

// Same derivative with the opponent treated as external: phi_j1 alone.
double pg_grad(const ScalarPair& pair, double alpha);

// The same meta-gradient built on the tape: inner steps as graph-creating
// gradients of the two value functions, then one backward pass.
double tape_mapg_grad(const ScalarPair& pair, double alpha);

struct TrainingCurves {
  int iterations = 0;
  std::vector<double> mean_mapg, ci_mapg;  // per iteration
  std::vector<double> mean_pg, ci_pg;
};

// Meta-trains one agent per sampled opponent with each method and records
// the adaptation value phi_i1 * phi_j1 per training iteration. Mean and
// 95% confidence interval over samples.
TrainingCurves run_fig3(int n_samples = 200, double alpha = 0.75,
                        double beta = 0.01, int iterations = 300,
                        std::uint64_t seed = 1, int workers = 1);

void write_fig3_csv(const TrainingCurves& curves, std::ostream& os);

}  // namespace zero_sum
}  // namespace metamarl

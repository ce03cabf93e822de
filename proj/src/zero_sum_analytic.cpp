#include "metamarl/zero_sum_analytic.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "metamarl/parallel.hpp"
#include "metamarl/rng.hpp"
#include "metamarl/tape.hpp"

namespace metamarl {
namespace zero_sum {

ScalarPair inner_step(const ScalarPair& pair, double alpha) {
  return {pair.phi_i + alpha * pair.phi_j, pair.phi_j - alpha * pair.phi_i};
}

double mapg_grad(const ScalarPair& pair, double alpha) {
  ScalarPair next = inner_step(pair, alpha);
  return next.phi_j - alpha * next.phi_i;
}

double pg_grad(const ScalarPair& pair, double alpha) {
  return inner_step(pair, alpha).phi_j;
}

double tape_mapg_grad(const ScalarPair& pair, double alpha) {
  Tape tape;
  int pi = tape.param(pair.phi_i);
  int pj = tape.param(pair.phi_j);
  int a = tape.constant(alpha);
  int vi = tape.mul(pi, pj);
  int vj = tape.neg(vi);
  int wi[] = {pi};
  int wj[] = {pj};
  int gi = tape.backward_nodes(vi, wi)[0];
  int gj = tape.backward_nodes(vj, wj)[0];
  int pi1 = tape.add(pi, tape.mul(a, gi));
  int pj1 = tape.add(pj, tape.mul(a, gj));
  int v1 = tape.mul(pi1, pj1);
  GradRequest req;
  req.output = v1;
  req.wrt = {pi};
  return tape.gradient_values(req)[0];
}

TrainingCurves run_fig3(int n_samples, double alpha, double beta, int iterations,
                        std::uint64_t seed, int workers) {
  TrainingCurves out;
  out.iterations = iterations;
  // Per-sample adaptation curves, reduced deterministically afterwards.
  std::vector<std::vector<double>> v_mapg(static_cast<size_t>(n_samples)),
      v_pg(static_cast<size_t>(n_samples));

  auto failures = run_parallel(n_samples, workers, [&](int si) {
    Rng rng = make_rng(stream_seed(seed, "fig3", static_cast<std::uint64_t>(si)));
    double opp0 = uniform(rng, -1.0, 1.0);
    double self0 = uniform(rng, -0.65, 0.65);
    for (int method = 0; method < 2; ++method) {
      std::vector<double>& series = method == 0 ? v_mapg[static_cast<size_t>(si)]
                                                : v_pg[static_cast<size_t>(si)];
      series.resize(static_cast<size_t>(iterations));
      double x = self0;
      for (int it = 0; it < iterations; ++it) {
        ScalarPair pair{x, opp0};
        ScalarPair adapted = inner_step(pair, alpha);
        series[static_cast<size_t>(it)] = adapted.phi_i * adapted.phi_j;
        double g = method == 0 ? mapg_grad(pair, alpha) : pg_grad(pair, alpha);
        x += beta * g;
      }
    }
  });
  throw_on_failure(failures);

  auto reduce = [&](const std::vector<std::vector<double>>& v,
                    std::vector<double>& mean, std::vector<double>& ci) {
    mean.assign(static_cast<size_t>(iterations), 0.0);
    ci.assign(static_cast<size_t>(iterations), 0.0);
    for (int it = 0; it < iterations; ++it) {
      double m = 0;
      for (int s = 0; s < n_samples; ++s)
        m += v[static_cast<size_t>(s)][static_cast<size_t>(it)];
      m /= n_samples;
      double var = 0;
      for (int s = 0; s < n_samples; ++s) {
        double d = v[static_cast<size_t>(s)][static_cast<size_t>(it)] - m;
        var += d * d;
      }
      var /= (n_samples > 1 ? n_samples - 1 : 1);
      mean[static_cast<size_t>(it)] = m;
      ci[static_cast<size_t>(it)] = 1.96 * std::sqrt(var / n_samples);
    }
  };
  reduce(v_mapg, out.mean_mapg, out.ci_mapg);
  reduce(v_pg, out.mean_pg, out.ci_pg);
  return out;
}

void write_fig3_csv(const TrainingCurves& curves, std::ostream& os) {
  os << "iteration,method,mean,ci95\n";
  char buf[40];
  auto emit = [&](int it, const char* method, double mean, double ci) {
    os << it << "," << method << ",";
    std::snprintf(buf, sizeof buf, "%.17g", mean);
    os << buf << ",";
    std::snprintf(buf, sizeof buf, "%.17g", ci);
    os << buf << "\n";
  };
  for (int it = 0; it < curves.iterations; ++it) {
    emit(it, "meta_mapg", curves.mean_mapg[static_cast<size_t>(it)],
         curves.ci_mapg[static_cast<size_t>(it)]);
    emit(it, "meta_pg", curves.mean_pg[static_cast<size_t>(it)],
         curves.ci_pg[static_cast<size_t>(it)]);
  }
}

}  // namespace zero_sum
}  // namespace metamarl

#include "metamarl/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "metamarl/games.hpp"
#include "metamarl/learning.hpp"
#include "metamarl/meta.hpp"
#include "metamarl/oracle.hpp"
#include "metamarl/rng.hpp"
#include "metamarl/tape.hpp"
#include "metamarl/zero_sum_analytic.hpp"

namespace metamarl {

namespace {

bool check(std::ostream& os, const std::string& name, bool ok,
           const std::string& detail) {
  os << (ok ? "[ok]   " : "[FAIL] ") << name;
  if (!detail.empty()) os << ": " << detail;
  os << "\n";
  return ok;
}

double rel_err(double got, double want, double abs_floor = 1e-8) {
  double denom = std::abs(want);
  if (denom < abs_floor) return std::abs(got - want) <= abs_floor ? 0.0 : 1.0;
  return std::abs(got - want) / denom;
}

// Random smooth expressions over three params, evaluated twice: once on the
// tape and once as plain arithmetic for central differences. Op choices keep
// every intermediate inside its domain.
bool check_tape_fd(std::ostream& os) {
  Rng rng = make_rng(42);
  double worst = 0;
  for (int trial = 0; trial < 30; ++trial) {
    int n_ops = 5 + static_cast<int>(next_double(rng) * 10);
    std::vector<int> codes;
    std::vector<double> consts;
    for (int i = 0; i < n_ops; ++i) {
      codes.push_back(static_cast<int>(next_double(rng) * 6));
      consts.push_back(uniform(rng, -1.5, 1.5));
    }
    auto eval = [&](std::span<const double> x) {
      std::vector<double> stack(x.begin(), x.end());
      for (size_t i = 0; i < codes.size(); ++i) {
        double a = stack[(i * 7 + 1) % stack.size()];
        double b = stack[(i * 3 + 2) % stack.size()];
        double v = 0;
        switch (codes[i]) {
          case 0: v = a + b; break;
          case 1: v = a * b; break;
          case 2: v = -a + consts[i]; break;
          case 3: v = std::exp(0.5 * a); break;
          case 4: v = std::log(1.0 + a * a + b * b); break;
          case 5: v = a / (2.0 + b * b); break;
        }
        stack.push_back(v);
      }
      double total = 0;
      for (size_t i = stack.size() - std::min<size_t>(4, stack.size());
           i < stack.size(); ++i)
        total += stack[i];
      return total;
    };

    std::vector<double> x = {uniform(rng, -1, 1), uniform(rng, -1, 1),
                             uniform(rng, -1, 1)};
    double scale = 1e-3 * (1 + std::abs(eval(x)));
    Tape tape;
    std::vector<int> params;
    for (double v : x) params.push_back(tape.param(v));
    std::vector<int> stack(params.begin(), params.end());
    for (size_t i = 0; i < codes.size(); ++i) {
      int a = stack[(i * 7 + 1) % stack.size()];
      int b = stack[(i * 3 + 2) % stack.size()];
      int v = -1;
      switch (codes[i]) {
        case 0: v = tape.add(a, b); break;
        case 1: v = tape.mul(a, b); break;
        case 2: v = tape.add(tape.neg(a), tape.constant(consts[i])); break;
        case 3: v = tape.exp_(tape.mul(tape.constant(0.5), a)); break;
        case 4:
          v = tape.log_(tape.add(tape.constant(1.0),
                                 tape.add(tape.mul(a, a), tape.mul(b, b))));
          break;
        case 5:
          v = tape.div(a, tape.add(tape.constant(2.0), tape.mul(b, b)));
          break;
      }
      stack.push_back(v);
    }
    std::vector<int> tail(stack.end() - std::min<size_t>(4, stack.size()),
                          stack.end());
    int out = tape.sum(tail);
    GradRequest req;
    req.output = out;
    req.wrt = params;
    std::vector<double> grad = tape.gradient_values(req);
    const double h = 1e-6;
    std::vector<double> fd(x.size());
    for (size_t c = 0; c < x.size(); ++c) {
      std::vector<double> xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      fd[c] = (eval(xp) - eval(xm)) / (2 * h);
      scale = std::max(scale, std::abs(fd[c]));
    }
    for (size_t c = 0; c < x.size(); ++c)
      worst = std::max(worst, std::abs(grad[c] - fd[c]) / scale);
  }
  return check(os, "tape gradients vs central differences", worst < 1e-6,
               "worst rel err " + std::to_string(worst));
}

bool check_zero_sum(std::ostream& os) {
  Rng rng = make_rng(7);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    zero_sum::ScalarPair pair{uniform(rng, -2, 2), uniform(rng, -2, 2)};
    double alpha = uniform(rng, 0.05, 1.5);
    worst = std::max(worst, std::abs(zero_sum::mapg_grad(pair, alpha) -
                                     zero_sum::tape_mapg_grad(pair, alpha)));
  }
  return check(os, "analytic zero-sum vs tape meta-gradient", worst < 1e-10,
               "worst abs err " + std::to_string(worst));
}

bool check_bandit_dice(std::ostream& os) {
  // f = box(logp_a) * c on a two-action softmax: first derivative
  // c*(ind - pi), second c*[(ind-pi_k)(ind-pi_m) - pi_k(ind_km - pi_m)].
  double worst1 = 0, worst2 = 0;
  const double theta[2] = {0.3, -0.2};
  for (int a = 0; a < 2; ++a) {
    const double c = 1.7;
    Tape tape;
    int p0 = tape.param(theta[0]);
    int p1 = tape.param(theta[1]);
    int params[] = {p0, p1};
    std::vector<int> rows = build_logp_rows(tape, params, 1, 2);
    int w[] = {rows[static_cast<size_t>(a)]};
    int f = tape.mul(tape.magic_box(w), tape.constant(c));

    double z = std::exp(theta[0]) + std::exp(theta[1]);
    double pi[2] = {std::exp(theta[0]) / z, std::exp(theta[1]) / z};

    std::vector<int> wrt = {p0, p1};
    std::vector<int> g1 = tape.backward_nodes(f, wrt);
    for (int k = 0; k < 2; ++k) {
      double want = c * ((k == a ? 1.0 : 0.0) - pi[k]);
      worst1 = std::max(worst1, std::abs(tape.value(g1[static_cast<size_t>(k)]) - want));
      std::vector<double> g2 = tape.backward_values(g1[static_cast<size_t>(k)], wrt);
      for (int m = 0; m < 2; ++m) {
        double want2 = c * (((k == a ? 1.0 : 0.0) - pi[k]) * ((m == a ? 1.0 : 0.0) - pi[m]) -
                            pi[k] * ((k == m ? 1.0 : 0.0) - pi[m]));
        worst2 = std::max(worst2, std::abs(g2[static_cast<size_t>(m)] - want2));
      }
    }
  }
  bool ok = worst1 < 1e-10 && worst2 < 1e-10;
  return check(os, "magic-box bandit identities (1st and 2nd order)", ok,
               "worst " + std::to_string(std::max(worst1, worst2)));
}

JointParams random_joint(const MatrixGame& game, Rng& rng) {
  JointParams joint;
  for (int a = 0; a < game.n_agents; ++a) {
    PolicyParams p = zero_params(game, a);
    for (double& v : p.logits) v = uniform(rng, -1, 1);
    joint.push_back(std::move(p));
  }
  return joint;
}

bool check_exact_meta_grad(std::ostream& os, int trials) {
  MatrixGame game = make_ipd();
  Rng rng = make_rng(11);
  const double alpha = 0.7;
  const int H = 2, L = 1;
  const double gamma = 0.96;
  double worst = 0;
  for (int trial = 0; trial < trials; ++trial) {
    JointParams joint = random_joint(game, rng);
    std::vector<double> alphas(2, alpha);
    std::vector<double> fd = oracle::finite_diff_meta_grad(game, joint, alphas, L,
                                                           H, gamma, 0, 1e-5);
    TapeChainOptions opts;
    opts.L = L;
    opts.K = 1;
    opts.H = H;
    opts.gamma = gamma;
    opts.inner_lrs = alphas;
    opts.exact = true;
    Rng chain_rng = make_rng(1);
    TapeChain chain = record_chain(game, joint, opts, chain_rng);
    GaeConfig gae{gamma, 1.0};
    for (EstimatorPath path :
         {EstimatorPath::kScoreFunction, EstimatorPath::kDiceAutodiff}) {
      MetaGradient mg = meta_gradient(chain, 0, {Method::kMetaMapg, path}, gae);
      for (size_t c = 0; c < fd.size(); ++c)
        worst = std::max(worst, rel_err(mg.flat[c], fd[c]));
    }
  }
  return check(os, "exact-mode estimator vs finite differences (IPD)",
               worst < 1e-5, "worst rel err " + std::to_string(worst));
}

bool check_om_degenerate(std::ostream& os) {
  MatrixGame game = make_ipd();
  Rng rng = make_rng(23);
  JointParams joint = random_joint(game, rng);
  TapeChainOptions opts;
  opts.L = 2;
  opts.K = 1;
  opts.H = 2;
  opts.gamma = 0.96;
  opts.inner_lrs = {0.5, 0.5};
  opts.exact = true;
  Rng r1 = make_rng(1), r2 = make_rng(1);
  TapeChain centralized = record_chain(game, joint, opts, r1);
  TapeChainOptions om_opts = opts;
  om_opts.om.enabled = true;
  om_opts.om.max_iters = 0;
  om_opts.om.init_from_truth = true;
  om_opts.om.alpha_hat = 0.5;
  TapeChain decentralized = record_chain(game, joint, om_opts, r2);
  GaeConfig gae{0.96, 1.0};
  MethodSpec spec{Method::kMetaMapg, EstimatorPath::kDiceAutodiff};
  MetaGradient a = meta_gradient(centralized, 0, spec, gae);
  MetaGradient b = meta_gradient(decentralized, 0, spec, gae);
  double worst = 0;
  for (size_t c = 0; c < a.flat.size(); ++c)
    worst = std::max(worst, rel_err(b.flat[c], a.flat[c]));
  return check(os, "degenerate opponent modeling equals centralized",
               worst < 1e-6, "worst rel err " + std::to_string(worst));
}

}  // namespace

bool run_gradcheck(std::ostream& os, const std::string& game_filter) {
  bool ok = true;
  ok &= check_tape_fd(os);
  ok &= check_zero_sum(os);
  ok &= check_bandit_dice(os);
  if (game_filter.empty() || game_filter == "ipd") {
    ok &= check_exact_meta_grad(os, 5);
    ok &= check_om_degenerate(os);
  }
  return ok;
}

}  // namespace metamarl

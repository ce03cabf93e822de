#pragma once

#include <vector>

#include "metamarl/config.hpp"
#include "metamarl/learning.hpp"
#include "metamarl/metrics.hpp"
#include "metamarl/policies.hpp"

namespace metamarl {

// Outer-loop gradient for the meta agent's initial parameters, with its
// decomposition into the three score-function families: log-probabilities
// of the first batch under phi_0, of later batches under the meta agent's
// own updated parameters, and of later batches under the peers' updated
// parameters.
struct MetaGradient {
  std::vector<double> flat;  // always current + own + peer, element-wise
  std::vector<double> current_policy;
  std::vector<double> own_learning;
  std::vector<double> peer_learning;
  std::vector<double> lr_grad;  // per chain step when inner lrs are learned
};

enum class Method { kMetaMapg, kMetaPg, kNoOwnLearning, kReinforce };
enum class EstimatorPath { kScoreFunction, kDiceAutodiff };

struct MethodSpec {
  Method method = Method::kMetaMapg;
  EstimatorPath path = EstimatorPath::kDiceAutodiff;
};

Method method_from(const std::string& name);
EstimatorPath estimator_path_from(const std::string& name);

struct MetaParams {
  PolicyParams phi0;
  std::vector<double> log_inner_lrs;  // per chain step; empty when not learned
};

double batch_mean_return(const TrajectoryBatch& batch, int agent, double gamma);

// Adaptation performance per chain step: mean return of batch l+1 for
// l = 0..L-1.
std::vector<double> meta_value_estimate(const TapeChain& chain, int agent,
                                        double gamma);
std::vector<double> meta_value_estimate(const ChainRollout& chain, int agent,
                                        double gamma);

// The estimator over a recorded chain. Both estimator paths assemble the
// same weighting; they differ in machinery (explicit per-term backward
// passes vs gradients of magic-box surrogates).
MetaGradient meta_gradient(TapeChain& chain, int agent_i, const MethodSpec& spec,
                           const GaeConfig& gae);

// Plain policy gradient on the first batch only; needs no tape.
MetaGradient reinforce_gradient(const TrajectoryBatch& batch0, int agent,
                                const GaeConfig& gae);

// Projects away pairwise-conflicting components (peer order shuffled by
// rng), then averages.
std::vector<double> pcgrad(std::span<const std::vector<double>> grads, Rng& rng);

MetaParams outer_update(const MetaParams& params, std::span<const double> flat,
                        std::span<const double> lr_grad, double beta);

struct TrainResult {
  MetaParams best_params;
  double best_val_auc = 0;
  long best_iteration = -1;
  std::vector<MetricsRow> rows;
};

TrainResult meta_train(const ExperimentConfig& cfg, const Population& pop,
                       std::uint64_t master_seed);

// Decentralized variant: identical loop with opponent modeling forced on.
TrainResult meta_train_om(const ExperimentConfig& cfg, const Population& pop,
                          std::uint64_t master_seed);

struct TestResult {
  double mean_auc = 0;
  std::vector<MetricsRow> rows;
};

TestResult meta_test(const ExperimentConfig& cfg, const Population& pop,
                     const MetaParams& params, std::uint64_t master_seed);

}  // namespace metamarl

#pragma once

#include <vector>

#include "metamarl/games.hpp"
#include "metamarl/learning.hpp"

namespace metamarl {
namespace oracle {

// Brute-force ground truth for tiny games. Everything here is written
// independently of the estimator path it validates: plain softmax, explicit
// enumeration, dynamic programming, finite differences. Size guards fail
// hard; an oracle never degrades silently.

struct ExactDistribution {
  std::vector<Trajectory> trajectories;
  std::vector<double> probabilities;
};

ExactDistribution enumerate_trajectories(const MatrixGame& game,
                                         const JointParams& joint, int H);

// Expected discounted return from the start state, by backward induction.
double exact_value(const MatrixGame& game, const JointParams& joint, int H,
                   double gamma, int agent);

struct ExactQTable {
  int horizon = 0;
  // q[agent][state * n_joint_actions + joint_action], value of taking the
  // joint action now with horizon-1 steps remaining.
  std::vector<std::vector<double>> q;
};

ExactQTable exact_q_table(const MatrixGame& game, const JointParams& joint, int H,
                          double gamma);

// One exact ascent step on every agent's expected return (no baseline;
// baselines do not change the exact gradient).
JointParams exact_inner_update(const MatrixGame& game, const JointParams& joint,
                               std::span<const double> alphas, int H, double gamma);

std::vector<double> exact_return_gradient(const MatrixGame& game,
                                          const JointParams& joint, int agent,
                                          int H, double gamma);

// Sum over chain steps of the exact adaptation performance, with exact
// inner updates replacing sampled ones.
double exact_meta_value(const MatrixGame& game, const JointParams& joint0,
                        std::span<const double> alphas, int L, int H, double gamma,
                        int agent);

std::vector<double> finite_diff_meta_grad(const MatrixGame& game,
                                          const JointParams& joint0,
                                          std::span<const double> alphas, int L,
                                          int H, double gamma, int agent,
                                          double h = 1e-5);

}  // namespace oracle
}  // namespace metamarl

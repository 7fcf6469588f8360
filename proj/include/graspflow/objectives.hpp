#pragma once

#include <Eigen/Dense>

#include "graspflow/network.hpp"
#include "graspflow/rng.hpp"
#include "graspflow/schedule.hpp"

namespace graspflow {

// Column-per-sample training batch: x0 are encoded ground-truth poses (5 x B),
// y the matching condition vectors (d_y x B).
struct TrainBatch {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd y;

  int size() const { return static_cast<int>(x0.cols()); }
};

struct LossBreakdown {
  double score = 0.0;
  double consistency = 0.0;
  double detection = 0.0;
  double total = 0.0;  // = consistency + detection; score optimizes phi separately
};

// All three losses are plain mean squared errors (the time weighting is fixed
// to 1). Each accumulates gradients into the network it trains and leaves
// every other network untouched; callers zero gradient buffers between
// optimizer steps.

// Denoising score matching. Per sample: t ~ U[0, T] (one uniform), then
// x_t ~ p(. | x0) (five gaussians). The regression target is
// -(x_t - sqrt(a) x0) / (1 - a); for t below epsilon the denominator is
// clamped to 1 - alpha(epsilon) to keep it bounded. Gradients go to `net`.
double score_loss(ScoreNet& net, const TrainBatch& batch, const NoiseSchedule& schedule,
                  RandomStream& rng);

// Consistency distillation across adjacent grid times. Per sample: a grid
// pair index (one integer draw selecting t_i < t_{i+1}), then x_{t_{i+1}}
// (five gaussians). One gradient-free Euler step of the probability-flow ODE
// under `score_net` produces the target point, the EMA copy evaluates it
// (boundary clamp applies at t_1 = epsilon), and the online net f regresses
// onto that frozen target. Gradients go to `f` only.
double consistency_loss(ConsistencyNet& f, const EmaCopy& f_star, const ScoreNet& score_net,
                        const TimeGrid& grid, const TrainBatch& batch,
                        const NoiseSchedule& schedule, RandomStream& rng);

// Direct pose regression. Per sample: a grid index over all N times (one
// integer draw), then x_{t_i} (five gaussians); residual f(x_t, t, y) - x0.
// Draws at the boundary time hit the clamped branch: their residual
// x_t - x0 still counts toward the loss but produces no gradient.
double detection_loss(ConsistencyNet& f, const TimeGrid& grid, const TrainBatch& batch,
                      const NoiseSchedule& schedule, RandomStream& rng);

// Runs the three losses in the fixed order score -> consistency -> detection
// against one random stream and returns the breakdown with
// total = consistency + detection.
LossBreakdown total_loss(ScoreNet& score_net, ConsistencyNet& f, const EmaCopy& f_star,
                         const TimeGrid& grid, const TrainBatch& batch,
                         const NoiseSchedule& schedule, RandomStream& rng);

}  // namespace graspflow

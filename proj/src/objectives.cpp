#include "graspflow/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "graspflow/flow.hpp"

namespace graspflow {

namespace {

void check_batch(const TrainBatch& batch, int cond_dim) {
  if (batch.size() == 0) throw std::invalid_argument("loss: empty batch");
  if (batch.x0.rows() != kPoseDim || batch.y.rows() != cond_dim ||
      batch.y.cols() != batch.x0.cols())
    throw std::invalid_argument("loss: batch dimension mismatch");
}

}  // namespace

double score_loss(ScoreNet& net, const TrainBatch& batch, const NoiseSchedule& schedule,
                  RandomStream& rng) {
  check_batch(batch, net.cond_dim());
  int b = batch.size();
  double horizon = schedule.horizon();
  double var_floor = 1.0 - schedule.alpha(schedule.epsilon());

  std::vector<double> ts(b);
  Eigen::MatrixXd xts(kPoseDim, b);
  Eigen::MatrixXd targets(kPoseDim, b);
  for (int j = 0; j < b; ++j) {
    double t = horizon * rng.uniform();
    ts[j] = t;
    PoseVec x0 = batch.x0.col(j);
    PoseVec xt = schedule.sample_xt(t, x0, rng);
    xts.col(j) = xt;
    double denom = std::max(1.0 - schedule.alpha(t), var_floor);
    targets.col(j) = -(xt - std::sqrt(schedule.alpha(t)) * x0) / denom;
  }

  Eigen::MatrixXd pred = net.forward_batch(xts, ts, batch.y);
  Eigen::MatrixXd resid = pred - targets;
  double loss = 0.0;
  for (int j = 0; j < b; ++j) loss += resid.col(j).squaredNorm();
  loss /= b;
  net.backward_batch(2.0 / b * resid);
  return loss;
}

double consistency_loss(ConsistencyNet& f, const EmaCopy& f_star, const ScoreNet& score_net,
                        const TimeGrid& grid, const TrainBatch& batch,
                        const NoiseSchedule& schedule, RandomStream& rng) {
  check_batch(batch, f.cond_dim());
  int n = grid.size();
  if (n < 2) throw std::invalid_argument("consistency_loss: grid needs at least two points");
  int b = batch.size();

  // all random draws happen first, in a fixed per-sample order
  std::vector<int> lo_idx(b);
  Eigen::MatrixXd x_hi(kPoseDim, b);
  std::vector<double> t_hi(b), t_lo(b);
  for (int j = 0; j < b; ++j) {
    int lo = rng.uniform_int(0, n - 2);  // pair (t_i, t_{i+1}), i = lo 0-based
    lo_idx[j] = lo;
    t_lo[j] = grid[lo];
    t_hi[j] = grid[lo + 1];
    x_hi.col(j) = schedule.sample_xt(t_hi[j], batch.x0.col(j), rng);
  }

  // frozen score oracle, batched, then one Euler step per sample; no
  // gradients flow through either
  Eigen::MatrixXd scores = score_net.evaluate_batch(x_hi, t_hi, batch.y);
  Eigen::MatrixXd x_hat(kPoseDim, b);
  for (int j = 0; j < b; ++j) {
    PoseVec s_j = scores.col(j);
    ScoreField frozen = [&s_j](const PoseVec&, double, const Eigen::VectorXd&) { return s_j; };
    x_hat.col(j) = euler_step(frozen, x_hi.col(j), t_hi[j], t_lo[j], batch.y.col(j), schedule);
  }

  // EMA target (clamped at the boundary time), then the online branch
  Eigen::MatrixXd target = f_star.evaluate_batch(x_hat, t_lo, batch.y);
  Eigen::MatrixXd online = f.forward_batch(x_hi, t_hi, batch.y);
  Eigen::MatrixXd resid = online - target;
  double loss = 0.0;
  for (int j = 0; j < b; ++j) loss += resid.col(j).squaredNorm();
  loss /= b;
  f.backward_batch(2.0 / b * resid);
  return loss;
}

double detection_loss(ConsistencyNet& f, const TimeGrid& grid, const TrainBatch& batch,
                      const NoiseSchedule& schedule, RandomStream& rng) {
  check_batch(batch, f.cond_dim());
  int n = grid.size();
  if (n < 1) throw std::invalid_argument("detection_loss: empty grid");
  int b = batch.size();

  std::vector<int> idx(b);
  Eigen::MatrixXd x_t(kPoseDim, b);
  for (int j = 0; j < b; ++j) {
    idx[j] = rng.uniform_int(0, n - 1);  // i ~ U{1..N}, 0-based
    x_t.col(j) = schedule.sample_xt(grid[idx[j]], batch.x0.col(j), rng);
  }

  // split the batch: boundary draws pass through the clamp (no trainable
  // branch), the rest go through the trunk
  std::vector<int> live;
  double loss = 0.0;
  for (int j = 0; j < b; ++j) {
    if (grid[idx[j]] <= f.epsilon()) {
      loss += (x_t.col(j) - batch.x0.col(j)).squaredNorm();
    } else {
      live.push_back(j);
    }
  }

  if (!live.empty()) {
    int m = static_cast<int>(live.size());
    Eigen::MatrixXd xs(kPoseDim, m), ys(f.cond_dim(), m);
    std::vector<double> ts(m);
    for (int k = 0; k < m; ++k) {
      xs.col(k) = x_t.col(live[k]);
      ys.col(k) = batch.y.col(live[k]);
      ts[k] = grid[idx[live[k]]];
    }
    Eigen::MatrixXd pred = f.forward_batch(xs, ts, ys);
    Eigen::MatrixXd resid(kPoseDim, m);
    for (int k = 0; k < m; ++k) resid.col(k) = pred.col(k) - batch.x0.col(live[k]);
    for (int k = 0; k < m; ++k) loss += resid.col(k).squaredNorm();
    f.backward_batch(2.0 / b * resid);  // mean over the full batch size
  }
  return loss / b;
}

LossBreakdown total_loss(ScoreNet& score_net, ConsistencyNet& f, const EmaCopy& f_star,
                         const TimeGrid& grid, const TrainBatch& batch,
                         const NoiseSchedule& schedule, RandomStream& rng) {
  LossBreakdown out;
  out.score = score_loss(score_net, batch, schedule, rng);
  out.consistency = consistency_loss(f, f_star, score_net, grid, batch, schedule, rng);
  out.detection = detection_loss(f, grid, batch, schedule, rng);
  out.total = out.consistency + out.detection;
  return out;
}

}  // namespace graspflow

#include "graspflow/flow.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace graspflow {

ScoreField make_standard_normal_field() {
  return [](const PoseVec& x, double, const Eigen::VectorXd&) -> PoseVec { return -x; };
}

ScoreField make_analytic_gaussian_field(const Eigen::MatrixXd& means, double sigma,
                                        const NoiseSchedule& schedule) {
  if (means.rows() != kPoseDim)
    throw std::invalid_argument("make_analytic_gaussian_field: means must have 5 rows");
  if (!(sigma > 0.0)) throw std::invalid_argument("make_analytic_gaussian_field: sigma <= 0");
  return [means, sigma, schedule](const PoseVec& x, double t, const Eigen::VectorXd& y) -> PoseVec {
    if (y.size() != means.cols())
      throw std::invalid_argument("analytic gaussian field: condition dimension mismatch");
    double a = schedule.alpha(t);
    PoseVec m = means * y;
    return -(x - std::sqrt(a) * m) / (a * sigma * sigma + 1.0 - a);
  };
}

ScoreField make_net_field(const ScoreNet& net) {
  return [&net](const PoseVec& x, double t, const Eigen::VectorXd& y) -> PoseVec {
    return net.evaluate(x, t, y);
  };
}

PoseVec euler_step(const ScoreField& field, const PoseVec& x, double t_from, double t_to,
                   const Eigen::VectorXd& y, const NoiseSchedule& schedule) {
  if (!(t_to <= t_from))
    throw std::invalid_argument("euler_step: requires t_to <= t_from (backward integration)");
  if (!(t_to >= schedule.epsilon()) || !(t_from <= schedule.horizon()))
    throw std::invalid_argument("euler_step: times outside [epsilon, T]");
  if (t_to == t_from) return x;
  return x - 0.5 * schedule.gamma(t_from) * (t_to - t_from) * (x + field(x, t_from, y));
}

Trajectory solve_pf_ode(const ScoreField& field, const PoseVec& x_terminal, const TimeGrid& grid,
                        const Eigen::VectorXd& y, const NoiseSchedule& schedule) {
  int n = grid.size();
  if (n < 2) throw std::invalid_argument("solve_pf_ode: grid needs at least two points");
  Trajectory traj;
  traj.times.reserve(n);
  traj.states.reserve(n);
  PoseVec x = x_terminal;
  traj.times.push_back(grid[n - 1]);
  traj.states.push_back(x);
  for (int i = n - 1; i >= 1; --i) {
    x = euler_step(field, x, grid[i], grid[i - 1], y, schedule);
    traj.times.push_back(grid[i - 1]);
    traj.states.push_back(x);
  }
  return traj;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  out << "t,x0,x1,x2,x3,x4\n";
  char buf[256];
  for (size_t i = 0; i < traj.times.size(); ++i) {
    const PoseVec& s = traj.states[i];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", traj.times[i], s(0),
                  s(1), s(2), s(3), s(4));
    out << buf;
  }
  if (!out.good()) throw std::runtime_error("write_trajectory_csv: write failed for " + path);
}

ConsistencySample sample_consistency(const ConsistencyNet& f, const Eigen::VectorXd& y, int p,
                                     const NoiseSchedule& schedule, RandomStream& rng) {
  if (p < 1) throw std::invalid_argument("sample_consistency: P must be >= 1");
  ConsistencySample result;
  double horizon = schedule.horizon();
  // inference times t_1 = eps < ... < t_P = T, uniform; P = 1 keeps only T
  std::vector<double> times;
  if (p == 1) {
    times = {horizon};
  } else {
    times = schedule.uniform_grid(p).points;
  }

  PoseVec x;
  for (int i = 0; i < kPoseDim; ++i) x(i) = rng.gaussian();

  auto timed_eval = [&](const PoseVec& xin, double t) {
    auto start = std::chrono::steady_clock::now();
    PoseVec out = f.evaluate(xin, t, y);
    auto stop = std::chrono::steady_clock::now();
    result.step_seconds.push_back(std::chrono::duration<double>(stop - start).count());
    result.net_evals += 1;
    return out;
  };

  PoseVec x0 = timed_eval(x, horizon);
  // refinement loop of the few-step sampler: i = P-1 down to 2 (1-based),
  // re-noise to t_i then denoise; empty for P <= 2
  for (int i = p - 1; i >= 2; --i) {
    double t = times[i - 1];
    double a = schedule.alpha(t);
    PoseVec z;
    for (int k = 0; k < kPoseDim; ++k) z(k) = rng.gaussian();
    PoseVec xt = std::sqrt(a) * x0 + std::sqrt(1.0 - a) * z;
    x0 = timed_eval(xt, t);
  }
  result.x0 = x0;
  return result;
}

PoseVec sample_ddpm_baseline(const ScoreField& field, const Eigen::VectorXd& y, int steps,
                             const NoiseSchedule& schedule, RandomStream& rng) {
  if (steps < 1) throw std::invalid_argument("sample_ddpm_baseline: steps must be >= 1");
  std::vector<double> times;
  if (steps == 1) {
    times = {schedule.horizon()};
  } else {
    times = schedule.uniform_grid(steps).points;
  }

  PoseVec x;
  for (int i = 0; i < kPoseDim; ++i) x(i) = rng.gaussian();

  // ancestral updates down the grid; each iteration consumes one field
  // evaluation plus 5 gaussians of fresh noise
  for (int k = steps - 1; k >= 1; --k) {
    double t_hi = times[k];
    double t_lo = times[k - 1];
    double a_hi = schedule.alpha(t_hi);
    double a_lo = schedule.alpha(t_lo);
    PoseVec score = field(x, t_hi, y);
    PoseVec eps_hat = -std::sqrt(1.0 - a_hi) * score;
    PoseVec x0_hat = (x - std::sqrt(1.0 - a_hi) * eps_hat) / std::sqrt(a_hi);
    double a_step = a_hi / a_lo;  // conditional signal ratio between grid times
    PoseVec mean = (std::sqrt(a_lo) * (1.0 - a_step) * x0_hat +
                    std::sqrt(a_step) * (1.0 - a_lo) * x) /
                   (1.0 - a_hi);
    double var = (1.0 - a_step) * (1.0 - a_lo) / (1.0 - a_hi);
    PoseVec z;
    for (int i = 0; i < kPoseDim; ++i) z(i) = rng.gaussian();
    x = mean + std::sqrt(var) * z;
  }

  // final denoised prediction at the lowest grid time
  double t1 = times[0];
  double a1 = schedule.alpha(t1);
  PoseVec score = field(x, t1, y);
  return (x + (1.0 - a1) * score) / std::sqrt(a1);
}

}  // namespace graspflow

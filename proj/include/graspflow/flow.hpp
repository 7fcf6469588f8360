#pragma once

#include <functional>
#include <vector>

#include "graspflow/geometry.hpp"
#include "graspflow/network.hpp"
#include "graspflow/schedule.hpp"

namespace graspflow {

// Score field contract: (x_t, t, y) -> grad log p(x_t | y). Backed by a
// trained ScoreNet or by an analytic oracle in tests.
using ScoreField = std::function<PoseVec(const PoseVec&, double, const Eigen::VectorXd&)>;

// score of N(0, I) data: the forward process leaves it invariant, so the
// probability-flow drift vanishes identically
ScoreField make_standard_normal_field();

// Marginal score when p(x0 | y) = N(means * y, sigma^2 I) (one-hot y picks a
// column):  s(x, t, y) = -(x - sqrt(a) m_y) / (a sigma^2 + 1 - a), a = alpha(t).
ScoreField make_analytic_gaussian_field(const Eigen::MatrixXd& means, double sigma,
                                        const NoiseSchedule& schedule);

// wraps a trained net; the net must outlive the field
ScoreField make_net_field(const ScoreNet& net);

// One explicit Euler step of the probability-flow ODE integrated backward in
// time (t_to <= t_from):
//   x_hat = x - 1/2 gamma(t_from) (t_to - t_from) (x + field(x, t_from, y))
// The (t_to - t_from) factor is negative for a backward step. Bounds or
// ordering violations throw std::invalid_argument.
PoseVec euler_step(const ScoreField& field, const PoseVec& x, double t_from, double t_to,
                   const Eigen::VectorXd& y, const NoiseSchedule& schedule);

// Backward trajectory: times strictly decreasing from T to epsilon, states
// aligned, states[0] = the initial x_T.
struct Trajectory {
  std::vector<double> times;
  std::vector<PoseVec> states;
};

// integrate from grid.back() (= T) down the whole grid
Trajectory solve_pf_ode(const ScoreField& field, const PoseVec& x_terminal, const TimeGrid& grid,
                        const Eigen::VectorXd& y, const NoiseSchedule& schedule);

// write "t,x0,x1,x2,x3,x4" rows, one per grid point, t descending
void write_trajectory_csv(const Trajectory& traj, const std::string& path);

struct ConsistencySample {
  PoseVec x0;
  std::vector<double> step_seconds;  // wall time around each network call
  int net_evals = 0;
};

// Few-step conditional sampling: draw x_T ~ N(0, I), denoise with f, then for
// i = P-1 down to 2 re-noise to t_i and denoise again. Network call count is
// 1 + max(0, P - 2); P = 2 degenerates to P = 1 because the loop body is
// empty. Inference times are spaced uniformly on [epsilon, T].
ConsistencySample sample_consistency(const ConsistencyNet& f, const Eigen::VectorXd& y, int p,
                                     const NoiseSchedule& schedule, RandomStream& rng);

// Many-step ancestral baseline over a uniform grid. The score is converted to
// predicted noise via eps_hat = -sqrt(1 - alpha_t) * score, then the standard
// posterior update runs down the grid; a final denoised prediction is returned
// at the boundary time. Makes exactly `steps` field evaluations.
PoseVec sample_ddpm_baseline(const ScoreField& field, const Eigen::VectorXd& y, int steps,
                             const NoiseSchedule& schedule, RandomStream& rng);

}  // namespace graspflow

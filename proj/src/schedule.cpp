#include "graspflow/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace graspflow {

NoiseSchedule::NoiseSchedule(double gamma_min, double gamma_max, double horizon, double epsilon)
    : gamma_min_(gamma_min), gamma_max_(gamma_max), horizon_(horizon), epsilon_(epsilon) {
  if (!(gamma_min > 0.0) || !(gamma_max >= gamma_min))
    throw std::invalid_argument("NoiseSchedule: need 0 < gamma_min <= gamma_max");
  if (!(epsilon > 0.0) || !(epsilon < horizon))
    throw std::invalid_argument("NoiseSchedule: need 0 < epsilon < horizon");
  // terminal state must be near-pure noise or sampling from N(0,I) is not a
  // faithful start of the reverse process
  if (!(alpha(horizon_) < 1e-3))
    throw std::invalid_argument("NoiseSchedule: alpha(T) must be below 1e-3");
}

void NoiseSchedule::check_domain(double t) const {
  if (!(t >= 0.0) || !(t <= horizon_))
    throw std::domain_error("NoiseSchedule: t outside [0, T]");
}

double NoiseSchedule::gamma(double t) const {
  check_domain(t);
  return gamma_min_ + (gamma_max_ - gamma_min_) * t / horizon_;
}

double NoiseSchedule::rho(double t) const {
  check_domain(t);
  return -(gamma_min_ * t + (gamma_max_ - gamma_min_) * t * t / (2.0 * horizon_));
}

double NoiseSchedule::alpha(double t) const { return std::exp(rho(t)); }

NoiseSchedule::Perturbation NoiseSchedule::perturbation_params(double t, const PoseVec& x0) const {
  double a = alpha(t);
  return Perturbation{std::sqrt(a) * x0, std::sqrt(1.0 - a)};
}

PoseVec NoiseSchedule::sample_xt(double t, const PoseVec& x0, RandomStream& rng) const {
  Perturbation p = perturbation_params(t, x0);
  PoseVec z;
  for (int i = 0; i < kPoseDim; ++i) z(i) = rng.gaussian();
  return p.mean + p.stddev * z;
}

TimeGrid NoiseSchedule::uniform_grid(int n) const {
  if (n < 2) throw std::invalid_argument("uniform_grid: need n >= 2");
  TimeGrid grid;
  grid.points.resize(n);
  for (int i = 0; i < n; ++i)
    grid.points[i] = epsilon_ + (horizon_ - epsilon_) * static_cast<double>(i) / (n - 1);
  grid.points.front() = epsilon_;  // endpoints exact by fiat
  grid.points.back() = horizon_;
  return grid;
}

}  // namespace graspflow

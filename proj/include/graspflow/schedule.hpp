#pragma once

#include <vector>

#include "graspflow/geometry.hpp"
#include "graspflow/rng.hpp"

namespace graspflow {

// Strictly increasing time points t_1 = epsilon < ... < t_N = T.
struct TimeGrid {
  std::vector<double> points;

  int size() const { return static_cast<int>(points.size()); }
  double operator[](int i) const { return points[i]; }
};

// Continuous-time variance-preserving noise schedule with a linear ramp
// gamma(t) = gamma_min + (gamma_max - gamma_min) * t / T. The log signal level
// rho(t) = -integral of gamma on [0,t] has the closed form used below, and
// alpha(t) = exp(rho(t)) so the perturbed state is
//   x_t | x_0  ~  N(sqrt(alpha) x0, (1 - alpha) I).
class NoiseSchedule {
 public:
  NoiseSchedule(double gamma_min, double gamma_max, double horizon, double epsilon);

  // full-scale defaults: near-pure noise at the terminal time
  // (alpha(1000) ~ 4.3e-5)
  static NoiseSchedule standard() { return NoiseSchedule(1e-4, 2e-2, 1000.0, 1.0); }

  double gamma_min() const { return gamma_min_; }
  double gamma_max() const { return gamma_max_; }
  double horizon() const { return horizon_; }
  double epsilon() const { return epsilon_; }

  // all of these require 0 <= t <= T and throw std::domain_error otherwise
  double gamma(double t) const;
  double rho(double t) const;
  double alpha(double t) const;

  // mean scale sqrt(alpha) applied to x0; isotropic stddev sqrt(1 - alpha)
  struct Perturbation {
    PoseVec mean;
    double stddev;
  };
  Perturbation perturbation_params(double t, const PoseVec& x0) const;

  // draw x_t = sqrt(alpha) x0 + sqrt(1 - alpha) z, z ~ N(0, I); consumes
  // exactly kPoseDim gaussians from the stream
  PoseVec sample_xt(double t, const PoseVec& x0, RandomStream& rng) const;

  // n points uniformly spaced on [epsilon, T] with exact endpoints; n < 2
  // throws std::invalid_argument
  TimeGrid uniform_grid(int n) const;

 private:
  void check_domain(double t) const;

  double gamma_min_;
  double gamma_max_;
  double horizon_;
  double epsilon_;
};

}  // namespace graspflow

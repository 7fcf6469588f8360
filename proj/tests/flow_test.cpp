#include "graspflow/flow.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <gtest/gtest.h>

#include "graspflow/rng.hpp"
#include "oracles.hpp"

namespace graspflow {
namespace {

Eigen::MatrixXd toy_means() {
  Eigen::MatrixXd m(5, 2);
  m << 0.5, -0.6, -0.3, 0.4, 0.2, -0.2, 0.6, -0.5, -0.4, 0.3;
  return m;
}

// For a Gaussian data distribution N(m, sigma^2 I) the flow map has a closed
// form: each trajectory keeps its standardized coordinate, so
// x(t) = sqrt(a) m + sqrt(a sigma^2 + 1 - a) u with u fixed by the terminal
// state.
PoseVec exact_flow_state(const PoseVec& x_terminal, double t, const PoseVec& m, double sigma,
                         const NoiseSchedule& s) {
  double a_term = s.alpha(s.horizon());
  double a = s.alpha(t);
  PoseVec u = (x_terminal - std::sqrt(a_term) * m) /
              std::sqrt(a_term * sigma * sigma + 1.0 - a_term);
  return std::sqrt(a) * m + std::sqrt(a * sigma * sigma + 1.0 - a) * u;
}

TEST(ScoreFields, StandardNormalFieldCancelsDrift) {
  NoiseSchedule s = NoiseSchedule::standard();
  ScoreField field = make_standard_normal_field();
  RandomStream rng(1);
  PoseVec x = rng.gaussian_vector(5);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(1);

  PoseVec stepped = euler_step(field, x, 700.0, 650.0, y, s);
  EXPECT_TRUE((stepped.array() == x.array()).all());

  TimeGrid grid = s.uniform_grid(100);
  Trajectory traj = solve_pf_ode(field, x, grid, y, s);
  for (const PoseVec& state : traj.states)
    EXPECT_LE((state - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ScoreFields, AnalyticGaussianFieldMatchesClosedForm) {
  NoiseSchedule s = NoiseSchedule::standard();
  Eigen::MatrixXd means = toy_means();
  double sigma = 0.2;
  ScoreField field = make_analytic_gaussian_field(means, sigma, s);

  RandomStream rng(2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
    y(c) = 1.0;
    for (double t : {1.0, 200.0, 975.0}) {
      PoseVec x = rng.gaussian_vector(5);
      PoseVec got = field(x, t, y);
      PoseVec want = oracles::marginal_score_ref(x, t, means.col(c), sigma, s);
      EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ScoreFields, AnalyticGaussianFieldValidates) {
  NoiseSchedule s = NoiseSchedule::standard();
  EXPECT_THROW(make_analytic_gaussian_field(Eigen::MatrixXd::Zero(4, 2), 0.2, s),
               std::invalid_argument);
  EXPECT_THROW(make_analytic_gaussian_field(toy_means(), 0.0, s), std::invalid_argument);
  ScoreField field = make_analytic_gaussian_field(toy_means(), 0.2, s);
  PoseVec x = PoseVec::Zero();
  EXPECT_THROW(field(x, 500.0, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST(ScoreFields, NetFieldWrapsScoreNet) {
  NoiseSchedule s = NoiseSchedule::standard();
  RandomStream init(3);
  ScoreNet net(2, s.horizon(), {6}, init);
  RandomStream pr(4);
  net.trunk().set_flat_params(0.3 * pr.gaussian_vector(net.trunk().param_count()));
  ScoreField field = make_net_field(net);

  RandomStream rng(5);
  PoseVec x = rng.gaussian_vector(5);
  Eigen::VectorXd y = rng.gaussian_vector(2);
  EXPECT_EQ((field(x, 321.0, y) - net.evaluate(x, 321.0, y)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(EulerStep, BackwardStepWithZeroFieldHandValue) {
  // constant gamma = 0.01: one unit backward step scales x by 1 + 0.005
  NoiseSchedule s(0.01, 0.01, 1000.0, 1.0);
  ScoreField zero = [](const PoseVec&, double, const Eigen::VectorXd&) {
    return PoseVec::Zero().eval();
  };
  RandomStream rng(6);
  PoseVec x = rng.gaussian_vector(5);
  PoseVec stepped = euler_step(zero, x, 500.0, 499.0, Eigen::VectorXd::Zero(1), s);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(stepped(i), 1.005 * x(i), 1e-14 * std::abs(x(i)));
}

TEST(EulerStep, EqualTimesReturnInputExactly) {
  NoiseSchedule s = NoiseSchedule::standard();
  ScoreField field = make_analytic_gaussian_field(toy_means(), 0.2, s);
  RandomStream rng(7);
  PoseVec x = rng.gaussian_vector(5);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  y(0) = 1.0;
  PoseVec stepped = euler_step(field, x, 400.0, 400.0, y, s);
  EXPECT_TRUE((stepped.array() == x.array()).all());
}

TEST(EulerStep, ValidatesOrderingAndBounds) {
  NoiseSchedule s = NoiseSchedule::standard();
  ScoreField field = make_standard_normal_field();
  PoseVec x = PoseVec::Zero();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(euler_step(field, x, 400.0, 401.0, y, s), std::invalid_argument);  // forward
  EXPECT_THROW(euler_step(field, x, 400.0, 0.5, y, s), std::invalid_argument);    // below eps
  EXPECT_THROW(euler_step(field, x, 1001.0, 400.0, y, s), std::invalid_argument); // above T
  EXPECT_NO_THROW(euler_step(field, x, 1000.0, 1.0, y, s));
}

TEST(SolvePfOde, TrajectoryStructureMatchesGrid) {
  NoiseSchedule s = NoiseSchedule::standard();
  ScoreField field = make_analytic_gaussian_field(toy_means(), 0.2, s);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  y(1) = 1.0;
  TimeGrid grid = s.uniform_grid(50);
  RandomStream rng(8);
  PoseVec x_terminal = rng.gaussian_vector(5);

  Trajectory traj = solve_pf_ode(field, x_terminal, grid, y, s);
  ASSERT_EQ(static_cast<int>(traj.times.size()), grid.size());
  ASSERT_EQ(traj.times.size(), traj.states.size());
  EXPECT_EQ(traj.times.front(), s.horizon());
  EXPECT_EQ(traj.times.back(), s.epsilon());
  for (size_t i = 1; i < traj.times.size(); ++i) EXPECT_LT(traj.times[i], traj.times[i - 1]);
  for (int i = 0; i < grid.size(); ++i) EXPECT_EQ(traj.times[i], grid[grid.size() - 1 - i]);
  EXPECT_TRUE((traj.states.front().array() == x_terminal.array()).all());
}

TEST(SolvePfOde, FirstOrderConvergenceToClosedFormFlow) {
  NoiseSchedule s = NoiseSchedule::standard();
  Eigen::MatrixXd means = toy_means();
  double sigma = 0.3;
  ScoreField field = make_analytic_gaussian_field(means, sigma, s);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  y(0) = 1.0;
  RandomStream rng(9);
  PoseVec x_terminal = rng.gaussian_vector(5);
  PoseVec exact = exact_flow_state(x_terminal, s.epsilon(), means.col(0), sigma, s);

  std::vector<int> ns = {250, 500, 1000, 2000};
  std::vector<double> errs;
  for (int n : ns) {
    Trajectory traj = solve_pf_ode(field, x_terminal, s.uniform_grid(n), y, s);
    errs.push_back((traj.states.back() - exact).norm());
  }
  for (size_t i = 1; i < errs.size(); ++i) EXPECT_LT(errs[i], errs[i - 1]);

  // least-squares slope of log(err) against log(n): explicit Euler is order 1
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < ns.size(); ++i) {
    double lx = std::log(ns[i]), ly = std::log(errs[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double k = ns.size();
  double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  EXPECT_GE(-slope, 0.8);
  EXPECT_LE(-slope, 1.2);
  EXPECT_LT(errs.back(), 0.01);  // fine grid actually lands near the flow map
}

TEST(TrajectoryCsv, WritesDescendingRowsThatRoundTrip) {
  NoiseSchedule s = NoiseSchedule::standard();
  ScoreField field = make_analytic_gaussian_field(toy_means(), 0.2, s);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  y(0) = 1.0;
  RandomStream rng(10);
  Trajectory traj = solve_pf_ode(field, rng.gaussian_vector(5), s.uniform_grid(20), y, s);

  std::filesystem::path path =
      std::filesystem::temp_directory_path() / "graspflow_traj_test.csv";
  write_trajectory_csv(traj, path.string());

  std::ifstream in(path);
  ASSERT_TRUE(in.good());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x0,x1,x2,x3,x4");
  int rows = 0;
  double prev_t = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    std::array<double, 6> v{};
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3],
                          &v[4], &v[5]),
              6);
    EXPECT_LT(v[0], prev_t);
    prev_t = v[0];
    EXPECT_EQ(v[0], traj.times[rows]);  // %.17g round-trips exactly
    for (int i = 0; i < 5; ++i) EXPECT_EQ(v[1 + i], traj.states[rows](i));
    ++rows;
  }
  EXPECT_EQ(rows, 20);
  std::filesystem::remove(path);
}

TEST(SampleConsistency, NetworkCallCountFollowsSchedule) {
  NoiseSchedule s = NoiseSchedule::standard();
  RandomStream init(11);
  ConsistencyNet f(2, s.horizon(), s.epsilon(), {6}, init);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);

  for (int p : {1, 2, 3, 4, 10}) {
    RandomStream rng(77);
    ConsistencySample out = sample_consistency(f, y, p, s, rng);
    EXPECT_EQ(out.net_evals, 1 + std::max(0, p - 2)) << "p=" << p;
    EXPECT_EQ(static_cast<int>(out.step_seconds.size()), out.net_evals);
  }
}

TEST(SampleConsistency, TwoStepDegeneratesToOneStep) {
  NoiseSchedule s = NoiseSchedule::standard();
  RandomStream init(12);
  ConsistencyNet f(2, s.horizon(), s.epsilon(), {6}, init);
  RandomStream pr(13);
  f.trunk().set_flat_params(0.3 * pr.gaussian_vector(f.trunk().param_count()));
  Eigen::VectorXd y = Eigen::VectorXd::Ones(2);

  RandomStream r1(55), r2(55);
  ConsistencySample one = sample_consistency(f, y, 1, s, r1);
  ConsistencySample two = sample_consistency(f, y, 2, s, r2);
  EXPECT_TRUE((one.x0.array() == two.x0.array()).all());
  // both consume the same randomness: the streams stay in lockstep
  EXPECT_DOUBLE_EQ(r1.uniform(), r2.uniform());
}

TEST(SampleConsistency, DeterministicPerSeedAndSeedSensitive) {
  NoiseSchedule s = NoiseSchedule::standard();
  RandomStream init(14);
  ConsistencyNet f(2, s.horizon(), s.epsilon(), {6}, init);
  RandomStream pr(15);
  f.trunk().set_flat_params(0.3 * pr.gaussian_vector(f.trunk().param_count()));
  Eigen::VectorXd y = Eigen::VectorXd::Ones(2);

  RandomStream a(21), b(21), c(22);
  PoseVec xa = sample_consistency(f, y, 5, s, a).x0;
  PoseVec xb = sample_consistency(f, y, 5, s, b).x0;
  PoseVec xc = sample_consistency(f, y, 5, s, c).x0;
  EXPECT_TRUE((xa.array() == xb.array()).all());
  EXPECT_GT((xa - xc).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SampleConsistency, RejectsNonPositiveStepCount) {
  NoiseSchedule s = NoiseSchedule::standard();
  RandomStream init(16);
  ConsistencyNet f(2, s.horizon(), s.epsilon(), {6}, init);
  RandomStream rng(17);
  EXPECT_THROW(sample_consistency(f, Eigen::VectorXd::Zero(2), 0, s, rng),
               std::invalid_argument);
}

TEST(SampleDdpm, MakesExactlyStepsFieldEvaluations) {
  NoiseSchedule s = NoiseSchedule::standard();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
  for (int steps : {1, 2, 7, 64}) {
    int calls = 0;
    ScoreField counting = [&calls](const PoseVec& x, double, const Eigen::VectorXd&) {
      ++calls;
      return PoseVec(-x);
    };
    RandomStream rng(30);
    sample_ddpm_baseline(counting, y, steps, s, rng);
    EXPECT_EQ(calls, steps) << "steps=" << steps;
  }
  RandomStream rng(31);
  EXPECT_THROW(sample_ddpm_baseline(make_standard_normal_field(), y, 0, s, rng),
               std::invalid_argument);
}

TEST(SampleDdpm, SingleStepAppliesFinalDenoiseFormula) {
  NoiseSchedule s = NoiseSchedule::standard();
  Eigen::MatrixXd means = toy_means();
  double sigma = 0.2;
  ScoreField field = make_analytic_gaussian_field(means, sigma, s);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  y(1) = 1.0;

  RandomStream run(40), replay(40);
  PoseVec out = sample_ddpm_baseline(field, y, 1, s, run);

  PoseVec x = replay.gaussian_vector(5);
  double a = s.alpha(s.horizon());
  PoseVec expected = (x + (1.0 - a) * field(x, s.horizon(), y)) / std::sqrt(a);
  EXPECT_LE((out - expected).cwiseAbs().maxCoeff(), 1e-12);
}

// For Gaussian data the plug-in ancestral chain is itself linear Gaussian, so
// its exact output moments follow from a per-coordinate affine recursion:
// x carries mean-coefficient p (on m) and variance v, the Tweedie estimate is
// x0_hat = A x + B m, and each posterior update composes affinely. Returns
// {p, v} after the final denoise.
std::pair<double, double> plug_in_chain_moments(const NoiseSchedule& s, double sigma, int steps) {
  std::vector<double> times = s.uniform_grid(steps).points;
  auto tweedie = [&](double a) {
    double denom = a * sigma * sigma + 1.0 - a;
    return std::pair<double, double>{std::sqrt(a) * sigma * sigma / denom, (1.0 - a) / denom};
  };
  double p = 0.0, v = 1.0;
  for (int k = steps - 1; k >= 1; --k) {
    double a_hi = s.alpha(times[k]), a_lo = s.alpha(times[k - 1]);
    auto [A, B] = tweedie(a_hi);
    double a_step = a_hi / a_lo;
    double c1 = std::sqrt(a_step) * (1.0 - a_lo) / (1.0 - a_hi);
    double c2 = std::sqrt(a_lo) * (1.0 - a_step) / (1.0 - a_hi);
    double beta = (1.0 - a_step) * (1.0 - a_lo) / (1.0 - a_hi);
    double g = c1 + c2 * A;
    p = g * p + c2 * B;
    v = g * g * v + beta;
  }
  auto [A, B] = tweedie(s.alpha(times[0]));
  return {A * p + B, A * A * v};
}

TEST(SampleDdpm, CoarseChainMatchesClosedFormMomentsAndConvergesWithSteps) {
  NoiseSchedule s = NoiseSchedule::standard();
  Eigen::MatrixXd means = toy_means();
  double sigma = 0.2;
  ScoreField field = make_analytic_gaussian_field(means, sigma, s);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  y(0) = 1.0;
  PoseVec m = means.col(0);

  // Plugging the posterior mean into the transition kernel drops the spread
  // of x0 | x_t, so a coarse chain is genuinely under-dispersed relative to
  // the data marginal; the closed form is the correct oracle at 64 steps.
  const int n = 10000, steps = 64;
  auto [p64, v64] = plug_in_chain_moments(s, sigma, steps);
  RandomStream rng(41);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5), sumsq = Eigen::VectorXd::Zero(5);
  for (int i = 0; i < n; ++i) {
    PoseVec x = sample_ddpm_baseline(field, y, steps, s, rng);
    sum += x;
    sumsq += x.cwiseProduct(x);
  }
  for (int d = 0; d < 5; ++d) {
    double mean = sum(d) / n;
    double var = sumsq(d) / n - mean * mean;
    double se = std::sqrt(v64 / n);
    EXPECT_NEAR(mean, p64 * m(d), 4.0 * se + 0.005) << "coord " << d;
    EXPECT_NEAR(var, v64, 0.07 * v64) << "coord " << d;
  }

  // and the closed form closes in on the true marginal as the grid refines
  double a1 = s.alpha(s.epsilon());
  double marginal_var = a1 * sigma * sigma + (1.0 - a1);
  double prev = 0.0;
  for (int k : {64, 256, 1024, 4096}) {
    auto [pk, vk] = plug_in_chain_moments(s, sigma, k);
    EXPECT_NEAR(pk, 1.0, 1e-4);
    EXPECT_GT(vk, prev);
    EXPECT_LT(vk, marginal_var);
    prev = vk;
  }
  EXPECT_GT(prev, 0.98 * marginal_var);
}

}  // namespace
}  // namespace graspflow

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "graspflow/geometry.hpp"
#include "graspflow/rng.hpp"

namespace graspflow {

enum class Activation { kGelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Sinusoidal features [sin(2 pi 2^k t/T), cos(2 pi 2^k t/T)] for k = 0..7,
// interleaved sin/cos per octave. Networks see t only through these, so the
// conditioning is scale-free in T. Throws std::domain_error for t outside
// [0, T].
Eigen::VectorXd time_features(double t, double horizon);

inline constexpr int kTimeFeatureDim = 16;

// Plain fully-connected net with hand-rolled reverse-mode gradients. forward()
// records the activation tape on the instance; backward() consumes it and
// accumulates parameter gradients, so one instance must not run training
// passes from two threads. evaluate() is const and tape-free.
//
// Batched layout: columns are samples (in_dim x batch).
class MlpNet {
 public:
  MlpNet() = default;
  MlpNet(std::vector<int> layer_dims, Activation activation = Activation::kGelu);

  // Fan-in-scaled uniform weights, zero biases; the final layer is zeroed so a
  // fresh net outputs 0 everywhere. Draw order is fixed (layers outer, rows,
  // then columns) for reproducibility.
  void init_params(RandomStream& rng);

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  Activation activation() const { return activation_; }
  int input_dim() const { return layer_dims_.front(); }
  int output_dim() const { return layer_dims_.back(); }
  int layer_count() const { return static_cast<int>(weights_.size()); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input);
  // upstream is d(loss)/d(output); returns d(loss)/d(input) and accumulates
  // parameter gradients. Throws std::logic_error without a recorded forward.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& upstream);
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& input) const;
  Eigen::VectorXd evaluate_vec(const Eigen::VectorXd& input) const;

  void zero_grads();
  int param_count() const;
  // flattening order: per layer, weight matrix row-major, then bias
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& flat);
  Eigen::VectorXd flat_grads() const;

  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
  const std::vector<Eigen::MatrixXd>& weight_grads() const { return weight_grads_; }
  const std::vector<Eigen::VectorXd>& bias_grads() const { return bias_grads_; }

 private:
  std::vector<int> layer_dims_;
  Activation activation_ = Activation::kGelu;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
  std::vector<Eigen::MatrixXd> weight_grads_;
  std::vector<Eigen::VectorXd> bias_grads_;

  // tape
  bool has_tape_ = false;
  std::vector<Eigen::MatrixXd> tape_inputs_;  // input to each layer
  std::vector<Eigen::MatrixXd> tape_preact_;  // pre-activation of hidden layers
};

// Score head s_phi(x_t, t, y): trunk input is concat(x[5], time_features[16],
// y[cond_dim]), output dim 5 (same as the state).
class ScoreNet {
 public:
  ScoreNet() = default;
  ScoreNet(int cond_dim, double horizon, const std::vector<int>& hidden_dims, RandomStream& rng);

  int cond_dim() const { return cond_dim_; }
  double horizon() const { return horizon_; }
  MlpNet& trunk() { return trunk_; }
  const MlpNet& trunk() const { return trunk_; }

  // training path (records tape). ts must pair with columns of xs/ys.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                const Eigen::MatrixXd& ys);
  void backward_batch(const Eigen::MatrixXd& upstream);

  Eigen::VectorXd evaluate(const PoseVec& x, double t, const Eigen::VectorXd& y) const;
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                 const Eigen::MatrixXd& ys) const;

  Eigen::MatrixXd assemble_input(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                 const Eigen::MatrixXd& ys) const;

 private:
  int cond_dim_ = 0;
  double horizon_ = 0.0;
  MlpNet trunk_;
};

// Consistency head f_theta(x_t, t, y). The boundary condition is a hard
// branch: for t <= epsilon the function returns x_t bit-identically, whatever
// the parameters; elsewhere it is the free-form trunk F_theta. Trunk
// architecture matches ScoreNet.
class ConsistencyNet {
 public:
  ConsistencyNet() = default;
  ConsistencyNet(int cond_dim, double horizon, double epsilon,
                 const std::vector<int>& hidden_dims, RandomStream& rng);

  int cond_dim() const { return cond_dim_; }
  double horizon() const { return horizon_; }
  double epsilon() const { return epsilon_; }
  MlpNet& trunk() { return trunk_; }
  const MlpNet& trunk() const { return trunk_; }

  // boundary-clamped evaluation
  PoseVec evaluate(const PoseVec& x, double t, const Eigen::VectorXd& y) const;
  // batched clamped evaluation: clamped columns pass through exactly
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                 const Eigen::MatrixXd& ys) const;

  // Training path; every t must lie strictly above epsilon (the clamped branch
  // has no parameters to train), else std::invalid_argument.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                const Eigen::MatrixXd& ys);
  void backward_batch(const Eigen::MatrixXd& upstream);

 private:
  int cond_dim_ = 0;
  double horizon_ = 0.0;
  double epsilon_ = 0.0;
  MlpNet trunk_;
};

// Frozen-parameter target copy theta*. Updated only through ema_update;
// evaluation is const and no gradient machinery ever touches it.
class EmaCopy {
 public:
  EmaCopy() = default;
  EmaCopy(const ConsistencyNet& online, double decay);

  double decay() const { return decay_; }
  const ConsistencyNet& net() const { return net_; }
  ConsistencyNet& net() { return net_; }

  PoseVec evaluate(const PoseVec& x, double t, const Eigen::VectorXd& y) const {
    return net_.evaluate(x, t, y);
  }
  Eigen::MatrixXd evaluate_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                 const Eigen::MatrixXd& ys) const {
    return net_.evaluate_batch(xs, ts, ys);
  }

 private:
  ConsistencyNet net_;
  double decay_ = 0.999;
};

// target <- decay * target + (1 - decay) * online, elementwise over all
// parameters. Shape mismatch throws std::invalid_argument.
void ema_update(EmaCopy& target, const ConsistencyNet& online);

}  // namespace graspflow

#include "graspflow/network.hpp"

#include <cmath>
#include <stdexcept>

namespace graspflow {

namespace {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kGelu:
      return "gelu";
  }
  throw std::invalid_argument("activation_name: unknown tag");
}

Activation activation_from_name(const std::string& name) {
  if (name == "gelu") return Activation::kGelu;
  throw std::invalid_argument("activation_from_name: unknown activation '" + name + "'");
}

Eigen::VectorXd time_features(double t, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("time_features: horizon must be positive");
  if (!(t >= 0.0) || !(t <= horizon)) throw std::domain_error("time_features: t outside [0, T]");
  Eigen::VectorXd f(kTimeFeatureDim);
  double phase = 2.0 * M_PI * t / horizon;
  double freq = 1.0;
  for (int k = 0; k < kTimeFeatureDim / 2; ++k) {
    f(2 * k) = std::sin(freq * phase);
    f(2 * k + 1) = std::cos(freq * phase);
    freq *= 2.0;
  }
  return f;
}

MlpNet::MlpNet(std::vector<int> layer_dims, Activation activation)
    : layer_dims_(std::move(layer_dims)), activation_(activation) {
  if (layer_dims_.size() < 2) throw std::invalid_argument("MlpNet: need at least two layer dims");
  for (int d : layer_dims_)
    if (d <= 0) throw std::invalid_argument("MlpNet: layer dims must be positive");
  int layers = static_cast<int>(layer_dims_.size()) - 1;
  weights_.resize(layers);
  biases_.resize(layers);
  weight_grads_.resize(layers);
  bias_grads_.resize(layers);
  for (int l = 0; l < layers; ++l) {
    weights_[l] = Eigen::MatrixXd::Zero(layer_dims_[l + 1], layer_dims_[l]);
    biases_[l] = Eigen::VectorXd::Zero(layer_dims_[l + 1]);
    weight_grads_[l] = Eigen::MatrixXd::Zero(layer_dims_[l + 1], layer_dims_[l]);
    bias_grads_[l] = Eigen::VectorXd::Zero(layer_dims_[l + 1]);
  }
}

void MlpNet::init_params(RandomStream& rng) {
  int layers = layer_count();
  for (int l = 0; l < layers; ++l) {
    if (l == layers - 1) {
      // zero final layer: a fresh net outputs exactly 0
      weights_[l].setZero();
      biases_[l].setZero();
      continue;
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(layer_dims_[l]));
    for (int i = 0; i < weights_[l].rows(); ++i)
      for (int j = 0; j < weights_[l].cols(); ++j)
        weights_[l](i, j) = scale * (2.0 * rng.uniform() - 1.0);
    biases_[l].setZero();
  }
  has_tape_ = false;
}

Eigen::MatrixXd MlpNet::forward(const Eigen::MatrixXd& input) {
  if (input.rows() != input_dim())
    throw std::invalid_argument("MlpNet::forward: input dimension mismatch");
  int layers = layer_count();
  tape_inputs_.assign(layers, Eigen::MatrixXd());
  tape_preact_.assign(layers, Eigen::MatrixXd());
  Eigen::MatrixXd a = input;
  for (int l = 0; l < layers; ++l) {
    tape_inputs_[l] = a;
    Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
    if (l < layers - 1) {
      tape_preact_[l] = z;
      a = z.unaryExpr([](double v) { return gelu(v); });
    } else {
      a = z;
    }
  }
  has_tape_ = true;
  return a;
}

Eigen::MatrixXd MlpNet::backward(const Eigen::MatrixXd& upstream) {
  if (!has_tape_) throw std::logic_error("MlpNet::backward: no recorded forward pass");
  if (upstream.rows() != output_dim() || upstream.cols() != tape_inputs_[0].cols())
    throw std::invalid_argument("MlpNet::backward: upstream shape mismatch");
  int layers = layer_count();
  Eigen::MatrixXd delta = upstream;
  for (int l = layers - 1; l >= 0; --l) {
    if (l < layers - 1)
      delta = delta.cwiseProduct(tape_preact_[l].unaryExpr([](double v) { return gelu_grad(v); }));
    weight_grads_[l] += delta * tape_inputs_[l].transpose();
    bias_grads_[l] += delta.rowwise().sum();
    delta = (weights_[l].transpose() * delta).eval();
  }
  has_tape_ = false;
  return delta;
}

Eigen::MatrixXd MlpNet::evaluate(const Eigen::MatrixXd& input) const {
  if (input.rows() != input_dim())
    throw std::invalid_argument("MlpNet::evaluate: input dimension mismatch");
  int layers = layer_count();
  Eigen::MatrixXd a = input;
  for (int l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (weights_[l] * a).colwise() + biases_[l];
    a = (l < layers - 1) ? z.unaryExpr([](double v) { return gelu(v); }) : z;
  }
  return a;
}

Eigen::VectorXd MlpNet::evaluate_vec(const Eigen::VectorXd& input) const {
  return evaluate(Eigen::MatrixXd(input)).col(0);
}

void MlpNet::zero_grads() {
  for (auto& g : weight_grads_) g.setZero();
  for (auto& g : bias_grads_) g.setZero();
}

int MlpNet::param_count() const {
  int n = 0;
  for (int l = 0; l < layer_count(); ++l)
    n += static_cast<int>(weights_[l].size() + biases_[l].size());
  return n;
}

Eigen::VectorXd MlpNet::flat_params() const {
  Eigen::VectorXd flat(param_count());
  int k = 0;
  for (int l = 0; l < layer_count(); ++l) {
    for (int i = 0; i < weights_[l].rows(); ++i)
      for (int j = 0; j < weights_[l].cols(); ++j) flat(k++) = weights_[l](i, j);
    for (int i = 0; i < biases_[l].size(); ++i) flat(k++) = biases_[l](i);
  }
  return flat;
}

void MlpNet::set_flat_params(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("MlpNet::set_flat_params: length mismatch");
  int k = 0;
  for (int l = 0; l < layer_count(); ++l) {
    for (int i = 0; i < weights_[l].rows(); ++i)
      for (int j = 0; j < weights_[l].cols(); ++j) weights_[l](i, j) = flat(k++);
    for (int i = 0; i < biases_[l].size(); ++i) biases_[l](i) = flat(k++);
  }
}

Eigen::VectorXd MlpNet::flat_grads() const {
  Eigen::VectorXd flat(param_count());
  int k = 0;
  for (int l = 0; l < layer_count(); ++l) {
    for (int i = 0; i < weight_grads_[l].rows(); ++i)
      for (int j = 0; j < weight_grads_[l].cols(); ++j) flat(k++) = weight_grads_[l](i, j);
    for (int i = 0; i < bias_grads_[l].size(); ++i) flat(k++) = bias_grads_[l](i);
  }
  return flat;
}

namespace {

std::vector<int> trunk_dims(int cond_dim, const std::vector<int>& hidden_dims) {
  if (cond_dim <= 0) throw std::invalid_argument("trunk: cond_dim must be positive");
  if (hidden_dims.empty()) throw std::invalid_argument("trunk: need at least one hidden layer");
  std::vector<int> dims;
  dims.push_back(kPoseDim + kTimeFeatureDim + cond_dim);
  dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
  dims.push_back(kPoseDim);
  return dims;
}

}  // namespace

ScoreNet::ScoreNet(int cond_dim, double horizon, const std::vector<int>& hidden_dims,
                   RandomStream& rng)
    : cond_dim_(cond_dim), horizon_(horizon), trunk_(trunk_dims(cond_dim, hidden_dims)) {
  if (!(horizon > 0.0)) throw std::invalid_argument("ScoreNet: horizon must be positive");
  trunk_.init_params(rng);
}

Eigen::MatrixXd ScoreNet::assemble_input(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                         const Eigen::MatrixXd& ys) const {
  int b = static_cast<int>(ts.size());
  if (xs.rows() != kPoseDim || xs.cols() != b || ys.rows() != cond_dim_ || ys.cols() != b)
    throw std::invalid_argument("ScoreNet: batch dimension mismatch");
  Eigen::MatrixXd input(kPoseDim + kTimeFeatureDim + cond_dim_, b);
  for (int c = 0; c < b; ++c) {
    input.block(0, c, kPoseDim, 1) = xs.col(c);
    input.block(kPoseDim, c, kTimeFeatureDim, 1) = time_features(ts[c], horizon_);
    input.block(kPoseDim + kTimeFeatureDim, c, cond_dim_, 1) = ys.col(c);
  }
  return input;
}

Eigen::MatrixXd ScoreNet::forward_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                        const Eigen::MatrixXd& ys) {
  return trunk_.forward(assemble_input(xs, ts, ys));
}

void ScoreNet::backward_batch(const Eigen::MatrixXd& upstream) { trunk_.backward(upstream); }

Eigen::VectorXd ScoreNet::evaluate(const PoseVec& x, double t, const Eigen::VectorXd& y) const {
  return evaluate_batch(x, {t}, y).col(0);
}

Eigen::MatrixXd ScoreNet::evaluate_batch(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                         const Eigen::MatrixXd& ys) const {
  return trunk_.evaluate(assemble_input(xs, ts, ys));
}

ConsistencyNet::ConsistencyNet(int cond_dim, double horizon, double epsilon,
                               const std::vector<int>& hidden_dims, RandomStream& rng)
    : cond_dim_(cond_dim),
      horizon_(horizon),
      epsilon_(epsilon),
      trunk_(trunk_dims(cond_dim, hidden_dims)) {
  if (!(epsilon > 0.0) || !(epsilon < horizon))
    throw std::invalid_argument("ConsistencyNet: need 0 < epsilon < horizon");
  trunk_.init_params(rng);
}

namespace {

Eigen::MatrixXd assemble_cond_input(const Eigen::MatrixXd& xs, const std::vector<double>& ts,
                                    const Eigen::MatrixXd& ys, int cond_dim, double horizon) {
  int b = static_cast<int>(ts.size());
  if (xs.rows() != kPoseDim || xs.cols() != b || ys.rows() != cond_dim || ys.cols() != b)
    throw std::invalid_argument("ConsistencyNet: batch dimension mismatch");
  Eigen::MatrixXd input(kPoseDim + kTimeFeatureDim + cond_dim, b);
  for (int c = 0; c < b; ++c) {
    input.block(0, c, kPoseDim, 1) = xs.col(c);
    input.block(kPoseDim, c, kTimeFeatureDim, 1) = time_features(ts[c], horizon);
    input.block(kPoseDim + kTimeFeatureDim, c, cond_dim, 1) = ys.col(c);
  }
  return input;
}

}  // namespace

PoseVec ConsistencyNet::evaluate(const PoseVec& x, double t, const Eigen::VectorXd& y) const {
  if (!(t >= 0.0) || !(t <= horizon_))
    throw std::domain_error("ConsistencyNet::evaluate: t outside [0, T]");
  if (t <= epsilon_) return x;  // hard boundary branch: identity, bit for bit
  return trunk_.evaluate(assemble_cond_input(x, {t}, y, cond_dim_, horizon_)).col(0);
}

Eigen::MatrixXd ConsistencyNet::evaluate_batch(const Eigen::MatrixXd& xs,
                                               const std::vector<double>& ts,
                                               const Eigen::MatrixXd& ys) const {
  Eigen::MatrixXd out = trunk_.evaluate(assemble_cond_input(xs, ts, ys, cond_dim_, horizon_));
  for (int c = 0; c < out.cols(); ++c)
    if (ts[c] <= epsilon_) out.col(c) = xs.col(c);
  return out;
}

Eigen::MatrixXd ConsistencyNet::forward_batch(const Eigen::MatrixXd& xs,
                                              const std::vector<double>& ts,
                                              const Eigen::MatrixXd& ys) {
  for (double t : ts)
    if (t <= epsilon_)
      throw std::invalid_argument(
          "ConsistencyNet::forward_batch: t <= epsilon has no trainable branch");
  return trunk_.forward(assemble_cond_input(xs, ts, ys, cond_dim_, horizon_));
}

void ConsistencyNet::backward_batch(const Eigen::MatrixXd& upstream) { trunk_.backward(upstream); }

EmaCopy::EmaCopy(const ConsistencyNet& online, double decay) : net_(online), decay_(decay) {
  if (!(decay >= 0.0) || !(decay <= 1.0))
    throw std::invalid_argument("EmaCopy: decay must lie in [0, 1]");
  net_.trunk().zero_grads();
}

void ema_update(EmaCopy& target, const ConsistencyNet& online) {
  if (target.net().trunk().layer_dims() != online.trunk().layer_dims())
    throw std::invalid_argument("ema_update: parameter shape mismatch");
  double d = target.decay();
  Eigen::VectorXd mixed =
      d * target.net().trunk().flat_params() + (1.0 - d) * online.trunk().flat_params();
  target.net().trunk().set_flat_params(mixed);
}

}  // namespace graspflow

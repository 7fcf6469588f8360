#include "graspflow/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graspflow/flow.hpp"

namespace graspflow {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr_score > 0.0 && lr_score < 1.0) || !(lr_consistency > 0.0 && lr_consistency < 1.0))
    throw std::invalid_argument("TrainConfig: learning rates must lie in (0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("TrainConfig: adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be positive");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0))
    throw std::invalid_argument("TrainConfig: ema_decay must lie in [0, 1]");
  if (grid_n < 2) throw std::invalid_argument("TrainConfig: grid_n must be >= 2");
  if (eval_every < 0 || checkpoint_every < 1)
    throw std::invalid_argument("TrainConfig: bad eval/checkpoint cadence");
  if (hidden_width < 1 || hidden_layers < 1)
    throw std::invalid_argument("TrainConfig: trunk dims must be positive");
  if (cond_dim < 1) throw std::invalid_argument("TrainConfig: cond_dim must be >= 1");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("TrainConfig: grad_clip must be positive");
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: eval_fraction must lie in [0, 1)");
  if (!(prompt_dropout >= 0.0 && prompt_dropout <= 1.0))
    throw std::invalid_argument("TrainConfig: prompt_dropout must lie in [0, 1]");
  // delegate schedule checks (0 < epsilon < horizon etc.)
  NoiseSchedule probe(gamma_min, gamma_max, horizon, epsilon);
  (void)probe;
}

void apply_config_override(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "epochs")
    c.epochs = kv_int(key, value);
  else if (key == "batch_size")
    c.batch_size = kv_int(key, value);
  else if (key == "lr_score")
    c.lr_score = kv_double(key, value);
  else if (key == "lr_consistency")
    c.lr_consistency = kv_double(key, value);
  else if (key == "adam_beta1")
    c.adam_beta1 = kv_double(key, value);
  else if (key == "adam_beta2")
    c.adam_beta2 = kv_double(key, value);
  else if (key == "adam_eps")
    c.adam_eps = kv_double(key, value);
  else if (key == "ema_decay")
    c.ema_decay = kv_double(key, value);
  else if (key == "grid_n")
    c.grid_n = kv_int(key, value);
  else if (key == "gamma_min")
    c.gamma_min = kv_double(key, value);
  else if (key == "gamma_max")
    c.gamma_max = kv_double(key, value);
  else if (key == "T" || key == "horizon")
    c.horizon = kv_double(key, value);
  else if (key == "N")
    c.grid_n = kv_int(key, value);
  else if (key == "epsilon")
    c.epsilon = kv_double(key, value);
  else if (key == "eval_every")
    c.eval_every = kv_int(key, value);
  else if (key == "checkpoint_every")
    c.checkpoint_every = kv_int(key, value);
  else if (key == "seed")
    c.seed = kv_uint64(key, value);
  else if (key == "hidden_width")
    c.hidden_width = kv_int(key, value);
  else if (key == "hidden_layers")
    c.hidden_layers = kv_int(key, value);
  else if (key == "cond_dim")
    c.cond_dim = kv_int(key, value);
  else if (key == "grad_clip")
    c.grad_clip = kv_double(key, value);
  else if (key == "eval_fraction")
    c.eval_fraction = kv_double(key, value);
  else if (key == "prompt_dropout")
    c.prompt_dropout = kv_double(key, value);
  else
    throw ConfigError("unknown training config key '" + key + "'");
}

TrainConfig parse_train_config(const std::filesystem::path& path) {
  TrainConfig config;
  for (const auto& [key, value] : parse_kv_file(path)) apply_config_override(config, key, value);
  config.validate();
  return config;
}

std::string config_canonical_string(const TrainConfig& c) {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  // epochs is excluded on purpose: it is run length, not run identity, so a
  // resumed run may extend training without tripping the hash check
  std::ostringstream os;
  os << "adam_beta1=" << num(c.adam_beta1) << "\n"
     << "adam_beta2=" << num(c.adam_beta2) << "\n"
     << "adam_eps=" << num(c.adam_eps) << "\n"
     << "batch_size=" << c.batch_size << "\n"
     << "checkpoint_every=" << c.checkpoint_every << "\n"
     << "cond_dim=" << c.cond_dim << "\n"
     << "ema_decay=" << num(c.ema_decay) << "\n"
     << "epsilon=" << num(c.epsilon) << "\n"
     << "eval_every=" << c.eval_every << "\n"
     << "eval_fraction=" << num(c.eval_fraction) << "\n"
     << "gamma_max=" << num(c.gamma_max) << "\n"
     << "gamma_min=" << num(c.gamma_min) << "\n"
     << "grad_clip=" << num(c.grad_clip) << "\n"
     << "grid_n=" << c.grid_n << "\n"
     << "hidden_layers=" << c.hidden_layers << "\n"
     << "hidden_width=" << c.hidden_width << "\n"
     << "horizon=" << num(c.horizon) << "\n"
     << "lr_consistency=" << num(c.lr_consistency) << "\n"
     << "lr_score=" << num(c.lr_score) << "\n"
     << "prompt_dropout=" << num(c.prompt_dropout) << "\n"
     << "seed=" << c.seed << "\n";
  return os.str();
}

std::string config_hash(const TrainConfig& config) {
  uint64_t h = fnv1a64(config_canonical_string(config));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void AdamState::restore(long long step, Eigen::VectorXd m, Eigen::VectorXd v) {
  if (m.size() != v.size()) throw std::invalid_argument("AdamState: buffer size mismatch");
  if (step < 0) throw std::invalid_argument("AdamState: negative step");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamState::update(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr,
                       double beta1, double beta2, double eps) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("AdamState: size mismatch");
  step_ += 1;
  m_ = beta1 * m_ + (1.0 - beta1) * grads;
  v_ = beta2 * v_ + (1.0 - beta2) * grads.cwiseProduct(grads);
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  params -= (lr / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + eps).matrix());
}

double clip_global_norm(Eigen::VectorXd& grads, double ceiling) {
  double norm = grads.norm();
  if (norm > ceiling && norm > 0.0) grads *= ceiling / norm;
  return norm;
}

TrainerState::TrainerState(const TrainConfig& cfg)
    : config(cfg),
      schedule(cfg.gamma_min, cfg.gamma_max, cfg.horizon, cfg.epsilon),
      grid(schedule.uniform_grid(cfg.grid_n)),
      rng(derive_seed(cfg.seed, fnv1a64("trainer-stream"))) {
  config.validate();
  RandomStream init_rng(derive_seed(cfg.seed, fnv1a64("param-init")));
  score = ScoreNet(cfg.cond_dim, cfg.horizon, cfg.hidden_dims(), init_rng);
  consistency = ConsistencyNet(cfg.cond_dim, cfg.horizon, cfg.epsilon, cfg.hidden_dims(), init_rng);
  target = EmaCopy(consistency, cfg.ema_decay);
  adam_score = AdamState(score.trunk().param_count());
  adam_consistency = AdamState(consistency.trunk().param_count());
}

LossBreakdown train_step(TrainerState& state, const TrainBatch& batch) {
  const TrainConfig& c = state.config;
  LossBreakdown losses;

  state.score.trunk().zero_grads();
  losses.score = score_loss(state.score, batch, state.schedule, state.rng);
  {
    Eigen::VectorXd g = state.score.trunk().flat_grads();
    clip_global_norm(g, c.grad_clip);
    Eigen::VectorXd p = state.score.trunk().flat_params();
    state.adam_score.update(p, g, c.lr_score, c.adam_beta1, c.adam_beta2, c.adam_eps);
    state.score.trunk().set_flat_params(p);
  }

  state.consistency.trunk().zero_grads();
  losses.consistency = consistency_loss(state.consistency, state.target, state.score, state.grid,
                                        batch, state.schedule, state.rng);
  losses.detection =
      detection_loss(state.consistency, state.grid, batch, state.schedule, state.rng);
  {
    Eigen::VectorXd g = state.consistency.trunk().flat_grads();
    clip_global_norm(g, c.grad_clip);
    Eigen::VectorXd p = state.consistency.trunk().flat_params();
    state.adam_consistency.update(p, g, c.lr_consistency, c.adam_beta1, c.adam_beta2, c.adam_eps);
    state.consistency.trunk().set_flat_params(p);
  }

  ema_update(state.target, state.consistency);
  state.step += 1;
  losses.total = losses.consistency + losses.detection;

  // a NaN parameter shows up as a NaN loss one step later at the latest, so
  // checking the losses every step is the cheap and sufficient guard
  if (!std::isfinite(losses.score) || !std::isfinite(losses.total)) {
    std::ostringstream os;
    os << "training diverged at step " << state.step << ": score=" << losses.score
       << " consistency=" << losses.consistency << " detection=" << losses.detection
       << " |phi|=" << state.score.trunk().flat_params().norm()
       << " |theta|=" << state.consistency.trunk().flat_params().norm();
    throw TrainDivergenceError(os.str());
  }
  return losses;
}

namespace {

ordered_json net_to_json(const MlpNet& net) {
  ordered_json j;
  j["layer_dims"] = net.layer_dims();
  j["activation"] = activation_name(net.activation());
  j["layers"] = ordered_json::array();
  for (int l = 0; l < net.layer_count(); ++l) {
    ordered_json layer;
    const Eigen::MatrixXd& w = net.weights()[l];
    ordered_json warr = ordered_json::array();
    for (int i = 0; i < w.rows(); ++i)
      for (int jj = 0; jj < w.cols(); ++jj) warr.push_back(w(i, jj));
    layer["w"] = std::move(warr);
    ordered_json barr = ordered_json::array();
    const Eigen::VectorXd& b = net.biases()[l];
    for (int i = 0; i < b.size(); ++i) barr.push_back(b(i));
    layer["b"] = std::move(barr);
    j["layers"].push_back(std::move(layer));
  }
  return j;
}

void net_params_from_json(MlpNet& net, const ordered_json& j, const std::string& what) {
  std::vector<int> dims = j.at("layer_dims").get<std::vector<int>>();
  if (dims != net.layer_dims())
    throw CheckpointError("checkpoint " + what + ": layer_dims mismatch");
  if (activation_from_name(j.at("activation").get<std::string>()) != net.activation())
    throw CheckpointError("checkpoint " + what + ": activation mismatch");
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != net.layer_count())
    throw CheckpointError("checkpoint " + what + ": layer count mismatch");
  Eigen::VectorXd flat(net.param_count());
  int k = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    int rows = dims[l + 1], cols = dims[l];
    const auto& warr = layers[l].at("w");
    const auto& barr = layers[l].at("b");
    if (static_cast<int>(warr.size()) != rows * cols ||
        static_cast<int>(barr.size()) != rows)
      throw CheckpointError("checkpoint " + what + ": layer " + std::to_string(l) +
                            " parameter shape mismatch");
    for (int i = 0; i < rows * cols; ++i) flat(k++) = warr[i].get<double>();
    for (int i = 0; i < rows; ++i) flat(k++) = barr[i].get<double>();
  }
  net.set_flat_params(flat);
}

ordered_json adam_to_json(const AdamState& adam) {
  ordered_json j;
  j["step"] = adam.step();
  ordered_json m = ordered_json::array(), v = ordered_json::array();
  for (int i = 0; i < adam.m().size(); ++i) m.push_back(adam.m()(i));
  for (int i = 0; i < adam.v().size(); ++i) v.push_back(adam.v()(i));
  j["m"] = std::move(m);
  j["v"] = std::move(v);
  return j;
}

void adam_from_json(AdamState& adam, const ordered_json& j, int expected, const std::string& what) {
  const auto& marr = j.at("m");
  const auto& varr = j.at("v");
  if (static_cast<int>(marr.size()) != expected || static_cast<int>(varr.size()) != expected)
    throw CheckpointError("checkpoint " + what + ": optimizer buffer size mismatch");
  Eigen::VectorXd m(expected), v(expected);
  for (int i = 0; i < expected; ++i) m(i) = marr[i].get<double>();
  for (int i = 0; i < expected; ++i) v(i) = varr[i].get<double>();
  adam.restore(j.at("step").get<long long>(), std::move(m), std::move(v));
}

ordered_json config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr_score"] = c.lr_score;
  j["lr_consistency"] = c.lr_consistency;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["ema_decay"] = c.ema_decay;
  j["grid_n"] = c.grid_n;
  j["gamma_min"] = c.gamma_min;
  j["gamma_max"] = c.gamma_max;
  j["horizon"] = c.horizon;
  j["epsilon"] = c.epsilon;
  j["eval_every"] = c.eval_every;
  j["checkpoint_every"] = c.checkpoint_every;
  j["seed"] = c.seed;
  j["hidden_width"] = c.hidden_width;
  j["hidden_layers"] = c.hidden_layers;
  j["cond_dim"] = c.cond_dim;
  j["grad_clip"] = c.grad_clip;
  j["eval_fraction"] = c.eval_fraction;
  j["prompt_dropout"] = c.prompt_dropout;
  return j;
}

TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr_score = j.at("lr_score").get<double>();
  c.lr_consistency = j.at("lr_consistency").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.ema_decay = j.at("ema_decay").get<double>();
  c.grid_n = j.at("grid_n").get<int>();
  c.gamma_min = j.at("gamma_min").get<double>();
  c.gamma_max = j.at("gamma_max").get<double>();
  c.horizon = j.at("horizon").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.eval_every = j.at("eval_every").get<int>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.hidden_width = j.at("hidden_width").get<int>();
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.cond_dim = j.at("cond_dim").get<int>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.eval_fraction = j.at("eval_fraction").get<double>();
  c.prompt_dropout = j.at("prompt_dropout").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const TrainerState& state, const std::filesystem::path& path) {
  ordered_json j;
  j["schema_version"] = 1;
  j["config_hash"] = config_hash(state.config);
  j["config"] = config_to_json(state.config);
  j["step"] = state.step;
  j["best_metric"] = state.best_metric;
  j["score_net"] = net_to_json(state.score.trunk());
  j["consistency_net"] = net_to_json(state.consistency.trunk());
  j["ema_net"] = net_to_json(state.target.net().trunk());
  j["adam_score"] = adam_to_json(state.adam_score);
  j["adam_consistency"] = adam_to_json(state.adam_consistency);
  j["rng_state"] = state.rng.save_state();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    out << j.dump() << "\n";
    if (!out.good()) throw std::runtime_error("save_checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainerState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("load_checkpoint: cannot open " + path.string());
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("load_checkpoint: " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    int version = j.at("schema_version").get<int>();
    if (version != 1)
      throw CheckpointError("load_checkpoint: unsupported schema version " +
                            std::to_string(version));
    TrainConfig config = config_from_json(j.at("config"));
    TrainerState state(config);
    net_params_from_json(state.score.trunk(), j.at("score_net"), "score_net");
    net_params_from_json(state.consistency.trunk(), j.at("consistency_net"), "consistency_net");
    net_params_from_json(state.target.net().trunk(), j.at("ema_net"), "ema_net");
    adam_from_json(state.adam_score, j.at("adam_score"), state.score.trunk().param_count(),
                   "adam_score");
    adam_from_json(state.adam_consistency, j.at("adam_consistency"),
                   state.consistency.trunk().param_count(), "adam_consistency");
    state.rng.restore_state(j.at("rng_state").get<std::string>());
    state.step = j.at("step").get<long long>();
    state.best_metric = j.at("best_metric").get<double>();
    if (j.at("config_hash").get<std::string>() != config_hash(config))
      throw CheckpointError("load_checkpoint: stored config hash does not match stored config");
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("load_checkpoint: " + path.string() + ": missing or mistyped field: " +
                          e.what());
  }
}

namespace {

// success rate of one-step sampling over the held-out tail; all randomness is
// derived from (seed, step, index) so evaluation never touches the trainer
// stream
double fit_eval_metric(const TrainerState& state, const std::vector<Sample>& dataset,
                       const std::vector<int>& eval_ids) {
  if (eval_ids.empty()) return -1.0;
  uint64_t base = derive_seed(state.config.seed ^ fnv1a64("fit-eval"),
                              static_cast<uint64_t>(state.step));
  int hits = 0;
  for (size_t k = 0; k < eval_ids.size(); ++k) {
    const Sample& sample = dataset[eval_ids[k]];
    RandomStream rng(derive_seed(base, static_cast<uint64_t>(k)));
    ConsistencySample draw =
        sample_consistency(state.consistency, sample.condition, 1, state.schedule, rng);
    GraspPose pred = decode_pose(draw.x0, sample.scene.extent);
    if (is_success(pred, sample.gt_grasps)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(eval_ids.size());
}

std::vector<int> epoch_permutation(int n, uint64_t seed, long long epoch) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  RandomStream rng(derive_seed(seed ^ fnv1a64("epoch-shuffle"), static_cast<uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    int j = rng.uniform_int(0, i);
    std::swap(perm[i], perm[j]);
  }
  return perm;
}

}  // namespace

FitResult fit(const TrainConfig& config, const std::vector<Sample>& dataset,
              const std::filesystem::path& out_dir, const std::filesystem::path& resume_path,
              bool force_resume) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("fit: empty dataset");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("fit: cannot create " + out_dir.string());

  int n = static_cast<int>(dataset.size());
  int n_eval = n >= 2 ? std::min(std::max(1, static_cast<int>(std::lround(config.eval_fraction * n))),
                                 n - 1)
                      : 0;
  if (config.eval_fraction == 0.0) n_eval = 0;
  int n_train = n - n_eval;
  std::vector<int> eval_ids(n_eval);
  for (int i = 0; i < n_eval; ++i) eval_ids[i] = n_train + i;

  // precompute per-sample training tensors
  std::vector<std::vector<PoseVec>> x0s(n);
  Eigen::MatrixXd conditions(config.cond_dim, n);
  for (int i = 0; i < n; ++i) {
    if (dataset[i].condition.size() != config.cond_dim)
      throw std::invalid_argument("fit: dataset condition dim does not match config cond_dim");
    conditions.col(i) = dataset[i].condition;
    for (const GraspPose& g : dataset[i].gt_grasps)
      x0s[i].push_back(encode_pose(g, dataset[i].scene.extent));
    if (x0s[i].empty()) throw std::invalid_argument("fit: sample without ground-truth grasps");
  }

  TrainerState state = [&]() {
    if (resume_path.empty()) return TrainerState(config);
    TrainerState loaded = load_checkpoint(resume_path);
    if (config_hash(loaded.config) == config_hash(config)) {
      loaded.config = config;  // identical identity; adopt the requested run length
    } else if (force_resume) {
      // Forced resume = fine-tune: the checkpoint keeps what defines the
      // trained artifact (architecture, noise schedule, seed) and the request
      // supplies the new run dynamics (e.g. a decayed learning rate).
      TrainConfig merged = loaded.config;
      merged.epochs = config.epochs;
      merged.batch_size = config.batch_size;
      merged.lr_score = config.lr_score;
      merged.lr_consistency = config.lr_consistency;
      merged.adam_beta1 = config.adam_beta1;
      merged.adam_beta2 = config.adam_beta2;
      merged.adam_eps = config.adam_eps;
      merged.ema_decay = config.ema_decay;
      merged.grad_clip = config.grad_clip;
      merged.eval_every = config.eval_every;
      merged.checkpoint_every = config.checkpoint_every;
      merged.eval_fraction = config.eval_fraction;
      merged.prompt_dropout = config.prompt_dropout;
      merged.validate();
      loaded.config = merged;
      loaded.target = EmaCopy(loaded.target.net(), merged.ema_decay);
    } else {
      throw CheckpointError("fit: resume checkpoint config hash " + config_hash(loaded.config) +
                            " does not match requested config " + config_hash(config));
    }
    return loaded;
  }();

  long long steps_per_epoch = (n_train + config.batch_size - 1) / config.batch_size;
  long long total_steps = static_cast<long long>(config.epochs) * steps_per_epoch;

  FitResult result;
  result.last_checkpoint = out_dir / "last.json";
  result.best_checkpoint = out_dir / "best.json";
  result.log_path = out_dir / "train_log.csv";

  std::ofstream log(result.log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw std::runtime_error("fit: cannot open " + result.log_path.string());
  log << "step,score,consistency,detection,total,wall_ms\n";

  long long perm_epoch = -1;
  std::vector<int> perm;
  char row[256];
  bool wrote_best = false;

  while (state.step < total_steps) {
    long long epoch = state.step / steps_per_epoch;
    long long pos = state.step % steps_per_epoch;
    if (epoch != perm_epoch) {
      perm = epoch_permutation(n_train, config.seed, epoch);
      perm_epoch = epoch;
    }

    int lo = static_cast<int>(pos) * config.batch_size;
    int hi = std::min(lo + config.batch_size, n_train);
    int b = hi - lo;
    const bool scramble_prompts =
        config.prompt_dropout > 0.0 && config.cond_dim > kPromptEmbedDim;
    TrainBatch batch;
    batch.x0.resize(kPoseDim, b);
    batch.y.resize(config.cond_dim, b);
    for (int k = 0; k < b; ++k) {
      int id = perm[lo + k];
      int pick = state.rng.uniform_int(0, static_cast<int>(x0s[id].size()) - 1);
      batch.x0.col(k) = x0s[id][pick];
      batch.y.col(k) = conditions.col(id);
      if (scramble_prompts && state.rng.uniform() < config.prompt_dropout) {
        // same construction as dataset prompt embeddings: random unit vector
        batch.y.col(k).tail(kPromptEmbedDim) = state.rng.gaussian_vector(kPromptEmbedDim).normalized();
      }
    }

    auto t0 = std::chrono::steady_clock::now();
    LossBreakdown losses = train_step(state, batch);
    double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::snprintf(row, sizeof(row), "%lld,%.17g,%.17g,%.17g,%.17g,%.3f\n", state.step, losses.score,
                  losses.consistency, losses.detection, losses.total, wall_ms);
    log << row;

    if (config.eval_every > 0 && state.step % config.eval_every == 0 && !eval_ids.empty()) {
      double metric = fit_eval_metric(state, dataset, eval_ids);
      if (metric > state.best_metric) {
        state.best_metric = metric;
        save_checkpoint(state, result.best_checkpoint);
        wrote_best = true;
      }
    }
    if (state.step % config.checkpoint_every == 0) save_checkpoint(state, result.last_checkpoint);
  }

  save_checkpoint(state, result.last_checkpoint);
  if (!wrote_best && !std::filesystem::exists(result.best_checkpoint))
    save_checkpoint(state, result.best_checkpoint);
  log.flush();
  if (!log.good()) throw std::runtime_error("fit: log write failed");
  result.steps = state.step;
  result.best_metric = state.best_metric;
  return result;
}

}  // namespace graspflow

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "graspflow/kvconfig.hpp"
#include "graspflow/network.hpp"
#include "graspflow/objectives.hpp"
#include "graspflow/schedule.hpp"
#include "graspflow/synthdata.hpp"

namespace graspflow {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainDivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  double lr_score = 1e-4;
  double lr_consistency = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  int grid_n = 2000;
  double gamma_min = 1e-4;
  double gamma_max = 2e-2;
  double horizon = 1000.0;
  double epsilon = 1.0;
  int eval_every = 500;        // steps between held-out evaluations; 0 disables
  int checkpoint_every = 1000; // steps between periodic checkpoint writes
  uint64_t seed = 0;
  int hidden_width = 256;
  int hidden_layers = 4;
  int cond_dim = kConditionDim;
  double grad_clip = 10.0;     // global-norm ceiling per network per step
  double eval_fraction = 0.05; // tail share of the dataset held out during fit
  // Probability that a training sample's prompt-embedding block (the trailing
  // kPromptEmbedDim entries of y) is replaced by a fresh random unit vector
  // while the regression target stays put. Prompt embeddings are hashed unit
  // vectors, so a prompt outside the training vocabulary looks like exactly
  // such a vector; this teaches the nets to fall back on scene context instead
  // of extrapolating from unfamiliar prompt directions. No-op when cond_dim
  // has no prompt block (cond_dim <= kPromptEmbedDim).
  double prompt_dropout = 0.1;

  void validate() const;  // throws std::invalid_argument
  std::vector<int> hidden_dims() const { return std::vector<int>(hidden_layers, hidden_width); }
};

// flat key=value file; unknown keys are named in the thrown ConfigError
TrainConfig parse_train_config(const std::filesystem::path& path);
// apply "key=value" override pairs (CLI flags win over file values)
void apply_config_override(TrainConfig& config, const std::string& key, const std::string& value);

// Canonical one-key-per-line rendering; equal configs render equal strings.
// epochs is deliberately left out: it sets run length, not run identity, so
// resuming with a larger epoch count is hash-compatible.
std::string config_canonical_string(const TrainConfig& config);
// 16-hex-digit fingerprint of the canonical string
std::string config_hash(const TrainConfig& config);

// Adam with bias correction over a flat parameter vector.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(int n) : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  long long step() const { return step_; }
  const Eigen::VectorXd& m() const { return m_; }
  const Eigen::VectorXd& v() const { return v_; }
  void restore(long long step, Eigen::VectorXd m, Eigen::VectorXd v);

  void update(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr, double beta1,
              double beta2, double eps);

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long long step_ = 0;
};

// rescale to the ceiling when the l2 norm exceeds it; returns the pre-clip norm
double clip_global_norm(Eigen::VectorXd& grads, double ceiling);

// Everything one training run owns. Copyable, so tests can fork runs.
struct TrainerState {
  TrainConfig config;
  NoiseSchedule schedule;
  TimeGrid grid;
  ScoreNet score;
  ConsistencyNet consistency;
  EmaCopy target;
  AdamState adam_score;
  AdamState adam_consistency;
  RandomStream rng;
  long long step = 0;
  double best_metric = -1.0;  // best held-out success rate seen by fit; -1 = none

  explicit TrainerState(const TrainConfig& config);
};

// One optimizer step: phi gets the score-matching gradient, then theta gets
// the consistency + detection gradient (the freshly updated score net serves
// as the frozen oracle inside the Euler step), then the EMA target moves.
// Non-finite losses abort with a diagnostic TrainDivergenceError.
LossBreakdown train_step(TrainerState& state, const TrainBatch& batch);

struct FitResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path log_path;
  long long steps = 0;
  double best_metric = -1.0;
};

// Full training run over a generated dataset: seeded epoch shuffles, periodic
// held-out evaluation (one-step sampling success rate), best/last checkpoints,
// and a per-step CSV log (step,score,consistency,detection,total,wall_ms; the
// wall_ms column is the one intentionally non-deterministic output). Resuming
// restores bit-exact state; a config-hash mismatch throws unless forced, and a
// forced resume fine-tunes: the checkpoint keeps its architecture, noise
// schedule, and seed while the requested config supplies the run dynamics
// (epochs, batch size, learning rates, Adam/EMA/clip settings, cadences,
// prompt dropout).
FitResult fit(const TrainConfig& config, const std::vector<Sample>& dataset,
              const std::filesystem::path& out_dir,
              const std::filesystem::path& resume_path = {}, bool force_resume = false);

// Atomic (temp file + rename) JSON checkpoint holding config, both networks,
// the EMA copy, both Adam states, the RNG state, and the step counter.
void save_checkpoint(const TrainerState& state, const std::filesystem::path& path);
// Validates schema version and every array shape before any state is built;
// failures throw CheckpointError and leave nothing partially loaded.
TrainerState load_checkpoint(const std::filesystem::path& path);

}  // namespace graspflow

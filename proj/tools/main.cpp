// Command-line front end: dataset generation, training, sampling, trajectory
// inspection, evaluation, and latency benchmarking behind one binary.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "graspflow/evalbench.hpp"
#include "graspflow/flow.hpp"
#include "graspflow/synthdata.hpp"
#include "graspflow/trainer.hpp"

namespace fs = std::filesystem;
using namespace graspflow;

namespace {

std::vector<int> parse_steps_list(const std::string& csv, const std::string& flag) {
  std::vector<int> out;
  std::string item;
  std::istringstream is(csv);
  while (std::getline(is, item, ',')) {
    int v = kv_int(flag, item);
    if (v < 1) throw ConfigError(flag + ": step counts must be >= 1, got '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(flag + ": empty list");
  return out;
}

void print_kv(const char* key, const std::string& value) {
  std::cout << "  " << key << "=" << value << "\n";
}
void print_kv(const char* key, double value) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  print_kv(key, std::string(buf));
}
void print_kv(const char* key, uint64_t value) { print_kv(key, std::to_string(value)); }
void print_kv(const char* key, int value) { print_kv(key, std::to_string(value)); }

void print_synth_config(const SynthConfig& c) {
  print_kv("extent", c.extent);
  print_kv("k_max", c.k_max);
  print_kv("scale_min", c.scale_min);
  print_kv("scale_max", c.scale_max);
  print_kv("rotation_limit", c.rotation_limit);
  print_kv("unseen_fraction", c.unseen_fraction);
}

struct GenDataArgs {
  std::string out;
  int n = 0;
  uint64_t seed = 0;
  std::string config_path;
  double unseen_frac = -1.0;
  bool unseen_set = false;
};

int run_gen_data(const GenDataArgs& a) {
  SynthConfig config;
  if (!a.config_path.empty()) config = parse_synth_config(a.config_path);
  if (a.unseen_set) config.unseen_fraction = a.unseen_frac;
  config.validate();
  std::cout << "[gen-data] resolved config\n";
  print_synth_config(config);
  print_kv("n", a.n);
  print_kv("seed", a.seed);
  print_kv("out", a.out);
  build_dataset(a.out, a.n, config, a.seed);
  std::cout << "[gen-data] wrote " << (fs::path(a.out) / "samples.jsonl").string() << " and "
            << (fs::path(a.out) / "manifest.json").string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string data;
  std::string out;
  std::string resume;
  bool force_resume = false;
  uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
};

int run_train(const TrainArgs& a) {
  TrainConfig config = parse_train_config(a.config_path);
  for (const std::string& kv : a.overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_config_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed_set) config.seed = a.seed;
  config.validate();

  std::cout << "[train] resolved config (hash " << config_hash(config) << ")\n";
  std::istringstream lines(config_canonical_string(config));
  for (std::string line; std::getline(lines, line);) std::cout << "  " << line << "\n";
  print_kv("data", a.data);
  print_kv("out", a.out);
  if (!a.resume.empty()) print_kv("resume", a.resume);

  std::vector<Sample> dataset = load_dataset(a.data);
  FitResult result = fit(config, dataset, a.out, a.resume, a.force_resume);
  std::cout << "[train] finished after " << result.steps << " steps\n"
            << "[train] last checkpoint:  " << result.last_checkpoint.string() << "\n"
            << "[train] best checkpoint:  " << result.best_checkpoint.string() << "\n"
            << "[train] log:              " << result.log_path.string() << "\n"
            << "[train] best held-out success rate: " << result.best_metric << "\n";
  return 0;
}

struct SampleArgs {
  std::string checkpoint;
  std::string data;
  int index = 0;
  int steps = 1;
  uint64_t seed = 0;
  std::string json_out;
};

int run_sample(const SampleArgs& a) {
  TrainerState state = load_checkpoint(a.checkpoint);
  std::vector<Sample> dataset = load_dataset(a.data);
  if (a.index < 0 || a.index >= static_cast<int>(dataset.size()))
    throw std::invalid_argument("--index out of range: " + std::to_string(a.index) +
                                " for dataset of " + std::to_string(dataset.size()));
  const Sample& sample = dataset[a.index];

  std::cout << "[sample] resolved config\n";
  print_kv("checkpoint", a.checkpoint);
  print_kv("config_hash", config_hash(state.config));
  print_kv("data", a.data);
  print_kv("index", a.index);
  print_kv("steps", a.steps);
  print_kv("seed", a.seed);

  RandomStream rng(a.seed);
  ConsistencySample draw =
      sample_consistency(state.consistency, sample.condition, a.steps, state.schedule, rng);
  GraspPose pose = decode_pose(draw.x0, sample.scene.extent);
  bool hit = is_success(pose, sample.gt_grasps);

  std::cout << "[sample] prompt: " << sample.prompt.text << "\n";
  std::cout << "[sample] network calls: " << draw.net_evals << "\n";
  char line[256];
  std::snprintf(line, sizeof(line),
                "[sample] grasp: cx=%.6f cy=%.6f w=%.6f h=%.6f theta=%.6f\n", pose.cx, pose.cy,
                pose.w, pose.h, pose.theta);
  std::cout << line;
  std::cout << "[sample] success vs ground truth: " << (hit ? "yes" : "no") << "\n";

  if (!a.json_out.empty()) {
    nlohmann::ordered_json j;
    j["pose"] = {{"cx", pose.cx}, {"cy", pose.cy}, {"w", pose.w}, {"h", pose.h},
                 {"theta", pose.theta}};
    j["encoded"] = std::vector<double>(draw.x0.data(), draw.x0.data() + kPoseDim);
    j["steps"] = a.steps;
    j["net_evals"] = draw.net_evals;
    j["index"] = a.index;
    j["seed"] = a.seed;
    j["success"] = hit;
    std::ofstream out(a.json_out, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + a.json_out);
    out << j.dump(2) << "\n";
  }
  return 0;
}

struct TrajArgs {
  std::string checkpoint;
  std::string data;
  int index = 0;
  int grid_n = 2000;
  std::string out;
  std::string field = "net";
  uint64_t seed = 0;
};

int run_inspect_trajectory(const TrajArgs& a) {
  if (a.field != "net" && a.field != "stationary")
    throw std::invalid_argument("--field must be 'net' or 'stationary'");

  std::cout << "[inspect-trajectory] resolved config\n";
  print_kv("field", a.field);
  print_kv("grid", a.grid_n);
  print_kv("seed", a.seed);
  print_kv("out", a.out);

  RandomStream rng(a.seed);
  PoseVec x_terminal;
  for (int i = 0; i < kPoseDim; ++i) x_terminal(i) = rng.gaussian();

  Trajectory traj;
  if (a.field == "stationary") {
    NoiseSchedule schedule = NoiseSchedule::standard();
    TimeGrid grid = schedule.uniform_grid(a.grid_n);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
    traj = solve_pf_ode(make_standard_normal_field(), x_terminal, grid, y, schedule);
  } else {
    if (a.checkpoint.empty() || a.data.empty())
      throw std::invalid_argument("--field net requires --checkpoint and --data");
    TrainerState state = load_checkpoint(a.checkpoint);
    std::vector<Sample> dataset = load_dataset(a.data);
    if (a.index < 0 || a.index >= static_cast<int>(dataset.size()))
      throw std::invalid_argument("--index out of range: " + std::to_string(a.index));
    print_kv("checkpoint", a.checkpoint);
    print_kv("config_hash", config_hash(state.config));
    print_kv("index", a.index);
    TimeGrid grid = state.schedule.uniform_grid(a.grid_n);
    traj = solve_pf_ode(make_net_field(state.score), x_terminal, grid,
                        dataset[a.index].condition, state.schedule);
  }
  write_trajectory_csv(traj, a.out);
  std::cout << "[inspect-trajectory] wrote " << traj.times.size() << " rows to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string steps_list = "1,3,10";
  std::string out;
  uint64_t seed = 0;
  int threads = 1;
};

int run_eval(const EvalArgs& a) {
  std::vector<int> steps = parse_steps_list(a.steps_list, "--steps-list");
  TrainerState state = load_checkpoint(a.checkpoint);
  std::vector<Sample> dataset = load_dataset(a.data);
  std::string hash = config_hash(state.config);

  std::cout << "[eval] resolved config\n";
  print_kv("checkpoint", a.checkpoint);
  print_kv("config_hash", hash);
  print_kv("data", a.data);
  print_kv("steps_list", a.steps_list);
  print_kv("seed", a.seed);
  print_kv("threads", a.threads);
  print_kv("out", a.out);

  std::vector<EvalReport> reports;
  for (int p : steps) {
    SamplerFn sampler = make_consistency_sampler(state.consistency, p, state.schedule);
    reports.push_back(evaluate(sampler, "consistency", p, dataset, a.seed, hash, a.threads));
    const EvalReport& r = reports.back();
    char line[256];
    std::snprintf(line, sizeof(line),
                  "[eval] P=%d seen %d/%d (%.3f) unseen %d/%d (%.3f) H=%.3f "
                  "median %.6fs p95 %.6fs\n",
                  p, r.seen.successes, r.seen.n, r.seen.rate(), r.unseen.successes, r.unseen.n,
                  r.unseen.rate(), r.harmonic, r.latency_median_s, r.latency_p95_s);
    std::cout << line;
  }

  // Written reports carry zeroed latency columns so identical seeds produce
  // byte-identical files; measured latencies go to stdout above and to the
  // dedicated bench command.
  std::vector<EvalReport> stable = reports;
  for (EvalReport& r : stable) {
    r.latency_median_s = 0.0;
    r.latency_p95_s = 0.0;
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw std::runtime_error("cannot create " + a.out);
  emit_report(stable, fs::path(a.out) / "report.csv", fs::path(a.out) / "report.txt");
  std::cout << "[eval] wrote " << (fs::path(a.out) / "report.csv").string() << " and "
            << (fs::path(a.out) / "report.txt").string() << "\n";
  return 0;
}

struct BenchArgs {
  std::string checkpoint;
  std::string data;
  std::string steps_list = "1,3,10";
  std::string ddpm_steps = "1000";
  int trials = 50;
  std::string out;
  uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
  std::vector<int> steps = parse_steps_list(a.steps_list, "--steps-list");
  std::vector<int> ddpm = parse_steps_list(a.ddpm_steps, "--ddpm-steps");
  TrainerState state = load_checkpoint(a.checkpoint);
  std::vector<Sample> dataset = load_dataset(a.data);
  std::string hash = config_hash(state.config);

  std::cout << "[bench] resolved config\n";
  print_kv("checkpoint", a.checkpoint);
  print_kv("config_hash", hash);
  print_kv("data", a.data);
  print_kv("steps_list", a.steps_list);
  print_kv("ddpm_steps", a.ddpm_steps);
  print_kv("trials", a.trials);
  print_kv("seed", a.seed);
  print_kv("out", a.out);

  const Sample& probe = dataset.at(0);
  ScoreField score_field = make_net_field(state.score);

  std::string csv = "sampler_id,steps,median_s,p95_s,trials,seed,config_hash\n";
  char line[256];
  uint64_t row = 0;
  auto add_row = [&](const std::string& id, int p, const SamplerFn& sampler) {
    LatencyStats stats = bench_latency(sampler, probe, a.trials, derive_seed(a.seed, row++));
    std::snprintf(line, sizeof(line), "%s,%d,%.17g,%.17g,%d,%" PRIu64 ",%s\n", id.c_str(), p,
                  stats.median_s, stats.p95_s, stats.trials, a.seed, hash.c_str());
    csv += line;
    std::snprintf(line, sizeof(line), "[bench] %-11s steps=%-5d median %.6fs p95 %.6fs\n",
                  id.c_str(), p, stats.median_s, stats.p95_s);
    std::cout << line;
  };
  for (int p : steps) add_row("consistency", p, make_consistency_sampler(state.consistency, p, state.schedule));
  for (int s : ddpm) add_row("ddpm", s, make_ddpm_sampler(score_field, s, state.schedule));

  std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + a.out);
  out << csv;
  if (!out.good()) throw std::runtime_error("write failed for " + a.out);
  std::cout << "[bench] wrote " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-conditioned grasp generation toolkit"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic grasp dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--n", gen.n, "number of samples")->required();
  gen_cmd->add_option("--seed", gen.seed, "master seed");
  gen_cmd->add_option("--config", gen.config_path, "generator key=value config file");
  gen_cmd->add_option("--unseen-frac", gen.unseen_frac, "held-out combo share override");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "train score + consistency networks");
  train_cmd->add_option("--config", train.config_path, "training key=value config file")
      ->required();
  train_cmd->add_option("--data", train.data, "dataset directory or samples.jsonl")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--resume", train.resume, "checkpoint to resume from");
  train_cmd->add_flag("--force-resume", train.force_resume,
                      "resume despite a config-hash mismatch: keep the checkpoint's "
                      "architecture/schedule/seed, adopt the requested run dynamics");
  train_cmd->add_option("--seed", train.seed, "master seed override");
  train_cmd->add_option("--set", train.overrides, "config override key=value (repeatable)");

  SampleArgs sample;
  CLI::App* sample_cmd = app.add_subcommand("sample", "draw one grasp for a dataset sample");
  sample_cmd->add_option("--checkpoint", sample.checkpoint, "trained checkpoint")->required();
  sample_cmd->add_option("--data", sample.data, "dataset directory or samples.jsonl")->required();
  sample_cmd->add_option("--index", sample.index, "sample index");
  sample_cmd->add_option("--steps", sample.steps, "sampling steps P");
  sample_cmd->add_option("--seed", sample.seed, "sampling seed");
  sample_cmd->add_option("--json", sample.json_out, "optional JSON output path");

  TrajArgs traj;
  CLI::App* traj_cmd =
      app.add_subcommand("inspect-trajectory", "dump a probability-flow trajectory as CSV");
  traj_cmd->add_option("--checkpoint", traj.checkpoint, "trained checkpoint (field=net)");
  traj_cmd->add_option("--data", traj.data, "dataset (field=net)");
  traj_cmd->add_option("--index", traj.index, "sample index (field=net)");
  traj_cmd->add_option("--grid", traj.grid_n, "grid size N");
  traj_cmd->add_option("--out", traj.out, "output CSV path")->required();
  traj_cmd->add_option("--field", traj.field, "score field: net | stationary");
  traj_cmd->add_option("--seed", traj.seed, "terminal-noise seed");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "success-rate evaluation across step counts");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "trained checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "dataset directory or samples.jsonl")->required();
  eval_cmd->add_option("--steps-list", eval.steps_list, "comma-separated P values");
  eval_cmd->add_option("--out", eval.out, "report output directory")->required();
  eval_cmd->add_option("--seed", eval.seed, "evaluation seed");
  eval_cmd->add_option("--threads", eval.threads, "worker threads for accuracy eval");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "latency benchmark across samplers");
  bench_cmd->add_option("--checkpoint", bench.checkpoint, "trained checkpoint")->required();
  bench_cmd->add_option("--data", bench.data, "dataset directory or samples.jsonl")->required();
  bench_cmd->add_option("--steps-list", bench.steps_list, "comma-separated consistency P values");
  bench_cmd->add_option("--ddpm-steps", bench.ddpm_steps, "comma-separated baseline step counts");
  bench_cmd->add_option("--trials", bench.trials, "timed trials per sampler (>= 30)");
  bench_cmd->add_option("--out", bench.out, "latency CSV path")->required();
  bench_cmd->add_option("--seed", bench.seed, "benchmark seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) {
      gen.unseen_set = gen_cmd->count("--unseen-frac") > 0;
      return run_gen_data(gen);
    }
    if (train_cmd->parsed()) {
      train.seed_set = train_cmd->count("--seed") > 0;
      return run_train(train);
    }
    if (sample_cmd->parsed()) return run_sample(sample);
    if (traj_cmd->parsed()) return run_inspect_trajectory(traj);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (bench_cmd->parsed()) return run_bench(bench);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

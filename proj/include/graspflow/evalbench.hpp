#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "graspflow/flow.hpp"
#include "graspflow/synthdata.hpp"

namespace graspflow {

// A sampler maps one dataset sample to an encoded pose vector using only the
// supplied stream for randomness; decode + scoring happen in the harness.
using SamplerFn = std::function<PoseVec(const Sample&, RandomStream&)>;

struct SplitStats {
  int n = 0;
  int successes = 0;
  double rate() const { return n > 0 ? static_cast<double>(successes) / n : 0.0; }
};

// One benchmark row: success rates per split plus latency quantiles over all
// sampler calls of the run. Latency covers the sampler call only -- condition
// encoding and file I/O sit outside the timed region.
struct EvalReport {
  std::string sampler_id;
  int steps = 0;
  SplitStats seen;
  SplitStats unseen;
  double harmonic = 0.0;
  double latency_median_s = 0.0;
  double latency_p95_s = 0.0;
  uint64_t seed = 0;
  std::string config_hash;
};

// lower-median for even counts is averaged; p95 is sorted[ceil(0.95 n) - 1]
double median_of(std::vector<double> values);
double p95_of(std::vector<double> values);

// Run the sampler once per dataset sample and aggregate successes by split
// tag. Sample i always uses a stream seeded with derive_seed(seed, i), so the
// counts are identical for any thread count; threads only shard the work. A
// sampler exception counts as a failed sample rather than aborting the run.
EvalReport evaluate(const SamplerFn& sampler, const std::string& sampler_id, int steps,
                    const std::vector<Sample>& dataset, uint64_t seed,
                    const std::string& config_hash, int threads = 1);

// few-step sampler over a trained consistency net (net must outlive the fn)
SamplerFn make_consistency_sampler(const ConsistencyNet& net, int p,
                                   const NoiseSchedule& schedule);
// ancestral baseline over any score field (field is copied into the fn)
SamplerFn make_ddpm_sampler(const ScoreField& field, int steps, const NoiseSchedule& schedule);

struct LatencyStats {
  double median_s = 0.0;
  double p95_s = 0.0;
  int trials = 0;
};

// Single-threaded latency measurement on one probe sample: 5 unrecorded
// warmup calls, then `trials` timed calls (trials >= 30, else
// std::invalid_argument). Call k uses a stream seeded with
// derive_seed(seed, k) counting warmups, so timed draws differ per trial.
LatencyStats bench_latency(const SamplerFn& sampler, const Sample& probe, int trials,
                           uint64_t seed);

// Write reports (sorted by sampler_id, then steps) as a CSV -- columns
// sampler_id,steps,split,n,successes,rate,harmonic,latency_median_s,
// latency_p95_s,seed,config_hash with one row per split -- plus an aligned
// plain-text table. The table header states the latency measurement boundary.
void emit_report(const std::vector<EvalReport>& reports, const std::filesystem::path& csv_path,
                 const std::filesystem::path& table_path);

}  // namespace graspflow

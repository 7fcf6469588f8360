#include "graspflow/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace graspflow {

double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median_of: empty input");
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double p95_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("p95_of: empty input");
  std::sort(values.begin(), values.end());
  size_t idx = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(values.size())));
  if (idx == 0) idx = 1;
  return values[std::min(idx - 1, values.size() - 1)];
}

EvalReport evaluate(const SamplerFn& sampler, const std::string& sampler_id, int steps,
                    const std::vector<Sample>& dataset, uint64_t seed,
                    const std::string& config_hash, int threads) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (threads < 1) throw std::invalid_argument("evaluate: threads must be >= 1");
  int n = static_cast<int>(dataset.size());
  threads = std::min(threads, n);

  std::vector<char> hit(n, 0);
  std::vector<double> latency(n, 0.0);

  auto run_shard = [&](int shard) {
    for (int i = shard; i < n; i += threads) {
      RandomStream rng(derive_seed(seed, static_cast<uint64_t>(i)));
      auto t0 = std::chrono::steady_clock::now();
      bool ok = false;
      PoseVec out = PoseVec::Zero();
      try {
        out = sampler(dataset[i], rng);
        ok = true;
      } catch (...) {
        ok = false;  // a sampler failure is a miss, not a crash
      }
      latency[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (ok) {
        GraspPose pred = decode_pose(out, dataset[i].scene.extent);
        hit[i] = is_success(pred, dataset[i].gt_grasps) ? 1 : 0;
      }
    }
  };

  if (threads == 1) {
    run_shard(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int s = 0; s < threads; ++s) pool.emplace_back(run_shard, s);
    for (auto& t : pool) t.join();
  }

  EvalReport report;
  report.sampler_id = sampler_id;
  report.steps = steps;
  report.seed = seed;
  report.config_hash = config_hash;
  for (int i = 0; i < n; ++i) {
    SplitStats& split = dataset[i].split_tag == "unseen" ? report.unseen : report.seen;
    split.n += 1;
    split.successes += hit[i];
  }
  report.harmonic = harmonic_mean(report.seen.rate(), report.unseen.rate());
  report.latency_median_s = median_of(latency);
  report.latency_p95_s = p95_of(latency);
  return report;
}

SamplerFn make_consistency_sampler(const ConsistencyNet& net, int p,
                                   const NoiseSchedule& schedule) {
  if (p < 1) throw std::invalid_argument("make_consistency_sampler: p must be >= 1");
  const ConsistencyNet* net_ptr = &net;
  return [net_ptr, p, schedule](const Sample& sample, RandomStream& rng) -> PoseVec {
    return sample_consistency(*net_ptr, sample.condition, p, schedule, rng).x0;
  };
}

SamplerFn make_ddpm_sampler(const ScoreField& field, int steps, const NoiseSchedule& schedule) {
  if (steps < 1) throw std::invalid_argument("make_ddpm_sampler: steps must be >= 1");
  return [field, steps, schedule](const Sample& sample, RandomStream& rng) -> PoseVec {
    return sample_ddpm_baseline(field, sample.condition, steps, schedule, rng);
  };
}

LatencyStats bench_latency(const SamplerFn& sampler, const Sample& probe, int trials,
                           uint64_t seed) {
  if (trials < 30) throw std::invalid_argument("bench_latency: trials must be >= 30");
  const int warmup = 5;
  std::vector<double> timed;
  timed.reserve(trials);
  for (int k = 0; k < warmup + trials; ++k) {
    RandomStream rng(derive_seed(seed, static_cast<uint64_t>(k)));
    auto t0 = std::chrono::steady_clock::now();
    PoseVec out = sampler(probe, rng);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    (void)out;
    if (k >= warmup) timed.push_back(secs);
  }
  LatencyStats stats;
  stats.median_s = median_of(timed);
  stats.p95_s = p95_of(timed);
  stats.trials = trials;
  return stats;
}

namespace {

void atomic_write(const std::filesystem::path& path, const std::string& body,
                  const char* what) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(std::string(what) + ": cannot open " + tmp.string());
    out << body;
    if (!out.good())
      throw std::runtime_error(std::string(what) + ": write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void emit_report(const std::vector<EvalReport>& reports, const std::filesystem::path& csv_path,
                 const std::filesystem::path& table_path) {
  if (reports.empty()) throw std::invalid_argument("emit_report: no reports");
  std::vector<EvalReport> sorted = reports;
  std::sort(sorted.begin(), sorted.end(), [](const EvalReport& a, const EvalReport& b) {
    if (a.sampler_id != b.sampler_id) return a.sampler_id < b.sampler_id;
    return a.steps < b.steps;
  });

  char row[512];
  std::string csv =
      "sampler_id,steps,split,n,successes,rate,harmonic,latency_median_s,latency_p95_s,seed,"
      "config_hash\n";
  for (const EvalReport& r : sorted) {
    struct Half {
      const char* split;
      const SplitStats* stats;
    } halves[2] = {{"seen", &r.seen}, {"unseen", &r.unseen}};
    for (const Half& h : halves) {
      std::snprintf(row, sizeof(row), "%s,%d,%s,%d,%d,%.17g,%.17g,%.17g,%.17g,%llu,%s\n",
                    r.sampler_id.c_str(), r.steps, h.split, h.stats->n, h.stats->successes,
                    h.stats->rate(), r.harmonic, r.latency_median_s, r.latency_p95_s,
                    static_cast<unsigned long long>(r.seed), r.config_hash.c_str());
      csv += row;
    }
  }
  atomic_write(csv_path, csv, "emit_report");

  std::string table =
      "# latency timed around sampler calls only; condition encoding and I/O excluded\n";
  std::snprintf(row, sizeof(row), "%-14s %5s %8s %8s %8s %12s %12s\n", "sampler", "steps", "seen",
                "unseen", "H", "median_s", "p95_s");
  table += row;
  for (const EvalReport& r : sorted) {
    std::snprintf(row, sizeof(row), "%-14s %5d %8.3f %8.3f %8.3f %12.6f %12.6f\n",
                  r.sampler_id.c_str(), r.steps, r.seen.rate(), r.unseen.rate(), r.harmonic,
                  r.latency_median_s, r.latency_p95_s);
    table += row;
  }
  atomic_write(table_path, table, "emit_report");
}

}  // namespace graspflow

#pragma once

#include <cmath>
#include <cstdint>
#include <locale>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace graspflow {

// splitmix64 step, used for seed derivation so that substreams of one master
// seed are decorrelated without sharing engine state.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// FNV-1a, 64 bit. Stable across platforms; used to hash strings into seeds
// and to fingerprint configs.
inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random stream. Every draw maps to a fixed number of raw
// engine outputs (uniform: 1, gaussian: 2), so streams can be reasoned about
// and serialized mid-sequence. std::normal_distribution is deliberately
// avoided: its algorithm is implementation-defined and it caches a spare
// value, both of which break reproducibility guarantees.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1) with 53 bits of precision
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // inclusive range; lo > hi is a caller bug
  int uniform_int(int lo, int hi) {
    if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(engine_() % span);
  }

  // Box-Muller without the cached spare, so one call == two engine outputs.
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Eigen::VectorXd gaussian_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gaussian();
    return v;
  }

  std::string save_state() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << engine_;
    return os.str();
  }

  void restore_state(const std::string& s) {
    std::istringstream is(s);
    is.imbue(std::locale::classic());
    is >> engine_;
    if (is.fail()) throw std::invalid_argument("RandomStream: bad state string");
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace graspflow

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sic {

using Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;

// Error taxonomy shared across modules; the CLI maps these onto exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64; used to derive independent child seeds from (seed, stream ids)
// without sharing generator state across parallel work items.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(seed ^ mix64(a)) ^ mix64(b + 0x51ed2701ULL));
}

// Thin RNG wrapper. All stochastic code in the project draws through this so
// that (config, seed) fully determines every artifact.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {
    // open interval (0,1): rejects exact endpoints
    std::uniform_real_distribution<double> d(0.0, 1.0);
    double u;
    do {
      u = d(gen_);
    } while (u <= 0.0 || u >= 1.0);
    return u;
  }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01_closed();
  }
  double log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }
  double normal() { return norm_(gen_); }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(gen_);
  }
  bool bernoulli(double p) { return uniform01_closed() < p; }

  // weighted categorical over a small probability vector
  int categorical(const std::vector<double>& probs) {
    double u = uniform01_closed();
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      acc += probs[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), gen_);
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  double uniform01_closed() {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    return d(gen_);
  }
  std::mt19937_64 gen_;
  std::normal_distribution<double> norm_{0.0, 1.0};
};

}  // namespace sic

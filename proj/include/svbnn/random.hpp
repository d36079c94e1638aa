#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace svbnn {

// splitmix64 finalizer. Used to spread small integer seeds and tags over the
// full 64-bit space before they touch the engine state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seedable random stream. Every concurrent unit of work owns its own stream;
// streams for distinct (seed, tag) pairs are independent, so results do not
// depend on scheduling or worker count.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  // Independent stream for a named purpose under the same base seed.
  RngStream derived(std::uint64_t tag) const {
    return RngStream(splitmix64(seed_ ^ splitmix64(tag ^ 0x5bf0'3635'de2d'4c51ULL)));
  }

  std::uint64_t seed() const { return seed_; }

  // Uniform on the open interval (0, 1). Zero is rejected so callers may take
  // logs or logits of either u or 1 - u.
  double uniform() {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double u = dist(gen_);
    while (u <= 0.0) u = dist(gen_);
    return u;
  }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(gen_);
  }

  double gaussian() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(gen_);
  }

  // Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
    return dist(gen_);
  }

  Eigen::VectorXd gaussian_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(gen_);
    return v;
  }

  Eigen::VectorXd uniform_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = uniform();
    return v;
  }

  Eigen::VectorXd uniform_vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(gen_);
    return v;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), gen_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace svbnn

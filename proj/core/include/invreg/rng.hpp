#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace invreg {

namespace detail {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}
}  // namespace detail

// Counter-based stream: each (seed, stream) pair indexes an independent
// sequence out_j = mix(key + j*golden), so replicate streams never share
// state and parallel evaluation order cannot change the draws.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(detail::mix64(detail::mix64(seed + detail::kGolden) ^
                           detail::mix64(stream * detail::kGolden + 0x1F123BB5ULL))) {}

  std::uint64_t next_u64() {
    return detail::mix64(key_ + (++counter_) * detail::kGolden);
  }

  // uniform on (0,1); never returns 0 or 1
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller; two uniforms per draw, no cached spare
  double next_normal() {
    const double u1 = next_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool next_bernoulli(double p) { return next_unit() < p; }

  Eigen::VectorXd normal_vector(int m) {
    Eigen::VectorXd v(m);
    for (int i = 0; i < m; ++i) v[i] = next_normal();
    return v;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace invreg

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace memenc {

// Counter-based deterministic RNG. Every draw is a pure function of
// (seed, stream key, counter), so any record of a dataset or any jitter
// value can be regenerated in isolation and in any order. The mixer is
// the splitmix64 finalizer applied to a running combination of the key
// words.

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

constexpr std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  return h;
}

}  // namespace detail

// Stateless draw: uniform in [0, 1).
inline double counter_uniform(std::uint64_t seed, std::uint64_t key, std::uint64_t counter) {
  std::uint64_t h = detail::mix(detail::mix(detail::splitmix64(seed), key), counter);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Stateful convenience wrapper over the stateless mixer. Construction is
// cheap; streams are separated by the key chain passed to the constructor.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : state_(detail::splitmix64(seed)) {}

  CounterRng(std::uint64_t seed, std::string_view stream) : CounterRng(seed) {
    state_ = detail::mix(state_, detail::hash_str(stream));
  }

  CounterRng(std::uint64_t seed, std::string_view stream, std::uint64_t id)
      : CounterRng(seed, stream) {
    state_ = detail::mix(state_, id);
  }

  // Derive an independent stream without advancing this one.
  CounterRng fork(std::uint64_t id) const {
    CounterRng r = *this;
    r.state_ = detail::mix(r.state_, id ^ 0xa5a5a5a5a5a5a5a5ULL);
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return detail::mix(state_, counter_++); }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; consumes two uniforms per pair, caches the second value.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // u1 == 0 would take log(0); the mixer can emit it, so nudge.
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double std) { return mean + std * gaussian(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  std::uint64_t state_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace memenc

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace pafl {

// Counter-based deterministic stream. A stream is fully determined by the
// run seed plus a list of integer ids (client, cycle, purpose, ...), so one
// client's schedule never perturbs another client's draws.
class RngStream {
 public:
  RngStream() : state_(0x9E3779B97F4A7C15ull) {}
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // standard normal via Box-Muller; consumes exactly two uniforms per call
  double next_normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double next_exponential(double mean) {
    double u = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    return -mean * std::log(u);
  }

  // integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

 private:
  std::uint64_t state_;
};

// Stream purposes; one sub-stream per (client, cycle, purpose).
enum class StreamPurpose : std::uint64_t {
  kBatchMain = 1,   // the batch D
  kBatchInner = 2,  // the batch D' feeding the inner adaptation step
  kBatchHess = 3,   // the batch D'' feeding the Hessian estimate
  kDelay = 4,
  kProbe = 5,
  kInit = 6,
  kParticipation = 7,
  kFleet = 8,
};

inline RngStream derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = seed ^ 0xD1B54A32D192ED03ull;
  RngStream mix(s);
  for (std::uint64_t id : ids) {
    s = mix.next_u64() ^ (id + 0x9E3779B97F4A7C15ull + (s << 6) + (s >> 2));
    mix = RngStream(s);
  }
  return RngStream(s);
}

}  // namespace pafl

#pragma once

#include <cmath>
#include <cstdint>

namespace pssim::rng {

// Counter-based randomness: every draw is a pure function of
// (seed, stream, counter). Streams isolate independent purposes (per-worker
// compute times, per-worker data sampling, problem generation, ...) so that
// consuming more draws on one stream never shifts another. That is what makes
// reruns byte-identical and lets different optimizers see identical event
// timelines under the same seed.

/// SplitMix64 output mixer (Steele, Lea, Flood 2014). Bijective on uint64.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Collapses (seed, stream) into one well-mixed key.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0xD1B54A32D192ED03ull + 0x2545F4914F6CDD1Dull));
}

/// The counter-th draw of the stream: a SplitMix64 sequence seeded at the
/// stream key and advanced by the golden-ratio gamma.
constexpr std::uint64_t u64_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  return splitmix64(stream_key(seed, stream) + counter * 0x9E3779B97F4A7C15ull);
}

/// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1]; safe as a log() argument.
constexpr double to_unit_open(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  return to_unit(u64_at(seed, stream, counter));
}

/// Standard normal via Box-Muller; consumes counters 2c and 2c+1.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept {
  const double u1 = to_unit_open(u64_at(seed, stream, 2 * counter));
  const double u2 = to_unit(u64_at(seed, stream, 2 * counter + 1));
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

/// Uniform integer in [0, n) by 128-bit multiply-shift (Lemire 2019). The
/// modulo bias is < n / 2^64, negligible at the dataset sizes used here.
inline std::uint64_t uniform_below(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                                   std::uint64_t n) noexcept {
  const auto x = u64_at(seed, stream, counter);
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(x) * n) >> 64);
}

// Stream tags. A stream id is (tag << 32) | sub, where sub is a worker id or
// a problem-internal lane.
enum : std::uint64_t {
  stream_compute_time = 1,  // per-worker compute-time draws
  stream_data_sample = 2,   // per-worker mini-batch index draws
  stream_problem = 16,      // problem generation lanes (matrix, noise, labels, init)
};

constexpr std::uint64_t stream_id(std::uint64_t tag, std::uint64_t sub) noexcept {
  return (tag << 32) | sub;
}

}  // namespace pssim::rng

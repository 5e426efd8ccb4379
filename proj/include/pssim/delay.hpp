#pragma once

#include "pssim/rng.hpp"
#include "pssim/types.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace pssim {

enum class DelayKind { deterministic, exponential, lognormal };

std::string to_string(DelayKind k);
DelayKind delay_kind_from_string(const std::string& name);

/// Per-request compute-time model. A `slow_fraction` share of the workers
/// (the lowest ids) has its mean multiplied by `slow_factor`, which is how
/// heterogeneous (straggler) clusters are modelled.
struct DelayModel {
  DelayKind kind = DelayKind::lognormal;
  double mean = 1.0;
  double slow_fraction = 0.0;
  double slow_factor = 1.0;
  /// Shape parameter s of the lognormal: X = exp(mu + s Z), with mu chosen
  /// so that E[X] equals the worker's mean.
  double lognormal_sigma = 0.25;
};

void validate(const DelayModel& m);

/// Number of slow workers in a K-worker cluster: the first
/// ceil(slow_fraction * K) ids are slow.
int slow_worker_count(const DelayModel& m, int K);

inline bool is_slow_worker(const DelayModel& m, int worker, int K) {
  return worker < slow_worker_count(m, K);
}

/// Duration of `worker`'s `request`-th gradient computation. Pure in all
/// arguments: replaying a run redraws identical times.
double sample_compute_time(const DelayModel& m, std::uint64_t seed, int worker, std::uint64_t request, int K);

}  // namespace pssim

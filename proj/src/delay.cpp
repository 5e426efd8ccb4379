#include "pssim/delay.hpp"

namespace pssim {

std::string to_string(DelayKind k) {
  switch (k) {
    case DelayKind::deterministic: return "deterministic";
    case DelayKind::exponential: return "exponential";
    case DelayKind::lognormal: return "lognormal";
  }
  throw Error("unreachable delay kind");
}

DelayKind delay_kind_from_string(const std::string& name) {
  if (name == "deterministic") return DelayKind::deterministic;
  if (name == "exponential") return DelayKind::exponential;
  if (name == "lognormal") return DelayKind::lognormal;
  throw ConfigError("unknown delay kind '" + name + "' (expected deterministic|exponential|lognormal)");
}

void validate(const DelayModel& m) {
  if (!(m.mean > 0.0)) throw ConfigError("mean_compute_time must be > 0");
  if (!(m.slow_fraction >= 0.0 && m.slow_fraction < 1.0)) throw ConfigError("slow_fraction must be in [0,1)");
  if (!(m.slow_factor >= 1.0)) throw ConfigError("slow_factor must be >= 1");
  if (!(m.lognormal_sigma > 0.0)) throw ConfigError("lognormal_sigma must be > 0");
}

int slow_worker_count(const DelayModel& m, int K) {
  if (m.slow_fraction <= 0.0 || m.slow_factor <= 1.0) return 0;
  return static_cast<int>(std::ceil(m.slow_fraction * K));
}

double sample_compute_time(const DelayModel& m, std::uint64_t seed, int worker, std::uint64_t request, int K) {
  const double mean = is_slow_worker(m, worker, K) ? m.mean * m.slow_factor : m.mean;
  const auto stream = rng::stream_id(rng::stream_compute_time, static_cast<std::uint64_t>(worker));
  switch (m.kind) {
    case DelayKind::deterministic:
      return mean;
    case DelayKind::exponential:
      return -mean * std::log(rng::to_unit_open(rng::u64_at(seed, stream, request)));
    case DelayKind::lognormal: {
      const double s = m.lognormal_sigma;
      const double mu = std::log(mean) - 0.5 * s * s;
      return std::exp(mu + s * rng::normal(seed, stream, request));
    }
  }
  throw Error("unreachable delay kind");
}

}  // namespace pssim

#pragma once

#include "pssim/delay.hpp"
#include "pssim/optim.hpp"
#include "pssim/problems.hpp"
#include "pssim/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace pssim {

enum class WorkerStatus { computing, waiting };

struct WorkerState {
  int id = 0;
  WorkerStatus status = WorkerStatus::computing;
  std::int64_t held_param_iter = 0;  // iteration index of the parameter it computes on
  double busy_until = 0.0;           // finish time of the computation in flight
  std::uint64_t requests = 0;        // parameters received so far (including the initial one)
  Vec held_param;
  std::vector<std::int32_t> sample;  // mini-batch indices for the request in flight
};

struct EngineState {
  std::uint64_t seed = 0;
  DelayModel delay;
  std::int64_t dataset_size = 1;
  int batch = 1;
  double clock = 0.0;
  std::vector<WorkerState> workers;
  std::vector<int> waiting;  // ids of workers awaiting a dispatch, ascending
};

/// K workers, all handed parameter iteration 0 at time zero with fresh
/// compute times and mini-batches.
EngineState init_cluster(int K, const DelayModel& delay, std::uint64_t seed,
                         const Vec& w0, std::int64_t dataset_size = 1, int batch = 1);

/// Worker whose computation finishes next (earliest busy_until, then the
/// smallest id) and the parameter iteration its gradient belongs to. Does not
/// mutate the state. Throws EngineError when every worker is waiting
/// (deadlock: nothing can ever arrive).
std::pair<int, std::int64_t> next_arrival(const EngineState& st);

/// End-of-iteration dispatch. Synchronous: hands out parameters only when
/// every worker is waiting. Asynchronous: hands them out to whoever waits.
/// Dispatched workers get `param` as iteration `param_iter`, a fresh
/// busy_until drawn from the delay model (unless `scripted`), and a fresh
/// mini-batch. `dispatch_log` records (param_iter, worker) per hand-out.
void dispatch(EngineState& st, Scheduler sched, const Vec& param, std::int64_t param_iter,
              std::vector<std::pair<std::int64_t, int>>* dispatch_log = nullptr,
              bool scripted = false);

/// Replays a fixed delivery order instead of sampled compute times:
/// entry t is (worker, parameter iteration) and must match what that worker
/// actually holds when iteration t runs.
struct ScriptedSchedule {
  std::vector<std::pair<int, std::int64_t>> entries;
};

struct GradientRequest {
  int worker = 0;
  std::int64_t param_iter = 0;
  const Vec& param;
  std::span<const std::int32_t> sample;
};

using GradientSource = std::function<Vec(const GradientRequest&)>;

/// Wraps a problem's stochastic oracle as a gradient source.
GradientSource problem_gradient_source(const Problem& p);

struct MetricsRow {
  std::int64_t t = 0;
  double sim_time = 0.0;
  double loss = 0.0;
  double grad_norm2 = 0.0;
  std::int64_t tau = 0;
  std::optional<std::int64_t> b;  // ordered-momentum head bucket, when present
  double eta_eff = 0.0;
};

/// Everything a post-hoc verification pass needs: the delivery trace, the
/// payload of every iteration, and per-iteration snapshots of the server
/// state. *_hist[t] is the value entering iteration t (size T+1).
struct RunRecord {
  int K = 0;
  double eta = 0.0;
  double beta = 0.0;
  bool constant_eta = true;  // false when a lr_schedule was active
  Scheduler scheduler = Scheduler::asynchronous;
  Vec w0;
  std::vector<TraceRecord> trace;
  std::vector<Vec> grads;
  std::vector<Vec> w_hist;
  std::vector<Vec> u_hist;  // empty unless the rule exposes a momentum
  std::vector<std::int64_t> b_hist;
};

struct RunResult {
  Vec final_param;
  std::vector<TraceRecord> trace;
  std::vector<MetricsRow> metrics;
  std::vector<std::pair<std::int64_t, int>> dispatch_log;  // (param_iter, worker)
  std::optional<RunRecord> record;
};

struct RunParams {
  std::int64_t T = 0;
  Scheduler scheduler = Scheduler::asynchronous;
  HyperParams hp;
  std::int64_t metric_stride = 50;
  const ScriptedSchedule* script = nullptr;  // replaces sampled arrival times
  const Problem* probe = nullptr;            // loss/gradient metrics when set
  bool record = false;                       // capture a RunRecord
};

/// Runs T server iterations: wait for the next gradient, apply the rule,
/// log the trace row, dispatch per the scheduler, emit metrics every
/// `metric_stride` iterations and at t = T-1.
RunResult run(EngineState& st, const RunParams& rp, ServerRule& rule, const GradientSource& grad_fn);

struct DelayStats {
  double mean_tau = 0.0;
  std::int64_t max_tau = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> histogram;  // (tau, count), ascending
};

DelayStats delay_stats(std::span<const TraceRecord> trace);

}  // namespace pssim

#include "pssim/engine.hpp"

#include <algorithm>
#include <map>

namespace pssim {

std::string to_string(Scheduler s) {
  return s == Scheduler::synchronous ? "synchronous" : "asynchronous";
}

Scheduler scheduler_from_string(const std::string& name) {
  if (name == "synchronous") return Scheduler::synchronous;
  if (name == "asynchronous") return Scheduler::asynchronous;
  throw ConfigError("unknown scheduler '" + name + "' (expected synchronous|asynchronous)");
}

namespace {

/// Hands `param` to one worker: records the request, draws its compute time
/// (absolute finish time, from the engine clock) and its mini-batch.
void deliver_parameter(EngineState& st, WorkerState& w, const Vec& param, std::int64_t param_iter,
                       bool scripted) {
  const std::uint64_t request = w.requests++;
  w.held_param = param;
  w.held_param_iter = param_iter;
  w.status = WorkerStatus::computing;
  if (!scripted)
    w.busy_until = st.clock + sample_compute_time(st.delay, st.seed, w.id, request, int(st.workers.size()));
  w.sample.resize(static_cast<std::size_t>(st.batch));
  const auto stream = rng::stream_id(rng::stream_data_sample, static_cast<std::uint64_t>(w.id));
  for (int j = 0; j < st.batch; ++j) {
    w.sample[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(rng::uniform_below(
        st.seed, stream, request * static_cast<std::uint64_t>(st.batch) + static_cast<std::uint64_t>(j),
        static_cast<std::uint64_t>(st.dataset_size)));
  }
}

}  // namespace

EngineState init_cluster(int K, const DelayModel& delay, std::uint64_t seed, const Vec& w0,
                         std::int64_t dataset_size, int batch) {
  if (K < 1) throw EngineError("cluster needs at least one worker");
  if (w0.size() == 0) throw EngineError("initial parameter must be non-empty");
  if (dataset_size < 1) throw EngineError("dataset size must be >= 1");
  if (batch < 1) throw EngineError("batch size must be >= 1");
  validate(delay);
  EngineState st;
  st.seed = seed;
  st.delay = delay;
  st.dataset_size = dataset_size;
  st.batch = batch;
  st.workers.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    WorkerState& w = st.workers[static_cast<std::size_t>(k)];
    w.id = k;
    deliver_parameter(st, w, w0, 0, false);
  }
  return st;
}

std::pair<int, std::int64_t> next_arrival(const EngineState& st) {
  const WorkerState* best = nullptr;
  for (const auto& w : st.workers) {
    if (w.status != WorkerStatus::computing) continue;
    // Ties broken by the smallest worker id (workers are scanned in order).
    if (best == nullptr || w.busy_until < best->busy_until) best = &w;
  }
  if (best == nullptr)
    throw EngineError("deadlock: every worker is waiting for a dispatch and none is computing");
  return {best->id, best->held_param_iter};
}

void dispatch(EngineState& st, Scheduler sched, const Vec& param, std::int64_t param_iter,
              std::vector<std::pair<std::int64_t, int>>* dispatch_log, bool scripted) {
  if (sched == Scheduler::synchronous && st.waiting.size() != st.workers.size()) return;
  for (const int id : st.waiting) {
    deliver_parameter(st, st.workers[static_cast<std::size_t>(id)], param, param_iter, scripted);
    if (dispatch_log) dispatch_log->emplace_back(param_iter, id);
  }
  st.waiting.clear();
}

GradientSource problem_gradient_source(const Problem& p) {
  return [&p](const GradientRequest& req) { return p.stochastic_grad(req.param, req.sample); };
}

RunResult run(EngineState& st, const RunParams& rp, ServerRule& rule, const GradientSource& grad_fn) {
  if (rp.T < 1) throw EngineError("run needs T >= 1 iterations");
  if (rp.metric_stride < 1) throw EngineError("metric_stride must be >= 1");
  validate(rp.hp);
  if (rp.script && static_cast<std::int64_t>(rp.script->entries.size()) != rp.T)
    throw EngineError("scripted schedule has " + std::to_string(rp.script->entries.size()) +
                      " entries but T = " + std::to_string(rp.T));
  const int K = static_cast<int>(st.workers.size());
  const bool scripted = rp.script != nullptr;

  RunResult out;
  out.trace.reserve(static_cast<std::size_t>(rp.T));
  for (int k = 0; k < K; ++k) out.dispatch_log.emplace_back(0, k);

  RunRecord rec;
  if (rp.record) {
    rec.K = K;
    rec.eta = rp.hp.eta;
    rec.beta = rp.hp.beta;
    rec.constant_eta = rp.hp.lr_schedule.empty();
    rec.scheduler = rp.scheduler;
    rec.w0 = rule.param();
    rec.w_hist.push_back(rule.param());
    if (rule.momentum()) rec.u_hist.push_back(*rule.momentum());
    if (rule.head_bucket()) rec.b_hist.push_back(*rule.head_bucket());
  }

  for (std::int64_t t = 0; t < rp.T; ++t) {
    rule.begin_iteration(t, st.waiting.empty());

    int k;
    std::int64_t ite;
    double sim_time;
    if (scripted) {
      const auto& [sk, site] = rp.script->entries[static_cast<std::size_t>(t)];
      if (sk < 0 || sk >= K)
        throw EngineError("scripted schedule entry " + std::to_string(t) + ": no worker " +
                          std::to_string(sk));
      const WorkerState& w = st.workers[static_cast<std::size_t>(sk)];
      if (w.status != WorkerStatus::computing)
        throw EngineError("scripted schedule entry " + std::to_string(t) + ": worker " +
                          std::to_string(sk) + " has no computation in flight");
      if (w.held_param_iter != site)
        throw EngineError("scripted schedule entry " + std::to_string(t) + ": worker " +
                          std::to_string(sk) + " holds parameter iteration " +
                          std::to_string(w.held_param_iter) + ", not " + std::to_string(site));
      k = sk;
      ite = site;
      sim_time = static_cast<double>(t);
    } else {
      std::tie(k, ite) = next_arrival(st);
      sim_time = st.workers[static_cast<std::size_t>(k)].busy_until;
    }
    st.clock = sim_time;

    WorkerState& w = st.workers[static_cast<std::size_t>(k)];
    const double eta_eff = apply_lr_schedule(rp.hp, t);
    Vec grad = grad_fn(GradientRequest{k, ite, w.held_param, w.sample});
    GradientMsg msg{rule.worker_payload(k, std::move(grad), eta_eff), ite, k};
    try {
      rule.receive(msg, t, eta_eff);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw EngineError("iteration " + std::to_string(t) + ": " + e.what());
    }

    out.trace.push_back({t, k, ite, t - ite, sim_time});
    w.status = WorkerStatus::waiting;
    st.waiting.insert(std::lower_bound(st.waiting.begin(), st.waiting.end(), k), k);

    if (rp.record) {
      rec.grads.push_back(msg.grad);
      rec.w_hist.push_back(rule.param());
      if (rule.momentum()) rec.u_hist.push_back(*rule.momentum());
      if (rule.head_bucket()) rec.b_hist.push_back(*rule.head_bucket());
    }

    dispatch(st, rp.scheduler, rule.param(), t + 1, &out.dispatch_log, scripted);

    if ((t + 1) % rp.metric_stride == 0 || t == rp.T - 1) {
      MetricsRow row;
      row.t = t;
      row.sim_time = sim_time;
      row.tau = t - ite;
      row.b = rule.head_bucket();
      row.eta_eff = eta_eff;
      if (rp.probe) {
        row.loss = rp.probe->full_loss(rule.param());
        row.grad_norm2 = rp.probe->full_gradient(rule.param()).squaredNorm();
      }
      out.metrics.push_back(std::move(row));
    }
  }

  out.final_param = rule.param();
  out.trace.shrink_to_fit();
  if (rp.record) {
    rec.trace = out.trace;
    out.record = std::move(rec);
  }
  return out;
}

DelayStats delay_stats(std::span<const TraceRecord> trace) {
  DelayStats s;
  if (trace.empty()) return s;
  std::map<std::int64_t, std::int64_t> hist;
  double acc = 0.0;
  for (const auto& r : trace) {
    acc += static_cast<double>(r.tau);
    s.max_tau = std::max(s.max_tau, r.tau);
    ++hist[r.tau];
  }
  s.mean_tau = acc / static_cast<double>(trace.size());
  s.histogram.assign(hist.begin(), hist.end());
  return s;
}

}  // namespace pssim

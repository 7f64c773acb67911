#pragma once

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fdg/channel.hpp"
#include "fdg/layers.hpp"
#include "fdg/optimizer.hpp"
#include "fdg/partition.hpp"
#include "fdg/training_log.hpp"

namespace fdg {

class SchedulerError : public std::runtime_error {
 public:
  explicit SchedulerError(const std::string& what) : std::runtime_error(what) {}
};

enum class Ordering { BackwardFirst, ForwardFirst };

template <typename T>
struct ActivationPacketT {
  long batch_id = 0;
  TensorT<T> tensor;
  int source_module = 0;
};

template <typename T>
struct GradientPacketT {
  long batch_id = 0;
  TensorT<T> tensor;
  int source_module = 0;
};

struct LabelPacket {
  long batch_id = 0;
  std::vector<int> labels;
};

template <typename T>
struct BatchT {
  long id = 0;
  TensorT<T> inputs;
  std::vector<int> labels;
};

// Must return the batch with the requested 1-based id; called with strictly
// increasing ids by the single feeder.
template <typename T>
using BatchProviderT = std::function<BatchT<T>(long)>;

// Invoked by the controller after the end-of-iteration barrier, with all
// workers parked; safe to read the network (used for periodic evaluation).
using IterationHook = std::function<void(long)>;

struct SchedulerOptions {
  double beta = 1.0;
  Ordering ordering = Ordering::BackwardFirst;
  double momentum = 0.0;
  double weight_decay = 0.0;
  LrSchedule lr;
  std::size_t queue_capacity = 0;  // 0 -> 2K
  long watchdog_ms = 20000;

  void validate() const {
    if (beta <= 0.0 || beta > 1.0)
      throw SchedulerError("beta = " + std::to_string(beta) + " outside (0, 1]");
    lr.validate();
  }
};

// Per-module execution state: the module's layer range, optimizer, live
// saved graphs (at most 2(K-k)+1), inbound/outbound queues and counters.
template <typename T>
struct ModuleRuntimeT {
  int module_id = 1;  // 1-based
  int K = 1;
  double beta = 1.0;
  Ordering ordering = Ordering::BackwardFirst;
  LayerSpan<T> layers;
  SgdOptimizerT<T> optimizer;

  std::map<long, SavedGraphT<T>> graphs;  // keyed by batch id
  std::size_t graph_cap = 1;              // 2(K-k)+1

  BoundedChannel<ActivationPacketT<T>>* act_in = nullptr;
  BoundedChannel<ActivationPacketT<T>>* act_out = nullptr;  // null for module K
  BoundedChannel<GradientPacketT<T>>* grad_in = nullptr;    // null for module K
  BoundedChannel<GradientPacketT<T>>* grad_out = nullptr;   // null for module 1
  BoundedChannel<LabelPacket>* labels_in = nullptr;         // module K only

  long forwards = 0;
  long updates = 0;
  long warmup_skips = 0;
  std::size_t max_live = 0;
  double busy_ms = 0.0;
  double forward_ms = 0.0;
  double backward_ms = 0.0;
  std::vector<LogRow> rows;
  std::vector<double> top_forward_ms;  // module K: wall time of each forward
  std::atomic<long>* progress = nullptr;

  bool is_top() const { return module_id == K; }
  int delay() const { return delay_of(module_id, K); }
  double cumulative_shrink() const { return std::pow(beta, K - module_id); }
};

namespace detail {

inline double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename T>
double forward_once(ModuleRuntimeT<T>& rt, ActivationPacketT<T> pkt, const std::vector<int>* labels,
                    LogRow& row, bool blocking_emit = false) {
  const double t0 = now_ms();
  SavedGraphT<T> graph;
  TensorT<T> out =
      module_forward(rt.layers, pkt.tensor, pkt.batch_id, rt.module_id, graph, labels);
  graph.output_shape = out.shape();
  rt.graphs.emplace(pkt.batch_id, std::move(graph));
  if (rt.graphs.size() > rt.graph_cap)
    throw SchedulerError("saved-graph leak in module " + std::to_string(rt.module_id) + ": " +
                         std::to_string(rt.graphs.size()) + " live graphs exceed cap " +
                         std::to_string(rt.graph_cap));
  rt.max_live = std::max(rt.max_live, rt.graphs.size());
  ++rt.forwards;
  row.batch_forwarded = pkt.batch_id;

  double loss = std::nan("");
  if (rt.is_top()) {
    loss = out[0];
    rt.top_forward_ms.push_back(now_ms());
  } else if (blocking_emit) {
    rt.act_out->push({pkt.batch_id, std::move(out), rt.module_id});
  } else if (!rt.act_out->try_push({pkt.batch_id, std::move(out), rt.module_id})) {
    throw SchedulerError("activation queue overflow from module " + std::to_string(rt.module_id));
  }
  if (rt.progress) rt.progress->fetch_add(1, std::memory_order_relaxed);
  rt.forward_ms += now_ms() - t0;
  return loss;
}

// Backward + update for one gradient packet; lr_step indexes the schedule.
// Emits the input gradient upstream (module 1 emits nothing).
template <typename T>
void backward_once(ModuleRuntimeT<T>& rt, const GradientPacketT<T>& pkt, long lr_step, LogRow& row,
                   bool blocking_emit = false) {
  const double t0 = now_ms();
  auto it = rt.graphs.find(pkt.batch_id);
  if (it == rt.graphs.end())
    throw SchedulerError("module " + std::to_string(rt.module_id) + ": gradient for batch " +
                         std::to_string(pkt.batch_id) +
                         " has no matching saved graph (scheduler corruption)");
  const SavedGraphT<T>& graph = it->second;
  if (pkt.tensor.shape() != graph.output_shape)
    throw SchedulerError("module " + std::to_string(rt.module_id) + ": gradient shape " +
                         shape_string(pkt.tensor.shape()) + " does not match boundary activation " +
                         shape_string(graph.output_shape));

  const double shrink = rt.is_top() ? 1.0 : rt.beta;
  BackwardResultT<T> res =
      module_backward(rt.layers, pkt.tensor, pkt.batch_id, graph, shrink);

  std::vector<TensorT<T>*> params;
  std::vector<const TensorT<T>*> grads;
  T norm_sq = T(0);
  for (std::size_t li = 0; li < rt.layers.size(); ++li) {
    auto& layer_params = rt.layers[li]->params();
    for (std::size_t pi = 0; pi < layer_params.size(); ++pi) {
      params.push_back(&layer_params[pi]);
      grads.push_back(&res.param_grads[li][pi]);
      norm_sq += l2_norm_squared(res.param_grads[li][pi]);
    }
  }
  rt.optimizer.apply(std::move(params), grads, lr_step);
  rt.graphs.erase(it);
  ++rt.updates;
  row.batch_updated = pkt.batch_id;
  row.grad_norm = std::sqrt(static_cast<double>(norm_sq));

  if (rt.module_id > 1) {
    GradientPacketT<T> up{pkt.batch_id, std::move(res.input_grad), rt.module_id};
    if (blocking_emit) {
      rt.grad_out->push(std::move(up));
    } else if (!rt.grad_out->try_push(std::move(up))) {
      throw SchedulerError("gradient queue overflow from module " + std::to_string(rt.module_id));
    }
  }
  if (rt.progress) rt.progress->fetch_add(1, std::memory_order_relaxed);
  rt.backward_ms += now_ms() - t0;
}

template <typename T>
ActivationPacketT<T> pop_expected_activation(ModuleRuntimeT<T>& rt, long batch_id) {
  auto pkt = rt.act_in->pop_if(
      [&](const ActivationPacketT<T>& p) { return p.batch_id == batch_id; });
  if (!pkt)
    throw SchedulerError("module " + std::to_string(rt.module_id) + ": activation for batch " +
                         std::to_string(batch_id) + " not available in lockstep");
  return std::move(*pkt);
}

template <typename T>
std::vector<int> pop_expected_labels(ModuleRuntimeT<T>& rt, long batch_id) {
  auto pkt =
      rt.labels_in->pop_if([&](const LabelPacket& p) { return p.batch_id == batch_id; });
  if (!pkt)
    throw SchedulerError("module " + std::to_string(rt.module_id) + ": labels for batch " +
                         std::to_string(batch_id) + " not available");
  return std::move(pkt->labels);
}

}  // namespace detail

// One lockstep iteration of module k at global iteration t. The module's
// local step is tau = t - k + 1 (its tau-th inbound activation is batch tau);
// the backward sub-step consumes the gradient of batch d_{k,tau} =
// tau - 2(K-k) when it exists, and is a warmup no-op before that. The top
// module computes the loss in its forward and runs its own backward in the
// same step (delay 0); the ordering flag applies to the other modules.
template <typename T>
void lockstep_iteration(ModuleRuntimeT<T>& rt, long global_t) {
  const long tau = global_t - rt.module_id + 1;
  if (tau < 1) return;  // pipeline not filled up to this module yet

  const double t0 = detail::now_ms();
  LogRow row;
  row.iteration = global_t;
  row.module_id = rt.module_id;

  const long d = gradient_batch_index(rt.module_id, rt.K, tau);

  auto backward_substep = [&] {
    if (rt.is_top()) return;  // handled inside the forward sub-step
    if (d < 1) {
      ++rt.warmup_skips;
      return;
    }
    auto pkt =
        rt.grad_in->pop_if([&](const GradientPacketT<T>& p) { return p.batch_id == d; });
    if (!pkt)
      throw SchedulerError("module " + std::to_string(rt.module_id) + ": gradient for batch " +
                           std::to_string(d) + " missing at iteration " + std::to_string(global_t));
    detail::backward_once(rt, *pkt, /*lr_step=*/d + rt.delay(), row);
  };

  auto forward_substep = [&] {
    ActivationPacketT<T> pkt = detail::pop_expected_activation(rt, tau);
    if (rt.is_top()) {
      const std::vector<int> labels = detail::pop_expected_labels(rt, tau);
      row.loss = detail::forward_once(rt, std::move(pkt), &labels, row);
      GradientPacketT<T> seed{tau, TensorT<T>({1}, {T(1)}), rt.module_id};
      detail::backward_once(rt, seed, /*lr_step=*/tau, row);
    } else {
      detail::forward_once(rt, std::move(pkt), nullptr, row);
    }
  };

  if (rt.ordering == Ordering::BackwardFirst) {
    backward_substep();
    forward_substep();
  } else {
    forward_substep();
    backward_substep();
  }

  row.wall_ms = detail::now_ms() - t0;
  rt.busy_ms += row.wall_ms;
  rt.rows.push_back(row);
}

// DDG reference step: every module forwards the *same* batch t each
// iteration (forward locking intact), backwards run module-parallel with a
// staleness of K-k. The upstream activation for batch t arrives during the
// current iteration, so the pop blocks.
template <typename T>
void ddg_iteration(ModuleRuntimeT<T>& rt, long global_t) {
  const double t0 = detail::now_ms();
  LogRow row;
  row.iteration = global_t;
  row.module_id = rt.module_id;

  auto pkt_opt = rt.act_in->pop();
  if (!pkt_opt) throw SchedulerError("ddg: activation channel closed early");
  ActivationPacketT<T> pkt = std::move(*pkt_opt);
  if (pkt.batch_id != global_t)
    throw SchedulerError("ddg: expected batch " + std::to_string(global_t) + ", got " +
                         std::to_string(pkt.batch_id));

  if (rt.is_top()) {
    const std::vector<int> labels = detail::pop_expected_labels(rt, global_t);
    row.loss = detail::forward_once(rt, std::move(pkt), &labels, row);
    GradientPacketT<T> seed{global_t, TensorT<T>({1}, {T(1)}), rt.module_id};
    detail::backward_once(rt, seed, /*lr_step=*/global_t, row);
  } else {
    detail::forward_once(rt, std::move(pkt), nullptr, row);
    const long d = global_t - (rt.K - rt.module_id);
    if (d >= 1) {
      auto gpkt =
          rt.grad_in->pop_if([&](const GradientPacketT<T>& p) { return p.batch_id == d; });
      if (!gpkt)
        throw SchedulerError("ddg: gradient for batch " + std::to_string(d) +
                             " missing in module " + std::to_string(rt.module_id));
      detail::backward_once(rt, *gpkt, /*lr_step=*/global_t, row);
    } else {
      ++rt.warmup_skips;
    }
  }

  row.wall_ms = detail::now_ms() - t0;
  rt.busy_ms += row.wall_ms;
  rt.rows.push_back(row);
}

// Owns the channels and runtimes of one pipeline run over a network. Not
// movable (workers hold pointers into it), hence built on the heap.
template <typename T>
struct PipelineT {
  std::atomic<bool> abort{false};
  std::atomic<long> progress{0};
  std::vector<std::unique_ptr<BoundedChannel<ActivationPacketT<T>>>> act_chans;  // [k] feeds module k
  std::vector<std::unique_ptr<BoundedChannel<GradientPacketT<T>>>> grad_chans;   // [k] feeds module k
  std::unique_ptr<BoundedChannel<LabelPacket>> label_chan;
  std::vector<ModuleRuntimeT<T>> modules;  // [0] unused; 1-based like module ids
};

template <typename T>
std::unique_ptr<PipelineT<T>> build_pipeline(NetworkT<T>& net, const ModulePartition& part,
                                             const SchedulerOptions& opts) {
  opts.validate();
  net.validate();
  part.validate(net.layers.size());
  if (!net.has_head()) throw SchedulerError("pipeline requires a softmax_ce head as final layer");

  const int K = part.K;
  const std::size_t cap = opts.queue_capacity ? opts.queue_capacity : 2 * static_cast<std::size_t>(K);

  auto pipeline = std::make_unique<PipelineT<T>>();
  PipelineT<T>& p = *pipeline;
  p.act_chans.resize(static_cast<std::size_t>(K) + 1);
  p.grad_chans.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 1; k <= K; ++k)
    p.act_chans[static_cast<std::size_t>(k)] =
        std::make_unique<BoundedChannel<ActivationPacketT<T>>>(cap, &p.abort);
  for (int k = 1; k < K; ++k)
    p.grad_chans[static_cast<std::size_t>(k)] =
        std::make_unique<BoundedChannel<GradientPacketT<T>>>(cap, &p.abort);
  p.label_chan = std::make_unique<BoundedChannel<LabelPacket>>(cap, &p.abort);

  p.modules.resize(static_cast<std::size_t>(K) + 1);
  for (int k = 1; k <= K; ++k) {
    ModuleRuntimeT<T>& rt = p.modules[static_cast<std::size_t>(k)];
    rt.module_id = k;
    rt.K = K;
    rt.beta = opts.beta;
    rt.ordering = opts.ordering;
    rt.layers = LayerSpan<T>(net.layers.data() + part.begin(k), part.layer_count(k));
    rt.optimizer = SgdOptimizerT<T>(opts.momentum, opts.weight_decay, opts.lr);
    rt.graph_cap = static_cast<std::size_t>(2 * (K - k) + 1);
    rt.act_in = p.act_chans[static_cast<std::size_t>(k)].get();
    rt.act_out = k < K ? p.act_chans[static_cast<std::size_t>(k) + 1].get() : nullptr;
    rt.grad_in = k < K ? p.grad_chans[static_cast<std::size_t>(k)].get() : nullptr;
    rt.grad_out = k > 1 ? p.grad_chans[static_cast<std::size_t>(k) - 1].get() : nullptr;
    rt.labels_in = k == K ? p.label_chan.get() : nullptr;
    rt.progress = &p.progress;
  }
  return pipeline;
}

template <typename T>
void feed_batch(PipelineT<T>& p, BatchT<T> batch) {
  if (batch.id < 1) throw SchedulerError("batch ids start at 1");
  p.label_chan->push({batch.id, std::move(batch.labels)});
  p.act_chans[1]->push({batch.id, std::move(batch.inputs), 0});
}

namespace detail {

template <typename T>
TrainingLog collect_log(PipelineT<T>& p, double beta, double wall_seconds) {
  TrainingLog log;
  log.K = static_cast<int>(p.modules.size()) - 1;
  log.beta = beta;
  log.wall_seconds = wall_seconds;
  for (std::size_t k = 1; k < p.modules.size(); ++k) {
    ModuleRuntimeT<T>& rt = p.modules[k];
    for (auto& r : rt.rows) log.rows.push_back(r);
    ModuleStats st;
    st.module_id = rt.module_id;
    st.forwards = rt.forwards;
    st.updates = rt.updates;
    st.warmup_skips = rt.warmup_skips;
    st.max_live_graphs = rt.max_live;
    st.delay = rt.delay();
    st.shrink = rt.cumulative_shrink();
    st.busy_ms = rt.busy_ms;
    st.idle_ms = std::max(0.0, wall_seconds * 1000.0 - rt.busy_ms);
    st.forward_ms = rt.forward_ms;
    st.backward_ms = rt.backward_ms;
    log.module_stats.push_back(st);
  }
  std::stable_sort(log.rows.begin(), log.rows.end(), [](const LogRow& a, const LogRow& b) {
    if (a.iteration != b.iteration) return a.iteration < b.iteration;
    return a.module_id < b.module_id;
  });
  return log;
}

// Runs a barrier-per-iteration schedule with one worker thread per module
// plus the calling thread acting as the data feeder.
template <typename T>
TrainingLog run_barriered(NetworkT<T>& net, const ModulePartition& part,
                          const SchedulerOptions& opts, const BatchProviderT<T>& provider, long T_iters,
                          bool ddg_schedule, const IterationHook& hook) {
  auto pipeline = build_pipeline(net, part, opts);
  PipelineT<T>& p = *pipeline;
  const int K = part.K;

  std::barrier sync(K + 1);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(K) + 1);
  const auto wall0 = std::chrono::steady_clock::now();

  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    workers.emplace_back([&, k] {
      ModuleRuntimeT<T>& rt = p.modules[static_cast<std::size_t>(k)];
      for (long t = 1; t <= T_iters; ++t) {
        sync.arrive_and_wait();  // batch t fed
        if (!p.abort.load(std::memory_order_relaxed)) {
          try {
            if (ddg_schedule)
              ddg_iteration(rt, t);
            else
              lockstep_iteration(rt, t);
          } catch (...) {
            errors[static_cast<std::size_t>(k)] = std::current_exception();
            p.abort.store(true);
          }
        }
        sync.arrive_and_wait();  // iteration t complete
      }
    });
  }

  for (long t = 1; t <= T_iters; ++t) {
    if (!p.abort.load(std::memory_order_relaxed)) {
      try {
        feed_batch(p, provider(t));
      } catch (...) {
        errors[0] = std::current_exception();
        p.abort.store(true);
      }
    }
    sync.arrive_and_wait();
    sync.arrive_and_wait();
    if (hook && !p.abort.load(std::memory_order_relaxed)) {
      // workers are parked at the next phase barrier here
      try {
        hook(t);
      } catch (...) {
        errors[0] = std::current_exception();
        p.abort.store(true);
      }
    }
  }
  workers.clear();  // join

  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return collect_log(p, opts.beta, wall_s);
}

}  // namespace detail

// Deterministic barrier-per-iteration execution: all K workers run
// concurrently within an iteration, with a barrier after each. Bit-identical
// across repeated runs with the same seed.
template <typename T>
TrainingLog run_lockstep(NetworkT<T>& net, const ModulePartition& part, const SchedulerOptions& opts,
                         const BatchProviderT<T>& provider, long T_iters,
                         const IterationHook& hook = {}) {
  return detail::run_barriered(net, part, opts, provider, T_iters, /*ddg=*/false, hook);
}

// DDG-style reference schedule (synchronous forward, module-parallel
// backward with staleness K-k). Gradient shrinking does not apply.
template <typename T>
TrainingLog run_ddg_lockstep(NetworkT<T>& net, const ModulePartition& part, SchedulerOptions opts,
                             const BatchProviderT<T>& provider, long T_iters,
                             const IterationHook& hook = {}) {
  opts.beta = 1.0;
  return detail::run_barriered(net, part, opts, provider, T_iters, /*ddg=*/true, hook);
}

// Barrier-less execution: workers proceed as soon as their queue
// preconditions hold. Bounded queues (default capacity 2K) plus the
// 2(K-k)+1 saved-graph cap keep the steady-state staleness of the lockstep
// schedule; a watchdog aborts when no worker makes progress within the
// configured window. Every fed batch is eventually backwarded in every
// module (the pipeline drains before returning).
template <typename T>
std::pair<TrainingLog, ThroughputReport> run_freerunning(NetworkT<T>& net,
                                                         const ModulePartition& part,
                                                         const SchedulerOptions& opts,
                                                         const BatchProviderT<T>& provider,
                                                         long T_iters) {
  auto pipeline = build_pipeline(net, part, opts);
  PipelineT<T>& p = *pipeline;
  const int K = part.K;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(K) + 2);
  std::atomic<int> workers_done{0};
  const auto wall0 = std::chrono::steady_clock::now();

  std::vector<std::jthread> workers;
  workers.reserve(static_cast<std::size_t>(K) + 1);

  // feeder
  workers.emplace_back([&] {
    try {
      for (long t = 1; t <= T_iters && !p.abort.load(std::memory_order_relaxed); ++t)
        feed_batch(p, provider(t));
    } catch (const AbortedError&) {
    } catch (...) {
      errors[0] = std::current_exception();
      p.abort.store(true);
    }
  });

  for (int k = 1; k <= K; ++k) {
    workers.emplace_back([&, k] {
      ModuleRuntimeT<T>& rt = p.modules[static_cast<std::size_t>(k)];
      try {
        long next_fwd = 1;
        while (!p.abort.load(std::memory_order_relaxed)) {
          const bool fwd_done = next_fwd > T_iters;
          const bool bwd_done = rt.updates >= T_iters;
          if (fwd_done && bwd_done) break;

          auto try_backward = [&]() -> bool {
            if (rt.is_top()) return false;  // runs inside the forward
            auto pkt = rt.grad_in->try_pop();
            if (!pkt) return false;
            const double t0 = detail::now_ms();
            LogRow row;
            row.iteration = rt.forwards;  // local clock
            row.module_id = rt.module_id;
            detail::backward_once(rt, *pkt, pkt->batch_id + rt.delay(), row,
                                  /*blocking_emit=*/true);
            row.wall_ms = detail::now_ms() - t0;
            rt.busy_ms += row.wall_ms;
            rt.rows.push_back(row);
            return true;
          };

          auto try_forward = [&]() -> bool {
            if (next_fwd > T_iters) return false;
            if (rt.graphs.size() >= rt.graph_cap) return false;  // wait for a backward
            auto pkt = rt.act_in->pop_if(
                [&](const ActivationPacketT<T>& a) { return a.batch_id == next_fwd; });
            if (!pkt) return false;
            const double t0 = detail::now_ms();
            LogRow row;
            row.iteration = next_fwd;
            row.module_id = rt.module_id;
            if (rt.is_top()) {
              const std::vector<int> labels = detail::pop_expected_labels(rt, next_fwd);
              row.loss = detail::forward_once(rt, std::move(*pkt), &labels, row,
                                              /*blocking_emit=*/true);
              GradientPacketT<T> seed{next_fwd, TensorT<T>({1}, {T(1)}), rt.module_id};
              detail::backward_once(rt, seed, next_fwd, row, /*blocking_emit=*/true);
            } else {
              detail::forward_once(rt, std::move(*pkt), nullptr, row, /*blocking_emit=*/true);
            }
            row.wall_ms = detail::now_ms() - t0;
            rt.busy_ms += row.wall_ms;
            rt.rows.push_back(row);
            ++next_fwd;
            return true;
          };

          bool acted;
          if (rt.ordering == Ordering::BackwardFirst)
            acted = try_backward() || try_forward();
          else
            acted = try_forward() || try_backward();
          if (!acted) std::this_thread::sleep_for(std::chrono::microseconds(100));
        }
      } catch (const AbortedError&) {
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
        p.abort.store(true);
      }
      workers_done.fetch_add(1);
    });
  }

  ProgressWatchdog watchdog(p.progress, p.abort, opts.watchdog_ms);
  const bool fired = watchdog.poll_until([&] { return workers_done.load() == K; });
  workers.clear();  // join

  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (fired) {
    std::string diag = "free-running deadlock: no progress within " +
                       std::to_string(opts.watchdog_ms) + " ms;";
    for (int k = 1; k <= K; ++k) {
      const auto& rt = p.modules[static_cast<std::size_t>(k)];
      diag += " module " + std::to_string(k) + ": fwd=" + std::to_string(rt.forwards) +
              " upd=" + std::to_string(rt.updates) + " graphs=" + std::to_string(rt.graphs.size()) +
              ";";
    }
    throw SchedulerError(diag);
  }

  const double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  TrainingLog log = detail::collect_log(p, opts.beta, wall_s);

  ThroughputReport report;
  report.modules = log.module_stats;
  report.wall_seconds = wall_s;
  // steady-state rate over the second half of the top module's forwards
  const auto& stamps = p.modules[static_cast<std::size_t>(K)].top_forward_ms;
  if (stamps.size() >= 10) {
    const std::size_t half = stamps.size() / 2;
    const double span_ms = stamps.back() - stamps[half];
    if (span_ms > 0.0)
      report.items_per_sec = static_cast<double>(stamps.size() - 1 - half) / (span_ms / 1000.0);
  }
  if (report.items_per_sec == 0.0 && wall_s > 0.0)
    report.items_per_sec = static_cast<double>(T_iters) / wall_s;
  return {std::move(log), std::move(report)};
}

}  // namespace fdg

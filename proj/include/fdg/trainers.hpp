#pragma once

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fdg/config.hpp"
#include "fdg/dataio.hpp"
#include "fdg/layers.hpp"
#include "fdg/optimizer.hpp"
#include "fdg/partition.hpp"
#include "fdg/scheduler.hpp"
#include "fdg/training_log.hpp"

namespace fdg {

class TrainerError : public std::runtime_error {
 public:
  explicit TrainerError(const std::string& what) : std::runtime_error(what) {}
};

// --- architecture DSL --------------------------------------------------------
// Comma-separated layer tokens: dense:OUT, relu, conv3x3:OUT_CHANNELS,
// flatten, softmax_ce. Input widths are inferred left to right from the
// given input shape ([features] or [C, H, W], batch excluded).

template <typename T>
NetworkT<T> build_network(const std::string& arch, const std::vector<std::size_t>& input_shape,
                          Rng rng) {
  NetworkT<T> net;
  std::vector<std::size_t> shape = input_shape;  // running activation shape, batch excluded
  std::stringstream ss(arch);
  std::string token;
  std::size_t layer_index = 0;
  auto flat = [&] {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  };
  while (std::getline(ss, token, ',')) {
    Rng layer_rng = rng.fork(layer_index++);
    const auto colon = token.find(':');
    const std::string kind = colon == std::string::npos ? token : token.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : token.substr(colon + 1);
    if (kind == "dense") {
      if (shape.size() != 1)
        throw TrainerError("arch: dense needs a flat input; insert flatten before " + token);
      const std::size_t out = static_cast<std::size_t>(std::stoul(arg));
      net.layers.push_back(std::make_unique<DenseLayerT<T>>(flat(), out, layer_rng));
      shape = {out};
    } else if (kind == "relu") {
      net.layers.push_back(std::make_unique<ReluLayerT<T>>());
    } else if (kind == "conv3x3") {
      if (shape.size() != 3) throw TrainerError("arch: conv3x3 needs a [C,H,W] input");
      const std::size_t out_c = static_cast<std::size_t>(std::stoul(arg));
      net.layers.push_back(std::make_unique<Conv3x3LayerT<T>>(shape[0], out_c, layer_rng));
      shape[0] = out_c;
    } else if (kind == "flatten") {
      net.layers.push_back(std::make_unique<FlattenLayerT<T>>());
      shape = {flat()};
    } else if (kind == "softmax_ce") {
      net.layers.push_back(std::make_unique<SoftmaxCeHeadT<T>>());
    } else {
      throw TrainerError("arch: unknown layer token '" + token + "'");
    }
  }
  net.validate();
  return net;
}

// --- weights checkpoint -------------------------------------------------------
// Layer manifest header (magic, layer count, kind tags + param counts)
// followed by the concatenated tensor serializations.

template <typename T>
void save_checkpoint(std::ostream& os, const NetworkT<T>& net) {
  const char magic[8] = {'F', 'D', 'G', 'W', '0', '1', 0, 0};
  os.write(magic, 8);
  const std::uint32_t count = static_cast<std::uint32_t>(net.layers.size());
  os.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& l : net.layers) {
    const std::uint8_t kind = static_cast<std::uint8_t>(l->kind());
    os.put(static_cast<char>(kind));
    const std::uint32_t np = static_cast<std::uint32_t>(l->params().size());
    os.write(reinterpret_cast<const char*>(&np), 4);
  }
  for (const auto& l : net.layers)
    for (const auto& p : l->params()) p.serialize(os);
}

// Loads parameters into an already-built network of the same architecture.
template <typename T>
void load_checkpoint(std::istream& is, NetworkT<T>& net) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 6) != "FDGW01") throw TrainerError("bad checkpoint magic");
  std::uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&count), 4);
  if (count != net.layers.size()) throw TrainerError("checkpoint layer count mismatch");
  for (const auto& l : net.layers) {
    const int kind = is.get();
    if (kind != static_cast<int>(l->kind())) throw TrainerError("checkpoint layer kind mismatch");
    std::uint32_t np = 0;
    is.read(reinterpret_cast<char*>(&np), 4);
    if (np != l->params().size()) throw TrainerError("checkpoint param count mismatch");
  }
  for (auto& l : net.layers)
    for (auto& p : l->params()) {
      TensorT<T> loaded = TensorT<T>::deserialize(is);
      if (loaded.shape() != p.shape()) throw TrainerError("checkpoint tensor shape mismatch");
      p = std::move(loaded);
    }
}

// --- trainers -----------------------------------------------------------------

// Classic synchronous SGD: the reference trajectory for the equivalence
// tests. Single-threaded.
template <typename T>
TrainingLog train_bp(NetworkT<T>& net, const BatchProviderT<T>& provider,
                     const SchedulerOptions& opts, long T_iters, const IterationHook& hook = {}) {
  opts.validate();
  net.validate();
  if (!net.has_head()) throw TrainerError("train_bp: network must end in a softmax_ce head");
  SgdOptimizerT<T> optimizer(opts.momentum, opts.weight_decay, opts.lr);
  LayerSpan<T> layers(net.layers.data(), net.layers.size());

  TrainingLog log;
  log.K = 1;
  log.beta = opts.beta;
  const auto wall0 = std::chrono::steady_clock::now();
  ModuleStats stats;
  stats.module_id = 1;

  for (long t = 1; t <= T_iters; ++t) {
    const double t0 = detail::now_ms();
    BatchT<T> batch = provider(t);
    SavedGraphT<T> graph;
    TensorT<T> loss_t =
        module_forward(layers, batch.inputs, batch.id, 1, graph, &batch.labels);
    const double loss = loss_t[0];
    if (!std::isfinite(loss))
      throw TrainerError("train_bp: non-finite loss at iteration " + std::to_string(t));
    BackwardResultT<T> res =
        module_backward(layers, TensorT<T>({1}, {T(1)}), batch.id, graph, 1.0);

    std::vector<TensorT<T>*> params;
    std::vector<const TensorT<T>*> grads;
    T norm_sq = T(0);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      auto& lp = net.layers[li]->params();
      for (std::size_t pi = 0; pi < lp.size(); ++pi) {
        params.push_back(&lp[pi]);
        grads.push_back(&res.param_grads[li][pi]);
        norm_sq += l2_norm_squared(res.param_grads[li][pi]);
      }
    }
    optimizer.apply(std::move(params), grads, t);

    LogRow row;
    row.iteration = t;
    row.module_id = 1;
    row.batch_forwarded = batch.id;
    row.batch_updated = batch.id;
    row.loss = loss;
    row.grad_norm = std::sqrt(static_cast<double>(norm_sq));
    row.wall_ms = detail::now_ms() - t0;
    stats.busy_ms += row.wall_ms;
    log.rows.push_back(row);
    ++stats.forwards;
    ++stats.updates;
    if (hook) hook(t);
  }
  stats.max_live_graphs = 1;
  log.module_stats.push_back(stats);
  log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return log;
}

// Forward-locked, backward-unlocked reference (staleness K-k per module).
template <typename T>
TrainingLog train_ddg_mode(NetworkT<T>& net, const ModulePartition& part,
                           const SchedulerOptions& opts, const BatchProviderT<T>& provider,
                           long T_iters, const IterationHook& hook = {}) {
  return run_ddg_lockstep(net, part, opts, provider, T_iters, hook);
}

// The fully decoupled trainer; dispatches on the run mode. Periodic
// evaluation hooks only apply to barriered runs (a free-running pipeline has
// no quiescent point).
template <typename T>
TrainingLog train_fdg(NetworkT<T>& net, const ModulePartition& part, const SchedulerOptions& opts,
                      const BatchProviderT<T>& provider, long T_iters, RunMode mode,
                      ThroughputReport* throughput = nullptr, const IterationHook& hook = {}) {
  if (mode == RunMode::Lockstep) return run_lockstep(net, part, opts, provider, T_iters, hook);
  auto [log, report] = run_freerunning(net, part, opts, provider, T_iters);
  if (throughput) *throughput = report;
  return log;
}

struct EvalResult {
  double loss = 0.0;
  double top1_error = 0.0;
  std::size_t samples = 0;
};

// Forward-only evaluation; no graph retention beyond scratch caches.
template <typename T>
EvalResult evaluate(const NetworkT<T>& net, const Dataset& data, std::size_t batch_size = 256) {
  net.validate();
  if (!net.has_head()) throw TrainerError("evaluate: network must end in a softmax_ce head");
  EvalResult r;
  double loss_sum = 0.0;
  std::size_t wrong = 0;
  const std::size_t n = data.size();
  const std::size_t row = data.inputs.numel() / data.inputs.dim(0);

  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t take = std::min(batch_size, n - at);
    std::vector<std::size_t> shape = data.inputs.shape();
    shape[0] = take;
    TensorT<T> x(shape);
    for (std::size_t i = 0; i < take * row; ++i)
      x[i] = static_cast<T>(data.inputs[at * row + i]);

    LayerCacheT<T> scratch;
    for (std::size_t li = 0; li + 1 < net.layers.size(); ++li)
      x = net.layers[li]->forward(x, scratch);

    // logits in hand: top-1 against labels, then the head for the loss
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < x.dim(1); ++c)
        if (x(i, c) > x(i, best)) best = c;
      if (static_cast<int>(best) != data.labels[at + i]) ++wrong;
    }
    LayerCacheT<T> head_cache;
    head_cache.labels.assign(data.labels.begin() + static_cast<long>(at),
                             data.labels.begin() + static_cast<long>(at + take));
    TensorT<T> loss_t = net.layers.back()->forward(x, head_cache);
    loss_sum += static_cast<double>(loss_t[0]) * static_cast<double>(take);
  }
  r.samples = n;
  r.loss = loss_sum / static_cast<double>(n);
  r.top1_error = static_cast<double>(wrong) / static_cast<double>(n);
  return r;
}

}  // namespace fdg

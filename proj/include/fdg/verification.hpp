#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fdg/dataio.hpp"
#include "fdg/layers.hpp"
#include "fdg/partition.hpp"
#include "fdg/rng.hpp"
#include "fdg/scheduler.hpp"

namespace fdg {

class VerificationError : public std::runtime_error {
 public:
  explicit VerificationError(const std::string& what) : std::runtime_error(what) {}
};

// --- serial emulation ---------------------------------------------------------

// Executes the exact lockstep schedule on one thread (modules visited K down
// to 1 within an iteration, matching end-of-iteration packet delivery). The
// bit-exact reference for run_lockstep.
template <typename T>
TrainingLog serial_emulate_fdg(NetworkT<T>& net, const ModulePartition& part,
                               const SchedulerOptions& opts, const BatchProviderT<T>& provider,
                               long T_iters) {
  auto pipeline = build_pipeline(net, part, opts);
  PipelineT<T>& p = *pipeline;
  const auto wall0 = std::chrono::steady_clock::now();
  for (long t = 1; t <= T_iters; ++t) {
    feed_batch(p, provider(t));
    for (int k = part.K; k >= 1; --k)
      lockstep_iteration(p.modules[static_cast<std::size_t>(k)], t);
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return detail::collect_log(p, opts.beta, wall);
}

// --- finite-difference gradient checking ---------------------------------------

struct GradCheckLayerReport {
  std::string layer;
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  double eps = 0.0;
  double tol = 0.0;
  std::vector<GradCheckLayerReport> layers;
};

// Central differences per parameter coordinate (random subsample for large
// tensors) against the analytic backward. float64 only; relative error uses
// max(|analytic|, |numeric|, 1e-6) as the denominator.
inline GradCheckReport grad_check(NetworkT<double>& net, const BatchT<double>& batch, double eps,
                                  double tol, std::size_t max_coords_per_tensor = 150,
                                  std::uint64_t seed = 1234) {
  if (eps < 1e-6 || eps > 1e-4)
    throw VerificationError("grad_check: eps must lie in [1e-6, 1e-4]");
  net.validate();
  LayerSpan<double> layers(net.layers.data(), net.layers.size());

  auto loss_at = [&]() {
    SavedGraphT<double> g;
    return module_forward(layers, batch.inputs, batch.id, 1, g, &batch.labels)[0];
  };

  SavedGraphT<double> graph;
  module_forward(layers, batch.inputs, batch.id, 1, graph, &batch.labels);
  BackwardResultT<double> analytic =
      module_backward(layers, Tensor({1}, {1.0}), batch.id, graph, 1.0);

  GradCheckReport report;
  report.eps = eps;
  report.tol = tol;
  Rng rng(seed);

  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    GradCheckLayerReport lr;
    lr.layer = std::string(to_string(net.layers[li]->kind())) + "#" + std::to_string(li);
    auto& params = net.layers[li]->params();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor& p = params[pi];
      std::vector<std::size_t> coords(p.numel());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
      if (coords.size() > max_coords_per_tensor) {
        rng.shuffle(coords);
        coords.resize(max_coords_per_tensor);
      }
      for (std::size_t c : coords) {
        const double saved = p[c];
        p[c] = saved + eps;
        const double lp = loss_at();
        p[c] = saved - eps;
        const double lm = loss_at();
        p[c] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = analytic.param_grads[li][pi][c];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        lr.max_rel_err = std::max(lr.max_rel_err, rel);
        ++lr.coords_checked;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, lr.max_rel_err);
    report.layers.push_back(std::move(lr));
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

// --- gradient shrinking factor ----------------------------------------------------

struct GsFactorReport {
  std::vector<double> expected_factor;  // beta^(K-k) per module, k = 1..K
  std::vector<bool> exact;              // param grads equal factor * unshrunk run
  bool pass = false;
};

// Injects a unit gradient at the head and chains module backwards twice
// (shrink = 1 and shrink = beta per hop), then compares per-module parameter
// gradients. Backward is linear in the upstream gradient, so the shrunk run
// must equal beta^(K-k) times the unshrunk one; with power-of-two beta the
// comparison is bit-exact.
template <typename T>
GsFactorReport gs_factor_check(NetworkT<T>& net, const ModulePartition& part, double beta,
                               const BatchT<T>& batch) {
  if (beta <= 0.0 || beta > 1.0) throw VerificationError("gs_factor_check: beta outside (0, 1]");
  const int K = part.K;

  // forward through all modules once, saving per-module graphs
  std::vector<SavedGraphT<T>> graphs(static_cast<std::size_t>(K) + 1);
  std::vector<LayerSpan<T>> spans(static_cast<std::size_t>(K) + 1);
  TensorT<T> x = batch.inputs;
  for (int k = 1; k <= K; ++k) {
    spans[static_cast<std::size_t>(k)] =
        LayerSpan<T>(net.layers.data() + part.begin(k), part.layer_count(k));
    x = module_forward(spans[static_cast<std::size_t>(k)], x, batch.id, k,
                       graphs[static_cast<std::size_t>(k)], k == K ? &batch.labels : nullptr);
    graphs[static_cast<std::size_t>(k)].output_shape = x.shape();
  }

  auto backward_chain = [&](double hop_shrink) {
    std::vector<std::vector<TensorT<T>>> per_module_grads(static_cast<std::size_t>(K) + 1);
    TensorT<T> g({1});
    g[0] = T(1);  // unit head gradient
    for (int k = K; k >= 1; --k) {
      const double shrink = k == K ? 1.0 : hop_shrink;
      BackwardResultT<T> res = module_backward(spans[static_cast<std::size_t>(k)], g, batch.id,
                                               graphs[static_cast<std::size_t>(k)], shrink);
      for (auto& layer_grads : res.param_grads)
        for (auto& t : layer_grads)
          per_module_grads[static_cast<std::size_t>(k)].push_back(std::move(t));
      g = std::move(res.input_grad);
    }
    return per_module_grads;
  };

  const auto unshrunk = backward_chain(1.0);
  const auto shrunk = backward_chain(beta);

  GsFactorReport report;
  report.pass = true;
  for (int k = 1; k <= K; ++k) {
    const double factor = std::pow(beta, K - k);
    report.expected_factor.push_back(factor);
    bool ok = true;
    const auto& a = unshrunk[static_cast<std::size_t>(k)];
    const auto& b = shrunk[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < a.size() && ok; ++i)
      ok = scale(a[i], static_cast<T>(factor)).bit_equal(b[i]);
    report.exact.push_back(ok);
    report.pass = report.pass && ok;
  }
  return report;
}

// --- stochastic objectives ------------------------------------------------------

// Minimal interface the theorem machinery needs: flat parameters, a fixed
// "full" dataset for deterministic means, and seeded mini-batch gradients.
class StochasticObjective {
 public:
  virtual ~StochasticObjective() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> params() const = 0;
  virtual void set_params(const std::vector<double>& p) = 0;
  virtual double full_loss() = 0;
  virtual std::vector<double> full_grad() = 0;
  virtual std::vector<double> batch_grad(Rng& rng) = 0;
};

// f_x(theta) = 1/2 (theta - x)^T A (theta - x) over a fixed sample set;
// A = diag(d) + rho * u u^T is SPD with a known matvec.
class QuadraticObjective final : public StochasticObjective {
 public:
  QuadraticObjective(std::size_t n, std::size_t data_n, std::size_t batch, std::uint64_t seed,
                     double diag_lo = 0.5, double diag_hi = 4.0, double rho = 0.5)
      : n_(n), batch_(batch) {
    Rng rng(seed);
    diag_.resize(n);
    for (auto& d : diag_) d = rng.uniform(diag_lo, diag_hi);
    u_.resize(n);
    double norm = 0.0;
    for (auto& v : u_) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : u_) v /= norm;
    rho_ = rho;
    data_.resize(data_n, std::vector<double>(n));
    for (auto& x : data_)
      for (auto& v : x) v = rng.normal();
    theta_.resize(n);
    for (auto& v : theta_) v = rng.normal() * 3.0;
  }

  std::size_t dim() const override { return n_; }
  std::vector<double> params() const override { return theta_; }
  void set_params(const std::vector<double>& p) override { theta_ = p; }

  std::vector<double> matvec(const std::vector<double>& v) const {
    double uv = 0.0;
    for (std::size_t i = 0; i < n_; ++i) uv += u_[i] * v[i];
    std::vector<double> out(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = diag_[i] * v[i] + rho_ * u_[i] * uv;
    return out;
  }

  double full_loss() override {
    double acc = 0.0;
    for (const auto& x : data_) acc += point_loss(x);
    return acc / static_cast<double>(data_.size());
  }

  std::vector<double> full_grad() override {
    return grad_at_mean(data_mean());
  }

  std::vector<double> batch_grad(Rng& rng) override {
    std::vector<double> mean(n_, 0.0);
    for (std::size_t b = 0; b < batch_; ++b) {
      const auto& x = data_[static_cast<std::size_t>(rng.uniform_int(data_.size()))];
      for (std::size_t i = 0; i < n_; ++i) mean[i] += x[i];
    }
    for (auto& v : mean) v /= static_cast<double>(batch_);
    return grad_at_mean(mean);
  }

 private:
  std::vector<double> data_mean() const {
    std::vector<double> mean(n_, 0.0);
    for (const auto& x : data_)
      for (std::size_t i = 0; i < n_; ++i) mean[i] += x[i];
    for (auto& v : mean) v /= static_cast<double>(data_.size());
    return mean;
  }

  std::vector<double> grad_at_mean(const std::vector<double>& xbar) const {
    std::vector<double> d(n_);
    for (std::size_t i = 0; i < n_; ++i) d[i] = theta_[i] - xbar[i];
    return matvec(d);
  }

  double point_loss(const std::vector<double>& x) const {
    std::vector<double> d(n_);
    for (std::size_t i = 0; i < n_; ++i) d[i] = theta_[i] - x[i];
    const auto ad = matvec(d);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) acc += d[i] * ad[i];
    return 0.5 * acc;
  }

  std::size_t n_, batch_;
  std::vector<double> diag_, u_;
  double rho_ = 0.0;
  std::vector<std::vector<double>> data_;
  std::vector<double> theta_;
};

// Wraps a network + dataset as a flat-parameter objective (mu = 0 SGD view).
class NetworkObjective final : public StochasticObjective {
 public:
  NetworkObjective(NetworkT<double>& net, const Dataset& data, std::size_t batch)
      : net_(&net), data_(&data), batch_(batch) {
    net.validate();
  }

  std::size_t dim() const override {
    std::size_t n = 0;
    for (const auto& l : net_->layers) n += l->param_count();
    return n;
  }

  std::vector<double> params() const override {
    std::vector<double> out;
    out.reserve(dim());
    for (const auto& l : net_->layers)
      for (const auto& p : l->params()) out.insert(out.end(), p.values().begin(), p.values().end());
    return out;
  }

  void set_params(const std::vector<double>& flat) override {
    std::size_t at = 0;
    for (auto& l : net_->layers)
      for (auto& p : l->params()) {
        std::copy(flat.begin() + static_cast<long>(at),
                  flat.begin() + static_cast<long>(at + p.numel()), p.values().begin());
        at += p.numel();
      }
    if (at != flat.size()) throw VerificationError("set_params: dimension mismatch");
  }

  double full_loss() override { return loss_on(all_indices()); }

  std::vector<double> full_grad() override { return grad_on(all_indices()); }

  std::vector<double> batch_grad(Rng& rng) override {
    std::vector<std::size_t> idx(batch_);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(data_->size()));
    return grad_on(idx);
  }

 private:
  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(data_->size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }

  BatchT<double> gather(const std::vector<std::size_t>& idx) const {
    const std::size_t row = data_->inputs.numel() / data_->inputs.dim(0);
    std::vector<std::size_t> shape = data_->inputs.shape();
    shape[0] = idx.size();
    Tensor inputs(shape);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < row; ++j) inputs[i * row + j] = data_->inputs[idx[i] * row + j];
      labels[i] = data_->labels[idx[i]];
    }
    return {1, std::move(inputs), std::move(labels)};
  }

  double loss_on(const std::vector<std::size_t>& idx) {
    BatchT<double> b = gather(idx);
    LayerSpan<double> layers(net_->layers.data(), net_->layers.size());
    SavedGraphT<double> g;
    return module_forward(layers, b.inputs, 1, 1, g, &b.labels)[0];
  }

  std::vector<double> grad_on(const std::vector<std::size_t>& idx) {
    BatchT<double> b = gather(idx);
    LayerSpan<double> layers(net_->layers.data(), net_->layers.size());
    SavedGraphT<double> g;
    module_forward(layers, b.inputs, 1, 1, g, &b.labels);
    BackwardResultT<double> res = module_backward(layers, Tensor({1}, {1.0}), 1, g, 1.0);
    std::vector<double> out;
    out.reserve(dim());
    for (const auto& per_layer : res.param_grads)
      for (const auto& t : per_layer) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
  }

  NetworkT<double>* net_;
  const Dataset* data_;
  std::size_t batch_;
};

// --- constants estimation -------------------------------------------------------

struct TheoremConstants {
  double L_hat = 0.0;
  double M_hat = 0.0;
  int sample_count = 0;
  double perturb_scale = 0.0;
};

namespace detail {
inline double vec_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}
inline double vec_norm_sq(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}
}  // namespace detail

// M-hat: max squared stochastic-gradient norm over sampled batches at the
// current parameters. L-hat: max gradient-difference ratio over random
// parameter-perturbation pairs plus a directed refinement sequence
// (finite-difference power iteration on the gradient map). Both are lower
// bounds of the true sup constants.
inline TheoremConstants estimate_constants(StochasticObjective& obj, int samples,
                                           double perturb_scale, Rng rng) {
  if (samples < 10)
    throw VerificationError("estimate_constants: need samples >= 10, got " +
                            std::to_string(samples));
  TheoremConstants c;
  c.sample_count = samples;
  c.perturb_scale = perturb_scale;

  for (int s = 0; s < samples; ++s)
    c.M_hat = std::max(c.M_hat, detail::vec_norm_sq(obj.batch_grad(rng)));
  if (c.M_hat == 0.0)
    throw VerificationError("estimate_constants: all sampled gradients are zero");

  const std::vector<double> theta0 = obj.params();
  const std::size_t n = obj.dim();
  auto grad_at = [&](const std::vector<double>& p) {
    obj.set_params(p);
    return obj.full_grad();
  };

  // random pairs
  for (int s = 0; s < samples; ++s) {
    std::vector<double> p1 = theta0, p2 = theta0;
    for (std::size_t i = 0; i < n; ++i) {
      p1[i] += perturb_scale * rng.normal();
      p2[i] += perturb_scale * rng.normal();
    }
    const auto g1 = grad_at(p1);
    const auto g2 = grad_at(p2);
    std::vector<double> dg(n), dp(n);
    for (std::size_t i = 0; i < n; ++i) {
      dg[i] = g1[i] - g2[i];
      dp[i] = p1[i] - p2[i];
    }
    const double denom = detail::vec_norm(dp);
    if (denom > 0.0) c.L_hat = std::max(c.L_hat, detail::vec_norm(dg) / denom);
  }

  // directed refinement: v walks toward the top curvature direction
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  double vn = detail::vec_norm(v);
  for (auto& x : v) x /= vn;
  for (int it = 0; it < 40; ++it) {
    std::vector<double> pp = theta0, pm = theta0;
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] += perturb_scale * v[i];
      pm[i] -= perturb_scale * v[i];
    }
    const auto gp = grad_at(pp);
    const auto gm = grad_at(pm);
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = gp[i] - gm[i];
    const double wn = detail::vec_norm(w);
    if (wn == 0.0) break;
    c.L_hat = std::max(c.L_hat, wn / (2.0 * perturb_scale));
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / wn;
  }

  obj.set_params(theta0);
  return c;
}

// --- delayed-SGD runner and the descent monitor -----------------------------------

struct TheoremCheckpoint {
  long t = 0;
  double gamma = 0.0;
  double fbar = 0.0;                    // probe-set mean loss at theta^t
  std::vector<double> module_grad_sq;   // per-block squared full-gradient norms at theta^t
};

struct TheoremLog {
  int K = 1;
  double beta = 1.0;
  std::vector<TheoremCheckpoint> rows;
};

// Contiguous equal blocks of the flat parameter vector.
inline std::pair<std::size_t, std::size_t> param_block(std::size_t dim, int K, int k) {
  const std::size_t lo = dim * static_cast<std::size_t>(k - 1) / static_cast<std::size_t>(K);
  const std::size_t hi = dim * static_cast<std::size_t>(k) / static_cast<std::size_t>(K);
  return {lo, hi};
}

// Runs the shrunk delayed-gradient update directly on an objective:
//   theta_{q(k)}^{t+1} = theta_{q(k)}^t - gamma_t beta^(K-k) g_{q(k)}^{d_{k,t}},
// with g^d the stochastic gradient computed at theta^d on batch d, and warmup
// skips while d < 1. Records one checkpoint per step (vanilla SGD, mu = 0,
// as the bound requires).
inline TheoremLog run_delayed_sgd(StochasticObjective& obj, int K, double beta, double gamma,
                                  long T, Rng& rng) {
  if (K < 1) throw VerificationError("run_delayed_sgd: K must be >= 1");
  if (beta <= 0.0 || beta > 1.0) throw VerificationError("run_delayed_sgd: beta outside (0, 1]");
  const std::size_t n = obj.dim();
  TheoremLog log;
  log.K = K;
  log.beta = beta;

  std::vector<std::vector<double>> grad_history;  // g^t at theta^t, index t-1
  std::vector<double> theta = obj.params();

  for (long t = 1; t <= T; ++t) {
    obj.set_params(theta);

    TheoremCheckpoint row;
    row.t = t;
    row.gamma = gamma;
    row.fbar = obj.full_loss();
    const std::vector<double> full = obj.full_grad();
    row.module_grad_sq.resize(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
      const auto [lo, hi] = param_block(n, K, k);
      double acc = 0.0;
      for (std::size_t i = lo; i < hi; ++i) acc += full[i] * full[i];
      row.module_grad_sq[static_cast<std::size_t>(k - 1)] = acc;
    }
    log.rows.push_back(std::move(row));

    grad_history.push_back(obj.batch_grad(rng));  // g^t at theta^t

    for (int k = 1; k <= K; ++k) {
      const long d = gradient_batch_index(k, K, t);
      if (d < 1) continue;  // warmup
      const double factor = gamma * std::pow(beta, K - k);
      const auto& g = grad_history[static_cast<std::size_t>(d - 1)];
      const auto [lo, hi] = param_block(n, K, k);
      for (std::size_t i = lo; i < hi; ++i) theta[i] -= factor * g[i];
    }
  }
  obj.set_params(theta);
  return log;
}

struct DescentRecord {
  long t = 0;
  double Z1 = 0.0;
  double Z2 = 0.0;
  double gamma = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
  bool zero_gradient = false;
};

struct DescentReport {
  std::vector<DescentRecord> records;
  double satisfaction_rate = 0.0;
  double admissible_lr = 0.0;
};

// sum_{j=0}^{K-1} beta^j; equals K exactly at beta = 1.
inline double geometric_shrink_sum(double beta, int K) {
  double acc = 0.0, p = 1.0;
  for (int j = 0; j < K; ++j) {
    acc += p;
    p *= beta;
  }
  return acc;
}

// t - max{0, d_{k,t}}.
inline long staleness_at(int k, int K, long t) {
  const long d = gradient_batch_index(k, K, t);
  return t - std::max<long>(0, d);
}

// Evaluates both sides of the expected-descent bound at every checkpoint:
//   lhs = fbar(t+1) - fbar(t),  rhs = -(gamma/2) Z1 + gamma^2 Z2,
//   Z1 = sum_k beta^(K-k) ||gbar_{q(k)}||^2,
//   Z2 = LM sum_j beta^j + LM sum_k beta^(3(K-k)) (t - max{0, d_{k,t}}).
// The bound is statistical, so the result is a satisfaction rate, not a
// per-step assertion. The reported lr ceiling is min{1/L, Z1/(2 Z2)} at the
// first checkpoint, with Z2 taken at steady-state staleness.
inline DescentReport descent_monitor(const TheoremLog& log, const TheoremConstants& c, double beta,
                                     int K) {
  if (log.rows.size() < 2)
    throw VerificationError("descent_monitor: need at least two checkpoints");
  for (const auto& row : log.rows)
    if (row.module_grad_sq.size() != static_cast<std::size_t>(K))
      throw VerificationError("descent_monitor: missing per-module gradient norms at t = " +
                              std::to_string(row.t));

  const double LM = c.L_hat * c.M_hat;
  const double geom = geometric_shrink_sum(beta, K);

  auto z1_at = [&](const TheoremCheckpoint& row) {
    double z1 = 0.0;
    for (int k = 1; k <= K; ++k)
      z1 += std::pow(beta, K - k) * row.module_grad_sq[static_cast<std::size_t>(k - 1)];
    return z1;
  };
  auto z2_at = [&](long t) {
    double stale = 0.0;
    for (int k = 1; k <= K; ++k)
      stale += std::pow(beta, 3 * (K - k)) * static_cast<double>(staleness_at(k, K, t));
    return LM * geom + LM * stale;
  };

  DescentReport report;
  long satisfied = 0;
  for (std::size_t i = 0; i + 1 < log.rows.size(); ++i) {
    const auto& row = log.rows[i];
    DescentRecord rec;
    rec.t = row.t;
    rec.gamma = row.gamma;
    rec.Z1 = z1_at(row);
    rec.Z2 = z2_at(row.t);
    rec.zero_gradient = rec.Z1 == 0.0;
    rec.lhs = log.rows[i + 1].fbar - row.fbar;
    rec.rhs = -(rec.gamma / 2.0) * rec.Z1 + rec.gamma * rec.gamma * rec.Z2;
    rec.satisfied = rec.lhs <= rec.rhs;
    if (rec.satisfied) ++satisfied;
    report.records.push_back(rec);
  }
  report.satisfaction_rate =
      static_cast<double>(satisfied) / static_cast<double>(report.records.size());

  const long t_ss = 2 * (K - 1) + 1;  // steady-state staleness reached
  const double z1_0 = z1_at(log.rows.front());
  const double z2_ss = z2_at(std::max<long>(t_ss, log.rows.front().t));
  report.admissible_lr = std::min(1.0 / c.L_hat, z2_ss > 0.0 ? z1_0 / (2.0 * z2_ss) : 1.0 / c.L_hat);
  return report;
}

}  // namespace fdg

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fdg/rng.hpp"
#include "fdg/tensor.hpp"

namespace fdg {

class LayerError : public std::runtime_error {
 public:
  explicit LayerError(const std::string& what) : std::runtime_error(what) {}
};

enum class LayerKind { Dense, Relu, Conv3x3, Flatten, SoftmaxCeHead };

inline const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::SoftmaxCeHead: return "softmax_ce";
  }
  return "?";
}

// Per-layer per-batch saved intermediates. Slot layout is owned by the layer
// kind (input for dense/conv, pre-activation for relu, probabilities for the
// head). The head additionally needs the batch labels, set by the caller
// before forward.
template <typename T>
struct LayerCacheT {
  std::vector<TensorT<T>> tensors;
  std::vector<std::size_t> saved_shape;  // flatten: original input shape
  std::vector<int> labels;               // head only
};

template <typename T>
struct BackwardOutT {
  std::vector<TensorT<T>> param_grads;  // one per parameter tensor
  TensorT<T> input_grad;
};

template <typename T>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual LayerKind kind() const = 0;
  virtual TensorT<T> forward(const TensorT<T>& input, LayerCacheT<T>& cache) const = 0;
  virtual BackwardOutT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) const = 0;
  virtual std::unique_ptr<LayerT<T>> clone() const = 0;

  std::vector<TensorT<T>>& params() { return params_; }
  const std::vector<TensorT<T>>& params() const { return params_; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

 protected:
  std::vector<TensorT<T>> params_;
};

namespace init {
// Glorot uniform: U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))).
template <typename T>
void glorot(TensorT<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}
}  // namespace init

// y = x W^T + b; x: [B, in], W: [out, in], b: [out].
template <typename T>
class DenseLayerT final : public LayerT<T> {
 public:
  DenseLayerT(std::size_t in, std::size_t out, Rng& rng) : in_(in), out_(out) {
    TensorT<T> w({out, in});
    init::glorot(w, in, out, rng);
    this->params_.push_back(std::move(w));
    this->params_.push_back(TensorT<T>({out}));
  }

  DenseLayerT(TensorT<T> w, TensorT<T> b) : in_(w.dim(1)), out_(w.dim(0)) {
    if (b.rank() != 1 || b.dim(0) != out_)
      throw LayerError("dense: bias shape " + shape_string(b.shape()) + " does not match weight " +
                       shape_string(w.shape()));
    this->params_.push_back(std::move(w));
    this->params_.push_back(std::move(b));
  }

  LayerKind kind() const override { return LayerKind::Dense; }

  TensorT<T> forward(const TensorT<T>& input, LayerCacheT<T>& cache) const override {
    if (input.rank() != 2 || input.dim(1) != in_)
      throw LayerError("dense: input " + shape_string(input.shape()) + " incompatible with weight " +
                       shape_string(this->params_[0].shape()));
    TensorT<T> y = matmul_nt(input, this->params_[0]);
    const auto& b = this->params_[1];
    for (std::size_t i = 0; i < y.dim(0); ++i)
      for (std::size_t j = 0; j < out_; ++j) y(i, j) += b[j];
    cache.tensors = {input};
    return y;
  }

  BackwardOutT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) const override {
    const TensorT<T>& x = cache.tensors.at(0);
    BackwardOutT<T> out;
    out.param_grads.push_back(matmul_tn(upstream, x));  // dW = g^T x
    TensorT<T> db({out_});
    for (std::size_t i = 0; i < upstream.dim(0); ++i)
      for (std::size_t j = 0; j < out_; ++j) db[j] += upstream(i, j);
    out.param_grads.push_back(std::move(db));
    out.input_grad = matmul(upstream, this->params_[0]);  // dx = g W
    return out;
  }

  std::unique_ptr<LayerT<T>> clone() const override {
    return std::make_unique<DenseLayerT>(this->params_[0], this->params_[1]);
  }

 private:
  std::size_t in_, out_;
};

template <typename T>
class ReluLayerT final : public LayerT<T> {
 public:
  LayerKind kind() const override { return LayerKind::Relu; }

  TensorT<T> forward(const TensorT<T>& input, LayerCacheT<T>& cache) const override {
    cache.tensors = {input};
    return relu(input);
  }

  BackwardOutT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) const override {
    return {{}, relu_grad_mask(upstream, cache.tensors.at(0))};
  }

  std::unique_ptr<LayerT<T>> clone() const override { return std::make_unique<ReluLayerT>(); }
};

// 3x3 convolution, stride 1, zero padding 1 (spatial size preserved).
// W: [out_c, in_c, 3, 3], b: [out_c].
template <typename T>
class Conv3x3LayerT final : public LayerT<T> {
 public:
  Conv3x3LayerT(std::size_t in_c, std::size_t out_c, Rng& rng) : in_c_(in_c), out_c_(out_c) {
    TensorT<T> w({out_c, in_c, 3, 3});
    init::glorot(w, in_c * 9, out_c * 9, rng);
    this->params_.push_back(std::move(w));
    this->params_.push_back(TensorT<T>({out_c}));
  }

  Conv3x3LayerT(TensorT<T> w, TensorT<T> b) : in_c_(w.dim(1)), out_c_(w.dim(0)) {
    this->params_.push_back(std::move(w));
    this->params_.push_back(std::move(b));
  }

  LayerKind kind() const override { return LayerKind::Conv3x3; }

  TensorT<T> forward(const TensorT<T>& input, LayerCacheT<T>& cache) const override {
    if (input.rank() != 4 || input.dim(1) != in_c_)
      throw LayerError("conv3x3: input " + shape_string(input.shape()) + " incompatible with weight " +
                       shape_string(this->params_[0].shape()));
    const std::size_t b = input.dim(0), h = input.dim(2), w = input.dim(3);
    TensorT<T> y({b, out_c_, h, w});
    kernels::conv3x3_forward(input.data(), this->params_[0].data(), this->params_[1].data(),
                             y.data(), b, in_c_, out_c_, h, w);
    cache.tensors = {input};
    return y;
  }

  BackwardOutT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) const override {
    const TensorT<T>& x = cache.tensors.at(0);
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    BackwardOutT<T> out;
    TensorT<T> dw(this->params_[0].shape());
    TensorT<T> db({out_c_});
    kernels::conv3x3_backward_params(upstream.data(), x.data(), dw.data(), db.data(), b, in_c_,
                                     out_c_, h, w);
    out.param_grads.push_back(std::move(dw));
    out.param_grads.push_back(std::move(db));
    TensorT<T> dx(x.shape());
    kernels::conv3x3_backward_input(upstream.data(), this->params_[0].data(), dx.data(), b, in_c_,
                                    out_c_, h, w);
    out.input_grad = std::move(dx);
    return out;
  }

  std::unique_ptr<LayerT<T>> clone() const override {
    return std::make_unique<Conv3x3LayerT>(this->params_[0], this->params_[1]);
  }

 private:
  std::size_t in_c_, out_c_;
};

// [B, C, H, W] -> [B, C*H*W].
template <typename T>
class FlattenLayerT final : public LayerT<T> {
 public:
  LayerKind kind() const override { return LayerKind::Flatten; }

  TensorT<T> forward(const TensorT<T>& input, LayerCacheT<T>& cache) const override {
    if (input.rank() < 2) throw LayerError("flatten: need rank >= 2, got " + shape_string(input.shape()));
    cache.saved_shape = input.shape();
    std::size_t rest = input.numel() / input.dim(0);
    return input.reshaped({input.dim(0), rest});
  }

  BackwardOutT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) const override {
    return {{}, upstream.reshaped(cache.saved_shape)};
  }

  std::unique_ptr<LayerT<T>> clone() const override { return std::make_unique<FlattenLayerT>(); }
};

// Softmax + cross-entropy, mean-reduced over the batch. Forward consumes
// logits [B, C] plus labels (cache.labels, set by the caller) and yields a
// [1] loss tensor; backward turns an upstream scalar into
// upstream * (probs - onehot) / B.
template <typename T>
class SoftmaxCeHeadT final : public LayerT<T> {
 public:
  LayerKind kind() const override { return LayerKind::SoftmaxCeHead; }

  static TensorT<T> probabilities(const TensorT<T>& logits) {
    TensorT<T> p(logits.shape());
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    for (std::size_t i = 0; i < b; ++i) {
      T hi = logits(i, 0);
      for (std::size_t j = 1; j < c; ++j) hi = std::max(hi, logits(i, j));
      T z = T(0);
      for (std::size_t j = 0; j < c; ++j) {
        p(i, j) = std::exp(logits(i, j) - hi);
        z += p(i, j);
      }
      for (std::size_t j = 0; j < c; ++j) p(i, j) /= z;
    }
    return p;
  }

  TensorT<T> forward(const TensorT<T>& input, LayerCacheT<T>& cache) const override {
    if (input.rank() != 2)
      throw LayerError("softmax_ce: logits must be [batch x classes], got " +
                       shape_string(input.shape()));
    if (cache.labels.size() != input.dim(0))
      throw LayerError("softmax_ce: head invoked without labels (have " +
                       std::to_string(cache.labels.size()) + ", batch " +
                       std::to_string(input.dim(0)) + ")");
    const std::size_t b = input.dim(0), c = input.dim(1);
    TensorT<T> p = probabilities(input);
    T loss = T(0);
    for (std::size_t i = 0; i < b; ++i) {
      const int y = cache.labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= c)
        throw LayerError("softmax_ce: label " + std::to_string(y) + " out of range for " +
                         std::to_string(c) + " classes");
      loss -= std::log(std::max(p(i, static_cast<std::size_t>(y)), std::numeric_limits<T>::min()));
    }
    loss /= static_cast<T>(b);
    cache.tensors = {std::move(p)};
    return TensorT<T>({1}, {loss});
  }

  BackwardOutT<T> backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) const override {
    const TensorT<T>& p = cache.tensors.at(0);
    const std::size_t b = p.dim(0), c = p.dim(1);
    const T s = upstream[0] / static_cast<T>(b);
    TensorT<T> dz(p.shape());
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < c; ++j)
        dz(i, j) = s * (p(i, j) - (static_cast<std::size_t>(cache.labels[i]) == j ? T(1) : T(0)));
    return {{}, std::move(dz)};
  }

  std::unique_ptr<LayerT<T>> clone() const override { return std::make_unique<SoftmaxCeHeadT>(); }
};

// --- network ----------------------------------------------------------------

template <typename T>
struct NetworkT {
  std::vector<std::unique_ptr<LayerT<T>>> layers;

  std::size_t size() const { return layers.size(); }

  NetworkT clone() const {
    NetworkT out;
    out.layers.reserve(layers.size());
    for (const auto& l : layers) out.layers.push_back(l->clone());
    return out;
  }

  std::size_t total_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l->param_count();
    return n;
  }

  // The softmax-CE head is only legal as the final layer.
  void validate() const {
    if (layers.empty()) throw LayerError("network has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i]->kind() == LayerKind::SoftmaxCeHead && i + 1 != layers.size())
        throw LayerError("softmax_ce head must be the final layer (found at " + std::to_string(i) + ")");
    }
  }

  bool has_head() const {
    return !layers.empty() && layers.back()->kind() == LayerKind::SoftmaxCeHead;
  }
};

using Network = NetworkT<double>;

// --- module-level forward/backward -------------------------------------------

// Retained intermediates of one module for one batch; enables backward on an
// older batch than the latest forward.
template <typename T>
struct SavedGraphT {
  long batch_id = 0;
  int module_id = 0;
  std::vector<LayerCacheT<T>> caches;      // one per layer of the module
  std::vector<std::size_t> input_shape;
  std::vector<std::size_t> output_shape;   // boundary shape; validates inbound gradients
};

template <typename T>
struct BackwardResultT {
  std::vector<std::vector<TensorT<T>>> param_grads;  // per layer, per param tensor
  TensorT<T> input_grad;
  long batch_id = 0;
};

template <typename T>
using LayerSpan = std::span<const std::unique_ptr<LayerT<T>>>;

// Chains layer forwards over a module's layer range. `labels` must be given
// iff the module ends with the head.
template <typename T>
TensorT<T> module_forward(LayerSpan<T> layers, const TensorT<T>& input, long batch_id,
                          int module_id, SavedGraphT<T>& graph,
                          const std::vector<int>* labels = nullptr) {
  if (batch_id < 1) throw LayerError("module_forward: batch id must be >= 1");
  if (input.rank() == 0 || input.dim(0) == 0 || input.numel() == 0)
    throw LayerError("module_forward: empty input batch");
  graph.batch_id = batch_id;
  graph.module_id = module_id;
  graph.caches.assign(layers.size(), LayerCacheT<T>{});
  graph.input_shape = input.shape();
  TensorT<T> x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i]->kind() == LayerKind::SoftmaxCeHead) {
      if (!labels) throw LayerError("module_forward: head invoked without labels");
      graph.caches[i].labels = *labels;
    }
    x = layers[i]->forward(x, graph.caches[i]);
  }
  return x;
}

// Runs the module's backward on a previously saved graph. `shrink` is the
// gradient-shrinking factor applied exactly once to the incoming gradient at
// module entry; the top module passes 1 for its own loss gradient (the
// cumulative beta^(K-k) factor arises from one application per hop).
template <typename T>
BackwardResultT<T> module_backward(LayerSpan<T> layers, const TensorT<T>& incoming,
                                   long incoming_batch_id, const SavedGraphT<T>& graph,
                                   double shrink) {
  if (shrink <= 0.0 || shrink > 1.0)
    throw LayerError("module_backward: shrink factor " + std::to_string(shrink) +
                     " outside (0, 1]");
  if (incoming_batch_id != graph.batch_id)
    throw LayerError("module_backward: gradient batch " + std::to_string(incoming_batch_id) +
                     " does not match saved graph batch " + std::to_string(graph.batch_id));
  if (graph.caches.size() != layers.size())
    throw LayerError("module_backward: saved graph layer count mismatch");

  BackwardResultT<T> result;
  result.batch_id = graph.batch_id;
  result.param_grads.resize(layers.size());
  TensorT<T> g = shrink == 1.0 ? incoming : scale(incoming, static_cast<T>(shrink));
  for (std::size_t i = layers.size(); i-- > 0;) {
    BackwardOutT<T> out = layers[i]->backward(g, graph.caches[i]);
    result.param_grads[i] = std::move(out.param_grads);
    g = std::move(out.input_grad);
  }
  result.input_grad = std::move(g);
  return result;
}

}  // namespace fdg

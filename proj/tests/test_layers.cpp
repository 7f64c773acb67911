#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "fdg/layers.hpp"
#include "fdg/rng.hpp"

using namespace fdg;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// central-difference derivative of `loss` w.r.t. every coordinate of `p`
double max_rel_err_fd(Tensor& p, const Tensor& analytic, const std::function<double()>& loss,
                      double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double saved = p[i];
    p[i] = saved + eps;
    const double lp = loss();
    p[i] = saved - eps;
    const double lm = loss();
    p[i] = saved;
    const double numeric = (lp - lm) / (2 * eps);
    const double a = analytic[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST_CASE("dense forward hand example") {
  DenseLayerT<double> dense(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2}, {0, 0}));
  LayerCacheT<double> cache;
  const Tensor y = dense.forward(Tensor({1, 2}, {1, 1}), cache);
  CHECK(y(0, 0) == 3.0);
  CHECK(y(0, 1) == 7.0);
}

TEST_CASE("relu forward and zero grad at non-positive cached inputs") {
  ReluLayerT<double> layer;
  LayerCacheT<double> cache;
  const Tensor y = layer.forward(Tensor({1, 2}, {-2, 5}), cache);
  CHECK(y.bit_equal(Tensor({1, 2}, {0, 5})));

  const auto back = layer.backward(Tensor({1, 2}, {10, 10}), cache);
  CHECK(back.input_grad(0, 0) == 0.0);
  CHECK(back.input_grad(0, 1) == 10.0);
}

TEST_CASE("conv3x3 with identity-center kernel preserves the input") {
  Tensor w({1, 1, 3, 3});
  w[4] = 1.0;  // center tap
  Conv3x3LayerT<double> conv(w, Tensor({1}));
  Tensor ramp({1, 1, 5, 5});
  for (std::size_t i = 0; i < 25; ++i) ramp[i] = static_cast<double>(i);
  LayerCacheT<double> cache;
  CHECK(conv.forward(ramp, cache).bit_equal(ramp));
}

TEST_CASE("head gradient equals (probs - onehot) / batch") {
  Rng rng(5);
  SoftmaxCeHeadT<double> head;
  const Tensor logits = random_tensor({4, 3}, rng);
  LayerCacheT<double> cache;
  cache.labels = {0, 2, 1, 2};
  head.forward(logits, cache);

  const auto back = head.backward(Tensor({1}, {1.0}), cache);
  const Tensor probs = SoftmaxCeHeadT<double>::probabilities(logits);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const double onehot = static_cast<std::size_t>(cache.labels[i]) == j ? 1.0 : 0.0;
      CHECK(back.input_grad(i, j) == doctest::Approx((probs(i, j) - onehot) / 4.0).epsilon(1e-15));
    }
}

TEST_CASE("head requires labels and validates their range") {
  SoftmaxCeHeadT<double> head;
  LayerCacheT<double> cache;
  CHECK_THROWS_WITH_AS(head.forward(Tensor({2, 3}), cache), doctest::Contains("without labels"),
                       LayerError);
  cache.labels = {0, 7};
  CHECK_THROWS_AS(head.forward(Tensor({2, 3}), cache), LayerError);
}

TEST_CASE("finite differences: dense params") {
  Rng rng(11);
  DenseLayerT<double> dense(3, 2, rng);
  const Tensor x = random_tensor({4, 3}, rng);
  LayerCacheT<double> cache;

  // scalar probe: half squared norm of the output
  auto loss = [&]() {
    LayerCacheT<double> c;
    const Tensor y = dense.forward(x, c);
    return 0.5 * l2_norm_squared(y);
  };
  const Tensor y = dense.forward(x, cache);
  const auto back = dense.backward(y, cache);  // d(0.5*||y||^2)/dy = y

  CHECK(max_rel_err_fd(dense.params()[0], back.param_grads[0], loss) < 1e-6);
  CHECK(max_rel_err_fd(dense.params()[1], back.param_grads[1], loss) < 1e-6);
}

TEST_CASE("finite differences: dense+head loss gradient") {
  Rng rng(13);
  DenseLayerT<double> dense(3, 3, rng);
  SoftmaxCeHeadT<double> head;
  const Tensor x = random_tensor({5, 3}, rng);
  const std::vector<int> labels = {0, 1, 2, 1, 0};

  auto loss = [&]() {
    LayerCacheT<double> c1, c2;
    c2.labels = labels;
    return head.forward(dense.forward(x, c1), c2)[0];
  };

  LayerCacheT<double> c1, c2;
  c2.labels = labels;
  head.forward(dense.forward(x, c1), c2);
  const auto head_back = head.backward(Tensor({1}, {1.0}), c2);
  const auto dense_back = dense.backward(head_back.input_grad, c1);

  CHECK(max_rel_err_fd(dense.params()[0], dense_back.param_grads[0], loss) < 1e-6);
  CHECK(max_rel_err_fd(dense.params()[1], dense_back.param_grads[1], loss) < 1e-6);
}

TEST_CASE("module forward composition equals monolithic forward bit-exactly") {
  Rng rng(17);
  NetworkT<double> net;
  net.layers.push_back(std::make_unique<DenseLayerT<double>>(4, 6, rng));
  net.layers.push_back(std::make_unique<ReluLayerT<double>>());
  net.layers.push_back(std::make_unique<DenseLayerT<double>>(6, 5, rng));
  net.layers.push_back(std::make_unique<ReluLayerT<double>>());

  const Tensor x = random_tensor({3, 4}, rng);
  LayerSpan<double> all(net.layers.data(), 4);
  LayerSpan<double> first(net.layers.data(), 2);
  LayerSpan<double> second(net.layers.data() + 2, 2);

  SavedGraphT<double> g_all, g1, g2;
  const Tensor mono = module_forward(all, x, 1, 1, g_all);
  const Tensor mid = module_forward(first, x, 1, 1, g1);
  const Tensor split = module_forward(second, mid, 1, 2, g2);
  CHECK(mono.bit_equal(split));
}

TEST_CASE("module forward rejects empty batches and bad batch ids") {
  Rng rng(19);
  NetworkT<double> net;
  net.layers.push_back(std::make_unique<DenseLayerT<double>>(4, 2, rng));
  LayerSpan<double> span(net.layers.data(), 1);
  SavedGraphT<double> g;
  CHECK_THROWS_AS(module_forward(span, Tensor({2, 4}), 0, 1, g), LayerError);
  CHECK_THROWS_WITH_AS(module_forward(span, Tensor(), 1, 1, g),
                       doctest::Contains("empty input batch"), LayerError);
  // zero-sized dimensions are rejected at construction
  CHECK_THROWS_AS(Tensor({0, 4}), TensorError);
}

TEST_CASE("module backward: repeatable, and zero grad propagates zeros") {
  Rng rng(23);
  NetworkT<double> net;
  net.layers.push_back(std::make_unique<DenseLayerT<double>>(4, 4, rng));
  net.layers.push_back(std::make_unique<ReluLayerT<double>>());
  LayerSpan<double> span(net.layers.data(), 2);

  const Tensor x = random_tensor({3, 4}, rng);
  SavedGraphT<double> graph;
  module_forward(span, x, 7, 1, graph);

  const Tensor upstream = random_tensor({3, 4}, rng);
  const auto a = module_backward(span, upstream, 7, graph, 1.0);
  const auto b = module_backward(span, upstream, 7, graph, 1.0);
  CHECK(a.input_grad.bit_equal(b.input_grad));

  const auto zero = module_backward(span, Tensor::zeros({3, 4}), 7, graph, 1.0);
  CHECK(l2_norm_squared(zero.input_grad) == 0.0);
  for (const auto& per_layer : zero.param_grads)
    for (const auto& g : per_layer) CHECK(l2_norm_squared(g) == 0.0);
}

TEST_CASE("module backward validates batch ids and the shrink factor") {
  Rng rng(29);
  NetworkT<double> net;
  net.layers.push_back(std::make_unique<DenseLayerT<double>>(4, 4, rng));
  LayerSpan<double> span(net.layers.data(), 1);
  const Tensor x = random_tensor({2, 4}, rng);
  SavedGraphT<double> graph;
  module_forward(span, x, 3, 1, graph);

  CHECK_THROWS_WITH_AS(module_backward(span, Tensor({2, 4}), 4, graph, 1.0),
                       doctest::Contains("does not match saved graph"), LayerError);
  CHECK_THROWS_AS(module_backward(span, Tensor({2, 4}), 3, graph, 0.0), LayerError);
  CHECK_THROWS_AS(module_backward(span, Tensor({2, 4}), 3, graph, 1.5), LayerError);
}

TEST_CASE("gradient shrinking composes to beta^(K-k) across a K=3 chain") {
  Rng rng(31);
  NetworkT<double> net;
  for (int i = 0; i < 3; ++i) {
    net.layers.push_back(std::make_unique<DenseLayerT<double>>(4, 4, rng));
    net.layers.push_back(std::make_unique<ReluLayerT<double>>());
  }
  std::vector<LayerSpan<double>> spans = {
      LayerSpan<double>(net.layers.data() + 0, 2),
      LayerSpan<double>(net.layers.data() + 2, 2),
      LayerSpan<double>(net.layers.data() + 4, 2),
  };

  const Tensor x = random_tensor({2, 4}, rng);
  std::vector<SavedGraphT<double>> graphs(3);
  Tensor h = x;
  for (int k = 0; k < 3; ++k) h = module_forward(spans[k], h, 1, k + 1, graphs[k]);

  const Tensor seed = Tensor::full({2, 4}, 1.0);  // unit gradient injected at the head

  auto chain = [&](double beta) {
    std::vector<std::vector<Tensor>> grads(3);
    Tensor g = seed;
    for (int k = 2; k >= 0; --k) {
      const double shrink = k == 2 ? 1.0 : beta;  // top module unshrunk
      auto res = module_backward(spans[k], g, 1, graphs[k], shrink);
      for (auto& pl : res.param_grads)
        for (auto& t : pl) grads[k].push_back(std::move(t));
      g = std::move(res.input_grad);
    }
    return grads;
  };

  const auto base = chain(1.0);
  const auto shrunk = chain(0.5);
  const double factors[3] = {0.25, 0.5, 1.0};  // beta^(K-k), exact powers of two
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < base[k].size(); ++i)
      CHECK(scale(base[k][i], factors[k]).bit_equal(shrunk[k][i]));
}

TEST_CASE("flatten round-trips shapes through backward") {
  FlattenLayerT<double> flat;
  Rng rng(37);
  const Tensor x = random_tensor({2, 3, 4, 4}, rng);
  LayerCacheT<double> cache;
  const Tensor y = flat.forward(x, cache);
  CHECK(y.shape() == std::vector<std::size_t>{2, 48});
  const auto back = flat.backward(y, cache);
  CHECK(back.input_grad.bit_equal(x));
}

TEST_CASE("network validation pins the head to the final layer") {
  NetworkT<double> net;
  net.layers.push_back(std::make_unique<SoftmaxCeHeadT<double>>());
  net.layers.push_back(std::make_unique<ReluLayerT<double>>());
  CHECK_THROWS_AS(net.validate(), LayerError);
}

TEST_CASE("clone copies parameters by value") {
  Rng rng(43);
  NetworkT<double> net;
  net.layers.push_back(std::make_unique<DenseLayerT<double>>(3, 3, rng));
  NetworkT<double> copy = net.clone();
  copy.layers[0]->params()[0][0] += 1.0;
  CHECK(net.layers[0]->params()[0][0] != copy.layers[0]->params()[0][0]);
}

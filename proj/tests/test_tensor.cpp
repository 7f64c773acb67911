#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "fdg/rng.hpp"
#include "fdg/tensor.hpp"

using namespace fdg;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

// independent triple-loop product used as the matmul oracle
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j)
      for (std::size_t p = 0; p < a.dim(1); ++p) c(i, j) += a(i, p) * b(p, j);
  return c;
}

}  // namespace

TEST_CASE("matmul identity and hand examples") {
  const Tensor I({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {3, 4, 5, 6});
  CHECK(matmul(I, m).bit_equal(m));
  CHECK(matmul(m, I).bit_equal(m));

  const Tensor a({1, 2}, {1, 2});
  const Tensor b({2, 1}, {3, 4});
  const Tensor r = matmul(a, b);
  CHECK(r.shape() == std::vector<std::size_t>{1, 1});
  CHECK(r[0] == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(101);
  const Tensor a = random_tensor({7, 5}, rng);
  const Tensor b = random_tensor({5, 3}, rng);
  const Tensor got = matmul(a, b);
  const Tensor want = naive_matmul(a, b);
  for (std::size_t i = 0; i < got.numel(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const Tensor a({2, 3});
  const Tensor b({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2 x 3]"), TensorError);
}

TEST_CASE("elementwise ops") {
  const Tensor x({2}, {2, -4});
  CHECK(scale(x, 0.5).bit_equal(Tensor({2}, {1, -2})));
  CHECK(relu(Tensor({3}, {-1, 0, 3})).bit_equal(Tensor({3}, {0, 0, 3})));

  Rng rng(5);
  const Tensor t = random_tensor({4, 4}, rng);
  CHECK(add(t, Tensor::zeros({4, 4})).bit_equal(t));
  CHECK_THROWS_AS(add(t, Tensor::zeros({4, 5})), TensorError);

  const Tensor g = random_tensor({2, 2}, rng);
  const Tensor in({2, 2}, {1.0, -1.0, 0.0, 2.0});
  const Tensor masked = relu_grad_mask(g, in);
  CHECK(masked[0] == g[0]);
  CHECK(masked[1] == 0.0);
  CHECK(masked[2] == 0.0);  // zero input blocks the gradient
  CHECK(masked[3] == g[3]);
}

TEST_CASE("reductions") {
  CHECK(l2_norm_squared(Tensor({2}, {3, 4})) == 25.0);
  CHECK(mean(Tensor({3}, {1, 2, 3})) == 2.0);

  // deterministic sum equals a sequential-accumulation oracle exactly
  Rng rng(17);
  const Tensor t = random_tensor({4, 4}, rng);
  double seq = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) seq += t[i];
  REQUIRE_FALSE(kernels::parallel_enabled());
  CHECK(sum(t) == seq);
}

TEST_CASE("l2 norm is nonnegative and zero iff all elements are zero") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor t = random_tensor({3, 5}, rng);
    CHECK(l2_norm_squared(t) >= 0.0);
    if (l2_norm_squared(t) == 0.0) {
      for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);
    }
  }
  CHECK(l2_norm_squared(Tensor::zeros({7})) == 0.0);
}

TEST_CASE("repeated evaluation is bit-identical in deterministic mode") {
  Rng rng(31);
  const Tensor a = random_tensor({6, 6}, rng);
  const Tensor b = random_tensor({6, 6}, rng);
  CHECK(matmul(a, b).bit_equal(matmul(a, b)));
  CHECK(sum(a) == sum(a));
}

TEST_CASE("openmp kernels match the serial reference") {
  Rng rng(47);
  const Tensor a = random_tensor({33, 17}, rng);
  const Tensor b = random_tensor({17, 29}, rng);

  Tensor serial_c({33, 29}), omp_c({33, 29});
  kernels::serial::matmul_nn(a.data(), b.data(), serial_c.data(), 33, 17, 29);
  kernels::omp::matmul_nn(a.data(), b.data(), omp_c.data(), 33, 17, 29);
  CHECK(serial_c.bit_equal(omp_c));  // same per-element accumulation order

  Tensor s2({33, 17}), o2({33, 17});
  kernels::serial::relu(a.data(), s2.data(), a.numel());
  kernels::omp::relu(a.data(), o2.data(), a.numel());
  CHECK(s2.bit_equal(o2));

  const double rs = kernels::serial::sum(a.data(), a.numel());
  const double rp = kernels::omp::sum(a.data(), a.numel());
  CHECK(rp == doctest::Approx(rs).epsilon(1e-12));  // reduction order may differ

  // nt/tn forms against the nn oracle through explicit transposes
  Tensor bt({29, 17});
  for (std::size_t i = 0; i < 17; ++i)
    for (std::size_t j = 0; j < 29; ++j) bt(j, i) = b(i, j);
  const Tensor via_nt = matmul_nt(a, bt);
  const Tensor via_nn = matmul(a, b);
  CHECK(via_nt.bit_equal(via_nn));

  Tensor at({17, 33});
  for (std::size_t i = 0; i < 33; ++i)
    for (std::size_t j = 0; j < 17; ++j) at(j, i) = a(i, j);
  const Tensor via_tn = matmul_tn(at, b);
  for (std::size_t i = 0; i < via_tn.numel(); ++i)
    CHECK(via_tn[i] == doctest::Approx(via_nn[i]).epsilon(1e-12));
}

TEST_CASE("parallel guard restores the thread flag") {
  CHECK_FALSE(kernels::parallel_enabled());
  {
    kernels::ParallelGuard guard(true);
    CHECK(kernels::parallel_enabled());
  }
  CHECK_FALSE(kernels::parallel_enabled());
}

TEST_CASE("serialization round-trip and header layout") {
  Rng rng(53);
  const Tensor t = random_tensor({2, 3}, rng);
  std::stringstream ss;
  t.serialize(ss);

  const std::string bytes = ss.str();
  // rank 2 (u32 LE), dims 2 and 3, tag 2 = f64
  REQUIRE(bytes.size() == 4 + 8 + 1 + 6 * 8);
  CHECK(static_cast<unsigned char>(bytes[0]) == 2);
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[8]) == 3);
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);

  const Tensor back = Tensor::deserialize(ss);
  CHECK(back.bit_equal(t));

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(Tensor::deserialize(truncated), TensorError);
}

TEST_CASE("float32 tensors work through the same ops") {
  Rng rng(61);
  TensorF a({3, 4});
  TensorF b({4, 2});
  for (auto& v : a.values()) v = static_cast<float>(rng.normal());
  for (auto& v : b.values()) v = static_cast<float>(rng.normal());
  const TensorF c = matmul(a, b);
  CHECK(c.shape() == std::vector<std::size_t>{3, 2});

  std::stringstream ss;
  a.serialize(ss);
  CHECK(static_cast<unsigned char>(ss.str()[12]) == 1);  // f32 tag
  CHECK(TensorF::deserialize(ss).bit_equal(a));

  const Tensor wide = a.cast<double>();
  CHECK(wide.dim(1) == 4);
  CHECK(wide[0] == doctest::Approx(static_cast<double>(a[0])));
}

// Times the serial reference kernels against the OpenMP variants.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fdg/kernels.hpp"
#include "fdg/rng.hpp"

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void fill(std::vector<double>& v, fdg::Rng& rng) {
  for (auto& x : v) x = rng.normal();
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::atoi(argv[1]);
  fdg::Rng rng(42);

  std::printf("threads available: %d\n", fdg::kernels::max_threads());
  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial ms", "omp ms", "speedup");

  for (std::size_t n : {128, 256, 512}) {
    std::vector<double> a(n * n), b(n * n), c(n * n);
    fill(a, rng);
    fill(b, rng);
    const double ts = time_ms([&] { fdg::kernels::serial::matmul_nn(a.data(), b.data(), c.data(), n, n, n); }, reps);
    const double tp = time_ms([&] { fdg::kernels::omp::matmul_nn(a.data(), b.data(), c.data(), n, n, n); }, reps);
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", ("matmul " + std::to_string(n) + "^3").c_str(), ts,
                tp, ts / tp);
  }

  {
    const std::size_t n = 1 << 22;
    std::vector<double> a(n), b(n), c(n);
    fill(a, rng);
    fill(b, rng);
    const double ts = time_ms([&] { fdg::kernels::serial::add(a.data(), b.data(), c.data(), n); }, reps);
    const double tp = time_ms([&] { fdg::kernels::omp::add(a.data(), b.data(), c.data(), n); }, reps);
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", "elementwise add 4M", ts, tp, ts / tp);

    volatile double sink = 0.0;
    const double rs = time_ms([&] { sink = fdg::kernels::serial::sum(a.data(), n); }, reps);
    const double rp = time_ms([&] { sink = fdg::kernels::omp::sum(a.data(), n); }, reps);
    (void)sink;
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", "sum reduction 4M", rs, rp, rs / rp);
  }

  {
    const std::size_t batch = 8, cin = 8, cout = 8, h = 32, w = 32;
    std::vector<double> x(batch * cin * h * w), wt(cout * cin * 9), bias(cout),
        y(batch * cout * h * w);
    fill(x, rng);
    fill(wt, rng);
    fill(bias, rng);
    const double ts = time_ms(
        [&] {
          fdg::kernels::serial::conv3x3_forward(x.data(), wt.data(), bias.data(), y.data(), batch,
                                                cin, cout, h, w);
        },
        reps);
    const double tp = time_ms(
        [&] {
          fdg::kernels::omp::conv3x3_forward(x.data(), wt.data(), bias.data(), y.data(), batch, cin,
                                             cout, h, w);
        },
        reps);
    std::printf("%-28s %10.3f %10.3f %7.2fx\n", "conv3x3 8x8x32x32", ts, tp, ts / tp);
  }
  return 0;
}

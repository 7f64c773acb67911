#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

// Dense numeric kernels in two flavors: a serial reference (fixed summation
// order, used for all bit-exact comparisons) and an OpenMP variant. The
// dispatching wrappers pick per calling thread, so pipeline workers can stay
// serial while single-threaded callers use the parallel path.
//
// Map-like kernels (matmul, elementwise, conv) assign each output element to
// exactly one thread with an unchanged inner loop, so the OpenMP variants are
// bit-identical to the reference. Reductions reorder the accumulation and are
// therefore only reachable when the parallel flag is on.

namespace fdg::kernels {

namespace detail {
inline thread_local bool parallel_flag = false;
}

inline bool parallel_enabled() { return detail::parallel_flag; }
inline void set_parallel(bool on) { detail::parallel_flag = on; }

struct ParallelGuard {
  explicit ParallelGuard(bool on) : prev_(parallel_enabled()) { set_parallel(on); }
  ~ParallelGuard() { set_parallel(prev_); }
  ParallelGuard(const ParallelGuard&) = delete;
  ParallelGuard& operator=(const ParallelGuard&) = delete;

 private:
  bool prev_;
};

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// ---------------------------------------------------------------------------
// Serial reference kernels.
// ---------------------------------------------------------------------------
namespace serial {

// c[m x n] = a[m x k] * b[k x n]
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

// c[m x n] = a[m x k] * b[n x k]^T
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

// c[m x n] = a[k x m]^T * b[k x n]
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(const T* a, T s, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

template <typename T>
void relu(const T* a, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
}

// out = grad where the cached input was positive, else 0.
template <typename T>
void relu_grad_mask(const T* grad, const T* input, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = input[i] > T(0) ? grad[i] : T(0);
}

template <typename T>
T sum(const T* a, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

template <typename T>
T sum_squares(const T* a, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

// 3x3 convolution, stride 1, zero padding 1. x: [batch, cin, h, w],
// w: [cout, cin, 3, 3], b: [cout], y: [batch, cout, h, w].
template <typename T>
void conv3x3_forward(const T* x, const T* w, const T* b, T* y, std::size_t batch,
                     std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < wd; ++j) {
          T acc = b[o];
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t u = 0; u < 3; ++u) {
              const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - 1;
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < 3; ++v) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - 1;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += x[((n * cin + c) * h + ii) * wd + jj] * w[((o * cin + c) * 3 + u) * 3 + v];
              }
            }
          }
          y[((n * cout + o) * h + i) * wd + j] = acc;
        }
      }
    }
  }
}

// Gradient w.r.t. the input. g: [batch, cout, h, w] -> dx: [batch, cin, h, w].
template <typename T>
void conv3x3_backward_input(const T* g, const T* w, T* dx, std::size_t batch,
                            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < wd; ++j) {
          T acc = T(0);
          for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t u = 0; u < 3; ++u) {
              // output row that read input row i with kernel row u
              const std::ptrdiff_t oi = static_cast<std::ptrdiff_t>(i) + 1 - static_cast<std::ptrdiff_t>(u);
              if (oi < 0 || oi >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < 3; ++v) {
                const std::ptrdiff_t oj = static_cast<std::ptrdiff_t>(j) + 1 - static_cast<std::ptrdiff_t>(v);
                if (oj < 0 || oj >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += g[((n * cout + o) * h + oi) * wd + oj] * w[((o * cin + c) * 3 + u) * 3 + v];
              }
            }
          }
          dx[((n * cin + c) * h + i) * wd + j] = acc;
        }
      }
    }
  }
}

// Gradient w.r.t. weights and bias.
template <typename T>
void conv3x3_backward_params(const T* g, const T* x, T* dw, T* db, std::size_t batch,
                             std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  for (std::size_t o = 0; o < cout; ++o) {
    T bacc = T(0);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j) bacc += g[((n * cout + o) * h + i) * wd + j];
    db[o] = bacc;
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t u = 0; u < 3; ++u) {
        for (std::size_t v = 0; v < 3; ++v) {
          T acc = T(0);
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t i = 0; i < h; ++i) {
              const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - 1;
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t j = 0; j < wd; ++j) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - 1;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += g[((n * cout + o) * h + i) * wd + j] * x[((n * cin + c) * h + ii) * wd + jj];
              }
            }
          }
          dw[((o * cin + c) * 3 + u) * 3 + v] = acc;
        }
      }
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels. Same element-level arithmetic as the reference; rows (or
// output elements) are distributed across threads.
// ---------------------------------------------------------------------------
namespace omp {

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale(const T* a, T s, T* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) out[i] = a[i] * s;
}

template <typename T>
void relu(const T* a, T* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = a[i] > T(0) ? a[i] : T(0);
}

template <typename T>
void relu_grad_mask(const T* grad, const T* input, T* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    out[i] = input[i] > T(0) ? grad[i] : T(0);
}

template <typename T>
T sum(const T* a, std::size_t n) {
  T acc = T(0);
#pragma omp parallel for schedule(static) reduction(+ : acc)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) acc += a[i];
  return acc;
}

template <typename T>
T sum_squares(const T* a, std::size_t n) {
  T acc = T(0);
#pragma omp parallel for schedule(static) reduction(+ : acc)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) acc += a[i] * a[i];
  return acc;
}

template <typename T>
void conv3x3_forward(const T* x, const T* w, const T* b, T* y, std::size_t batch,
                     std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(batch); ++n) {
    for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(cout); ++o) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < wd; ++j) {
          T acc = b[o];
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t u = 0; u < 3; ++u) {
              const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - 1;
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < 3; ++v) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - 1;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += x[((n * cin + c) * h + ii) * wd + jj] * w[((o * cin + c) * 3 + u) * 3 + v];
              }
            }
          }
          y[((n * cout + o) * h + i) * wd + j] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward_input(const T* g, const T* w, T* dx, std::size_t batch,
                            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(batch); ++n) {
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cin); ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < wd; ++j) {
          T acc = T(0);
          for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t u = 0; u < 3; ++u) {
              const std::ptrdiff_t oi = static_cast<std::ptrdiff_t>(i) + 1 - static_cast<std::ptrdiff_t>(u);
              if (oi < 0 || oi >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < 3; ++v) {
                const std::ptrdiff_t oj = static_cast<std::ptrdiff_t>(j) + 1 - static_cast<std::ptrdiff_t>(v);
                if (oj < 0 || oj >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += g[((n * cout + o) * h + oi) * wd + oj] * w[((o * cin + c) * 3 + u) * 3 + v];
              }
            }
          }
          dx[((n * cin + c) * h + i) * wd + j] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv3x3_backward_params(const T* g, const T* x, T* dw, T* db, std::size_t batch,
                             std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < static_cast<std::ptrdiff_t>(cout); ++o) {
    T bacc = T(0);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j) bacc += g[((n * cout + o) * h + i) * wd + j];
    db[o] = bacc;
    for (std::size_t c = 0; c < cin; ++c) {
      for (std::size_t u = 0; u < 3; ++u) {
        for (std::size_t v = 0; v < 3; ++v) {
          T acc = T(0);
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t i = 0; i < h; ++i) {
              const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) - 1;
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t j = 0; j < wd; ++j) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) - 1;
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += g[((n * cout + o) * h + i) * wd + j] * x[((n * cin + c) * h + ii) * wd + jj];
              }
            }
          }
          dw[((o * cin + c) * 3 + u) * 3 + v] = acc;
        }
      }
    }
  }
}

}  // namespace omp

// ---------------------------------------------------------------------------
// Dispatch: per-thread choice between reference and OpenMP kernels.
// ---------------------------------------------------------------------------

#define FDG_DISPATCH(fn, ...)                 \
  do {                                        \
    if (parallel_enabled())                   \
      omp::fn(__VA_ARGS__);                   \
    else                                      \
      serial::fn(__VA_ARGS__);                \
  } while (0)

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  FDG_DISPATCH(matmul_nn, a, b, c, m, k, n);
}
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  FDG_DISPATCH(matmul_nt, a, b, c, m, k, n);
}
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  FDG_DISPATCH(matmul_tn, a, b, c, m, k, n);
}
template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  FDG_DISPATCH(add, a, b, out, n);
}
template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  FDG_DISPATCH(sub, a, b, out, n);
}
template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  FDG_DISPATCH(mul, a, b, out, n);
}
template <typename T>
void scale(const T* a, T s, T* out, std::size_t n) {
  FDG_DISPATCH(scale, a, s, out, n);
}
template <typename T>
void relu(const T* a, T* out, std::size_t n) {
  FDG_DISPATCH(relu, a, out, n);
}
template <typename T>
void relu_grad_mask(const T* grad, const T* input, T* out, std::size_t n) {
  FDG_DISPATCH(relu_grad_mask, grad, input, out, n);
}
template <typename T>
T sum(const T* a, std::size_t n) {
  return parallel_enabled() ? omp::sum(a, n) : serial::sum(a, n);
}
template <typename T>
T sum_squares(const T* a, std::size_t n) {
  return parallel_enabled() ? omp::sum_squares(a, n) : serial::sum_squares(a, n);
}
template <typename T>
void conv3x3_forward(const T* x, const T* w, const T* b, T* y, std::size_t batch,
                     std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  FDG_DISPATCH(conv3x3_forward, x, w, b, y, batch, cin, cout, h, wd);
}
template <typename T>
void conv3x3_backward_input(const T* g, const T* w, T* dx, std::size_t batch,
                            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  FDG_DISPATCH(conv3x3_backward_input, g, w, dx, batch, cin, cout, h, wd);
}
template <typename T>
void conv3x3_backward_params(const T* g, const T* x, T* dw, T* db, std::size_t batch,
                             std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd) {
  FDG_DISPATCH(conv3x3_backward_params, g, x, dw, db, batch, cin, cout, h, wd);
}

#undef FDG_DISPATCH

}  // namespace fdg::kernels

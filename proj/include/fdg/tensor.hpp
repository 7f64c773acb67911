#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "fdg/kernels.hpp"

namespace fdg {

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string shape_string(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major n-dimensional array. Element type is float64 by default;
// float32 is available for throughput runs. No strided views: slicing and
// reshaping copy.
template <typename T>
class TensorT {
  static_assert(std::is_floating_point_v<T>);

 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

  TensorT(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size())
      throw TensorError("tensor data size " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(shape_));
  }

  static TensorT zeros(std::vector<std::size_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<std::size_t> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  T operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  // Copying reshape; element count must be preserved.
  TensorT reshaped(std::vector<std::size_t> new_shape) const {
    TensorT out(std::move(new_shape), data_);
    return out;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

  bool bit_equal(const TensorT& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0;
  }

  // Wire format: rank (u32), dims (u32 each), element tag (u8; 1 = f32,
  // 2 = f64), raw little-endian payload.
  void serialize(std::ostream& os) const {
    static_assert(std::endian::native == std::endian::little);
    write_u32(os, static_cast<std::uint32_t>(shape_.size()));
    for (auto d : shape_) write_u32(os, static_cast<std::uint32_t>(d));
    const std::uint8_t tag = sizeof(T) == 4 ? 1 : 2;
    os.put(static_cast<char>(tag));
    os.write(reinterpret_cast<const char*>(data_.data()),
             static_cast<std::streamsize>(data_.size() * sizeof(T)));
  }

  static TensorT deserialize(std::istream& is) {
    const std::uint32_t rank = read_u32(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u32(is);
    const int tag = is.get();
    if (tag != (sizeof(T) == 4 ? 1 : 2))
      throw TensorError("tensor element tag mismatch: got " + std::to_string(tag));
    TensorT t(std::move(shape));
    is.read(reinterpret_cast<char*>(t.data_.data()),
            static_cast<std::streamsize>(t.data_.size() * sizeof(T)));
    if (!is) throw TensorError("truncated tensor payload");
    return t;
  }

 private:
  static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
      if (d == 0) throw TensorError("zero dimension in shape " + shape_string(shape));
      n *= d;
    }
    return n;
  }

  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw TensorError("truncated tensor header");
    return v;
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

namespace detail {
template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw TensorError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                      " vs " + shape_string(b.shape()));
}
}  // namespace detail

// --- arithmetic ------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw TensorError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                      shape_string(b.shape()));
  TensorT<T> c({a.dim(0), b.dim(1)});
  kernels::matmul_nn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

// a[m x k] * b[n x k]^T
template <typename T>
TensorT<T> matmul_nt(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw TensorError("matmul_nt: incompatible shapes " + shape_string(a.shape()) + " x " +
                      shape_string(b.shape()) + "^T");
  TensorT<T> c({a.dim(0), b.dim(0)});
  kernels::matmul_nt(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(0));
  return c;
}

// a[k x m]^T * b[k x n]
template <typename T>
TensorT<T> matmul_tn(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw TensorError("matmul_tn: incompatible shapes " + shape_string(a.shape()) + "^T x " +
                      shape_string(b.shape()));
  TensorT<T> c({a.dim(1), b.dim(1)});
  kernels::matmul_tn(a.data(), b.data(), c.data(), a.dim(1), a.dim(0), b.dim(1));
  return c;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "add");
  TensorT<T> out(a.shape());
  kernels::add(a.data(), b.data(), out.data(), a.numel());
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "sub");
  TensorT<T> out(a.shape());
  kernels::sub(a.data(), b.data(), out.data(), a.numel());
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_same_shape(a, b, "mul");
  TensorT<T> out(a.shape());
  kernels::mul(a.data(), b.data(), out.data(), a.numel());
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  TensorT<T> out(a.shape());
  kernels::scale(a.data(), s, out.data(), a.numel());
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  TensorT<T> out(a.shape());
  kernels::relu(a.data(), out.data(), a.numel());
  return out;
}

template <typename T>
TensorT<T> relu_grad_mask(const TensorT<T>& grad, const TensorT<T>& input) {
  detail::require_same_shape(grad, input, "relu_grad_mask");
  TensorT<T> out(grad.shape());
  kernels::relu_grad_mask(grad.data(), input.data(), out.data(), grad.numel());
  return out;
}

// --- reductions ------------------------------------------------------------

template <typename T>
T sum(const TensorT<T>& t) {
  return kernels::sum(t.data(), t.numel());
}

template <typename T>
T mean(const TensorT<T>& t) {
  return t.numel() ? sum(t) / static_cast<T>(t.numel()) : T(0);
}

template <typename T>
T l2_norm_squared(const TensorT<T>& t) {
  return kernels::sum_squares(t.data(), t.numel());
}

}  // namespace fdg

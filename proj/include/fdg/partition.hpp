#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdg/layers.hpp"

namespace fdg {

class PartitionError : public std::runtime_error {
 public:
  explicit PartitionError(const std::string& what) : std::runtime_error(what) {}
};

enum class PartitionStrategy { EvenLayers, EvenParams };

// Assignment of the layer stack to K contiguous modules. boundaries holds
// K+1 zero-based layer offsets with boundaries[0] == 0 and
// boundaries[K] == L; module k (1-based) owns layers
// [boundaries[k-1], boundaries[k]).
struct ModulePartition {
  int K = 1;
  std::vector<std::size_t> boundaries;

  std::size_t begin(int k) const { return boundaries[static_cast<std::size_t>(k - 1)]; }
  std::size_t end(int k) const { return boundaries[static_cast<std::size_t>(k)]; }
  std::size_t layer_count(int k) const { return end(k) - begin(k); }

  void validate(std::size_t layer_count_total) const {
    if (K < 1) throw PartitionError("partition: K must be >= 1, got " + std::to_string(K));
    if (boundaries.size() != static_cast<std::size_t>(K) + 1)
      throw PartitionError("partition: expected " + std::to_string(K + 1) + " boundaries");
    if (boundaries.front() != 0 || boundaries.back() != layer_count_total)
      throw PartitionError("partition: boundaries must span all layers");
    for (int k = 1; k <= K; ++k)
      if (end(k) <= begin(k)) throw PartitionError("partition: empty module " + std::to_string(k));
  }
};

// Gradient delay of module k in a K-way split: 2(K-k) iterations.
inline int delay_of(int k, int K) {
  if (k < 1 || k > K)
    throw PartitionError("delay_of: module " + std::to_string(k) + " out of range [1, " +
                         std::to_string(K) + "]");
  return 2 * (K - k);
}

// d_{k,t} = t - 2(K-k): the batch whose gradient module k consumes at its
// local step t. Values < 1 mean no gradient has arrived yet (warmup).
inline long gradient_batch_index(int k, int K, long t) {
  if (t < 1) throw PartitionError("gradient_batch_index: t must be >= 1");
  return t - static_cast<long>(delay_of(k, K));
}

// Splits L layers into K contiguous modules. even-layers balances layer
// counts (remainder to the earlier modules); even-params walks the parameter
// prefix sums and cuts at the nearest K-quantiles, keeping every module
// non-empty.
inline ModulePartition make_partition(const std::vector<std::size_t>& layer_params, int K,
                                      PartitionStrategy strategy) {
  const std::size_t L = layer_params.size();
  if (K < 1) throw PartitionError("make_partition: K must be >= 1");
  if (static_cast<std::size_t>(K) > L)
    throw PartitionError("make_partition: K = " + std::to_string(K) + " exceeds layer count " +
                         std::to_string(L));

  ModulePartition p;
  p.K = K;
  p.boundaries.assign(static_cast<std::size_t>(K) + 1, 0);
  p.boundaries[static_cast<std::size_t>(K)] = L;

  if (strategy == PartitionStrategy::EvenLayers) {
    const std::size_t base = L / static_cast<std::size_t>(K);
    const std::size_t extra = L % static_cast<std::size_t>(K);
    std::size_t at = 0;
    for (int k = 1; k < K; ++k) {
      at += base + (static_cast<std::size_t>(k) <= extra ? 1 : 0);
      p.boundaries[static_cast<std::size_t>(k)] = at;
    }
  } else {
    std::vector<double> prefix(L + 1, 0.0);
    for (std::size_t i = 0; i < L; ++i)
      prefix[i + 1] = prefix[i] + static_cast<double>(layer_params[i]);
    const double total = prefix[L];
    for (int k = 1; k < K; ++k) {
      const double target = total * static_cast<double>(k) / static_cast<double>(K);
      // nearest prefix, constrained so that modules k..K stay non-empty
      const std::size_t lo = p.boundaries[static_cast<std::size_t>(k - 1)] + 1;
      const std::size_t hi = L - static_cast<std::size_t>(K - k);
      std::size_t best = lo;
      for (std::size_t cut = lo; cut <= hi; ++cut)
        if (std::abs(prefix[cut] - target) < std::abs(prefix[best] - target)) best = cut;
      p.boundaries[static_cast<std::size_t>(k)] = best;
    }
  }
  p.validate(L);
  return p;
}

template <typename T>
ModulePartition make_partition(const NetworkT<T>& net, int K, PartitionStrategy strategy) {
  std::vector<std::size_t> params;
  params.reserve(net.layers.size());
  for (const auto& l : net.layers) params.push_back(l->param_count());
  ModulePartition p = make_partition(params, K, strategy);
  // the head must land in module K; contiguity puts the last layer there,
  // but reject networks whose head is not last
  net.validate();
  return p;
}

}  // namespace fdg

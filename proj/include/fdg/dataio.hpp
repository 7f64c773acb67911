#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdg/rng.hpp"
#include "fdg/scheduler.hpp"
#include "fdg/tensor.hpp"

namespace fdg {

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

enum class IdxErrorCode { BadMagic, Truncated, CountMismatch };

class IdxError : public DataError {
 public:
  IdxError(IdxErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  IdxErrorCode code() const { return code_; }

 private:
  IdxErrorCode code_;
};

struct Dataset {
  Tensor inputs;  // [N x features] or [N x C x H x W]
  std::vector<int> labels;
  int class_count = 0;
  std::string split = "train";

  std::size_t size() const { return labels.size(); }

  void validate() const {
    if (inputs.rank() < 2 || inputs.dim(0) != labels.size())
      throw DataError("dataset: " + std::to_string(inputs.rank() ? inputs.dim(0) : 0) +
                      " inputs vs " + std::to_string(labels.size()) + " labels");
    for (int y : labels)
      if (y < 0 || y >= class_count)
        throw DataError("dataset: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(class_count) + ")");
  }
};

enum class SyntheticKind { TwoGaussians, XorRings, RandomTeacher };

inline SyntheticKind synthetic_kind_from(const std::string& s) {
  if (s == "two-gaussians") return SyntheticKind::TwoGaussians;
  if (s == "xor-rings") return SyntheticKind::XorRings;
  if (s == "random-teacher") return SyntheticKind::RandomTeacher;
  throw DataError("unknown synthetic dataset kind: " + s);
}

struct SyntheticSpec {
  std::size_t features = 2;
  int classes = 2;
  // random-teacher: hidden width of the frozen labeling network, the minimum
  // logit margin kept when resampling, and the teacher's own seed (0 = use
  // the sample seed). Distinct sample seeds with a pinned teacher_seed give
  // train/test splits labeled by the same function.
  std::size_t teacher_hidden = 32;
  double teacher_margin = 0.5;
  std::uint64_t teacher_seed = 0;
};

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed,
                      const SyntheticSpec& spec = {});

// IDX (big-endian) image/label pair; pixels scaled to [0,1], optional
// per-channel standardization.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 bool standardize = false);

// Seeded per-epoch shuffle; batch ids strictly increasing from 1; the ragged
// tail batch is kept.
class BatchStream {
 public:
  BatchStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  BatchT<double> next();
  std::size_t batches_per_epoch() const { return (data_->size() + batch_ - 1) / batch_; }

  // Adapter for the scheduler's sequential feeder.
  BatchProviderT<double> provider() {
    return [this](long id) {
      BatchT<double> b = next();
      if (b.id != id) throw DataError("batch stream consumed out of order");
      return b;
    };
  }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  long next_id_ = 1;
};

}  // namespace fdg

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fdg/tensor.hpp"

namespace fdg {

class OptimizerError : public std::runtime_error {
 public:
  explicit OptimizerError(const std::string& what) : std::runtime_error(what) {}
};

// Step-indexed learning-rate schedule: warmup-lr for the first warmup_steps
// steps, then base_lr divided by the product of divisors of passed
// milestones.
struct LrSchedule {
  double base_lr = 0.1;
  std::vector<std::pair<long, double>> milestones;  // (step, divisor), strictly increasing
  long warmup_steps = 0;
  double warmup_lr = 0.01;

  void validate() const {
    if (base_lr <= 0.0) throw OptimizerError("lr schedule: base_lr must be > 0");
    long prev = 0;
    for (const auto& [step, div] : milestones) {
      if (step <= prev) throw OptimizerError("lr schedule: milestones must be strictly increasing");
      if (div <= 0.0) throw OptimizerError("lr schedule: divisor must be > 0");
      prev = step;
    }
    if (warmup_steps > 0 && warmup_lr <= 0.0)
      throw OptimizerError("lr schedule: warmup_lr must be > 0");
  }

  double lr_at(long t) const {
    if (t < 1) throw OptimizerError("lr_at: t must be >= 1");
    if (t <= warmup_steps) return warmup_lr;
    double lr = base_lr;
    for (const auto& [step, div] : milestones)
      if (t > step) lr /= div;
    return lr;
  }
};

// Heavy-ball SGD with weight decay folded into the raw gradient:
//   buf <- mu * buf + (grad + wd * param);  param <- param - lr(t) * buf.
// One state per module; buffers match that module's parameter tensors.
template <typename T>
class SgdOptimizerT {
 public:
  SgdOptimizerT() = default;
  SgdOptimizerT(double momentum, double weight_decay, LrSchedule schedule)
      : momentum_(momentum), weight_decay_(weight_decay), schedule_(std::move(schedule)) {
    schedule_.validate();
  }

  double momentum() const { return momentum_; }
  const LrSchedule& schedule() const { return schedule_; }

  // params and grads are parallel flat lists of tensors; t indexes the lr
  // schedule (module-local step).
  void apply(std::vector<TensorT<T>*> params, const std::vector<const TensorT<T>*>& grads, long t) {
    if (params.size() != grads.size())
      throw OptimizerError("apply: " + std::to_string(params.size()) + " params vs " +
                           std::to_string(grads.size()) + " grads");
    if (buffers_.empty()) {
      buffers_.reserve(params.size());
      for (auto* p : params) buffers_.emplace_back(p->shape());
    }
    if (buffers_.size() != params.size()) throw OptimizerError("apply: buffer count mismatch");
    const T lr = static_cast<T>(schedule_.lr_at(t));
    const T mu = static_cast<T>(momentum_);
    const T wd = static_cast<T>(weight_decay_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      TensorT<T>& p = *params[i];
      const TensorT<T>& g = *grads[i];
      if (!p.same_shape(g))
        throw OptimizerError("apply: param " + shape_string(p.shape()) + " vs grad " +
                             shape_string(g.shape()));
      TensorT<T>& buf = buffers_[i];
      if (!buf.same_shape(p)) throw OptimizerError("apply: stale momentum buffer shape");
      for (std::size_t j = 0; j < p.numel(); ++j) {
        const T gj = g[j];
        if (!std::isfinite(gj))
          throw OptimizerError("apply: non-finite gradient at tensor " + std::to_string(i) +
                               " element " + std::to_string(j) + " (step " + std::to_string(t) + ")");
        buf[j] = mu * buf[j] + (gj + wd * p[j]);
        p[j] -= lr * buf[j];
      }
    }
  }

 private:
  double momentum_ = 0.0;
  double weight_decay_ = 0.0;
  LrSchedule schedule_;
  std::vector<TensorT<T>> buffers_;
};

using SgdOptimizer = SgdOptimizerT<double>;

}  // namespace fdg

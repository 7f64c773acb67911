#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdg/optimizer.hpp"
#include "fdg/scheduler.hpp"

namespace fdg {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class Method { Bp, Ddg, Fdg };
enum class RunMode { Lockstep, Freerun };

// Full run description. Parsed from a sectioned key=value text file; unknown
// keys are rejected. Defaults follow the reference training protocol
// (lr 0.1, momentum 0.9, weight decay 5e-4, batch 128, decade drops at
// epochs 150/225/275, 0.01 warmup lr available).
struct RunConfig {
  // [run]
  Method method = Method::Fdg;
  int k = 1;
  double beta = 1.0;
  Ordering ordering = Ordering::BackwardFirst;
  RunMode mode = RunMode::Lockstep;
  bool determinism = true;
  std::string precision = "f64";  // f64 | f32
  std::uint64_t seed = 42;
  std::size_t batch_size = 128;
  long iterations = 0;  // one of iterations/epochs must be > 0
  long epochs = 0;
  long eval_every = 0;  // 0 = once per epoch
  long watchdog_ms = 20000;

  // [optimizer]
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<long> milestone_epochs = {150, 225, 275};
  double lr_divisor = 10.0;
  long warmup_epochs = 0;
  double warmup_lr = 0.01;

  // [model]
  std::string arch = "dense:32,relu,dense:32,relu,dense:2,softmax_ce";
  std::string partition = "even-layers";  // even-layers | even-params

  // [data]
  std::string data_kind = "xor-rings";
  std::size_t data_n = 2000;
  std::size_t test_n = 500;
  std::size_t features = 2;
  int classes = 2;
  std::string idx_images, idx_labels, idx_test_images, idx_test_labels;
  bool standardize = false;

  // [output]
  std::string output_dir = "runs/out";
  bool save_weights = false;

  bool operator==(const RunConfig&) const = default;

  void validate() const {
    if (k < 1) throw ConfigError("run.k must be >= 1");
    if (beta <= 0.0 || beta > 1.0) throw ConfigError("run.beta must lie in (0, 1]");
    if (batch_size < 1) throw ConfigError("run.batch_size must be >= 1");
    if (iterations <= 0 && epochs <= 0)
      throw ConfigError("one of run.iterations / run.epochs must be > 0");
    if (precision != "f64" && precision != "f32")
      throw ConfigError("run.precision must be f64 or f32");
    if (lr <= 0.0) throw ConfigError("optimizer.lr must be > 0");
  }

  // Epoch-denominated settings convert with ceil(train_size / batch_size).
  long iterations_for(std::size_t train_size) const {
    const long per_epoch =
        static_cast<long>((train_size + batch_size - 1) / batch_size);
    return iterations > 0 ? iterations : epochs * per_epoch;
  }

  LrSchedule lr_schedule(std::size_t train_size) const {
    const long per_epoch =
        static_cast<long>((train_size + batch_size - 1) / batch_size);
    LrSchedule s;
    s.base_lr = lr;
    for (long e : milestone_epochs) s.milestones.push_back({e * per_epoch, lr_divisor});
    s.warmup_steps = warmup_epochs * per_epoch;
    s.warmup_lr = warmup_lr;
    return s;
  }

  SchedulerOptions scheduler_options(std::size_t train_size) const {
    SchedulerOptions o;
    o.beta = beta;
    o.ordering = ordering;
    o.momentum = momentum;
    o.weight_decay = weight_decay;
    o.lr = lr_schedule(train_size);
    o.watchdog_ms = watchdog_ms;
    return o;
  }
};

const char* to_string(Method m);
const char* to_string(RunMode m);
const char* to_string(Ordering o);

// Sectioned key=value text form; unknown sections or keys fail the parse.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// "section.key=value" override, same validation as the file parser.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace fdg

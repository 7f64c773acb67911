#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fdg/training_log.hpp"

namespace fdg {

class SpeedupError : public std::runtime_error {
 public:
  explicit SpeedupError(const std::string& what) : std::runtime_error(what) {}
};

enum class SpeedupMethod { Bp, Ddg, Fr, Lel, Fdg };

SpeedupMethod speedup_method_from(const std::string& s);
const char* to_string(SpeedupMethod m);

// Per-iteration time of one training step for a network evenly split into K
// modules, communication excluded:
//   bp:  Tf + Tb            ddg: Tf + Tb/K       fr: Tf + (Tf+Tb)/K
//   lel: (Tf+Tb)/K + Taux   fdg: (Tf+Tb)/K
// K = 1 means a single undecoupled module, so fr involves no replay and
// degenerates to Tf + Tb like the others.
double method_time(SpeedupMethod m, int K, double tf, double tb, double taux);

// (Tf+Tb) / method_time. The fdg ratio simplifies algebraically to exactly K
// and is returned in that form.
double ideal_speedup(SpeedupMethod m, int K, double tf, double tb, double taux);

// Abstract per-module costs for the event-driven simulator. Units are
// arbitrary time; comm_cost is a pure per-packet latency that occupies
// neither endpoint (DMA-like).
struct CostProfile {
  std::vector<double> forward_cost;   // size K
  std::vector<double> backward_cost;  // size K
  std::vector<double> aux_cost;       // size K; unused by the fdg schedules
  double comm_cost = 0.0;

  static CostProfile uniform(int K, double tf, double tb, double taux = 0.0, double tc = 0.0);

  // Calibration hook: per-module mean forward/backward times measured by a
  // real run (ms units), for what-if analysis under different comm costs.
  static CostProfile from_measured(const std::vector<ModuleStats>& stats, double comm_cost = 0.0);

  void validate() const;
  int K() const { return static_cast<int>(forward_cost.size()); }
  double total_compute() const;  // sum of all forward + backward costs
};

enum class ActivityTag { Fwd, Bwd, Comm, Idle };

const char* to_string(ActivityTag t);

struct TimelineEntry {
  int worker = 0;  // module id, 1-based
  double start = 0.0;
  double end = 0.0;
  ActivityTag tag = ActivityTag::Idle;
  long batch_id = 0;
};

// Per-worker intervals, non-overlapping and sorted. Communication occupies
// no worker under the DMA model, so no comm entries are emitted.
struct Timeline {
  std::vector<TimelineEntry> entries;
};

enum class SimSchedule { FdgLockstep, FdgFreerun };

struct SimStats {
  double makespan = 0.0;
  std::vector<double> utilization;  // per worker, in (0, 1]
  double items_per_time = 0.0;      // steady-state completed batches per time unit
  double speedup_vs_single = 0.0;   // items_per_time * single-worker cost per item
};

struct SimResult {
  Timeline timeline;
  SimStats stats;
};

// Event-driven realization of the delayed-gradient pipeline honoring the
// 2(K-k) delay schedule, the 2(K-k)+1 saved-graph cap and queue capacity 2K.
SimResult simulate_pipeline(const CostProfile& profile, long T, SimSchedule schedule);

// CSV export: worker,start,end,tag,batch_id.
void write_timeline_csv(std::ostream& os, const Timeline& tl);

}  // namespace fdg

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fdg {

// One scheduler event: what a module forwarded and updated at an iteration.
// On lockstep runs `iteration` is the global clock; free-running workers log
// their local step. batch_updated == 0 marks a warmup step (no gradient yet).
struct LogRow {
  long iteration = 0;
  int module_id = 0;
  long batch_forwarded = 0;  // 0: no forward in this row
  long batch_updated = 0;    // 0: warmup / no update
  double loss = std::nan("");       // module K rows only
  double grad_norm = std::nan("");  // on update rows
  double wall_ms = 0.0;
};

struct ModuleStats {
  int module_id = 0;
  long forwards = 0;
  long updates = 0;
  long warmup_skips = 0;
  std::size_t max_live_graphs = 0;
  int delay = 0;          // 2(K-k)
  double shrink = 1.0;    // beta^(K-k)
  double busy_ms = 0.0;
  double idle_ms = 0.0;
  double forward_ms = 0.0;   // compute time inside forwards
  double backward_ms = 0.0;  // compute time inside backwards + updates
};

struct TrainingLog {
  int K = 1;
  double beta = 1.0;
  std::vector<LogRow> rows;
  std::vector<ModuleStats> module_stats;
  double wall_seconds = 0.0;

  // Final loss seen by the top module.
  double final_loss() const {
    for (std::size_t i = rows.size(); i-- > 0;)
      if (!std::isnan(rows[i].loss)) return rows[i].loss;
    return std::nan("");
  }
};

struct ThroughputReport {
  std::vector<ModuleStats> modules;
  double items_per_sec = 0.0;
  double wall_seconds = 0.0;
  double speedup_vs_baseline = 0.0;  // 0 when no baseline was supplied
};

// CSV export (RFC 4180): header + one line per row. Defined in src/csv.cpp.
void write_csv(std::ostream& os, const TrainingLog& log);
std::string csv_escape(const std::string& field);

// Numeric-trajectory equality ignoring wall-clock columns. Returns a
// description of the first divergence, or nullopt when equal.
std::optional<std::string> first_divergence(const TrainingLog& a, const TrainingLog& b);

}  // namespace fdg

#include <algorithm>
#include <cmath>
#include <limits>

#include "fdg/partition.hpp"
#include "fdg/speedup.hpp"

namespace fdg {

SpeedupMethod speedup_method_from(const std::string& s) {
  if (s == "bp") return SpeedupMethod::Bp;
  if (s == "ddg") return SpeedupMethod::Ddg;
  if (s == "fr") return SpeedupMethod::Fr;
  if (s == "lel") return SpeedupMethod::Lel;
  if (s == "fdg") return SpeedupMethod::Fdg;
  throw SpeedupError("unknown speedup method: " + s);
}

const char* to_string(SpeedupMethod m) {
  switch (m) {
    case SpeedupMethod::Bp: return "bp";
    case SpeedupMethod::Ddg: return "ddg";
    case SpeedupMethod::Fr: return "fr";
    case SpeedupMethod::Lel: return "lel";
    case SpeedupMethod::Fdg: return "fdg";
  }
  return "?";
}

const char* to_string(ActivityTag t) {
  switch (t) {
    case ActivityTag::Fwd: return "fwd";
    case ActivityTag::Bwd: return "bwd";
    case ActivityTag::Comm: return "comm";
    case ActivityTag::Idle: return "idle";
  }
  return "?";
}

double method_time(SpeedupMethod m, int K, double tf, double tb, double taux) {
  if (K < 1) throw SpeedupError("method_time: K must be >= 1");
  if (tf <= 0.0 || tb <= 0.0) throw SpeedupError("method_time: costs must be > 0");
  const double k = static_cast<double>(K);
  switch (m) {
    case SpeedupMethod::Bp: return tf + tb;
    case SpeedupMethod::Ddg: return tf + tb / k;
    case SpeedupMethod::Fr: return K == 1 ? tf + tb : tf + (tf + tb) / k;
    case SpeedupMethod::Lel: return (tf + tb) / k + taux;
    case SpeedupMethod::Fdg: return (tf + tb) / k;
  }
  throw SpeedupError("method_time: bad method");
}

double ideal_speedup(SpeedupMethod m, int K, double tf, double tb, double taux) {
  if (m == SpeedupMethod::Fdg) {
    // (tf+tb) / ((tf+tb)/K) == K identically
    method_time(m, K, tf, tb, taux);  // argument validation
    return static_cast<double>(K);
  }
  return (tf + tb) / method_time(m, K, tf, tb, taux);
}

CostProfile CostProfile::uniform(int K, double tf, double tb, double taux, double tc) {
  if (K < 1) throw SpeedupError("cost profile: K must be >= 1");
  CostProfile p;
  p.forward_cost.assign(static_cast<std::size_t>(K), tf);
  p.backward_cost.assign(static_cast<std::size_t>(K), tb);
  p.aux_cost.assign(static_cast<std::size_t>(K), taux);
  p.comm_cost = tc;
  return p;
}

CostProfile CostProfile::from_measured(const std::vector<ModuleStats>& stats, double comm_cost) {
  if (stats.empty()) throw SpeedupError("cost profile: no module stats");
  CostProfile p;
  p.comm_cost = comm_cost;
  for (const auto& m : stats) {
    if (m.forwards < 1 || m.updates < 1)
      throw SpeedupError("cost profile: module " + std::to_string(m.module_id) +
                         " has no measured work");
    p.forward_cost.push_back(m.forward_ms / static_cast<double>(m.forwards));
    p.backward_cost.push_back(m.backward_ms / static_cast<double>(m.updates));
    p.aux_cost.push_back(0.0);
  }
  p.validate();
  return p;
}

void CostProfile::validate() const {
  if (forward_cost.empty() || forward_cost.size() != backward_cost.size() ||
      forward_cost.size() != aux_cost.size())
    throw SpeedupError("cost profile: per-module cost lists must be same nonzero size");
  for (double c : forward_cost)
    if (c < 0.0) throw SpeedupError("cost profile: negative forward cost");
  for (double c : backward_cost)
    if (c < 0.0) throw SpeedupError("cost profile: negative backward cost");
  for (double c : aux_cost)
    if (c < 0.0) throw SpeedupError("cost profile: negative aux cost");
  if (comm_cost < 0.0) throw SpeedupError("cost profile: negative comm cost");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct SimModule {
  long next_fwd = 1;  // next batch to forward
  long next_bwd = 1;  // next batch to backward (arrives in batch order)
  double free_at = 0.0;
  double busy = 0.0;
  std::vector<double> fwd_end;  // [batch] -> completion time
  std::vector<double> bwd_end;
  std::vector<double> fwd_start;
  std::vector<double> bwd_start;
};

// Steady-state rate over the second half of the top module's completions.
double steady_rate(const std::vector<double>& done, long T) {
  if (T < 4) return done.empty() ? 0.0 : static_cast<double>(T) / done[static_cast<std::size_t>(T)];
  const long half = T / 2;
  const double span = done[static_cast<std::size_t>(T)] - done[static_cast<std::size_t>(half)];
  return span > 0.0 ? static_cast<double>(T - half) / span : 0.0;
}

SimResult simulate_freerun(const CostProfile& p, long T) {
  const int K = p.K();
  const std::size_t cap = 2 * static_cast<std::size_t>(K);
  std::vector<SimModule> mods(static_cast<std::size_t>(K) + 1);
  for (auto& m : mods) {
    m.fwd_end.assign(static_cast<std::size_t>(T) + 1, kInf);
    m.bwd_end.assign(static_cast<std::size_t>(T) + 1, kInf);
    m.fwd_start.assign(static_cast<std::size_t>(T) + 1, kInf);
    m.bwd_start.assign(static_cast<std::size_t>(T) + 1, kInf);
  }

  Timeline tl;

  // earliest possible start of the next forward/backward per module; kInf
  // when the dependency event has not happened yet
  auto fwd_candidate = [&](int k) -> double {
    SimModule& m = mods[static_cast<std::size_t>(k)];
    if (m.next_fwd > T) return kInf;
    const long cap_graphs = 2L * (K - k) + 1;
    if (m.next_fwd - m.next_bwd >= cap_graphs) return kInf;  // saved-graph gate
    double arrival = 0.0;
    if (k > 1) {
      const double produced = mods[static_cast<std::size_t>(k - 1)].fwd_end[static_cast<std::size_t>(m.next_fwd)];
      if (produced == kInf) return kInf;
      // inbound activation queue capacity: the packet departs once the
      // receiver has started batch next_fwd - cap
      double space = 0.0;
      if (m.next_fwd > static_cast<long>(cap))
        space = m.fwd_start[static_cast<std::size_t>(m.next_fwd - static_cast<long>(cap))];
      arrival = std::max(produced, space) + p.comm_cost;
    }
    return std::max(m.free_at, arrival);
  };

  auto bwd_candidate = [&](int k) -> double {
    SimModule& m = mods[static_cast<std::size_t>(k)];
    if (m.next_bwd > T) return kInf;
    double arrival;
    if (k == K) {
      // loss gradient of the module's own forward, no hop
      arrival = m.fwd_end[static_cast<std::size_t>(m.next_bwd)];
      if (arrival == kInf) return kInf;
    } else {
      const double produced =
          mods[static_cast<std::size_t>(k + 1)].bwd_end[static_cast<std::size_t>(m.next_bwd)];
      if (produced == kInf) return kInf;
      double space = 0.0;
      if (m.next_bwd > static_cast<long>(cap))
        space = m.bwd_start[static_cast<std::size_t>(m.next_bwd - static_cast<long>(cap))];
      arrival = std::max(produced, space) + p.comm_cost;
    }
    return std::max(m.free_at, arrival);
  };

  while (true) {
    // globally earliest runnable activity; each worker prefers its backward
    // when both are ready at the same instant (backward-first)
    int pick = 0;
    bool pick_bwd = false;
    double best = kInf;
    for (int k = 1; k <= K; ++k) {
      const double cb = bwd_candidate(k);
      const double cf = fwd_candidate(k);
      const bool choose_bwd = cb <= cf;
      const double cand = choose_bwd ? cb : cf;
      if (cand < best) {
        best = cand;
        pick = k;
        pick_bwd = choose_bwd;
      }
    }
    if (pick == 0) break;  // all work done

    SimModule& m = mods[static_cast<std::size_t>(pick)];
    if (pick_bwd) {
      const long b = m.next_bwd;
      const double cost = p.backward_cost[static_cast<std::size_t>(pick - 1)];
      m.bwd_start[static_cast<std::size_t>(b)] = best;
      m.bwd_end[static_cast<std::size_t>(b)] = best + cost;
      tl.entries.push_back({pick, best, best + cost, ActivityTag::Bwd, b});
      m.free_at = best + cost;
      m.busy += cost;
      ++m.next_bwd;
    } else {
      const long b = m.next_fwd;
      const double cost = p.forward_cost[static_cast<std::size_t>(pick - 1)];
      m.fwd_start[static_cast<std::size_t>(b)] = best;
      m.fwd_end[static_cast<std::size_t>(b)] = best + cost;
      tl.entries.push_back({pick, best, best + cost, ActivityTag::Fwd, b});
      m.free_at = best + cost;
      m.busy += cost;
      ++m.next_fwd;
    }
  }

  SimResult res;
  res.stats.makespan = 0.0;
  for (int k = 1; k <= K; ++k)
    res.stats.makespan = std::max(res.stats.makespan, mods[static_cast<std::size_t>(k)].free_at);
  for (int k = 1; k <= K; ++k)
    res.stats.utilization.push_back(res.stats.makespan > 0.0
                                        ? mods[static_cast<std::size_t>(k)].busy / res.stats.makespan
                                        : 0.0);
  res.stats.items_per_time = steady_rate(mods[static_cast<std::size_t>(K)].bwd_end, T);
  res.stats.speedup_vs_single = res.stats.items_per_time * p.total_compute();
  res.timeline = std::move(tl);
  return res;
}

SimResult simulate_lockstep(const CostProfile& p, long T) {
  const int K = p.K();
  Timeline tl;
  std::vector<double> busy(static_cast<std::size_t>(K) + 1, 0.0);
  std::vector<double> top_done(static_cast<std::size_t>(T) + 1, 0.0);
  double clock = 0.0;

  for (long t = 1; t <= T; ++t) {
    double longest = 0.0;
    for (int k = 1; k <= K; ++k) {
      const long tau = t - k + 1;
      if (tau < 1) continue;
      double at = clock;
      const long d = tau - 2L * (K - k);
      // backward-first within the iteration; the top module forwards first
      // (its loss gradient has delay 0)
      if (k == K) {
        const double tf = p.forward_cost[static_cast<std::size_t>(k - 1)];
        const double tb = p.backward_cost[static_cast<std::size_t>(k - 1)];
        tl.entries.push_back({k, at, at + tf, ActivityTag::Fwd, tau});
        at += tf;
        tl.entries.push_back({k, at, at + tb, ActivityTag::Bwd, tau});
        at += tb;
        top_done[static_cast<std::size_t>(tau)] = at;
      } else {
        if (d >= 1) {
          const double tb = p.backward_cost[static_cast<std::size_t>(k - 1)];
          tl.entries.push_back({k, at, at + tb, ActivityTag::Bwd, d});
          at += tb;
        }
        const double tf = p.forward_cost[static_cast<std::size_t>(k - 1)];
        tl.entries.push_back({k, at, at + tf, ActivityTag::Fwd, tau});
        at += tf;
      }
      busy[static_cast<std::size_t>(k)] += at - clock;
      longest = std::max(longest, at - clock);
    }
    clock += longest + (K > 1 ? p.comm_cost : 0.0);
  }

  SimResult res;
  res.stats.makespan = clock;
  for (int k = 1; k <= K; ++k)
    res.stats.utilization.push_back(clock > 0.0 ? busy[static_cast<std::size_t>(k)] / clock : 0.0);
  const long completed = std::max<long>(0, T - K + 1);  // batches seen by the top module
  res.stats.items_per_time = completed >= 1 ? steady_rate(top_done, completed) : 0.0;
  res.stats.speedup_vs_single = res.stats.items_per_time * p.total_compute();
  res.timeline = std::move(tl);
  return res;
}

}  // namespace

double CostProfile::total_compute() const {
  double acc = 0.0;
  for (double c : forward_cost) acc += c;
  for (double c : backward_cost) acc += c;
  return acc;
}

SimResult simulate_pipeline(const CostProfile& profile, long T, SimSchedule schedule) {
  profile.validate();
  if (T < 1) throw SpeedupError("simulate_pipeline: T must be >= 1");
  return schedule == SimSchedule::FdgFreerun ? simulate_freerun(profile, T)
                                             : simulate_lockstep(profile, T);
}

void write_timeline_csv(std::ostream& os, const Timeline& tl) {
  os << "worker,start,end,tag,batch_id\n";
  for (const auto& e : tl.entries)
    os << e.worker << ',' << e.start << ',' << e.end << ',' << to_string(e.tag) << ',' << e.batch_id
       << '\n';
}

}  // namespace fdg

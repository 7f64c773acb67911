// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fdg/dataio.hpp"
#include "fdg/speedup.hpp"
#include "fdg/trainers.hpp"
#include "fdg/verification.hpp"

using namespace fdg;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Harness {
  int failures = 0;
  std::vector<std::pair<int, std::vector<ModuleStats>>> observed_runs;  // (K, stats) for criterion 10

  void record(int K, const TrainingLog& log) { observed_runs.push_back({K, log.module_stats}); }

  void criterion(int id, const std::string& name, double budget_seconds,
                 const std::function<Outcome(std::string&)>& body) {
    std::string detail;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out = Outcome::Fail;
    try {
      out = body(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out == Outcome::Pass && budget_seconds > 0.0 && elapsed > budget_seconds) {
      out = Outcome::Fail;
      detail += (detail.empty() ? "" : "; ") + std::string("over time budget: ") +
                std::to_string(elapsed) + "s > " + std::to_string(budget_seconds) + "s";
    }
    const char* tag = out == Outcome::Pass ? "PASS" : out == Outcome::Fail ? "FAIL" : "SKIP";
    std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", tag, id, name.c_str(), elapsed,
                detail.empty() ? "" : " -- ", detail.c_str());
    std::fflush(stdout);
    if (out == Outcome::Fail) ++failures;
  }
};

std::vector<double> flatten_params(const NetworkT<double>& net) {
  std::vector<double> out;
  for (const auto& l : net.layers)
    for (const auto& p : l->params()) out.insert(out.end(), p.values().begin(), p.values().end());
  return out;
}

Dataset four_class_data(std::size_t n, std::uint64_t seed, std::uint64_t teacher_seed = 0,
                        double margin = 0.5) {
  SyntheticSpec spec;
  spec.features = 8;
  spec.classes = 4;
  spec.teacher_seed = teacher_seed;
  spec.teacher_margin = margin;
  return gen_synthetic(SyntheticKind::RandomTeacher, n, seed, spec);
}

SchedulerOptions sgd_opts(double lr, double beta = 1.0, double momentum = 0.0) {
  SchedulerOptions o;
  o.lr.base_lr = lr;
  o.beta = beta;
  o.momentum = momentum;
  return o;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

int main() {
  Harness h;

  // 1. Degeneracy equivalence: FDG at K=1 is bit-identical to BP.
  h.criterion(1, "degeneracy: train-fdg(K=1) == train-bp bit-exactly", 10.0, [&](std::string& why) {
    const Dataset data = four_class_data(512, 11);
    NetworkT<double> a = build_network<double>(
        "dense:32,relu,dense:32,relu,dense:4,softmax_ce", {8}, Rng(3));
    NetworkT<double> b = a.clone();
    BatchStream s1(data, 32, 5), s2(data, 32, 5);
    const ModulePartition part = make_partition(a, 1, PartitionStrategy::EvenLayers);

    const TrainingLog la = train_fdg(a, part, sgd_opts(0.05), s1.provider(), 200, RunMode::Lockstep);
    const TrainingLog lb = train_bp(b, s2.provider(), sgd_opts(0.05), 200);
    h.record(1, la);

    if (auto diff = first_divergence(la, lb)) {
      why = "log divergence at " + *diff;
      return Outcome::Fail;
    }
    if (flatten_params(a) != flatten_params(b)) {
      why = "final parameters differ";
      return Outcome::Fail;
    }
    return Outcome::Pass;
  });

  // 2. Oracle equivalence: threaded lockstep == single-thread serial emulation.
  h.criterion(2, "oracle: run-lockstep == serial emulation for K in {2,3,4}", 30.0,
              [&](std::string& why) {
                for (int k : {2, 3, 4}) {
                  const Dataset data = four_class_data(512, 11);
                  const std::string arch =
                      k == 4 ? "dense:32,relu,dense:32,relu,dense:32,relu,dense:4,softmax_ce"
                             : "dense:32,relu,dense:32,relu,dense:4,softmax_ce";
                  NetworkT<double> a = build_network<double>(arch, {8}, Rng(3));
                  NetworkT<double> b = a.clone();
                  BatchStream s1(data, 32, 5), s2(data, 32, 5);
                  const ModulePartition part = make_partition(a, k, PartitionStrategy::EvenLayers);

                  const TrainingLog la = run_lockstep(a, part, sgd_opts(0.05), s1.provider(), 50);
                  const TrainingLog lb =
                      serial_emulate_fdg(b, part, sgd_opts(0.05), s2.provider(), 50);
                  h.record(k, la);

                  if (auto diff = first_divergence(la, lb)) {
                    why = "K=" + std::to_string(k) + ": " + *diff;
                    return Outcome::Fail;
                  }
                  if (flatten_params(a) != flatten_params(b)) {
                    why = "K=" + std::to_string(k) + ": final parameters differ";
                    return Outcome::Fail;
                  }
                }
                return Outcome::Pass;
              });

  // 3. Delay law: consume-forward gap is exactly 2(K-k); warmup skips match.
  h.criterion(3, "delay law: gap == 2(K-k), warmup skips == 2(K-k)", 30.0, [&](std::string& why) {
    const int K = 3;
    const Dataset data = four_class_data(512, 11);
    NetworkT<double> net = build_network<double>(
        "dense:32,relu,dense:32,relu,dense:4,softmax_ce", {8}, Rng(3));
    BatchStream s(data, 32, 5);
    const ModulePartition part = make_partition(net, K, PartitionStrategy::EvenLayers);
    const TrainingLog log = run_lockstep(net, part, sgd_opts(0.05), s.provider(), 60);
    h.record(K, log);

    std::map<std::pair<int, long>, long> fwd_at;
    for (const auto& r : log.rows)
      if (r.batch_forwarded > 0) fwd_at[{r.module_id, r.batch_forwarded}] = r.iteration;
    std::map<int, long> warmups;
    for (const auto& r : log.rows) {
      if (r.batch_updated > 0) {
        const long gap = r.iteration - fwd_at.at({r.module_id, r.batch_updated});
        if (gap != delay_of(r.module_id, K)) {
          why = "module " + std::to_string(r.module_id) + " gap " + std::to_string(gap);
          return Outcome::Fail;
        }
      } else {
        ++warmups[r.module_id];
      }
    }
    for (int k = 1; k <= K; ++k)
      if (warmups[k] != delay_of(k, K)) {
        why = "module " + std::to_string(k) + " warmup skips " + std::to_string(warmups[k]);
        return Outcome::Fail;
      }
    return Outcome::Pass;
  });

  // 4. GS factor: beta=0.5, K=3 -> exact 0.25 / 0.5 / 1 scaling.
  h.criterion(4, "gradient shrinking factor beta^(K-k) exact at beta=0.5", 10.0,
              [&](std::string& why) {
                NetworkT<double> net = build_network<double>(
                    "dense:12,relu,dense:12,relu,dense:12,relu,dense:3,softmax_ce", {4}, Rng(9));
                const ModulePartition part = make_partition(net, 3, PartitionStrategy::EvenLayers);
                Rng rng(13);
                BatchT<double> batch;
                batch.id = 1;
                batch.inputs = Tensor({8, 4});
                for (auto& v : batch.inputs.values()) v = rng.normal();
                batch.labels = {0, 1, 2, 0, 1, 2, 0, 1};
                const GsFactorReport gs = gs_factor_check(net, part, 0.5, batch);
                if (!gs.pass) {
                  why = "factors not exact";
                  return Outcome::Fail;
                }
                return gs.expected_factor == std::vector<double>{0.25, 0.5, 1.0}
                           ? Outcome::Pass
                           : Outcome::Fail;
              });

  // 5. Gradient correctness: finite differences over all layer kinds.
  h.criterion(5, "finite-difference gradients: max rel err < 1e-6", 5.0, [&](std::string& why) {
    Rng rng(7);
    NetworkT<double> net = build_network<double>(
        "conv3x3:2,relu,flatten,dense:8,relu,dense:3,softmax_ce", {1, 5, 5}, Rng(7));
    BatchT<double> batch;
    batch.id = 1;
    batch.inputs = Tensor({4, 1, 5, 5});
    for (auto& v : batch.inputs.values()) v = rng.normal();
    batch.labels = {0, 1, 2, 1};
    const GradCheckReport report = grad_check(net, batch, 1e-5, 1e-6);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max rel err %.2e", report.max_rel_err);
    why = buf;
    return report.pass ? Outcome::Pass : Outcome::Fail;
  });

  // 6. Theorem-1 consistency on a convex quadratic (statistical).
  h.criterion(6, "descent bound satisfied at >= 95% of 500 checkpoints", 60.0,
              [&](std::string& why) {
                QuadraticObjective quad(24, 2048, 64, 99);
                Rng rng(17);
                const TheoremConstants consts = estimate_constants(quad, 32, 1e-3, rng);
                const int K = 3;
                const double beta = 0.7;

                const std::vector<double> g0 = quad.full_grad();
                double z1 = 0.0;
                for (int k = 1; k <= K; ++k) {
                  const auto [lo, hi] = param_block(quad.dim(), K, k);
                  double acc = 0.0;
                  for (std::size_t i = lo; i < hi; ++i) acc += g0[i] * g0[i];
                  z1 += std::pow(beta, K - k) * acc;
                }
                double stale = 0.0;
                for (int k = 1; k <= K; ++k)
                  stale += std::pow(beta, 3 * (K - k)) * (2.0 * (K - k));
                const double z2 =
                    consts.L_hat * consts.M_hat * (geometric_shrink_sum(beta, K) + stale);
                const double gamma = 0.5 * std::min(1.0 / consts.L_hat, z1 / (2.0 * z2));

                const TheoremLog log = run_delayed_sgd(quad, K, beta, gamma, 501, rng);
                const DescentReport report = descent_monitor(log, consts, beta, K);
                why = "rate " + std::to_string(report.satisfaction_rate) + ", gamma " +
                      std::to_string(gamma) + ", checkpoints " +
                      std::to_string(report.records.size());
                return report.records.size() == 500 && report.satisfaction_rate >= 0.95
                           ? Outcome::Pass
                           : Outcome::Fail;
              });

  // 7. Qualitative effect at desk scale: beta sweep at K=3 vs BP (5-seed median).
  h.criterion(7, "best beta <= beta=1 and tuned FDG within 2pp of BP (5-seed median)", 300.0,
              [&](std::string& why) {
                const std::vector<double> betas = {0.2, 0.4, 0.6, 0.8, 1.0};
                const long T = 1200;
                std::vector<double> bp_errs, beta1_errs, best_errs;

                for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                  // fresh samples for test, same frozen teacher; a thin
                  // teacher margin keeps the task away from zero error
                  const Dataset train = four_class_data(1000, 100 + seed, 100 + seed, 0.1);
                  const Dataset test = four_class_data(600, 900 + seed, 100 + seed, 0.1);
                  const std::string arch = "dense:32,relu,dense:32,relu,dense:4,softmax_ce";

                  NetworkT<double> bp_net = build_network<double>(arch, {8}, Rng(seed));
                  BatchStream bp_stream(train, 32, seed);
                  train_bp(bp_net, bp_stream.provider(), sgd_opts(0.1), T);
                  bp_errs.push_back(evaluate(bp_net, test).top1_error);

                  double best = 1.0, at_beta1 = 1.0;
                  for (double beta : betas) {
                    NetworkT<double> net = build_network<double>(arch, {8}, Rng(seed));
                    BatchStream s(train, 32, seed);
                    const ModulePartition part = make_partition(net, 3, PartitionStrategy::EvenLayers);
                    const TrainingLog log = train_fdg(net, part, sgd_opts(0.1, beta), s.provider(),
                                                      T, RunMode::Lockstep);
                    h.record(3, log);
                    const double err = evaluate(net, test).top1_error;
                    best = std::min(best, err);
                    if (beta == 1.0) at_beta1 = err;
                  }
                  best_errs.push_back(best);
                  beta1_errs.push_back(at_beta1);
                }

                const double bp_med = median(bp_errs);
                const double best_med = median(best_errs);
                const double beta1_med = median(beta1_errs);
                why = "bp " + std::to_string(bp_med) + ", best-beta " + std::to_string(best_med) +
                      ", beta=1 " + std::to_string(beta1_med);
                return best_med <= beta1_med && best_med <= bp_med + 0.02 ? Outcome::Pass
                                                                            : Outcome::Fail;
              });

  // 8. Ideal speedup: exact K, and the simulator within 1% at T=1000.
  h.criterion(8, "ideal-speedup(fdg,K) == K; zero-comm simulation within 1%", 5.0,
              [&](std::string& why) {
                for (int k = 1; k <= 8; ++k)
                  if (ideal_speedup(SpeedupMethod::Fdg, k, 1.0, 2.0, 0.0) !=
                      static_cast<double>(k)) {
                    why = "ideal speedup not exact at K=" + std::to_string(k);
                    return Outcome::Fail;
                  }
                for (int k : {2, 4, 8}) {
                  const CostProfile p = CostProfile::uniform(k, 1.0, 2.0);
                  const SimResult r = simulate_pipeline(p, 1000, SimSchedule::FdgFreerun);
                  const double rel = std::abs(r.stats.speedup_vs_single - k) / k;
                  if (rel > 0.01) {
                    why = "K=" + std::to_string(k) + " speedup " +
                          std::to_string(r.stats.speedup_vs_single);
                    return Outcome::Fail;
                  }
                }
                return Outcome::Pass;
              });

  // 9. Measured concurrency: free-running K=2 vs K=1 on a compute-heavy net.
  // The bound is stated for a >= 4-core machine; on smaller boxes the
  // measurement still runs (with a sanity floor) but the 1.5x bound is
  // reported as unmet-precondition rather than failed.
  h.criterion(9, "free-running K=2 >= 1.5x items/sec vs K=1 (>= 4-core machine)", 120.0,
              [&](std::string& why) {
                const unsigned cores = std::thread::hardware_concurrency();
                SyntheticSpec spec;
                spec.features = 160;
                spec.classes = 10;
                const Dataset data = gen_synthetic(SyntheticKind::RandomTeacher, 512, 11, spec);
                const std::string arch =
                    "dense:160,relu,dense:160,relu,dense:160,relu,dense:160,relu,dense:10,"
                    "softmax_ce";
                const long T = 60;

                auto items_per_sec = [&](int k) {
                  NetworkT<double> net = build_network<double>(arch, {160}, Rng(3));
                  BatchStream s(data, 64, 5);
                  const ModulePartition part =
                      make_partition(net, k, PartitionStrategy::EvenParams);
                  auto [log, report] = run_freerunning(net, part, sgd_opts(0.05), s.provider(), T);
                  h.record(k, log);
                  return report.items_per_sec;
                };

                // raw capacity probe: aggregate throughput of two independent
                // compute threads relative to one
                auto burn = [] {
                  volatile double acc = 0.0;
                  for (long i = 0; i < 120000000; ++i) acc += static_cast<double>(i % 7) * 1.0000001;
                  return acc;
                };
                const auto p0 = std::chrono::steady_clock::now();
                burn();
                const double one = std::chrono::duration<double>(std::chrono::steady_clock::now() - p0).count();
                const auto p1 = std::chrono::steady_clock::now();
                {
                  std::thread t1(burn), t2(burn);
                  t1.join();
                  t2.join();
                }
                const double two = std::chrono::duration<double>(std::chrono::steady_clock::now() - p1).count();
                const double machine_scaling = 2.0 * one / two;

                const double r1 = items_per_sec(1);
                const double r2 = items_per_sec(2);
                const double ratio = r2 / r1;
                why = "K=1 " + std::to_string(r1) + "/s, K=2 " + std::to_string(r2) +
                      "/s, ratio " + std::to_string(ratio) + " on " + std::to_string(cores) +
                      " hardware threads (raw 2-thread compute scaling " +
                      std::to_string(machine_scaling) + "x)";
                if (cores >= 4) return ratio >= 1.5 ? Outcome::Pass : Outcome::Fail;
                if (ratio < 0.75) return Outcome::Fail;  // pipeline itself broken
                if (ratio >= 1.5) return Outcome::Pass;  // bound met even here
                why += "; 1.5x bound requires >= 4 cores, machine has " + std::to_string(cores);
                return Outcome::Skip;
              });

  // 10. Memory bound across everything this suite executed.
  h.criterion(10, "live saved graphs never exceed 2(K-k)+1 in any run", 5.0,
              [&](std::string& why) {
                if (h.observed_runs.empty()) {
                  why = "no runs recorded";
                  return Outcome::Fail;
                }
                for (const auto& [K, stats] : h.observed_runs)
                  for (const auto& m : stats) {
                    const std::size_t cap = static_cast<std::size_t>(2 * (K - m.module_id) + 1);
                    if (m.max_live_graphs > cap) {
                      why = "K=" + std::to_string(K) + " module " + std::to_string(m.module_id) +
                            ": " + std::to_string(m.max_live_graphs) + " > " + std::to_string(cap);
                      return Outcome::Fail;
                    }
                  }
                why = std::to_string(h.observed_runs.size()) + " runs checked";
                return Outcome::Pass;
              });

  if (h.failures) {
    std::printf("ACCEPTANCE: %d criterion(s) failed\n", h.failures);
    return 1;
  }
  std::printf("ACCEPTANCE: all criteria passed\n");
  return 0;
}

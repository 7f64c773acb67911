#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "fdg/cli.hpp"
#include "fdg/kernels.hpp"
#include "fdg/partition.hpp"
#include "fdg/speedup.hpp"
#include "fdg/verification.hpp"

namespace fdg {

namespace {

Dataset build_dataset(const RunConfig& cfg, bool test_split) {
  if (cfg.data_kind == "idx") {
    const std::string& imgs = test_split ? cfg.idx_test_images : cfg.idx_images;
    const std::string& lbls = test_split ? cfg.idx_test_labels : cfg.idx_labels;
    if (imgs.empty() || lbls.empty())
      throw ConfigError("data.kind = idx requires idx image/label paths");
    Dataset d = load_idx(imgs, lbls, cfg.standardize);
    d.split = test_split ? "test" : "train";
    return d;
  }
  SyntheticSpec spec;
  spec.features = cfg.features;
  spec.classes = cfg.classes;
  spec.teacher_seed = cfg.seed;  // same labeling function for both splits
  const std::size_t n = test_split ? cfg.test_n : cfg.data_n;
  Dataset d = gen_synthetic(synthetic_kind_from(cfg.data_kind), n,
                            test_split ? cfg.seed + 1 : cfg.seed, spec);
  d.split = test_split ? "test" : "train";
  return d;
}

std::vector<std::size_t> sample_shape(const Dataset& d) {
  std::vector<std::size_t> s(d.inputs.shape().begin() + 1, d.inputs.shape().end());
  return s;
}

PartitionStrategy strategy_from(const std::string& s) {
  return s == "even-params" ? PartitionStrategy::EvenParams : PartitionStrategy::EvenLayers;
}

template <typename T>
TrainOutcome run_training_impl(const RunConfig& cfg) {
  cfg.validate();
  kernels::set_parallel(!cfg.determinism);

  const Dataset train = build_dataset(cfg, false);
  const bool want_test = cfg.data_kind == "idx" ? !cfg.idx_test_images.empty() : cfg.test_n > 0;
  std::optional<Dataset> test;
  if (want_test) test = build_dataset(cfg, true);

  NetworkT<T> net = build_network<T>(cfg.arch, sample_shape(train), Rng(cfg.seed));
  const long T_iters = cfg.iterations_for(train.size());
  const SchedulerOptions opts = cfg.scheduler_options(train.size());

  BatchStream stream(train, cfg.batch_size, cfg.seed);
  BatchProviderT<T> provider;
  if constexpr (std::is_same_v<T, double>) {
    provider = stream.provider();
  } else {
    provider = [&stream](long id) {
      BatchT<double> b = stream.provider()(id);
      return BatchT<T>{b.id, b.inputs.template cast<T>(), std::move(b.labels)};
    };
  }

  TrainOutcome out;
  out.iterations = T_iters;
  const long per_epoch = static_cast<long>(stream.batches_per_epoch());
  const long eval_every = cfg.eval_every > 0 ? cfg.eval_every : per_epoch;

  IterationHook hook;
  if (test && cfg.mode != RunMode::Freerun) {
    hook = [&](long t) {
      if (t % eval_every == 0) {
        EvalResult e = evaluate(net, *test);
        out.eval_history.push_back({t, e.loss, e.top1_error});
      }
    };
  }

  const auto wall0 = std::chrono::steady_clock::now();
  switch (cfg.method) {
    case Method::Bp:
      out.log = train_bp(net, provider, opts, T_iters, hook);
      break;
    case Method::Ddg: {
      const ModulePartition part = make_partition(net, cfg.k, strategy_from(cfg.partition));
      out.log = train_ddg_mode(net, part, opts, provider, T_iters, hook);
      break;
    }
    case Method::Fdg: {
      const ModulePartition part = make_partition(net, cfg.k, strategy_from(cfg.partition));
      out.log = train_fdg(net, part, opts, provider, T_iters, cfg.mode, &out.throughput, hook);
      break;
    }
  }
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  if (test) out.test_eval = evaluate(net, *test);
  if (cfg.save_weights) {
    std::ostringstream blob;
    save_checkpoint(blob, net);
    out.weights_blob = blob.str();
  }
  kernels::set_parallel(false);
  return out;
}

}  // namespace

TrainOutcome run_training(const RunConfig& cfg) {
  if (cfg.precision == "f32") return run_training_impl<float>(cfg);
  return run_training_impl<double>(cfg);
}

std::string resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("FDG_OUTPUT_ROOT")) p = std::filesystem::path(root) / p;
  }
  return p.string();
}

nlohmann::json summary_json(const RunConfig& cfg, const TrainOutcome& out,
                            std::optional<double> baseline_wall_seconds) {
  nlohmann::json j;
  j["method"] = to_string(cfg.method);
  j["k"] = cfg.k;
  j["beta"] = cfg.beta;
  j["mode"] = to_string(cfg.mode);
  j["ordering"] = to_string(cfg.ordering);
  j["seed"] = cfg.seed;
  j["iterations"] = out.iterations;
  j["final_loss"] = out.log.final_loss();
  j["top1_error"] = out.test_eval ? nlohmann::json(out.test_eval->top1_error) : nlohmann::json();
  j["wall_seconds"] = out.wall_seconds;
  j["speedup_vs_bp"] = baseline_wall_seconds && out.wall_seconds > 0.0
                           ? nlohmann::json(*baseline_wall_seconds / out.wall_seconds)
                           : nlohmann::json();
  if (out.throughput.items_per_sec > 0.0) j["items_per_sec"] = out.throughput.items_per_sec;
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : out.log.module_stats) {
    mods.push_back({{"module", m.module_id},
                    {"delay", m.delay},
                    {"shrink", m.shrink},
                    {"forwards", m.forwards},
                    {"updates", m.updates},
                    {"warmup_skips", m.warmup_skips},
                    {"max_live_graphs", m.max_live_graphs},
                    {"busy_ms", m.busy_ms},
                    {"idle_ms", m.idle_ms}});
  }
  j["modules"] = mods;
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : out.eval_history)
    evals.push_back({{"iteration", e.iteration}, {"loss", e.loss}, {"top1_error", e.top1_error}});
  j["eval_history"] = evals;
  return j;
}

std::string write_run_artifacts(const RunConfig& cfg, const TrainOutcome& out,
                                const nlohmann::json& summary) {
  const std::string dir = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/config.snapshot");
    f << serialize_config(cfg);
  }
  {
    std::ofstream f(dir + "/log.csv");
    write_csv(f, out.log);
  }
  {
    std::ofstream f(dir + "/summary.json");
    f << summary.dump(2) << "\n";
  }
  if (!out.weights_blob.empty()) {
    std::ofstream f(dir + "/weights.bin", std::ios::binary);
    f.write(out.weights_blob.data(), static_cast<std::streamsize>(out.weights_blob.size()));
  }
  if (out.throughput.items_per_sec > 0.0) {
    nlohmann::json t;
    t["items_per_sec"] = out.throughput.items_per_sec;
    t["wall_seconds"] = out.throughput.wall_seconds;
    t["speedup_vs_baseline"] = out.throughput.speedup_vs_baseline > 0.0
                                   ? nlohmann::json(out.throughput.speedup_vs_baseline)
                                   : nlohmann::json();
    nlohmann::json mods = nlohmann::json::array();
    for (const auto& m : out.throughput.modules)
      mods.push_back({{"module", m.module_id},
                      {"busy_ms", m.busy_ms},
                      {"idle_ms", m.idle_ms},
                      {"forwards", m.forwards},
                      {"updates", m.updates}});
    t["modules"] = mods;
    std::ofstream f(dir + "/throughput.json");
    f << t.dump(2) << "\n";
  }
  return dir;
}

namespace {

RunConfig config_from_cli(const std::string& config_path, const std::vector<std::string>& sets) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config(config_path);
  for (const auto& s : sets) apply_override(cfg, s);
  return cfg;
}

int cmd_train(const RunConfig& cfg, const std::string& baseline_path) {
  TrainOutcome out = run_training(cfg);
  std::optional<double> baseline_wall;
  if (!baseline_path.empty()) {
    std::ifstream f(baseline_path);
    if (!f) throw ConfigError("cannot open baseline summary: " + baseline_path);
    nlohmann::json base;
    f >> base;
    if (base.contains("wall_seconds")) baseline_wall = base["wall_seconds"].get<double>();
    if (base.contains("items_per_sec") && out.throughput.items_per_sec > 0.0)
      out.throughput.speedup_vs_baseline =
          out.throughput.items_per_sec / base["items_per_sec"].get<double>();
  }
  const nlohmann::json summary = summary_json(cfg, out, baseline_wall);
  const std::string dir = write_run_artifacts(cfg, out, summary);
  std::cout << summary.dump(2) << "\n";
  std::cerr << "artifacts: " << dir << "\n";
  return 0;
}

int cmd_sweep(RunConfig cfg, const std::string& beta_list, const std::string& k_list) {
  std::vector<std::pair<std::string, double>> grid;
  auto parse_list = [](const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
  };
  if (!beta_list.empty())
    for (double b : parse_list(beta_list)) grid.push_back({"beta", b});
  if (!k_list.empty())
    for (double k : parse_list(k_list)) grid.push_back({"k", k});
  if (grid.empty()) throw ConfigError("sweep: provide --beta and/or --k value lists");

  const std::string dir = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir + "/sweep.csv");
  csv << "param,value,final_loss,top1_error,wall_seconds\n";
  std::cout << "param,value,final_loss,top1_error,wall_seconds\n";
  for (const auto& [param, value] : grid) {
    RunConfig c = cfg;
    if (param == "beta") c.beta = value;
    else c.k = static_cast<int>(value);
    TrainOutcome out = run_training(c);
    std::ostringstream row;
    row << param << ',' << value << ',' << out.log.final_loss() << ','
        << (out.test_eval ? std::to_string(out.test_eval->top1_error) : "") << ','
        << out.wall_seconds;
    csv << row.str() << "\n";
    std::cout << row.str() << "\n";
  }
  std::cerr << "sweep rows: " << dir << "/sweep.csv\n";
  return 0;
}

int cmd_simulate(int k, double tf, double tb, double taux, double tc, long iters,
                 const std::string& schedule, const std::string& out_dir) {
  const CostProfile profile = CostProfile::uniform(k, tf, tb, taux, tc);
  const SimSchedule sched =
      schedule == "fdg-lockstep" ? SimSchedule::FdgLockstep : SimSchedule::FdgFreerun;
  const SimResult res = simulate_pipeline(profile, iters, sched);

  const std::string dir = resolve_output_dir(out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/timeline.csv");
    write_timeline_csv(f, res.timeline);
  }
  nlohmann::json stats;
  stats["makespan"] = res.stats.makespan;
  stats["utilization"] = res.stats.utilization;
  stats["items_per_time"] = res.stats.items_per_time;
  stats["speedup_vs_single"] = res.stats.speedup_vs_single;
  nlohmann::json ideal;
  for (const char* m : {"bp", "ddg", "fr", "lel", "fdg"})
    ideal[m] = ideal_speedup(speedup_method_from(m), k, tf, tb, taux);
  stats["ideal_speedup"] = ideal;
  {
    std::ofstream f(dir + "/stats.json");
    f << stats.dump(2) << "\n";
  }
  std::cout << stats.dump(2) << "\n";
  std::cerr << "timeline: " << dir << "/timeline.csv\n";
  return 0;
}

// Fresh-build verification: gradient checking, scheduler-vs-serial-oracle
// equivalence, the cumulative shrink factor, and the descent-bound monitor
// on a convex quadratic.
int cmd_verify(const std::string& out_dir) {
  nlohmann::json report;
  bool all_pass = true;

  {  // gradient check across every layer kind
    Rng rng(7);
    NetworkT<double> net =
        build_network<double>("conv3x3:2,relu,flatten,dense:8,relu,dense:3,softmax_ce",
                              {1, 5, 5}, Rng(7));
    BatchT<double> batch;
    batch.id = 1;
    batch.inputs = Tensor({4, 1, 5, 5});
    for (auto& v : batch.inputs.values()) v = rng.normal();
    batch.labels = {0, 1, 2, 1};
    const GradCheckReport gc = grad_check(net, batch, 1e-5, 1e-6);
    report["grad-check"] = {{"max-rel-err", gc.max_rel_err}, {"pass", gc.pass}};
    all_pass = all_pass && gc.pass;
  }

  {  // lockstep vs serial emulation, K = 2..4
    bool bit_exact = true;
    std::string divergence;
    for (int k = 2; k <= 4 && bit_exact; ++k) {
      RunConfig cfg;
      cfg.arch = "dense:24,relu,dense:24,relu,dense:24,relu,dense:4,softmax_ce";
      SyntheticSpec spec;
      spec.features = 6;
      spec.classes = 4;
      const Dataset data = gen_synthetic(SyntheticKind::RandomTeacher, 256, 11, spec);
      NetworkT<double> a = build_network<double>(cfg.arch, {6}, Rng(3));
      NetworkT<double> b = a.clone();
      SchedulerOptions opts;
      opts.lr.base_lr = 0.05;
      const ModulePartition part = make_partition(a, k, PartitionStrategy::EvenLayers);
      BatchStream s1(data, 32, 5), s2(data, 32, 5);
      const TrainingLog la = run_lockstep(a, part, opts, s1.provider(), 30);
      const TrainingLog lb = serial_emulate_fdg(b, part, opts, s2.provider(), 30);
      if (auto diff = first_divergence(la, lb)) {
        bit_exact = false;
        divergence = "K=" + std::to_string(k) + ": " + *diff;
      }
    }
    report["oracle-equivalence"] = {{"bit-exact", bit_exact},
                                    {"first-divergence", divergence}};
    all_pass = all_pass && bit_exact;
  }

  {  // cumulative shrink factor beta^(K-k)
    NetworkT<double> net = build_network<double>(
        "dense:12,relu,dense:12,relu,dense:12,relu,dense:3,softmax_ce", {4}, Rng(9));
    const ModulePartition part = make_partition(net, 3, PartitionStrategy::EvenLayers);
    Rng rng(13);
    BatchT<double> batch;
    batch.id = 1;
    batch.inputs = Tensor({8, 4});
    for (auto& v : batch.inputs.values()) v = rng.normal();
    batch.labels = std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1};
    const GsFactorReport gs = gs_factor_check(net, part, 0.5, batch);
    report["gs-factor"] = {{"pass", gs.pass}, {"factors", gs.expected_factor}};
    all_pass = all_pass && gs.pass;
  }

  {  // descent bound on a convex quadratic, vanilla SGD
    QuadraticObjective quad(24, 2048, 64, 99);
    Rng rng(17);
    const TheoremConstants consts = estimate_constants(quad, 32, 1e-3, rng);
    const int K = 3;
    const double beta = 0.7;
    // lr ceiling from the initial full gradient and steady-state staleness
    const std::vector<double> g0 = quad.full_grad();
    double z1 = 0.0;
    for (int k = 1; k <= K; ++k) {
      const auto [lo, hi] = param_block(quad.dim(), K, k);
      double acc = 0.0;
      for (std::size_t i = lo; i < hi; ++i) acc += g0[i] * g0[i];
      z1 += std::pow(beta, K - k) * acc;
    }
    double stale = 0.0;
    for (int k = 1; k <= K; ++k) stale += std::pow(beta, 3 * (K - k)) * (2.0 * (K - k));
    const double z2 = consts.L_hat * consts.M_hat * (geometric_shrink_sum(beta, K) + stale);
    const double gamma = 0.5 * std::min(1.0 / consts.L_hat, z1 / (2.0 * z2));

    const TheoremLog tlog = run_delayed_sgd(quad, K, beta, gamma, 501, rng);
    const DescentReport dr = descent_monitor(tlog, consts, beta, K);
    const bool pass = dr.satisfaction_rate >= 0.95;
    report["theorem"] = {{"L-hat", consts.L_hat},
                         {"M-hat", consts.M_hat},
                         {"admissible-lr", dr.admissible_lr},
                         {"satisfaction-rate", dr.satisfaction_rate},
                         {"pass", pass}};
    all_pass = all_pass && pass;
  }

  report["pass"] = all_pass;
  const std::string dir = resolve_output_dir(out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/report.json");
    f << report.dump(2) << "\n";
  }
  std::cout << report.dump(2) << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"fdg: decoupled delayed-gradient training engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (sectioned key=value)");
    sub->add_option("--set", sets, "override, e.g. --set run.k=3")->take_all();
  };

  // train
  auto* train = app.add_subcommand("train", "train a network");
  add_common(train);
  std::string method, ordering, mode, out_dir;
  int k = 0;
  double beta = -1.0;
  long iterations = 0;
  long seed = -1;
  train->add_option("--method", method, "bp | ddg | fdg");
  train->add_option("--k", k, "module count");
  train->add_option("--beta", beta, "gradient shrinking factor in (0,1]");
  train->add_option("--iterations", iterations, "iteration budget");
  train->add_option("--seed", seed, "prng seed");
  train->add_option("--ordering", ordering, "backward-first | forward-first");
  train->add_option("--mode", mode, "lockstep | freerun");
  train->add_option("--out", out_dir, "output directory");
  std::string baseline_path;
  train->add_option("--baseline", baseline_path,
                    "summary.json of a reference run; fills speedup_vs_bp");

  // verify
  auto* verify = app.add_subcommand("verify", "run the verification suites");
  std::string verify_out = "runs/verify";
  verify->add_option("--out", verify_out, "output directory");

  // simulate
  auto* sim = app.add_subcommand("simulate", "cost-model pipeline simulation");
  int sim_k = 2;
  double tf = 1.0, tb = 2.0, taux = 0.0, tc = 0.0;
  long sim_iters = 1000;
  std::string sim_schedule = "fdg-freerun", sim_out = "runs/simulate";
  sim->add_option("--k", sim_k, "module count");
  sim->add_option("--tf", tf, "per-module forward cost");
  sim->add_option("--tb", tb, "per-module backward cost");
  sim->add_option("--taux", taux, "auxiliary cost (lel formula only)");
  sim->add_option("--tc", tc, "per-packet communication latency");
  sim->add_option("--iterations", sim_iters, "batches to simulate");
  sim->add_option("--schedule", sim_schedule, "fdg-lockstep | fdg-freerun");
  sim->add_option("--out", sim_out, "output directory");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "grid over beta or K");
  add_common(sweep);
  std::string sweep_beta, sweep_k;
  sweep->add_option("--beta", sweep_beta, "comma list of beta values");
  sweep->add_option("--k", sweep_k, "comma list of K values");

  try {
    app.parse(argc, argv);
    if (train->parsed() || sweep->parsed()) {
      RunConfig cfg = config_from_cli(config_path, sets);
      if (!method.empty()) apply_override(cfg, "run.method=" + method);
      if (k > 0) cfg.k = k;
      if (beta > 0.0) cfg.beta = beta;
      if (iterations > 0) cfg.iterations = iterations;
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      if (!ordering.empty()) apply_override(cfg, "run.ordering=" + ordering);
      if (!mode.empty()) apply_override(cfg, "run.mode=" + mode);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      cfg.validate();
      return train->parsed() ? cmd_train(cfg, baseline_path) : cmd_sweep(cfg, sweep_beta, sweep_k);
    }
    if (verify->parsed()) return cmd_verify(verify_out);
    if (sim->parsed())
      return cmd_simulate(sim_k, tf, tb, taux, tc, sim_iters, sim_schedule, sim_out);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace fdg

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "fdg/cli.hpp"

using namespace fdg;

namespace {

struct TempRoot {
  std::filesystem::path path;
  TempRoot() {
    path = std::filesystem::temp_directory_path() /
           ("fdg_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
    ::setenv("FDG_OUTPUT_ROOT", path.c_str(), 1);
  }
  ~TempRoot() {
    ::unsetenv("FDG_OUTPUT_ROOT");
    std::filesystem::remove_all(path);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

int run_cli(std::vector<std::string> args) {
  std::vector<char*> argv;
  args.insert(args.begin(), "fdg");
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  nlohmann::json j;
  f >> j;
  return j;
}

RunConfig quick_cfg() {
  RunConfig cfg;
  cfg.method = Method::Fdg;
  cfg.k = 2;
  cfg.beta = 0.5;
  cfg.iterations = 30;
  cfg.batch_size = 32;
  cfg.seed = 7;
  cfg.data_kind = "xor-rings";
  cfg.data_n = 256;
  cfg.test_n = 64;
  cfg.features = 2;
  cfg.classes = 2;
  cfg.arch = "dense:16,relu,dense:16,relu,dense:2,softmax_ce";
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.milestone_epochs = {};
  return cfg;
}

}  // namespace

TEST_CASE("train subcommand echoes method/k/beta and writes the artifact layout") {
  TempRoot root;
  {
    std::ofstream f(root.path / "cfg.ini");
    f << serialize_config(quick_cfg());
  }
  const int rc = run_cli({"train", "--config", (root.path / "cfg.ini").string(), "--method", "fdg",
                          "--k", "2", "--beta", "0.5", "--out", "train_out"});
  CHECK(rc == 0);

  const auto dir = root.path / "train_out";
  CHECK(std::filesystem::exists(dir / "config.snapshot"));
  CHECK(std::filesystem::exists(dir / "log.csv"));
  const nlohmann::json summary = read_json(dir / "summary.json");
  CHECK(summary["method"] == "fdg");
  CHECK(summary["k"] == 2);
  CHECK(summary["beta"] == 0.5);
  CHECK(summary.contains("final_loss"));
  CHECK(summary.contains("top1_error"));
  CHECK(summary.contains("wall_seconds"));
  CHECK(summary["modules"].size() == 2);

  // log.csv header matches the documented columns
  std::ifstream log(dir / "log.csv");
  std::string header;
  std::getline(log, header);
  CHECK(header == "iteration,module,batch_forwarded,batch_updated,loss,grad_norm,wall_ms");
}

TEST_CASE("f32 precision runs the whole engine") {
  RunConfig cfg = quick_cfg();
  cfg.precision = "f32";
  cfg.k = 2;
  const TrainOutcome out = run_training(cfg);
  CHECK(out.log.rows.size() > 0);
  CHECK(std::isfinite(out.log.final_loss()));
  REQUIRE(out.test_eval.has_value());
  CHECK(out.test_eval->top1_error <= 1.0);
}

TEST_CASE("identical seed and config give identical artifacts in deterministic mode") {
  const RunConfig cfg = quick_cfg();
  const TrainOutcome a = run_training(cfg);
  const TrainOutcome b = run_training(cfg);
  REQUIRE(a.log.rows.size() == b.log.rows.size());
  CHECK_FALSE(first_divergence(a.log, b.log).has_value());
  REQUIRE(a.test_eval.has_value());
  REQUIRE(b.test_eval.has_value());
  CHECK(a.test_eval->loss == b.test_eval->loss);
  CHECK(a.test_eval->top1_error == b.test_eval->top1_error);
}

TEST_CASE("sweep emits one row per beta value") {
  TempRoot root;
  {
    std::ofstream f(root.path / "cfg.ini");
    f << serialize_config(quick_cfg());
  }
  const int rc = run_cli({"sweep", "--config", (root.path / "cfg.ini").string(), "--beta",
                          "0.2,0.5,0.8,1.0", "--set", "output.dir=sweep_out"});
  CHECK(rc == 0);

  std::ifstream csv(root.path / "sweep_out" / "sweep.csv");
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "param,value,final_loss,top1_error,wall_seconds");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("simulate writes a timeline and stats with the ideal-speedup table") {
  TempRoot root;
  const int rc = run_cli({"simulate", "--k", "3", "--tf", "1", "--tb", "2", "--iterations", "200",
                          "--schedule", "fdg-freerun", "--out", "sim_out"});
  CHECK(rc == 0);
  const nlohmann::json stats = read_json(root.path / "sim_out" / "stats.json");
  CHECK(stats["ideal_speedup"]["fdg"] == 3.0);
  CHECK(stats["items_per_time"].get<double>() > 0.0);
  std::ifstream tl(root.path / "sim_out" / "timeline.csv");
  std::string header;
  std::getline(tl, header);
  CHECK(header == "worker,start,end,tag,batch_id");
}

TEST_CASE("verify subcommand exits 0 on a fresh build and writes report.json") {
  TempRoot root;
  const int rc = run_cli({"verify", "--out", "verify_out"});
  CHECK(rc == 0);
  const nlohmann::json report = read_json(root.path / "verify_out" / "report.json");
  CHECK(report["pass"] == true);
  CHECK(report["grad-check"]["pass"] == true);
  CHECK(report["oracle-equivalence"]["bit-exact"] == true);
  CHECK(report["gs-factor"]["pass"] == true);
  CHECK(report["theorem"]["pass"] == true);
  CHECK(report["theorem"]["satisfaction-rate"].get<double>() >= 0.95);
}

TEST_CASE("baseline summaries fill speedup_vs_bp; save_weights writes a loadable checkpoint") {
  TempRoot root;
  RunConfig cfg = quick_cfg();
  cfg.method = Method::Bp;
  cfg.output_dir = "bp_out";
  {
    std::ofstream f(root.path / "bp.ini");
    f << serialize_config(cfg);
  }
  REQUIRE(run_cli({"train", "--config", (root.path / "bp.ini").string()}) == 0);

  cfg.method = Method::Fdg;
  cfg.output_dir = "fdg_out";
  cfg.save_weights = true;
  {
    std::ofstream f(root.path / "fdg.ini");
    f << serialize_config(cfg);
  }
  REQUIRE(run_cli({"train", "--config", (root.path / "fdg.ini").string(), "--baseline",
                   (root.path / "bp_out" / "summary.json").string()}) == 0);

  const nlohmann::json summary = read_json(root.path / "fdg_out" / "summary.json");
  CHECK(summary["speedup_vs_bp"].is_number());

  std::ifstream w(root.path / "fdg_out" / "weights.bin", std::ios::binary);
  REQUIRE(w.good());
  NetworkT<double> net = build_network<double>(cfg.arch, {2}, Rng(1));
  load_checkpoint(w, net);  // same architecture: loads cleanly
}

TEST_CASE("unknown flags and bad configs fail closed") {
  TempRoot root;
  CHECK(run_cli({"train", "--definitely-not-a-flag", "1"}) != 0);
  {
    std::ofstream f(root.path / "bad.ini");
    f << "[run]\nnot_a_key = 1\n";
  }
  CHECK(run_cli({"train", "--config", (root.path / "bad.ini").string()}) != 0);
}

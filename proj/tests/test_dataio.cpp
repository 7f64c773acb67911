#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fdg/dataio.hpp"
#include "fdg/trainers.hpp"

using namespace fdg;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("fdg_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_be_u32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

// tiny 3-image 2x2 IDX pair
void write_idx_pair(const std::string& images, const std::string& labels,
                    std::uint32_t image_magic = 0x803, std::uint32_t label_magic = 0x801,
                    std::uint32_t label_count = 3) {
  {
    std::ofstream f(images, std::ios::binary);
    write_be_u32(f, image_magic);
    write_be_u32(f, 3);
    write_be_u32(f, 2);
    write_be_u32(f, 2);
    const unsigned char pixels[12] = {0, 255, 128, 7, 1, 2, 3, 4, 250, 251, 252, 253};
    f.write(reinterpret_cast<const char*>(pixels), 12);
  }
  {
    std::ofstream f(labels, std::ios::binary);
    write_be_u32(f, label_magic);
    write_be_u32(f, label_count);
    const unsigned char ys[3] = {0, 1, 2};
    f.write(reinterpret_cast<const char*>(ys), std::min<std::uint32_t>(3, label_count));
  }
}

}  // namespace

TEST_CASE("two-gaussians at 6 sigma separation: a linear model trains below 2% error") {
  SyntheticSpec spec;
  spec.features = 4;
  spec.classes = 2;
  const Dataset data = gen_synthetic(SyntheticKind::TwoGaussians, 600, 71, spec);
  NetworkT<double> net = build_network<double>("dense:2,softmax_ce", {4}, Rng(5));
  BatchStream s(data, 32, 9);
  SchedulerOptions opts;
  opts.lr.base_lr = 0.1;
  train_bp(net, s.provider(), opts, 400);
  const EvalResult r = evaluate(net, data);
  CHECK(r.top1_error < 0.02);
}

TEST_CASE("same seed reproduces a dataset byte for byte") {
  SyntheticSpec spec;
  spec.features = 3;
  spec.classes = 2;
  const Dataset a = gen_synthetic(SyntheticKind::XorRings, 128, 42, spec);
  const Dataset b = gen_synthetic(SyntheticKind::XorRings, 128, 42, spec);
  CHECK(a.inputs.bit_equal(b.inputs));
  CHECK(a.labels == b.labels);
  const Dataset c = gen_synthetic(SyntheticKind::XorRings, 128, 43, spec);
  CHECK_FALSE(c.inputs.bit_equal(a.inputs));
}

TEST_CASE("degenerate sizes and unknown kinds are rejected") {
  SyntheticSpec spec;
  CHECK_THROWS_AS(gen_synthetic(SyntheticKind::TwoGaussians, 1, 1, spec), DataError);
  CHECK_THROWS_AS(synthetic_kind_from("bogus"), DataError);
}

TEST_CASE("random teacher labels are learnable structure") {
  SyntheticSpec spec;
  spec.features = 6;
  spec.classes = 4;
  const Dataset data = gen_synthetic(SyntheticKind::RandomTeacher, 512, 13, spec);
  std::set<int> seen(data.labels.begin(), data.labels.end());
  CHECK(seen.size() >= 2);  // not collapsed to one class

  NetworkT<double> net =
      build_network<double>("dense:32,relu,dense:32,relu,dense:4,softmax_ce", {6}, Rng(5));
  BatchStream s(data, 32, 9);
  SchedulerOptions opts;
  opts.lr.base_lr = 0.1;
  train_bp(net, s.provider(), opts, 800);
  const EvalResult r = evaluate(net, data);
  CHECK(r.top1_error < 0.2);
}

TEST_CASE("idx loader round-trips a canonical pair") {
  TempDir dir;
  write_idx_pair(dir.file("imgs"), dir.file("lbls"));
  const Dataset d = load_idx(dir.file("imgs"), dir.file("lbls"));
  CHECK(d.inputs.shape() == std::vector<std::size_t>{3, 1, 2, 2});
  CHECK(d.labels == std::vector<int>{0, 1, 2});
  CHECK(d.inputs[0] == 0.0);
  CHECK(d.inputs[1] == 1.0);  // 0xFF scales to 1.0
  CHECK(d.inputs[2] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("idx loader rejects bad magics with distinct codes") {
  TempDir dir;
  write_idx_pair(dir.file("imgs"), dir.file("lbls"), 0x801, 0x801);
  try {
    load_idx(dir.file("imgs"), dir.file("lbls"));
    FAIL("expected IdxError");
  } catch (const IdxError& e) {
    CHECK(e.code() == IdxErrorCode::BadMagic);
  }

  write_idx_pair(dir.file("imgs2"), dir.file("lbls2"), 0x803, 0x999);
  try {
    load_idx(dir.file("imgs2"), dir.file("lbls2"));
    FAIL("expected IdxError");
  } catch (const IdxError& e) {
    CHECK(e.code() == IdxErrorCode::BadMagic);
  }
}

TEST_CASE("idx loader rejects count mismatches") {
  TempDir dir;
  write_idx_pair(dir.file("imgs"), dir.file("lbls"), 0x803, 0x801, 2);
  try {
    load_idx(dir.file("imgs"), dir.file("lbls"));
    FAIL("expected IdxError");
  } catch (const IdxError& e) {
    CHECK(e.code() == IdxErrorCode::CountMismatch);
  }
}

TEST_CASE("every truncation of a valid idx file is rejected") {
  TempDir dir;
  write_idx_pair(dir.file("imgs"), dir.file("lbls"));
  std::ifstream f(dir.file("imgs"), std::ios::binary);
  std::stringstream full;
  full << f.rdbuf();
  const std::string bytes = full.str();

  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    std::ofstream out(dir.file("trunc"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(cut));
    out.close();
    CHECK_THROWS_AS(load_idx(dir.file("trunc"), dir.file("lbls")), DataError);
  }
}

TEST_CASE("standardization centers the pixel distribution") {
  TempDir dir;
  write_idx_pair(dir.file("imgs"), dir.file("lbls"));
  const Dataset d = load_idx(dir.file("imgs"), dir.file("lbls"), true);
  CHECK(mean(d.inputs) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("batch stream: pinned seed, ragged tail, epoch accounting") {
  SyntheticSpec spec;
  spec.features = 2;
  spec.classes = 2;
  const Dataset data = gen_synthetic(SyntheticKind::XorRings, 10, 3, spec);

  BatchStream a(data, 3, 77), b(data, 3, 77);
  const BatchT<double> ba = a.next();
  const BatchT<double> bb = b.next();
  CHECK(ba.id == 1);
  CHECK(ba.inputs.bit_equal(bb.inputs));
  CHECK(ba.labels == bb.labels);

  // sizes 3,3,3,1 per epoch; ids strictly increasing; E*ceil(N/B) batches
  BatchStream s(data, 3, 5);
  CHECK(s.batches_per_epoch() == 4);
  long expected_id = 1;
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::size_t seen = 0;
    for (int i = 0; i < 4; ++i) {
      const BatchT<double> batch = s.next();
      CHECK(batch.id == expected_id++);
      CHECK(batch.inputs.dim(0) == (i == 3 ? 1 : 3));
      seen += batch.inputs.dim(0);
    }
    CHECK(seen == 10);
  }
}

TEST_CASE("batch stream covers each sample once per epoch") {
  SyntheticSpec spec;
  spec.features = 2;
  spec.classes = 2;
  const Dataset data = gen_synthetic(SyntheticKind::XorRings, 12, 3, spec);
  BatchStream s(data, 4, 5);
  std::multiset<double> seen;
  for (int i = 0; i < 3; ++i) {
    const BatchT<double> b = s.next();
    for (std::size_t r = 0; r < b.inputs.dim(0); ++r) seen.insert(b.inputs(r, 0));
  }
  std::multiset<double> want;
  for (std::size_t i = 0; i < 12; ++i) want.insert(data.inputs(i, 0));
  CHECK(seen == want);
}

TEST_CASE("batch size larger than the dataset is rejected") {
  SyntheticSpec spec;
  spec.features = 2;
  spec.classes = 2;
  const Dataset data = gen_synthetic(SyntheticKind::XorRings, 8, 3, spec);
  CHECK_THROWS_AS(BatchStream(data, 9, 5), DataError);
  CHECK_THROWS_AS(BatchStream(data, 0, 5), DataError);
}

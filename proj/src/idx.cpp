#include <cmath>
#include <cstring>
#include <fstream>

#include "fdg/dataio.hpp"
#include "fdg/layers.hpp"

namespace fdg {

namespace {

std::uint32_t read_be_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IdxError(IdxErrorCode::Truncated, "truncated IDX header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, bool standardize) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("cannot open " + images_path);
  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw DataError("cannot open " + labels_path);

  if (read_be_u32(imgs, images_path) != kImagesMagic)
    throw IdxError(IdxErrorCode::BadMagic, "bad IDX image magic in " + images_path);
  const std::uint32_t n = read_be_u32(imgs, images_path);
  const std::uint32_t rows = read_be_u32(imgs, images_path);
  const std::uint32_t cols = read_be_u32(imgs, images_path);

  if (read_be_u32(lbls, labels_path) != kLabelsMagic)
    throw IdxError(IdxErrorCode::BadMagic, "bad IDX label magic in " + labels_path);
  const std::uint32_t n_labels = read_be_u32(lbls, labels_path);
  if (n != n_labels)
    throw IdxError(IdxErrorCode::CountMismatch,
                   "IDX count mismatch: " + std::to_string(n) + " images vs " +
                       std::to_string(n_labels) + " labels");
  if (n == 0) throw DataError("empty IDX dataset " + images_path);

  const std::size_t pixels = static_cast<std::size_t>(n) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  imgs.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels));
  if (static_cast<std::size_t>(imgs.gcount()) != pixels)
    throw IdxError(IdxErrorCode::Truncated, "truncated IDX image payload in " + images_path);

  std::vector<unsigned char> raw_labels(n);
  lbls.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(lbls.gcount()) != n)
    throw IdxError(IdxErrorCode::Truncated, "truncated IDX label payload in " + labels_path);

  Dataset d;
  std::vector<double> values(pixels);
  for (std::size_t i = 0; i < pixels; ++i) values[i] = raw[i] / 255.0;

  if (standardize) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(pixels);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(pixels);
    const double sd = std::sqrt(std::max(var, 1e-12));
    for (double& v : values) v = (v - mean) / sd;
  }

  d.inputs = Tensor({n, 1, rows, cols}, std::move(values));
  d.labels.assign(raw_labels.begin(), raw_labels.end());
  int max_label = 0;
  for (int y : d.labels) max_label = std::max(max_label, y);
  d.class_count = max_label + 1;
  d.validate();
  return d;
}

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::uint64_t seed,
                      const SyntheticSpec& spec) {
  const int classes = kind == SyntheticKind::RandomTeacher ? spec.classes : 2;
  if (classes < 2) throw DataError("gen_synthetic: need at least 2 classes");
  if (n < 2 * static_cast<std::size_t>(classes))
    throw DataError("gen_synthetic: N = " + std::to_string(n) + " below 2 * class count");

  Rng rng(seed);
  const std::size_t f = spec.features;
  std::vector<double> x(n * f);
  std::vector<int> y(n);

  switch (kind) {
    case SyntheticKind::TwoGaussians: {
      // class means at +-3 along the first axis, unit noise: 6 sigma apart
      for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rng.uniform_int(2));
        y[i] = c;
        for (std::size_t j = 0; j < f; ++j)
          x[i * f + j] = rng.normal() + (j == 0 ? (c == 0 ? -3.0 : 3.0) : 0.0);
      }
      break;
    }
    case SyntheticKind::XorRings: {
      // annulus sectors in 2D; label is the XOR of the quadrant signs
      if (f < 2) throw DataError("xor-rings needs >= 2 features");
      for (std::size_t i = 0; i < n; ++i) {
        const int quadrant = static_cast<int>(rng.uniform_int(4));
        const bool sx = quadrant & 1, sy = quadrant & 2;
        y[i] = (sx != sy) ? 1 : 0;
        const double r = rng.uniform(0.5, 1.5);
        const double a = rng.uniform(0.05, M_PI / 2 - 0.05);
        x[i * f + 0] = (sx ? -1.0 : 1.0) * r * std::cos(a);
        x[i * f + 1] = (sy ? -1.0 : 1.0) * r * std::sin(a);
        for (std::size_t j = 2; j < f; ++j) x[i * f + j] = 0.1 * rng.normal();
      }
      break;
    }
    case SyntheticKind::RandomTeacher: {
      // labels from a frozen random two-layer network; samples with a thin
      // decision margin are resampled so the task stays learnable
      Rng init_rng = Rng(spec.teacher_seed ? spec.teacher_seed : seed).fork(1);
      NetworkT<double> teacher;
      teacher.layers.push_back(
          std::make_unique<DenseLayerT<double>>(f, spec.teacher_hidden, init_rng));
      teacher.layers.push_back(std::make_unique<ReluLayerT<double>>());
      teacher.layers.push_back(std::make_unique<DenseLayerT<double>>(
          spec.teacher_hidden, static_cast<std::size_t>(classes), init_rng));
      for (std::size_t i = 0; i < n; ++i) {
        for (int attempt = 0; attempt < 64; ++attempt) {
          Tensor sample({1, f});
          for (std::size_t j = 0; j < f; ++j) sample[j] = rng.normal();
          Tensor logits = sample;
          LayerCacheT<double> scratch;
          for (const auto& l : teacher.layers) logits = l->forward(logits, scratch);
          int best = 0;
          for (int c = 1; c < classes; ++c)
            if (logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(best)])
              best = c;
          double second = -1e300;
          for (int c = 0; c < classes; ++c)
            if (c != best) second = std::max(second, logits[static_cast<std::size_t>(c)]);
          const bool keep = logits[static_cast<std::size_t>(best)] - second >= spec.teacher_margin ||
                            attempt == 63;
          if (keep) {
            for (std::size_t j = 0; j < f; ++j) x[i * f + j] = sample[j];
            y[i] = best;
            break;
          }
        }
      }
      break;
    }
  }

  Dataset d;
  d.inputs = Tensor({n, f}, std::move(x));
  d.labels = std::move(y);
  d.class_count = classes;
  d.validate();
  return d;
}

BatchStream::BatchStream(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_(batch_size), rng_(Rng(seed).fork(0x9a7c)) {
  if (batch_ < 1) throw DataError("batch size must be >= 1");
  if (batch_ > data.size())
    throw DataError("batch size " + std::to_string(batch_) + " exceeds dataset size " +
                    std::to_string(data.size()));
  reshuffle();
}

void BatchStream::reshuffle() {
  order_.resize(data_->size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
  cursor_ = 0;
}

BatchT<double> BatchStream::next() {
  if (cursor_ >= order_.size()) reshuffle();
  const std::size_t take = std::min(batch_, order_.size() - cursor_);
  const std::size_t row = data_->inputs.numel() / data_->inputs.dim(0);

  std::vector<std::size_t> shape = data_->inputs.shape();
  shape[0] = take;
  Tensor inputs(shape);
  std::vector<int> labels(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t src = order_[cursor_ + i];
    std::memcpy(inputs.data() + i * row, data_->inputs.data() + src * row, row * sizeof(double));
    labels[i] = data_->labels[src];
  }
  cursor_ += take;
  return {next_id_++, std::move(inputs), std::move(labels)};
}

}  // namespace fdg

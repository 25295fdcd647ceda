// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/data.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "ttrnn/random.hpp"

namespace ttrnn {
namespace {

// Whole file, inflated when it starts with the gzip magic. zlib's gzread
// passes non-gzip content through unchanged.
std::string read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string());
  std::string out;
  char buf[1 << 16];
  for (;;) {
    const int n = gzread(f, buf, sizeof(buf));
    if (n < 0) {
      int errnum = 0;
      const std::string msg = gzerror(f, &errnum);
      gzclose(f);
      throw FormatError("cannot read " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  gzclose(f);
  return out;
}

std::uint32_t be32(const std::string& bytes, std::size_t offset,
                   const std::string& what) {
  if (offset + 4 > bytes.size()) throw FormatError(what + ": truncated header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out.empty() ? "none" : out;
}

SequenceDataset with_inputs(const SequenceDataset& ds, Tensor inputs,
                            std::string transform) {
  SequenceDataset out;
  out.inputs = std::move(inputs);
  out.labels = ds.labels;
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.source = ds.source;
  out.transforms = ds.transforms;
  out.transforms.push_back(std::move(transform));
  out.permutation = ds.permutation;
  return out;
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

std::string SequenceDataset::fingerprint() const {
  std::ostringstream os;
  os << "source=" << source << " split=" << split_name(split) << " n=" << size()
     << " T=" << steps() << " M=" << features() << " transforms=" << join(transforms);
  return os.str();
}

void SequenceDataset::validate() const {
  if (inputs.rank() != 3) throw ShapeError("dataset inputs must be [examples, T, M]");
  if (inputs.dim(0) != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(inputs.dim(0)) + " examples and " +
                     std::to_string(labels.size()) + " labels");
  }
}

SequenceDataset load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path) {
  const std::string img = read_maybe_gzip(images_path);
  const std::string lab = read_maybe_gzip(labels_path);
  const std::string img_name = images_path.filename().string();
  const std::string lab_name = labels_path.filename().string();
  if (be32(img, 0, img_name) != 0x00000803u) {
    throw FormatError(img_name + ": bad magic (expected 0x00000803)");
  }
  if (be32(lab, 0, lab_name) != 0x00000801u) {
    throw FormatError(lab_name + ": bad magic (expected 0x00000801)");
  }
  const std::size_t n = be32(img, 4, img_name);
  const std::size_t rows = be32(img, 8, img_name);
  const std::size_t cols = be32(img, 12, img_name);
  const std::size_t n_labels = be32(lab, 4, lab_name);
  if (n != n_labels) {
    throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                      std::to_string(n_labels));
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(img_name + ": empty dataset");
  if (img.size() < 16 + n * rows * cols) throw FormatError(img_name + ": truncated payload");
  if (lab.size() < 8 + n) throw FormatError(lab_name + ": truncated payload");

  SequenceDataset ds;
  ds.inputs = Tensor(Shape{n, rows, cols});
  auto px = ds.inputs.data();
  for (std::size_t i = 0; i < n * rows * cols; ++i) {
    px[i] = static_cast<double>(static_cast<unsigned char>(img[16 + i])) / 255.0;
  }
  ds.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  const std::uint64_t h = fnv1a(lab.data(), lab.size(), fnv1a(img.data(), img.size()));
  ds.source = "idx:" + img_name + ":" + hex64(h);
  return ds;
}

SequenceDataset take(const SequenceDataset& ds, std::size_t begin, std::size_t count,
                     Split split) {
  if (begin + count > ds.size() || count == 0) {
    throw ConfigError("requested examples [" + std::to_string(begin) + ", " +
                      std::to_string(begin + count) + ") but the dataset has " +
                      std::to_string(ds.size()));
  }
  const std::size_t stride = ds.steps() * ds.features();
  SequenceDataset out;
  out.inputs = Tensor(Shape{count, ds.steps(), ds.features()},
                      std::vector<double>(ds.inputs.data().begin() + begin * stride,
                                          ds.inputs.data().begin() + (begin + count) * stride));
  out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  out.num_classes = ds.num_classes;
  out.split = split;
  out.source = ds.source;
  out.transforms = ds.transforms;
  out.transforms.push_back("take(" + std::to_string(begin) + "," + std::to_string(count) + ")");
  out.permutation = ds.permutation;
  return out;
}

SequenceDataset downsample(const SequenceDataset& ds, std::size_t factor) {
  const std::size_t rows = ds.steps();
  const std::size_t cols = ds.features();
  if (factor == 0 || rows % factor != 0 || cols % factor != 0) {
    throw ConfigError("image " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " is not divisible by factor " + std::to_string(factor));
  }
  if (!ds.permutation.empty()) throw ConfigError("downsample must precede permutation");
  const std::size_t out_r = rows / factor;
  const std::size_t out_c = cols / factor;
  Tensor out(Shape{ds.size(), out_r, out_c});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (std::size_t i = 0; i < out_r; ++i) {
      for (std::size_t j = 0; j < out_c; ++j) {
        double s = 0.0;
        for (std::size_t a = 0; a < factor; ++a)
          for (std::size_t b = 0; b < factor; ++b)
            s += ds.inputs.at({n, i * factor + a, j * factor + b});
        out.at({n, i, j}) = s * inv;
      }
    }
  }
  return with_inputs(ds, std::move(out), "downsample(" + std::to_string(factor) + ")");
}

SequenceDataset to_pixel_sequence(const SequenceDataset& ds) {
  return with_inputs(ds, ds.inputs.reshaped({ds.size(), ds.steps() * ds.features(), 1}),
                     "pixels");
}

std::vector<std::size_t> pixel_permutation(std::size_t length, std::uint64_t seed) {
  std::vector<std::size_t> perm(length);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = length; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  return perm;
}

SequenceDataset permute_pixels(const SequenceDataset& ds, std::uint64_t seed) {
  if (!ds.permutation.empty()) throw ConfigError("dataset is already permuted");
  const std::size_t len = ds.steps() * ds.features();
  const auto perm = pixel_permutation(len, seed);
  Tensor out(ds.inputs.shape());
  auto src = ds.inputs.data();
  auto dst = out.data();
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (std::size_t p = 0; p < len; ++p) dst[n * len + p] = src[n * len + perm[p]];
  }
  SequenceDataset res = with_inputs(ds, std::move(out), "permute(" + std::to_string(seed) + ")");
  res.permutation = perm;
  return res;
}

SequenceDataset unpermute_pixels(const SequenceDataset& ds) {
  if (ds.permutation.empty()) throw ConfigError("dataset is not permuted");
  const std::size_t len = ds.steps() * ds.features();
  Tensor out(ds.inputs.shape());
  auto src = ds.inputs.data();
  auto dst = out.data();
  for (std::size_t n = 0; n < ds.size(); ++n) {
    for (std::size_t p = 0; p < len; ++p) dst[n * len + ds.permutation[p]] = src[n * len + p];
  }
  SequenceDataset res = with_inputs(ds, std::move(out), "unpermute");
  res.permutation.clear();
  return res;
}

MnistSplits load_mnist(const std::filesystem::path& dir, const MnistConfig& config) {
  auto find = [&](const std::string& stem) {
    for (const char* suffix : {"", ".gz"}) {
      const auto p = dir / (stem + std::string(suffix));
      if (std::filesystem::exists(p)) return p;
    }
    throw IoError("MNIST file " + stem + "[.gz] not found in " + dir.string());
  };
  SequenceDataset train_file =
      load_idx(find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte"));
  SequenceDataset test_file =
      load_idx(find("t10k-images-idx3-ubyte"), find("t10k-labels-idx1-ubyte"));
  if (config.train + config.val > train_file.size()) {
    throw ConfigError("training file has " + std::to_string(train_file.size()) +
                      " examples; requested " + std::to_string(config.train) + " + " +
                      std::to_string(config.val));
  }
  MnistSplits s{take(train_file, 0, config.train, Split::kTrain),
                take(train_file, config.train, config.val, Split::kVal),
                take(test_file, 0, config.test, Split::kTest)};
  for (SequenceDataset* ds : {&s.train, &s.val, &s.test}) {
    if (config.downsample > 1) *ds = downsample(*ds, config.downsample);
    if (config.permutation_seed) *ds = permute_pixels(*ds, *config.permutation_seed);
    if (config.pixel_steps) *ds = to_pixel_sequence(*ds);
  }
  return s;
}

std::string SpeakerDataset::fingerprint() const {
  std::ostringstream os;
  os << "source=" << source << " speakers=" << num_speakers << " per_speaker=" << per_speaker
     << " T=" << steps() << " M=" << features();
  return os.str();
}

SpeakerDataset synth_speakers(std::size_t speakers, std::size_t per_speaker,
                              std::size_t steps, std::size_t features, double sep,
                              double noise, std::uint64_t seed) {
  if (speakers < 2 || per_speaker < 2) {
    throw ConfigError("synthetic speakers need N >= 2 and P >= 2");
  }
  if (steps == 0 || features == 0) throw ConfigError("T and M must be positive");
  if (sep < 0.0 || sep > 1.0 || noise < 0.0) throw ConfigError("need 0 <= sep <= 1, noise >= 0");
  Rng dir_rng(mix_seed(seed, 1));
  std::vector<std::vector<double>> dirs;
  const double max_cos = 1.0 - sep;
  constexpr int kAttempts = 100000;
  for (std::size_t j = 0; j < speakers; ++j) {
    bool placed = false;
    for (int attempt = 0; attempt < kAttempts && !placed; ++attempt) {
      std::vector<double> v(features);
      double norm = 0.0;
      for (double& x : v) {
        x = dir_rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (double& x : v) x /= norm;
      placed = true;
      for (const auto& u : dirs) {
        double c = 0.0;
        for (std::size_t i = 0; i < features; ++i) c += u[i] * v[i];
        if (std::abs(c) > max_cos + 1e-12) {
          placed = false;
          break;
        }
      }
      if (placed) dirs.push_back(std::move(v));
    }
    if (!placed) {
      throw ConfigError("cannot place " + std::to_string(speakers) +
                        " directions with separation " + std::to_string(sep) + " in " +
                        std::to_string(features) + " dimensions");
    }
  }

  SpeakerDataset ds;
  ds.num_speakers = speakers;
  ds.per_speaker = per_speaker;
  ds.inputs = Tensor(Shape{speakers * per_speaker, steps, features});
  const double noise_scale = noise / std::sqrt(static_cast<double>(features));
  Rng rng(mix_seed(seed, 2));
  constexpr double kTwoPi = 6.283185307179586;
  for (std::size_t j = 0; j < speakers; ++j) {
    for (std::size_t p = 0; p < per_speaker; ++p) {
      const std::size_t u = j * per_speaker + p;
      ds.speaker.push_back(static_cast<int>(j));
      // Envelope in [0.5, 1.5] with a random phase and rate per utterance.
      const double phase = kTwoPi * rng.uniform();
      const double rate = 0.2 + 0.6 * rng.uniform();
      for (std::size_t t = 0; t < steps; ++t) {
        const double s = 1.0 + 0.5 * std::sin(phase + rate * static_cast<double>(t));
        for (std::size_t i = 0; i < features; ++i) {
          ds.inputs.at({u, t, i}) = s * dirs[j][i] + noise_scale * rng.normal();
        }
      }
    }
  }
  std::ostringstream src;
  src << "synth-speakers(seed=" << seed << ",sep=" << sep << ",noise=" << noise << ")";
  ds.source = src.str();
  return ds;
}

SpeakerDataset take_speakers(const SpeakerDataset& ds, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > ds.num_speakers) {
    throw ConfigError("speaker range out of bounds");
  }
  const std::size_t stride = ds.steps() * ds.features() * ds.per_speaker;
  SpeakerDataset out;
  out.num_speakers = count;
  out.per_speaker = ds.per_speaker;
  out.inputs = Tensor(Shape{count * ds.per_speaker, ds.steps(), ds.features()},
                      std::vector<double>(ds.inputs.data().begin() + begin * stride,
                                          ds.inputs.data().begin() + (begin + count) * stride));
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t p = 0; p < ds.per_speaker; ++p) out.speaker.push_back(static_cast<int>(j));
  }
  out.source = ds.source + "[speakers " + std::to_string(begin) + "+" + std::to_string(count) + "]";
  return out;
}

SequenceDataset toy_sequences(std::size_t examples, std::size_t steps, std::size_t features,
                              double margin, std::uint64_t seed) {
  if (examples == 0 || steps == 0 || features == 0) throw ConfigError("empty toy dataset");
  SequenceDataset ds;
  ds.inputs = Tensor(Shape{examples, steps, features});
  ds.num_classes = 2;
  Rng rng(seed);
  for (std::size_t n = 0; n < examples; ++n) {
    double score = 0.0;
    do {
      score = 0.0;
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < features; ++i) {
          ds.inputs.at({n, t, i}) = rng.normal();
        }
        score += ds.inputs.at({n, t, 0});
      }
    } while (std::abs(score) < margin);
    ds.labels.push_back(score > 0.0 ? 1 : 0);
  }
  std::ostringstream src;
  src << "toy(seed=" << seed << ",margin=" << margin << ")";
  ds.source = src.str();
  return ds;
}

std::vector<std::size_t> fraction_subset(std::size_t n, double fraction, std::size_t minimum,
                                         std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) throw ConfigError("data fraction must be in (0, 1]");
  const auto perm = pixel_permutation(n, seed);
  std::size_t keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  keep = std::min(n, std::max(keep, minimum));
  std::vector<std::size_t> rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(keep));
  std::sort(rows.begin(), rows.end());
  return rows;
}

SequenceDataset subset(const SequenceDataset& ds, const std::vector<std::size_t>& rows) {
  Batch b = gather(ds, rows);
  SequenceDataset out;
  out.inputs = std::move(b.inputs);
  out.labels = std::move(b.labels);
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  out.source = ds.source;
  out.transforms = ds.transforms;
  out.transforms.push_back("subset(" + std::to_string(rows.size()) + ")");
  out.permutation = ds.permutation;
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const auto order = pixel_permutation(n, shuffle_seed);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

Batch gather(const Tensor& inputs, const std::vector<int>& labels,
             const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw ShapeError("empty batch");
  const std::size_t steps = inputs.dim(1);
  const std::size_t m = inputs.dim(2);
  const std::size_t stride = steps * m;
  Batch b;
  b.inputs = Tensor(Shape{rows.size(), steps, m});
  auto dst = b.inputs.data();
  auto src = inputs.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= inputs.dim(0)) throw ShapeError("batch row out of range");
    std::copy_n(src.begin() + rows[i] * stride, stride, dst.begin() + i * stride);
    b.labels.push_back(labels.at(rows[i]));
  }
  b.rows = rows;
  return b;
}

Batch gather(const SequenceDataset& ds, const std::vector<std::size_t>& rows) {
  return gather(ds.inputs, ds.labels, rows);
}

std::vector<Tensor> time_major(const Tensor& inputs) {
  if (inputs.rank() != 3) throw ShapeError("time_major expects [batch, T, M]");
  const std::size_t batch = inputs.dim(0);
  const std::size_t steps = inputs.dim(1);
  const std::size_t m = inputs.dim(2);
  std::vector<Tensor> out;
  out.reserve(steps);
  auto src = inputs.data();
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x(Shape{batch, m});
    auto dst = x.data();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(src.begin() + (b * steps + t) * m, m, dst.begin() + b * m);
    }
    out.push_back(std::move(x));
  }
  return out;
}

BatchIterator::BatchIterator(const SequenceDataset& ds, std::size_t batch_size,
                             std::uint64_t shuffle_seed)
    : ds_(&ds), order_(batch_indices(ds.size(), batch_size, shuffle_seed)) {}

std::optional<Batch> BatchIterator::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  return gather(*ds_, order_[pos_++]);
}

}  // namespace ttrnn

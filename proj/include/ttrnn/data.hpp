// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Sequence datasets: MNIST IDX ingestion, pixel permutation, downsampling,
// synthetic speaker utterances, a separable toy task, and batching.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ttrnn/tensor.hpp"

namespace ttrnn {

enum class Split { kTrain, kVal, kTest };
const char* split_name(Split split);

struct SequenceDataset {
  Tensor inputs;            // [examples, T, M]
  std::vector<int> labels;  // one per example
  std::size_t num_classes = 0;
  Split split = Split::kTrain;
  // Provenance: raw source hash and the ordered transform chain.
  std::string source;
  std::vector<std::string> transforms;
  std::vector<std::size_t> permutation;  // empty when not permuted

  std::size_t size() const { return labels.size(); }
  std::size_t steps() const { return inputs.dim(1); }
  std::size_t features() const { return inputs.dim(2); }
  // One line describing source, split, shape and transforms.
  std::string fingerprint() const;
  void validate() const;
};

// Reads an IDX image file (magic 0x00000803) and label file (0x00000801);
// gzip-compressed files are detected and inflated transparently. Pixels are
// scaled to [0, 1]; each image becomes a sequence of its rows, [n, rows, cols].
SequenceDataset load_idx(const std::filesystem::path& images_path,
                         const std::filesystem::path& labels_path);

// Examples [begin, begin + count) as a new split.
SequenceDataset take(const SequenceDataset& ds, std::size_t begin,
                     std::size_t count, Split split);

// Non-overlapping mean pooling of each [side, side] image by `factor`.
SequenceDataset downsample(const SequenceDataset& ds, std::size_t factor);

// One pixel per step: [n, T*M, 1].
SequenceDataset to_pixel_sequence(const SequenceDataset& ds);

// Permutation of [0, length) drawn from `seed`.
std::vector<std::size_t> pixel_permutation(std::size_t length, std::uint64_t seed);

// Applies pixel_permutation(T*M, seed) to every example: flattened position p
// of the output holds input position perm[p]. The shape is kept.
SequenceDataset permute_pixels(const SequenceDataset& ds, std::uint64_t seed);
SequenceDataset unpermute_pixels(const SequenceDataset& ds);

struct MnistConfig {
  std::size_t train = 5000;
  std::size_t val = 1000;
  std::size_t test = 1000;
  std::size_t downsample = 2;  // 1 keeps 28 x 28
  bool pixel_steps = false;    // one pixel per step instead of one row
  std::optional<std::uint64_t> permutation_seed;
};

struct MnistSplits {
  SequenceDataset train;
  SequenceDataset val;
  SequenceDataset test;
};

// Loads {train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz] from `dir`.
// Train and validation come from the training file, test from t10k.
// Downsampling precedes permutation.
MnistSplits load_mnist(const std::filesystem::path& dir, const MnistConfig& config);

struct SpeakerDataset {
  Tensor inputs;                // [N * P, T, M], speaker-major
  std::vector<int> speaker;     // speaker id per utterance
  std::size_t num_speakers = 0;
  std::size_t per_speaker = 0;
  std::string source;

  std::size_t size() const { return speaker.size(); }
  std::size_t steps() const { return inputs.dim(1); }
  std::size_t features() const { return inputs.dim(2); }
  std::string fingerprint() const;
};

// Speaker j gets a unit direction v_j with |cos(v_j, v_k)| <= 1 - sep for all
// pairs. Utterance features are x_t = s_t v_j + noise * e_t / sqrt(M) with a
// positive per-utterance envelope s_t and e_t ~ N(0, I).
SpeakerDataset synth_speakers(std::size_t speakers, std::size_t per_speaker,
                              std::size_t steps, std::size_t features,
                              double sep, double noise, std::uint64_t seed);

// Speakers [begin, begin + count).
SpeakerDataset take_speakers(const SpeakerDataset& ds, std::size_t begin,
                             std::size_t count);

// Two-class sequences of Gaussian steps; the label is the sign of the summed
// first feature, and examples within `margin` of the boundary are redrawn.
SequenceDataset toy_sequences(std::size_t examples, std::size_t steps,
                              std::size_t features, double margin,
                              std::uint64_t seed);

// The first ceil(fraction * n) examples of a seeded shuffle, at least
// `minimum`.
std::vector<std::size_t> fraction_subset(std::size_t n, double fraction,
                                         std::size_t minimum, std::uint64_t seed);
SequenceDataset subset(const SequenceDataset& ds, const std::vector<std::size_t>& rows);

struct Batch {
  Tensor inputs;  // [batch, T, M]
  std::vector<int> labels;
  std::vector<std::size_t> rows;
};

// Seeded shuffle of [0, n) cut into batches of `batch_size`; the last batch
// may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed);

Batch gather(const SequenceDataset& ds, const std::vector<std::size_t>& rows);
Batch gather(const Tensor& inputs, const std::vector<int>& labels,
             const std::vector<std::size_t>& rows);

// Per-step slices [batch, M] of inputs [batch, T, M].
std::vector<Tensor> time_major(const Tensor& inputs);

// Single-consumer iterator over one epoch.
class BatchIterator {
 public:
  BatchIterator(const SequenceDataset& ds, std::size_t batch_size,
                std::uint64_t shuffle_seed);
  std::optional<Batch> next();
  std::size_t batch_count() const { return order_.size(); }

 private:
  const SequenceDataset* ds_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t pos_ = 0;
};

}  // namespace ttrnn

// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Optimization and task heads: Adam, softmax cross-entropy, the GE2E
// verification loss, equal error rate, the recurrent classifier/encoder
// model, training loops with early stopping, and checkpoints.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttrnn/cells.hpp"
#include "ttrnn/data.hpp"
#include "ttrnn/ops.hpp"

namespace ttrnn {

// ---------------------------------------------------------------- Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  ParamStore m;
  ParamStore v;
};

// Bias-corrected Adam update of every parameter that has a gradient. Throws
// NumericError naming the parameter and coordinate of the first non-finite
// gradient entry; nothing is modified in that case.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state);

// ---------------------------------------------------------------- losses

// Mean of -log softmax(logits)[label]. Throws ShapeError for labels outside
// [0, K).
double cross_entropy_logits(const Tensor& logits, std::span<const int> labels);

// Rows [j*P, (j+1)*P) of a [N*P, N] matrix averaging each speaker's rows.
Tensor centroid_matrix(std::size_t speakers, std::size_t per_speaker);

// GE2E similarity S[ji, k] = w * cos(e_ji, c_k) + b with c_k the mean of
// speaker k's embeddings. `emb` is [N*P, E], speaker-major.
template <class Ops>
typename Ops::Value ge2e_similarity(Ops& ops, const typename Ops::Value& emb,
                                    std::size_t speakers, std::size_t per_speaker,
                                    const typename Ops::Value& w,
                                    const typename Ops::Value& b) {
  auto centroids =
      ops.contract(ops.constant(centroid_matrix(speakers, per_speaker)), emb, {0}, {0});
  auto cos = ops.contract(ops.row_normalize(emb), ops.row_normalize(centroids), {1}, {1});
  return ops.scalar_add(ops.scalar_mul(cos, w), b);
}

std::vector<int> speaker_labels(std::size_t speakers, std::size_t per_speaker);

// Sum over utterances of -S[ji, j] + log sum_k exp S[ji, k].
template <class Ops>
typename Ops::Value ge2e_loss(Ops& ops, const typename Ops::Value& emb,
                              std::size_t speakers, std::size_t per_speaker,
                              const typename Ops::Value& w,
                              const typename Ops::Value& b) {
  if (speakers < 2 || per_speaker < 1) {
    throw ConfigError("GE2E needs at least 2 speakers and 1 utterance each");
  }
  if (ops.shape(emb).size() != 2 || ops.shape(emb)[0] != speakers * per_speaker) {
    throw ShapeError("GE2E embeddings must be [N*P, E]");
  }
  const auto labels = speaker_labels(speakers, per_speaker);
  return ops.softmax_xent(ge2e_similarity(ops, emb, speakers, per_speaker, w, b), labels,
                          Reduction::kSum);
}

double ge2e_loss(const Tensor& emb, std::size_t speakers, std::size_t per_speaker,
                 double w, double b);

// Rate at which false accepts and false rejects coincide when accepting
// scores >= threshold. Thresholds sweep the union of scores; between two
// adjacent thresholds the rates are interpolated linearly. Depends only on
// the order of the scores.
double eer(std::span<const double> same, std::span<const double> diff);

struct VerificationScores {
  std::vector<double> same;
  std::vector<double> diff;
};

// Cosine scores of every utterance against every speaker centroid of a
// speaker-major [N*P, E] matrix. Same-speaker scores leave the utterance out
// of its own centroid, so embeddings carrying no speaker information score
// at chance. Needs P >= 2.
VerificationScores verification_scores(const Tensor& emb, std::size_t speakers,
                                        std::size_t per_speaker);

// ---------------------------------------------------------------- model

enum class HeadKind { kClassifier, kEmbedding };

const char* head_kind_name(HeadKind kind);
HeadKind parse_head_kind(const std::string& s);

// Recurrent cell over the whole sequence; a linear layer on the final hidden
// state gives class logits or an utterance embedding. Embedding models add
// the two GE2E scalars.
struct ModelConfig {
  CellConfig cell;
  HeadKind head = HeadKind::kClassifier;
  std::size_t outputs = 10;

  void validate() const;
};

// Parameters "cell.*", "head.weight" [outputs, D], "head.bias" [outputs] and,
// for embedding heads, "ge2e.w" = 10 and "ge2e.b" = -5.
ParamStore init_model(const ModelConfig& config, std::uint64_t seed);

// Checks that `params` holds exactly the tensors of `config`.
void check_model_params(const ModelConfig& config, const ParamStore& params);

std::uint64_t param_element_count(const ParamStore& params);

// Dense model count under the bias conventions used here: one bias per gate
// row for LSTM, input and hidden biases for GRU, a biased linear head and two
// GE2E scalars when `ge2e` is set.
std::uint64_t dense_model_param_count(CellKind kind, std::size_t hidden, std::size_t input,
                                      std::size_t head_outputs, bool ge2e);

// Head output [batch, outputs] for time-major inputs (one [batch, M] per step).
template <class Ops>
typename Ops::Value model_forward(Ops& ops, const ModelConfig& config,
                                  std::span<const Tensor> steps) {
  if (steps.empty()) throw ShapeError("model_forward needs at least one step");
  CellProgram<Ops> cell(ops, config.cell, "cell");
  auto state = cell.zero_state(steps.front().dim(0));
  for (const Tensor& x : steps) state = cell.step(state, ops.constant(x));
  return ops.add_bias(ops.contract(state.h, ops.param("head.weight"), {1}, {1}),
                      ops.param("head.bias"));
}

// Eager head outputs for [n, T, M] inputs, evaluated in chunks of
// `chunk` rows spread over `workers` threads.
Tensor model_outputs(const ModelConfig& config, const ParamStore& params,
                     const Tensor& inputs, std::size_t chunk = 256,
                     std::size_t workers = 1);

// ---------------------------------------------------------------- training

struct MetricRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  double metric = 0.0;  // accuracy for classifiers, EER for verifiers
  double grad_norm_p50 = 0.0;
  double grad_norm_p95 = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

struct GradNormSample {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double norm = 0.0;
};

struct TrainingState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed optimizer steps
  double lr = 0.0;
  double best_metric = 0.0;
  double best_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
  bool stopped = false;
  std::string rng_state;
  std::vector<MetricRow> history;
  std::vector<GradNormSample> grad_norms;
};

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  // Epochs without validation improvement before stopping; the learning
  // rate is multiplied by lr_decay every patience/2 such epochs.
  std::size_t patience = 4;
  double lr_decay = 0.3;
  AdamConfig adam;
  std::uint64_t seed = 1;
  // Gradients are computed on fixed shards of this many rows (0 = whole
  // batch) and summed in shard order, so results do not depend on `workers`.
  std::size_t shard_size = 0;
  std::size_t workers = 1;
  std::size_t eval_chunk = 256;
  // GE2E batch composition.
  std::size_t speakers_per_batch = 8;
  std::size_t utterances_per_speaker = 4;
  // Fraction of the training set (examples, or speakers for verification).
  double data_fraction = 1.0;
  std::optional<std::filesystem::path> checkpoint_path;  // rewritten each epoch
  std::optional<std::filesystem::path> metrics_path;     // appended each epoch
  std::optional<std::filesystem::path> grad_norms_path;  // appended each epoch
  std::string config_text;                               // stored in checkpoints

  void validate() const;
};

struct Checkpoint {
  ModelConfig model;
  std::string gate_order;
  std::string bias_convention;
  std::string config_text;
  ParamStore params;
  AdamState adam;
  TrainingState state;
};

struct TrainResult {
  Checkpoint checkpoint;
  const std::vector<MetricRow>& history() const { return checkpoint.state.history; }
};

// Classifier training with mean cross-entropy. After every epoch a "train"
// row (running batch loss and accuracy) and a "val" row are recorded.
// Throws NumericError on a non-finite loss or gradient.
TrainResult train_classifier(const ModelConfig& model, const TrainConfig& config,
                             const SequenceDataset& train, const SequenceDataset& val,
                             const Checkpoint* resume = nullptr);

// Encoder training with the GE2E loss over batches of N speakers x P
// utterances; validation rows report EER. Needs at least 2 speakers.
TrainResult train_verifier(const ModelConfig& model, const TrainConfig& config,
                           const SpeakerDataset& train, const SpeakerDataset& val,
                           const Checkpoint* resume = nullptr);

struct Evaluation {
  double loss = 0.0;
  double metric = 0.0;
};

Evaluation evaluate_classifier(const ModelConfig& model, const ParamStore& params,
                               const SequenceDataset& data, std::size_t chunk = 256,
                               std::size_t workers = 1);

// Mean per-utterance GE2E loss over consecutive groups of up to
// `speakers_per_group` speakers (a single leftover speaker joins the previous
// group) and EER over all utterances of `data`.
Evaluation evaluate_verifier(const ModelConfig& model, const ParamStore& params,
                             const SpeakerDataset& data, std::size_t speakers_per_group,
                             std::size_t chunk = 256, std::size_t workers = 1);

SpeakerDataset select_speakers(const SpeakerDataset& ds, const std::vector<std::size_t>& ids);

struct SweepPoint {
  double fraction = 0.0;
  Evaluation train;
  Evaluation val;
};

// Trains one verifier per fraction of the training speakers.
std::vector<SweepPoint> verifier_fraction_sweep(const ModelConfig& model,
                                                const TrainConfig& config,
                                                const SpeakerDataset& train,
                                                const SpeakerDataset& val,
                                                std::span<const double> fractions);

// Append-only metrics CSV. A new file starts with "# <fingerprint>" lines
// and the column header.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, const std::vector<std::string>& comments);
  void append(const MetricRow& row);

  static const char* header();
  static std::string format(const MetricRow& row);

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------- checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string gate_order_tag(CellKind kind);
std::string bias_convention_tag(CellKind kind);

Checkpoint make_checkpoint(const ModelConfig& model, ParamStore params, AdamState adam,
                           TrainingState state, std::string config_text = "");

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws FormatError on corruption or truncation and VersionError on a
// format version or gate-order/bias tag mismatch.
Checkpoint parse_checkpoint(std::string_view bytes);

// Writes to a temporary sibling and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ttrnn

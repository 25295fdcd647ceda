// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/training.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "ttrnn/binary_io.hpp"
#include "ttrnn/random.hpp"
#include "ttrnn/tape.hpp"
#include "ttrnn/tt_matrix.hpp"

namespace ttrnn {
namespace {

// Runs f(0..count) on up to `workers` threads. The first exception wins.
template <class F>
void parallel_for(std::size_t count, std::size_t workers, F&& f) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto run = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) threads.emplace_back(run);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

bool is_tt(const ModelConfig& model) {
  return model.cell.param != Parameterization::kDense;
}

// Guard that is active only for TT models.
struct MaybeDensifyGuard {
  explicit MaybeDensifyGuard(bool on) {
    if (on) guard.emplace();
  }
  std::optional<DensifyGuard> guard;
};

void accumulate(GradMap& total, GradMap&& part) {
  if (total.empty()) {
    total = std::move(part);
    return;
  }
  for (auto& [name, g] : part) {
    auto dst = total.at(name).data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Tensor row_block(const Tensor& m, std::size_t begin, std::size_t count) {
  const std::size_t cols = m.dim(1);
  return Tensor(Shape{count, cols},
                std::vector<double>(m.data().begin() + begin * cols,
                                    m.data().begin() + (begin + count) * cols));
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

// Early stopping and learning-rate decay after an epoch. Ties on the primary
// metric are broken by the validation loss.
void update_schedule(TrainingState& st, const Evaluation& val, bool higher_is_better,
                     const TrainConfig& cfg) {
  const bool better_metric =
      higher_is_better ? val.metric > st.best_metric : val.metric < st.best_metric;
  const bool improved = st.best_epoch == 0 || better_metric ||
                        (val.metric == st.best_metric && val.loss < st.best_loss);
  if (improved) {
    st.best_metric = val.metric;
    st.best_loss = val.loss;
    st.best_epoch = st.epoch;
    st.epochs_since_best = 0;
    return;
  }
  ++st.epochs_since_best;
  if (cfg.patience == 0) return;
  const std::size_t half = std::max<std::size_t>(1, cfg.patience / 2);
  if (st.epochs_since_best % half == 0) st.lr *= cfg.lr_decay;
  if (st.epochs_since_best >= cfg.patience) st.stopped = true;
}

std::string diagnostics(const TrainingState& st, double loss) {
  std::string s = "training diverged at epoch " + std::to_string(st.epoch + 1) + ", step " +
                  std::to_string(st.step + 1) + ": loss " + std::to_string(loss);
  if (!st.grad_norms.empty()) {
    s += ", last gradient norm " + std::to_string(st.grad_norms.back().norm);
  }
  return s + ", lr " + std::to_string(st.lr);
}

class RunOutputs {
 public:
  RunOutputs(const TrainConfig& cfg, const std::vector<std::string>& fingerprints) : cfg_(cfg) {
    if (cfg.metrics_path) metrics_.emplace(*cfg.metrics_path, fingerprints);
    if (cfg.grad_norms_path) {
      const bool fresh = !std::filesystem::exists(*cfg.grad_norms_path) ||
                         std::filesystem::file_size(*cfg.grad_norms_path) == 0;
      grad_norms_.open(*cfg.grad_norms_path, std::ios::app);
      if (!grad_norms_) throw IoError("cannot open " + cfg.grad_norms_path->string());
      if (fresh) grad_norms_ << "epoch,step,grad_norm\n";
    }
  }

  void epoch_done(const Checkpoint& ck, std::size_t rows_added, std::size_t norms_added) {
    const auto& st = ck.state;
    if (metrics_) {
      for (std::size_t i = st.history.size() - rows_added; i < st.history.size(); ++i) {
        metrics_->append(st.history[i]);
      }
    }
    if (grad_norms_.is_open()) {
      char buf[64];
      for (std::size_t i = st.grad_norms.size() - norms_added; i < st.grad_norms.size(); ++i) {
        const auto& g = st.grad_norms[i];
        std::snprintf(buf, sizeof(buf), "%.17g", g.norm);
        grad_norms_ << g.epoch << ',' << g.step << ',' << buf << '\n';
      }
      grad_norms_.flush();
    }
    if (cfg_.checkpoint_path) save_checkpoint(ck, *cfg_.checkpoint_path);
  }

 private:
  const TrainConfig& cfg_;
  std::optional<MetricsWriter> metrics_;
  std::ofstream grad_norms_;
};

Checkpoint start_or_resume(const ModelConfig& model, const TrainConfig& cfg,
                           const Checkpoint* resume) {
  if (resume != nullptr) {
    if (gate_order_tag(model.cell.kind) != resume->gate_order ||
        model.head != resume->model.head) {
      throw ConfigError("checkpoint does not match the model configuration");
    }
    check_model_params(model, resume->params);
    Checkpoint ck = *resume;
    ck.config_text = cfg.config_text.empty() ? ck.config_text : cfg.config_text;
    return ck;
  }
  TrainingState st;
  st.lr = cfg.adam.lr;
  st.rng_state = Rng(mix_seed(cfg.seed, 41)).state();
  return make_checkpoint(model, init_model(model, cfg.seed), AdamState{cfg.adam}, std::move(st),
                         cfg.config_text);
}

void optimizer_step(Checkpoint& ck, const GradMap& grads, const TrainConfig& cfg,
                    double loss) {
  auto& st = ck.state;
  if (!std::isfinite(loss)) throw NumericError(diagnostics(st, loss));
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericError(diagnostics(st, loss) + ", non-finite gradient");
  ck.adam.config = cfg.adam;
  ck.adam.config.lr = st.lr;
  adam_step(ck.params, grads, ck.adam);
  auto it = ck.params.find("ge2e.w");
  if (it != ck.params.end()) it->second[0] = std::max(it->second[0], 1e-6);
  ++st.step;
  st.grad_norms.push_back({st.epoch + 1, st.step, norm});
}

std::vector<double> epoch_norms(const TrainingState& st, std::size_t epoch) {
  std::vector<double> out;
  for (const auto& g : st.grad_norms) {
    if (g.epoch == epoch) out.push_back(g.norm);
  }
  return out;
}

void check_sequences(const ModelConfig& model, const SequenceDataset& ds) {
  ds.validate();
  if (ds.size() == 0) throw ConfigError(std::string(split_name(ds.split)) + " split is empty");
  if (ds.features() != model.cell.input) {
    throw ConfigError("dataset has " + std::to_string(ds.features()) +
                      " features per step; the model expects " +
                      std::to_string(model.cell.input));
  }
  for (int label : ds.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= model.outputs) {
      throw ConfigError("label " + std::to_string(label) + " outside the " +
                        std::to_string(model.outputs) + " model classes");
    }
  }
}

void check_speakers(const ModelConfig& model, const SpeakerDataset& ds, const char* what) {
  if (ds.num_speakers < 2) {
    throw ConfigError(std::string(what) + " set needs at least 2 speakers, got " +
                      std::to_string(ds.num_speakers));
  }
  if (ds.per_speaker < 2) throw ConfigError(std::string(what) + " set needs P >= 2");
  if (ds.features() != model.cell.input) {
    throw ConfigError("speaker features " + std::to_string(ds.features()) +
                      " do not match model input " + std::to_string(model.cell.input));
  }
}

// Consecutive groups of `size` items; a single leftover joins the last group.
std::vector<std::vector<std::size_t>> groups_of(const std::vector<std::size_t>& items,
                                                std::size_t size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < items.size(); i += size) {
    out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(i),
                     items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + size)));
  }
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

SpeakerDataset fraction_of_speakers(const SpeakerDataset& ds, const TrainConfig& cfg) {
  if (cfg.data_fraction >= 1.0) return ds;
  return select_speakers(
      ds, fraction_subset(ds.num_speakers, cfg.data_fraction, 2, mix_seed(cfg.seed, 31)));
}

void write_tensor(BinaryWriter& out, const Tensor& t) {
  out.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) out.u64(d);
  out.f64_array(t.data());
}

Tensor read_tensor(BinaryReader& in) {
  const std::uint32_t rank = in.u32();
  if (rank > 8) throw FormatError("tensor rank " + std::to_string(rank) + " is implausible");
  Shape shape(rank);
  std::size_t size = 1;
  for (auto& d : shape) {
    d = in.u64();
    if (d != 0 && size > in.remaining() / d) throw FormatError("tensor size exceeds the file");
    size *= d;
  }
  if (size * 8 > in.remaining()) throw FormatError("truncated tensor payload");
  Tensor t(shape);
  in.f64_array(t.data());
  return t;
}

void write_dims(BinaryWriter& out, const std::vector<std::size_t>& dims) {
  out.u32(static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) out.u64(d);
}

std::vector<std::size_t> read_dims(BinaryReader& in) {
  const std::uint32_t n = in.u32();
  if (n > 64) throw FormatError("implausible factor count");
  std::vector<std::size_t> dims(n);
  for (auto& d : dims) d = in.u64();
  return dims;
}

constexpr std::string_view kMagic = "TTRNNCKP";

}  // namespace

// ---------------------------------------------------------------- Adam

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("gradient for unknown parameter " + name);
    if (it->second.shape() != g.shape()) throw ShapeError("gradient shape mismatch for " + name);
    const auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!std::isfinite(d[i])) {
        throw NumericError("non-finite gradient " + std::to_string(d[i]) + " in " + name +
                           " at flat index " + std::to_string(i) + " (step " +
                           std::to_string(state.t + 1) + ")");
      }
    }
  }
  const AdamConfig& c = state.config;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto m_it = state.m.try_emplace(name, Tensor(p.shape())).first;
    auto v_it = state.v.try_emplace(name, Tensor(p.shape())).first;
    auto pd = p.data();
    auto md = m_it->second.data();
    auto vd = v_it->second.data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gd[i];
      vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gd[i] * gd[i];
      pd[i] -= c.lr * (md[i] / bc1) / (std::sqrt(vd[i] / bc2) + c.eps);
    }
  }
}

// ---------------------------------------------------------------- losses

double cross_entropy_logits(const Tensor& logits, std::span<const int> labels) {
  return kernels::softmax_xent(logits, labels, Reduction::kMean)[0];
}

Tensor centroid_matrix(std::size_t speakers, std::size_t per_speaker) {
  Tensor a(Shape{speakers * per_speaker, speakers});
  const double inv = 1.0 / static_cast<double>(per_speaker);
  for (std::size_t j = 0; j < speakers; ++j)
    for (std::size_t i = 0; i < per_speaker; ++i) a.at({j * per_speaker + i, j}) = inv;
  return a;
}

std::vector<int> speaker_labels(std::size_t speakers, std::size_t per_speaker) {
  std::vector<int> labels;
  labels.reserve(speakers * per_speaker);
  for (std::size_t j = 0; j < speakers; ++j)
    for (std::size_t i = 0; i < per_speaker; ++i) labels.push_back(static_cast<int>(j));
  return labels;
}

double ge2e_loss(const Tensor& emb, std::size_t speakers, std::size_t per_speaker, double w,
                 double b) {
  EagerOps ops;
  return ge2e_loss(ops, emb, speakers, per_speaker, Tensor(Shape{1}, {w}),
                   Tensor(Shape{1}, {b}))[0];
}

double eer(std::span<const double> same, std::span<const double> diff) {
  if (same.empty() || diff.empty()) throw ConfigError("EER needs same and different scores");
  std::vector<double> s(same.begin(), same.end());
  std::vector<double> d(diff.begin(), diff.end());
  std::sort(s.begin(), s.end());
  std::sort(d.begin(), d.end());
  std::vector<double> thresholds = s;
  thresholds.insert(thresholds.end(), d.begin(), d.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  // Accept scores >= tau. FNR rises and FPR falls as tau grows.
  auto rates = [&](double tau) {
    const double fnr = static_cast<double>(std::lower_bound(s.begin(), s.end(), tau) - s.begin()) /
                       static_cast<double>(s.size());
    const double fpr = static_cast<double>(d.end() - std::lower_bound(d.begin(), d.end(), tau)) /
                       static_cast<double>(d.size());
    return std::pair{fnr, fpr};
  };
  auto [fnr0, fpr0] = rates(thresholds.front());
  double prev_gap = fpr0 - fnr0;
  double prev_fpr = fpr0;
  if (prev_gap <= 0.0) return fpr0;
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    const auto [fnr, fpr] = rates(thresholds[i]);
    const double gap = fpr - fnr;
    if (gap == 0.0) return fpr;
    if (gap < 0.0) {
      const double t = prev_gap / (prev_gap - gap);
      return prev_fpr + t * (fpr - prev_fpr);
    }
    prev_gap = gap;
    prev_fpr = fpr;
  }
  return prev_fpr;
}

VerificationScores verification_scores(const Tensor& emb, std::size_t speakers,
                                       std::size_t per_speaker) {
  if (speakers < 2 || per_speaker < 2) {
    throw ConfigError("verification scores need at least 2 speakers with 2 utterances");
  }
  if (emb.rank() != 2 || emb.dim(0) != speakers * per_speaker) {
    throw ShapeError("embeddings must be [N*P, E]");
  }
  const std::size_t e = emb.dim(1);
  std::vector<double> sums(speakers * e, 0.0);
  for (std::size_t j = 0; j < speakers; ++j)
    for (std::size_t i = 0; i < per_speaker; ++i)
      for (std::size_t k = 0; k < e; ++k) sums[j * e + k] += emb.at({j * per_speaker + i, k});

  auto cosine = [&](std::size_t row, const double* c) {
    double ab = 0.0, aa = 0.0, cc = 0.0;
    for (std::size_t k = 0; k < e; ++k) {
      const double a = emb.at({row, k});
      ab += a * c[k];
      aa += a * a;
      cc += c[k] * c[k];
    }
    if (!(aa > 0.0) || !(cc > 0.0)) throw NumericError("cosine of a zero vector");
    return ab / std::sqrt(aa * cc);
  };

  VerificationScores out;
  std::vector<double> loo(e);
  for (std::size_t j = 0; j < speakers; ++j) {
    for (std::size_t i = 0; i < per_speaker; ++i) {
      const std::size_t row = j * per_speaker + i;
      for (std::size_t k = 0; k < e; ++k) loo[k] = sums[j * e + k] - emb.at({row, k});
      out.same.push_back(cosine(row, loo.data()));
      for (std::size_t other = 0; other < speakers; ++other) {
        if (other != j) out.diff.push_back(cosine(row, &sums[other * e]));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- model

const char* head_kind_name(HeadKind kind) {
  return kind == HeadKind::kClassifier ? "classifier" : "embedding";
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "classifier") return HeadKind::kClassifier;
  if (s == "embedding") return HeadKind::kEmbedding;
  throw ConfigError("unknown head kind '" + s + "'");
}

void ModelConfig::validate() const {
  cell.validate();
  if (outputs == 0) throw ConfigError("model outputs must be positive");
}

ParamStore init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore store;
  store_cell_params(init_cell(config.cell, mix_seed(seed, 11)), store, "cell");
  const std::size_t d = config.cell.hidden;
  Tensor w(Shape{config.outputs, d});
  Rng rng(mix_seed(seed, 12));
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : w.data()) v = std_dev * rng.normal();
  store["head.weight"] = std::move(w);
  store["head.bias"] = Tensor(Shape{config.outputs});
  if (config.head == HeadKind::kEmbedding) {
    store["ge2e.w"] = Tensor(Shape{1}, {10.0});
    store["ge2e.b"] = Tensor(Shape{1}, {-5.0});
  }
  return store;
}

void check_model_params(const ModelConfig& config, const ParamStore& params) {
  const ParamStore expected = init_model(config, 0);
  for (const auto& [name, t] : expected) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("missing parameter " + name);
    if (it->second.shape() != t.shape()) {
      throw ConfigError("parameter " + name + " has shape " + shape_str(it->second.shape()) +
                        ", expected " + shape_str(t.shape()));
    }
  }
  for (const auto& [name, t] : params) {
    if (!expected.contains(name)) throw ConfigError("unexpected parameter " + name);
  }
}

std::uint64_t param_element_count(const ParamStore& params) {
  std::uint64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

std::uint64_t dense_model_param_count(CellKind kind, std::size_t hidden, std::size_t input,
                                      std::size_t head_outputs, bool ge2e) {
  const std::uint64_t g = gate_count(kind);
  const std::uint64_t bias = (kind == CellKind::kGru ? 2 : 1) * g * hidden;
  return param_count_dense(g, hidden, input) + bias +
         static_cast<std::uint64_t>(head_outputs) * (hidden + 1) + (ge2e ? 2 : 0);
}

Tensor model_outputs(const ModelConfig& config, const ParamStore& params, const Tensor& inputs,
                     std::size_t chunk, std::size_t workers) {
  if (inputs.rank() != 3) throw ShapeError("model inputs must be [n, T, M]");
  if (chunk == 0) throw ConfigError("evaluation chunk must be positive");
  const std::size_t n = inputs.dim(0);
  const std::size_t chunks = (n + chunk - 1) / chunk;
  Tensor out(Shape{n, config.outputs});
  const std::vector<int> no_labels(n, 0);
  parallel_for(chunks, workers, [&](std::size_t c) {
    MaybeDensifyGuard guard(is_tt(config));
    std::vector<std::size_t> rows;
    for (std::size_t r = c * chunk; r < std::min(n, (c + 1) * chunk); ++r) rows.push_back(r);
    const Batch b = gather(inputs, no_labels, rows);
    EagerOps ops(&params);
    const Tensor y = model_forward(ops, config, time_major(b.inputs));
    std::copy(y.data().begin(), y.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(rows.front() * config.outputs));
  });
  return out;
}

// ---------------------------------------------------------------- training

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("lr must be >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr decay must be in (0, 1]");
  if (!(data_fraction > 0.0 && data_fraction <= 1.0)) {
    throw ConfigError("data fraction must be in (0, 1]");
  }
  if (workers == 0) throw ConfigError("workers must be at least 1");
  if (eval_chunk == 0) throw ConfigError("evaluation chunk must be positive");
  if (speakers_per_batch < 2) throw ConfigError("GE2E batches need at least 2 speakers");
  if (utterances_per_speaker < 1) throw ConfigError("GE2E batches need P >= 1");
}

TrainResult train_classifier(const ModelConfig& model, const TrainConfig& cfg,
                             const SequenceDataset& train_full, const SequenceDataset& val,
                             const Checkpoint* resume) {
  model.validate();
  cfg.validate();
  if (model.head != HeadKind::kClassifier) throw ConfigError("classifier training needs a classifier head");
  check_sequences(model, train_full);
  check_sequences(model, val);
  const SequenceDataset train =
      cfg.data_fraction < 1.0
          ? subset(train_full, fraction_subset(train_full.size(), cfg.data_fraction, 1,
                                               mix_seed(cfg.seed, 31)))
          : train_full;

  Checkpoint ck = start_or_resume(model, cfg, resume);
  TrainingState& st = ck.state;
  MaybeDensifyGuard guard(is_tt(model));
  RunOutputs outputs(cfg, {train.fingerprint(), val.fingerprint()});
  Rng rng(0);
  rng.set_state(st.rng_state);

  while (!st.stopped && st.epoch < cfg.epochs) {
    const auto start = std::chrono::steady_clock::now();
    const double epoch_lr = st.lr;
    const std::size_t norms_before = st.grad_norms.size();
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& rows : batch_indices(train.size(), cfg.batch_size, rng.next_u64())) {
      const std::size_t shard = cfg.shard_size == 0 ? rows.size() : cfg.shard_size;
      const std::size_t shards = (rows.size() + shard - 1) / shard;
      std::vector<double> losses(shards);
      std::vector<GradMap> grads(shards);
      std::vector<std::size_t> hits(shards);
      const double inv_batch = 1.0 / static_cast<double>(rows.size());
      parallel_for(shards, cfg.workers, [&](std::size_t s) {
        MaybeDensifyGuard inner(is_tt(model));
        const std::vector<std::size_t> part(
            rows.begin() + static_cast<std::ptrdiff_t>(s * shard),
            rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), (s + 1) * shard)));
        const Batch b = gather(train, part);
        Tape tape;
        TapeOps ops(tape, &ck.params);
        const auto logits = model_forward(ops, model, time_major(b.inputs));
        const auto loss =
            ops.scale(ops.softmax_xent(logits, b.labels, Reduction::kSum), inv_batch);
        losses[s] = tape.value(loss)[0];
        const Tensor& z = tape.value(logits);
        for (std::size_t r = 0; r < part.size(); ++r) {
          std::size_t best = 0;
          for (std::size_t k = 1; k < model.outputs; ++k) {
            if (z.at({r, k}) > z.at({r, best})) best = k;
          }
          hits[s] += static_cast<int>(best) == b.labels[r];
        }
        grads[s] = tape.backward(loss);
      });
      double loss = 0.0;
      GradMap total;
      for (std::size_t s = 0; s < shards; ++s) {
        loss += losses[s];
        correct += hits[s];
        accumulate(total, std::move(grads[s]));
      }
      optimizer_step(ck, total, cfg, loss);
      loss_sum += loss * static_cast<double>(rows.size());
    }
    ++st.epoch;
    const Evaluation ev = evaluate_classifier(model, ck.params, val, cfg.eval_chunk, cfg.workers);
    const auto norms = epoch_norms(st, st.epoch);
    const double p50 = percentile(norms, 0.5);
    const double p95 = percentile(norms, 0.95);
    const double n = static_cast<double>(train.size());
    const double wall = elapsed_ms(start);
    st.history.push_back({st.epoch, st.step, "train", loss_sum / n,
                          static_cast<double>(correct) / n, p50, p95, epoch_lr, wall});
    st.history.push_back({st.epoch, st.step, "val", ev.loss, ev.metric, p50, p95, epoch_lr, wall});
    update_schedule(st, ev, true, cfg);
    st.rng_state = rng.state();
    outputs.epoch_done(ck, 2, st.grad_norms.size() - norms_before);
  }
  return TrainResult{std::move(ck)};
}

TrainResult train_verifier(const ModelConfig& model, const TrainConfig& cfg,
                           const SpeakerDataset& train_full, const SpeakerDataset& val,
                           const Checkpoint* resume) {
  model.validate();
  cfg.validate();
  if (model.head != HeadKind::kEmbedding) throw ConfigError("verifier training needs an embedding head");
  check_speakers(model, train_full, "training");
  check_speakers(model, val, "validation");
  const SpeakerDataset train = fraction_of_speakers(train_full, cfg);
  const std::size_t p = cfg.utterances_per_speaker;
  if (p > train.per_speaker) {
    throw ConfigError("batches use " + std::to_string(p) + " utterances per speaker but only " +
                      std::to_string(train.per_speaker) + " exist");
  }

  Checkpoint ck = start_or_resume(model, cfg, resume);
  TrainingState& st = ck.state;
  MaybeDensifyGuard guard(is_tt(model));
  RunOutputs outputs(cfg, {train.fingerprint(), val.fingerprint()});
  Rng rng(0);
  rng.set_state(st.rng_state);
  const std::vector<int> labels(train.size(), 0);

  while (!st.stopped && st.epoch < cfg.epochs) {
    const auto start = std::chrono::steady_clock::now();
    const double epoch_lr = st.lr;
    const std::size_t norms_before = st.grad_norms.size();
    const std::uint64_t shuffle = rng.next_u64();
    const auto groups =
        groups_of(pixel_permutation(train.num_speakers, mix_seed(shuffle, 0)), cfg.speakers_per_batch);
    std::vector<std::vector<std::size_t>> utterance_order;
    for (std::size_t s = 0; s < train.num_speakers; ++s) {
      utterance_order.push_back(pixel_permutation(train.per_speaker, mix_seed(shuffle, 1 + s)));
    }
    double loss_sum = 0.0;
    std::size_t utterances = 0;
    for (std::size_t q = 0; q + p <= train.per_speaker; q += p) {
      for (const auto& group : groups) {
        std::vector<std::size_t> rows;
        for (std::size_t s : group)
          for (std::size_t i = 0; i < p; ++i)
            rows.push_back(s * train.per_speaker + utterance_order[s][q + i]);
        const Batch b = gather(train.inputs, labels, rows);
        Tape tape;
        TapeOps ops(tape, &ck.params);
        const auto emb = model_forward(ops, model, time_major(b.inputs));
        const auto loss = ge2e_loss(ops, emb, group.size(), p, ops.param("ge2e.w"),
                                    ops.param("ge2e.b"));
        const double value = tape.value(loss)[0];
        const GradMap grads = tape.backward(loss);
        optimizer_step(ck, grads, cfg, value);
        loss_sum += value;
        utterances += rows.size();
      }
    }
    ++st.epoch;
    const Evaluation tr = evaluate_verifier(model, ck.params, train, cfg.speakers_per_batch,
                                            cfg.eval_chunk, cfg.workers);
    const Evaluation ev = evaluate_verifier(model, ck.params, val, cfg.speakers_per_batch,
                                            cfg.eval_chunk, cfg.workers);
    const auto norms = epoch_norms(st, st.epoch);
    const double p50 = percentile(norms, 0.5);
    const double p95 = percentile(norms, 0.95);
    const double wall = elapsed_ms(start);
    st.history.push_back({st.epoch, st.step, "train",
                          loss_sum / static_cast<double>(std::max<std::size_t>(1, utterances)),
                          tr.metric, p50, p95, epoch_lr, wall});
    st.history.push_back({st.epoch, st.step, "val", ev.loss, ev.metric, p50, p95, epoch_lr, wall});
    update_schedule(st, ev, false, cfg);
    st.rng_state = rng.state();
    outputs.epoch_done(ck, 2, st.grad_norms.size() - norms_before);
  }
  return TrainResult{std::move(ck)};
}

Evaluation evaluate_classifier(const ModelConfig& model, const ParamStore& params,
                               const SequenceDataset& data, std::size_t chunk,
                               std::size_t workers) {
  const Tensor logits = model_outputs(model, params, data.inputs, chunk, workers);
  Evaluation ev;
  ev.loss = cross_entropy_logits(logits, data.labels);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < model.outputs; ++k) {
      if (logits.at({r, k}) > logits.at({r, best})) best = k;
    }
    correct += static_cast<int>(best) == data.labels[r];
  }
  ev.metric = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

Evaluation evaluate_verifier(const ModelConfig& model, const ParamStore& params,
                             const SpeakerDataset& data, std::size_t speakers_per_group,
                             std::size_t chunk, std::size_t workers) {
  const Tensor emb = model_outputs(model, params, data.inputs, chunk, workers);
  const double w = params.at("ge2e.w")[0];
  const double b = params.at("ge2e.b")[0];
  std::vector<std::size_t> ids(data.num_speakers);
  std::iota(ids.begin(), ids.end(), 0);
  const std::size_t p = data.per_speaker;
  double total = 0.0;
  for (const auto& group : groups_of(ids, std::max<std::size_t>(2, speakers_per_group))) {
    total += ge2e_loss(row_block(emb, group.front() * p, group.size() * p), group.size(), p, w, b);
  }
  Evaluation ev;
  ev.loss = total / static_cast<double>(data.size());
  const auto scores = verification_scores(emb, data.num_speakers, p);
  ev.metric = eer(scores.same, scores.diff);
  return ev;
}

SpeakerDataset select_speakers(const SpeakerDataset& ds, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw ConfigError("no speakers selected");
  const std::size_t p = ds.per_speaker;
  std::vector<std::size_t> rows;
  SpeakerDataset out;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] >= ds.num_speakers) throw ConfigError("speaker id out of range");
    for (std::size_t i = 0; i < p; ++i) {
      rows.push_back(ids[j] * p + i);
      out.speaker.push_back(static_cast<int>(j));
    }
  }
  out.inputs = gather(ds.inputs, std::vector<int>(ds.size(), 0), rows).inputs;
  out.num_speakers = ids.size();
  out.per_speaker = p;
  out.source = ds.source + "[" + std::to_string(ids.size()) + " selected speakers]";
  return out;
}

std::vector<SweepPoint> verifier_fraction_sweep(const ModelConfig& model,
                                                const TrainConfig& config,
                                                const SpeakerDataset& train,
                                                const SpeakerDataset& val,
                                                std::span<const double> fractions) {
  std::vector<SweepPoint> out;
  for (double f : fractions) {
    TrainConfig cfg = config;
    cfg.data_fraction = f;
    cfg.checkpoint_path.reset();
    const auto result = train_verifier(model, cfg, train, val);
    const auto& params = result.checkpoint.params;
    out.push_back({f,
                   evaluate_verifier(model, params, fraction_of_speakers(train, cfg),
                                     cfg.speakers_per_batch, cfg.eval_chunk, cfg.workers),
                   evaluate_verifier(model, params, val, cfg.speakers_per_batch, cfg.eval_chunk,
                                     cfg.workers)});
  }
  return out;
}

// ---------------------------------------------------------------- metrics CSV

MetricsWriter::MetricsWriter(const std::filesystem::path& path,
                             const std::vector<std::string>& comments) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open metrics file " + path.string());
  if (fresh) {
    for (const auto& c : comments) out_ << "# dataset " << c << '\n';
    out_ << header() << '\n';
    out_.flush();
  }
}

const char* MetricsWriter::header() {
  return "epoch,step,split,loss,accuracy_or_eer,grad_norm_p50,grad_norm_p95,lr,wall_ms";
}

std::string MetricsWriter::format(const MetricRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f", r.epoch,
                r.step, r.split.c_str(), r.loss, r.metric, r.grad_norm_p50, r.grad_norm_p95, r.lr,
                r.wall_ms);
  return buf;
}

void MetricsWriter::append(const MetricRow& row) {
  out_ << format(row) << '\n';
  out_.flush();
}

// ---------------------------------------------------------------- checkpoints

std::string gate_order_tag(CellKind kind) {
  std::string tag = cell_kind_name(kind);
  tag += ':';
  const auto& names = gate_names(kind);
  for (std::size_t i = 0; i < names.size(); ++i) tag += (i ? "," : "") + names[i];
  return tag;
}

std::string bias_convention_tag(CellKind kind) {
  return kind == CellKind::kGru ? "dual-bias" : "single-bias";
}

Checkpoint make_checkpoint(const ModelConfig& model, ParamStore params, AdamState adam,
                           TrainingState state, std::string config_text) {
  Checkpoint ck;
  ck.model = model;
  ck.gate_order = gate_order_tag(model.cell.kind);
  ck.bias_convention = bias_convention_tag(model.cell.kind);
  ck.config_text = std::move(config_text);
  ck.params = std::move(params);
  ck.adam = std::move(adam);
  ck.state = std::move(state);
  return ck;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  BinaryWriter out;
  out.raw(kMagic);
  out.u32(kCheckpointVersion);
  out.str(ck.gate_order);
  out.str(ck.bias_convention);
  out.u64(fnv1a(ck.config_text.data(), ck.config_text.size()));
  out.str(ck.config_text);

  const CellConfig& c = ck.model.cell;
  out.str(cell_kind_name(c.kind));
  out.str(parameterization_name(c.param));
  out.u64(c.hidden);
  out.u64(c.input);
  write_dims(out, c.hidden_dims);
  write_dims(out, c.input_dims);
  write_dims(out, c.ranks);
  out.u64(c.rank0);
  out.str(head_kind_name(ck.model.head));
  out.u64(ck.model.outputs);

  // Plain tensors first, then TT chains ("<prefix>.core<k>") as TT records.
  static const std::regex core_re(R"((.*)\.core(\d+))");
  std::map<std::string, std::map<std::size_t, const Tensor*>> chains;
  std::vector<std::pair<std::string, const Tensor*>> plain;
  for (const auto& [name, t] : ck.params) {
    std::smatch m;
    if (std::regex_match(name, m, core_re)) {
      chains[m[1]][std::stoul(m[2])] = &t;
    } else {
      plain.emplace_back(name, &t);
    }
  }
  out.u32(static_cast<std::uint32_t>(plain.size()));
  for (const auto& [name, t] : plain) {
    out.str(name);
    write_tensor(out, *t);
  }
  out.u32(static_cast<std::uint32_t>(chains.size()));
  for (const auto& [prefix, cores] : chains) {
    std::vector<Tensor> list;
    for (const auto& [k, t] : cores) {
      if (k != list.size()) throw StateError("TT chain " + prefix + " has a gap in core indices");
      list.push_back(*t);
    }
    out.str(prefix);
    write_tt_record(out, TTMatrix::from_tensors(std::move(list)));
  }

  const AdamState& a = ck.adam;
  out.f64(a.config.lr);
  out.f64(a.config.beta1);
  out.f64(a.config.beta2);
  out.f64(a.config.eps);
  out.u64(a.t);
  out.u32(static_cast<std::uint32_t>(a.m.size()));
  for (const auto& [name, m] : a.m) {
    out.str(name);
    write_tensor(out, m);
    write_tensor(out, a.v.at(name));
  }

  const TrainingState& s = ck.state;
  out.u64(s.epoch);
  out.u64(s.step);
  out.f64(s.lr);
  out.f64(s.best_metric);
  out.f64(s.best_loss);
  out.u64(s.best_epoch);
  out.u64(s.epochs_since_best);
  out.u8(s.stopped ? 1 : 0);
  out.str(s.rng_state);
  out.u32(static_cast<std::uint32_t>(s.history.size()));
  for (const auto& r : s.history) {
    out.u64(r.epoch);
    out.u64(r.step);
    out.str(r.split);
    for (double v : {r.loss, r.metric, r.grad_norm_p50, r.grad_norm_p95, r.lr, r.wall_ms}) out.f64(v);
  }
  out.u32(static_cast<std::uint32_t>(s.grad_norms.size()));
  for (const auto& g : s.grad_norms) {
    out.u64(g.epoch);
    out.u64(g.step);
    out.f64(g.norm);
  }
  const std::string& body = out.bytes();
  out.u64(fnv1a(body.data(), body.size()));
  return out.bytes();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw FormatError("not a ttrnn checkpoint (bad magic)");
  }
  {
    BinaryReader footer(bytes.substr(bytes.size() - 8));
    const std::uint64_t stored = footer.u64();
    if (stored != fnv1a(bytes.data(), bytes.size() - 8)) {
      throw FormatError("checkpoint checksum mismatch (corrupt or truncated file)");
    }
  }
  BinaryReader in(bytes.substr(0, bytes.size() - 8));
  in.raw(kMagic.size());
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.gate_order = in.str();
  ck.bias_convention = in.str();
  const std::uint64_t hash = in.u64();
  ck.config_text = in.str();
  if (hash != fnv1a(ck.config_text.data(), ck.config_text.size())) {
    throw FormatError("checkpoint config hash mismatch");
  }

  CellConfig& c = ck.model.cell;
  try {
    c.kind = parse_cell_kind(in.str());
    c.param = parse_parameterization(in.str());
    c.hidden = in.u64();
    c.input = in.u64();
    c.hidden_dims = read_dims(in);
    c.input_dims = read_dims(in);
    c.ranks = read_dims(in);
    c.rank0 = in.u64();
    ck.model.head = parse_head_kind(in.str());
    ck.model.outputs = in.u64();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint model header: ") + e.what());
  }
  if (ck.gate_order != gate_order_tag(c.kind)) {
    throw VersionError("checkpoint gate order '" + ck.gate_order + "' does not match '" +
                       gate_order_tag(c.kind) + "'");
  }
  if (ck.bias_convention != bias_convention_tag(c.kind)) {
    throw VersionError("checkpoint bias convention '" + ck.bias_convention +
                       "' does not match '" + bias_convention_tag(c.kind) + "'");
  }

  const std::uint32_t plain = in.u32();
  for (std::uint32_t i = 0; i < plain; ++i) {
    std::string name = in.str();
    ck.params[name] = read_tensor(in);
  }
  const std::uint32_t chains = in.u32();
  for (std::uint32_t i = 0; i < chains; ++i) {
    const std::string prefix = in.str();
    const TTMatrix ttm = read_tt_record(in);
    for (std::size_t k = 0; k < ttm.num_cores(); ++k) {
      ck.params[prefix + ".core" + std::to_string(k)] = ttm.core(k).values();
    }
  }
  try {
    check_model_params(ck.model, ck.params);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint parameters: ") + e.what());
  }

  AdamState& a = ck.adam;
  a.config.lr = in.f64();
  a.config.beta1 = in.f64();
  a.config.beta2 = in.f64();
  a.config.eps = in.f64();
  a.t = in.u64();
  const std::uint32_t moments = in.u32();
  for (std::uint32_t i = 0; i < moments; ++i) {
    std::string name = in.str();
    a.m[name] = read_tensor(in);
    a.v[name] = read_tensor(in);
  }

  TrainingState& s = ck.state;
  s.epoch = in.u64();
  s.step = in.u64();
  s.lr = in.f64();
  s.best_metric = in.f64();
  s.best_loss = in.f64();
  s.best_epoch = in.u64();
  s.epochs_since_best = in.u64();
  s.stopped = in.u8() != 0;
  s.rng_state = in.str();
  const std::uint32_t rows = in.u32();
  for (std::uint32_t i = 0; i < rows; ++i) {
    MetricRow r;
    r.epoch = in.u64();
    r.step = in.u64();
    r.split = in.str();
    for (double* v : {&r.loss, &r.metric, &r.grad_norm_p50, &r.grad_norm_p95, &r.lr, &r.wall_ms}) {
      *v = in.f64();
    }
    s.history.push_back(std::move(r));
  }
  const std::uint32_t norms = in.u32();
  for (std::uint32_t i = 0; i < norms; ++i) {
    GradNormSample g;
    g.epoch = in.u64();
    g.step = in.u64();
    g.norm = in.f64();
    s.grad_norms.push_back(g);
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace ttrnn

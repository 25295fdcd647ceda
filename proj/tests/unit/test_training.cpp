// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "ttrnn/binary_io.hpp"
#include "ttrnn/random.hpp"
#include "ttrnn/tape.hpp"
#include "ttrnn/training.hpp"

namespace ttrnn {
namespace {

namespace fs = std::filesystem;
using testing::max_abs_diff;
using testing::random_tensor;

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() /
         ("ttrnn_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) +
          "_" + name);
}

// ---------------------------------------------------------------- Adam

TEST(Adam, ZeroGradientsLeaveParamsUnchanged) {
  ParamStore p{{"a", random_tensor({3, 2}, 1)}};
  const ParamStore before = p;
  AdamState st;
  for (int i = 0; i < 5; ++i) adam_step(p, {{"a", Tensor(Shape{3, 2})}}, st);
  EXPECT_EQ(p.at("a"), before.at("a"));
  EXPECT_EQ(st.t, 5u);
}

TEST(Adam, ScalarQuadraticConverges) {
  // f = (theta - 3)^2, minimum at 3.
  ParamStore p{{"theta", Tensor(Shape{1}, {0.0})}};
  AdamState st;
  st.config.lr = 0.1;
  for (int i = 0; i < 500; ++i) {
    const double theta = p.at("theta")[0];
    adam_step(p, {{"theta", Tensor(Shape{1}, {2.0 * (theta - 3.0)})}}, st);
  }
  EXPECT_LT(std::abs(p.at("theta")[0] - 3.0), 1e-3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore p{{"x", Tensor(Shape{2}, {1.0, 1.0})}};
  AdamState st;
  adam_step(p, {{"x", Tensor(Shape{2}, {0.5, -4.0})}}, st);
  // m_hat / sqrt(v_hat) = sign(g) on the first step.
  EXPECT_NEAR(p.at("x")[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(p.at("x")[1], 1.0 + 1e-3, 1e-10);
}

TEST(Adam, UpdateIsElementwiseAndOrderFree) {
  const Tensor a = random_tensor({4}, 2), b = random_tensor({3, 3}, 3);
  const Tensor ga = random_tensor({4}, 4), gb = random_tensor({3, 3}, 5);
  ParamStore joint{{"a", a}, {"b", b}};
  AdamState sj;
  adam_step(joint, {{"a", ga}, {"b", gb}}, sj);
  ParamStore only_a{{"a", a}}, only_b{{"b", b}};
  AdamState sa, sb;
  adam_step(only_a, {{"a", ga}}, sa);
  adam_step(only_b, {{"b", gb}}, sb);
  EXPECT_EQ(joint.at("a"), only_a.at("a"));
  EXPECT_EQ(joint.at("b"), only_b.at("b"));
}

TEST(Adam, NonFiniteGradientThrowsWithoutSideEffects) {
  ParamStore p{{"a", Tensor(Shape{2}, {1.0, 2.0})}, {"b", Tensor(Shape{1}, {3.0})}};
  const ParamStore before = p;
  AdamState st;
  try {
    adam_step(p, {{"a", Tensor(Shape{2}, {0.1, 0.2})}, {"b", Tensor(Shape{1}, {NAN})}}, st);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find(" b "), std::string::npos);
  }
  EXPECT_EQ(p, before);
  EXPECT_EQ(st.t, 0u);
}

// ---------------------------------------------------------------- cross-entropy

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  const std::vector<int> labels{0, 3, 9};
  EXPECT_NEAR(cross_entropy_logits(Tensor(Shape{3, 10}), labels), std::log(10.0), 1e-15);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(CrossEntropy, ConfidentCorrectLogitGivesZero) {
  Tensor z(Shape{1, 4});
  z.at({0, 2}) = 800.0;
  EXPECT_EQ(cross_entropy_logits(z, std::vector<int>{2}), 0.0);
}

TEST(CrossEntropy, MatchesDirectFormula) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = random_tensor({6, 5}, rng, 3.0);
    std::vector<int> labels;
    for (int r = 0; r < 6; ++r) labels.push_back(static_cast<int>(rng.index(5)));
    double expect = 0.0;
    for (std::size_t r = 0; r < 6; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += std::exp(z.at({r, k}));
      expect += -std::log(std::exp(z.at({r, static_cast<std::size_t>(labels[r])})) / s);
    }
    EXPECT_NEAR(cross_entropy_logits(z, labels), expect / 6.0, 1e-12);
  }
}

TEST(CrossEntropy, LabelOutOfRangeThrows) {
  EXPECT_THROW(cross_entropy_logits(Tensor(Shape{1, 3}), std::vector<int>{3}), ShapeError);
  EXPECT_THROW(cross_entropy_logits(Tensor(Shape{1, 3}), std::vector<int>{-1}), ShapeError);
}

TEST(CrossEntropy, HeadGradcheck) {
  ParamStore p{{"w", random_tensor({4, 6}, 7)}, {"b", random_tensor({4}, 8)}};
  const Tensor x = random_tensor({5, 6}, 9);
  const std::vector<int> labels{0, 1, 3, 2, 1};
  const auto report = gradcheck(
      [&](TapeOps& ops) {
        auto z = ops.add_bias(ops.contract(ops.constant(x), ops.param("w"), {1}, {1}),
                              ops.param("b"));
        return ops.softmax_xent(z, labels, Reduction::kMean);
      },
      p);
  EXPECT_LE(report.max_rel_error, 1e-5);
}

// ---------------------------------------------------------------- GE2E

Tensor rows(std::initializer_list<std::initializer_list<double>> r) {
  std::vector<double> data;
  std::size_t cols = 0;
  for (const auto& row : r) {
    cols = row.size();
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r.size(), cols}, std::move(data));
}

TEST(Ge2e, OrthogonalSpeakersExample) {
  const Tensor e = rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const double each = std::log1p(std::exp(-10.0));
  EXPECT_NEAR(each, 4.53989e-5, 1e-10);
  EXPECT_NEAR(ge2e_loss(e, 2, 2, 10.0, -5.0), 4.0 * each, 1e-15);
  EXPECT_NEAR(ge2e_loss(e, 2, 2, 10.0, -5.0), 1.81596e-4, 1e-9);
}

TEST(Ge2e, IdenticalEmbeddingsGiveLogN) {
  const std::size_t n = 3, p = 4;
  Tensor e(Shape{n * p, 5});
  for (std::size_t r = 0; r < n * p; ++r)
    for (std::size_t k = 0; k < 5; ++k) e.at({r, k}) = 0.3 + 0.1 * static_cast<double>(k);
  EXPECT_NEAR(ge2e_loss(e, n, p, 10.0, -5.0), static_cast<double>(n * p) * std::log(3.0), 1e-12);
}

// With one utterance per speaker every centroid is its embedding, so scaling
// any single embedding leaves all cosines unchanged. With P >= 2 the scaled
// utterance also moves its own centroid and the loss changes.
TEST(Ge2e, InvariantToRescalingOneEmbedding) {
  const Tensor e = random_tensor({4, 3}, 11);
  const double base = ge2e_loss(e, 4, 1, 10.0, -5.0);
  for (std::size_t row = 0; row < 4; ++row) {
    Tensor scaled = e;
    for (std::size_t k = 0; k < 3; ++k) scaled.at({row, k}) *= 7.5;
    EXPECT_NEAR(ge2e_loss(scaled, 4, 1, 10.0, -5.0), base, 1e-12);
  }
  // Rescaling all utterances of one speaker keeps every cosine as well.
  const Tensor f = random_tensor({6, 4}, 12);
  Tensor g = f;
  for (std::size_t r = 2; r < 4; ++r)
    for (std::size_t k = 0; k < 4; ++k) g.at({r, k}) *= 0.2;
  EXPECT_NEAR(ge2e_loss(g, 3, 2, 10.0, -5.0), ge2e_loss(f, 3, 2, 10.0, -5.0), 1e-12);
}

TEST(Ge2e, NonNegativeAndDecreasingUnderSeparation) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    EXPECT_GE(ge2e_loss(random_tensor({8, 3}, rng), 4, 2, 10.0, -5.0), 0.0);
  }
  // Deform identical embeddings toward one-hot speaker directions.
  double prev = INFINITY;
  for (double lambda : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    Tensor e(Shape{6, 3});
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 3; ++k)
          e.at({j * 2 + i, k}) = (1.0 - lambda) / std::sqrt(3.0) + lambda * (k == j ? 1.0 : 0.0);
    const double loss = ge2e_loss(e, 3, 2, 10.0, -5.0);
    EXPECT_LT(loss, prev);
    prev = loss;
  }
}

TEST(Ge2e, ZeroEmbeddingIsError) {
  Tensor e = rows({{1, 0}, {0, 0}, {0, 1}, {0, 1}});
  EXPECT_THROW(ge2e_loss(e, 2, 2, 10.0, -5.0), NumericError);
  EXPECT_THROW(ge2e_loss(rows({{1, 0}, {1, 0}}), 1, 2, 10.0, -5.0), ConfigError);
}

TEST(Ge2e, Gradcheck) {
  ParamStore p{{"emb", random_tensor({9, 4}, 13)},
               {"w", Tensor(Shape{1}, {10.0})},
               {"b", Tensor(Shape{1}, {-5.0})}};
  const auto report = gradcheck(
      [](TapeOps& ops) {
        return ge2e_loss(ops, ops.param("emb"), 3, 3, ops.param("w"), ops.param("b"));
      },
      p);
  EXPECT_LE(report.max_rel_error, 1e-5) << report.worst_param;
  EXPECT_EQ(report.coords_checked, 38u);
}

// ---------------------------------------------------------------- EER

TEST(Eer, Examples) {
  EXPECT_EQ(eer(std::vector<double>{.9, .8}, std::vector<double>{.1, .2}), 0.0);
  const std::vector<double> same{.3, .6, .1, .9};
  EXPECT_DOUBLE_EQ(eer(same, same), 0.5);
  EXPECT_DOUBLE_EQ(eer(std::vector<double>{.8, .2}, std::vector<double>{.7, .3}), 0.5);
  EXPECT_EQ(eer(std::vector<double>{.1}, std::vector<double>{.9}), 1.0);
  EXPECT_THROW(eer(std::vector<double>{}, same), ConfigError);
}

// Brute force: the minimum over thresholds of max(FNR, FPR) bounds the EER
// from above, and the interpolated value sits between the two rates at the
// crossing.
TEST(Eer, AgreesWithExhaustiveSweep) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> same, diff;
    for (int i = 0; i < 15; ++i) same.push_back(rng.normal() + 1.0);
    for (int i = 0; i < 25; ++i) diff.push_back(rng.normal());
    double best = 1.0, lower = 0.0;
    std::vector<double> taus = same;
    taus.insert(taus.end(), diff.begin(), diff.end());
    for (double tau : taus) {
      double fnr = 0, fpr = 0;
      for (double s : same) fnr += s < tau;
      for (double d : diff) fpr += d >= tau;
      fnr /= 15.0;
      fpr /= 25.0;
      best = std::min(best, std::max(fnr, fpr));
      lower = std::max(lower, std::min(fnr, fpr));
    }
    const double e = eer(same, diff);
    EXPECT_LE(e, best + 1e-12);
    EXPECT_GE(e, lower - 1e-12);
  }
}

TEST(Eer, InvariantUnderMonotoneTransform) {
  Rng rng(22);
  std::vector<double> same, diff, same_t, diff_t;
  for (int i = 0; i < 30; ++i) same.push_back(rng.normal() + 0.8);
  for (int i = 0; i < 40; ++i) diff.push_back(rng.normal());
  for (double s : same) same_t.push_back(std::exp(3.0 * s) - 2.0);
  for (double d : diff) diff_t.push_back(std::exp(3.0 * d) - 2.0);
  EXPECT_EQ(eer(same, diff), eer(same_t, diff_t));
}

TEST(Eer, RandomEmbeddingsScoreAtChance) {
  Rng rng(23);
  const auto scores = verification_scores(random_tensor({40 * 10, 16}, rng), 40, 10);
  EXPECT_EQ(scores.same.size(), 400u);
  EXPECT_EQ(scores.diff.size(), 400u * 39);
  EXPECT_NEAR(eer(scores.same, scores.diff), 0.5, 0.05);
}

TEST(Eer, SeparatedEmbeddingsScorePerfectly) {
  Tensor e(Shape{3 * 4, 3});
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 4; ++i) e.at({j * 4 + i, j}) = 1.0 + 0.1 * static_cast<double>(i);
  const auto scores = verification_scores(e, 3, 4);
  EXPECT_EQ(eer(scores.same, scores.diff), 0.0);
}

// ---------------------------------------------------------------- model

TEST(Model, DenseGoldenCounts) {
  EXPECT_EQ(dense_model_param_count(CellKind::kLstm, 512, 4096, 256, false), 9570560u);
  EXPECT_EQ(dense_model_param_count(CellKind::kGru, 512, 4096, 256, false), 7212288u);
  EXPECT_EQ(dense_model_param_count(CellKind::kLstm, 256, 1, 10, false), 266762u);
  EXPECT_EQ(dense_model_param_count(CellKind::kGru, 256, 1, 10, false), 201482u);
  EXPECT_EQ(dense_model_param_count(CellKind::kLstm, 768, 40, 256, true), 2682114u);
  EXPECT_EQ(dense_model_param_count(CellKind::kGru, 768, 40, 256, true), 2063106u);
}

TEST(Model, InitializedStoreMatchesCount) {
  for (CellKind kind : {CellKind::kLstm, CellKind::kGru}) {
    for (HeadKind head : {HeadKind::kClassifier, HeadKind::kEmbedding}) {
      const ModelConfig m{CellConfig::make(kind, Parameterization::kDense, 12, 5), head, 7};
      const auto p = init_model(m, 1);
      EXPECT_EQ(param_element_count(p),
                dense_model_param_count(kind, 12, 5, 7, head == HeadKind::kEmbedding));
      EXPECT_NO_THROW(check_model_params(m, p));
    }
  }
  const ModelConfig m{CellConfig::make(CellKind::kLstm, Parameterization::kFused, 16, 9, 2, 3, 2),
                      HeadKind::kEmbedding, 4};
  auto p = init_model(m, 2);
  EXPECT_EQ(p.at("ge2e.w")[0], 10.0);
  EXPECT_EQ(p.at("ge2e.b")[0], -5.0);
  EXPECT_EQ(p.at("cell.W.core0").shape(), (Shape{4, 1, 1, 2}));
  p.erase("head.bias");
  EXPECT_THROW(check_model_params(m, p), ConfigError);
}

TEST(Model, OutputsIndependentOfChunkingAndWorkers) {
  const ModelConfig m{CellConfig::make(CellKind::kGru, Parameterization::kFused, 8, 6, 2, 2, 2),
                      HeadKind::kClassifier, 3};
  const auto p = init_model(m, 3);
  const Tensor x = random_tensor({10, 4, 6}, 4);
  const Tensor a = model_outputs(m, p, x, 4, 1);
  EXPECT_EQ(a, model_outputs(m, p, x, 4, 3));
  // Row results do not depend on the other rows of the chunk.
  EXPECT_NEAR(max_abs_diff(a, model_outputs(m, p, x, 10, 1)), 0.0, 1e-13);
}

TEST(Model, TapedForwardMatchesEagerAndGradchecks) {
  for (Parameterization param :
       {Parameterization::kDense, Parameterization::kSeparate, Parameterization::kFused}) {
    const ModelConfig m{CellConfig::make(CellKind::kLstm, param, 4, 6, 2, 2, 2),
                        HeadKind::kClassifier, 3};
    ParamStore p = init_model(m, 5);
    const Tensor x = random_tensor({2, 3, 6}, 6);
    const std::vector<int> labels{2, 0};
    const auto steps = time_major(x);
    const auto report = gradcheck(
        [&](TapeOps& ops) {
          return ops.softmax_xent(model_forward(ops, m, steps), labels, Reduction::kMean);
        },
        p, {.eps = 1e-5, .max_coords = 150, .seed = 1});
    EXPECT_LE(report.max_rel_error, 1e-5) << parameterization_name(param);
  }
}

// ---------------------------------------------------------------- training

ModelConfig toy_model(Parameterization param) {
  return {CellConfig::make(CellKind::kLstm, param, 8, 4, 2, 2, 2), HeadKind::kClassifier, 2};
}

TrainConfig toy_config() {
  TrainConfig c;
  c.epochs = 12;
  c.batch_size = 32;
  c.adam.lr = 0.01;
  c.patience = 0;
  c.seed = 3;
  return c;
}

TEST(TrainClassifier, LearnsToyTask) {
  const auto train = toy_sequences(256, 8, 4, 0.5, 1);
  const auto val = toy_sequences(128, 8, 4, 0.5, 2);
  for (Parameterization param : {Parameterization::kDense, Parameterization::kFused}) {
    const auto result = train_classifier(toy_model(param), toy_config(), train, val);
    const auto& h = result.history();
    ASSERT_EQ(h.size(), 24u);
    EXPECT_EQ(h.back().split, "val");
    EXPECT_GE(h[h.size() - 2].metric, 0.95) << parameterization_name(param);
    EXPECT_GE(evaluate_classifier(toy_model(param), result.checkpoint.params, train).metric, 0.95);
  }
}

bool same_history(const std::vector<MetricRow>& a, const std::vector<MetricRow>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch || a[i].step != b[i].step || a[i].split != b[i].split) return false;
    for (auto [x, y] : {std::pair{a[i].loss, b[i].loss}, {a[i].metric, b[i].metric},
                        {a[i].grad_norm_p50, b[i].grad_norm_p50},
                        {a[i].grad_norm_p95, b[i].grad_norm_p95}, {a[i].lr, b[i].lr}}) {
      if (std::abs(x - y) > tol) return false;
    }
  }
  return true;
}

TEST(TrainClassifier, SeedDeterminism) {
  const auto train = toy_sequences(96, 5, 4, 0.3, 1);
  const auto val = toy_sequences(32, 5, 4, 0.3, 2);
  auto cfg = toy_config();
  cfg.epochs = 3;
  const auto a = train_classifier(toy_model(Parameterization::kFused), cfg, train, val);
  const auto b = train_classifier(toy_model(Parameterization::kFused), cfg, train, val);
  EXPECT_TRUE(same_history(a.history(), b.history(), 0.0));
  EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
  cfg.seed = 4;
  const auto c = train_classifier(toy_model(Parameterization::kFused), cfg, train, val);
  EXPECT_NE(a.checkpoint.params, c.checkpoint.params);
}

TEST(TrainClassifier, WorkerCountDoesNotChangeResults) {
  const auto train = toy_sequences(64, 5, 4, 0.3, 1);
  const auto val = toy_sequences(32, 5, 4, 0.3, 2);
  auto cfg = toy_config();
  cfg.epochs = 2;
  cfg.shard_size = 8;
  cfg.eval_chunk = 8;
  const auto one = train_classifier(toy_model(Parameterization::kDense), cfg, train, val);
  cfg.workers = 3;
  const auto three = train_classifier(toy_model(Parameterization::kDense), cfg, train, val);
  EXPECT_EQ(one.checkpoint.params, three.checkpoint.params);
  EXPECT_TRUE(same_history(one.history(), three.history(), 0.0));
}

TEST(TrainClassifier, ZeroLearningRateFreezesParameters) {
  const auto train = toy_sequences(128, 6, 4, 0.3, 1);
  const auto val = toy_sequences(400, 6, 4, 0.3, 2);
  auto cfg = toy_config();
  cfg.epochs = 2;
  cfg.adam.lr = 0.0;
  const auto model = toy_model(Parameterization::kFused);
  const auto result = train_classifier(model, cfg, train, val);
  EXPECT_EQ(result.checkpoint.params, init_model(model, cfg.seed));
  EXPECT_EQ(result.history()[1].metric, result.history()[3].metric);
  // Untrained accuracy averaged over initializations is at chance.
  cfg.epochs = 1;
  double mean = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    mean += train_classifier(model, cfg, train, val).history().back().metric / 20.0;
  }
  EXPECT_NEAR(mean, 0.5, 0.1);
}

TEST(TrainClassifier, EarlyStoppingAndDecay) {
  const auto train = toy_sequences(64, 5, 4, 0.3, 1);
  const auto val = toy_sequences(32, 5, 4, 0.3, 2);
  auto cfg = toy_config();
  cfg.adam.lr = 0.0;  // validation never improves after the first epoch
  cfg.patience = 2;
  cfg.epochs = 10;
  const auto result = train_classifier(toy_model(Parameterization::kDense), cfg, train, val);
  const auto& st = result.checkpoint.state;
  EXPECT_TRUE(st.stopped);
  EXPECT_EQ(st.epoch, 3u);
  EXPECT_EQ(st.best_epoch, 1u);
  cfg.adam.lr = 0.01;
  cfg.patience = 4;
  cfg.epochs = 40;
  const auto long_run = train_classifier(toy_model(Parameterization::kDense), cfg, train, val);
  // Every logged lr is the initial lr times a power of 0.3.
  for (const auto& row : long_run.history()) {
    const double k = std::log(row.lr / 0.01) / std::log(0.3);
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(TrainClassifier, NonFiniteLossAborts) {
  auto train = toy_sequences(16, 4, 4, 0.3, 1);
  train.inputs.at({3, 1, 2}) = NAN;
  const auto val = toy_sequences(16, 4, 4, 0.3, 2);
  try {
    train_classifier(toy_model(Parameterization::kDense), toy_config(), train, val);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged at epoch 1"), std::string::npos);
  }
}

TEST(TrainClassifier, RejectsMismatchedData) {
  const auto val = toy_sequences(16, 4, 4, 0.3, 2);
  EXPECT_THROW(train_classifier(toy_model(Parameterization::kDense), toy_config(),
                                toy_sequences(16, 4, 5, 0.3, 1), val),
               ConfigError);
  auto bad = toy_sequences(16, 4, 4, 0.3, 1);
  bad.labels[0] = 7;
  EXPECT_THROW(train_classifier(toy_model(Parameterization::kDense), toy_config(), bad, val),
               ConfigError);
}

TEST(TrainClassifier, ResumeReproducesUninterruptedRun) {
  const auto train = toy_sequences(96, 5, 4, 0.3, 1);
  const auto val = toy_sequences(32, 5, 4, 0.3, 2);
  const auto model = toy_model(Parameterization::kFused);
  auto cfg = toy_config();
  cfg.epochs = 4;
  const auto full = train_classifier(model, cfg, train, val);

  const fs::path path = temp_path("ckpt.bin");
  cfg.epochs = 2;
  cfg.checkpoint_path = path;
  train_classifier(model, cfg, train, val);
  const Checkpoint mid = load_checkpoint(path);
  EXPECT_EQ(mid.state.epoch, 2u);
  cfg.epochs = 4;
  cfg.checkpoint_path.reset();
  const auto resumed = train_classifier(model, cfg, train, val, &mid);
  fs::remove(path);
  EXPECT_TRUE(same_history(full.history(), resumed.history(), 1e-10));
  for (const auto& [name, t] : full.checkpoint.params) {
    EXPECT_LE(max_abs_diff(t, resumed.checkpoint.params.at(name)), 1e-10) << name;
  }
}

TEST(TrainClassifier, WritesMetricsAndGradNorms) {
  const auto train = toy_sequences(64, 5, 4, 0.3, 1);
  const auto val = toy_sequences(32, 5, 4, 0.3, 2);
  auto cfg = toy_config();
  cfg.epochs = 2;
  cfg.metrics_path = temp_path("metrics.csv");
  cfg.grad_norms_path = temp_path("norms.csv");
  fs::remove(*cfg.metrics_path);
  fs::remove(*cfg.grad_norms_path);
  train_classifier(toy_model(Parameterization::kDense), cfg, train, val);
  std::ifstream in(*cfg.metrics_path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 2u + 1u + 4u);
  EXPECT_EQ(lines[0].rfind("# dataset source=toy(seed=1", 0), 0u);
  EXPECT_EQ(lines[2], MetricsWriter::header());
  EXPECT_EQ(lines[3].rfind("1,2,train,", 0), 0u);
  EXPECT_EQ(lines[6].rfind("2,4,val,", 0), 0u);
  std::ifstream norms(*cfg.grad_norms_path);
  std::size_t count = 0;
  for (std::string line; std::getline(norms, line);) ++count;
  EXPECT_EQ(count, 1u + 4u);
  fs::remove(*cfg.metrics_path);
  fs::remove(*cfg.grad_norms_path);
}

TEST(TrainClassifier, DataFractionSubsetsTraining) {
  const auto train = toy_sequences(100, 4, 4, 0.3, 1);
  const auto val = toy_sequences(16, 4, 4, 0.3, 2);
  auto cfg = toy_config();
  cfg.epochs = 1;
  cfg.batch_size = 10;
  cfg.data_fraction = 0.2;
  const auto result = train_classifier(toy_model(Parameterization::kDense), cfg, train, val);
  EXPECT_EQ(result.checkpoint.state.step, 2u);
}

// ---------------------------------------------------------------- verifier

ModelConfig speaker_model(Parameterization param, std::size_t input) {
  return {CellConfig::make(CellKind::kLstm, param, 16, input, 2, 2, 2), HeadKind::kEmbedding, 8};
}

TEST(TrainVerifier, SeparatesSyntheticSpeakers) {
  const auto all = synth_speakers(16, 6, 6, 8, 0.2, 0.5, 5);
  const auto train = take_speakers(all, 0, 12);
  const auto val = take_speakers(all, 12, 4);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.adam.lr = 0.01;
  cfg.patience = 0;
  cfg.seed = 2;
  cfg.speakers_per_batch = 4;
  cfg.utterances_per_speaker = 3;
  const auto model = speaker_model(Parameterization::kFused, 8);
  const auto result = train_verifier(model, cfg, train, val);
  const auto& h = result.history();
  ASSERT_EQ(h.size(), 60u);
  EXPECT_LT(h[58].loss, 0.5 * h[0].loss);
  const auto ev = evaluate_verifier(model, result.checkpoint.params, val, 4);
  EXPECT_LE(ev.metric, 0.1);
  EXPECT_GE(result.checkpoint.params.at("ge2e.w")[0], 1e-6);
  EXPECT_EQ(h.back().metric, ev.metric);
  EXPECT_EQ(h.back().loss, ev.loss);
}

TEST(TrainVerifier, SeedDeterminism) {
  const auto all = synth_speakers(8, 4, 4, 8, 0.3, 0.3, 6);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.speakers_per_batch = 3;
  cfg.utterances_per_speaker = 2;
  const auto model = speaker_model(Parameterization::kDense, 8);
  const auto a = train_verifier(model, cfg, take_speakers(all, 0, 6), take_speakers(all, 6, 2));
  const auto b = train_verifier(model, cfg, take_speakers(all, 0, 6), take_speakers(all, 6, 2));
  EXPECT_EQ(a.checkpoint.params, b.checkpoint.params);
  EXPECT_TRUE(same_history(a.history(), b.history(), 0.0));
}

TEST(TrainVerifier, SingleSpeakerIsConfigError) {
  const auto all = synth_speakers(3, 4, 4, 8, 0.3, 0.3, 6);
  const auto model = speaker_model(Parameterization::kDense, 8);
  EXPECT_THROW(train_verifier(model, TrainConfig{}, take_speakers(all, 0, 1), take_speakers(all, 1, 2)),
               ConfigError);
  const ModelConfig classifier{model.cell, HeadKind::kClassifier, 8};
  EXPECT_THROW(train_verifier(classifier, TrainConfig{}, take_speakers(all, 0, 2),
                              take_speakers(all, 1, 2)),
               ConfigError);
}

TEST(TrainVerifier, FractionSweepTrainsOnSubsets) {
  const auto all = synth_speakers(14, 4, 4, 8, 0.3, 0.3, 7);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.speakers_per_batch = 2;
  cfg.utterances_per_speaker = 2;
  const std::vector<double> fractions{0.2, 1.0};
  const auto points = verifier_fraction_sweep(speaker_model(Parameterization::kDense, 8), cfg,
                                              take_speakers(all, 0, 10), take_speakers(all, 10, 4),
                                              fractions);
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].fraction, 0.2);
  for (const auto& pt : points) {
    EXPECT_TRUE(std::isfinite(pt.train.loss));
    EXPECT_TRUE(std::isfinite(pt.val.loss));
  }
  const auto chosen = select_speakers(all, {3, 1});
  EXPECT_EQ(chosen.speaker, (std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1}));
  EXPECT_EQ(chosen.inputs.at({4, 0, 0}), all.inputs.at({4, 0, 0}));
}

// ---------------------------------------------------------------- checkpoints

Checkpoint sample_checkpoint(CellKind kind, Parameterization param) {
  const ModelConfig m{CellConfig::make(kind, param, 8, 6, 2, 2, 2), HeadKind::kEmbedding, 4};
  ParamStore p = init_model(m, 9);
  AdamState adam;
  adam.t = 3;
  for (const auto& [name, t] : p) {
    adam.m[name] = random_tensor(t.shape(), 1);
    adam.v[name] = random_tensor(t.shape(), 2);
  }
  TrainingState st;
  st.epoch = 2;
  st.step = 17;
  st.lr = 3e-4;
  st.rng_state = Rng(4).state();
  st.history.push_back({1, 9, "val", 0.5, 0.25, 1.0, 2.0, 1e-3, 12.5});
  st.grad_norms.push_back({1, 9, 0.75});
  return make_checkpoint(m, std::move(p), std::move(adam), std::move(st), "cell=lstm\nseed=1\n");
}

TEST(Checkpoint, RoundTripIsExactForAllVariants) {
  for (CellKind kind : {CellKind::kLstm, CellKind::kGru}) {
    for (Parameterization param :
         {Parameterization::kDense, Parameterization::kSeparate, Parameterization::kFused}) {
      const Checkpoint ck = sample_checkpoint(kind, param);
      const std::string bytes = serialize_checkpoint(ck);
      const Checkpoint back = parse_checkpoint(bytes);
      EXPECT_EQ(back.params, ck.params);
      EXPECT_EQ(back.adam.m, ck.adam.m);
      EXPECT_EQ(back.adam.v, ck.adam.v);
      EXPECT_EQ(back.state.rng_state, ck.state.rng_state);
      EXPECT_EQ(back.config_text, ck.config_text);
      EXPECT_EQ(serialize_checkpoint(back), bytes);
    }
  }
}

TEST(Checkpoint, SaveLoadThroughFile) {
  const Checkpoint ck = sample_checkpoint(CellKind::kGru, Parameterization::kFused);
  const fs::path path = temp_path("c.bin");
  save_checkpoint(ck, path);
  EXPECT_FALSE(fs::exists(fs::path(path.string() + ".tmp")));
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(ck));
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, TruncatedOrCorruptIsFormatError) {
  const std::string bytes = serialize_checkpoint(sample_checkpoint(CellKind::kLstm, Parameterization::kSeparate));
  for (std::size_t keep : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2,
                           bytes.size() - 1}) {
    EXPECT_THROW(parse_checkpoint(bytes.substr(0, keep)), FormatError) << keep;
  }
  std::string flipped = bytes;
  flipped[bytes.size() / 3] ^= 0x10;
  EXPECT_THROW(parse_checkpoint(flipped), FormatError);
}

// Rewrites the checksum so only the targeted field is wrong.
std::string reseal(std::string bytes) {
  bytes.resize(bytes.size() - 8);
  BinaryWriter w;
  w.raw(bytes);
  w.u64(fnv1a(bytes.data(), bytes.size()));
  return w.bytes();
}

TEST(Checkpoint, VersionAndTagMismatchesAreVersionErrors) {
  Checkpoint ck = sample_checkpoint(CellKind::kLstm, Parameterization::kFused);
  std::string bytes = serialize_checkpoint(ck);
  bytes[8] = 2;  // version field follows the magic
  EXPECT_THROW(parse_checkpoint(reseal(bytes)), VersionError);

  ck.gate_order = "lstm:i,f,g,o";
  EXPECT_THROW(parse_checkpoint(serialize_checkpoint(ck)), VersionError);
  ck = sample_checkpoint(CellKind::kGru, Parameterization::kDense);
  ck.bias_convention = "single-bias";
  EXPECT_THROW(parse_checkpoint(serialize_checkpoint(ck)), VersionError);
  EXPECT_EQ(gate_order_tag(CellKind::kLstm), "lstm:c,u,f,o");
  EXPECT_EQ(gate_order_tag(CellKind::kGru), "gru:h,u,r");
}

}  // namespace
}  // namespace ttrnn

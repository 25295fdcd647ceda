// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "ttrnn/config.hpp"
#include "ttrnn/random.hpp"
#include "ttrnn/tape.hpp"
#include "ttrnn/training.hpp"
#include "ttrnn/tt_matrix.hpp"

namespace ttrnn {
namespace {

using Dims = std::vector<std::size_t>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

TTMatrix random_tt(const Dims& rows, const Dims& cols, const Dims& ranks, Rng& rng) {
  std::vector<Tensor> cores;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    cores.push_back(random_tensor({rows[k], cols[k], ranks[k], ranks[k + 1]}, rng));
  }
  return TTMatrix::from_tensors(std::move(cores));
}

std::string fmt(const char* spec, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), spec, args...);
  return buf;
}

std::uint64_t store_weight_count(const ParamStore& store) {
  std::uint64_t n = 0;
  for (const auto& [name, t] : store) {
    if (name.find("bias") == std::string::npos) n += t.size();
  }
  return n;
}

// ---------------------------------------------------------------- 1

Outcome dense_golden_counts() {
  struct Case {
    const char* name;
    CellKind kind;
    std::size_t hidden, input, outputs;
    bool ge2e;
    std::uint64_t want;
  };
  const Case cases[] = {
      {"lstm D=512 M=4096", CellKind::kLstm, 512, 4096, 256, false, 9570560},
      {"gru D=512 M=4096", CellKind::kGru, 512, 4096, 256, false, 7212288},
      {"lstm D=256 M=1", CellKind::kLstm, 256, 1, 10, false, 266762},
      {"gru D=256 M=1", CellKind::kGru, 256, 1, 10, false, 201482},
      {"lstm D=768 M=40 ge2e", CellKind::kLstm, 768, 40, 256, true, 2682114},
      {"gru D=768 M=40 ge2e", CellKind::kGru, 768, 40, 256, true, 2063106},
  };
  Outcome o{true, ""};
  for (const Case& c : cases) {
    const std::uint64_t got = dense_model_param_count(c.kind, c.hidden, c.input, c.outputs, c.ge2e);
    if (got != c.want) {
      o.pass = false;
      o.detail += fmt("%s %llu != %llu; ", c.name, static_cast<unsigned long long>(got),
                      static_cast<unsigned long long>(c.want));
    }
  }
  // Enumerate one initialized store as well; D=256, M=1 is small enough.
  for (CellKind kind : {CellKind::kLstm, CellKind::kGru}) {
    const ModelConfig m{CellConfig::make(kind, Parameterization::kDense, 256, 1),
                        HeadKind::kClassifier, 10};
    const std::uint64_t got = param_element_count(init_model(m, 1));
    if (got != dense_model_param_count(kind, 256, 1, 10, false)) {
      o.pass = false;
      o.detail += fmt("%s store enumerates %llu; ", cell_kind_name(kind),
                      static_cast<unsigned long long>(got));
    }
  }
  if (o.pass) o.detail = "6 golden totals exact, D=256 M=1 stores enumerate to the same totals";
  return o;
}

// ---------------------------------------------------------------- 2

Outcome formula_consistency() {
  Rng rng(2002);
  int mismatches = 0;
  std::string first;
  for (int trial = 0; trial < 20; ++trial) {
    const CellKind kind = rng.index(2) ? CellKind::kGru : CellKind::kLstm;
    const std::size_t n = 1 + rng.index(3);
    Dims hd(n), md(n);
    std::size_t hidden = 1, input = 1;
    for (std::size_t k = 0; k < n; ++k) {
      hd[k] = 1 + rng.index(4);
      md[k] = 1 + rng.index(4);
      hidden *= hd[k];
      input *= md[k];
    }
    const std::size_t rank = 1 + rng.index(4);
    const std::size_t rank0 = 1 + rng.index(4);
    const std::uint64_t g = gate_count(kind);
    for (Parameterization p :
         {Parameterization::kDense, Parameterization::kSeparate, Parameterization::kFused}) {
      CellConfig c = CellConfig::make(kind, p, hidden, input, n, rank, rank0);
      if (p != Parameterization::kDense) {
        c.hidden_dims = hd;
        c.input_dims = md;
      }
      ParamStore store;
      store_cell_params(init_cell(c, trial), store, "cell");
      const std::uint64_t enumerated = store_weight_count(store);
      std::uint64_t formula = 0;
      if (p == Parameterization::kDense) {
        formula = param_count_dense(g, hidden, input);
      } else if (p == Parameterization::kSeparate) {
        formula = param_count_separate(g, hd, md, c.chain_ranks());
      } else {
        Dims ranks = c.chain_ranks();
        ranks.front() = rank0;
        // Two stored gate cores against the single gate term of the formula.
        formula = param_count_fused(g, rank0, hd, md, ranks) + g * rank0;
      }
      if (formula != enumerated) {
        if (mismatches++ == 0) {
          first = fmt("trial %d %s/%s formula %llu enumerated %llu", trial, cell_kind_name(kind),
                      parameterization_name(p), static_cast<unsigned long long>(formula),
                      static_cast<unsigned long long>(enumerated));
        }
      }
    }
  }
  if (mismatches == 0) return {true, "20 configs x {dense, tt-sep, tt-fused}: all counts exact"};
  return {false, fmt("%d mismatches, first: %s", mismatches, first.c_str())};
}

// ---------------------------------------------------------------- 3

Outcome tt_kernels() {
  Rng rng(3003);
  double worst_matvec = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Dims rows, cols;
    std::size_t size = 1;
    const std::size_t n = 1 + rng.index(4);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t r = 1 + rng.index(4), c = 1 + rng.index(4);
      if (size * r * c > 4096) break;
      rows.push_back(r);
      cols.push_back(c);
      size *= r * c;
    }
    Dims ranks(rows.size() + 1, 1);
    for (std::size_t k = 1; k < rows.size(); ++k) ranks[k] = 1 + rng.index(4);
    const TTMatrix t = random_tt(rows, cols, ranks, rng);
    const Tensor x = random_tensor({1 + rng.index(4), t.cols()}, rng);
    const Tensor want = contract(x, tt_to_dense(t), {1}, {1});
    worst_matvec = std::max(worst_matvec, relative_error(tt_matvec(t, x), want));
  }
  double worst_svd = 0.0;
  for (const auto& [rows, cols] : {std::pair{Dims{4, 4}, Dims{4, 4}}, std::pair{Dims{2, 3, 4}, Dims{3, 2, 2}},
                                   std::pair{Dims{8, 8}, Dims{2, 7}}}) {
    std::size_t r = 1, c = 1;
    for (std::size_t v : rows) r *= v;
    for (std::size_t v : cols) c *= v;
    const Tensor w = random_tensor({r, c}, rng);
    const TTMatrix t = tt_svd(w, rows, cols, Dims(rows.size() - 1, 0), 0.0);
    worst_svd = std::max(worst_svd, relative_error(tt_to_dense(t), w));
  }
  bool monotone = true;
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor({16, 16}, rng);
    double prev = INFINITY;
    for (std::size_t cap = 1; cap <= 16; ++cap) {
      const double err = relative_error(tt_to_dense(tt_svd(w, Dims{4, 4}, Dims{4, 4}, Dims{cap}, 0.0)), w);
      if (err > prev + 1e-12) monotone = false;
      prev = err;
    }
  }
  const bool pass = worst_matvec <= 1e-12 && worst_svd <= 1e-10 && monotone;
  return {pass, fmt("matvec max rel err %.2e (<= 1e-12), svd round trip %.2e (<= 1e-10), rank-cap "
                    "error %s",
                    worst_matvec, worst_svd, monotone ? "monotone" : "NOT monotone")};
}

// ---------------------------------------------------------------- 4

Outcome fused_equivalence() {
  Rng rng(4004);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const CellKind kind = trial % 2 ? CellKind::kGru : CellKind::kLstm;
    const CellConfig c =
        CellConfig::make(kind, Parameterization::kFused, 4 + 2 * rng.index(4), 1 + rng.index(8),
                         2, 1 + rng.index(3), 1 + rng.index(4));
    CellParams params = init_cell(c, 40 + trial);
    auto& f = std::get<FusedTTCellParams>(params);
    f.bias = random_tensor(f.bias.shape(), rng, 0.5);
    if (kind == CellKind::kGru) f.bias_hidden = random_tensor(f.bias.shape(), rng, 0.5);

    // Dense cell assembled gate by gate from the mixtures.
    const std::size_t g = c.gates();
    Tensor w(Shape{g * c.hidden, c.input}), u(Shape{g * c.hidden, c.hidden});
    for (std::size_t e = 0; e < g; ++e) {
      const Tensor we = gate_matrix_mixture(f.w, e), ue = gate_matrix_mixture(f.u, e);
      std::copy(we.data().begin(), we.data().end(), w.data().begin() + e * we.size());
      std::copy(ue.data().begin(), ue.data().end(), u.data().begin() + e * ue.size());
    }
    const DenseCellParams dense{kind, w, u, f.bias, f.bias_hidden};

    const std::size_t batch = 1 + rng.index(3);
    const Tensor x = random_tensor({batch, c.input}, rng);
    CellState st{random_tensor({batch, c.hidden}, rng, 0.5), std::nullopt};
    if (kind == CellKind::kLstm) st.c = random_tensor({batch, c.hidden}, rng, 0.5);
    const CellState got = tt_cell_step_fused(f, x, st);
    const CellState want = cell_step(dense, x, st);
    worst = std::max(worst, relative_error(got.h, want.h));
    if (got.c) worst = std::max(worst, relative_error(*got.c, *want.c));
  }
  return {worst <= 1e-10, fmt("20 configs, max rel err %.2e (<= 1e-10)", worst)};
}

// ---------------------------------------------------------------- 5

Outcome gradients() {
  const GradcheckOptions opts{.eps = 1e-5, .max_coords = 100000, .seed = 5};
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](const std::string& name, const GradcheckReport& r) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name + " " + r.worst_param;
    }
  };
  Rng rng(5005);
  for (CellKind kind : {CellKind::kLstm, CellKind::kGru}) {
    for (Parameterization p :
         {Parameterization::kDense, Parameterization::kSeparate, Parameterization::kFused}) {
      const CellConfig c = CellConfig::make(kind, p, 6, 4, 2, 2, 2);
      ParamStore params;
      store_cell_params(init_cell(c, 51), params, "cell");
      for (auto& [name, t] : params) {
        if (name.find("bias") != std::string::npos) t = random_tensor(t.shape(), rng, 0.3);
      }
      std::vector<Tensor> xs;
      for (int t = 0; t < 3; ++t) xs.push_back(random_tensor({2, 4}, rng));
      const Tensor probe = random_tensor({2, 6}, rng);
      const auto report = gradcheck(
          [&](TapeOps& ops) {
            CellProgram<TapeOps> cell(ops, c, "cell");
            auto state = cell.zero_state(2);
            for (const auto& x : xs) state = cell.step(state, ops.constant(x));
            return ops.sum(ops.hadamard(state.h, ops.constant(probe)));
          },
          params, opts);
      record(std::string(cell_kind_name(kind)) + "/" + parameterization_name(p), report);
    }
  }
  {
    ParamStore params{{"emb", random_tensor({12, 5}, rng)},
                      {"ge2e.w", Tensor(Shape{1}, {10.0})},
                      {"ge2e.b", Tensor(Shape{1}, {-5.0})}};
    record("ge2e", gradcheck(
                       [](TapeOps& ops) {
                         return ge2e_loss(ops, ops.param("emb"), 4, 3, ops.param("ge2e.w"),
                                          ops.param("ge2e.b"));
                       },
                       params, opts));
  }
  {
    ParamStore params{{"w", random_tensor({5, 6}, rng)}, {"b", random_tensor({5}, rng)}};
    const Tensor h = random_tensor({4, 6}, rng);
    const std::vector<int> labels{0, 3, 4, 1};
    record("cross-entropy",
           gradcheck(
               [&](TapeOps& ops) {
                 auto logits = ops.add_bias(ops.contract(ops.constant(h), ops.param("w"), {1}, {1}),
                                            ops.param("b"));
                 return ops.softmax_xent(logits, labels, Reduction::kMean);
               },
               params, opts));
  }
  return {worst <= 1e-5, fmt("6 cells x 3 steps + ge2e + cross-entropy, max rel err %.2e at %s "
                             "(<= 1e-5)",
                             worst, worst_name.c_str())};
}

// ---------------------------------------------------------------- 6

Outcome compression() {
  CellConfig c = CellConfig::make(CellKind::kLstm, Parameterization::kFused, 256, 1, 2, 4, 4);
  c.hidden_dims = {16, 16};
  c.input_dims = {1, 1};
  const std::uint64_t fused = cell_weight_count(init_cell(c, 6));
  const std::uint64_t dense = param_count_dense(4, 256, 1);
  return {30 * fused <= dense,
          fmt("fused recurrent params %llu, dense %llu, ratio %.1fx (>= 30x)",
              static_cast<unsigned long long>(fused), static_cast<unsigned long long>(dense),
              static_cast<double>(dense) / static_cast<double>(fused))};
}

// ---------------------------------------------------------------- 7

RunConfig mnist_config(const char* param, std::uint64_t seed) {
  return RunConfig::from_pairs({{"task", "mnist"},
                                {"param", param},
                                {"cell", "lstm"},
                                {"hidden", "64"},
                                {"cores", "2"},
                                {"rank", "4"},
                                {"rank0", "4"},
                                {"downsample", "2"},
                                {"mnist-train", "5000"},
                                {"mnist-val", "1000"},
                                {"mnist-test", "1000"},
                                {"epochs", "15"},
                                {"batch", "32"},
                                {"lr", "0.005"},
                                {"seed", std::to_string(seed)}});
}

double mnist_test_accuracy(const RunConfig& rc, const ClassifierSplits& data) {
  const ModelConfig model = rc.model();
  const auto result = train_classifier(model, rc.train_config(), data.train, data.val);
  return evaluate_classifier(model, result.checkpoint.params, *data.test).metric;
}

Outcome mnist() {
  const ClassifierSplits data = load_classifier_data(mnist_config("dense", 1));
  if (data.train.steps() != 14 || data.train.features() != 14) {
    return {false, "unexpected MNIST sequence shape"};
  }
  int passing = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const double fused = mnist_test_accuracy(mnist_config("tt-fused", seed), data);
    const double dense = mnist_test_accuracy(mnist_config("dense", seed), data);
    const bool ok = fused >= 0.85 && dense - fused <= 0.05;
    passing += ok;
    detail += fmt("seed %llu fused %.3f dense %.3f %s; ", static_cast<unsigned long long>(seed),
                  fused, dense, ok ? "ok" : "miss");
  }
  return {passing >= 2, detail + fmt("%d/3 seeds pass (need 2; fused >= 0.85, within 0.05)", passing)};
}

// ---------------------------------------------------------------- 8, 9

RunConfig speaker_config(const char* param, std::uint64_t seed) {
  return RunConfig::from_pairs({{"task", "synth-speaker"},
                                {"param", param},
                                {"cell", "lstm"},
                                {"hidden", "64"},
                                {"outputs", "32"},
                                {"cores", "2"},
                                {"rank", "4"},
                                {"rank0", "4"},
                                {"speakers", "20"},
                                {"per-speaker", "10"},
                                {"sep", "0.5"},
                                {"noise", "0.3"},
                                {"epochs", "30"},
                                {"lr", "0.005"},
                                {"seed", std::to_string(seed)}});
}

Outcome verification() {
  const RunConfig rc = speaker_config("tt-fused", 1);
  const SpeakerSplits data = load_speaker_data(rc);
  const auto result = train_verifier(rc.model(), rc.train_config(), data.train, data.val);
  const Evaluation val = evaluate_verifier(rc.model(), result.checkpoint.params, data.val,
                                           rc.speakers_per_batch);
  // Control: Gaussian embeddings with the same N, P and width carry no
  // speaker information. A single 20 x 10 draw spreads by several points, so
  // the control is the mean over independent draws.
  Rng rng(8008);
  double control = 0.0, lo = 1.0, hi = 0.0;
  const int draws = 20;
  for (int i = 0; i < draws; ++i) {
    const Tensor random = random_tensor({rc.speakers * rc.per_speaker, 32}, rng);
    const VerificationScores scores = verification_scores(random, rc.speakers, rc.per_speaker);
    const double e = eer(scores.same, scores.diff);
    control += e / draws;
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  const bool pass = val.metric <= 0.02 && std::abs(control - 0.5) <= 0.05;
  return {pass, fmt("val EER %.4f on %zu held-out speakers (<= 0.02), random-embedding EER mean "
                    "%.4f over %d draws, range [%.3f, %.3f] (mean 0.50 +- 0.05)",
                    val.metric, data.val.num_speakers, control, draws, lo, hi)};
}

Outcome regularization() {
  int passing = 0;
  std::string detail;
  const double fraction[] = {0.2};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    double gap[2];
    int i = 0;
    for (const char* param : {"tt-fused", "dense"}) {
      const RunConfig rc = speaker_config(param, seed);
      const SpeakerSplits data = load_speaker_data(rc);
      const auto points =
          verifier_fraction_sweep(rc.model(), rc.train_config(), data.train, data.val, fraction);
      gap[i++] = points.front().val.loss - points.front().train.loss;
    }
    const bool ok = gap[0] <= gap[1];
    passing += ok;
    detail += fmt("seed %llu gap fused %.4f dense %.4f; ", static_cast<unsigned long long>(seed),
                  gap[0], gap[1]);
  }
  return {passing >= 2, detail + fmt("%d/3 seeds with fused gap <= dense gap (need 2)", passing)};
}

// ---------------------------------------------------------------- 10

Outcome flops() {
  CellConfig fused = CellConfig::make(CellKind::kLstm, Parameterization::kFused, 512, 4096, 2, 2, 2);
  const auto params = std::get<FusedTTCellParams>(init_cell(fused, 10));
  const std::uint64_t tt =
      flop_count_matvec(params.w.matrix(), 1) + flop_count_matvec(params.u.matrix(), 1);
  const std::uint64_t dense = param_count_dense(4, 512, 4096);
  // Instrumented count of the fused matvecs agrees with the formula.
  MacCounter counter;
  tt_matvec(params.w.matrix(), Tensor(Shape{1, 4096}));
  tt_matvec(params.u.matrix(), Tensor(Shape{1, 512}));
  const bool counted = counter.count() == tt;
  return {counted && 4 * tt < dense,
          fmt("fused %llu MACs (instrumented %s), dense %llu, ratio %.4f (< 0.25)",
              static_cast<unsigned long long>(tt), counted ? "agrees" : "DISAGREES",
              static_cast<unsigned long long>(dense),
              static_cast<double>(tt) / static_cast<double>(dense))};
}

}  // namespace
}  // namespace ttrnn

int main(int argc, char** argv) {
  using namespace ttrnn;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double limit_s;
  };
  const Criterion criteria[] = {
      {1, "dense parameter-count golden values", dense_golden_counts, 1},
      {2, "count formulas match enumerated elements", formula_consistency, 30},
      {3, "TT kernel oracles", tt_kernels, 30},
      {4, "fused cell equals mixture dense cell", fused_equivalence, 30},
      {5, "gradient checks", gradients, 120},
      {6, "fused recurrent compression >= 30x", compression, 1},
      {7, "MNIST 14x14 fused vs dense", mnist, 1200},
      {8, "synthetic speaker verification EER", verification, 600},
      {9, "regularization gap at 20% data", regularization, 1200},
      {10, "fused eval FLOPs < 25% of dense", flops, 30},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt(" (runtime over the %.0f s limit)", c.limit_s);
    }
    failures += !o.pass;
    std::printf("criterion %2d %s: %s [%.1f s / %.0f s] %s\n", c.id, o.pass ? "PASS" : "FAIL",
                c.name, secs, c.limit_s, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

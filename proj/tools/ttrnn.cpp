// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// ttrnn command-line tool: params, bench, gradcheck, train, eval, inspect.
//
// Exit codes: 0 success, 2 validation failure, 3 configuration error,
// 4 I/O or checkpoint format error, 1 anything else.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ttrnn/config.hpp"
#include "ttrnn/random.hpp"
#include "ttrnn/tape.hpp"
#include "ttrnn/training.hpp"
#include "ttrnn/tt_matrix.hpp"

namespace ttrnn {
namespace {

namespace fs = std::filesystem;

constexpr int kExitValidation = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;

struct ValidationFailure : Error {
  using Error::Error;
};

struct Options {
  std::string config_file;
  std::map<std::string, std::string> flags;
  std::string checkpoint;
  std::string resume;
  std::string inject_fault = "none";
  std::string sweep;
};

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split_list(s)) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw ConfigError("--sweep: bad fraction '" + part + "'");
    }
  }
  return out;
}

// Defaults, then the config file, then explicit flags.
std::map<std::string, std::string> merged_pairs(const Options& o, CLI::App* sub) {
  std::map<std::string, std::string> pairs;
  if (!o.config_file.empty()) pairs = read_config_file(o.config_file);
  for (const auto& key : config_keys()) {
    if (sub->get_option("--" + key.name)->count() > 0) pairs[key.name] = o.flags.at(key.name);
  }
  return pairs;
}

// One RunConfig per comma-separated --param value.
std::vector<RunConfig> expand_params(std::map<std::string, std::string> pairs) {
  std::vector<RunConfig> out;
  const auto it = pairs.find("param");
  const std::vector<std::string> params =
      it == pairs.end() ? std::vector<std::string>{"dense"} : split_list(it->second);
  if (params.empty()) throw ConfigError("--param is empty");
  for (const auto& p : params) {
    pairs["param"] = p;
    out.push_back(RunConfig::from_pairs(pairs));
  }
  return out;
}

void warn(const RunConfig& c) {
  for (const auto& w : c.warnings()) std::cerr << "warning: " << w << "\n";
}

fs::path out_dir(const RunConfig& c) {
  const fs::path dir = c.out.empty() ? fs::path("ttrnn_out") : fs::path(c.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

class CsvFile {
 public:
  explicit CsvFile(const fs::path& path) : out_(path) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

// ---------------------------------------------------------------- params

struct CountRow {
  std::string component;
  std::uint64_t formula;
  std::uint64_t actual;
  std::uint64_t dense;
};

std::vector<CountRow> count_rows(const ModelConfig& m, const ParamStore& params) {
  const CellConfig& c = m.cell;
  const std::uint64_t g = c.gates();
  std::uint64_t weights = 0, biases = 0, head = 0, ge2e = 0;
  for (const auto& [name, t] : params) {
    if (name == "cell.bias" || name == "cell.bias_hidden") {
      biases += t.size();
    } else if (name.rfind("cell.", 0) == 0) {
      weights += t.size();
    } else if (name.rfind("head.", 0) == 0) {
      head += t.size();
    } else {
      ge2e += t.size();
    }
  }
  const std::uint64_t bias_formula = (c.dual_bias() ? 2 : 1) * g * c.hidden;
  const std::uint64_t head_formula = m.outputs * (c.hidden + 1);
  const std::uint64_t ge2e_formula = m.head == HeadKind::kEmbedding ? 2 : 0;
  std::vector<CountRow> rows{
      {"recurrent weights", cell_weight_formula(c), weights, param_count_dense(g, c.hidden, c.input)},
      {"biases", bias_formula, biases, bias_formula},
      {"head", head_formula, head, head_formula},
  };
  if (ge2e_formula > 0 || ge2e > 0) rows.push_back({"ge2e scalars", ge2e_formula, ge2e, 2});
  CountRow total{"total", 0, 0, 0};
  for (const auto& r : rows) {
    total.formula += r.formula;
    total.actual += r.actual;
    total.dense += r.dense;
  }
  rows.push_back(total);
  return rows;
}

std::string describe(const ModelConfig& m) {
  const CellConfig& c = m.cell;
  std::ostringstream os;
  os << cell_kind_name(c.kind) << ' ' << parameterization_name(c.param) << " D=" << c.hidden
     << " M=" << c.input;
  if (c.param != Parameterization::kDense) {
    auto dims = [](const std::vector<std::size_t>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "x" : "") + std::to_string(v[i]);
      return s;
    };
    os << " cores=" << c.cores() << " rows=" << dims(c.hidden_dims)
       << " cols=" << dims(c.input_dims) << " ranks=" << dims(c.chain_ranks());
    if (c.param == Parameterization::kFused) os << " r0=" << c.rank0;
  }
  os << ' ' << head_kind_name(m.head) << '=' << m.outputs;
  return os.str();
}

void print_counts(const std::vector<CountRow>& rows) {
  std::printf("  %-18s %14s %14s %14s %12s\n", "component", "formula", "actual", "dense",
              "compression");
  for (const auto& r : rows) {
    const double ratio = r.actual ? static_cast<double>(r.dense) / static_cast<double>(r.actual) : 0.0;
    std::printf("  %-18s %14llu %14llu %14llu %12s\n", r.component.c_str(),
                static_cast<unsigned long long>(r.formula), static_cast<unsigned long long>(r.actual),
                static_cast<unsigned long long>(r.dense), fmt(ratio, "%.2f").c_str());
  }
}

int cmd_params(const std::vector<RunConfig>& configs) {
  std::optional<CsvFile> csv;
  if (!configs.front().out.empty()) {
    csv.emplace(out_dir(configs.front()) / "params.csv");
    csv->row({"config", "component", "formula", "actual", "dense", "compression"});
  }
  for (const auto& rc : configs) {
    warn(rc);
    const ModelConfig m = rc.model();
    const auto rows = count_rows(m, init_model(m, rc.seed));
    std::printf("%s\n", describe(m).c_str());
    print_counts(rows);
    if (m.cell.param == Parameterization::kFused) {
      std::printf("  (formula counts one gate core; the input and hidden stacks each store one,"
                  " +%llu)\n",
                  static_cast<unsigned long long>(m.cell.gates() * m.cell.rank0));
    }
    if (csv) {
      for (const auto& r : rows) {
        csv->row({describe(m), r.component, std::to_string(r.formula), std::to_string(r.actual),
                  std::to_string(r.dense),
                  fmt(static_cast<double>(r.dense) / static_cast<double>(std::max<std::uint64_t>(1, r.actual)),
                      "%.6f")});
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------- bench

struct Timing {
  double mean = 0.0;
  double std = 0.0;
};

template <class F>
Timing time_repeats(std::size_t repeats, F&& f) {
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                     .count());
  }
  Timing t;
  for (double v : ms) t.mean += v / static_cast<double>(ms.size());
  if (ms.size() > 1) {
    double s = 0.0;
    for (double v : ms) s += (v - t.mean) * (v - t.mean);
    t.std = std::sqrt(s / static_cast<double>(ms.size() - 1));
  }
  return t;
}

int cmd_bench(const std::vector<RunConfig>& configs) {
  std::optional<CsvFile> csv;
  const std::vector<std::string> header{"config", "batch", "steps", "repeats", "train_ms_mean",
                                        "train_ms_std", "eval_ms_mean", "eval_ms_std",
                                        "eval_macs", "train_params"};
  if (!configs.front().out.empty()) {
    csv.emplace(out_dir(configs.front()) / "bench.csv");
    csv->row(header);
  }
  std::printf("%-70s %20s %20s %14s\n", "config", "train step (ms)", "eval step (ms)", "eval MACs");
  for (const auto& rc : configs) {
    warn(rc);
    ModelConfig m = rc.model();
    m.head = HeadKind::kClassifier;
    const ParamStore init = init_model(m, rc.seed);
    const Tensor x = [&] {
      Rng rng(mix_seed(rc.seed, 5));
      Tensor t(Shape{rc.batch, rc.steps, m.cell.input});
      for (double& v : t.data()) v = rng.normal();
      return t;
    }();
    const auto steps = time_major(x);
    std::vector<int> labels(rc.batch);
    for (std::size_t i = 0; i < rc.batch; ++i) labels[i] = static_cast<int>(i % m.outputs);

    std::uint64_t macs = 0;
    {
      EagerOps ops(&init);
      MacCounter counter;
      model_forward(ops, m, steps);
      macs = counter.count();
    }
    const Timing eval = time_repeats(rc.repeats, [&] {
      EagerOps ops(&init);
      model_forward(ops, m, steps);
    });
    ParamStore params = init;
    AdamState adam;
    adam.config.lr = rc.lr;
    const Timing train = time_repeats(rc.repeats, [&] {
      Tape tape;
      TapeOps ops(tape, &params);
      const auto loss = ops.softmax_xent(model_forward(ops, m, steps), labels, Reduction::kMean);
      adam_step(params, tape.backward(loss), adam);
    });
    auto pm = [&](const Timing& t) {
      return rc.repeats > 1 ? fmt(t.mean, "%.3f") + " +- " + fmt(t.std, "%.3f") : fmt(t.mean, "%.3f");
    };
    std::printf("%-70s %20s %20s %14llu\n", describe(m).c_str(), pm(train).c_str(), pm(eval).c_str(),
                static_cast<unsigned long long>(macs));
    if (csv) {
      csv->row({describe(m), std::to_string(rc.batch), std::to_string(rc.steps),
                std::to_string(rc.repeats), fmt(train.mean, "%.6f"),
                rc.repeats > 1 ? fmt(train.std, "%.6f") : "", fmt(eval.mean, "%.6f"),
                rc.repeats > 1 ? fmt(eval.std, "%.6f") : "", std::to_string(macs),
                std::to_string(param_element_count(init))});
    }
  }
  return 0;
}

// ---------------------------------------------------------------- gradcheck

GradFault parse_fault(const std::string& s) {
  if (s == "none") return GradFault::kNone;
  if (s == "sigmoid") return GradFault::kSigmoid;
  if (s == "tanh") return GradFault::kTanh;
  if (s == "contract") return GradFault::kContract;
  throw ConfigError("unknown fault '" + s + "' (expected none, sigmoid, tanh or contract)");
}

int cmd_gradcheck(const RunConfig& rc, const std::string& fault) {
  warn(rc);
  if (rc.steps > 3) throw ConfigError("gradcheck unrolls 1 to 3 steps");
  const ModelConfig m = rc.model();
  ParamStore params;
  store_cell_params(init_cell(m.cell, rc.seed), params, "cell");
  Rng rng(mix_seed(rc.seed, 6));
  const std::size_t batch = 2;
  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < rc.steps; ++t) {
    Tensor x(Shape{batch, m.cell.input});
    for (double& v : x.data()) v = rng.normal();
    xs.push_back(std::move(x));
  }
  Tensor probe(Shape{batch, m.cell.hidden});
  for (double& v : probe.data()) v = rng.normal();

  set_grad_fault(parse_fault(fault));
  const auto report = gradcheck(
      [&](TapeOps& ops) {
        CellProgram<TapeOps> cell(ops, m.cell, "cell");
        auto state = cell.zero_state(batch);
        for (const auto& x : xs) state = cell.step(state, ops.constant(x));
        return ops.sum(ops.hadamard(state.h, ops.constant(probe)));
      },
      params, {.eps = 1e-5, .max_coords = 200, .seed = rc.seed});
  set_grad_fault(GradFault::kNone);
  const bool pass = report.max_rel_error <= 1e-4;
  std::printf("%s steps=%zu coords=%zu max_rel_error=%.3e worst=%s[%zu] analytic=%.9g numeric=%.9g\n",
              describe(m).c_str(), rc.steps, report.coords_checked, report.max_rel_error,
              report.worst_param.c_str(), report.worst_index, report.worst_analytic,
              report.worst_numeric);
  std::printf("gradcheck %s (threshold 1e-4)\n", pass ? "PASS" : "FAIL");
  if (!pass) throw ValidationFailure("gradient check failed");
  return 0;
}

// ---------------------------------------------------------------- train / eval

void print_history_tail(const std::vector<MetricRow>& h, const char* metric_name) {
  for (const auto& r : h) {
    std::printf("epoch %3zu step %6zu %-5s loss %.6f %s %.4f lr %.3g\n", r.epoch, r.step,
                r.split.c_str(), r.loss, metric_name, r.metric, r.lr);
  }
}

int cmd_train(const RunConfig& rc, const std::string& resume_path, const std::string& sweep) {
  warn(rc);
  const fs::path dir = out_dir(rc);
  const ModelConfig model = rc.model();
  TrainConfig tc = rc.train_config();
  tc.checkpoint_path = dir / "checkpoint.bin";
  tc.metrics_path = dir / "metrics.csv";
  tc.grad_norms_path = dir / "grad_norms.csv";
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
  } else {
    fs::remove(*tc.metrics_path);
    fs::remove(*tc.grad_norms_path);
  }
  {
    std::ofstream cfg(dir / "config.txt");
    cfg << rc.to_text();
  }
  std::printf("%s\n", describe(model).c_str());

  if (rc.task == Task::kSynthSpeaker) {
    const auto data = load_speaker_data(rc);
    std::printf("# dataset %s\n", data.train.fingerprint().c_str());
    if (!sweep.empty()) {
      const auto fractions = parse_fractions(sweep);
      TrainConfig sweep_cfg = tc;
      sweep_cfg.metrics_path.reset();
      sweep_cfg.grad_norms_path.reset();
      const auto points = verifier_fraction_sweep(model, sweep_cfg, data.train, data.val, fractions);
      CsvFile csv(dir / "sweep.csv");
      csv.row({"fraction", "train_loss", "train_eer", "val_loss", "val_eer", "gap"});
      for (const auto& p : points) {
        csv.row({fmt(p.fraction, "%.17g"), fmt(p.train.loss, "%.17g"), fmt(p.train.metric, "%.17g"),
                 fmt(p.val.loss, "%.17g"), fmt(p.val.metric, "%.17g"),
                 fmt(p.val.loss - p.train.loss, "%.17g")});
        std::printf("fraction %.2f train loss %.5f val loss %.5f gap %.5f val EER %.4f\n", p.fraction,
                    p.train.loss, p.val.loss, p.val.loss - p.train.loss, p.val.metric);
      }
      return 0;
    }
    const auto result =
        train_verifier(model, tc, data.train, data.val, resume ? &*resume : nullptr);
    print_history_tail(result.history(), "eer");
    const auto& last = result.history().back();
    std::printf("final val_loss=%.17g val_eer=%.17g\n", last.loss, last.metric);
    return 0;
  }

  if (!sweep.empty()) throw ConfigError("--sweep is only available for synth-speaker");
  const auto data = load_classifier_data(rc);
  std::printf("# dataset %s\n", data.train.fingerprint().c_str());
  const auto result = train_classifier(model, tc, data.train, data.val, resume ? &*resume : nullptr);
  print_history_tail(result.history(), "acc");
  const auto& last = result.history().back();
  std::printf("final val_loss=%.17g val_accuracy=%.17g\n", last.loss, last.metric);
  if (data.test) {
    const auto test = evaluate_classifier(model, result.checkpoint.params, *data.test, 256, rc.workers);
    MetricsWriter(*tc.metrics_path, {}).append({last.epoch, last.step, "test", test.loss, test.metric,
                                                0.0, 0.0, last.lr, 0.0});
    std::printf("test_loss=%.17g test_accuracy=%.17g\n", test.loss, test.metric);
  }
  return 0;
}

int cmd_eval(const std::string& path, const std::map<std::string, std::string>& overrides) {
  if (path.empty()) throw ConfigError("eval needs --checkpoint");
  const Checkpoint ck = load_checkpoint(path);
  auto pairs = parse_config_text(ck.config_text);
  for (const auto& [k, v] : overrides) pairs[k] = v;
  const RunConfig rc = RunConfig::from_pairs(pairs);
  const ModelConfig model = rc.model();
  try {
    check_model_params(model, ck.params);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("configuration does not match the checkpoint: ") + e.what());
  }
  if (model.cell.kind != ck.model.cell.kind || model.cell.param != ck.model.cell.param) {
    throw ConfigError("configuration does not match the checkpoint cell");
  }
  Evaluation val;
  const char* metric = "accuracy";
  std::optional<Evaluation> test;
  if (rc.task == Task::kSynthSpeaker) {
    const auto data = load_speaker_data(rc);
    val = evaluate_verifier(model, ck.params, data.val, rc.speakers_per_batch, 256, rc.workers);
    metric = "eer";
  } else {
    const auto data = load_classifier_data(rc);
    val = evaluate_classifier(model, ck.params, data.val, 256, rc.workers);
    if (data.test) test = evaluate_classifier(model, ck.params, *data.test, 256, rc.workers);
  }
  std::printf("val_loss=%.17g val_%s=%.17g\n", val.loss, metric, val.metric);
  if (test) std::printf("test_loss=%.17g test_%s=%.17g\n", test->loss, metric, test->metric);
  for (auto it = ck.state.history.rbegin(); it != ck.state.history.rend(); ++it) {
    if (it->split == "val") {
      const double diff = std::abs(it->metric - val.metric) + std::abs(it->loss - val.loss);
      std::printf("recorded epoch %zu: val_loss=%.17g val_%s=%.17g (|diff| %.3g)\n", it->epoch,
                  it->loss, metric, it->metric, diff);
      break;
    }
  }
  return 0;
}

// ---------------------------------------------------------------- inspect

void print_matrix(const Tensor& m, const std::vector<std::string>& row_names) {
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    std::printf("    %-3s", row_names[i].c_str());
    for (std::size_t j = 0; j < m.dim(1); ++j) std::printf(" %12.6f", m.at({i, j}));
    std::printf("\n");
  }
}

void print_chain(const std::string& name, const TTMatrix& t) {
  std::printf("  %-14s %zu cores, ranks", name.c_str(), t.num_cores());
  for (std::size_t r : t.ranks()) std::printf(" %zu", r);
  std::printf(", %zu x %zu, %llu elements\n", t.rows(), t.cols(),
              static_cast<unsigned long long>(t.element_count()));
}

int cmd_inspect(const std::string& path) {
  if (path.empty()) throw ConfigError("inspect needs --checkpoint");
  const Checkpoint ck = load_checkpoint(path);
  const ModelConfig& m = ck.model;
  std::printf("checkpoint %s (format version %u)\n", path.c_str(), kCheckpointVersion);
  std::printf("model: %s\n", describe(m).c_str());
  std::printf("gate order: %s, bias convention: %s, config hash: %016llx\n", ck.gate_order.c_str(),
              ck.bias_convention.c_str(),
              static_cast<unsigned long long>(fnv1a(ck.config_text.data(), ck.config_text.size())));
  std::printf("training: %zu epochs, %zu steps, lr %.3g, best epoch %zu%s\n", ck.state.epoch,
              ck.state.step, ck.state.lr, ck.state.best_epoch, ck.state.stopped ? " (stopped)" : "");
  std::printf("parameters:\n");
  for (const auto& [name, t] : ck.params) {
    std::printf("  %-22s %s\n", name.c_str(), shape_str(t.shape()).c_str());
  }
  std::printf("counts:\n");
  print_counts(count_rows(m, ck.params));

  const CellParams cell = load_cell_params(m.cell, ck.params, "cell");
  const auto& gates = gate_names(m.cell.kind);
  if (const auto* sep = std::get_if<SeparateTTCellParams>(&cell)) {
    std::printf("TT structure (one chain per gate):\n");
    for (std::size_t i = 0; i < gates.size(); ++i) {
      print_chain("W." + gates[i], sep->w[i]);
      print_chain("U." + gates[i], sep->u[i]);
    }
  } else if (const auto* fused = std::get_if<FusedTTCellParams>(&cell)) {
    std::printf("TT structure (gate-stacked):\n");
    for (const auto& [label, stack] :
         {std::pair{"W", &fused->w}, std::pair{"U", &fused->u}}) {
      print_chain(label, stack->matrix());
      const Tensor v = stack->mixing_matrix();
      std::printf("  V(%s) %zu x %zu:\n", label, v.dim(0), v.dim(1));
      print_matrix(v, gates);
      std::printf("  per-gate mixture Frobenius norms (%s):", label);
      for (std::size_t i = 0; i < gates.size(); ++i) {
        std::printf(" %s=%.6f", gates[i].c_str(), frobenius_norm(gate_matrix_mixture(*stack, i)));
      }
      std::printf("\n");
    }
  } else {
    std::printf("no TT structure (dense cell)\n");
  }
  return 0;
}

// ---------------------------------------------------------------- main

void add_run_options(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config_file, "key=value configuration file (flags win)");
  for (const auto& key : config_keys()) {
    std::string help = key.help;
    if (!key.default_value.empty()) help += " [" + key.default_value + "]";
    sub->add_option("--" + key.name, o.flags[key.name], help);
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Tensor-train recurrent networks: counts, benchmarks, gradient checks, training."};
  app.require_subcommand(1);
  Options o;
  auto* params = app.add_subcommand("params", "parameter counts and compression ratios");
  auto* bench = app.add_subcommand("bench", "time training and evaluation steps");
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the cell");
  auto* train = app.add_subcommand("train", "train a classifier or speaker encoder");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  for (auto* sub : {params, bench, gradcheck_cmd, train, eval}) add_run_options(sub, o);
  gradcheck_cmd->add_option("--inject-fault", o.inject_fault,
                            "deliberately wrong backward rule: none, sigmoid, tanh, contract");
  train->add_option("--resume", o.resume, "checkpoint to continue from");
  train->add_option("--sweep", o.sweep, "comma-separated training fractions (synth-speaker)");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  inspect->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub == inspect) return cmd_inspect(o.checkpoint);
  const auto pairs = merged_pairs(o, sub);
  if (sub == params) return cmd_params(expand_params(pairs));
  if (sub == bench) return cmd_bench(expand_params(pairs));
  if (sub == gradcheck_cmd) return cmd_gradcheck(RunConfig::from_pairs(pairs), o.inject_fault);
  if (sub == train) return cmd_train(RunConfig::from_pairs(pairs), o.resume, o.sweep);
  if (sub == eval) return cmd_eval(o.checkpoint, pairs);
  return 1;
}

}  // namespace
}  // namespace ttrnn

int main(int argc, char** argv) {
  using namespace ttrnn;
  try {
    return run(argc, argv);
  } catch (const ValidationFailure& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "checkpoint/data error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

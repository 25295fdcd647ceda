// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ttrnn/random.hpp"

namespace ttrnn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(parse_u64(key, trim(part)));
  return out;
}

std::string list_str(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* task_name(Task task) {
  switch (task) {
    case Task::kToy:
      return "toy";
    case Task::kMnist:
      return "mnist";
    case Task::kSynthSpeaker:
      return "synth-speaker";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "toy") return Task::kToy;
  if (s == "mnist") return Task::kMnist;
  if (s == "synth-speaker") return Task::kSynthSpeaker;
  throw ConfigError("unknown task '" + s + "' (expected toy, mnist or synth-speaker)");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"cell", "lstm", "cell kind: lstm or gru"},
      {"param", "dense", "parameterization: dense, tt-sep or tt-fused"},
      {"hidden", "64", "hidden size D"},
      {"input", "0", "input size M (0: from the task)"},
      {"cores", "2", "TT cores n"},
      {"rank", "2", "internal TT rank r"},
      {"rank0", "2", "gate-core rank r0 of fused stacks"},
      {"hidden-dims", "", "row factors of D (empty: balanced)"},
      {"input-dims", "", "column factors of M (empty: balanced)"},
      {"outputs", "0", "head outputs (0: task classes, or 32 for embeddings)"},
      {"task", "toy", "toy, mnist or synth-speaker"},
      {"seed", "1", "initialization and shuffling seed"},
      {"epochs", "15", "maximum epochs"},
      {"lr", "0.001", "initial Adam learning rate"},
      {"batch", "64", "batch size"},
      {"patience", "4", "early-stopping patience in epochs (0: off)"},
      {"workers", "1", "worker threads for batch-parallel sections"},
      {"shard-size", "0", "gradient shard rows (0: whole batch)"},
      {"data-fraction", "1", "fraction of the training data used"},
      {"speakers-per-batch", "8", "GE2E speakers per batch N"},
      {"utterances-per-speaker", "4", "GE2E utterances per speaker P"},
      {"out", "", "output directory"},
      {"repeats", "100", "bench repetitions"},
      {"steps", "3", "unrolled steps for gradcheck and bench"},
      {"data-dir", "", "dataset root (default $TTRNN_DATA_DIR, then ./data)"},
      {"mnist-train", "5000", "MNIST training examples"},
      {"mnist-val", "1000", "MNIST validation examples"},
      {"mnist-test", "1000", "MNIST test examples"},
      {"downsample", "2", "MNIST mean-pooling factor"},
      {"pixel-steps", "false", "one pixel per step instead of one row"},
      {"permute-seed", "none", "pixel permutation seed (none: unpermuted)"},
      {"speakers", "20", "synthetic training speakers"},
      {"val-speakers", "10", "synthetic validation speakers"},
      {"per-speaker", "10", "utterances per synthetic speaker"},
      {"utterance-steps", "20", "steps per synthetic utterance"},
      {"features", "40", "features per synthetic step"},
      {"sep", "0.5", "minimum speaker separation 1 - |cos|"},
      {"noise", "0.3", "synthetic noise level"},
      {"data-seed", "7", "synthetic data seed"},
      {"toy-examples", "512", "toy training examples"},
      {"toy-steps", "8", "toy sequence length"},
      {"toy-features", "4", "toy features per step"},
      {"margin", "0.5", "toy decision margin"},
  };
  return keys;
}

RunConfig RunConfig::from_pairs(const std::map<std::string, std::string>& pairs) {
  std::map<std::string, std::string> v;
  for (const auto& k : config_keys()) v[k.name] = k.default_value;
  RunConfig c;
  for (const auto& [key, value] : pairs) {
    if (!v.contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
    v[key] = trim(value);
    c.explicit_keys.insert(key);
  }
  auto u = [&](const char* key) { return static_cast<std::size_t>(parse_u64(key, v[key])); };
  auto d = [&](const char* key) { return parse_double(key, v[key]); };

  c.cell = parse_cell_kind(v["cell"]);
  c.param = parse_parameterization(v["param"]);
  c.hidden = u("hidden");
  c.input = u("input");
  c.cores = u("cores");
  c.rank = u("rank");
  c.rank0 = u("rank0");
  c.hidden_dims = parse_list("hidden-dims", v["hidden-dims"]);
  c.input_dims = parse_list("input-dims", v["input-dims"]);
  c.outputs = u("outputs");
  c.task = parse_task(v["task"]);
  c.seed = parse_u64("seed", v["seed"]);
  c.epochs = u("epochs");
  c.lr = d("lr");
  c.batch = u("batch");
  c.patience = u("patience");
  c.workers = u("workers");
  c.shard_size = u("shard-size");
  c.data_fraction = d("data-fraction");
  c.speakers_per_batch = u("speakers-per-batch");
  c.utterances_per_speaker = u("utterances-per-speaker");
  c.out = v["out"];
  c.repeats = u("repeats");
  c.steps = u("steps");
  c.data_dir = v["data-dir"];
  c.mnist_train = u("mnist-train");
  c.mnist_val = u("mnist-val");
  c.mnist_test = u("mnist-test");
  c.downsample = u("downsample");
  c.pixel_steps = parse_bool("pixel-steps", v["pixel-steps"]);
  if (v["permute-seed"] != "none") c.permute_seed = parse_u64("permute-seed", v["permute-seed"]);
  c.speakers = u("speakers");
  c.val_speakers = u("val-speakers");
  c.per_speaker = u("per-speaker");
  c.utterance_steps = u("utterance-steps");
  c.features = u("features");
  c.sep = d("sep");
  c.noise = d("noise");
  c.data_seed = parse_u64("data-seed", v["data-seed"]);
  c.toy_examples = u("toy-examples");
  c.toy_steps = u("toy-steps");
  c.toy_features = u("toy-features");
  c.margin = d("margin");

  if (c.hidden == 0) throw ConfigError("hidden must be positive");
  if (c.cores == 0 || c.rank == 0 || c.rank0 == 0) {
    throw ConfigError("cores, rank and rank0 must be positive");
  }
  if (c.repeats == 0) throw ConfigError("repeats must be positive");
  if (c.steps == 0) throw ConfigError("steps must be positive");
  if (c.epochs == 0) throw ConfigError("epochs must be positive");
  return c;
}

std::map<std::string, std::string> RunConfig::to_pairs() const {
  return {
      {"cell", cell_kind_name(cell)},
      {"param", parameterization_name(param)},
      {"hidden", std::to_string(hidden)},
      {"input", std::to_string(input)},
      {"cores", std::to_string(cores)},
      {"rank", std::to_string(rank)},
      {"rank0", std::to_string(rank0)},
      {"hidden-dims", list_str(hidden_dims)},
      {"input-dims", list_str(input_dims)},
      {"outputs", std::to_string(outputs)},
      {"task", task_name(task)},
      {"seed", std::to_string(seed)},
      {"epochs", std::to_string(epochs)},
      {"lr", num(lr)},
      {"batch", std::to_string(batch)},
      {"patience", std::to_string(patience)},
      {"workers", std::to_string(workers)},
      {"shard-size", std::to_string(shard_size)},
      {"data-fraction", num(data_fraction)},
      {"speakers-per-batch", std::to_string(speakers_per_batch)},
      {"utterances-per-speaker", std::to_string(utterances_per_speaker)},
      {"out", out},
      {"repeats", std::to_string(repeats)},
      {"steps", std::to_string(steps)},
      {"data-dir", data_dir},
      {"mnist-train", std::to_string(mnist_train)},
      {"mnist-val", std::to_string(mnist_val)},
      {"mnist-test", std::to_string(mnist_test)},
      {"downsample", std::to_string(downsample)},
      {"pixel-steps", pixel_steps ? "true" : "false"},
      {"permute-seed", permute_seed ? std::to_string(*permute_seed) : "none"},
      {"speakers", std::to_string(speakers)},
      {"val-speakers", std::to_string(val_speakers)},
      {"per-speaker", std::to_string(per_speaker)},
      {"utterance-steps", std::to_string(utterance_steps)},
      {"features", std::to_string(features)},
      {"sep", num(sep)},
      {"noise", num(noise)},
      {"data-seed", std::to_string(data_seed)},
      {"toy-examples", std::to_string(toy_examples)},
      {"toy-steps", std::to_string(toy_steps)},
      {"toy-features", std::to_string(toy_features)},
      {"margin", num(margin)},
  };
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto& [k, v] : to_pairs()) s += k + "=" + v + "\n";
  return s;
}

std::size_t RunConfig::task_input() const {
  if (input != 0) return input;
  switch (task) {
    case Task::kToy:
      return toy_features;
    case Task::kMnist: {
      if (downsample == 0 || 28 % downsample != 0) {
        throw ConfigError("downsample factor must divide 28");
      }
      return pixel_steps ? 1 : 28 / downsample;
    }
    case Task::kSynthSpeaker:
      return features;
  }
  return 0;
}

std::size_t RunConfig::task_outputs() const {
  if (outputs != 0) return outputs;
  switch (task) {
    case Task::kToy:
      return 2;
    case Task::kMnist:
      return 10;
    case Task::kSynthSpeaker:
      return 32;
  }
  return 0;
}

HeadKind RunConfig::head() const {
  return task == Task::kSynthSpeaker ? HeadKind::kEmbedding : HeadKind::kClassifier;
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.cell = CellConfig::make(cell, param, hidden, task_input(), cores, rank, rank0);
  if (!hidden_dims.empty()) m.cell.hidden_dims = hidden_dims;
  if (!input_dims.empty()) m.cell.input_dims = input_dims;
  if (m.cell.hidden_dims.size() != m.cell.ranks.size() + 1) {
    m.cell.ranks.assign(m.cell.hidden_dims.size() - 1, rank);
  }
  m.head = head();
  m.outputs = task_outputs();
  m.validate();
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch;
  t.patience = patience;
  t.adam.lr = lr;
  t.seed = seed;
  t.shard_size = shard_size;
  t.workers = workers;
  t.speakers_per_batch = speakers_per_batch;
  t.utterances_per_speaker = utterances_per_speaker;
  t.data_fraction = data_fraction;
  t.config_text = to_text();
  t.validate();
  return t;
}

std::filesystem::path RunConfig::resolved_data_dir() const {
  if (!data_dir.empty()) return data_dir;
  if (const char* env = std::getenv("TTRNN_DATA_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "data";
}

std::vector<std::string> RunConfig::warnings() const {
  std::vector<std::string> out;
  if (param == Parameterization::kDense) {
    for (const char* key : {"cores", "rank", "rank0", "hidden-dims", "input-dims"}) {
      if (explicit_keys.contains(key)) {
        out.push_back(std::string(key) + " is ignored for dense cells");
      }
    }
  } else if (param == Parameterization::kSeparate && explicit_keys.contains("rank0")) {
    out.push_back("rank0 is ignored for tt-sep cells");
  }
  return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(ss, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ClassifierSplits load_classifier_data(const RunConfig& c) {
  switch (c.task) {
    case Task::kToy: {
      auto train = toy_sequences(c.toy_examples, c.toy_steps, c.toy_features, c.margin,
                                 mix_seed(c.data_seed, 1));
      auto val = toy_sequences(std::max<std::size_t>(1, c.toy_examples / 4), c.toy_steps,
                               c.toy_features, c.margin, mix_seed(c.data_seed, 2));
      val.split = Split::kVal;
      auto test = toy_sequences(std::max<std::size_t>(1, c.toy_examples / 4), c.toy_steps,
                                c.toy_features, c.margin, mix_seed(c.data_seed, 3));
      test.split = Split::kTest;
      return {std::move(train), std::move(val), std::move(test)};
    }
    case Task::kMnist: {
      MnistConfig m;
      m.train = c.mnist_train;
      m.val = c.mnist_val;
      m.test = c.mnist_test;
      m.downsample = c.downsample;
      m.pixel_steps = c.pixel_steps;
      m.permutation_seed = c.permute_seed;
      auto s = load_mnist(c.resolved_data_dir() / "mnist", m);
      return {std::move(s.train), std::move(s.val), std::move(s.test)};
    }
    case Task::kSynthSpeaker:
      throw ConfigError("synth-speaker is a verification task");
  }
  throw ConfigError("unknown task");
}

SpeakerSplits load_speaker_data(const RunConfig& c) {
  if (c.task != Task::kSynthSpeaker) throw ConfigError("task is not synth-speaker");
  const auto all = synth_speakers(c.speakers + c.val_speakers, c.per_speaker, c.utterance_steps,
                                  c.features, c.sep, c.noise, c.data_seed);
  return {take_speakers(all, 0, c.speakers), take_speakers(all, c.speakers, c.val_speakers)};
}

}  // namespace ttrnn

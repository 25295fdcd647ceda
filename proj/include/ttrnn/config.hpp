// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Run configuration shared by the command-line tool and the acceptance
// suite. A configuration is a flat set of key=value pairs; every key has a
// documented default, and the canonical text form (sorted, one pair per line)
// is what checkpoints store and hash.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ttrnn/cells.hpp"
#include "ttrnn/data.hpp"
#include "ttrnn/training.hpp"

namespace ttrnn {

enum class Task { kToy, kMnist, kSynthSpeaker };

const char* task_name(Task task);
Task parse_task(const std::string& s);

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

// Every accepted key with its default, in display order.
const std::vector<ConfigKey>& config_keys();

struct RunConfig {
  CellKind cell = CellKind::kLstm;
  Parameterization param = Parameterization::kDense;
  std::size_t hidden = 64;
  std::size_t input = 0;  // 0: taken from the task
  std::size_t cores = 2;
  std::size_t rank = 2;
  std::size_t rank0 = 2;
  std::vector<std::size_t> hidden_dims;  // empty: balanced factorization
  std::vector<std::size_t> input_dims;
  std::size_t outputs = 0;  // 0: classes of the task, or 32 for embeddings

  Task task = Task::kToy;
  std::uint64_t seed = 1;
  std::size_t epochs = 15;
  double lr = 1e-3;
  std::size_t batch = 64;
  std::size_t patience = 4;
  std::size_t workers = 1;
  std::size_t shard_size = 0;
  double data_fraction = 1.0;
  std::size_t speakers_per_batch = 8;
  std::size_t utterances_per_speaker = 4;

  std::string out;
  std::size_t repeats = 100;
  std::size_t steps = 3;  // unrolled steps for gradcheck and bench

  std::string data_dir;  // empty: $TTRNN_DATA_DIR, then ./data
  std::size_t mnist_train = 5000;
  std::size_t mnist_val = 1000;
  std::size_t mnist_test = 1000;
  std::size_t downsample = 2;
  bool pixel_steps = false;
  std::optional<std::uint64_t> permute_seed;

  std::size_t speakers = 20;
  std::size_t val_speakers = 10;
  std::size_t per_speaker = 10;
  std::size_t utterance_steps = 20;
  std::size_t features = 40;
  double sep = 0.5;
  double noise = 0.3;
  std::uint64_t data_seed = 7;

  std::size_t toy_examples = 512;
  std::size_t toy_steps = 8;
  std::size_t toy_features = 4;
  double margin = 0.5;

  // Keys given explicitly (config file or flag), for warnings.
  std::set<std::string> explicit_keys;

  // Applies defaults, then `pairs`. Throws ConfigError on unknown keys or
  // malformed values.
  static RunConfig from_pairs(const std::map<std::string, std::string>& pairs);
  std::map<std::string, std::string> to_pairs() const;
  // Canonical "key=value" lines, sorted by key.
  std::string to_text() const;

  std::size_t task_input() const;
  std::size_t task_outputs() const;
  HeadKind head() const;
  ModelConfig model() const;
  TrainConfig train_config() const;
  std::filesystem::path resolved_data_dir() const;
  // Warnings about settings that have no effect.
  std::vector<std::string> warnings() const;
};

// Parses "key = value" lines; '#' starts a comment. Throws IoError when the
// file cannot be read and ConfigError on malformed lines.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

struct ClassifierSplits {
  SequenceDataset train;
  SequenceDataset val;
  std::optional<SequenceDataset> test;
};

struct SpeakerSplits {
  SpeakerDataset train;
  SpeakerDataset val;
};

// Datasets for the configured task.
ClassifierSplits load_classifier_data(const RunConfig& config);
// Training and validation speakers are drawn jointly so separation holds
// across the two sets, then split by speaker.
SpeakerSplits load_speaker_data(const RunConfig& config);

}  // namespace ttrnn

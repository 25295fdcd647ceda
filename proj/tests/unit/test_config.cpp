// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ttrnn/config.hpp"

namespace ttrnn {
namespace {

TEST(RunConfig, DefaultsMatchKeyTable) {
  const RunConfig c = RunConfig::from_pairs({});
  const auto pairs = c.to_pairs();
  ASSERT_EQ(pairs.size(), config_keys().size());
  for (const auto& key : config_keys()) {
    ASSERT_TRUE(pairs.contains(key.name)) << key.name;
    EXPECT_EQ(RunConfig::from_pairs({{key.name, key.default_value}}).to_pairs(), pairs) << key.name;
  }
  EXPECT_EQ(c.hidden, 64u);
  EXPECT_EQ(c.task, Task::kToy);
  EXPECT_FALSE(c.permute_seed.has_value());
}

TEST(RunConfig, TextRoundTrip) {
  const RunConfig c = RunConfig::from_pairs({{"cell", "gru"},
                                             {"param", "tt-fused"},
                                             {"lr", "0.0025"},
                                             {"hidden-dims", "4,4"},
                                             {"permute-seed", "9"},
                                             {"task", "synth-speaker"}});
  const RunConfig again = RunConfig::from_pairs(parse_config_text(c.to_text()));
  EXPECT_EQ(again.to_text(), c.to_text());
  EXPECT_EQ(again.lr, 0.0025);
  EXPECT_EQ(again.hidden_dims, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(*again.permute_seed, 9u);
}

TEST(RunConfig, Errors) {
  EXPECT_THROW(RunConfig::from_pairs({{"hiden", "4"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"hidden", "-4"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"hidden", "0"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"lr", "fast"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"param", "tt"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"task", "timit"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"pixel-steps", "maybe"}}), ConfigError);
  EXPECT_THROW(RunConfig::from_pairs({{"task", "mnist"}, {"downsample", "3"}}).model(), ConfigError);
  EXPECT_THROW(parse_config_text("hidden 4\n"), ConfigError);
  EXPECT_THROW(read_config_file("/nonexistent/ttrnn.cfg"), IoError);
}

TEST(RunConfig, ParseTextSkipsCommentsAndBlanks) {
  const auto pairs = parse_config_text("# run\n\n hidden = 32  # width\ncell=gru\n");
  EXPECT_EQ(pairs, (std::map<std::string, std::string>{{"cell", "gru"}, {"hidden", "32"}}));
}

TEST(RunConfig, ReadsFile) {
  const auto path = std::filesystem::temp_directory_path() / "ttrnn_config_test.cfg";
  std::ofstream(path) << "rank=3\nparam=tt-sep\n";
  const RunConfig c = RunConfig::from_pairs(read_config_file(path));
  EXPECT_EQ(c.rank, 3u);
  EXPECT_EQ(c.param, Parameterization::kSeparate);
  std::filesystem::remove(path);
}

TEST(RunConfig, TaskShapes) {
  EXPECT_EQ(RunConfig::from_pairs({{"task", "mnist"}}).task_input(), 14u);
  EXPECT_EQ(RunConfig::from_pairs({{"task", "mnist"}, {"pixel-steps", "true"}}).task_input(), 1u);
  EXPECT_EQ(RunConfig::from_pairs({{"task", "mnist"}}).task_outputs(), 10u);
  const RunConfig s = RunConfig::from_pairs({{"task", "synth-speaker"}});
  EXPECT_EQ(s.head(), HeadKind::kEmbedding);
  EXPECT_EQ(s.model().outputs, 32u);
  EXPECT_EQ(s.model().cell.input, 40u);
  EXPECT_EQ(RunConfig::from_pairs({{"input", "6"}}).model().cell.input, 6u);
}

TEST(RunConfig, ExplicitFactorsOverrideBalanced) {
  const RunConfig c = RunConfig::from_pairs({{"param", "tt-fused"},
                                             {"hidden", "256"},
                                             {"input", "1"},
                                             {"hidden-dims", "16,16"},
                                             {"input-dims", "1,1"},
                                             {"rank", "4"}});
  const ModelConfig m = c.model();
  EXPECT_EQ(m.cell.hidden_dims, (std::vector<std::size_t>{16, 16}));
  EXPECT_EQ(m.cell.input_dims, (std::vector<std::size_t>{1, 1}));
  EXPECT_THROW(RunConfig::from_pairs({{"param", "tt-fused"}, {"hidden-dims", "4,4"}, {"hidden", "8"}})
                   .model(),
               ConfigError);
}

TEST(RunConfig, WarnsAboutIgnoredKeys) {
  EXPECT_TRUE(RunConfig::from_pairs({}).warnings().empty());
  EXPECT_EQ(RunConfig::from_pairs({{"rank", "4"}}).warnings().size(), 1u);
  EXPECT_EQ(RunConfig::from_pairs({{"param", "tt-sep"}, {"rank0", "3"}}).warnings().size(), 1u);
  EXPECT_TRUE(RunConfig::from_pairs({{"param", "tt-fused"}, {"rank0", "3"}}).warnings().empty());
}

TEST(RunConfig, TrainConfigCarriesCanonicalText) {
  const RunConfig c = RunConfig::from_pairs({{"epochs", "3"}, {"batch", "16"}});
  const TrainConfig t = c.train_config();
  EXPECT_EQ(t.epochs, 3u);
  EXPECT_EQ(t.batch_size, 16u);
  EXPECT_EQ(t.config_text, c.to_text());
}

TEST(RunConfig, DataDirResolution) {
  EXPECT_EQ(RunConfig::from_pairs({{"data-dir", "/x"}}).resolved_data_dir(), "/x");
}

TEST(LoadData, ToySplitsAreDeterministicAndDistinct) {
  const RunConfig c = RunConfig::from_pairs({{"toy-examples", "40"}});
  const auto a = load_classifier_data(c);
  const auto b = load_classifier_data(c);
  EXPECT_EQ(a.train.fingerprint(), b.train.fingerprint());
  EXPECT_EQ(a.train.size(), 40u);
  EXPECT_EQ(a.val.size(), 10u);
  ASSERT_TRUE(a.test.has_value());
  EXPECT_NE(a.train.fingerprint(), a.val.fingerprint());
  EXPECT_THROW(load_classifier_data(RunConfig::from_pairs({{"task", "synth-speaker"}})), ConfigError);
}

TEST(LoadData, SpeakersSplitBySpeaker) {
  const RunConfig c = RunConfig::from_pairs({{"task", "synth-speaker"},
                                             {"speakers", "6"},
                                             {"val-speakers", "3"},
                                             {"per-speaker", "4"},
                                             {"utterance-steps", "5"},
                                             {"features", "8"}});
  const auto s = load_speaker_data(c);
  EXPECT_EQ(s.train.num_speakers, 6u);
  EXPECT_EQ(s.val.num_speakers, 3u);
  EXPECT_EQ(s.train.size(), 24u);
  EXPECT_EQ(s.val.inputs.dim(2), 8u);
}

}  // namespace
}  // namespace ttrnn

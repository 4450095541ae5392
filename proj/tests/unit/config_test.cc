// Copyright 2026 The fedliab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <set>

#include <gtest/gtest.h>

#include "fedliab/harness/config.h"

namespace fedliab::harness {
namespace {

TEST(ConfigTest, DefaultsAreTheDeskProfile) {
  ExperimentConfig cfg;
  cfg.Validate();
  EXPECT_EQ(cfg.nodes, 10u);
  EXPECT_EQ(cfg.per_node_size, 500u);
  EXPECT_EQ(cfg.class_count, 10u);
  EXPECT_EQ(cfg.train.rounds, 20u);
  EXPECT_EQ(cfg.bias_factor, 10.0);
  EXPECT_EQ(cfg.audit.alpha, 2.0);
  EXPECT_EQ(cfg.train.lr, 0.05);
  EXPECT_EQ(cfg.train.aggregation, fl::Aggregation::kUniform);
  EXPECT_EQ(cfg.misbehaving_node, std::optional<std::size_t>(9));
}

TEST(ConfigTest, ParsesKeyValueTextWithComments) {
  auto cfg = ParseConfig(
      "# comment\n"
      "scenario = all_correct   # trailing\n"
      "\n"
      "  rounds=7\n"
      "alpha = 3.5\r\n"
      "misbehaving_node = none\n"
      "aggregation = dataset_size\n"
      "lrp_epsilon = 0\n"
      "leave_one_out = yes\n"
      "seed = 18446744073709551615\n");
  EXPECT_EQ(cfg.scenario, Scenario::kAllCorrect);
  EXPECT_EQ(cfg.train.rounds, 7u);
  EXPECT_EQ(cfg.audit.alpha, 3.5);
  EXPECT_FALSE(cfg.misbehaving_node);
  EXPECT_EQ(cfg.train.aggregation, fl::Aggregation::kDatasetSizeWeighted);
  EXPECT_EQ(cfg.lrp.epsilon, std::optional<double>(0.0));
  EXPECT_TRUE(cfg.audit.leave_one_out);
  EXPECT_EQ(cfg.seed(), 18446744073709551615ull);
}

TEST(ConfigTest, UnknownKeysAndBadValuesAreErrors) {
  EXPECT_THROW(ParseConfig("colour = blue\n"), ConfigError);
  EXPECT_THROW(ParseConfig("rounds = -1\n"), ConfigError);
  EXPECT_THROW(ParseConfig("rounds = 3x\n"), ConfigError);
  EXPECT_THROW(ParseConfig("alpha = nan\n"), ConfigError);
  EXPECT_THROW(ParseConfig("scenario = sometimes\n"), ConfigError);
  EXPECT_THROW(ParseConfig("just some words\n"), ConfigError);
  try {
    ParseConfig("rounds = 2\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ConfigTest, ValidationRejectsInconsistentSettings) {
  EXPECT_THROW(ParseConfig("alpha = 1\n"), ConfigError);
  EXPECT_THROW(ParseConfig("nodes = 1\n"), ConfigError);
  EXPECT_THROW(ParseConfig("source_class = 9\n"), ConfigError);
  EXPECT_THROW(ParseConfig("target_class = 10\n"), ConfigError);
  EXPECT_THROW(ParseConfig("misbehaving_node = 10\n"), ConfigError);
  EXPECT_THROW(ParseConfig("misbehaving_node = none\n"), ConfigError);
  EXPECT_THROW(ParseConfig("scenario = audited_retrain\nmisbehaving_node = none\n"),
               ConfigError);
  EXPECT_THROW(ParseConfig("dataset = idx\n"), ConfigError);
  EXPECT_THROW(ParseConfig("lr = 0\n"), ConfigError);
  EXPECT_THROW(ParseConfig("rounds = 0\n"), ConfigError);
  EXPECT_THROW(ParseConfig("reputation_decay = 1\n"), ConfigError);
  EXPECT_THROW(ParseConfig("lrp_epsilon = -1\n"), ConfigError);
  EXPECT_NO_THROW(ParseConfig("scenario = all_correct\nmisbehaving_node = none\n"));
}

TEST(ConfigTest, ManifestRoundTripsEveryKey) {
  ExperimentConfig cfg;
  SetConfigValue(cfg, "seed", "77");
  SetConfigValue(cfg, "alpha", "2.25");
  SetConfigValue(cfg, "cosine_baseline", "whole_model");
  SetConfigValue(cfg, "distance_reference", "previous_global");
  SetConfigValue(cfg, "out", "some dir/with \"quotes\"");
  const auto json = ManifestJson(cfg);
  auto back = ParseConfig(json);
  EXPECT_EQ(ConfigEntries(back), ConfigEntries(cfg));
  EXPECT_EQ(ManifestJson(back), json);
}

TEST(ConfigTest, ManifestMustBeOurs) {
  EXPECT_THROW(ParseConfig("{\"format\":\"other\"}"), ConfigError);
  EXPECT_THROW(ParseConfig("{not json"), ConfigError);
  EXPECT_THROW(
      ParseConfig(R"({"format":"fedliab-manifest","version":1,"config":{"rounds":3}})"),
      ConfigError);
}

TEST(ConfigTest, EntriesCoverEveryKeyOnce) {
  auto entries = ConfigEntries(ExperimentConfig{});
  std::set<std::string> keys;
  for (const auto& [k, v] : entries) EXPECT_TRUE(keys.insert(k).second) << k;
  for (const char* k : {"scenario", "nodes", "rounds", "alpha", "seed", "out", "lr"}) {
    EXPECT_TRUE(keys.count(k)) << k;
  }
}

TEST(ConfigTest, MissingFileIsAConfigError) {
  EXPECT_THROW(LoadConfig("/nonexistent/fedliab.conf"), ConfigError);
}

}  // namespace
}  // namespace fedliab::harness

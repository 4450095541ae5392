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

#ifndef FEDLIAB_HARNESS_CONFIG_H_
#define FEDLIAB_HARNESS_CONFIG_H_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedliab/audit/audit.h"
#include "fedliab/data/dataset.h"
#include "fedliab/fl/simulator.h"
#include "fedliab/lrp/lrp.h"

namespace fedliab::harness {

enum class Scenario { kAllCorrect, kWithMisbehaving, kAuditedRetrain };

std::string_view ScenarioName(Scenario scenario);
std::optional<Scenario> ParseScenario(std::string_view name);

enum class DatasetSource { kSynthetic, kIdx };

// Reduction used by the cosine-only baseline.
enum class CosineBaseline {
  kLayerMean,   // mean of the per-layer distances
  kWholeModel,  // one distance over all parameters flattened together
};

// Bad keys, malformed values and inconsistent settings. The CLI maps this to
// exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything one experiment needs. Defaults are the CI profile: 10 nodes with
// 500 synthetic samples each, 10 classes, 20 rounds, node 9 relabeling 3 as 9.
struct ExperimentConfig {
  Scenario scenario = Scenario::kWithMisbehaving;

  DatasetSource dataset = DatasetSource::kSynthetic;
  std::string train_images, train_labels, test_images, test_labels;
  // 0 with IDX input: one more than the largest label seen.
  std::size_t class_count = 10;
  std::size_t image_size = 28;  // synthetic glyph side
  std::size_t test_per_class = 100;

  std::size_t nodes = 10;
  std::size_t per_node_size = 500;
  double bias_factor = 10.0;

  fl::TrainConfig train{.rounds = 20};

  std::optional<std::size_t> misbehaving_node = 9;
  data::CorruptionSpec corruption;
  // Force the misbehaving node's preferred class to be the attacked class.
  bool attacker_prefers_source = false;

  audit::AuditConfig audit;
  audit::DistanceReference distance_reference = audit::DistanceReference::kSameRound;
  CosineBaseline cosine_baseline = CosineBaseline::kLayerMean;
  lrp::LrpConfig lrp;
  double reputation_decay = 0.5;

  std::size_t overhead_calls = 1000;
  std::string out_dir = "fedliab-run";

  std::uint64_t seed() const { return train.master_seed; }

  // Throws ConfigError.
  void Validate() const;
};

// Sets one key from its text form. Throws ConfigError for unknown keys and
// malformed values.
void SetConfigValue(ExperimentConfig& cfg, std::string_view key, std::string_view value);

// Every key with its resolved value, in documentation order.
std::vector<std::pair<std::string, std::string>> ConfigEntries(const ExperimentConfig& cfg);

// `key = value` lines; `#` starts a comment. Text starting with `{` is read as
// a manifest.json written by a previous run. The result is validated.
ExperimentConfig ParseConfig(std::string_view text);
ExperimentConfig LoadConfig(const std::filesystem::path& path);

// {"format":"fedliab-manifest","version":1,"config":{key: value, ...}}
std::string ManifestJson(const ExperimentConfig& cfg);

}  // namespace fedliab::harness

#endif  // FEDLIAB_HARNESS_CONFIG_H_

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

#include "fedliab/harness/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "fedliab/util/binary_io.h"

namespace fedliab::harness {

namespace {

std::string_view Trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void Bad(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("bad value '" + std::string(value) + "' for " + std::string(key) +
                    ": expected " + std::string(want));
}

std::uint64_t ToU64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
    Bad(key, v, "a non-negative integer");
  }
  return out;
}

std::size_t ToSize(std::string_view key, std::string_view v) {
  return static_cast<std::size_t>(ToU64(key, v));
}

double ToDouble(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    Bad(key, v, "a finite number");
  }
  return out;
}

bool ToBool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  Bad(key, v, "true or false");
}

int ToClass(std::string_view key, std::string_view v) {
  return static_cast<int>(ToU64(key, v));
}

std::string Str(std::size_t v) { return std::to_string(v); }
std::string Str(bool v) { return v ? "true" : "false"; }

struct Field {
  std::string_view key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define FEDLIAB_SIZE_FIELD(name, member)                                                \
  Field {                                                                               \
    name, [](ExperimentConfig& c, std::string_view v) { c.member = ToSize(name, v); }, \
        [](const ExperimentConfig& c) { return Str(c.member); }                         \
  }
#define FEDLIAB_DOUBLE_FIELD(name, member)                                                \
  Field {                                                                                 \
    name, [](ExperimentConfig& c, std::string_view v) { c.member = ToDouble(name, v); }, \
        [](const ExperimentConfig& c) { return FormatDouble(c.member); }                  \
  }
#define FEDLIAB_BOOL_FIELD(name, member)                                                \
  Field {                                                                               \
    name, [](ExperimentConfig& c, std::string_view v) { c.member = ToBool(name, v); }, \
        [](const ExperimentConfig& c) { return Str(c.member); }                         \
  }
#define FEDLIAB_STRING_FIELD(name, member)                                                  \
  Field {                                                                                   \
    name, [](ExperimentConfig& c, std::string_view v) { c.member = std::string(v); },      \
        [](const ExperimentConfig& c) { return c.member; }                                  \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      {"scenario",
       [](ExperimentConfig& c, std::string_view v) {
         auto s = ParseScenario(v);
         if (!s) Bad("scenario", v, "all_correct, with_misbehaving or audited_retrain");
         c.scenario = *s;
       },
       [](const ExperimentConfig& c) { return std::string(ScenarioName(c.scenario)); }},
      {"dataset",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "synthetic") {
           c.dataset = DatasetSource::kSynthetic;
         } else if (v == "idx") {
           c.dataset = DatasetSource::kIdx;
         } else {
           Bad("dataset", v, "synthetic or idx");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.dataset == DatasetSource::kSynthetic ? "synthetic" : "idx");
       }},
      FEDLIAB_STRING_FIELD("train_images", train_images),
      FEDLIAB_STRING_FIELD("train_labels", train_labels),
      FEDLIAB_STRING_FIELD("test_images", test_images),
      FEDLIAB_STRING_FIELD("test_labels", test_labels),
      FEDLIAB_SIZE_FIELD("class_count", class_count),
      FEDLIAB_SIZE_FIELD("image_size", image_size),
      FEDLIAB_SIZE_FIELD("test_per_class", test_per_class),
      FEDLIAB_SIZE_FIELD("nodes", nodes),
      FEDLIAB_SIZE_FIELD("per_node_size", per_node_size),
      FEDLIAB_DOUBLE_FIELD("bias_factor", bias_factor),
      FEDLIAB_SIZE_FIELD("rounds", train.rounds),
      FEDLIAB_SIZE_FIELD("local_passes", train.local_passes),
      FEDLIAB_SIZE_FIELD("batch_size", train.batch_size),
      FEDLIAB_DOUBLE_FIELD("lr", train.lr),
      {"aggregation",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "uniform") {
           c.train.aggregation = fl::Aggregation::kUniform;
         } else if (v == "dataset_size") {
           c.train.aggregation = fl::Aggregation::kDatasetSizeWeighted;
         } else {
           Bad("aggregation", v, "uniform or dataset_size");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.train.aggregation == fl::Aggregation::kUniform ? "uniform"
                                                                              : "dataset_size");
       }},
      {"seed",
       [](ExperimentConfig& c, std::string_view v) { c.train.master_seed = ToU64("seed", v); },
       [](const ExperimentConfig& c) { return std::to_string(c.train.master_seed); }},
      FEDLIAB_SIZE_FIELD("threads", train.threads),
      {"misbehaving_node",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "none") {
           c.misbehaving_node.reset();
         } else {
           c.misbehaving_node = ToSize("misbehaving_node", v);
         }
       },
       [](const ExperimentConfig& c) {
         return c.misbehaving_node ? Str(*c.misbehaving_node) : std::string("none");
       }},
      {"source_class",
       [](ExperimentConfig& c, std::string_view v) {
         c.corruption.source_class = ToClass("source_class", v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.corruption.source_class); }},
      {"target_class",
       [](ExperimentConfig& c, std::string_view v) {
         c.corruption.target_class = ToClass("target_class", v);
       },
       [](const ExperimentConfig& c) { return std::to_string(c.corruption.target_class); }},
      FEDLIAB_BOOL_FIELD("attacker_prefers_source", attacker_prefers_source),
      FEDLIAB_DOUBLE_FIELD("alpha", audit.alpha),
      FEDLIAB_BOOL_FIELD("leave_one_out", audit.leave_one_out),
      {"distance_reference",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "same_round") {
           c.distance_reference = audit::DistanceReference::kSameRound;
         } else if (v == "previous_global") {
           c.distance_reference = audit::DistanceReference::kPreviousGlobal;
         } else {
           Bad("distance_reference", v, "same_round or previous_global");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.distance_reference == audit::DistanceReference::kSameRound
                                ? "same_round"
                                : "previous_global");
       }},
      {"cosine_baseline",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "layer_mean") {
           c.cosine_baseline = CosineBaseline::kLayerMean;
         } else if (v == "whole_model") {
           c.cosine_baseline = CosineBaseline::kWholeModel;
         } else {
           Bad("cosine_baseline", v, "layer_mean or whole_model");
         }
       },
       [](const ExperimentConfig& c) {
         return std::string(c.cosine_baseline == CosineBaseline::kLayerMean ? "layer_mean"
                                                                            : "whole_model");
       }},
      {"lrp_epsilon",
       [](ExperimentConfig& c, std::string_view v) {
         if (v == "auto") {
           c.lrp.epsilon.reset();
         } else {
           c.lrp.epsilon = ToDouble("lrp_epsilon", v);
         }
       },
       [](const ExperimentConfig& c) {
         return c.lrp.epsilon ? FormatDouble(*c.lrp.epsilon) : std::string("auto");
       }},
      FEDLIAB_DOUBLE_FIELD("reputation_decay", reputation_decay),
      FEDLIAB_SIZE_FIELD("overhead_calls", overhead_calls),
      FEDLIAB_STRING_FIELD("out", out_dir),
  };
  return fields;
}

#undef FEDLIAB_SIZE_FIELD
#undef FEDLIAB_DOUBLE_FIELD
#undef FEDLIAB_BOOL_FIELD
#undef FEDLIAB_STRING_FIELD

ExperimentConfig ParseManifest(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "fedliab-manifest" ||
      !doc.contains("config") || !doc["config"].is_object()) {
    throw ConfigError("JSON config must be a fedliab manifest");
  }
  ExperimentConfig cfg;
  for (const auto& [key, value] : doc["config"].items()) {
    if (!value.is_string()) throw ConfigError("manifest value for " + key + " is not a string");
    SetConfigValue(cfg, key, value.get<std::string>());
  }
  return cfg;
}

}  // namespace

std::string_view ScenarioName(Scenario scenario) {
  switch (scenario) {
    case Scenario::kAllCorrect: return "all_correct";
    case Scenario::kWithMisbehaving: return "with_misbehaving";
    case Scenario::kAuditedRetrain: return "audited_retrain";
  }
  return "unknown";
}

std::optional<Scenario> ParseScenario(std::string_view name) {
  for (auto s : {Scenario::kAllCorrect, Scenario::kWithMisbehaving, Scenario::kAuditedRetrain}) {
    if (ScenarioName(s) == name) return s;
  }
  return std::nullopt;
}

void SetConfigValue(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : Fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> ConfigEntries(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : Fields()) out.emplace_back(std::string(f.key), f.get(cfg));
  return out;
}

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (dataset == DatasetSource::kIdx &&
      (train_images.empty() || train_labels.empty() || test_images.empty() ||
       test_labels.empty())) {
    fail("dataset = idx needs train_images, train_labels, test_images and test_labels");
  }
  if (dataset == DatasetSource::kSynthetic) {
    if (class_count < 2) fail("synthetic data needs class_count >= 2");
    if (image_size < 16) fail("image_size must be at least 16 for the reference network");
    if (test_per_class == 0) fail("test_per_class must be >= 1");
  }
  if (nodes < 2) fail("nodes must be >= 2 (the detector compares nodes)");
  if (per_node_size == 0) fail("per_node_size must be >= 1");
  if (!(bias_factor > 0.0)) fail("bias_factor must be positive");
  try {
    train.Validate();
    audit.Validate();
    lrp.Validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (!(train.lr > 0.0)) fail("lr must be positive");
  if (train.threads == 0) fail("threads must be >= 1");
  if (corruption.source_class == corruption.target_class) {
    fail("source_class and target_class must differ");
  }
  const std::size_t classes = class_count;
  if (classes != 0 && (static_cast<std::size_t>(corruption.source_class) >= classes ||
                       static_cast<std::size_t>(corruption.target_class) >= classes)) {
    fail("source_class and target_class must be below class_count");
  }
  if (misbehaving_node && *misbehaving_node >= nodes) {
    fail("misbehaving_node " + std::to_string(*misbehaving_node) + " is not a node id (nodes = " +
         std::to_string(nodes) + ")");
  }
  if (scenario != Scenario::kAllCorrect && !misbehaving_node) {
    fail(std::string(ScenarioName(scenario)) + " needs misbehaving_node");
  }
  if (!(reputation_decay >= 0.0 && reputation_decay < 1.0)) {
    fail("reputation_decay must lie in [0, 1)");
  }
  if (overhead_calls == 0) fail("overhead_calls must be >= 1");
}

ExperimentConfig ParseConfig(std::string_view text) {
  const std::string_view body = Trim(text);
  ExperimentConfig cfg;
  if (!body.empty() && body.front() == '{') {
    cfg = ParseManifest(body);
  } else {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      std::string_view line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = Trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
      }
      const auto key = Trim(line.substr(0, eq));
      const auto value = Trim(line.substr(eq + 1));
      try {
        SetConfigValue(cfg, key, value);
      } catch (const ConfigError& e) {
        throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }
  cfg.Validate();
  return cfg;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return ParseConfig(text.str());
}

std::string ManifestJson(const ExperimentConfig& cfg) {
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  for (const auto& [key, value] : ConfigEntries(cfg)) config[key] = value;
  nlohmann::ordered_json doc;
  doc["format"] = "fedliab-manifest";
  doc["version"] = 1;
  doc["config"] = config;
  return doc.dump(2) + "\n";
}

}  // namespace fedliab::harness

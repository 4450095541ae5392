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

#ifndef FEDLIAB_HARNESS_EXPERIMENT_H_
#define FEDLIAB_HARNESS_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedliab/audit/audit.h"
#include "fedliab/data/dataset.h"
#include "fedliab/fl/simulator.h"
#include "fedliab/harness/config.h"
#include "fedliab/lrp/lrp.h"
#include "fedliab/nn/network.h"

namespace fedliab::harness {

// Clean data for one experiment, fully determined by the config and its seed.
struct ExperimentData {
  data::Dataset test;
  data::PartitionPlan plan;
  data::Partition partition;
};

ExperimentData PrepareData(const ExperimentConfig& cfg);

// Reference classifier for the data's image size and class count, with its
// seeded initial parameters.
std::pair<nn::Network, nn::LayeredParams> BuildModel(const ExperimentConfig& cfg,
                                                     const data::Dataset& like);

// Node states for the given roster of original node ids, renumbered 0..N'-1.
// The misbehaving node's data is label-flipped when `with_attack` is set.
std::vector<fl::NodeState> BuildNodes(const ExperimentConfig& cfg, const ExperimentData& data,
                                      const std::vector<std::size_t>& roster, bool with_attack);

// One audited decision.
struct AuditOutcome {
  audit::AuditReport report;
  std::size_t sample_index = 0;
  std::size_t predicted_class = 0;
  lrp::LayerRelevanceVector relevance;
  audit::ScoreMatrix radist;
};

// Audits test sample `index`: relevance of the predicted class, RAdist against
// `distances`, threshold detection.
AuditOutcome AuditSample(const nn::Network& net, const nn::LayeredParams& params,
                         const data::Dataset& test, std::size_t index,
                         const audit::DistanceTensor& distances, const ExperimentConfig& cfg);

// Picks the decision to audit: among misclassified test samples of the
// attacked class, the one whose audit gives the largest
// max(per_node_mean) / global_mean. Without any misclassification, the
// correctly classified sample of that class with the smallest logit margin.
// Ties go to the lowest index.
AuditOutcome SelectAndAudit(const nn::Network& net, const nn::LayeredParams& params,
                            const data::Dataset& test, const audit::DistanceTensor& distances,
                            const ExperimentConfig& cfg);

inline constexpr const char* kRuleMisclassified =
    "most RAdist-suspicious misclassified test sample of the attacked class";
inline constexpr const char* kRuleLowestMargin =
    "no misclassified sample of the attacked class; lowest-margin correct sample";

struct ScenarioResult {
  Scenario scenario = Scenario::kWithMisbehaving;
  // Original ids of the nodes that trained, in training order.
  std::vector<std::size_t> roster;
  bool attacked = false;
  fl::TrainingResult training;
  fl::EvalResult test_eval;
  audit::DistanceTensor distances;
  audit::ScoreMatrix whole_model_cosine;
  audit::ScoreMatrix local_accuracy;
  AuditOutcome audit;
  // audited_retrain: the with_misbehaving run whose audit chose the exclusions.
  std::shared_ptr<const ScenarioResult> audited_run;

  // E x N' traces in [0, 1], higher is more suspicious.
  audit::ScoreMatrix NormalizedRadist() const;
  audit::ScoreMatrix NormalizedCosine(CosineBaseline baseline) const;
  audit::ScoreMatrix NormalizedReputationSuspicion(double decay) const;
};

// Trains `roster` (attacking node corrupted if `with_attack`) with the audit
// and reputation observers attached, evaluates on the test set and audits one
// decision.
ScenarioResult RunPipeline(const ExperimentConfig& cfg, const ExperimentData& data,
                           Scenario scenario, const std::vector<std::size_t>& roster,
                           bool with_attack);

// Retrains from scratch without the nodes `audited` flagged.
ScenarioResult RetrainWithoutFlagged(const ExperimentConfig& cfg, const ExperimentData& data,
                                     std::shared_ptr<const ScenarioResult> audited);

ScenarioResult RunScenario(const ExperimentConfig& cfg, const ExperimentData& data);
ScenarioResult RunScenario(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------

struct OverheadReport {
  double train_seconds_per_sample = 0.0;
  double inference_seconds_plain = 0.0;           // median
  double inference_seconds_with_relevance = 0.0;  // median, forward + LRP
  std::size_t inference_calls = 0;
  std::size_t model_bytes = 0;
  std::size_t similarity_payload_bytes_per_epoch_per_node = 0;  // L * 8
  double similarity_bytes_per_epoch_per_node = 0.0;  // payload + header share
  std::size_t relevance_bytes_per_sample = 0;        // input boundary only
  std::size_t relevance_full_map_bytes = 0;
  std::uint64_t message_count = 0;
  // Wall time per trained sample with and without the distance logger;
  // filled by MeasureObserverOverhead.
  std::optional<double> train_seconds_per_sample_plain;
  std::optional<double> train_seconds_per_sample_audited;

  double relevance_ratio() const {
    return inference_seconds_with_relevance / inference_seconds_plain;
  }
};

// Median wall-clock of `calls` forward passes with and without relevance
// propagation, cycling through the test set, plus storage accounting.
OverheadReport MeasureOverhead(const nn::Network& net, const nn::LayeredParams& params,
                               const data::Dataset& test, const ScenarioResult& result,
                               std::size_t calls, const lrp::LrpConfig& lrp_cfg = {});

// Trains `rounds` rounds `repeats` times with and without the distance logger,
// alternating, and stores the median wall time per sample of each.
void MeasureObserverOverhead(const ExperimentConfig& cfg, const ExperimentData& data,
                             std::size_t rounds, std::size_t repeats, OverheadReport& report);

std::string OverheadJson(const OverheadReport& report);

}  // namespace fedliab::harness

#endif  // FEDLIAB_HARNESS_EXPERIMENT_H_

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

#include "fedliab/harness/experiment.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "fedliab/nn/params.h"
#include "fedliab/util/random.h"

namespace fedliab::harness {

namespace {

// Stream tags for everything derived from the master seed.
constexpr std::uint64_t kTagData = 0xda7a;
constexpr std::uint64_t kTagModel = 0x1417;

using Clock = std::chrono::steady_clock;

double Median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid),
                   values.end());
  double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::vector<std::size_t> AllNodes(const ExperimentConfig& cfg) {
  std::vector<std::size_t> roster(cfg.nodes);
  std::iota(roster.begin(), roster.end(), std::size_t{0});
  return roster;
}

void CheckClassRange(const ExperimentConfig& cfg, std::size_t classes) {
  if (static_cast<std::size_t>(cfg.corruption.source_class) >= classes ||
      static_cast<std::size_t>(cfg.corruption.target_class) >= classes) {
    throw ConfigError("source_class/target_class outside the dataset's " +
                      std::to_string(classes) + " classes");
  }
}

double Suspicion(const audit::AuditReport& report) {
  if (!(report.global_mean > 0.0)) return 0.0;
  return *std::max_element(report.per_node_mean.begin(), report.per_node_mean.end()) /
         report.global_mean;
}

ScenarioResult Pipeline(const ExperimentConfig& cfg, const ExperimentData& data,
                        Scenario scenario, const std::vector<std::size_t>& roster,
                        bool with_attack, bool run_audit) {
  auto [net, init] = BuildModel(cfg, data.test);
  auto nodes = BuildNodes(cfg, data, roster, with_attack);

  ScenarioResult result;
  result.scenario = scenario;
  result.roster = roster;
  result.attacked = with_attack && cfg.misbehaving_node &&
                    std::find(roster.begin(), roster.end(), *cfg.misbehaving_node) != roster.end();

  const std::size_t epochs = cfg.train.rounds;
  audit::DistanceLogger logger(epochs, nodes.size(), net.param_layer_count(),
                               cfg.distance_reference);
  std::vector<const data::Dataset*> local_sets;
  for (const auto& node : nodes) local_sets.push_back(&node.dataset);
  audit::ReputationTracker reputation(net, local_sets, epochs);
  std::vector<fl::RoundObserver*> observers{&logger, &reputation};

  result.training = fl::RunTraining(net, init, nodes, cfg.train, observers);
  result.test_eval = fl::Evaluate(net, result.training.final_params, data.test);
  result.distances = logger.tensor();
  result.whole_model_cosine = logger.whole_model();
  result.local_accuracy = reputation.local_accuracy();

  if (run_audit && nodes.size() >= 2) {
    result.audit = SelectAndAudit(net, result.training.final_params, data.test,
                                  result.distances, cfg);
    for (auto& id : result.audit.report.flagged) id = roster[id];
  }
  return result;
}

}  // namespace

ExperimentData PrepareData(const ExperimentConfig& cfg) {
  cfg.Validate();
  const std::uint64_t seed = cfg.seed();
  ExperimentData out;
  data::Dataset pool;
  std::size_t classes = cfg.class_count;

  auto make_plan = [&] {
    auto plan = data::MakePartitionPlan(cfg.nodes, cfg.per_node_size, cfg.bias_factor, classes,
                                        StreamKey(seed, {kTagData, 2}));
    if (cfg.attacker_prefers_source && cfg.misbehaving_node) {
      auto& preferred = plan.preferred_class_per_node;
      auto it = std::find(preferred.begin(), preferred.end(), cfg.corruption.source_class);
      if (it != preferred.end()) {
        std::swap(*it, preferred[*cfg.misbehaving_node]);
      } else {
        preferred[*cfg.misbehaving_node] = cfg.corruption.source_class;
      }
    }
    return plan;
  };

  if (cfg.dataset == DatasetSource::kSynthetic) {
    out.plan = make_plan();
    auto required = data::RequiredPerClass(out.plan, classes);
    pool = data::SynthGenerate(classes, *std::max_element(required.begin(), required.end()),
                               StreamKey(seed, {kTagData, 0}), cfg.image_size, cfg.image_size);
    out.test = data::SynthGenerate(classes, cfg.test_per_class, StreamKey(seed, {kTagData, 1}),
                                   cfg.image_size, cfg.image_size);
  } else {
    std::optional<std::size_t> declared;
    if (cfg.class_count != 0) declared = cfg.class_count;
    pool = data::LoadIdx(cfg.train_images, cfg.train_labels, declared);
    out.test = data::LoadIdx(cfg.test_images, cfg.test_labels, pool.class_count);
    if (pool.rows != out.test.rows || pool.cols != out.test.cols) {
      throw std::runtime_error("train and test images differ in size");
    }
    classes = pool.class_count;
    CheckClassRange(cfg, classes);
    out.plan = make_plan();
  }
  out.partition = data::PartitionNonIid(pool, out.plan);
  return out;
}

std::pair<nn::Network, nn::LayeredParams> BuildModel(const ExperimentConfig& cfg,
                                                     const data::Dataset& like) {
  return nn::BuildNetwork({1, like.rows, like.cols},
                          nn::ReferenceLayers(like.rows, like.cols, like.class_count),
                          StreamKey(cfg.seed(), {kTagModel}));
}

std::vector<fl::NodeState> BuildNodes(const ExperimentConfig& cfg, const ExperimentData& data,
                                      const std::vector<std::size_t>& roster, bool with_attack) {
  std::vector<fl::NodeState> nodes;
  for (std::size_t k = 0; k < roster.size(); ++k) {
    const std::size_t id = roster[k];
    if (id >= data.partition.locals.size()) {
      throw std::out_of_range("roster names node " + std::to_string(id) + " of " +
                              std::to_string(data.partition.locals.size()));
    }
    fl::NodeState node{k, data.partition.locals[id]};
    if (with_attack && cfg.misbehaving_node && id == *cfg.misbehaving_node) {
      node.dataset = data::Corrupt(node.dataset, cfg.corruption);
    }
    nodes.push_back(std::move(node));
  }
  return nodes;
}

AuditOutcome AuditSample(const nn::Network& net, const nn::LayeredParams& params,
                         const data::Dataset& test, std::size_t index,
                         const audit::DistanceTensor& distances, const ExperimentConfig& cfg) {
  if (index >= test.size()) {
    throw std::out_of_range("sample " + std::to_string(index) + " outside the test set of " +
                            std::to_string(test.size()));
  }
  AuditOutcome out;
  out.sample_index = index;
  auto fwd = nn::Forward(net, params, test.images[index]);
  out.predicted_class = nn::Argmax(fwd.logits.data());
  auto map = lrp::Propagate(net, params, fwd.trace, out.predicted_class, cfg.lrp);
  out.relevance = lrp::ReduceToLayerVector(map, net);
  out.radist = audit::ComputeRadist(distances, out.relevance);
  out.report = audit::Detect(out.radist, cfg.audit, "test:" + std::to_string(index));
  return out;
}

AuditOutcome SelectAndAudit(const nn::Network& net, const nn::LayeredParams& params,
                            const data::Dataset& test, const audit::DistanceTensor& distances,
                            const ExperimentConfig& cfg) {
  const int source = cfg.corruption.source_class;
  std::optional<AuditOutcome> best;
  double best_score = -1.0;
  std::optional<std::size_t> lowest_margin;
  double lowest = std::numeric_limits<double>::infinity();

  for (std::size_t i = 0; i < test.size(); ++i) {
    if (test.labels[i] != source) continue;
    auto logits = nn::Forward(net, params, test.images[i]).logits;
    const auto pred = nn::Argmax(logits.data());
    if (static_cast<int>(pred) != source) {
      auto outcome = AuditSample(net, params, test, i, distances, cfg);
      const double score = Suspicion(outcome.report);
      if (score > best_score) {
        best_score = score;
        best = std::move(outcome);
      }
      continue;
    }
    double runner_up = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < logits.size(); ++c) {
      if (static_cast<int>(c) != source) runner_up = std::max(runner_up, logits[c]);
    }
    const double margin = logits[static_cast<std::size_t>(source)] - runner_up;
    if (margin < lowest) {
      lowest = margin;
      lowest_margin = i;
    }
  }
  if (best) {
    best->report.selection_rule = kRuleMisclassified;
    return *best;
  }
  if (!lowest_margin) {
    throw std::runtime_error("test set has no sample of class " + std::to_string(source));
  }
  auto outcome = AuditSample(net, params, test, *lowest_margin, distances, cfg);
  outcome.report.selection_rule = kRuleLowestMargin;
  return outcome;
}

audit::ScoreMatrix ScenarioResult::NormalizedRadist() const {
  return audit::NormalizeScores(audit.radist);
}

audit::ScoreMatrix ScenarioResult::NormalizedCosine(CosineBaseline baseline) const {
  return audit::NormalizeScores(baseline == CosineBaseline::kLayerMean
                                    ? audit::BaselineCosineScore(distances)
                                    : whole_model_cosine);
}

audit::ScoreMatrix ScenarioResult::NormalizedReputationSuspicion(double decay) const {
  return audit::NormalizeScores(
      audit::ReputationSuspicion(audit::BaselineReputation(local_accuracy, decay)));
}

ScenarioResult RunPipeline(const ExperimentConfig& cfg, const ExperimentData& data,
                           Scenario scenario, const std::vector<std::size_t>& roster,
                           bool with_attack) {
  return Pipeline(cfg, data, scenario, roster, with_attack, true);
}

ScenarioResult RetrainWithoutFlagged(const ExperimentConfig& cfg, const ExperimentData& data,
                                     std::shared_ptr<const ScenarioResult> audited) {
  if (!audited) throw std::invalid_argument("retraining needs the audited run");
  const auto& flagged = audited->audit.report.flagged;
  std::vector<std::size_t> roster;
  for (std::size_t id : audited->roster) {
    if (std::find(flagged.begin(), flagged.end(), id) == flagged.end()) roster.push_back(id);
  }
  if (roster.empty()) throw std::runtime_error("the audit flagged every node");
  auto result = Pipeline(cfg, data, Scenario::kAuditedRetrain, roster, true, false);
  // The report that justified the exclusions stays with the retrained model.
  result.audit = audited->audit;
  result.audited_run = std::move(audited);
  return result;
}

ScenarioResult RunScenario(const ExperimentConfig& cfg, const ExperimentData& data) {
  const auto all = AllNodes(cfg);
  switch (cfg.scenario) {
    case Scenario::kAllCorrect:
      return RunPipeline(cfg, data, Scenario::kAllCorrect, all, false);
    case Scenario::kWithMisbehaving:
      return RunPipeline(cfg, data, Scenario::kWithMisbehaving, all, true);
    case Scenario::kAuditedRetrain: {
      auto audited = std::make_shared<const ScenarioResult>(
          RunPipeline(cfg, data, Scenario::kWithMisbehaving, all, true));
      return RetrainWithoutFlagged(cfg, data, std::move(audited));
    }
  }
  throw std::logic_error("unknown scenario");
}

ScenarioResult RunScenario(const ExperimentConfig& cfg) {
  return RunScenario(cfg, PrepareData(cfg));
}

// --- overhead -----------------------------------------------------------------

OverheadReport MeasureOverhead(const nn::Network& net, const nn::LayeredParams& params,
                               const data::Dataset& test, const ScenarioResult& result,
                               std::size_t calls, const lrp::LrpConfig& lrp_cfg) {
  if (test.empty()) throw std::invalid_argument("overhead measurement needs test samples");
  if (calls == 0) throw std::invalid_argument("overhead measurement needs at least one call");
  OverheadReport report;
  report.inference_calls = calls;

  std::vector<double> plain, with_relevance;
  plain.reserve(calls);
  with_relevance.reserve(calls);
  double sink = 0.0;
  const std::size_t warmup = std::min<std::size_t>(10, calls);
  for (std::size_t k = 0; k < warmup + calls; ++k) {
    const Tensor& x = test.images[k % test.size()];
    auto t0 = Clock::now();
    auto plain_fwd = nn::Forward(net, params, x);
    auto t1 = Clock::now();
    auto fwd = nn::Forward(net, params, x);
    auto map = lrp::Propagate(net, params, fwd.trace, nn::Argmax(fwd.logits.data()), lrp_cfg);
    auto t2 = Clock::now();
    sink += plain_fwd.logits[0] + map.input()[0];
    if (k < warmup) continue;
    plain.push_back(std::chrono::duration<double>(t1 - t0).count());
    with_relevance.push_back(std::chrono::duration<double>(t2 - t1).count());
  }
  if (!std::isfinite(sink)) throw std::runtime_error("non-finite output during timing");
  report.inference_seconds_plain = Median(plain);
  report.inference_seconds_with_relevance = Median(with_relevance);

  report.model_bytes = nn::SerializedParamsSize(params);
  const auto& d = result.distances;
  const std::size_t layers = net.param_layer_count();
  report.similarity_payload_bytes_per_epoch_per_node = layers * sizeof(double);
  const std::size_t entries = d.epochs() * d.nodes();
  if (entries > 0) {
    const std::size_t header = audit::DistanceBinarySize(d) - d.values().size() * sizeof(double);
    report.similarity_bytes_per_epoch_per_node =
        static_cast<double>(report.similarity_payload_bytes_per_epoch_per_node) +
        static_cast<double>(header) / static_cast<double>(entries);
  }
  report.relevance_bytes_per_sample = lrp::InputRelevanceBytes(net);
  report.relevance_full_map_bytes = lrp::FullMapBytes(net);
  report.message_count = result.training.message_count;
  if (result.training.samples_processed > 0) {
    report.train_seconds_per_sample =
        result.training.train_seconds / static_cast<double>(result.training.samples_processed);
  }
  return report;
}

void MeasureObserverOverhead(const ExperimentConfig& cfg, const ExperimentData& data,
                             std::size_t rounds, std::size_t repeats, OverheadReport& report) {
  if (rounds == 0 || repeats == 0) {
    throw std::invalid_argument("observer overhead needs rounds and repeats >= 1");
  }
  const auto model = BuildModel(cfg, data.test);
  const nn::Network& net = model.first;
  auto nodes = BuildNodes(cfg, data, AllNodes(cfg), cfg.misbehaving_node.has_value());
  fl::TrainConfig train = cfg.train;
  train.rounds = rounds;

  auto timed = [&](bool audited) {
    audit::DistanceLogger logger(rounds, nodes.size(), net.param_layer_count(),
                                 cfg.distance_reference);
    std::vector<fl::RoundObserver*> observers;
    if (audited) observers.push_back(&logger);
    auto t0 = Clock::now();
    auto res = fl::RunTraining(net, model.second, nodes, train, observers);
    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    return wall / static_cast<double>(res.samples_processed);
  };
  std::vector<double> plain, audited;
  for (std::size_t r = 0; r < repeats; ++r) {
    // Alternate the order so drift affects both sides alike.
    if (r % 2 == 0) {
      plain.push_back(timed(false));
      audited.push_back(timed(true));
    } else {
      audited.push_back(timed(true));
      plain.push_back(timed(false));
    }
  }
  report.train_seconds_per_sample_plain = Median(plain);
  report.train_seconds_per_sample_audited = Median(audited);
}

std::string OverheadJson(const OverheadReport& report) {
  nlohmann::ordered_json doc;
  doc["train_seconds_per_sample"] = report.train_seconds_per_sample;
  doc["inference_seconds_plain"] = report.inference_seconds_plain;
  doc["inference_seconds_with_relevance"] = report.inference_seconds_with_relevance;
  doc["relevance_ratio"] = report.relevance_ratio();
  doc["inference_calls"] = report.inference_calls;
  doc["model_bytes"] = report.model_bytes;
  doc["similarity_payload_bytes_per_epoch_per_node"] =
      report.similarity_payload_bytes_per_epoch_per_node;
  doc["similarity_bytes_per_epoch_per_node"] = report.similarity_bytes_per_epoch_per_node;
  doc["relevance_bytes_per_sample"] = report.relevance_bytes_per_sample;
  doc["relevance_full_map_bytes"] = report.relevance_full_map_bytes;
  doc["message_count"] = report.message_count;
  if (report.train_seconds_per_sample_plain && report.train_seconds_per_sample_audited) {
    doc["train_seconds_per_sample_plain"] = *report.train_seconds_per_sample_plain;
    doc["train_seconds_per_sample_audited"] = *report.train_seconds_per_sample_audited;
    doc["observer_overhead_fraction"] =
        *report.train_seconds_per_sample_audited / *report.train_seconds_per_sample_plain - 1.0;
  }
  return doc.dump(2) + "\n";
}

}  // namespace fedliab::harness

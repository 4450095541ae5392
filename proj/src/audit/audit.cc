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

#include "fedliab/audit/audit.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "fedliab/util/binary_io.h"

namespace fedliab::audit {

DistanceTensor::DistanceTensor(std::size_t epochs, std::size_t nodes, std::size_t layers)
    : epochs_(epochs), nodes_(nodes), layers_(layers), values_(epochs * nodes * layers, 0.0) {}

DistanceTensor::DistanceTensor(std::size_t epochs, std::size_t nodes, std::size_t layers,
                               std::vector<double> values)
    : epochs_(epochs), nodes_(nodes), layers_(layers), values_(std::move(values)) {
  if (values_.size() != epochs * nodes * layers) {
    throw std::invalid_argument("distance tensor needs " +
                                std::to_string(epochs * nodes * layers) + " values, got " +
                                std::to_string(values_.size()));
  }
}

double CosineDistance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("CosineDistance: lengths " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()) + " differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  return std::clamp(1.0 - dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 2.0);
}

namespace {

const nn::LayeredParams& Reference(const fl::RoundRecord& record, DistanceReference ref) {
  return ref == DistanceReference::kSameRound ? *record.global_params : *record.broadcast;
}

}  // namespace

void LogRound(const fl::RoundRecord& record, DistanceTensor& tensor,
              DistanceReference reference) {
  if (record.epoch >= tensor.epochs()) {
    throw std::out_of_range("epoch " + std::to_string(record.epoch) +
                            " outside distance tensor with " +
                            std::to_string(tensor.epochs()) + " epochs");
  }
  const auto& global = Reference(record, reference);
  if (record.local_params.size() != tensor.nodes() || global.layer_count() != tensor.layers()) {
    throw std::invalid_argument("round record does not match distance tensor dims");
  }
  for (std::size_t n = 0; n < tensor.nodes(); ++n) {
    for (std::size_t l = 0; l < tensor.layers(); ++l) {
      Tensor local = nn::FlattenLayerParams(record.local_params[n], l);
      Tensor avg = nn::FlattenLayerParams(global, l);
      tensor.set(record.epoch, n, l, CosineDistance(local.data(), avg.data()));
    }
  }
}

DistanceLogger::DistanceLogger(std::size_t epochs, std::size_t nodes, std::size_t layers,
                               DistanceReference reference)
    : tensor_(epochs, nodes, layers), whole_model_(epochs, nodes), reference_(reference) {}

void DistanceLogger::OnRound(const fl::RoundRecord& record) {
  LogRound(record, tensor_, reference_);
  const auto& global = Reference(record, reference_);
  std::vector<double> flat_global;
  for (std::size_t l = 0; l < global.layer_count(); ++l) {
    auto t = nn::FlattenLayerParams(global, l);
    flat_global.insert(flat_global.end(), t.data().begin(), t.data().end());
  }
  std::vector<double> flat_local;
  for (std::size_t n = 0; n < record.local_params.size(); ++n) {
    flat_local.clear();
    for (std::size_t l = 0; l < global.layer_count(); ++l) {
      auto t = nn::FlattenLayerParams(record.local_params[n], l);
      flat_local.insert(flat_local.end(), t.data().begin(), t.data().end());
    }
    whole_model_.at(record.epoch, n) = CosineDistance(flat_local, flat_global);
  }
}

ScoreMatrix ComputeRadist(const DistanceTensor& tensor, const lrp::LayerRelevanceVector& r) {
  if (r.size() != tensor.layers()) {
    throw std::invalid_argument("relevance vector has " + std::to_string(r.size()) +
                                " entries, distance tensor has " +
                                std::to_string(tensor.layers()) + " layers");
  }
  ScoreMatrix m(tensor.epochs(), tensor.nodes());
  for (std::size_t e = 0; e < tensor.epochs(); ++e) {
    for (std::size_t n = 0; n < tensor.nodes(); ++n) {
      double acc = 0.0;
      for (std::size_t l = 0; l < tensor.layers(); ++l) acc += tensor.at(e, n, l) * r.weights[l];
      m.at(e, n) = acc;
    }
  }
  return m;
}

void AuditConfig::Validate() const {
  if (!(alpha > 1.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("alpha must be a finite number greater than 1");
  }
}

std::vector<double> PerNodeMean(const ScoreMatrix& scores) {
  std::vector<double> means(scores.nodes, 0.0);
  for (std::size_t e = 0; e < scores.epochs; ++e) {
    for (std::size_t n = 0; n < scores.nodes; ++n) means[n] += scores.at(e, n);
  }
  for (double& m : means) m /= static_cast<double>(scores.epochs);
  return means;
}

AuditReport Detect(const ScoreMatrix& radist, const AuditConfig& cfg, std::string sample_id) {
  cfg.Validate();
  if (radist.epochs == 0) throw std::invalid_argument("Detect: no epochs");
  if (radist.nodes < 2) {
    throw std::invalid_argument("Detect: need at least two nodes to compare against");
  }
  AuditReport report;
  report.alpha = cfg.alpha;
  report.leave_one_out = cfg.leave_one_out;
  report.sample_id = std::move(sample_id);
  report.per_node_mean = PerNodeMean(radist);
  const double n = static_cast<double>(radist.nodes);
  const double total = std::accumulate(report.per_node_mean.begin(), report.per_node_mean.end(), 0.0);
  report.global_mean = total / n;
  for (std::size_t k = 0; k < radist.nodes; ++k) {
    double reference = cfg.leave_one_out ? (total - report.per_node_mean[k]) / (n - 1.0)
                                         : report.global_mean;
    if (report.per_node_mean[k] > cfg.alpha * reference) report.flagged.push_back(k);
  }
  return report;
}

ScoreMatrix BaselineCosineScore(const DistanceTensor& tensor) {
  lrp::LayerRelevanceVector uniform;
  uniform.weights.assign(tensor.layers(), 1.0 / static_cast<double>(tensor.layers()));
  return ComputeRadist(tensor, uniform);
}

ReputationTracker::ReputationTracker(const nn::Network& net,
                                     std::vector<const data::Dataset*> datasets,
                                     std::size_t epochs)
    : net_(net), datasets_(std::move(datasets)), accuracy_(epochs, datasets_.size()) {}

void ReputationTracker::OnRound(const fl::RoundRecord& record) {
  if (record.local_params.size() != datasets_.size()) {
    throw std::invalid_argument("reputation tracker: node count changed");
  }
  for (std::size_t n = 0; n < datasets_.size(); ++n) {
    accuracy_.at(record.epoch, n) = fl::Evaluate(net_, record.local_params[n], *datasets_[n]).overall;
  }
}

ScoreMatrix BaselineReputation(const ScoreMatrix& local_accuracy, double decay) {
  ScoreMatrix rep(local_accuracy.epochs, local_accuracy.nodes);
  for (std::size_t n = 0; n < rep.nodes; ++n) {
    for (std::size_t e = 0; e < rep.epochs; ++e) {
      rep.at(e, n) = e == 0 ? local_accuracy.at(0, n)
                            : decay * rep.at(e - 1, n) + (1.0 - decay) * local_accuracy.at(e, n);
    }
  }
  return rep;
}

ScoreMatrix ReputationSuspicion(const ScoreMatrix& reputation) {
  ScoreMatrix out = reputation;
  for (double& v : out.values) v = 1.0 - v;
  return out;
}

ScoreMatrix NormalizeScores(const ScoreMatrix& scores) {
  ScoreMatrix out = scores;
  if (scores.values.empty()) return out;
  auto [lo, hi] = std::minmax_element(scores.values.begin(), scores.values.end());
  const double low = *lo, range = *hi - *lo;
  for (double& v : out.values) v = range > 0.0 ? (v - low) / range : 0.0;
  return out;
}

// --- files -------------------------------------------------------------------

void WriteDistanceCsv(std::ostream& out, const DistanceTensor& tensor) {
  out << "epoch,node,layer,distance\n";
  for (std::size_t e = 0; e < tensor.epochs(); ++e) {
    for (std::size_t n = 0; n < tensor.nodes(); ++n) {
      for (std::size_t l = 0; l < tensor.layers(); ++l) {
        out << e << ',' << n << ',' << l << ',' << FormatDouble(tensor.at(e, n, l)) << '\n';
      }
    }
  }
}

namespace {

std::string DistanceHeader(const DistanceTensor& tensor) {
  nlohmann::json header = {{"format", "fedliab-dist"},
                           {"dims", {tensor.epochs(), tensor.nodes(), tensor.layers()}}};
  return header.dump();
}

}  // namespace

void WriteDistanceBinary(std::ostream& out, const DistanceTensor& tensor) {
  WriteFramedHeader(out, DistanceHeader(tensor));
  WriteF64LE(out, tensor.values());
}

DistanceTensor ReadDistanceBinary(std::istream& in) {
  auto header = nlohmann::json::parse(ReadFramedHeader(in));
  if (header.value("format", "") != "fedliab-dist") {
    throw std::runtime_error("not a fedliab distance file");
  }
  auto dims = header.at("dims").get<std::vector<std::size_t>>();
  if (dims.size() != 3) throw std::runtime_error("distance file dims must have 3 entries");
  return DistanceTensor(dims[0], dims[1], dims[2], ReadF64LE(in, dims[0] * dims[1] * dims[2]));
}

std::size_t DistanceBinarySize(const DistanceTensor& tensor) {
  std::size_t header = DistanceHeader(tensor).size() + 1;
  return (header + kHeaderBlock - 1) / kHeaderBlock * kHeaderBlock + tensor.values().size() * 8;
}

std::string AuditReportJson(const AuditReport& report) {
  nlohmann::ordered_json doc;
  doc["alpha"] = report.alpha;
  doc["global_mean"] = report.global_mean;
  doc["per_node_mean"] = report.per_node_mean;
  doc["flagged"] = report.flagged;
  doc["sample_id"] = report.sample_id;
  doc["leave_one_out"] = report.leave_one_out;
  doc["selection_rule"] = report.selection_rule;
  return doc.dump(2) + "\n";
}

AuditReport ParseAuditReportJson(const std::string& text) {
  auto doc = nlohmann::json::parse(text);
  AuditReport report;
  report.alpha = doc.at("alpha").get<double>();
  report.global_mean = doc.at("global_mean").get<double>();
  report.per_node_mean = doc.at("per_node_mean").get<std::vector<double>>();
  report.flagged = doc.at("flagged").get<std::vector<std::size_t>>();
  report.sample_id = doc.at("sample_id").get<std::string>();
  report.leave_one_out = doc.value("leave_one_out", false);
  report.selection_rule = doc.value("selection_rule", "");
  return report;
}

void WriteScoreCsv(std::ostream& out,
                   const std::vector<std::pair<std::string, ScoreMatrix>>& metrics,
                   std::span<const std::size_t> node_ids) {
  out << "epoch,node,metric,value\n";
  for (const auto& [name, m] : metrics) {
    if (!node_ids.empty() && node_ids.size() != m.nodes) {
      throw std::invalid_argument("score matrix " + name + " has " + std::to_string(m.nodes) +
                                  " nodes but " + std::to_string(node_ids.size()) + " ids");
    }
    for (std::size_t e = 0; e < m.epochs; ++e) {
      for (std::size_t n = 0; n < m.nodes; ++n) {
        out << e << ',' << (node_ids.empty() ? n : node_ids[n]) << ',' << name << ','
            << FormatDouble(m.at(e, n)) << '\n';
      }
    }
  }
}

}  // namespace fedliab::audit

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

#ifndef FEDLIAB_AUDIT_AUDIT_H_
#define FEDLIAB_AUDIT_AUDIT_H_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedliab/data/dataset.h"
#include "fedliab/fl/simulator.h"
#include "fedliab/lrp/lrp.h"
#include "fedliab/nn/network.h"

namespace fedliab::audit {

// E x N x L cosine distances between every node's local model and the
// aggregate, per epoch and parameterized layer. Entries lie in [0, 2].
class DistanceTensor {
 public:
  DistanceTensor() = default;
  DistanceTensor(std::size_t epochs, std::size_t nodes, std::size_t layers);
  DistanceTensor(std::size_t epochs, std::size_t nodes, std::size_t layers,
                 std::vector<double> values);

  std::size_t epochs() const { return epochs_; }
  std::size_t nodes() const { return nodes_; }
  std::size_t layers() const { return layers_; }

  double at(std::size_t e, std::size_t n, std::size_t l) const {
    return values_[(e * nodes_ + n) * layers_ + l];
  }
  void set(std::size_t e, std::size_t n, std::size_t l, double v) {
    values_[(e * nodes_ + n) * layers_ + l] = v;
  }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const DistanceTensor&, const DistanceTensor&) = default;

 private:
  std::size_t epochs_ = 0, nodes_ = 0, layers_ = 0;
  std::vector<double> values_;
};

// Row-major E x N matrix of per-epoch, per-node scores (RAdist, baselines).
struct ScoreMatrix {
  std::size_t epochs = 0;
  std::size_t nodes = 0;
  std::vector<double> values;

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t e, std::size_t n, double fill = 0.0)
      : epochs(e), nodes(n), values(e * n, fill) {}

  double& at(std::size_t e, std::size_t n) { return values[e * nodes + n]; }
  double at(std::size_t e, std::size_t n) const { return values[e * nodes + n]; }
};

// 1 - a.b / (|a| |b|), clamped to [0, 2]. Both norms zero gives 0, exactly
// one zero norm gives 1.
double CosineDistance(std::span<const double> a, std::span<const double> b);

enum class DistanceReference {
  kSameRound,       // the aggregate produced from these local models
  kPreviousGlobal,  // the model broadcast at the start of the round
};

// Fills tensor[epoch, n, l] for every node and layer of the record.
void LogRound(const fl::RoundRecord& record, DistanceTensor& tensor,
              DistanceReference reference = DistanceReference::kSameRound);

// Server-side observer building the distance tensor during training. It also
// keeps whole-model distances for the alternative cosine baseline.
class DistanceLogger : public fl::RoundObserver {
 public:
  DistanceLogger(std::size_t epochs, std::size_t nodes, std::size_t layers,
                 DistanceReference reference = DistanceReference::kSameRound);

  void OnRound(const fl::RoundRecord& record) override;

  const DistanceTensor& tensor() const { return tensor_; }
  const ScoreMatrix& whole_model() const { return whole_model_; }

 private:
  DistanceTensor tensor_;
  ScoreMatrix whole_model_;
  DistanceReference reference_;
};

// M[e, n] = sum_l D[e, n, l] r[l].
ScoreMatrix ComputeRadist(const DistanceTensor& tensor, const lrp::LayerRelevanceVector& r);

struct AuditConfig {
  double alpha = 2.0;
  // Compare each node against the mean of the other nodes only.
  bool leave_one_out = false;

  void Validate() const;
};

struct AuditReport {
  double alpha = 2.0;
  bool leave_one_out = false;
  double global_mean = 0.0;
  std::vector<double> per_node_mean;
  std::vector<std::size_t> flagged;
  std::string sample_id;
  std::string selection_rule;
};

// Flags every node whose epoch-averaged score exceeds alpha times the mean
// over all nodes and epochs. Needs at least two nodes.
AuditReport Detect(const ScoreMatrix& radist, const AuditConfig& cfg,
                   std::string sample_id = "");

std::vector<double> PerNodeMean(const ScoreMatrix& scores);

// Mean over layers, i.e. RAdist with uniform layer weights.
ScoreMatrix BaselineCosineScore(const DistanceTensor& tensor);

// Records the accuracy of every submitted local model on that node's own
// (possibly corrupted) dataset.
class ReputationTracker : public fl::RoundObserver {
 public:
  ReputationTracker(const nn::Network& net, std::vector<const data::Dataset*> datasets,
                    std::size_t epochs);

  void OnRound(const fl::RoundRecord& record) override;
  const ScoreMatrix& local_accuracy() const { return accuracy_; }

 private:
  const nn::Network& net_;
  std::vector<const data::Dataset*> datasets_;
  ScoreMatrix accuracy_;
};

// rep[0] = acc[0]; rep[e] = decay * rep[e-1] + (1 - decay) * acc[e].
ScoreMatrix BaselineReputation(const ScoreMatrix& local_accuracy, double decay = 0.5);

// 1 - reputation, so that higher means more suspicious.
ScoreMatrix ReputationSuspicion(const ScoreMatrix& reputation);

// (x - min) / (max - min) over all entries; constant input maps to 0.
ScoreMatrix NormalizeScores(const ScoreMatrix& scores);

// --- files -----------------------------------------------------------------

// epoch,node,layer,distance
void WriteDistanceCsv(std::ostream& out, const DistanceTensor& tensor);
// Framed header {"format":"fedliab-dist","dims":[E,N,L]} (one 64-byte block),
// then E*N*L little-endian f64 in (e, n, l) order.
void WriteDistanceBinary(std::ostream& out, const DistanceTensor& tensor);
DistanceTensor ReadDistanceBinary(std::istream& in);
std::size_t DistanceBinarySize(const DistanceTensor& tensor);

std::string AuditReportJson(const AuditReport& report);
AuditReport ParseAuditReportJson(const std::string& text);

// epoch,node,metric,value. Node column n is node_ids[n] when ids are given.
void WriteScoreCsv(std::ostream& out,
                   const std::vector<std::pair<std::string, ScoreMatrix>>& metrics,
                   std::span<const std::size_t> node_ids = {});

}  // namespace fedliab::audit

#endif  // FEDLIAB_AUDIT_AUDIT_H_

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

#ifndef FEDLIAB_FL_SIMULATOR_H_
#define FEDLIAB_FL_SIMULATOR_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedliab/data/dataset.h"
#include "fedliab/nn/network.h"
#include "fedliab/nn/params.h"

namespace fedliab::fl {

struct NodeState {
  std::size_t node_id = 0;
  data::Dataset dataset;
};

enum class Aggregation { kUniform, kDatasetSizeWeighted };

struct TrainConfig {
  std::size_t rounds = 50;
  std::size_t local_passes = 1;
  std::size_t batch_size = 16;
  double lr = 0.05;
  Aggregation aggregation = Aggregation::kUniform;
  std::uint64_t master_seed = 0;
  // Worker threads for local training; results do not depend on this.
  std::size_t threads = 1;

  void Validate() const;
};

// One FL round as seen by the server: the model it broadcast, the N local
// models it received and the aggregate it produced.
struct RoundRecord {
  std::size_t epoch = 0;
  const nn::LayeredParams* broadcast = nullptr;
  std::span<const nn::LayeredParams> local_params;
  const nn::LayeredParams* global_params = nullptr;
};

// Server-side hook, called on the aggregation barrier after every round. It
// only ever sees const views of the training state.
class RoundObserver {
 public:
  virtual ~RoundObserver() = default;
  virtual void OnRound(const RoundRecord& record) = 0;
};

struct RoundSummary {
  std::size_t epoch = 0;
  std::size_t node_count = 0;
  double mean_local_loss = 0.0;
};

struct TrainingResult {
  nn::LayeredParams final_params;
  std::vector<RoundSummary> history;
  // Model transfers: one download and one upload per node per round.
  std::uint64_t message_count = 0;
  double train_seconds = 0.0;
  double observer_seconds = 0.0;
  std::size_t samples_processed = 0;
};

// local_passes passes of mini-batch SGD over the node's data, starting from
// `global`. Batch order is drawn from a stream keyed by
// (master_seed, node_id, epoch, pass). lr == 0 returns `global` unchanged.
nn::LayeredParams LocalTrain(const nn::Network& net, const NodeState& node,
                             const nn::LayeredParams& global, const TrainConfig& cfg,
                             std::size_t epoch, double* mean_loss = nullptr);

// Convex combination of `locals` with weights normalized to sum 1.
nn::LayeredParams Aggregate(std::span<const nn::LayeredParams> locals,
                            std::span<const double> weights);

std::vector<double> AggregationWeights(std::span<const NodeState> nodes, Aggregation mode);

TrainingResult RunTraining(const nn::Network& net, const nn::LayeredParams& initial,
                           std::span<const NodeState> nodes, const TrainConfig& cfg,
                           std::span<RoundObserver* const> observers = {});

struct EvalResult {
  double overall = 0.0;
  // NaN for classes absent from the dataset.
  std::vector<double> per_class;
  std::vector<std::size_t> class_totals;
};

EvalResult Evaluate(const nn::Network& net, const nn::LayeredParams& params,
                    const data::Dataset& ds);

// Checkpoint file for one round: framed JSON header
//   {"format":"fedliab-round","epoch":e,"nodes":N,"layers":[...shapes...]}
// then each local model and finally the aggregate, every one as the
// little-endian f64 payload of nn::WriteParams (without its own header).
class CheckpointWriter : public RoundObserver {
 public:
  explicit CheckpointWriter(std::string directory);
  void OnRound(const RoundRecord& record) override;
  std::string PathFor(std::size_t epoch) const;

 private:
  std::string directory_;
};

struct Checkpoint {
  std::size_t epoch = 0;
  std::vector<nn::LayeredParams> local_params;
  nn::LayeredParams global_params;
};

Checkpoint ReadCheckpoint(const std::string& path);

}  // namespace fedliab::fl

#endif  // FEDLIAB_FL_SIMULATOR_H_

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

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "fedliab/audit/audit.h"
#include "fedliab/fl/simulator.h"
#include "fedliab/util/random.h"
#include "oracles.h"

namespace fedliab::fl {
namespace {

using nn::LayeredParams;
using nn::Network;

data::Dataset RandomDataset(std::size_t n, std::size_t classes, std::uint64_t seed) {
  CounterRng rng(seed);
  data::Dataset ds;
  ds.class_count = classes;
  ds.rows = 6;
  ds.cols = 6;
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.push_back(oracle::RandomTensor({1, 6, 6}, rng, 0, 1));
    ds.labels.push_back(static_cast<int>(i % classes));
  }
  return ds;
}

Network SmallNet() {
  return Network({1, 6, 6}, {nn::Conv2D{1, 2, 3}, nn::ReLU{}, nn::Flatten{}, nn::Dense{32, 3}});
}

std::vector<NodeState> MakeNodes(std::size_t count, std::size_t per_node) {
  std::vector<NodeState> nodes;
  for (std::size_t n = 0; n < count; ++n) {
    nodes.push_back({n, RandomDataset(per_node + n, 3, 100 + n)});
  }
  return nodes;
}

TrainConfig SmallConfig(std::size_t rounds) {
  TrainConfig cfg;
  cfg.rounds = rounds;
  cfg.batch_size = 4;
  cfg.lr = 0.1;
  cfg.master_seed = 5;
  return cfg;
}

class CountingObserver : public RoundObserver {
 public:
  void OnRound(const RoundRecord& record) override {
    epochs.push_back(record.epoch);
    sizes.push_back(record.local_params.size());
    globals.push_back(*record.global_params);
  }
  std::vector<std::size_t> epochs, sizes;
  std::vector<LayeredParams> globals;
};

TEST(LocalTrainTest, ZeroLearningRateReturnsGlobal) {
  Network net = SmallNet();
  auto global = nn::InitializeParams(net, 1);
  auto cfg = SmallConfig(1);
  cfg.lr = 0.0;
  NodeState node{0, RandomDataset(10, 3, 1)};
  EXPECT_EQ(LocalTrain(net, node, global, cfg, 0), global);
}

TEST(LocalTrainTest, DeterministicForSameInputs) {
  Network net = SmallNet();
  auto global = nn::InitializeParams(net, 1);
  NodeState node{3, RandomDataset(17, 3, 2)};
  auto cfg = SmallConfig(1);
  EXPECT_EQ(LocalTrain(net, node, global, cfg, 4), LocalTrain(net, node, global, cfg, 4));
  EXPECT_NE(LocalTrain(net, node, global, cfg, 4), LocalTrain(net, node, global, cfg, 5));
}

TEST(LocalTrainTest, OneSampleOneStepIsOneSgdStep) {
  Network net = SmallNet();
  auto global = nn::InitializeParams(net, 1);
  NodeState node{0, RandomDataset(1, 3, 3)};
  auto cfg = SmallConfig(1);
  cfg.batch_size = 1;
  auto grads = nn::LossAndGrad(net, global, node.dataset.images, node.dataset.labels).grads;
  EXPECT_EQ(LocalTrain(net, node, global, cfg, 0), nn::SgdStep(global, grads, cfg.lr));
}

TEST(LocalTrainTest, EmptyDatasetIsAnError) {
  Network net = SmallNet();
  NodeState node{0, data::Dataset{}};
  EXPECT_THROW(LocalTrain(net, node, nn::InitializeParams(net, 0), SmallConfig(1), 0),
               std::invalid_argument);
}

LayeredParams Scalar(double v) {
  return LayeredParams{{{Tensor({1, 1}, {v}), Tensor::FromVector({v})}}};
}

TEST(AggregateTest, ConvexCombinations) {
  std::vector<LayeredParams> same = {Scalar(1.5), Scalar(1.5), Scalar(1.5)};
  EXPECT_EQ(Aggregate(same, std::vector<double>{1, 2, 3}), Scalar(1.5));
  std::vector<LayeredParams> two = {Scalar(0), Scalar(2)};
  EXPECT_EQ(Aggregate(two, std::vector<double>{1, 1}), Scalar(1));
  std::vector<LayeredParams> weighted = {Scalar(0), Scalar(4)};
  EXPECT_EQ(Aggregate(weighted, std::vector<double>{3, 1}), Scalar(1));
}

TEST(AggregateTest, Errors) {
  EXPECT_THROW(Aggregate({}, {}), std::invalid_argument);
  std::vector<LayeredParams> two = {Scalar(0), Scalar(2)};
  EXPECT_THROW(Aggregate(two, std::vector<double>{0, 0}), std::invalid_argument);
  EXPECT_THROW(Aggregate(two, std::vector<double>{1}), std::invalid_argument);
}

TEST(AggregateTest, StaysWithinLocalBounds) {
  CounterRng rng(12);
  Network net = SmallNet();
  std::vector<LayeredParams> locals;
  std::vector<double> weights;
  for (int n = 0; n < 5; ++n) {
    locals.push_back(nn::InitializeParams(net, rng.NextU64()));
    weights.push_back(rng.NextUniform());
  }
  auto out = Aggregate(locals, weights);
  for (std::size_t l = 0; l < out.layer_count(); ++l) {
    for (std::size_t i = 0; i < out.layers[l].weights.size(); ++i) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& p : locals) {
        lo = std::min(lo, p.layers[l].weights[i]);
        hi = std::max(hi, p.layers[l].weights[i]);
      }
      // The anchored sum may round one ulp past the extreme input.
      EXPECT_GE(out.layers[l].weights[i], lo - 1e-15);
      EXPECT_LE(out.layers[l].weights[i], hi + 1e-15);
    }
  }
}

TEST(AggregateTest, WeightsFollowTheMode) {
  auto nodes = MakeNodes(3, 4);
  EXPECT_EQ(AggregationWeights(nodes, Aggregation::kUniform), (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(AggregationWeights(nodes, Aggregation::kDatasetSizeWeighted),
            (std::vector<double>{4, 5, 6}));
}

TEST(RunTrainingTest, MessageCountIsTwoPerNodePerRound) {
  Network net = SmallNet();
  auto init = nn::InitializeParams(net, 2);
  auto nodes = MakeNodes(4, 6);
  auto plain = RunTraining(net, init, nodes, SmallConfig(3));
  EXPECT_EQ(plain.message_count, 2u * 4u * 3u);
  audit::DistanceLogger logger(3, 4, net.param_layer_count());
  CountingObserver counter;
  std::vector<RoundObserver*> observers = {&logger, &counter};
  auto observed = RunTraining(net, init, nodes, SmallConfig(3), observers);
  EXPECT_EQ(observed.message_count, plain.message_count);
  EXPECT_EQ(counter.epochs, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(counter.sizes, (std::vector<std::size_t>{4, 4, 4}));
}

TEST(RunTrainingTest, ObserversDoNotChangeTraining) {
  Network net = SmallNet();
  auto init = nn::InitializeParams(net, 2);
  auto nodes = MakeNodes(3, 8);
  auto plain = RunTraining(net, init, nodes, SmallConfig(4));
  audit::DistanceLogger logger(4, 3, net.param_layer_count());
  std::vector<const data::Dataset*> sets;
  for (const auto& n : nodes) sets.push_back(&n.dataset);
  audit::ReputationTracker rep(net, sets, 4);
  std::vector<RoundObserver*> observers = {&logger, &rep};
  auto observed = RunTraining(net, init, nodes, SmallConfig(4), observers);
  EXPECT_EQ(plain.final_params, observed.final_params);
}

TEST(RunTrainingTest, ParallelNodesGiveIdenticalAggregates) {
  Network net = SmallNet();
  auto init = nn::InitializeParams(net, 2);
  auto nodes = MakeNodes(5, 7);
  auto cfg = SmallConfig(3);
  CountingObserver seq_obs, par_obs;
  std::vector<RoundObserver*> a = {&seq_obs}, b = {&par_obs};
  auto seq = RunTraining(net, init, nodes, cfg, a);
  cfg.threads = 4;
  auto par = RunTraining(net, init, nodes, cfg, b);
  EXPECT_EQ(seq.final_params, par.final_params);
  EXPECT_EQ(seq_obs.globals, par_obs.globals);
}

TEST(RunTrainingTest, SingleNodeGlobalIsItsLocalModel) {
  Network net = SmallNet();
  auto init = nn::InitializeParams(net, 2);
  auto nodes = MakeNodes(1, 9);
  auto cfg = SmallConfig(2);
  auto result = RunTraining(net, init, nodes, cfg);
  auto expected = LocalTrain(net, nodes[0], LocalTrain(net, nodes[0], init, cfg, 0), cfg, 1);
  EXPECT_EQ(result.final_params, expected);
}

TEST(RunTrainingTest, RequiresContiguousNodeIds) {
  Network net = SmallNet();
  auto nodes = MakeNodes(2, 4);
  nodes[1].node_id = 5;
  EXPECT_THROW(RunTraining(net, nn::InitializeParams(net, 0), nodes, SmallConfig(1)),
               std::invalid_argument);
  EXPECT_THROW(RunTraining(net, nn::InitializeParams(net, 0), {}, SmallConfig(1)),
               std::invalid_argument);
}

TEST(EvaluateTest, ConstantPredictorAndAbsentClasses) {
  Network net({2}, {nn::Dense{2, 3}});
  LayeredParams params{{{Tensor({3, 2}), Tensor::FromVector({1, 0, 0})}}};
  data::Dataset ds;
  ds.class_count = 3;
  ds.rows = 1;
  ds.cols = 2;
  for (int i = 0; i < 4; ++i) {
    ds.images.push_back(Tensor::FromVector({0.5, 0.5}));
    ds.labels.push_back(0);
  }
  auto r = Evaluate(net, params, ds);
  EXPECT_EQ(r.overall, 1.0);
  EXPECT_EQ(r.per_class[0], 1.0);
  EXPECT_TRUE(std::isnan(r.per_class[1]));
  EXPECT_TRUE(std::isnan(r.per_class[2]));
}

TEST(EvaluateTest, PerClassAccuraciesWeightToOverall) {
  Network net = SmallNet();
  auto ds = RandomDataset(90, 3, 44);
  auto r = Evaluate(net, nn::InitializeParams(net, 8), ds);
  double weighted = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    weighted += r.per_class[c] * static_cast<double>(r.class_totals[c]);
  }
  EXPECT_NEAR(weighted / 90.0, r.overall, 1e-15);
}

TEST(EvaluateTest, RandomModelIsNearChance) {
  const std::size_t classes = 10;
  auto ds = data::SynthGenerate(classes, 120, 6, 16, 16);
  double total = 0.0;
  const int models = 10;
  for (int m = 0; m < models; ++m) {
    Network net({1, 16, 16}, nn::ReferenceLayers(16, 16, classes));
    total += Evaluate(net, nn::InitializeParams(net, 1000 + m), ds).overall;
  }
  EXPECT_NEAR(total / models, 1.0 / classes, 0.05);
}

TEST(CheckpointTest, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "fedliab-ckpt-test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  Network net = SmallNet();
  auto nodes = MakeNodes(2, 5);
  CheckpointWriter writer(dir.string());
  CountingObserver counter;
  std::vector<RoundObserver*> observers = {&writer, &counter};
  RunTraining(net, nn::InitializeParams(net, 3), nodes, SmallConfig(2), observers);
  auto ckpt = ReadCheckpoint(writer.PathFor(1));
  EXPECT_EQ(ckpt.epoch, 1u);
  EXPECT_EQ(ckpt.local_params.size(), 2u);
  EXPECT_EQ(ckpt.global_params, counter.globals[1]);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace fedliab::fl

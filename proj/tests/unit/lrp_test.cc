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

#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "fedliab/lrp/lrp.h"
#include "fedliab/util/random.h"
#include "oracles.h"

namespace fedliab::lrp {
namespace {

using nn::Dense;
using nn::LayeredParams;
using nn::Network;

Tensor Vec(std::vector<double> v) { return Tensor::FromVector(std::move(v)); }

LrpConfig ZeroEpsilon() {
  LrpConfig cfg;
  cfg.epsilon = 0.0;
  return cfg;
}

TEST(PropagateTest, SingleDenseLayerHandArithmetic) {
  Network net({2}, {Dense{2, 1}});
  LayeredParams params{{{Tensor({1, 2}, {2, 1}), Tensor({1})}}};
  auto map = Propagate(net, params, Vec({1, 1}), 0, ZeroEpsilon());
  EXPECT_EQ(map.input(), Vec({2, 1}));
  EXPECT_EQ(map.boundaries.back(), Vec({3}));
}

TEST(PropagateTest, IdentityNetworksReturnTheOneHotStart) {
  Network flat({1, 2, 2}, {nn::Flatten{}});
  Tensor x({1, 2, 2}, {0.1, 0.7, 0.2, 0.4});
  auto map = Propagate(flat, {}, x, 1);
  EXPECT_EQ(map.input(), Tensor({1, 2, 2}, {0, 0.7, 0, 0}));

  Network dense({3}, {Dense{3, 3}});
  LayeredParams eye{{{Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor({3})}}};
  auto m2 = Propagate(dense, eye, Vec({0.5, 2, 1}), 1, ZeroEpsilon());
  EXPECT_EQ(m2.input(), Vec({0, 2, 0}));
}

TEST(PropagateTest, FinalBoundaryIsOneHotRawLogit) {
  CounterRng rng(4);
  auto rn = oracle::MakeRandomNet(rng, {.bias_scale = 0.5});
  Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, 0, 1);
  auto logits = nn::Forward(rn.net, rn.params, x).logits;
  for (std::size_t c = 0; c < rn.net.class_count(); ++c) {
    auto map = Propagate(rn.net, rn.params, x, c);
    for (std::size_t k = 0; k < logits.size(); ++k) {
      EXPECT_EQ(map.boundaries.back()[k], k == c ? logits[c] : 0.0);
    }
    EXPECT_EQ(ConservationReport(map, logits[c]).back(), 0.0);
  }
}

TEST(PropagateTest, ShapesMirrorTheActivationTrace) {
  CounterRng rng(StreamKey(99, {}));
  for (int trial = 0; trial < 40; ++trial) {
    auto rn = oracle::MakeRandomNet(rng);
    Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, -1, 1);
    auto map = Propagate(rn.net, rn.params, x, 0);
    ASSERT_EQ(map.boundaries.size(), rn.net.layer_count() + 1);
    for (std::size_t b = 0; b < map.boundaries.size(); ++b) {
      EXPECT_EQ(map.boundaries[b].shape(), rn.net.boundary_shape(b));
      EXPECT_TRUE(map.boundaries[b].AllFinite());
    }
  }
}

// Optimized path against per-neuron loops, default rules and stabilizer,
// with signed inputs so the z+ rule sees negative activations too.
TEST(PropagateTest, MatchesPerNeuronOracle) {
  CounterRng rng(StreamKey(123, {}));
  for (int trial = 0; trial < 20; ++trial) {
    auto rn = oracle::MakeRandomNet(rng, {.bias_scale = 0.2});
    for (int s = 0; s < 10; ++s) {
      const double lo = s % 2 ? -1.0 : 0.0;
      Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, lo, 1.0);
      const std::size_t target = rng.NextBelow(rn.net.class_count());
      auto fast = Propagate(rn.net, rn.params, x, target);
      auto slow = oracle::NaiveRelevance(rn.net, rn.params, x, target, LrpConfig{});
      for (std::size_t b = 0; b < slow.size(); ++b) {
        EXPECT_LE(oracle::MaxAbsDiff(fast.boundaries[b], slow[b]), 1e-10)
            << "trial " << trial << " sample " << s << " boundary " << b;
      }
    }
  }
}

TEST(PropagateTest, MatchesOracleUnderOverriddenRules) {
  LrpConfig cfg;
  cfg.epsilon = 0.05;
  cfg.rule_per_kind[nn::KindTag::kDense] = Rule::kZPlus;
  cfg.rule_per_kind[nn::KindTag::kConv2D] = Rule::kEpsilon;
  CounterRng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto rn = oracle::MakeRandomNet(rng);
    Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, -1, 1);
    auto fast = Propagate(rn.net, rn.params, x, 0, cfg);
    auto slow = oracle::NaiveRelevance(rn.net, rn.params, x, 0, cfg);
    for (std::size_t b = 0; b < slow.size(); ++b) {
      EXPECT_LE(oracle::MaxAbsDiff(fast.boundaries[b], slow[b]), 1e-10);
    }
  }
}

TEST(PropagateTest, ConservesRelevanceWithZeroEpsilon) {
  CounterRng rng(StreamKey(321, {}));
  for (int trial = 0; trial < 50; ++trial) {
    auto rn = oracle::MakeRandomNet(rng);
    Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, 0, 1);
    auto logits = nn::Forward(rn.net, rn.params, x).logits;
    const std::size_t target = nn::Argmax(logits.data());
    auto map = Propagate(rn.net, rn.params, x, target, ZeroEpsilon());
    for (double leak : ConservationReport(map, logits[target])) {
      EXPECT_LE(leak, 1e-8) << "trial " << trial;
    }
  }
}

TEST(PropagateTest, PositiveEpsilonLeakageIsReportedNotAsserted) {
  CounterRng rng(17);
  auto rn = oracle::MakeRandomNet(rng, {.allow_conv = false});
  Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, 0, 1);
  LrpConfig cfg;
  cfg.epsilon = 0.5;
  auto logits = nn::Forward(rn.net, rn.params, x).logits;
  auto leak = ConservationReport(Propagate(rn.net, rn.params, x, 0, cfg), logits[0]);
  ASSERT_EQ(leak.size(), rn.net.layer_count() + 1);
  for (double v : leak) EXPECT_TRUE(std::isfinite(v));
}

TEST(PropagateTest, RejectsBadTargetsAndRules) {
  Network net({2}, {Dense{2, 2}});
  auto params = nn::InitializeParams(net, 0);
  EXPECT_THROW(Propagate(net, params, Vec({1, 1}), 2), std::out_of_range);
  LrpConfig missing;
  missing.rule_per_kind.erase(nn::KindTag::kDense);
  EXPECT_THROW(Propagate(net, params, Vec({1, 1}), 0, missing), std::invalid_argument);
  LrpConfig wrong;
  wrong.rule_per_kind[nn::KindTag::kDense] = Rule::kWinnerTakeAll;
  EXPECT_THROW(wrong.Validate(), std::invalid_argument);
  LrpConfig negative;
  negative.epsilon = -1.0;
  EXPECT_THROW(negative.Validate(), std::invalid_argument);
}

TEST(ReduceTest, OneHotUniformAndDegenerate) {
  Network net({2}, {Dense{2, 2}, nn::ReLU{}, Dense{2, 2}});
  RelevanceMap map;
  map.boundaries = {Vec({0, 0}), Vec({5, 5}), Vec({3, -1}), Vec({1, 0})};
  EXPECT_EQ(ReduceToLayerVector(map, net).weights, (std::vector<double>{0, 1}));
  map.boundaries[0] = Vec({-2, 2});
  EXPECT_EQ(ReduceToLayerVector(map, net).weights, (std::vector<double>{0.5, 0.5}));
  for (auto& b : map.boundaries) b.Fill(0.0);
  EXPECT_EQ(ReduceToLayerVector(map, net).weights, (std::vector<double>{0.5, 0.5}));
}

TEST(ReduceTest, ConvexAndScaleInvariant) {
  CounterRng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    auto rn = oracle::MakeRandomNet(rng);
    Tensor x = oracle::RandomTensor(rn.net.input_shape(), rng, -1, 1);
    auto map = Propagate(rn.net, rn.params, x, 0);
    auto r = ReduceToLayerVector(map, rn.net);
    ASSERT_EQ(r.size(), rn.net.param_layer_count());
    for (double w : r.weights) EXPECT_GE(w, 0.0);
    EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), 1.0, 1e-12);
    const double c = 0.1 + 10.0 * rng.NextUniform();
    for (auto& b : map.boundaries) b *= c;
    auto scaled = ReduceToLayerVector(map, rn.net);
    for (std::size_t l = 0; l < r.size(); ++l) EXPECT_NEAR(scaled.weights[l], r.weights[l], 1e-15);
  }
}

TEST(ReduceTest, AverageOfDecisions) {
  std::vector<LayerRelevanceVector> v = {{{1, 0}}, {{0.5, 0.5}}};
  EXPECT_EQ(AverageLayerVectors(v).weights, (std::vector<double>{0.75, 0.25}));
  EXPECT_THROW(AverageLayerVectors({}), std::invalid_argument);
}

TEST(ExportTest, PgmHeaderAndScaling) {
  std::stringstream s;
  WritePgmHeatmap(s, Tensor({1, 1, 3}, {-1, 0, 1}));
  EXPECT_EQ(s.str(), std::string("P5\n3 1\n255\n") + '\x00' + '\x80' + '\xff');
}

TEST(ExportTest, JsonHasShapeAndValues) {
  EXPECT_EQ(RelevanceJson(Tensor({1, 2}, {0.5, -1})),
            R"({"shape":[1,2],"values":[0.5,-1.0]})");
}

TEST(ExportTest, StorageAccounting) {
  Network net({1, 28, 28}, nn::ReferenceLayers(28, 28, 10));
  EXPECT_EQ(InputRelevanceBytes(net), 784u * 8u);
  std::size_t total = 0;
  for (std::size_t b = 0; b <= net.layer_count(); ++b) total += ShapeSize(net.boundary_shape(b));
  EXPECT_EQ(FullMapBytes(net), total * 8);
}

}  // namespace
}  // namespace fedliab::lrp

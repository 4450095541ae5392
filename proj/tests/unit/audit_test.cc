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
#include <sstream>

#include <gtest/gtest.h>

#include "fedliab/audit/audit.h"
#include "fedliab/util/random.h"
#include "oracles.h"

namespace fedliab::audit {
namespace {

using V = std::vector<double>;

DistanceTensor RandomTensor(std::size_t e, std::size_t n, std::size_t l, CounterRng& rng) {
  DistanceTensor t(e, n, l);
  for (std::size_t i = 0; i < e; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < l; ++k) t.set(i, j, k, 2.0 * rng.NextUniform());
  return t;
}

lrp::LayerRelevanceVector RandomConvex(std::size_t l, CounterRng& rng) {
  lrp::LayerRelevanceVector r;
  double total = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    r.weights.push_back(rng.NextUniform());
    total += r.weights.back();
  }
  for (double& w : r.weights) w /= total;
  return r;
}

ScoreMatrix FromNodeMeans(const V& means) {
  ScoreMatrix m(1, means.size());
  m.values = means;
  return m;
}

TEST(CosineDistanceTest, Identities) {
  EXPECT_EQ(CosineDistance(V{1, 2, 3}, V{1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(CosineDistance(V{1, 2}, V{-1, -2}), 2.0);
  EXPECT_EQ(CosineDistance(V{1, 0}, V{0, 1}), 1.0);
  EXPECT_EQ(CosineDistance(V{0, 0}, V{0, 0}), 0.0);
  EXPECT_EQ(CosineDistance(V{0, 0}, V{1, 0}), 1.0);
  EXPECT_THROW(CosineDistance(V{1}, V{1, 2}), std::invalid_argument);
}

nn::LayeredParams TwoParamLayer(double a, double b) {
  return {{{Tensor({1, 1}, {a}), Tensor::FromVector({b})}}};
}

TEST(LogRoundTest, HandCase) {
  std::vector<nn::LayeredParams> locals = {TwoParamLayer(1, 0), TwoParamLayer(0, 1)};
  auto global = TwoParamLayer(0.5, 0.5);
  DistanceTensor t(1, 2, 1);
  LogRound({0, &global, locals, &global}, t);
  EXPECT_NEAR(t.at(0, 0, 0), 1.0 - std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(t.at(0, 1, 0), 1.0 - std::sqrt(0.5), 1e-15);
}

TEST(LogRoundTest, SingleNodeAndIdenticalNodesGiveZero) {
  auto p = TwoParamLayer(0.3, -0.7);
  std::vector<nn::LayeredParams> one = {p};
  DistanceTensor t1(1, 1, 1);
  LogRound({0, &p, one, &p}, t1);
  EXPECT_EQ(t1.at(0, 0, 0), 0.0);
  std::vector<nn::LayeredParams> two = {p, p};
  DistanceTensor t2(1, 2, 1);
  LogRound({0, &p, two, &p}, t2);
  EXPECT_EQ(t2.values()[0], 0.0);
  EXPECT_EQ(t2.values()[1], 0.0);
}

TEST(LogRoundTest, EpochOutOfRange) {
  auto p = TwoParamLayer(1, 1);
  std::vector<nn::LayeredParams> one = {p};
  DistanceTensor t(2, 1, 1);
  EXPECT_THROW(LogRound({2, &p, one, &p}, t), std::out_of_range);
}

TEST(LogRoundTest, PreviousGlobalReference) {
  auto before = TwoParamLayer(1, 0);
  auto after = TwoParamLayer(0, 1);
  std::vector<nn::LayeredParams> locals = {after};
  DistanceTensor t(1, 1, 1);
  LogRound({0, &before, locals, &after}, t, DistanceReference::kPreviousGlobal);
  EXPECT_EQ(t.at(0, 0, 0), 1.0);
}

TEST(LogRoundTest, DistancesStayInRangeForRandomModels) {
  CounterRng rng(71);
  nn::Network net({1, 6, 6}, {nn::Conv2D{1, 2, 3}, nn::ReLU{}, nn::Flatten{}, nn::Dense{32, 3}});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<nn::LayeredParams> locals;
    for (int n = 0; n < 4; ++n) locals.push_back(nn::InitializeParams(net, rng.NextU64()));
    auto global = nn::InitializeParams(net, rng.NextU64());
    DistanceTensor t(1, 4, 2);
    LogRound({0, &global, locals, &global}, t);
    for (double v : t.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 2.0);
    }
  }
}

TEST(RadistTest, HandExamples) {
  DistanceTensor d(1, 2, 2, V{0.1, 0.3, 0.2, 0.4});
  auto m = ComputeRadist(d, {{0.5, 0.5}});
  EXPECT_NEAR(m.at(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(m.at(0, 1), 0.3, 1e-15);
  auto slice = ComputeRadist(d, {{0, 1}});
  EXPECT_EQ(slice.values, (V{0.3, 0.4}));
  DistanceTensor constant(3, 2, 4, V(24, 0.7));
  for (double v : ComputeRadist(constant, {{0.1, 0.2, 0.3, 0.4}}).values) {
    EXPECT_NEAR(v, 0.7, 1e-15);
  }
  EXPECT_THROW(ComputeRadist(d, {{1.0}}), std::invalid_argument);
}

TEST(RadistTest, MatchesTripleLoopOracle) {
  CounterRng rng(StreamKey(9, {}));
  for (int trial = 0; trial < 50; ++trial) {
    auto d = RandomTensor(1 + rng.NextBelow(30), 2 + rng.NextBelow(15), 1 + rng.NextBelow(6), rng);
    auto r = RandomConvex(d.layers(), rng);
    auto fast = ComputeRadist(d, r);
    auto slow = oracle::TripleLoopRadist(d, r.weights);
    ASSERT_EQ(fast.values.size(), slow.values.size());
    for (std::size_t i = 0; i < fast.values.size(); ++i) {
      EXPECT_LE(std::abs(fast.values[i] - slow.values[i]), 1e-12);
    }
  }
}

TEST(RadistTest, SandwichedByLayerDistances) {
  CounterRng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto d = RandomTensor(5, 6, 1 + rng.NextBelow(6), rng);
    auto m = ComputeRadist(d, RandomConvex(d.layers(), rng));
    for (std::size_t e = 0; e < d.epochs(); ++e) {
      for (std::size_t n = 0; n < d.nodes(); ++n) {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t l = 0; l < d.layers(); ++l) {
          lo = std::min(lo, d.at(e, n, l));
          hi = std::max(hi, d.at(e, n, l));
        }
        EXPECT_GE(m.at(e, n), lo - 1e-15);
        EXPECT_LE(m.at(e, n), hi + 1e-15);
      }
    }
  }
}

TEST(DetectTest, AlphaTwoArithmetic) {
  V means(10, 0.1);
  means[4] = 0.9;
  auto report = Detect(FromNodeMeans(means), {}, "test:1");
  EXPECT_NEAR(report.global_mean, 0.18, 1e-15);
  EXPECT_EQ(report.flagged, std::vector<std::size_t>{4});
  EXPECT_EQ(report.sample_id, "test:1");
  EXPECT_EQ(report.alpha, 2.0);
}

TEST(DetectTest, EqualMeansFlagNobody) {
  EXPECT_TRUE(Detect(FromNodeMeans(V(7, 0.25)), {}).flagged.empty());
}

TEST(DetectTest, FlagsMatchTheDefinition) {
  CounterRng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreMatrix m(1 + rng.NextBelow(5), 2 + rng.NextBelow(10));
    for (double& v : m.values) v = rng.NextUniform() * (rng.NextBelow(8) == 0 ? 5.0 : 1.0);
    AuditConfig cfg{.alpha = 1.0 + 2.0 * rng.NextUniform()};
    auto report = Detect(m, cfg);
    double total = 0.0;
    for (double v : m.values) total += v;
    EXPECT_NEAR(report.global_mean, total / static_cast<double>(m.values.size()), 1e-12);
    std::vector<std::size_t> expected;
    for (std::size_t n = 0; n < m.nodes; ++n) {
      if (report.per_node_mean[n] > cfg.alpha * report.global_mean) expected.push_back(n);
    }
    EXPECT_EQ(report.flagged, expected);
  }
}

TEST(DetectTest, FlagSetInvariantUnderPositiveScaling) {
  CounterRng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreMatrix m(3, 6);
    for (double& v : m.values) v = rng.NextUniform() * (rng.NextBelow(6) == 0 ? 6.0 : 1.0);
    // Powers of two scale exactly, so the comparison sees the same ratios.
    const double c = std::ldexp(1.0, static_cast<int>(rng.NextBelow(20)) - 10);
    ScoreMatrix scaled = m;
    for (double& v : scaled.values) v *= c;
    EXPECT_EQ(Detect(m, {}).flagged, Detect(scaled, {}).flagged);
  }
}

TEST(DetectTest, LeaveOneOutComparesAgainstOthers) {
  V means = {1.0, 1.0, 2.5};
  AuditConfig loo{.alpha = 2.0, .leave_one_out = true};
  EXPECT_EQ(Detect(FromNodeMeans(means), loo).flagged, std::vector<std::size_t>{2});
  EXPECT_TRUE(Detect(FromNodeMeans(means), {}).flagged.empty());
}

TEST(DetectTest, Errors) {
  EXPECT_THROW(Detect(FromNodeMeans({1.0}), {}), std::invalid_argument);
  EXPECT_THROW(Detect(FromNodeMeans({1.0, 2.0}), {.alpha = 1.0}), std::invalid_argument);
}

TEST(BaselineTest, CosineIsUniformRadist) {
  CounterRng rng(5);
  auto d = RandomTensor(4, 3, 5, rng);
  lrp::LayerRelevanceVector uniform{V(5, 0.2)};
  EXPECT_EQ(BaselineCosineScore(d).values, ComputeRadist(d, uniform).values);
  auto single = RandomTensor(4, 3, 1, rng);
  EXPECT_EQ(BaselineCosineScore(single).values, V(single.values().begin(), single.values().end()));
  for (double v : BaselineCosineScore(DistanceTensor(2, 2, 3)).values) EXPECT_EQ(v, 0.0);
}

TEST(BaselineTest, ReputationEma) {
  ScoreMatrix perfect(5, 1, 1.0);
  auto rep = BaselineReputation(perfect);
  EXPECT_EQ(rep.values, V(5, 1.0));
  EXPECT_EQ(ReputationSuspicion(rep).values, V(5, 0.0));

  ScoreMatrix flip(2, 1);
  flip.values = {1.0, 0.0};
  EXPECT_EQ(BaselineReputation(flip, 0.5).at(1, 0), 0.5);

  ScoreMatrix constant(60, 1, 0.37);
  EXPECT_NEAR(BaselineReputation(constant).at(59, 0), 0.37, 1e-15);
}

TEST(NormalizeTest, MinMaxAndDegenerate) {
  ScoreMatrix m(1, 3);
  m.values = {2, 4, 3};
  EXPECT_EQ(NormalizeScores(m).values, (V{0, 1, 0.5}));
  EXPECT_EQ(NormalizeScores(ScoreMatrix(2, 2, 7.0)).values, V(4, 0.0));
}

TEST(NormalizeTest, PreservesOrdering) {
  CounterRng rng(3);
  ScoreMatrix m(4, 5);
  for (double& v : m.values) v = 10.0 * rng.NextUniform() - 3.0;
  auto n = NormalizeScores(m);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    for (std::size_t j = 0; j < m.values.size(); ++j) {
      if (m.values[i] < m.values[j]) {
        EXPECT_LE(n.values[i], n.values[j]);
      }
    }
  }
}

TEST(FilesTest, DistanceBinaryRoundTripAndExactSize) {
  CounterRng rng(8);
  auto d = RandomTensor(20, 10, 4, rng);
  std::stringstream s;
  WriteDistanceBinary(s, d);
  EXPECT_EQ(s.str().size(), DistanceBinarySize(d));
  EXPECT_EQ(DistanceBinarySize(d), 64u + 20u * 10u * 4u * 8u);
  EXPECT_EQ(ReadDistanceBinary(s), d);
}

TEST(FilesTest, DistanceCsv) {
  DistanceTensor d(1, 1, 2, V{0.5, 0.25});
  std::stringstream s;
  WriteDistanceCsv(s, d);
  EXPECT_EQ(s.str(), "epoch,node,layer,distance\n0,0,0,0.5\n0,0,1,0.25\n");
}

TEST(FilesTest, AuditJsonRoundTrip) {
  AuditReport r;
  r.alpha = 2.0;
  r.global_mean = 0.18;
  r.per_node_mean = {0.1, 0.9};
  r.flagged = {1};
  r.sample_id = "test:3";
  r.selection_rule = "rule";
  auto text = AuditReportJson(r);
  auto back = ParseAuditReportJson(text);
  EXPECT_EQ(back.flagged, r.flagged);
  EXPECT_EQ(back.per_node_mean, r.per_node_mean);
  EXPECT_EQ(back.sample_id, r.sample_id);
  EXPECT_EQ(back.global_mean, r.global_mean);
  for (const char* key : {"\"alpha\"", "\"global_mean\"", "\"per_node_mean\"", "\"flagged\"",
                          "\"sample_id\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
}

TEST(FilesTest, ScoreCsvRowsAndNodeIds) {
  ScoreMatrix a(2, 2, 0.5);
  std::vector<std::pair<std::string, ScoreMatrix>> metrics = {{"radist", a}, {"cosine", a}};
  std::stringstream s;
  const std::vector<std::size_t> ids = {3, 7};
  WriteScoreCsv(s, metrics, ids);
  std::string line;
  std::getline(s, line);
  EXPECT_EQ(line, "epoch,node,metric,value");
  std::size_t rows = 0;
  bool saw_id = false;
  while (std::getline(s, line)) {
    ++rows;
    saw_id |= line.rfind("1,7,", 0) == 0;
  }
  EXPECT_EQ(rows, 8u);
  EXPECT_TRUE(saw_id);
  std::stringstream bad;
  EXPECT_THROW(WriteScoreCsv(bad, metrics, std::vector<std::size_t>{1}), std::invalid_argument);
}

}  // namespace
}  // namespace fedliab::audit

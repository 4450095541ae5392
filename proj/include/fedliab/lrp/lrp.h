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

#ifndef FEDLIAB_LRP_LRP_H_
#define FEDLIAB_LRP_LRP_H_

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedliab/nn/network.h"
#include "fedliab/tensor.h"

namespace fedliab::lrp {

enum class Rule {
  kEpsilon,        // R_j = a_j sum_k w_jk R_k / (z_k + eps sign(z_k))
  kZPlus,          // R_j = sum_k (a_j w_jk)^+ R_k / sum_i (a_i w_ik)^+
  kWinnerTakeAll,  // max-pool: all relevance to the traced argmax
  kPassThrough,    // ReLU: copied where the activation is positive
  kReshape,        // flatten
};

std::string_view RuleName(Rule rule);

// Denominators use the input contributions only (biases are not treated as
// relevance sinks), so with eps = 0 every rule conserves relevance exactly
// wherever a denominator is non-zero.
struct LrpConfig {
  // Unset: per layer, eps = max(1e-9 * mean|z|, 1e-12).
  std::optional<double> epsilon;
  std::map<nn::KindTag, Rule> rule_per_kind = {
      {nn::KindTag::kDense, Rule::kEpsilon},
      {nn::KindTag::kConv2D, Rule::kZPlus},
      {nn::KindTag::kReLU, Rule::kPassThrough},
      {nn::KindTag::kMaxPool, Rule::kWinnerTakeAll},
      {nn::KindTag::kFlatten, Rule::kReshape},
  };

  // Throws std::invalid_argument for negative epsilon or a rule assigned to a
  // kind that cannot use it.
  void Validate() const;
};

bool RuleSupported(nn::KindTag kind, Rule rule);

// Relevance at every layer boundary; shapes mirror the activation trace.
struct RelevanceMap {
  std::vector<Tensor> boundaries;
  std::size_t target_class = 0;

  const Tensor& input() const { return boundaries.front(); }
};

// Convex per-parameterized-layer weights.
struct LayerRelevanceVector {
  std::vector<double> weights;
  std::size_t size() const { return weights.size(); }
};

// Starts from the raw logit of target_class and walks back to the input.
RelevanceMap Propagate(const nn::Network& net, const nn::LayeredParams& params,
                       const Tensor& input, std::size_t target_class,
                       const LrpConfig& cfg = {});

// Same, reusing an existing forward trace.
RelevanceMap Propagate(const nn::Network& net, const nn::LayeredParams& params,
                       const nn::ActivationTrace& trace, std::size_t target_class,
                       const LrpConfig& cfg = {});

// Entry l: L1 mass of the relevance entering parameterized layer l,
// L1-normalized. All-zero relevance gives the uniform vector.
LayerRelevanceVector ReduceToLayerVector(const RelevanceMap& map, const nn::Network& net);

// Uniform average of several decisions' layer vectors.
LayerRelevanceVector AverageLayerVectors(std::span<const LayerRelevanceVector> vectors);

// |sum(R_b) - logit| / max(|logit|, 1e-12) for every boundary b.
std::vector<double> ConservationReport(const RelevanceMap& map, double logit_value);

// Grayscale heatmap of a relevance tensor (channels summed), P5, maxval 255,
// min-max normalized.
void WritePgmHeatmap(std::ostream& out, const Tensor& relevance);

// {"shape":[...],"values":[...]}
std::string RelevanceJson(const Tensor& relevance);

// Bytes needed to store a full map vs only the input boundary, as f64.
std::size_t FullMapBytes(const nn::Network& net);
std::size_t InputRelevanceBytes(const nn::Network& net);

}  // namespace fedliab::lrp

#endif  // FEDLIAB_LRP_LRP_H_

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

#include "fedliab/lrp/lrp.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "fedliab/nn/kernels.h"

namespace fedliab::lrp {

namespace {

using nn::kernels::ConstMatMap;
using nn::kernels::ConstVecMap;
using nn::kernels::MatrixR;

double StabilizerFor(const LrpConfig& cfg, const Eigen::Ref<const MatrixR>& z) {
  if (cfg.epsilon) return *cfg.epsilon;
  double mean_abs = z.size() > 0 ? z.cwiseAbs().mean() : 0.0;
  return std::max(1e-9 * mean_abs, 1e-12);
}

// Relevance per unit of denominator; zero where the denominator vanishes.
// Scratch matrices reused across layers and calls, so the hot path does not
// allocate.
struct Workspace {
  MatrixR cols, w_pos, w_neg, a_pos, a_neg, den, pos, neg;
  AlignedDoubles pos_folded, neg_folded;
};

bool HasNegative(const Tensor& t) {
  return (Eigen::Map<const Eigen::ArrayXd>(t.data().data(), static_cast<Eigen::Index>(t.size())) <
          0.0)
      .any();
}

// den <- relevance / den elementwise; zero where the denominator vanishes.
void DivideInto(const ConstMatMap& relevance, MatrixR& den) {
  den = (den.array() == 0.0).select(0.0, relevance.array() / den.array());
}

// Shared by dense (one column) and convolution (one column per position):
// ws.cols holds the unfolded input activations (K x P), `weights` is O x K and
// `relevance` is O x P. Leaves per-unfolded-input relevance factors in ws.pos
// (multiplies a^+, or a for the epsilon rule) and ws.neg (multiplies a^-,
// z+ rule with some negative input only). Returns whether ws.neg is set.
// Zero padding adds no negative entries, so the caller checks the sign of the
// raw input activation.
bool LinearBackward(Rule rule, const LrpConfig& cfg, const ConstMatMap& weights,
                    const ConstMatMap& relevance, bool has_negative, Workspace& ws) {
  if (rule == Rule::kEpsilon) {
    ws.den.noalias() = weights * ws.cols;
    const double eps = StabilizerFor(cfg, ws.den);
    ws.den = (ws.den.array() >= 0.0).select(ws.den.array() + eps, ws.den.array() - eps);
    DivideInto(relevance, ws.den);
    ws.pos.noalias() = weights.transpose() * ws.den;
    return false;
  }
  // (a w)^+ = a^+ w^+ + a^- w^-; the second term vanishes for a >= 0.
  ws.w_pos = weights.cwiseMax(0.0);
  if (has_negative) {
    ws.w_neg = weights.cwiseMin(0.0);
    ws.a_pos = ws.cols.cwiseMax(0.0);
    ws.a_neg = ws.cols.cwiseMin(0.0);
    ws.den.noalias() = ws.w_pos * ws.a_pos;
    ws.den.noalias() += ws.w_neg * ws.a_neg;
  } else {
    ws.den.noalias() = ws.w_pos * ws.cols;
  }
  DivideInto(relevance, ws.den);
  ws.pos.noalias() = ws.w_pos.transpose() * ws.den;
  if (has_negative) ws.neg.noalias() = ws.w_neg.transpose() * ws.den;
  return has_negative;
}

void FinishLinear(Rule rule, const Tensor& activation, std::span<const double> pos_folded,
                  std::span<const double> neg_folded, Tensor& out) {
  const auto n = static_cast<Eigen::Index>(activation.size());
  Eigen::Map<const Eigen::ArrayXd> a(activation.data().data(), n);
  Eigen::Map<const Eigen::ArrayXd> pos(pos_folded.data(), n);
  Eigen::Map<Eigen::ArrayXd> r(out.data().data(), n);
  if (rule == Rule::kEpsilon) {
    r = a * pos;
  } else if (neg_folded.empty()) {
    r = (a > 0.0).select(a * pos, 0.0);
  } else {
    Eigen::Map<const Eigen::ArrayXd> neg(neg_folded.data(), n);
    r = (a > 0.0).select(a * pos, (a < 0.0).select(a * neg, 0.0));
  }
}

}  // namespace

std::string_view RuleName(Rule rule) {
  switch (rule) {
    case Rule::kEpsilon: return "epsilon";
    case Rule::kZPlus: return "zplus";
    case Rule::kWinnerTakeAll: return "winner_take_all";
    case Rule::kPassThrough: return "pass_through";
    case Rule::kReshape: return "reshape";
  }
  return "unknown";
}

bool RuleSupported(nn::KindTag kind, Rule rule) {
  switch (kind) {
    case nn::KindTag::kDense:
    case nn::KindTag::kConv2D: return rule == Rule::kEpsilon || rule == Rule::kZPlus;
    case nn::KindTag::kReLU: return rule == Rule::kPassThrough;
    case nn::KindTag::kMaxPool: return rule == Rule::kWinnerTakeAll;
    case nn::KindTag::kFlatten: return rule == Rule::kReshape;
  }
  return false;
}

void LrpConfig::Validate() const {
  if (epsilon && (!(*epsilon >= 0.0) || !std::isfinite(*epsilon))) {
    throw std::invalid_argument("LRP epsilon must be finite and non-negative");
  }
  for (const auto& [kind, rule] : rule_per_kind) {
    if (!RuleSupported(kind, rule)) {
      throw std::invalid_argument("rule " + std::string(RuleName(rule)) +
                                  " is not supported for " + std::string(nn::KindName(kind)) +
                                  " layers");
    }
  }
}

RelevanceMap Propagate(const nn::Network& net, const nn::LayeredParams& params,
                       const Tensor& input, std::size_t target_class, const LrpConfig& cfg) {
  return Propagate(net, params, nn::Forward(net, params, input).trace, target_class, cfg);
}

RelevanceMap Propagate(const nn::Network& net, const nn::LayeredParams& params,
                       const nn::ActivationTrace& trace, std::size_t target_class,
                       const LrpConfig& cfg) {
  cfg.Validate();
  net.CheckParams(params);
  if (target_class >= net.class_count()) {
    throw std::out_of_range("target class " + std::to_string(target_class) + " outside [0, " +
                            std::to_string(net.class_count()) + ")");
  }
  if (trace.boundaries.size() != net.layer_count() + 1) {
    throw std::invalid_argument("activation trace does not belong to this network");
  }
  std::vector<Rule> rules;
  for (const auto& spec : net.layers()) {
    auto it = cfg.rule_per_kind.find(nn::TagOf(spec.kind));
    if (it == cfg.rule_per_kind.end()) {
      throw std::invalid_argument("no relevance rule for " +
                                  std::string(nn::KindName(nn::TagOf(spec.kind))) +
                                  " layer " + std::to_string(spec.index));
    }
    rules.push_back(it->second);
  }

  RelevanceMap map;
  map.target_class = target_class;
  map.boundaries.resize(net.layer_count() + 1);
  Tensor start(net.boundary_shape(net.layer_count()));
  start[target_class] = trace.boundaries.back()[target_class];
  map.boundaries.back() = std::move(start);

  thread_local Workspace ws;
  for (std::size_t i = net.layer_count(); i-- > 0;) {
    const auto& spec = net.layers()[i];
    const Tensor& a = trace.boundaries[i];
    const Tensor& a_out = trace.boundaries[i + 1];
    const Tensor& r_out = map.boundaries[i + 1];
    Tensor r_in(a.shape());
    switch (nn::TagOf(spec.kind)) {
      case nn::KindTag::kDense: {
        const auto& d = std::get<nn::Dense>(spec.kind);
        const auto& p = params.layers[*net.param_slot(i)];
        ConstMatMap w(p.weights.data().data(), d.out_dim, d.in_dim);
        ws.cols = ConstMatMap(a.data().data(), d.in_dim, 1);
        ConstMatMap rel(r_out.data().data(), d.out_dim, 1);
        const bool neg = LinearBackward(rules[i], cfg, w, rel, HasNegative(a), ws);
        FinishLinear(rules[i], a, std::span<const double>(ws.pos.data(), ws.pos.size()),
                     neg ? std::span<const double>(ws.neg.data(), ws.neg.size())
                         : std::span<const double>(),
                     r_in);
        break;
      }
      case nn::KindTag::kConv2D: {
        const auto& c = std::get<nn::Conv2D>(spec.kind);
        const auto& p = params.layers[*net.param_slot(i)];
        auto geo = nn::kernels::MakeGeometry(c, a.shape());
        nn::kernels::Im2Col(geo, a.data(), ws.cols);
        ConstMatMap w(p.weights.data().data(), c.out_channels, geo.patch_size());
        ConstMatMap rel(r_out.data().data(), c.out_channels, geo.positions());
        const bool neg = LinearBackward(rules[i], cfg, w, rel, HasNegative(a), ws);
        ws.pos_folded.assign(a.size(), 0.0);
        nn::kernels::Col2ImAdd(geo, ws.pos, ws.pos_folded);
        if (neg) {
          ws.neg_folded.assign(a.size(), 0.0);
          nn::kernels::Col2ImAdd(geo, ws.neg, ws.neg_folded);
        }
        FinishLinear(rules[i], a, ws.pos_folded,
                     neg ? std::span<const double>(ws.neg_folded) : std::span<const double>(),
                     r_in);
        break;
      }
      case nn::KindTag::kReLU: {
        const auto n = static_cast<Eigen::Index>(r_in.size());
        Eigen::Map<Eigen::ArrayXd>(r_in.data().data(), n) =
            (Eigen::Map<const Eigen::ArrayXd>(a_out.data().data(), n) > 0.0)
                .select(Eigen::Map<const Eigen::ArrayXd>(r_out.data().data(), n), 0.0);
        break;
      }
      case nn::KindTag::kMaxPool: {
        const auto& winners = trace.pool_winners.at(i);
        for (std::size_t k = 0; k < winners.size(); ++k) r_in[winners[k]] += r_out[k];
        break;
      }
      case nn::KindTag::kFlatten:
        std::copy(r_out.data().begin(), r_out.data().end(), r_in.data().begin());
        break;
    }
    map.boundaries[i] = std::move(r_in);
  }
  return map;
}

LayerRelevanceVector ReduceToLayerVector(const RelevanceMap& map, const nn::Network& net) {
  if (map.boundaries.size() != net.layer_count() + 1) {
    throw std::invalid_argument("relevance map does not belong to this network");
  }
  const std::size_t layers = net.param_layer_count();
  LayerRelevanceVector out;
  out.weights.resize(layers);
  double total = 0.0;
  for (std::size_t p = 0; p < layers; ++p) {
    out.weights[p] = map.boundaries[net.param_layer_index(p)].AbsSum();
    total += out.weights[p];
  }
  if (total == 0.0 || !std::isfinite(total)) {
    std::fill(out.weights.begin(), out.weights.end(), 1.0 / static_cast<double>(layers));
  } else {
    for (double& w : out.weights) w /= total;
  }
  return out;
}

LayerRelevanceVector AverageLayerVectors(std::span<const LayerRelevanceVector> vectors) {
  if (vectors.empty()) throw std::invalid_argument("no layer vectors to average");
  LayerRelevanceVector out;
  out.weights.assign(vectors[0].size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != out.size()) throw std::invalid_argument("layer vectors differ in length");
    for (std::size_t l = 0; l < v.size(); ++l) out.weights[l] += v.weights[l];
  }
  for (double& w : out.weights) w /= static_cast<double>(vectors.size());
  return out;
}

std::vector<double> ConservationReport(const RelevanceMap& map, double logit_value) {
  std::vector<double> leakage;
  const double scale = std::max(std::abs(logit_value), 1e-12);
  for (const auto& r : map.boundaries) leakage.push_back(std::abs(r.Sum() - logit_value) / scale);
  return leakage;
}

void WritePgmHeatmap(std::ostream& out, const Tensor& relevance) {
  std::size_t height = 1, width = relevance.size();
  std::vector<double> pixels(relevance.data().begin(), relevance.data().end());
  if (relevance.rank() == 3) {
    const auto& s = relevance.shape();
    height = s[1];
    width = s[2];
    pixels.assign(height * width, 0.0);
    for (std::size_t c = 0; c < s[0]; ++c) {
      for (std::size_t k = 0; k < height * width; ++k) pixels[k] += relevance[c * height * width + k];
    }
  } else if (relevance.rank() == 2) {
    height = relevance.shape()[0];
    width = relevance.shape()[1];
  }
  auto [lo, hi] = std::minmax_element(pixels.begin(), pixels.end());
  const double low = *lo, range = *hi - *lo;
  out << "P5\n" << width << " " << height << "\n255\n";
  for (double v : pixels) {
    double t = range > 0.0 ? (v - low) / range : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
}

std::string RelevanceJson(const Tensor& relevance) {
  const std::vector<double> values(relevance.data().begin(), relevance.data().end());
  nlohmann::json doc = {{"shape", relevance.shape()}, {"values", values}};
  return doc.dump();
}

std::size_t FullMapBytes(const nn::Network& net) {
  std::size_t total = 0;
  for (std::size_t b = 0; b <= net.layer_count(); ++b) total += ShapeSize(net.boundary_shape(b));
  return total * sizeof(double);
}

std::size_t InputRelevanceBytes(const nn::Network& net) {
  return ShapeSize(net.input_shape()) * sizeof(double);
}

}  // namespace fedliab::lrp

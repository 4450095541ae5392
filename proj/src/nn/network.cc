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

#include "fedliab/nn/network.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedliab/nn/kernels.h"
#include "fedliab/util/random.h"

namespace fedliab::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

using kernels::ConstMatMap;
using kernels::ConstVecMap;
using kernels::MatMap;
using kernels::MatrixR;
using kernels::VecMap;

Shape OutputShape(std::size_t index, const LayerKind& kind, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Dense& d) -> Shape {
            if (d.in_dim == 0 || d.out_dim == 0) {
              throw NetworkError(index, "dense dimensions must be positive");
            }
            if (in.size() != 1 || in[0] != d.in_dim) {
              throw NetworkError(index, "dense layer expects input (" +
                                            std::to_string(d.in_dim) + "), got " +
                                            ShapeString(in));
            }
            return {d.out_dim};
          },
          [&](const Conv2D& c) -> Shape {
            if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 ||
                c.stride == 0) {
              throw NetworkError(index, "conv channels, kernel and stride must be positive");
            }
            if (in.size() != 3 || in[0] != c.in_channels) {
              throw NetworkError(index, "conv layer expects input (" +
                                            std::to_string(c.in_channels) +
                                            ",H,W), got " + ShapeString(in));
            }
            if (in[1] + 2 * c.padding < c.kernel || in[2] + 2 * c.padding < c.kernel) {
              throw NetworkError(index, "conv kernel larger than padded input " +
                                            ShapeString(in));
            }
            auto g = kernels::MakeGeometry(c, in);
            return {c.out_channels, g.out_height, g.out_width};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool& m) -> Shape {
            if (m.kernel == 0 || m.stride == 0) {
              throw NetworkError(index, "pool kernel and stride must be positive");
            }
            if (in.size() != 3 || in[1] < m.kernel || in[2] < m.kernel) {
              throw NetworkError(index, "max-pool expects (C,H,W) input of at least the "
                                        "kernel size, got " + ShapeString(in));
            }
            return {in[0], (in[1] - m.kernel) / m.stride + 1,
                    (in[2] - m.kernel) / m.stride + 1};
          },
          [&](const Flatten&) -> Shape { return {ShapeSize(in)}; },
      },
      kind);
}

void DenseForward(const Dense& d, const LayerParams& p, const Tensor& in, Tensor& out) {
  ConstMatMap w(p.weights.data().data(), d.out_dim, d.in_dim);
  VecMap o(out.data().data(), d.out_dim);
  o.noalias() = w * ConstVecMap(in.data().data(), d.in_dim);
  o += ConstVecMap(p.biases.data().data(), d.out_dim);
}

void ConvForward(const Conv2D& c, const LayerParams& p, const Tensor& in, Tensor& out,
                 MatrixR& cols) {
  auto g = kernels::MakeGeometry(c, in.shape());
  kernels::Im2Col(g, in.data(), cols);
  ConstMatMap w(p.weights.data().data(), c.out_channels, g.patch_size());
  MatMap o(out.data().data(), c.out_channels, g.positions());
  o.noalias() = w * cols;
  o.colwise() += ConstVecMap(p.biases.data().data(), c.out_channels);
}

void PoolForward(const MaxPool& m, const Tensor& in, Tensor& out,
                 std::vector<std::uint32_t>& winners) {
  const auto& s = in.shape();
  const auto& os = out.shape();
  winners.resize(out.size());
  std::size_t k = 0;
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (std::size_t oi = 0; oi < os[1]; ++oi) {
      for (std::size_t oj = 0; oj < os[2]; ++oj, ++k) {
        std::size_t best = (c * s[1] + oi * m.stride) * s[2] + oj * m.stride;
        double best_value = in[best];
        for (std::size_t ki = 0; ki < m.kernel; ++ki) {
          for (std::size_t kj = 0; kj < m.kernel; ++kj) {
            std::size_t idx = (c * s[1] + oi * m.stride + ki) * s[2] + oj * m.stride + kj;
            // Strict comparison keeps the first maximum in row-major order.
            if (in[idx] > best_value) {
              best_value = in[idx];
              best = idx;
            }
          }
        }
        out[k] = best_value;
        winners[k] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

}  // namespace

KindTag TagOf(const LayerKind& kind) {
  return std::visit(Overloaded{[](const Dense&) { return KindTag::kDense; },
                               [](const Conv2D&) { return KindTag::kConv2D; },
                               [](const ReLU&) { return KindTag::kReLU; },
                               [](const MaxPool&) { return KindTag::kMaxPool; },
                               [](const Flatten&) { return KindTag::kFlatten; }},
                    kind);
}

std::string_view KindName(KindTag tag) {
  switch (tag) {
    case KindTag::kDense: return "dense";
    case KindTag::kConv2D: return "conv2d";
    case KindTag::kReLU: return "relu";
    case KindTag::kMaxPool: return "maxpool";
    case KindTag::kFlatten: return "flatten";
  }
  return "unknown";
}

Network::Network(Shape input_shape, std::vector<LayerKind> layers) {
  if (layers.empty()) throw NetworkError(0, "network needs at least one layer");
  if (input_shape.empty() || ShapeSize(input_shape) == 0 ||
      std::find(input_shape.begin(), input_shape.end(), 0) != input_shape.end()) {
    throw NetworkError(0, "invalid input shape " + ShapeString(input_shape));
  }
  boundary_shapes_.push_back(std::move(input_shape));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    boundary_shapes_.push_back(OutputShape(i, layers[i], boundary_shapes_.back()));
    if (IsParameterized(TagOf(layers[i]))) param_layers_.push_back(i);
    layers_.push_back(LayerSpec{std::move(layers[i]), i});
  }
  if (boundary_shapes_.back().size() != 1) {
    throw NetworkError(layers_.size() - 1, "final layer must produce a flat logit vector, got " +
                                               ShapeString(boundary_shapes_.back()));
  }
}

std::optional<std::size_t> Network::param_slot(std::size_t layer_index) const {
  auto it = std::find(param_layers_.begin(), param_layers_.end(), layer_index);
  if (it == param_layers_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - param_layers_.begin());
}

Shape Network::weight_shape(std::size_t p) const {
  const auto& kind = layers_.at(param_layers_.at(p)).kind;
  if (const auto* d = std::get_if<Dense>(&kind)) return {d->out_dim, d->in_dim};
  const auto& c = std::get<Conv2D>(kind);
  return {c.out_channels, c.in_channels, c.kernel, c.kernel};
}

Shape Network::bias_shape(std::size_t p) const {
  const auto& kind = layers_.at(param_layers_.at(p)).kind;
  if (const auto* d = std::get_if<Dense>(&kind)) return {d->out_dim};
  return {std::get<Conv2D>(kind).out_channels};
}

void Network::CheckParams(const LayeredParams& params) const {
  if (params.layer_count() != param_layer_count()) {
    throw std::invalid_argument("parameter set has " + std::to_string(params.layer_count()) +
                                " layers, network has " +
                                std::to_string(param_layer_count()));
  }
  for (std::size_t p = 0; p < params.layer_count(); ++p) {
    if (params.layers[p].weights.shape() != weight_shape(p) ||
        params.layers[p].biases.shape() != bias_shape(p)) {
      throw std::invalid_argument("parameter shapes of layer " +
                                  std::to_string(param_layer_index(p)) +
                                  " do not match the network");
    }
  }
}

void Network::CheckInput(const Tensor& input) const {
  if (input.shape() != input_shape()) {
    throw std::invalid_argument("input shape " + ShapeString(input.shape()) +
                                " does not match network input " +
                                ShapeString(input_shape()));
  }
}

LayeredParams InitializeParams(const Network& net, std::uint64_t seed) {
  LayeredParams params;
  for (std::size_t p = 0; p < net.param_layer_count(); ++p) {
    Shape ws = net.weight_shape(p);
    const double fan_in = static_cast<double>(ShapeSize(ws) / ws[0]);
    const double scale = std::sqrt(2.0 / fan_in);
    CounterRng rng(StreamKey(seed, {net.param_layer_index(p)}));
    Tensor weights(ws);
    for (double& w : weights.data()) w = scale * rng.NextNormal();
    params.layers.push_back({std::move(weights), Tensor(net.bias_shape(p))});
  }
  return params;
}

std::pair<Network, LayeredParams> BuildNetwork(Shape input_shape,
                                               std::vector<LayerKind> layers,
                                               std::uint64_t seed) {
  Network net(std::move(input_shape), std::move(layers));
  LayeredParams params = InitializeParams(net, seed);
  return {std::move(net), std::move(params)};
}

std::vector<LayerKind> ReferenceLayers(std::size_t rows, std::size_t cols,
                                       std::size_t class_count) {
  auto conv_out = [](std::size_t n) { return n - 2; };
  auto pool_out = [](std::size_t n) { return (n - 2) / 2 + 1; };
  std::size_t h = pool_out(conv_out(pool_out(conv_out(rows))));
  std::size_t w = pool_out(conv_out(pool_out(conv_out(cols))));
  return {Conv2D{1, 8, 3}, ReLU{},    MaxPool{2, 2},         Conv2D{8, 16, 3},
          ReLU{},          MaxPool{2, 2}, Flatten{},         Dense{16 * h * w, 64},
          ReLU{},          Dense{64, class_count}};
}

ForwardResult Forward(const Network& net, const LayeredParams& params,
                      const Tensor& input) {
  net.CheckInput(input);
  ForwardResult result;
  auto& trace = result.trace;
  trace.boundaries.reserve(net.layer_count() + 1);
  trace.boundaries.push_back(input);
  trace.pool_winners.resize(net.layer_count());
  MatrixR cols;
  for (const auto& spec : net.layers()) {
    const Tensor& in = trace.boundaries.back();
    Tensor out(net.boundary_shape(spec.index + 1));
    std::visit(
        Overloaded{
            [&](const Dense& d) {
              DenseForward(d, params.layers.at(*net.param_slot(spec.index)), in, out);
            },
            [&](const Conv2D& c) {
              ConvForward(c, params.layers.at(*net.param_slot(spec.index)), in, out, cols);
            },
            [&](const ReLU&) {
              for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(in[i], 0.0);
            },
            [&](const MaxPool& m) { PoolForward(m, in, out, trace.pool_winners[spec.index]); },
            [&](const Flatten&) { std::copy(in.data().begin(), in.data().end(), out.data().begin()); },
        },
        spec.kind);
    trace.boundaries.push_back(std::move(out));
  }
  result.logits = trace.boundaries.back();
  return result;
}

std::vector<double> Softmax(std::span<const double> logits) {
  double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - peak);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::size_t Argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("Argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::size_t Predict(const Network& net, const LayeredParams& params, const Tensor& input) {
  return Argmax(Forward(net, params, input).logits.data());
}

LossAndGradResult LossAndGrad(const Network& net, const LayeredParams& params,
                              std::span<const Tensor> inputs,
                              std::span<const int> labels) {
  if (inputs.empty()) throw std::invalid_argument("LossAndGrad: empty batch");
  if (inputs.size() != labels.size()) {
    throw std::invalid_argument("LossAndGrad: inputs and labels differ in length");
  }
  net.CheckParams(params);
  const std::size_t classes = net.class_count();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
  }

  LossAndGradResult result;
  result.grads = ZerosLike(params);
  const double inv_batch = 1.0 / static_cast<double>(inputs.size());
  MatrixR cols;
  MatrixR col_grad;
  AlignedDoubles grad;
  AlignedDoubles next;

  for (std::size_t s = 0; s < inputs.size(); ++s) {
    ForwardResult fwd = Forward(net, params, inputs[s]);
    auto logits = fwd.logits.data();
    double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) total += std::exp(z - peak);
    const double log_norm = peak + std::log(total);
    result.loss += (log_norm - logits[labels[s]]) * inv_batch;

    grad.assign(classes, 0.0);
    for (std::size_t k = 0; k < classes; ++k) {
      grad[k] = std::exp(logits[k] - log_norm) * inv_batch;
    }
    grad[labels[s]] -= inv_batch;

    for (std::size_t i = net.layer_count(); i-- > 0;) {
      const auto& spec = net.layers()[i];
      const Tensor& in = fwd.trace.boundaries[i];
      const bool need_input_grad = i > 0;
      next.assign(in.size(), 0.0);
      std::visit(
          Overloaded{
              [&](const Dense& d) {
                std::size_t p = *net.param_slot(i);
                auto& g = result.grads.layers[p];
                ConstVecMap go(grad.data(), d.out_dim);
                ConstVecMap x(in.data().data(), d.in_dim);
                MatMap(g.weights.data().data(), d.out_dim, d.in_dim).noalias() +=
                    go * x.transpose();
                VecMap(g.biases.data().data(), d.out_dim) += go;
                if (need_input_grad) {
                  ConstMatMap w(params.layers[p].weights.data().data(), d.out_dim, d.in_dim);
                  VecMap(next.data(), d.in_dim).noalias() = w.transpose() * go;
                }
              },
              [&](const Conv2D& c) {
                std::size_t p = *net.param_slot(i);
                auto& g = result.grads.layers[p];
                auto geo = kernels::MakeGeometry(c, in.shape());
                kernels::Im2Col(geo, in.data(), cols);
                ConstMatMap go(grad.data(), c.out_channels, geo.positions());
                MatMap(g.weights.data().data(), c.out_channels, geo.patch_size()).noalias() +=
                    go * cols.transpose();
                VecMap(g.biases.data().data(), c.out_channels) += go.rowwise().sum();
                if (need_input_grad) {
                  ConstMatMap w(params.layers[p].weights.data().data(), c.out_channels,
                                geo.patch_size());
                  col_grad.noalias() = w.transpose() * go;
                  kernels::Col2ImAdd(geo, col_grad, next);
                }
              },
              [&](const ReLU&) {
                for (std::size_t j = 0; j < in.size(); ++j) next[j] = in[j] > 0.0 ? grad[j] : 0.0;
              },
              [&](const MaxPool&) {
                const auto& winners = fwd.trace.pool_winners[i];
                for (std::size_t k = 0; k < winners.size(); ++k) next[winners[k]] += grad[k];
              },
              [&](const Flatten&) { next = grad; },
          },
          spec.kind);
      grad.swap(next);
    }
  }
  return result;
}

}  // namespace fedliab::nn

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

#ifndef FEDLIAB_NN_NETWORK_H_
#define FEDLIAB_NN_NETWORK_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fedliab/nn/params.h"
#include "fedliab/tensor.h"

namespace fedliab::nn {

// Activations are laid out as (channels, height, width) for spatial layers
// and as a flat vector for dense layers.
struct Dense {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

struct Conv2D {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct ReLU {};

struct MaxPool {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

struct Flatten {};

using LayerKind = std::variant<Dense, Conv2D, ReLU, MaxPool, Flatten>;

enum class KindTag { kDense, kConv2D, kReLU, kMaxPool, kFlatten };

KindTag TagOf(const LayerKind& kind);
std::string_view KindName(KindTag tag);
inline bool IsParameterized(KindTag tag) {
  return tag == KindTag::kDense || tag == KindTag::kConv2D;
}

struct LayerSpec {
  LayerKind kind;
  std::size_t index = 0;
};

// Construction-time shape errors carry the offending layer position.
class NetworkError : public std::invalid_argument {
 public:
  NetworkError(std::size_t layer_index, const std::string& what)
      : std::invalid_argument("layer " + std::to_string(layer_index) + ": " + what),
        layer_index_(layer_index) {}
  std::size_t layer_index() const { return layer_index_; }

 private:
  std::size_t layer_index_;
};

// Immutable, shape-checked layer stack. Boundary b is the input of layer b;
// boundary layer_count() holds the logits.
class Network {
 public:
  Network(Shape input_shape, std::vector<LayerKind> layers);

  const Shape& input_shape() const { return boundary_shapes_.front(); }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  const Shape& boundary_shape(std::size_t boundary) const {
    return boundary_shapes_.at(boundary);
  }
  std::size_t class_count() const { return ShapeSize(boundary_shapes_.back()); }

  // L: number of layers owning parameters.
  std::size_t param_layer_count() const { return param_layers_.size(); }
  // Network position of the p-th parameterized layer.
  std::size_t param_layer_index(std::size_t p) const { return param_layers_.at(p); }
  std::optional<std::size_t> param_slot(std::size_t layer_index) const;

  Shape weight_shape(std::size_t p) const;
  Shape bias_shape(std::size_t p) const;

  // Throws std::invalid_argument unless `params` matches this network.
  void CheckParams(const LayeredParams& params) const;
  void CheckInput(const Tensor& input) const;

 private:
  std::vector<LayerSpec> layers_;
  std::vector<Shape> boundary_shapes_;
  std::vector<std::size_t> param_layers_;
};

// Per-boundary activations of one forward pass, plus the argmax position
// chosen inside every pooling window (flat index into that layer's input).
struct ActivationTrace {
  std::vector<Tensor> boundaries;
  std::vector<std::vector<std::uint32_t>> pool_winners;
};

// Zero biases; weights ~ Normal(0, 2 / fan_in) drawn from a counter-based
// stream keyed by (seed, layer index).
LayeredParams InitializeParams(const Network& net, std::uint64_t seed);

std::pair<Network, LayeredParams> BuildNetwork(Shape input_shape,
                                               std::vector<LayerKind> layers,
                                               std::uint64_t seed);

// Small convolutional classifier used by the experiments:
// conv(8,k3) relu pool conv(16,k3) relu pool flatten dense(64) relu dense(C).
std::vector<LayerKind> ReferenceLayers(std::size_t rows, std::size_t cols,
                                       std::size_t class_count);

struct ForwardResult {
  Tensor logits;
  ActivationTrace trace;
};

ForwardResult Forward(const Network& net, const LayeredParams& params,
                      const Tensor& input);

struct LossAndGradResult {
  double loss = 0.0;
  LayeredParams grads;
};

// Mean softmax cross-entropy over the batch and its parameter gradient.
LossAndGradResult LossAndGrad(const Network& net, const LayeredParams& params,
                              std::span<const Tensor> inputs,
                              std::span<const int> labels);

std::vector<double> Softmax(std::span<const double> logits);

// Index of the largest value; ties go to the lowest index.
std::size_t Argmax(std::span<const double> values);

std::size_t Predict(const Network& net, const LayeredParams& params,
                    const Tensor& input);

}  // namespace fedliab::nn

#endif  // FEDLIAB_NN_NETWORK_H_

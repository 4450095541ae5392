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

#ifndef FEDLIAB_NN_PARAMS_H_
#define FEDLIAB_NN_PARAMS_H_

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "fedliab/tensor.h"

namespace fedliab::nn {

struct LayerParams {
  Tensor weights;
  Tensor biases;

  std::size_t size() const { return weights.size() + biases.size(); }
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// Parameters of every parameterized layer, in network order.
struct LayeredParams {
  std::vector<LayerParams> layers;

  std::size_t layer_count() const { return layers.size(); }
  std::size_t ParameterCount() const;
  bool SameShapes(const LayeredParams& other) const;
  friend bool operator==(const LayeredParams&, const LayeredParams&) = default;
};

// Zeros shaped like `like`.
LayeredParams ZerosLike(const LayeredParams& like);

// params - lr * grads. lr must be positive and finite.
LayeredParams SgdStep(const LayeredParams& params, const LayeredParams& grads,
                      double lr);

// Layer `layer` as a 1-D tensor: weights in row-major order, then biases.
Tensor FlattenLayerParams(const LayeredParams& params, std::size_t layer);
LayerParams UnflattenLayerParams(const Tensor& flat, const Shape& weight_shape,
                                 const Shape& bias_shape);

// Binary form: framed JSON header
//   {"format":"fedliab-params","version":1,"layers":[{"weights":[..],"biases":[..]},..]}
// followed by every layer's FlattenLayerParams values as little-endian f64.
void WriteParams(std::ostream& out, const LayeredParams& params);
LayeredParams ReadParams(std::istream& in);
std::size_t SerializedParamsSize(const LayeredParams& params);

}  // namespace fedliab::nn

#endif  // FEDLIAB_NN_PARAMS_H_

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

#include "fedliab/nn/params.h"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "fedliab/util/binary_io.h"

namespace fedliab::nn {

std::size_t LayeredParams::ParameterCount() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.size();
  return total;
}

bool LayeredParams::SameShapes(const LayeredParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weights.shape() != other.layers[i].weights.shape() ||
        layers[i].biases.shape() != other.layers[i].biases.shape()) {
      return false;
    }
  }
  return true;
}

LayeredParams ZerosLike(const LayeredParams& like) {
  LayeredParams out;
  out.layers.reserve(like.layers.size());
  for (const auto& l : like.layers) {
    out.layers.push_back({Tensor(l.weights.shape()), Tensor(l.biases.shape())});
  }
  return out;
}

LayeredParams SgdStep(const LayeredParams& params, const LayeredParams& grads, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("SgdStep: learning rate must be positive and finite");
  }
  if (!params.SameShapes(grads)) {
    throw std::invalid_argument("SgdStep: gradient shapes do not match parameters");
  }
  LayeredParams out = params;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto w = out.layers[l].weights.data();
    auto gw = grads.layers[l].weights.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    auto b = out.layers[l].biases.data();
    auto gb = grads.layers[l].biases.data();
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
  }
  return out;
}

Tensor FlattenLayerParams(const LayeredParams& params, std::size_t layer) {
  if (layer >= params.layers.size()) {
    throw std::out_of_range("parameterized layer " + std::to_string(layer) +
                            " out of range (L = " + std::to_string(params.layers.size()) + ")");
  }
  const auto& l = params.layers[layer];
  std::vector<double> flat;
  flat.reserve(l.size());
  flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
  flat.insert(flat.end(), l.biases.data().begin(), l.biases.data().end());
  return Tensor::FromVector(std::move(flat));
}

LayerParams UnflattenLayerParams(const Tensor& flat, const Shape& weight_shape,
                                 const Shape& bias_shape) {
  const std::size_t nw = ShapeSize(weight_shape);
  const std::size_t nb = ShapeSize(bias_shape);
  if (flat.size() != nw + nb) {
    throw std::invalid_argument("flat layer has " + std::to_string(flat.size()) +
                                " values, shapes need " + std::to_string(nw + nb));
  }
  auto v = flat.data();
  return {Tensor(weight_shape, std::vector<double>(v.begin(), v.begin() + nw)),
          Tensor(bias_shape, std::vector<double>(v.begin() + nw, v.end()))};
}

namespace {

std::string ParamsHeader(const LayeredParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    layers.push_back({{"weights", l.weights.shape()}, {"biases", l.biases.shape()}});
  }
  nlohmann::json header = {{"format", "fedliab-params"}, {"version", 1}, {"layers", layers}};
  return header.dump();
}

}  // namespace

void WriteParams(std::ostream& out, const LayeredParams& params) {
  WriteFramedHeader(out, ParamsHeader(params));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    WriteF64LE(out, FlattenLayerParams(params, l).data());
  }
}

LayeredParams ReadParams(std::istream& in) {
  auto header = nlohmann::json::parse(ReadFramedHeader(in));
  if (header.value("format", "") != "fedliab-params") {
    throw std::runtime_error("not a fedliab parameter file");
  }
  LayeredParams params;
  for (const auto& entry : header.at("layers")) {
    Shape ws = entry.at("weights").get<Shape>();
    Shape bs = entry.at("biases").get<Shape>();
    auto values = ReadF64LE(in, ShapeSize(ws) + ShapeSize(bs));
    params.layers.push_back(
        UnflattenLayerParams(Tensor::FromVector(std::move(values)), ws, bs));
  }
  return params;
}

std::size_t SerializedParamsSize(const LayeredParams& params) {
  std::size_t header = ParamsHeader(params).size() + 1;
  header = (header + kHeaderBlock - 1) / kHeaderBlock * kHeaderBlock;
  return header + params.ParameterCount() * 8;
}

}  // namespace fedliab::nn

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

#ifndef FEDLIAB_NN_KERNELS_H_
#define FEDLIAB_NN_KERNELS_H_

#include <cstddef>
#include <span>

#include <Eigen/Core>

#include "fedliab/nn/network.h"

// Low-level layer kernels shared by training and relevance propagation.
namespace fedliab::nn::kernels {

using MatrixR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatMap = Eigen::Map<const MatrixR>;
using MatMap = Eigen::Map<MatrixR>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t patch_size() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_height * out_width; }
};

ConvGeometry MakeGeometry(const Conv2D& conv, const Shape& input_shape);

// Unfolds a (C, H, W) input into a (C*k*k, H'*W') row-major matrix; padded
// positions are zero.
void Im2Col(const ConvGeometry& g, std::span<const double> input, MatrixR& cols);

// Adjoint of Im2Col: accumulates columns back into a (C, H, W) buffer.
void Col2ImAdd(const ConvGeometry& g, const MatrixR& cols, std::span<double> input);

}  // namespace fedliab::nn::kernels

#endif  // FEDLIAB_NN_KERNELS_H_

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

#include "fedliab/nn/kernels.h"

#include <algorithm>

namespace fedliab::nn::kernels {

ConvGeometry MakeGeometry(const Conv2D& conv, const Shape& input_shape) {
  ConvGeometry g{};
  g.channels = input_shape[0];
  g.height = input_shape[1];
  g.width = input_shape[2];
  g.kernel = conv.kernel;
  g.stride = conv.stride;
  g.padding = conv.padding;
  g.out_height = (g.height + 2 * g.padding - g.kernel) / g.stride + 1;
  g.out_width = (g.width + 2 * g.padding - g.kernel) / g.stride + 1;
  return g;
}

void Im2Col(const ConvGeometry& g, std::span<const double> input, MatrixR& cols) {
  cols.resize(static_cast<Eigen::Index>(g.patch_size()),
              static_cast<Eigen::Index>(g.positions()));
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  if (g.padding == 0 && g.stride == 1) {
    // Every patch is in bounds: each output row is a contiguous input slice.
    for (std::size_t c = 0; c < g.channels; ++c) {
      const double* plane = input.data() + c * g.height * g.width;
      for (std::size_t ki = 0; ki < g.kernel; ++ki) {
        for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
          double* out = cols.row(static_cast<Eigen::Index>(row)).data();
          for (std::size_t oi = 0; oi < g.out_height; ++oi) {
            const double* src = plane + (oi + ki) * g.width + kj;
            std::copy(src, src + g.out_width, out + oi * g.out_width);
          }
        }
      }
    }
    return;
  }
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = input.data() + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
        double* out = cols.row(static_cast<Eigen::Index>(row)).data();
        for (std::size_t oi = 0; oi < g.out_height; ++oi) {
          auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          double* dst = out + oi * g.out_width;
          if (ii < 0 || ii >= h) {
            for (std::size_t oj = 0; oj < g.out_width; ++oj) dst[oj] = 0.0;
            continue;
          }
          const double* src_row = plane + ii * w;
          for (std::size_t oj = 0; oj < g.out_width; ++oj) {
            auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            dst[oj] = (jj < 0 || jj >= w) ? 0.0 : src_row[jj];
          }
        }
      }
    }
  }
}

void Col2ImAdd(const ConvGeometry& g, const MatrixR& cols, std::span<double> input) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  if (g.padding == 0 && g.stride == 1) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      double* plane = input.data() + c * g.height * g.width;
      for (std::size_t ki = 0; ki < g.kernel; ++ki) {
        for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
          const double* src = cols.row(static_cast<Eigen::Index>(row)).data();
          for (std::size_t oi = 0; oi < g.out_height; ++oi) {
            double* dst = plane + (oi + ki) * g.width + kj;
            const double* s = src + oi * g.out_width;
            for (std::size_t oj = 0; oj < g.out_width; ++oj) dst[oj] += s[oj];
          }
        }
      }
    }
    return;
  }
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = input.data() + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
        const double* src = cols.row(static_cast<Eigen::Index>(row)).data();
        for (std::size_t oi = 0; oi < g.out_height; ++oi) {
          auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          if (ii < 0 || ii >= h) continue;
          double* dst_row = plane + ii * w;
          const double* s = src + oi * g.out_width;
          for (std::size_t oj = 0; oj < g.out_width; ++oj) {
            auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            if (jj >= 0 && jj < w) dst_row[jj] += s[oj];
          }
        }
      }
    }
  }
}

}  // namespace fedliab::nn::kernels

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

#include "fedliab/data/dataset.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "fedliab/util/random.h"

namespace fedliab::data {

void Dataset::Validate() const {
  if (images.size() != labels.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(images.size()) +
                                " images but " + std::to_string(labels.size()) + " labels");
  }
  const Shape expected{1, rows, cols};
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != expected) {
      throw std::invalid_argument("image " + std::to_string(i) + " has shape " +
                                  ShapeString(images[i].shape()));
    }
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " of sample " +
                                  std::to_string(i) + " outside [0, " +
                                  std::to_string(class_count) + ")");
    }
    for (double v : images[i].data()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("pixel of sample " + std::to_string(i) + " outside [0,1]");
      }
    }
  }
}

std::vector<std::size_t> Dataset::ClassCounts() const {
  std::vector<std::size_t> counts(class_count, 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset Dataset::Subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.class_count = class_count;
  out.rows = rows;
  out.cols = cols;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Dataset Corrupt(const Dataset& ds, const CorruptionSpec& spec) {
  Dataset out = ds;
  for (int& y : out.labels) {
    if (y == spec.source_class) y = spec.target_class;
  }
  return out;
}

// --- synthetic glyphs -------------------------------------------------------

namespace {

struct Stroke {
  double u0, v0, u1, v1;
};

// Unit-box strokes: a b c d e f g (seven segments), two diagonals, centre dot.
constexpr std::array<Stroke, 10> kStrokes = {{
    {0, 0, 1, 0},        // a top
    {1, 0, 1, 0.5},      // b upper right
    {1, 0.5, 1, 1},      // c lower right
    {0, 1, 1, 1},        // d bottom
    {0, 0.5, 0, 1},      // e lower left
    {0, 0, 0, 0.5},      // f upper left
    {0, 0.5, 1, 0.5},    // g middle
    {0, 0, 1, 1},        // h diagonal
    {1, 0, 0, 1},        // i anti-diagonal
    {0.5, 0.5, 0.5, 0.5} // j centre blob
}};

constexpr std::array<unsigned, 10> kDigitMasks = {
    0b0111111,  // 0: a b c d e f
    0b0000110,  // 1: b c
    0b1011011,  // 2: a b d e g
    0b1001111,  // 3: a b c d g
    0b1100110,  // 4: b c f g
    0b1101101,  // 5: a c d f g
    0b1111101,  // 6: a c d e f g
    0b0000111,  // 7: a b c
    0b1111111,  // 8
    0b1101111,  // 9: a b c d f g
};

unsigned GlyphMask(int class_index) {
  if (class_index < 0) throw std::invalid_argument("negative class index");
  if (class_index < 10) return kDigitMasks[static_cast<std::size_t>(class_index)];
  // Further classes: stroke sets that use at least one non-segment stroke,
  // enumerated in increasing mask order.
  int remaining = class_index - 10;
  for (unsigned mask = 1; mask < (1u << kStrokes.size()); ++mask) {
    if ((mask >> 7) == 0 || std::popcount(mask) < 2) continue;
    if (remaining-- == 0) return mask;
  }
  throw std::invalid_argument("too many synthetic classes");
}

double SegmentDistance(double px, double py, double x0, double y0, double x1, double y1) {
  double dx = x1 - x0, dy = y1 - y0;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? std::clamp(((px - x0) * dx + (py - y0) * dy) / len2, 0.0, 1.0) : 0.0;
  double qx = x0 + t * dx - px, qy = y0 + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

struct GlyphPose {
  double shift_x = 0, shift_y = 0, intensity = 1.0;
};

void RenderGlyph(unsigned mask, const GlyphPose& pose, std::size_t rows, std::size_t cols,
                 std::span<double> out) {
  const double box_w = 0.43 * static_cast<double>(cols);
  const double box_h = 0.64 * static_cast<double>(rows);
  const double left = (static_cast<double>(cols) - box_w) / 2 + pose.shift_x;
  const double top = (static_cast<double>(rows) - box_h) / 2 + pose.shift_y;
  const double half_width = 1.1;
  for (std::size_t s = 0; s < kStrokes.size(); ++s) {
    if (!(mask & (1u << s))) continue;
    const auto& st = kStrokes[s];
    double x0 = left + st.u0 * box_w, y0 = top + st.v0 * box_h;
    double x1 = left + st.u1 * box_w, y1 = top + st.v1 * box_h;
    double reach = (s == 9) ? 2.5 : half_width;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        double d = SegmentDistance(static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5,
                                   x0, y0, x1, y1);
        if (d <= reach) out[r * cols + c] = pose.intensity;
      }
    }
  }
}

}  // namespace

std::vector<int> GlyphStrokes(int class_index) {
  unsigned mask = GlyphMask(class_index);
  std::vector<int> strokes;
  for (int s = 0; s < static_cast<int>(kStrokes.size()); ++s) {
    if (mask & (1u << s)) strokes.push_back(s);
  }
  return strokes;
}

Tensor SynthTemplate(int class_index, std::size_t rows, std::size_t cols) {
  Tensor t({1, rows, cols});
  RenderGlyph(GlyphMask(class_index), GlyphPose{}, rows, cols, t.data());
  return t;
}

Dataset SynthGenerate(std::size_t class_count, std::size_t per_class, std::uint64_t seed,
                      std::size_t rows, std::size_t cols) {
  if (class_count < 2) throw std::invalid_argument("synthetic data needs at least two classes");
  Dataset ds;
  ds.class_count = class_count;
  ds.rows = rows;
  ds.cols = cols;
  ds.images.reserve(class_count * per_class);
  ds.labels.reserve(class_count * per_class);
  for (std::size_t k = 0; k < class_count; ++k) {
    unsigned mask = GlyphMask(static_cast<int>(k));
    for (std::size_t i = 0; i < per_class; ++i) {
      CounterRng rng(StreamKey(seed, {0x5e17, k, i}));
      GlyphPose pose;
      pose.shift_x = static_cast<double>(rng.NextBelow(5)) - 2.0;
      pose.shift_y = static_cast<double>(rng.NextBelow(5)) - 2.0;
      pose.intensity = 0.75 + 0.25 * rng.NextUniform();
      Tensor image({1, rows, cols});
      RenderGlyph(mask, pose, rows, cols, image.data());
      for (double& v : image.data()) {
        double noisy = std::clamp(v + 0.1 * rng.NextNormal(), 0.0, 1.0);
        v = std::round(noisy * 255.0) / 255.0;
      }
      ds.images.push_back(std::move(image));
      ds.labels.push_back(static_cast<int>(k));
    }
  }
  return ds;
}

// --- partitioning -----------------------------------------------------------

PartitionPlan MakePartitionPlan(std::size_t node_count, std::size_t per_node_size,
                                double bias_factor, std::size_t class_count,
                                std::uint64_t seed) {
  if (node_count == 0 || per_node_size == 0 || class_count == 0) {
    throw std::invalid_argument("partition plan needs nodes, samples and classes");
  }
  if (!(bias_factor > 0.0)) throw std::invalid_argument("bias factor must be positive");
  PartitionPlan plan{node_count, per_node_size, bias_factor, {}, seed};
  CounterRng rng(StreamKey(seed, {0xb1a5}));
  std::vector<int> classes(class_count);
  std::iota(classes.begin(), classes.end(), 0);
  rng.Shuffle(std::span<int>(classes));
  for (std::size_t n = 0; n < node_count; ++n) {
    plan.preferred_class_per_node.push_back(
        n < class_count ? classes[n] : static_cast<int>(rng.NextBelow(class_count)));
  }
  return plan;
}

std::vector<std::size_t> PlannedClassCounts(const PartitionPlan& plan,
                                            std::size_t class_count, std::size_t node) {
  const double denom = plan.bias_factor + static_cast<double>(class_count) - 1.0;
  const auto minor = static_cast<std::size_t>(std::floor(static_cast<double>(plan.per_node_size) / denom));
  std::vector<std::size_t> counts(class_count, minor);
  counts.at(static_cast<std::size_t>(plan.preferred_class_per_node.at(node))) =
      plan.per_node_size - (class_count - 1) * minor;
  return counts;
}

std::vector<std::size_t> RequiredPerClass(const PartitionPlan& plan, std::size_t class_count) {
  std::vector<std::size_t> total(class_count, 0);
  for (std::size_t n = 0; n < plan.node_count; ++n) {
    auto counts = PlannedClassCounts(plan, class_count, n);
    for (std::size_t c = 0; c < class_count; ++c) total[c] += counts[c];
  }
  return total;
}

Partition PartitionNonIid(const Dataset& ds, const PartitionPlan& plan) {
  if (plan.preferred_class_per_node.size() != plan.node_count) {
    throw std::invalid_argument("plan lists " +
                                std::to_string(plan.preferred_class_per_node.size()) +
                                " preferred classes for " + std::to_string(plan.node_count) +
                                " nodes");
  }
  const std::size_t classes = ds.class_count;
  std::vector<std::vector<std::size_t>> pools(classes);
  for (std::size_t i = 0; i < ds.size(); ++i) pools[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  auto required = RequiredPerClass(plan, classes);
  std::string shortfall;
  for (std::size_t c = 0; c < classes; ++c) {
    if (required[c] > pools[c].size()) {
      shortfall += " class " + std::to_string(c) + " needs " + std::to_string(required[c]) +
                   ", has " + std::to_string(pools[c].size()) + " (short " +
                   std::to_string(required[c] - pools[c].size()) + ");";
    }
  }
  if (!shortfall.empty()) throw PartitionError("insufficient samples:" + shortfall);

  for (std::size_t c = 0; c < classes; ++c) {
    CounterRng rng(StreamKey(plan.seed, {0x9a27, c}));
    rng.Shuffle(std::span<std::size_t>(pools[c]));
  }

  Partition out;
  std::vector<std::size_t> cursor(classes, 0);
  for (std::size_t n = 0; n < plan.node_count; ++n) {
    auto counts = PlannedClassCounts(plan, classes, n);
    std::vector<std::size_t> picked;
    picked.reserve(plan.per_node_size);
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t k = 0; k < counts[c]; ++k) picked.push_back(pools[c][cursor[c]++]);
    }
    out.locals.push_back(ds.Subset(picked));
    out.indices.push_back(std::move(picked));
  }
  return out;
}

std::string PartitionManifestJson(const Partition& partition, const PartitionPlan& plan) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t n = 0; n < partition.indices.size(); ++n) {
    nodes.push_back({{"node", n},
                     {"preferred_class", plan.preferred_class_per_node.at(n)},
                     {"indices", partition.indices[n]}});
  }
  nlohmann::json doc = {{"seed", plan.seed},
                        {"bias_factor", plan.bias_factor},
                        {"per_node_size", plan.per_node_size},
                        {"nodes", nodes}};
  return doc.dump();
}

}  // namespace fedliab::data

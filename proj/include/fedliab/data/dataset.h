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

#ifndef FEDLIAB_DATA_DATASET_H_
#define FEDLIAB_DATA_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedliab/tensor.h"

namespace fedliab::data {

// Labeled grayscale images. Each image is a (1, rows, cols) tensor with
// pixels in [0, 1].
struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  // Throws std::invalid_argument when an invariant is broken.
  void Validate() const;
  std::vector<std::size_t> ClassCounts() const;
  Dataset Subset(const std::vector<std::size_t>& indices) const;
};

// ---------------------------------------------------------------------------
// IDX files (big-endian): images magic 0x00000803 with dims (count, rows,
// cols); labels magic 0x00000801 with dim (count). Pixels are bytes / 255.

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

class IdxError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kCountMismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// class_count defaults to max(label) + 1.
Dataset LoadIdx(const std::filesystem::path& images_path,
                const std::filesystem::path& labels_path,
                std::optional<std::size_t> class_count = std::nullopt);

// Pixels are written as round(255 * value).
void WriteIdx(const Dataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

// ---------------------------------------------------------------------------
// Synthetic stand-in for handwritten characters: every class is a fixed set of
// strokes (seven-segment digits first, then further stroke combinations),
// jittered in position and intensity, with Gaussian pixel noise (sigma 0.1)
// clamped to [0, 1] and quantized to 8 bits.

std::vector<int> GlyphStrokes(int class_index);

// Clean, centered glyph for a class.
Tensor SynthTemplate(int class_index, std::size_t rows = 28, std::size_t cols = 28);

// per_class samples of every class, ordered class-major.
Dataset SynthGenerate(std::size_t class_count, std::size_t per_class, std::uint64_t seed,
                      std::size_t rows = 28, std::size_t cols = 28);

// ---------------------------------------------------------------------------
// Label flipping: every sample of source_class is relabeled target_class.

struct CorruptionSpec {
  int source_class = 3;
  int target_class = 9;
};

Dataset Corrupt(const Dataset& ds, const CorruptionSpec& spec);

// ---------------------------------------------------------------------------
// Non-i.i.d. partitioning: each node gets one preferred class that is
// bias_factor times as frequent as every other class.

struct PartitionPlan {
  std::size_t node_count = 10;
  std::size_t per_node_size = 500;
  double bias_factor = 10.0;
  std::vector<int> preferred_class_per_node;
  std::uint64_t seed = 0;
};

// Preferred classes are drawn without repetition while classes remain, then
// uniformly with repetition.
PartitionPlan MakePartitionPlan(std::size_t node_count, std::size_t per_node_size,
                                double bias_factor, std::size_t class_count,
                                std::uint64_t seed);

// Per-class sample counts for one node: every non-preferred class gets
// floor(s / (bias + C - 1)); the preferred class takes the remainder.
std::vector<std::size_t> PlannedClassCounts(const PartitionPlan& plan,
                                            std::size_t class_count, std::size_t node);

// Samples of each class the whole plan consumes.
std::vector<std::size_t> RequiredPerClass(const PartitionPlan& plan, std::size_t class_count);

class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Partition {
  std::vector<Dataset> locals;
  // Source dataset index of every local sample.
  std::vector<std::vector<std::size_t>> indices;
};

// Disjoint draw without replacement; throws PartitionError naming the
// shortfall when a class runs out.
Partition PartitionNonIid(const Dataset& ds, const PartitionPlan& plan);

// {"nodes":[{"node":0,"preferred_class":c,"indices":[...]}, ...]}
std::string PartitionManifestJson(const Partition& partition, const PartitionPlan& plan);

}  // namespace fedliab::data

#endif  // FEDLIAB_DATA_DATASET_H_

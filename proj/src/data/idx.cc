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

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <fstream>
#include <vector>

#include "fedliab/data/dataset.h"
#include "fedliab/util/binary_io.h"

namespace fedliab::data {

namespace {

std::ifstream OpenOrThrow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::kIo, "cannot open " + path.string());
  return in;
}

std::uint32_t ReadHeaderWord(std::istream& in, const std::filesystem::path& path) {
  try {
    return ReadU32BE(in);
  } catch (const std::runtime_error&) {
    throw IdxError(IdxError::Kind::kTruncated, path.string() + ": truncated header");
  }
}

std::vector<unsigned char> ReadBytes(std::istream& in, std::size_t count,
                                     const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) {
    throw IdxError(IdxError::Kind::kTruncated,
                   path.string() + ": truncated payload, expected " + std::to_string(count) +
                       " bytes, found " + std::to_string(in.gcount()));
  }
  return bytes;
}

void CheckMagic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
  if (magic != expected) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "bad magic 0x%08x (expected 0x%08x)", magic, expected);
    throw IdxError(IdxError::Kind::kBadMagic, path.string() + ": " + buf);
  }
}

}  // namespace

Dataset LoadIdx(const std::filesystem::path& images_path,
                const std::filesystem::path& labels_path,
                std::optional<std::size_t> class_count) {
  auto images_in = OpenOrThrow(images_path);
  auto labels_in = OpenOrThrow(labels_path);

  CheckMagic(ReadHeaderWord(images_in, images_path), kIdxImagesMagic, images_path);
  const std::size_t image_count = ReadHeaderWord(images_in, images_path);
  const std::size_t rows = ReadHeaderWord(images_in, images_path);
  const std::size_t cols = ReadHeaderWord(images_in, images_path);

  CheckMagic(ReadHeaderWord(labels_in, labels_path), kIdxLabelsMagic, labels_path);
  const std::size_t label_count = ReadHeaderWord(labels_in, labels_path);

  if (image_count != label_count) {
    throw IdxError(IdxError::Kind::kCountMismatch,
                   "image count " + std::to_string(image_count) + " != label count " +
                       std::to_string(label_count));
  }
  if (rows == 0 || cols == 0) {
    throw IdxError(IdxError::Kind::kTruncated, images_path.string() + ": zero image size");
  }

  auto pixels = ReadBytes(images_in, image_count * rows * cols, images_path);
  auto labels = ReadBytes(labels_in, label_count, labels_path);

  Dataset ds;
  ds.rows = rows;
  ds.cols = cols;
  ds.images.reserve(image_count);
  for (std::size_t i = 0; i < image_count; ++i) {
    std::vector<double> values(rows * cols);
    for (std::size_t p = 0; p < values.size(); ++p) {
      values[p] = static_cast<double>(pixels[i * rows * cols + p]) / 255.0;
    }
    ds.images.emplace_back(Shape{1, rows, cols}, std::move(values));
  }
  ds.labels.assign(labels.begin(), labels.end());
  int max_label = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  ds.class_count = class_count.value_or(static_cast<std::size_t>(max_label) + 1);
  ds.Validate();
  return ds;
}

void WriteIdx(const Dataset& ds, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  ds.Validate();
  std::ofstream images_out(images_path, std::ios::binary);
  std::ofstream labels_out(labels_path, std::ios::binary);
  if (!images_out || !labels_out) {
    throw IdxError(IdxError::Kind::kIo, "cannot write " + images_path.string() + " / " +
                                            labels_path.string());
  }
  WriteU32BE(images_out, kIdxImagesMagic);
  WriteU32BE(images_out, static_cast<std::uint32_t>(ds.size()));
  WriteU32BE(images_out, static_cast<std::uint32_t>(ds.rows));
  WriteU32BE(images_out, static_cast<std::uint32_t>(ds.cols));
  std::vector<char> bytes(ds.rows * ds.cols);
  for (const auto& image : ds.images) {
    for (std::size_t p = 0; p < bytes.size(); ++p) {
      bytes[p] = static_cast<char>(static_cast<unsigned char>(std::lround(image[p] * 255.0)));
    }
    images_out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  WriteU32BE(labels_out, kIdxLabelsMagic);
  WriteU32BE(labels_out, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels) {
    char b = static_cast<char>(static_cast<unsigned char>(label));
    labels_out.write(&b, 1);
  }
  if (!images_out || !labels_out) throw IdxError(IdxError::Kind::kIo, "IDX write failed");
}

}  // namespace fedliab::data

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

#include "fedliab/util/binary_io.h"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace fedliab {

std::size_t WriteFramedHeader(std::ostream& out, const std::string& json_text) {
  if (json_text.find('\n') != std::string::npos) {
    throw std::invalid_argument("framed header must be single-line JSON");
  }
  std::size_t total = ((json_text.size() + 1 + kHeaderBlock - 1) / kHeaderBlock) * kHeaderBlock;
  std::string frame = json_text;
  frame.resize(total - 1, ' ');
  frame.push_back('\n');
  out.write(frame.data(), static_cast<std::streamsize>(frame.size()));
  return total;
}

std::string ReadFramedHeader(std::istream& in) {
  std::string text;
  std::array<char, kHeaderBlock> block;
  while (true) {
    if (!in.read(block.data(), block.size())) {
      throw std::runtime_error("truncated framed header");
    }
    text.append(block.data(), block.size());
    if (block.back() == '\n') break;
  }
  auto end = text.find_last_not_of(" \n");
  return end == std::string::npos ? std::string() : text.substr(0, end + 1);
}

void WriteF64LE(std::ostream& out, std::span<const double> values) {
  std::vector<char> buffer(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      buffer[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
}

std::vector<double> ReadF64LE(std::istream& in, std::size_t count) {
  std::vector<char> buffer(count * 8);
  if (!in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()))) {
    throw std::runtime_error("truncated f64 payload: expected " +
                             std::to_string(count) + " values");
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buffer[i * 8 + b]))
              << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

std::uint32_t ReadU32BE(std::istream& in) {
  std::array<unsigned char, 4> b;
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw std::runtime_error("truncated u32");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void WriteU32BE(std::ostream& out, std::uint32_t value) {
  std::array<char, 4> b = {static_cast<char>(value >> 24), static_cast<char>(value >> 16),
                           static_cast<char>(value >> 8), static_cast<char>(value)};
  out.write(b.data(), 4);
}

std::string FormatDouble(double value) {
  if (std::isnan(value)) return "nan";
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw std::runtime_error("FormatDouble failed");
  return std::string(buf.data(), ptr);
}

}  // namespace fedliab

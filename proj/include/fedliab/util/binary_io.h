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

#ifndef FEDLIAB_UTIL_BINARY_IO_H_
#define FEDLIAB_UTIL_BINARY_IO_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fedliab {

// Framed headers are JSON text padded with spaces to a multiple of this many
// bytes; the final byte of the frame is '\n'. Payloads follow immediately.
inline constexpr std::size_t kHeaderBlock = 64;

// Returns the number of bytes written.
std::size_t WriteFramedHeader(std::ostream& out, const std::string& json_text);
std::string ReadFramedHeader(std::istream& in);

// Little-endian IEEE-754 binary64, independent of host byte order.
void WriteF64LE(std::ostream& out, std::span<const double> values);
std::vector<double> ReadF64LE(std::istream& in, std::size_t count);

std::uint32_t ReadU32BE(std::istream& in);
void WriteU32BE(std::ostream& out, std::uint32_t value);

// Shortest round-trip decimal representation; deterministic across runs.
std::string FormatDouble(double value);

}  // namespace fedliab

#endif  // FEDLIAB_UTIL_BINARY_IO_H_

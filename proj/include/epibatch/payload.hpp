// Copyright 2026 The epibatch Authors
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

#ifndef EPIBATCH_PAYLOAD_HPP_
#define EPIBATCH_PAYLOAD_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epibatch/volume.hpp"

namespace epibatch {

// Binary payload layout, all integers little-endian:
//   bytes 0-3   magic "EPB1"
//   byte  4     rank
//   byte  5     dtype (0 = u8 labels, 1 = f32 image)
//   bytes 6-7   reserved, zero
//   then rank x u32 dims, then the row-major payload.
// A rank-2 slice therefore has a 16-byte header.

enum class PayloadType : std::uint8_t { kLabels = 0, kImage = 1 };

struct PayloadHeader {
  PayloadType type = PayloadType::kLabels;
  std::vector<std::size_t> dims;
};

std::vector<std::uint8_t> encode_payload(const LabelVolume& labels);
std::vector<std::uint8_t> encode_payload(const ImageVolume& image);

PayloadHeader decode_header(const std::vector<std::uint8_t>& bytes);

/// Spacing defaults to 1 mm per axis; it lives in dataset.json, not here.
LabelVolume decode_labels(const std::vector<std::uint8_t>& bytes);
ImageVolume decode_image(const std::vector<std::uint8_t>& bytes);

void write_payload(const std::filesystem::path& path, const LabelVolume& labels);
void write_payload(const std::filesystem::path& path, const ImageVolume& image);
LabelVolume read_labels(const std::filesystem::path& path);
ImageVolume read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                const std::vector<std::uint8_t>& bytes);

}  // namespace epibatch

#endif  // EPIBATCH_PAYLOAD_HPP_

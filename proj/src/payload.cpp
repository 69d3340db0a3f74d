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

#include "epibatch/payload.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace epibatch {
namespace {

constexpr char kMagic[4] = {'E', 'P', 'B', '1'};
constexpr std::size_t kFixedHeader = 8;

static_assert(std::endian::native == std::endian::little,
              "payload I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<std::uint8_t> header_bytes(PayloadType type,
                                       const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > 255) throw Error("payload rank out of range");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  out.push_back(static_cast<std::uint8_t>(type));
  out.push_back(0);
  out.push_back(0);
  for (std::size_t d : dims) {
    if (d > 0xffffffffULL) throw Error("payload dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  return out;
}

std::size_t header_size(std::size_t rank) { return kFixedHeader + 4 * rank; }

}  // namespace

std::vector<std::uint8_t> encode_payload(const LabelVolume& labels) {
  labels.validate();
  auto out = header_bytes(PayloadType::kLabels, labels.shape);
  out.insert(out.end(), labels.data.begin(), labels.data.end());
  return out;
}

std::vector<std::uint8_t> encode_payload(const ImageVolume& image) {
  image.validate();
  auto out = header_bytes(PayloadType::kImage, image.shape);
  const std::size_t offset = out.size();
  out.resize(offset + image.data.size() * sizeof(float));
  std::memcpy(out.data() + offset, image.data.data(), image.data.size() * sizeof(float));
  return out;
}

PayloadHeader decode_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kFixedHeader || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error("corrupt payload: bad magic");
  const std::size_t rank = bytes[4];
  if (rank == 0) throw Error("corrupt payload: rank 0");
  if (bytes[5] > 1) throw Error("corrupt payload: unknown dtype code");
  if (bytes.size() < header_size(rank)) throw Error("corrupt payload: truncated header");
  PayloadHeader h;
  h.type = static_cast<PayloadType>(bytes[5]);
  for (std::size_t i = 0; i < rank; ++i)
    h.dims.push_back(get_u32(bytes.data() + kFixedHeader + 4 * i));
  return h;
}

LabelVolume decode_labels(const std::vector<std::uint8_t>& bytes) {
  const PayloadHeader h = decode_header(bytes);
  if (h.type != PayloadType::kLabels) throw Error("payload is not a label map");
  const std::size_t n = LabelVolume::element_count(h.dims);
  const std::size_t offset = header_size(h.dims.size());
  if (bytes.size() != offset + n) throw Error("payload size mismatch");
  LabelVolume v;
  v.shape = h.dims;
  v.spacing.assign(h.dims.size(), 1.0);
  v.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return v;
}

ImageVolume decode_image(const std::vector<std::uint8_t>& bytes) {
  const PayloadHeader h = decode_header(bytes);
  if (h.type != PayloadType::kImage) throw Error("payload is not an image");
  const std::size_t n = ImageVolume::element_count(h.dims);
  const std::size_t offset = header_size(h.dims.size());
  if (bytes.size() != offset + n * sizeof(float)) throw Error("payload size mismatch");
  ImageVolume v;
  v.shape = h.dims;
  v.spacing.assign(h.dims.size(), 1.0);
  v.data.resize(n);
  std::memcpy(v.data.data(), bytes.data() + offset, n * sizeof(float));
  return v;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_payload(const std::filesystem::path& path, const LabelVolume& labels) {
  write_file(path, encode_payload(labels));
}

void write_payload(const std::filesystem::path& path, const ImageVolume& image) {
  write_file(path, encode_payload(image));
}

LabelVolume read_labels(const std::filesystem::path& path) {
  try {
    return decode_labels(read_file(path));
  } catch (const Error& e) {
    throw Error(path.filename().string() + ": " + e.what());
  }
}

ImageVolume read_image(const std::filesystem::path& path) {
  try {
    return decode_image(read_file(path));
  } catch (const Error& e) {
    throw Error(path.filename().string() + ": " + e.what());
  }
}

}  // namespace epibatch

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

#ifndef EPIBATCH_VOLUME_HPP_
#define EPIBATCH_VOLUME_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "epibatch/error.hpp"

namespace epibatch {

using ClassId = std::uint8_t;

inline constexpr ClassId kBackgroundId = 0;

/// Dense row-major array with physical spacing and an orientation tag.
///
/// Shapes are [H, W] for slices and [D, H, W] for volumes; the first axis of
/// a 3D volume is the longitudinal one (superior at higher index under RAS).
template <typename T>
struct Volume {
  std::vector<std::size_t> shape;
  std::vector<double> spacing;
  std::string orientation = "RAS";
  std::vector<T> data;

  Volume() = default;

  Volume(std::vector<std::size_t> shape_in, std::vector<double> spacing_in,
         T fill = T{})
      : shape(std::move(shape_in)), spacing(std::move(spacing_in)) {
    if (spacing.empty()) spacing.assign(shape.size(), 1.0);
    data.assign(element_count(shape), fill);
    validate();
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  void validate() const {
    if (shape.empty()) throw Error("volume has rank 0");
    if (spacing.size() != shape.size())
      throw Error("spacing rank does not match shape rank");
    for (double s : spacing)
      if (!(s > 0.0)) throw Error("spacing must be positive");
    if (data.size() != element_count(shape))
      throw Error("payload length does not match shape");
  }

  bool same_shape(const Volume& other) const { return shape == other.shape; }

  template <typename U>
  bool same_shape(const Volume<U>& other) const {
    return shape == other.shape;
  }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

using LabelVolume = Volume<std::uint8_t>;
using ImageVolume = Volume<float>;
/// Binary volume; any non-zero value is a member voxel.
using Mask = Volume<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Volume<A>& a, const Volume<B>& b,
                        const char* what) {
  if (a.shape != b.shape) throw Error(std::string("shape mismatch: ") + what);
}

}  // namespace epibatch

#endif  // EPIBATCH_VOLUME_HPP_

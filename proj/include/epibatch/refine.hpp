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

#ifndef EPIBATCH_REFINE_HPP_
#define EPIBATCH_REFINE_HPP_

#include <optional>
#include <span>
#include <vector>

#include "epibatch/corpus.hpp"
#include "epibatch/volume.hpp"
#include "json.hpp"

namespace epibatch {

/// Closed HU interval [lo, hi].
struct HuRange {
  int lo = 0;
  int hi = 0;

  void validate() const;
  bool contains(double hu) const { return hu >= lo && hu <= hi; }
};

struct RefineConfig {
  HuRange muscle_range{-29, 150};
  HuRange sat_imat_range{-190, -30};
  HuRange vat_range{-150, -50};
  int min_component_voxels = 5;
  int connectivity = 6;  // 6 = face neighbours, 26 = full neighbourhood

  void validate() const;
};

RefineConfig refine_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RefineConfig& c);

/// Body-composition label set, ids in this order: ESM, IMAT, PEM, PSM, QLM,
/// RAM, SAT, SM, VAT.
ClassCatalog body_composition_catalog();

namespace tissue {
inline constexpr ClassId kEsm = 1, kImat = 2, kPem = 3, kPsm = 4, kQlm = 5, kRam = 6,
                         kSat = 7, kSm = 8, kVat = 9;
}  // namespace tissue

/// Vertebra label ids: C1-C7 = 1-7, T1-T12 = 8-19, L1-L5 = 20-24.
namespace vertebra {
inline constexpr ClassId kC1 = 1, kT1 = 8, kT12 = 19, kL1 = 20, kL4 = 23, kL5 = 24;
}  // namespace vertebra

/// Voxels inside `mask` whose HU lies in `range` (bounds inclusive).
Mask hu_threshold(const ImageVolume& image, const Mask& mask, const HuRange& range);

/// Clears connected components smaller than cfg.min_component_voxels.
Mask remove_small_components(const Mask& mask, const RefineConfig& cfg);

/// Organ/bone voxels are subtracted first, then small components removed.
Mask compose_vat(const Mask& fat_thresholded, const Mask& organ_bone, const RefineConfig& cfg);

/// (union of muscle masks) AND fat_by_range AND NOT sat AND NOT vat.
Mask compose_imat(std::span<const Mask> muscle_masks, const Mask& fat_by_range, const Mask& sat,
                  const Mask& vat);

/// Inclusive slice range along the longitudinal axis.
struct SliceRange {
  std::size_t first = 0;
  std::size_t last = 0;
};

/// From the most cranial vertebra present in [top, bottom] (its superior-most
/// slice) down to the most caudal one present (its inferior-most slice).
SliceRange longitudinal_extent(const LabelVolume& vertebrae, ClassId top, ClassId bottom);

template <typename T>
Volume<T> crop_longitudinal(const Volume<T>& volume, const LabelVolume& vertebrae,
                            ClassId top = vertebra::kT1, ClassId bottom = vertebra::kL4) {
  require_same_shape(volume, vertebrae, "crop_longitudinal");
  const SliceRange r = longitudinal_extent(vertebrae, top, bottom);
  Volume<T> out;
  out.shape = volume.shape;
  out.shape[0] = r.last - r.first + 1;
  out.spacing = volume.spacing;
  out.orientation = volume.orientation;
  const std::size_t slab = volume.size() / volume.shape[0];
  out.data.assign(volume.data.begin() + static_cast<std::ptrdiff_t>(r.first * slab),
                  volume.data.begin() + static_cast<std::ptrdiff_t>((r.last + 1) * slab));
  return out;
}

/// Clamp HU to [level - width/2, level + width/2], then map linearly to [-1, 1].
double window_normalize(double hu, double width = 400.0, double level = 40.0);
ImageVolume hu_window_normalize(const ImageVolume& image, double width = 400.0,
                                double level = 40.0);

struct RefineInputs {
  ImageVolume image;                // HU
  std::vector<Mask> muscle_groups;  // ESM, PEM, PSM, QLM, RAM in that order
  Mask muscle;                      // whole skeletal-muscle region
  Mask sat;                         // subcutaneous fat region
  Mask vat;                         // visceral fat region
  Mask organ_bone;
  std::optional<LabelVolume> vertebrae;
};

struct RefineResult {
  LabelVolume labels;
  ImageVolume image;
  std::optional<SliceRange> crop;
};

/// Full label refinement: thresholds, SM residual, VAT clean-up, IMAT
/// composition, label-map assembly, optional longitudinal crop.
RefineResult refine_labels(const RefineInputs& in, const RefineConfig& cfg);

}  // namespace epibatch

#endif  // EPIBATCH_REFINE_HPP_

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

#include "epibatch/refine.hpp"

#include <algorithm>
#include <string>

namespace epibatch {

void HuRange::validate() const {
  if (lo >= hi)
    throw Error("HU range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                "] needs lo < hi");
}

void RefineConfig::validate() const {
  muscle_range.validate();
  sat_imat_range.validate();
  vat_range.validate();
  if (min_component_voxels < 1) throw Error("min_component_voxels must be at least 1");
  if (connectivity != 6 && connectivity != 26) throw Error("connectivity must be 6 or 26");
}

namespace {

HuRange range_from_json(const nlohmann::json& j) {
  if (j.is_array() && j.size() == 2) return {j[0].get<int>(), j[1].get<int>()};
  return {j.at("lo").get<int>(), j.at("hi").get<int>()};
}

}  // namespace

RefineConfig refine_config_from_json(const nlohmann::json& j) {
  RefineConfig c;
  try {
    if (j.contains("muscle_range")) c.muscle_range = range_from_json(j["muscle_range"]);
    if (j.contains("sat_imat_range")) c.sat_imat_range = range_from_json(j["sat_imat_range"]);
    if (j.contains("vat_range")) c.vat_range = range_from_json(j["vat_range"]);
    if (j.contains("min_component_voxels"))
      c.min_component_voxels = j["min_component_voxels"].get<int>();
    if (j.contains("connectivity")) c.connectivity = j["connectivity"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed refine config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const RefineConfig& c) {
  nlohmann::ordered_json j;
  j["muscle_range"] = {c.muscle_range.lo, c.muscle_range.hi};
  j["sat_imat_range"] = {c.sat_imat_range.lo, c.sat_imat_range.hi};
  j["vat_range"] = {c.vat_range.lo, c.vat_range.hi};
  j["min_component_voxels"] = c.min_component_voxels;
  j["connectivity"] = c.connectivity;
  return j;
}

ClassCatalog body_composition_catalog() {
  return ClassCatalog({{1, "ESM"}, {2, "IMAT"}, {3, "PEM"}, {4, "PSM"}, {5, "QLM"},
                       {6, "RAM"}, {7, "SAT"}, {8, "SM"}, {9, "VAT"}});
}

Mask hu_threshold(const ImageVolume& image, const Mask& mask, const HuRange& range) {
  require_same_shape(image, mask, "hu_threshold");
  range.validate();
  Mask out = mask;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (mask[i] && range.contains(image[i])) ? 1 : 0;
  return out;
}

Mask remove_small_components(const Mask& mask, const RefineConfig& cfg) {
  cfg.validate();
  const std::size_t rank = mask.rank();
  std::vector<std::size_t> stride(rank, 1);
  for (std::size_t a = rank - 1; a-- > 0;) stride[a] = stride[a + 1] * mask.shape[a + 1];

  // Neighbour offsets in {-1,0,1}^rank: face neighbours only, or all of them.
  std::vector<std::vector<int>> offsets;
  std::vector<int> off(rank, -1);
  while (true) {
    int nonzero = 0;
    for (int v : off) nonzero += v != 0;
    if (nonzero == 1 || (cfg.connectivity == 26 && nonzero > 0)) offsets.push_back(off);
    std::size_t a = 0;
    while (a < rank && off[a] == 1) off[a++] = -1;
    if (a == rank) break;
    ++off[a];
  }

  Mask out = mask;
  std::vector<std::uint8_t> visited(mask.size(), 0);
  std::vector<std::size_t> component, stack;
  std::vector<std::size_t> coord(rank);
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || visited[seed]) continue;
    component.clear();
    stack.assign(1, seed);
    visited[seed] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      component.push_back(i);
      for (std::size_t a = 0; a < rank; ++a) coord[a] = (i / stride[a]) % mask.shape[a];
      for (const auto& o : offsets) {
        std::size_t j = 0;
        bool inside = true;
        for (std::size_t a = 0; a < rank && inside; ++a) {
          const long c = static_cast<long>(coord[a]) + o[a];
          if (c < 0 || c >= static_cast<long>(mask.shape[a])) inside = false;
          j += static_cast<std::size_t>(c) * stride[a];
        }
        if (inside && mask[j] && !visited[j]) {
          visited[j] = 1;
          stack.push_back(j);
        }
      }
    }
    if (component.size() < static_cast<std::size_t>(cfg.min_component_voxels))
      for (std::size_t i : component) out[i] = 0;
  }
  return out;
}

Mask compose_vat(const Mask& fat_thresholded, const Mask& organ_bone, const RefineConfig& cfg) {
  require_same_shape(fat_thresholded, organ_bone, "compose_vat");
  Mask vat = fat_thresholded;
  for (std::size_t i = 0; i < vat.size(); ++i) vat[i] = fat_thresholded[i] && !organ_bone[i];
  return remove_small_components(vat, cfg);
}

Mask compose_imat(std::span<const Mask> muscle_masks, const Mask& fat_by_range, const Mask& sat,
                  const Mask& vat) {
  require_same_shape(fat_by_range, sat, "compose_imat");
  require_same_shape(fat_by_range, vat, "compose_imat");
  Mask muscle(fat_by_range.shape, fat_by_range.spacing, 0);
  muscle.orientation = fat_by_range.orientation;
  for (const Mask& m : muscle_masks) {
    require_same_shape(fat_by_range, m, "compose_imat");
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) muscle[i] = 1;
  }
  Mask out = muscle;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = muscle[i] && fat_by_range[i] && !sat[i] && !vat[i];
  return out;
}

SliceRange longitudinal_extent(const LabelVolume& vertebrae, ClassId top, ClassId bottom) {
  if (vertebrae.rank() != 3) throw Error("longitudinal crop needs a 3D vertebra map");
  if (vertebrae.orientation != "RAS")
    throw Error("longitudinal crop expects RAS orientation, got '" + vertebrae.orientation + "'");
  if (top > bottom) throw Error("top vertebra must be cranial to bottom vertebra");
  const std::size_t depth = vertebrae.shape[0];
  const std::size_t slab = vertebrae.size() / depth;
  // Per vertebra id: lowest and highest slice index containing it.
  std::vector<long> lo(256, -1), hi(256, -1);
  for (std::size_t z = 0; z < depth; ++z)
    for (std::size_t k = 0; k < slab; ++k) {
      const std::uint8_t v = vertebrae[z * slab + k];
      if (v == 0) continue;
      if (lo[v] < 0) lo[v] = static_cast<long>(z);
      hi[v] = static_cast<long>(z);
    }
  int cranial = -1, caudal = -1;
  for (int v = top; v <= bottom; ++v)
    if (lo[v] >= 0) {
      if (cranial < 0) cranial = v;
      caudal = v;
    }
  if (cranial < 0) throw Error("no vertebra between the crop bounds is present");
  // Superior is the higher slice index under RAS.
  return {static_cast<std::size_t>(lo[caudal]), static_cast<std::size_t>(hi[cranial])};
}

double window_normalize(double hu, double width, double level) {
  const double lo = level - width / 2.0, hi = level + width / 2.0;
  const double c = std::clamp(hu, lo, hi);
  return 2.0 * (c - lo) / (hi - lo) - 1.0;
}

ImageVolume hu_window_normalize(const ImageVolume& image, double width, double level) {
  if (!(width > 0.0)) throw Error("window width must be positive");
  ImageVolume out = image;
  for (auto& v : out.data) v = static_cast<float>(window_normalize(v, width, level));
  return out;
}

RefineResult refine_labels(const RefineInputs& in, const RefineConfig& cfg) {
  cfg.validate();
  const ImageVolume& img = in.image;
  if (in.muscle_groups.size() != 5) throw Error("expected five muscle subgroup masks");
  for (const Mask* m : {&in.muscle, &in.sat, &in.vat, &in.organ_bone})
    require_same_shape(img, *m, "refine inputs");

  std::vector<Mask> groups;
  for (const Mask& m : in.muscle_groups) groups.push_back(hu_threshold(img, m, cfg.muscle_range));

  // SM is what remains of the muscle region once the five subgroups are removed.
  Mask sm = hu_threshold(img, in.muscle, cfg.muscle_range);
  for (const Mask& g : groups)
    for (std::size_t i = 0; i < sm.size(); ++i)
      if (g[i]) sm[i] = 0;

  const Mask sat = hu_threshold(img, in.sat, cfg.sat_imat_range);
  const Mask vat = compose_vat(hu_threshold(img, in.vat, cfg.vat_range), in.organ_bone, cfg);

  Mask everywhere(img.shape, img.spacing, 1);
  const Mask fat_by_range = hu_threshold(img, everywhere, cfg.sat_imat_range);
  std::vector<Mask> muscle_masks = in.muscle_groups;
  muscle_masks.push_back(in.muscle);
  const Mask imat = compose_imat(muscle_masks, fat_by_range, sat, vat);

  LabelVolume labels(img.shape, img.spacing, 0);
  labels.orientation = img.orientation;
  auto paint = [&](const Mask& m, ClassId c) {
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) labels[i] = c;
  };
  paint(sm, tissue::kSm);
  const ClassId group_ids[5] = {tissue::kEsm, tissue::kPem, tissue::kPsm, tissue::kQlm,
                                tissue::kRam};
  for (std::size_t k = 0; k < 5; ++k) paint(groups[k], group_ids[k]);
  paint(sat, tissue::kSat);
  paint(vat, tissue::kVat);
  paint(imat, tissue::kImat);

  RefineResult result{std::move(labels), img, std::nullopt};
  if (in.vertebrae) {
    result.crop = longitudinal_extent(*in.vertebrae, vertebra::kT1, vertebra::kL4);
    result.labels = crop_longitudinal(result.labels, *in.vertebrae);
    result.image = crop_longitudinal(result.image, *in.vertebrae);
  }
  return result;
}

}  // namespace epibatch

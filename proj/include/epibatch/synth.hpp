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

#ifndef EPIBATCH_SYNTH_HPP_
#define EPIBATCH_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "epibatch/volume.hpp"
#include "json.hpp"

namespace epibatch {

struct SynthClass {
  ClassId id = 0;
  std::string name;
  double prevalence = 1.0;  // probability that a slice contains the class
  double mean_intensity = 0.0;
  double intensity_sd = 1.0;
  int radius_min = 1;
  int radius_max = 2;
};

struct SynthSpec {
  int n_patients = 10;
  int slices_per_patient = 20;
  int height = 16;
  int width = 16;
  std::vector<SynthClass> classes;
  double background_mean = -20.0;
  double background_sd = 12.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Nine classes, two near-ubiquitous, several mid-prevalence, two rare;
/// intensities are HU-like and well separated so a tiny model can learn them.
SynthSpec paperlike_preset(int n_patients, std::uint64_t seed);

nlohmann::ordered_json to_json(const SynthSpec& spec);

struct SynthSummary {
  std::size_t slices = 0;
  std::map<ClassId, std::uint64_t> frequency;
  std::map<ClassId, double> realized_prevalence;
};

struct SynthSlice {
  LabelVolume labels;
  ImageVolume image;
};

/// One slice from its own (seed, slice id) stream, so output does not depend
/// on generation order. Classes are painted in id order; later ids overwrite
/// earlier ones where blobs collide.
SynthSlice generate_slice(const SynthSpec& spec, std::size_t slice_id);

/// Writes a dataset directory (dataset.json plus one .seg/.img pair per slice).
SynthSummary generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace epibatch

#endif  // EPIBATCH_SYNTH_HPP_

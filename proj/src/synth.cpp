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

#include "epibatch/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "epibatch/corpus.hpp"
#include "epibatch/payload.hpp"
#include "epibatch/rng.hpp"

namespace epibatch {

void SynthSpec::validate() const {
  if (n_patients < 1 || slices_per_patient < 1) throw Error("synth needs patients and slices");
  if (height < 1 || width < 1) throw Error("image size must be positive");
  if (classes.empty()) throw Error("synth needs at least one class");
  std::vector<ClassInfo> infos;
  for (const auto& c : classes) {
    infos.push_back({c.id, c.name});
    if (!(c.prevalence > 0.0 && c.prevalence <= 1.0))
      throw Error("prevalence of " + c.name + " must lie in (0, 1]");
    if (c.radius_min < 0 || c.radius_max < c.radius_min)
      throw Error("bad blob radius range for " + c.name);
    if (2 * c.radius_max + 1 > std::min(height, width))
      throw Error("image too small for blobs of class " + c.name);
    if (!(c.intensity_sd >= 0.0)) throw Error("intensity sd must be non-negative");
  }
  ClassCatalog check(std::move(infos));
}

SynthSpec paperlike_preset(int n_patients, std::uint64_t seed) {
  SynthSpec s;
  s.n_patients = n_patients;
  s.slices_per_patient = 20;
  s.height = 16;
  s.width = 16;
  s.seed = seed;
  s.classes = {
      {1, "ESM", 0.80, 100.0, 12.0, 1, 3},  {2, "IMAT", 0.70, -60.0, 12.0, 1, 2},
      {3, "PEM", 0.15, 180.0, 12.0, 1, 3},  {4, "PSM", 0.35, 140.0, 12.0, 1, 3},
      {5, "QLM", 0.20, 60.0, 12.0, 1, 2},   {6, "RAM", 0.50, 20.0, 12.0, 1, 3},
      {7, "SAT", 1.00, -140.0, 12.0, 3, 5}, {8, "SM", 0.97, 220.0, 12.0, 3, 5},
      {9, "VAT", 0.60, -100.0, 12.0, 2, 4},
  };
  return s;
}

nlohmann::ordered_json to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["n_patients"] = spec.n_patients;
  j["slices_per_patient"] = spec.slices_per_patient;
  j["image_size"] = {spec.height, spec.width};
  j["background"] = {{"mean", spec.background_mean}, {"sd", spec.background_sd}};
  j["seed"] = spec.seed;
  auto& cl = j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : spec.classes)
    cl.push_back({{"id", c.id},
                  {"name", c.name},
                  {"prevalence", c.prevalence},
                  {"mean_intensity", c.mean_intensity},
                  {"intensity_sd", c.intensity_sd},
                  {"blob_radius_range", {c.radius_min, c.radius_max}}});
  return j;
}

SynthSlice generate_slice(const SynthSpec& spec, std::size_t slice_id) {
  Rng rng(derive_seed(derive_seed(spec.seed, "synth"), slice_id));
  const auto h = static_cast<std::size_t>(spec.height), w = static_cast<std::size_t>(spec.width);
  SynthSlice out{LabelVolume({h, w}, {1.0, 1.0}, 0), ImageVolume({h, w}, {1.0, 1.0}, 0.0f)};
  auto& labels = out.labels;

  for (const auto& c : spec.classes) {
    if (!rng.bernoulli(c.prevalence)) continue;
    const int r = c.radius_min +
                  static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(c.radius_max - c.radius_min + 1)));
    int cy = 0, cx = 0;
    // Prefer a free spot; after the last attempt the blob overwrites.
    for (int attempt = 0; attempt < 32; ++attempt) {
      cy = r + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.height - 2 * r)));
      cx = r + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.width - 2 * r)));
      bool free = true;
      for (int dy = -r; dy <= r && free; ++dy)
        for (int dx = -r; dx <= r && free; ++dx)
          if (dy * dy + dx * dx <= r * r && labels[(cy + dy) * w + (cx + dx)] != 0) free = false;
      if (free) break;
    }
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dy * dy + dx * dx <= r * r) labels[(cy + dy) * w + (cx + dx)] = c.id;
  }

  std::vector<const SynthClass*> by_id(256, nullptr);
  for (const auto& c : spec.classes) by_id[c.id] = &c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const SynthClass* c = by_id[labels[i]];
    const double v = c ? rng.normal(c->mean_intensity, c->intensity_sd)
                       : rng.normal(spec.background_mean, spec.background_sd);
    out.image[i] = static_cast<float>(v);
  }
  return out;
}

SynthSummary generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::vector<ClassInfo> infos;
  for (const auto& c : spec.classes) infos.push_back({c.id, c.name});
  const ClassCatalog catalog(infos);
  std::filesystem::create_directories(out_dir);

  const std::size_t n = static_cast<std::size_t>(spec.n_patients) * spec.slices_per_patient;
  std::vector<std::map<ClassId, std::uint64_t>> counts(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
    const auto id = static_cast<std::size_t>(k);
    try {
      const SynthSlice s = generate_slice(spec, id);
      char name[32];
      std::snprintf(name, sizeof name, "%06zu.seg", id);
      write_payload(out_dir / name, s.labels);
      std::snprintf(name, sizeof name, "%06zu.img", id);
      write_payload(out_dir / name, s.image);
      counts[id] = count_labels(s.labels, catalog);
    } catch (const std::exception& e) {
      errors[id] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(e);

  SynthSummary summary;
  summary.slices = n;
  for (ClassId c : catalog.ids()) summary.frequency[c] = 0;
  nlohmann::ordered_json doc;
  auto& classes = doc["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : catalog.classes()) classes.push_back({{"id", c.id}, {"name", c.name}});
  auto& slices = doc["slices"] = nlohmann::ordered_json::array();
  for (std::size_t id = 0; id < n; ++id) {
    char file[32], image[32], patient[32];
    std::snprintf(file, sizeof file, "%06zu.seg", id);
    std::snprintf(image, sizeof image, "%06zu.img", id);
    std::snprintf(patient, sizeof patient, "P%03zu", id / spec.slices_per_patient);
    std::vector<int> present;
    nlohmann::ordered_json pixel_counts = nlohmann::ordered_json::object();
    for (const auto& [c, k] : counts[id]) {
      present.push_back(c);
      pixel_counts[std::to_string(c)] = k;
      ++summary.frequency[c];
    }
    slices.push_back({{"id", id},
                      {"patient", patient},
                      {"file", file},
                      {"image", image},
                      {"classes", present},
                      {"pixel_counts", pixel_counts},
                      {"spacing", {1.0, 1.0}},
                      {"orient", "RAS"}});
  }
  auto& freq = doc["frequency"] = nlohmann::ordered_json::object();
  auto& prev = doc["prevalence"] = nlohmann::ordered_json::object();
  for (const auto& [c, f] : summary.frequency) {
    freq[std::to_string(c)] = f;
    summary.realized_prevalence[c] = static_cast<double>(f) / static_cast<double>(n);
    prev[std::to_string(c)] = summary.realized_prevalence[c];
  }
  doc["generator"] = to_json(spec);
  const std::string text = doc.dump(1) + "\n";
  write_file(out_dir / "dataset.json", std::vector<std::uint8_t>(text.begin(), text.end()));
  return summary;
}

}  // namespace epibatch

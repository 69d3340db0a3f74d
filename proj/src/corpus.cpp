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

#include "epibatch/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "epibatch/payload.hpp"
#include "epibatch/rng.hpp"
#include "json.hpp"

namespace epibatch {

using nlohmann::json;

ClassCatalog::ClassCatalog(std::vector<ClassInfo> classes) : classes_(std::move(classes)) {
  if (classes_.size() > 255) throw Error("too many classes");
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != i + 1)
      throw Error("class ids must be contiguous from 1 (got " +
                  std::to_string(classes_[i].id) + " at position " + std::to_string(i) + ")");
    if (classes_[i].name.empty()) throw Error("class names must be non-empty");
    if (!names.insert(classes_[i].name).second)
      throw Error("duplicate class name " + classes_[i].name);
  }
}

std::vector<ClassId> ClassCatalog::ids() const {
  std::vector<ClassId> out;
  for (const auto& c : classes_) out.push_back(c.id);
  return out;
}

const std::string& ClassCatalog::name(ClassId id) const {
  if (!contains(id)) throw Error("unknown class " + std::to_string(id));
  return classes_[id - 1].name;
}

bool operator==(const ClassCatalog& a, const ClassCatalog& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.classes_[i].name != b.classes_[i].name) return false;
  return true;
}

bool SliceRecord::contains(ClassId c) const {
  return std::binary_search(present_classes.begin(), present_classes.end(), c);
}

SliceTable::SliceTable(ClassCatalog catalog, std::vector<SliceRecord> records,
                       FrequencyMode mode)
    : catalog_(std::move(catalog)), records_(std::move(records)), mode_(mode) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    auto& r = records_[i];
    std::sort(r.present_classes.begin(), r.present_classes.end());
    r.present_classes.erase(std::unique(r.present_classes.begin(), r.present_classes.end()),
                            r.present_classes.end());
    for (ClassId c : r.present_classes) {
      if (c == kBackgroundId) throw Error("background listed as a present class");
      if (!catalog_.contains(c)) throw Error("unknown class " + std::to_string(c));
    }
    if (r.pixel_counts) {
      if (r.pixel_counts->size() != r.present_classes.size())
        throw Error("pixel_counts keys differ from present classes in slice " +
                    std::to_string(r.slice_id));
      for (const auto& [c, n] : *r.pixel_counts)
        if (!r.contains(c) || n == 0)
          throw Error("pixel_counts keys differ from present classes in slice " +
                      std::to_string(r.slice_id));
    }
    if (!index_.emplace(r.slice_id, i).second)
      throw Error("duplicate slice id " + std::to_string(r.slice_id));
  }
  frequency_ = count(catalog_, records_, mode_);
}

std::map<ClassId, std::uint64_t> SliceTable::count(const ClassCatalog& catalog,
                                                   const std::vector<SliceRecord>& records,
                                                   FrequencyMode mode) {
  std::map<ClassId, std::uint64_t> f;
  for (ClassId c : catalog.ids()) f[c] = 0;
  for (const auto& r : records) {
    if (mode == FrequencyMode::kSlices) {
      for (ClassId c : r.present_classes) ++f[c];
    } else {
      if (!r.pixel_counts) throw Error("voxel frequency mode needs pixel_counts");
      for (const auto& [c, n] : *r.pixel_counts) f[c] += n;
    }
  }
  return f;
}

std::uint64_t SliceTable::frequency(ClassId c) const {
  auto it = frequency_.find(c);
  if (it == frequency_.end()) throw Error("unknown class " + std::to_string(c));
  return it->second;
}

std::vector<ClassId> SliceTable::empty_classes() const {
  std::vector<ClassId> out;
  for (const auto& [c, n] : frequency_)
    if (n == 0) out.push_back(c);
  return out;
}

const SliceRecord& SliceTable::record(std::size_t slice_id) const {
  auto it = index_.find(slice_id);
  if (it == index_.end()) throw Error("slice id " + std::to_string(slice_id) + " not in table");
  return records_[it->second];
}

SliceTable SliceTable::subset(std::span<const std::size_t> slice_ids) const {
  std::vector<SliceRecord> out;
  out.reserve(slice_ids.size());
  for (std::size_t id : slice_ids) out.push_back(record(id));
  return SliceTable(catalog_, std::move(out), mode_);
}

bool SliceTable::frequencies_consistent() const {
  return count(catalog_, records_, mode_) == frequency_;
}

std::map<ClassId, std::uint64_t> count_labels(const LabelVolume& labels,
                                              const ClassCatalog& catalog) {
  std::vector<std::uint64_t> hist(256, 0);
  for (std::uint8_t v : labels.data) ++hist[v];
  std::map<ClassId, std::uint64_t> out;
  for (std::size_t v = 1; v < hist.size(); ++v) {
    if (hist[v] == 0) continue;
    if (!catalog.contains(static_cast<ClassId>(v)))
      throw Error("unknown class " + std::to_string(v) + " in label payload");
    out[static_cast<ClassId>(v)] = hist[v];
  }
  return out;
}

Dataset::Dataset(std::filesystem::path root, SliceTable table, std::vector<SliceFiles> files)
    : root_(std::move(root)), table_(std::move(table)), files_(std::move(files)) {}

const SliceFiles& Dataset::files(std::size_t slice_id) const {
  if (slice_id >= files_.size()) throw Error("slice id out of range");
  return files_[slice_id];
}

LabelVolume Dataset::labels(std::size_t slice_id) const {
  const SliceFiles& f = files(slice_id);
  LabelVolume v = read_labels(root_ / f.label_file);
  if (!f.spacing.empty()) v.spacing = f.spacing;
  v.orientation = f.orientation;
  v.validate();
  return v;
}

ImageVolume Dataset::image(std::size_t slice_id) const {
  const SliceFiles& f = files(slice_id);
  if (f.image_file.empty())
    throw Error("slice " + std::to_string(slice_id) + " has no image payload");
  ImageVolume v = read_image(root_ / f.image_file);
  if (!f.spacing.empty()) v.spacing = f.spacing;
  v.orientation = f.orientation;
  v.validate();
  return v;
}

namespace {

json read_json(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw Error("corrupt header " + path.filename().string() + ": " + e.what());
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& options) {
  const auto header_path = root / "dataset.json";
  if (!std::filesystem::exists(header_path)) {
    if (std::filesystem::is_directory(root) && std::filesystem::is_empty(root))
      throw Error("no slices in " + root.string());
    throw Error("missing dataset.json in " + root.string());
  }
  const json doc = read_json(header_path);

  try {
    std::vector<ClassInfo> classes;
    for (const auto& c : doc.at("classes"))
      classes.push_back({c.at("id").get<ClassId>(), c.at("name").get<std::string>()});
    ClassCatalog catalog(std::move(classes));

    const auto& slices = doc.at("slices");
    if (slices.empty()) throw Error("no slices in " + root.string());

    std::vector<SliceRecord> records;
    std::vector<SliceFiles> files(slices.size());
    for (const auto& s : slices) {
      SliceRecord r;
      r.slice_id = s.at("id").get<std::size_t>();
      if (r.slice_id >= slices.size())
        throw Error("slice ids must be dense 0..N-1 (got " + std::to_string(r.slice_id) + ")");
      r.patient_id = s.at("patient").get<std::string>();
      r.present_classes = s.at("classes").get<std::vector<ClassId>>();
      if (s.contains("pixel_counts")) {
        std::map<ClassId, std::uint64_t> counts;
        for (const auto& [k, v] : s.at("pixel_counts").items())
          counts[static_cast<ClassId>(std::stoi(k))] = v.get<std::uint64_t>();
        r.pixel_counts = std::move(counts);
      }
      SliceFiles& f = files[r.slice_id];
      f.label_file = s.at("file").get<std::string>();
      f.image_file = s.value("image", std::string{});
      f.spacing = s.value("spacing", std::vector<double>{});
      f.orientation = s.value("orient", std::string{"RAS"});

      if (options.verify_payloads) {
        const LabelVolume labels = read_labels(root / f.label_file);
        if (!f.spacing.empty() && f.spacing.size() != labels.rank())
          throw Error("spacing rank mismatch for slice " + std::to_string(r.slice_id));
        const auto counts = count_labels(labels, catalog);
        std::vector<ClassId> observed;
        for (const auto& [c, n] : counts) observed.push_back(c);
        std::vector<ClassId> listed = r.present_classes;
        std::sort(listed.begin(), listed.end());
        if (observed != listed)
          throw Error("slice " + std::to_string(r.slice_id) +
                      ": listed classes differ from label payload");
        if (r.pixel_counts && *r.pixel_counts != counts)
          throw Error("slice " + std::to_string(r.slice_id) +
                      ": pixel_counts differ from label payload");
        if (!r.pixel_counts) r.pixel_counts = counts;
      }
      records.push_back(std::move(r));
    }

    SliceTable table(std::move(catalog), std::move(records), options.mode);

    if (doc.contains("frequency")) {
      // Stored frequencies are always slice counts.
      const SliceTable& slice_table =
          options.mode == FrequencyMode::kSlices
              ? table
              : SliceTable(table.catalog(), table.records(), FrequencyMode::kSlices);
      for (const auto& [k, v] : doc.at("frequency").items()) {
        const auto c = static_cast<ClassId>(std::stoi(k));
        if (!slice_table.catalog().contains(c))
          throw Error("frequency table names unknown class " + k);
        if (slice_table.frequency(c) != v.get<std::uint64_t>())
          throw Error("stored frequency for class " + k + " is " +
                      std::to_string(v.get<std::uint64_t>()) + " but records give " +
                      std::to_string(slice_table.frequency(c)));
      }
    }
    return Dataset(root, std::move(table), std::move(files));
  } catch (const json::exception& e) {
    throw Error("corrupt header dataset.json: " + std::string(e.what()));
  }
}

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5 + 1e-9)); }

namespace {

std::vector<std::size_t> slices_of(const SliceTable& table,
                                   const std::vector<std::string>& patients) {
  std::set<std::string> wanted(patients.begin(), patients.end());
  std::vector<std::size_t> out;
  for (const auto& r : table.records())
    if (wanted.contains(r.patient_id)) out.push_back(r.slice_id);
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

std::size_t retained_count(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

}  // namespace

Splits make_splits(const SliceTable& table, const SplitSpec& spec) {
  if (!(spec.dev_fraction > 0.0 && spec.dev_fraction < 1.0))
    throw Error("dev_fraction must lie in (0, 1)");
  if (spec.folds < 2) throw Error("folds must be at least 2");
  if (spec.fold < 0 || spec.fold >= spec.folds) throw Error("fold index out of range");
  if (spec.subsample_fraction &&
      !(*spec.subsample_fraction > 0.0 && *spec.subsample_fraction <= 1.0))
    throw Error("subsample_fraction must lie in (0, 1]");

  std::set<std::string> unique;
  for (const auto& r : table.records()) unique.insert(r.patient_id);
  std::vector<std::string> patients(unique.begin(), unique.end());

  Rng rng(derive_seed(spec.seed, "split"));
  shuffle(patients, rng);

  const auto n_test = static_cast<std::size_t>(
      round_half_up((1.0 - spec.dev_fraction) * static_cast<double>(patients.size())));
  if (n_test >= patients.size()) throw Error("no development patients left after test split");
  const std::size_t n_dev = patients.size() - n_test;
  if (n_dev < static_cast<std::size_t>(spec.folds))
    throw Error("fewer patients (" + std::to_string(n_dev) + ") than folds (" +
                std::to_string(spec.folds) + ")");

  Splits out;
  out.test_patients.assign(patients.begin(), patients.begin() + static_cast<std::ptrdiff_t>(n_test));
  for (std::size_t i = 0; i < n_dev; ++i) {
    const auto& p = patients[n_test + i];
    if (static_cast<int>(i % static_cast<std::size_t>(spec.folds)) == spec.fold)
      out.validation_patients.push_back(p);
    else
      out.train_patients.push_back(p);
  }

  if (spec.subsample_fraction) {
    // Shuffle-then-prefix: a smaller fraction keeps a subset of a larger one.
    Rng sub(derive_seed(spec.seed, "subsample"));
    shuffle(out.train_patients, sub);
    shuffle(out.validation_patients, sub);
    out.train_patients.resize(retained_count(*spec.subsample_fraction, out.train_patients.size()));
    out.validation_patients.resize(
        retained_count(*spec.subsample_fraction, out.validation_patients.size()));
  }

  out.train = slices_of(table, out.train_patients);
  out.validation = slices_of(table, out.validation_patients);
  out.test = slices_of(table, out.test_patients);
  return out;
}

std::map<ClassId, double> prevalence_report(const SliceTable& table) {
  if (table.empty()) throw Error("prevalence of an empty table");
  const SliceTable& counts =
      table.mode() == FrequencyMode::kSlices
          ? table
          : SliceTable(table.catalog(), table.records(), FrequencyMode::kSlices);
  std::map<ClassId, double> out;
  for (const auto& [c, f] : counts.frequencies())
    out[c] = 100.0 * static_cast<double>(f) / static_cast<double>(table.size());
  return out;
}

}  // namespace epibatch

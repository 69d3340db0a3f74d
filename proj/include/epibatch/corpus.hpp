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

#ifndef EPIBATCH_CORPUS_HPP_
#define EPIBATCH_CORPUS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "epibatch/volume.hpp"

namespace epibatch {

struct ClassInfo {
  ClassId id = 0;
  std::string name;
};

/// Ordered foreground label set. Ids run 1..N; 0 is background.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  explicit ClassCatalog(std::vector<ClassInfo> classes);

  std::size_t size() const { return classes_.size(); }
  const std::vector<ClassInfo>& classes() const { return classes_; }
  std::vector<ClassId> ids() const;
  bool contains(ClassId id) const { return id >= 1 && id <= classes_.size(); }
  const std::string& name(ClassId id) const;

  friend bool operator==(const ClassCatalog& a, const ClassCatalog& b);

 private:
  std::vector<ClassInfo> classes_;
};

struct SliceRecord {
  std::size_t slice_id = 0;
  std::string patient_id;
  std::vector<ClassId> present_classes;  // sorted, unique, no background
  std::optional<std::map<ClassId, std::uint64_t>> pixel_counts;

  bool contains(ClassId c) const;
};

/// How f_c is counted. Slice counts match the sampling unit; voxel counts
/// are there for experiments and need pixel_counts on every record.
enum class FrequencyMode { kSlices, kVoxels };

/// Slice records plus the derived per-class frequency table.
///
/// Immutable after construction. Records keep their dataset slice ids, so a
/// subset table (e.g. the training split) still indexes the same payloads.
class SliceTable {
 public:
  SliceTable() = default;
  SliceTable(ClassCatalog catalog, std::vector<SliceRecord> records,
             FrequencyMode mode = FrequencyMode::kSlices);

  const ClassCatalog& catalog() const { return catalog_; }
  const std::vector<SliceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  FrequencyMode mode() const { return mode_; }

  std::uint64_t frequency(ClassId c) const;
  const std::map<ClassId, std::uint64_t>& frequencies() const { return frequency_; }
  /// Catalog classes that never occur; never valid episode targets.
  std::vector<ClassId> empty_classes() const;

  const SliceRecord& record(std::size_t slice_id) const;
  bool has_slice(std::size_t slice_id) const { return index_.contains(slice_id); }

  SliceTable subset(std::span<const std::size_t> slice_ids) const;

  /// Recounts f_c from records and compares with the stored table.
  bool frequencies_consistent() const;

 private:
  static std::map<ClassId, std::uint64_t> count(const ClassCatalog& catalog,
                                                const std::vector<SliceRecord>& records,
                                                FrequencyMode mode);

  ClassCatalog catalog_;
  std::vector<SliceRecord> records_;
  std::map<ClassId, std::uint64_t> frequency_;
  std::unordered_map<std::size_t, std::size_t> index_;
  FrequencyMode mode_ = FrequencyMode::kSlices;
};

struct SliceFiles {
  std::string label_file;
  std::string image_file;
  std::vector<double> spacing;  // empty means 1 mm per axis
  std::string orientation = "RAS";
};

struct LoadOptions {
  FrequencyMode mode = FrequencyMode::kSlices;
  /// Reads every label payload at load time to check sizes and class ids
  /// against the header.
  bool verify_payloads = true;
};

/// A loaded dataset directory: catalog, slice table and read-only payload
/// access. Accessors are const and safe to call concurrently.
class Dataset {
 public:
  Dataset(std::filesystem::path root, SliceTable table, std::vector<SliceFiles> files);

  const std::filesystem::path& root() const { return root_; }
  const SliceTable& table() const { return table_; }
  const ClassCatalog& catalog() const { return table_.catalog(); }
  const SliceFiles& files(std::size_t slice_id) const;

  LabelVolume labels(std::size_t slice_id) const;
  ImageVolume image(std::size_t slice_id) const;

 private:
  std::filesystem::path root_;
  SliceTable table_;
  std::vector<SliceFiles> files_;  // indexed by slice id
};

Dataset load_dataset(const std::filesystem::path& root, const LoadOptions& options = {});

/// Counts voxels per foreground class; throws on labels outside the catalog.
std::map<ClassId, std::uint64_t> count_labels(const LabelVolume& labels,
                                              const ClassCatalog& catalog);

struct SplitSpec {
  double dev_fraction = 0.85;
  int folds = 5;
  int fold = 0;
  std::optional<double> subsample_fraction;
  std::uint64_t seed = 0;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::string> train_patients;
  std::vector<std::string> validation_patients;
  std::vector<std::string> test_patients;
};

/// Patient-level split: test hold-out, k-fold train/validation over the
/// development patients, optional whole-patient subsampling of both.
Splits make_splits(const SliceTable& table, const SplitSpec& spec);

/// Percent of slices containing each catalog class.
std::map<ClassId, double> prevalence_report(const SliceTable& table);

/// floor(x + 0.5) for non-negative x.
long round_half_up(double x);

}  // namespace epibatch

#endif  // EPIBATCH_CORPUS_HPP_

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

#ifndef EPIBATCH_METRICS_HPP_
#define EPIBATCH_METRICS_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epibatch/corpus.hpp"
#include "epibatch/volume.hpp"

namespace epibatch {

/// kUnion: 95th percentile of both directed distance multisets pooled
/// (symmetric). kMaxOfDirected: max of the two directed 95th percentiles.
enum class Hd95Variant { kUnion, kMaxOfDirected };

/// 2|P n R| / (|P| + |R|); 1.0 when both masks are empty.
double dice(const Mask& pred, const Mask& ref);

/// Member voxels with at least one face neighbour outside the mask; voxels
/// on the array border always count as boundary.
Mask boundary(const Mask& mask);

/// Distance (mm) from each boundary voxel of `from` to the nearest boundary
/// voxel of `to`, in row-major order of `from`'s boundary.
std::vector<double> directed_surface_distances(const Mask& from, const Mask& to,
                                               std::span<const double> spacing);

/// Linear interpolation between closest ranks (position q * (n - 1)).
double percentile_linear(std::vector<double> values, double q);

/// 95th-percentile Hausdorff distance in mm. 0.0 when both masks are empty;
/// nullopt (undefined) when exactly one is.
std::optional<double> hd95(const Mask& pred, const Mask& ref, std::span<const double> spacing,
                           Hd95Variant variant = Hd95Variant::kUnion);

struct ClassScore {
  ClassId class_id = 0;
  std::string name;
  double dice = 1.0;
  std::optional<double> hd95;
  bool present = false;  // in reference or prediction
};

struct EvalReport {
  std::vector<ClassScore> per_class;  // catalog order
  double mean_dice_fg = 1.0;
  std::optional<double> mean_hd95_fg;
  int hd95_excluded = 0;  // present classes whose hd95 is undefined
};

/// Per-class Dice and HD95 over every foreground class, plus unweighted means
/// over the classes present in either label map.
EvalReport evaluate_pair(const LabelVolume& pred, const LabelVolume& ref,
                         const ClassCatalog& catalog,
                         Hd95Variant variant = Hd95Variant::kUnion);

/// Per-class means across cases (present cases only; undefined HD95 skipped).
EvalReport average_reports(const std::vector<EvalReport>& reports, const ClassCatalog& catalog);

/// `class,name,dice,hd95_mm` rows plus a final AVERAGE row.
std::string eval_csv(const EvalReport& report);

}  // namespace epibatch

#endif  // EPIBATCH_METRICS_HPP_

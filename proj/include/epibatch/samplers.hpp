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

#ifndef EPIBATCH_SAMPLERS_HPP_
#define EPIBATCH_SAMPLERS_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "epibatch/corpus.hpp"
#include "epibatch/rng.hpp"

namespace epibatch {

enum class Strategy { kRandom, kWeighted, kEpisodic };
enum class SupervisionSource { kQueries, kSupports };

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);
SupervisionSource parse_supervision(const std::string& s);
std::string to_string(SupervisionSource s);

struct SamplerConfig {
  Strategy strategy = Strategy::kRandom;
  int batch_size = 16;
  int n_classes = 2;   // target classes per episode
  int n_support = 3;   // support slices per target class
  int n_query = 3;     // query slices per target class
  int episodes_per_epoch = 500;
  SupervisionSource supervision = SupervisionSource::kQueries;
  std::uint64_t seed = 0;
  /// Random strategy only: walk seeded permutations instead of i.i.d. draws.
  bool permutation = false;

  void validate() const;
};

struct Episode {
  std::vector<ClassId> target_classes;
  std::map<ClassId, std::vector<std::size_t>> supports;
  std::map<ClassId, std::vector<std::size_t>> queries;
  /// Set when some class pool was too small for disjoint draws.
  bool with_replacement = false;
};

enum class Provenance { kUniform, kWeighted, kEpisode };

struct Batch {
  std::vector<std::size_t> slice_ids;
  Provenance provenance = Provenance::kUniform;
  std::optional<Episode> episode;
};

/// Per-slice draw probabilities, proportional to 1 / f of the rarest class
/// present in the slice. Slices without any foreground class are left out.
struct WeightedPool {
  std::vector<std::size_t> slice_ids;
  std::vector<double> probabilities;
  std::vector<ClassId> rarest_class;  // ties go to the lowest class id
  std::vector<std::size_t> excluded;  // background-only slices
};

WeightedPool weighted_probabilities(const SliceTable& table);

/// Slice ids containing each class, for classes with at least one slice.
class ClassPools {
 public:
  explicit ClassPools(const SliceTable& table);

  const std::vector<ClassId>& eligible() const { return eligible_; }
  const std::vector<ClassId>& excluded() const { return excluded_; }
  const std::vector<std::size_t>& pool(ClassId c) const;

 private:
  std::vector<ClassId> eligible_;
  std::vector<ClassId> excluded_;
  std::map<ClassId, std::vector<std::size_t>> pools_;
};

/// Draws N_C distinct eligible classes uniformly, then supports and queries
/// from each class pool. Queries exclude the supports whenever the pool holds
/// at least N_S + N_Q slices; otherwise they are drawn with replacement from
/// the whole pool and the episode is flagged.
Episode build_episode(const ClassPools& pools, const SamplerConfig& config, Rng& rng);
Episode build_episode(const SliceTable& table, const SamplerConfig& config, Rng& rng);

long iterations_per_epoch(Strategy strategy, std::size_t train_size, const SamplerConfig& config);

/// Seeded batch stream over a slice table. Single owner; not thread-safe.
class Sampler {
 public:
  Sampler(std::shared_ptr<const SliceTable> table, SamplerConfig config);

  Batch next_batch();

  const SamplerConfig& config() const { return config_; }
  const SliceTable& table() const { return *table_; }
  long iterations_per_epoch() const;
  std::size_t batch_length() const;
  /// Human-readable notes about excluded slices or classes.
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::size_t draw_uniform();
  std::size_t draw_weighted();

  std::shared_ptr<const SliceTable> table_;
  SamplerConfig config_;
  Rng rng_;
  std::vector<std::size_t> all_ids_;
  std::vector<std::size_t> permutation_;
  std::size_t permutation_pos_ = 0;
  std::optional<WeightedPool> weighted_;
  std::vector<double> cdf_;
  std::optional<ClassPools> pools_;
  std::vector<std::string> warnings_;
};

struct ExposureRow {
  int epoch = 0;
  ClassId class_id = 0;
  long target_count = 0;
  long presence_count = 0;
};

/// Runs `epochs` sampler epochs and counts, per class, the batches that
/// target it (episodic only) and the batches holding at least one slice
/// where it is present.
std::vector<ExposureRow> exposure_audit(Sampler& sampler, int epochs);
std::string exposure_csv(const std::vector<ExposureRow>& rows, const ClassCatalog& catalog);

/// One JSON object for the batch stream: {"iter":n,"ids":[...],"episode":{...}}.
std::string batch_json_line(const Batch& batch, long iter);

}  // namespace epibatch

#endif  // EPIBATCH_SAMPLERS_HPP_

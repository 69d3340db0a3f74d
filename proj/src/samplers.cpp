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

#include "epibatch/samplers.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

#include "json.hpp"

namespace epibatch {

Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::kRandom;
  if (s == "weighted") return Strategy::kWeighted;
  if (s == "episodic") return Strategy::kEpisodic;
  throw Error("unknown strategy '" + s + "' (expected random, weighted or episodic)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kWeighted: return "weighted";
    case Strategy::kEpisodic: return "episodic";
  }
  return "?";
}

SupervisionSource parse_supervision(const std::string& s) {
  if (s == "queries") return SupervisionSource::kQueries;
  if (s == "supports") return SupervisionSource::kSupports;
  throw Error("unknown supervision source '" + s + "' (expected queries or supports)");
}

std::string to_string(SupervisionSource s) {
  return s == SupervisionSource::kQueries ? "queries" : "supports";
}

void SamplerConfig::validate() const {
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (n_classes < 1) throw Error("N_C must be at least 1");
  if (n_support < 1 || n_query < 1) throw Error("N_S and N_Q must be at least 1");
  if (episodes_per_epoch < 1) throw Error("episodes per epoch must be at least 1");
  if (permutation && strategy != Strategy::kRandom)
    throw Error("permutation mode applies to the random strategy only");
}

WeightedPool weighted_probabilities(const SliceTable& table) {
  WeightedPool pool;
  std::vector<double> raw;
  for (const auto& r : table.records()) {
    if (r.present_classes.empty()) {
      pool.excluded.push_back(r.slice_id);
      continue;
    }
    // present_classes is sorted, so the first minimum is the lowest id.
    ClassId rarest = r.present_classes.front();
    std::uint64_t f_min = table.frequency(rarest);
    for (ClassId c : r.present_classes) {
      const std::uint64_t f = table.frequency(c);
      if (f < f_min) {
        f_min = f;
        rarest = c;
      }
    }
    pool.slice_ids.push_back(r.slice_id);
    pool.rarest_class.push_back(rarest);
    raw.push_back(1.0 / static_cast<double>(f_min));
  }
  if (pool.slice_ids.empty()) throw Error("all slices are background-only; weighted pool is empty");
  double total = 0.0;
  for (double w : raw) total += w;
  pool.probabilities.reserve(raw.size());
  for (double w : raw) pool.probabilities.push_back(w / total);
  return pool;
}

ClassPools::ClassPools(const SliceTable& table) {
  for (ClassId c : table.catalog().ids()) pools_[c];
  for (const auto& r : table.records())
    for (ClassId c : r.present_classes) pools_[c].push_back(r.slice_id);
  for (const auto& [c, ids] : pools_) (ids.empty() ? excluded_ : eligible_).push_back(c);
}

const std::vector<std::size_t>& ClassPools::pool(ClassId c) const {
  auto it = pools_.find(c);
  if (it == pools_.end()) throw Error("unknown class " + std::to_string(c));
  return it->second;
}

namespace {

// k distinct positions in [0, n), uniform over ordered tuples; k <= n.
std::vector<std::size_t> distinct_positions(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(k);
  if (2 * k > n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(all[i], all[i + rng.uniform_index(n - i)]);
      out.push_back(all[i]);
    }
    return out;
  }
  while (out.size() < k) {
    const std::size_t p = rng.uniform_index(n);
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  return out;
}

}  // namespace

Episode build_episode(const ClassPools& pools, const SamplerConfig& config, Rng& rng) {
  const auto& eligible = pools.eligible();
  const auto n_classes = static_cast<std::size_t>(config.n_classes);
  if (eligible.size() < n_classes)
    throw Error("episodic sampling needs " + std::to_string(n_classes) +
                " classes with slices but only " + std::to_string(eligible.size()) +
                " are non-empty");
  const auto n_s = static_cast<std::size_t>(config.n_support);
  const auto n_q = static_cast<std::size_t>(config.n_query);

  Episode ep;
  for (std::size_t pos : distinct_positions(eligible.size(), n_classes, rng))
    ep.target_classes.push_back(eligible[pos]);

  for (ClassId c : ep.target_classes) {
    const auto& pool = pools.pool(c);
    auto& supports = ep.supports[c];
    auto& queries = ep.queries[c];
    if (pool.size() >= n_s + n_q) {
      const auto picks = distinct_positions(pool.size(), n_s + n_q, rng);
      for (std::size_t i = 0; i < n_s; ++i) supports.push_back(pool[picks[i]]);
      for (std::size_t i = n_s; i < n_s + n_q; ++i) queries.push_back(pool[picks[i]]);
    } else {
      ep.with_replacement = true;
      if (pool.size() >= n_s) {
        for (std::size_t p : distinct_positions(pool.size(), n_s, rng)) supports.push_back(pool[p]);
      } else {
        for (std::size_t i = 0; i < n_s; ++i) supports.push_back(pool[rng.uniform_index(pool.size())]);
      }
      for (std::size_t i = 0; i < n_q; ++i) queries.push_back(pool[rng.uniform_index(pool.size())]);
    }
  }
  return ep;
}

Episode build_episode(const SliceTable& table, const SamplerConfig& config, Rng& rng) {
  return build_episode(ClassPools(table), config, rng);
}

long iterations_per_epoch(Strategy strategy, std::size_t train_size, const SamplerConfig& config) {
  if (strategy == Strategy::kEpisodic) return config.episodes_per_epoch;
  if (train_size == 0) throw Error("training set is empty");
  const auto b = static_cast<std::size_t>(config.batch_size);
  return static_cast<long>((train_size + b - 1) / b);
}

Sampler::Sampler(std::shared_ptr<const SliceTable> table, SamplerConfig config)
    : table_(std::move(table)), config_(config), rng_(derive_seed(config.seed, "sampler")) {
  config_.validate();
  if (!table_ || table_->empty()) throw Error("sampler needs a non-empty slice table");
  for (const auto& r : table_->records()) all_ids_.push_back(r.slice_id);

  switch (config_.strategy) {
    case Strategy::kRandom:
      break;
    case Strategy::kWeighted: {
      weighted_ = weighted_probabilities(*table_);
      double acc = 0.0;
      for (double p : weighted_->probabilities) cdf_.push_back(acc += p);
      cdf_.back() = 1.0;
      if (!weighted_->excluded.empty())
        warnings_.push_back(std::to_string(weighted_->excluded.size()) +
                            " background-only slices excluded from the weighted pool");
      break;
    }
    case Strategy::kEpisodic: {
      pools_.emplace(*table_);
      if (pools_->eligible().size() < static_cast<std::size_t>(config_.n_classes))
        throw Error("episodic sampling needs " + std::to_string(config_.n_classes) +
                    " classes with slices but only " +
                    std::to_string(pools_->eligible().size()) + " are non-empty");
      for (ClassId c : pools_->excluded())
        warnings_.push_back("class " + std::to_string(c) + " (" + table_->catalog().name(c) +
                            ") has no slices and is excluded from episode targets");
      break;
    }
  }
}

long Sampler::iterations_per_epoch() const {
  return epibatch::iterations_per_epoch(config_.strategy, table_->size(), config_);
}

std::size_t Sampler::batch_length() const {
  if (config_.strategy != Strategy::kEpisodic) return static_cast<std::size_t>(config_.batch_size);
  const int per_class =
      config_.supervision == SupervisionSource::kQueries ? config_.n_query : config_.n_support;
  return static_cast<std::size_t>(config_.n_classes * per_class);
}

std::size_t Sampler::draw_uniform() {
  if (!config_.permutation) return all_ids_[rng_.uniform_index(all_ids_.size())];
  if (permutation_pos_ == permutation_.size()) {
    permutation_ = all_ids_;
    for (std::size_t i = permutation_.size(); i > 1; --i)
      std::swap(permutation_[i - 1], permutation_[rng_.uniform_index(i)]);
    permutation_pos_ = 0;
  }
  return permutation_[permutation_pos_++];
}

std::size_t Sampler::draw_weighted() {
  const double u = rng_.uniform01();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return weighted_->slice_ids[static_cast<std::size_t>(it - cdf_.begin())];
}

Batch Sampler::next_batch() {
  Batch batch;
  const auto b = static_cast<std::size_t>(config_.batch_size);
  switch (config_.strategy) {
    case Strategy::kRandom:
      batch.provenance = Provenance::kUniform;
      for (std::size_t i = 0; i < b; ++i) batch.slice_ids.push_back(draw_uniform());
      break;
    case Strategy::kWeighted:
      batch.provenance = Provenance::kWeighted;
      for (std::size_t i = 0; i < b; ++i) batch.slice_ids.push_back(draw_weighted());
      break;
    case Strategy::kEpisodic: {
      batch.provenance = Provenance::kEpisode;
      Episode ep = build_episode(*pools_, config_, rng_);
#ifndef NDEBUG
      for (ClassId c : ep.target_classes) {
        for (std::size_t id : ep.supports.at(c)) assert(table_->record(id).contains(c));
        for (std::size_t id : ep.queries.at(c)) assert(table_->record(id).contains(c));
      }
#endif
      const auto& source =
          config_.supervision == SupervisionSource::kQueries ? ep.queries : ep.supports;
      for (ClassId c : ep.target_classes)
        for (std::size_t id : source.at(c)) batch.slice_ids.push_back(id);
      batch.episode = std::move(ep);
      break;
    }
  }
  return batch;
}

std::vector<ExposureRow> exposure_audit(Sampler& sampler, int epochs) {
  const auto ids = sampler.table().catalog().ids();
  const long ipe = sampler.iterations_per_epoch();
  std::vector<ExposureRow> rows;
  for (int e = 0; e < epochs; ++e) {
    std::map<ClassId, ExposureRow> per_class;
    for (ClassId c : ids) per_class[c] = ExposureRow{e, c, 0, 0};
    for (long it = 0; it < ipe; ++it) {
      const Batch batch = sampler.next_batch();
      std::vector<bool> seen(256, false);
      for (std::size_t id : batch.slice_ids)
        for (ClassId c : sampler.table().record(id).present_classes) seen[c] = true;
      for (ClassId c : ids)
        if (seen[c]) ++per_class[c].presence_count;
      if (batch.episode)
        for (ClassId c : batch.episode->target_classes) ++per_class[c].target_count;
    }
    for (ClassId c : ids) rows.push_back(per_class[c]);
  }
  return rows;
}

std::string exposure_csv(const std::vector<ExposureRow>& rows, const ClassCatalog& catalog) {
  std::ostringstream out;
  out << "epoch,class,name,target_count,presence_count\n";
  for (const auto& r : rows)
    out << r.epoch << ',' << static_cast<int>(r.class_id) << ',' << catalog.name(r.class_id)
        << ',' << r.target_count << ',' << r.presence_count << '\n';
  return out.str();
}

std::string batch_json_line(const Batch& batch, long iter) {
  nlohmann::ordered_json j;
  j["iter"] = iter;
  j["ids"] = batch.slice_ids;
  if (batch.episode) {
    const Episode& ep = *batch.episode;
    nlohmann::ordered_json e;
    std::vector<int> classes(ep.target_classes.begin(), ep.target_classes.end());
    e["classes"] = classes;
    nlohmann::ordered_json supports = nlohmann::ordered_json::object();
    nlohmann::ordered_json queries = nlohmann::ordered_json::object();
    for (const auto& [c, v] : ep.supports) supports[std::to_string(c)] = v;
    for (const auto& [c, v] : ep.queries) queries[std::to_string(c)] = v;
    e["supports"] = supports;
    e["queries"] = queries;
    e["replacement"] = ep.with_replacement;
    j["episode"] = e;
  }
  return j.dump();
}

}  // namespace epibatch

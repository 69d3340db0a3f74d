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

#include <fstream>
#include <random>

#include "doctest.h"
#include "epibatch/corpus.hpp"
#include "epibatch/error.hpp"
#include "epibatch/payload.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace epibatch;
using nlohmann::json;

namespace {

// Writes a two-class dataset whose slice k is the given label map.
void write_dataset(const std::filesystem::path& root, const std::vector<LabelVolume>& labels,
                   const std::vector<std::vector<int>>& listed, json extra = json::object()) {
  json doc;
  doc["classes"] = json::array({{{"id", 1}, {"name", "A"}}, {{"id", 2}, {"name", "B"}}});
  doc["slices"] = json::array();
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const std::string file = std::to_string(k) + ".seg";
    write_payload(root / file, labels[k]);
    doc["slices"].push_back(
        {{"id", k}, {"patient", "P" + std::to_string(k)}, {"file", file}, {"classes", listed[k]}});
  }
  for (auto& [k, v] : extra.items()) doc[k] = v;
  std::ofstream(root / "dataset.json") << doc.dump();
}

LabelVolume slice_with(std::initializer_list<std::uint8_t> values) {
  LabelVolume v({2, 2}, {}, 0);
  std::size_t i = 0;
  for (auto x : values) v[i++] = x;
  return v;
}

}  // namespace

TEST_CASE("catalog invariants") {
  CHECK_NOTHROW(ClassCatalog({{1, "A"}, {2, "B"}}));
  CHECK_THROWS_AS(ClassCatalog({{1, "A"}, {3, "B"}}), Error);
  CHECK_THROWS_AS(ClassCatalog({{0, "BG"}}), Error);
  CHECK_THROWS_AS(ClassCatalog({{1, "A"}, {2, "A"}}), Error);
  CHECK_THROWS_AS(ClassCatalog({{1, ""}}), Error);
  const ClassCatalog c({{1, "A"}, {2, "B"}});
  CHECK(c.name(2) == "B");
  CHECK_FALSE(c.contains(0));
  CHECK_FALSE(c.contains(3));
}

TEST_CASE("frequency counts slices per class") {
  const auto t = oracle::make_table({{1}, {1, 2}, {2}}, 2);
  CHECK(t.frequency(1) == 2);
  CHECK(t.frequency(2) == 2);
  CHECK(t.frequencies_consistent());
  const auto p = prevalence_report(t);
  CHECK(p.at(1) == doctest::Approx(66.6667).epsilon(1e-4));
  CHECK(p.at(2) == doctest::Approx(66.6667).epsilon(1e-4));
}

TEST_CASE("empty classes are flagged and prevalence saturates") {
  const auto t = oracle::make_table({{1}, {1}, {1}}, 3);
  CHECK(t.empty_classes() == std::vector<ClassId>{2, 3});
  const auto p = prevalence_report(t);
  CHECK(p.at(1) == 100.0);
  CHECK(p.at(2) == 0.0);
  CHECK_THROWS_AS(prevalence_report(SliceTable()), Error);
}

TEST_CASE("records reject background and unknown classes") {
  const ClassCatalog cat({{1, "A"}});
  SliceRecord r;
  r.present_classes = {0};
  CHECK_THROWS_AS(SliceTable(cat, {r}), Error);
  r.present_classes = {2};
  CHECK_THROWS_AS(SliceTable(cat, {r}), Error);
  r.present_classes = {1};
  r.pixel_counts = std::map<ClassId, std::uint64_t>{{1, 0}};
  CHECK_THROWS_AS(SliceTable(cat, {r}), Error);
}

TEST_CASE("voxel frequency mode sums pixel counts") {
  const ClassCatalog cat({{1, "A"}, {2, "B"}});
  SliceRecord a{0, "P0", {1}, std::map<ClassId, std::uint64_t>{{1, 5}}};
  SliceRecord b{1, "P1", {1, 2}, std::map<ClassId, std::uint64_t>{{1, 2}, {2, 7}}};
  const SliceTable t(cat, {a, b}, FrequencyMode::kVoxels);
  CHECK(t.frequency(1) == 7);
  CHECK(t.frequency(2) == 7);
  CHECK(prevalence_report(t).at(1) == 100.0);
}

TEST_CASE("frequency table consistency on random tables") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + gen() % 40, k = 1 + gen() % 9;
    std::vector<std::vector<ClassId>> presence(n);
    std::vector<std::uint64_t> expect(k + 1, 0);
    for (auto& p : presence)
      for (std::size_t c = 1; c <= k; ++c)
        if (gen() % 3 == 0) {
          p.push_back(static_cast<ClassId>(c));
          ++expect[c];
        }
    const auto t = oracle::make_table(presence, k);
    for (std::size_t c = 1; c <= k; ++c) CHECK(t.frequency(static_cast<ClassId>(c)) == expect[c]);
    CHECK(t.frequencies_consistent());
  }
}

TEST_CASE("subset keeps records and recounts") {
  const auto t = oracle::make_table({{1}, {1, 2}, {2}, {2}}, 2);
  const std::vector<std::size_t> ids{1, 3};
  const auto s = t.subset(ids);
  CHECK(s.size() == 2);
  CHECK(s.frequency(1) == 1);
  CHECK(s.frequency(2) == 2);
  CHECK(s.has_slice(3));
  CHECK_FALSE(s.has_slice(0));
}

TEST_CASE("load_dataset reads and verifies a directory") {
  oracle::TempDir dir("corpus");
  write_dataset(dir.path(), {slice_with({1, 0, 0, 0}), slice_with({1, 2, 0, 0}), slice_with({2, 2, 2, 0})},
                {{1}, {1, 2}, {2}}, {{"frequency", {{"1", 2}, {"2", 2}}}});
  const Dataset ds = load_dataset(dir.path());
  CHECK(ds.table().size() == 3);
  CHECK(ds.table().frequency(1) == 2);
  CHECK(ds.table().frequency(2) == 2);
  CHECK(ds.labels(2).data == slice_with({2, 2, 2, 0}).data);
  CHECK(ds.catalog().name(1) == "A");

  const Dataset vox = load_dataset(dir.path(), {FrequencyMode::kVoxels, true});
  CHECK(vox.table().frequency(2) == 4);
}

TEST_CASE("load_dataset errors") {
  oracle::TempDir dir("corpus-err");
  SUBCASE("empty directory") {
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("no slices"), Error);
  }
  SUBCASE("empty slice list") {
    std::ofstream(dir / "dataset.json") << R"({"classes":[{"id":1,"name":"A"}],"slices":[]})";
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("no slices"), Error);
  }
  SUBCASE("unknown class in payload") {
    write_dataset(dir.path(), {slice_with({7, 0, 0, 0})}, {{}});
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("unknown class"), Error);
  }
  SUBCASE("listed classes disagree with payload") {
    write_dataset(dir.path(), {slice_with({1, 0, 0, 0})}, {{2}});
    CHECK_THROWS_AS(load_dataset(dir.path()), Error);
  }
  SUBCASE("stored frequency mismatch") {
    write_dataset(dir.path(), {slice_with({1, 0, 0, 0})}, {{1}}, {{"frequency", {{"1", 5}}}});
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("stored frequency"), Error);
  }
  SUBCASE("corrupt header") {
    std::ofstream(dir / "dataset.json") << "{not json";
    CHECK_THROWS_AS(load_dataset(dir.path()), Error);
  }
  SUBCASE("payload size mismatch") {
    write_dataset(dir.path(), {slice_with({1, 0, 0, 0})}, {{1}});
    auto bytes = read_file(dir / "0.seg");
    bytes.push_back(0);
    write_file(dir / "0.seg", bytes);
    CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("size mismatch"), Error);
  }
}

namespace {

std::vector<std::string> patients_of(const SliceTable& t, const std::vector<std::size_t>& ids) {
  std::set<std::string> s;
  for (auto id : ids) s.insert(t.record(id).patient_id);
  return {s.begin(), s.end()};
}

SliceTable patient_table(int patients, int slices_each) {
  std::vector<std::vector<ClassId>> presence;
  std::vector<std::string> owners;
  for (int p = 0; p < patients; ++p)
    for (int s = 0; s < slices_each; ++s) {
      presence.push_back({1});
      owners.push_back("P" + std::to_string(p));
    }
  return oracle::make_table(presence, 1, owners);
}

}  // namespace

TEST_CASE("splits are patient-disjoint and sized by round-half-up") {
  const auto t = patient_table(20, 3);
  SplitSpec spec;
  spec.seed = 11;
  const Splits s = make_splits(t, spec);
  CHECK(s.test_patients.size() == 3);
  CHECK(s.train_patients.size() + s.validation_patients.size() == 17);
  CHECK(s.validation_patients.size() == 4);  // positions 0, 5, 10, 15 of 17

  std::set<std::string> all;
  for (const auto* group : {&s.train_patients, &s.validation_patients, &s.test_patients})
    for (const auto& p : *group) CHECK(all.insert(p).second);
  CHECK(all.size() == 20);
  CHECK(s.train.size() + s.validation.size() + s.test.size() == 60);
  CHECK(patients_of(t, s.test).size() == 3);

  const Splits again = make_splits(t, spec);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
}

TEST_CASE("folds partition the development patients") {
  const auto t = patient_table(23, 1);
  std::multiset<std::string> validation;
  std::set<std::string> test;
  for (int f = 0; f < 5; ++f) {
    SplitSpec spec;
    spec.fold = f;
    spec.seed = 5;
    const Splits s = make_splits(t, spec);
    for (const auto& p : s.validation_patients) validation.insert(p);
    test.insert(s.test_patients.begin(), s.test_patients.end());
  }
  CHECK(test.size() == 3);
  CHECK(validation.size() == 20);
  CHECK(std::set<std::string>(validation.begin(), validation.end()).size() == 20);
}

TEST_CASE("subsampling keeps whole patients and nests by fraction") {
  const auto t = patient_table(14, 2);
  SplitSpec spec;
  spec.dev_fraction = 0.85;
  spec.folds = 2;
  spec.seed = 9;
  const Splits full = make_splits(t, spec);
  REQUIRE(full.train_patients.size() == 6);

  spec.subsample_fraction = 0.10;
  const Splits tenth = make_splits(t, spec);
  CHECK(tenth.train_patients.size() == 1);  // ceil(0.6)
  CHECK(tenth.validation_patients.size() == 1);
  CHECK(tenth.train.size() == 2);
  CHECK(tenth.test == full.test);

  spec.subsample_fraction = 0.5;
  const Splits half = make_splits(t, spec);
  CHECK(half.train_patients.size() == 3);
  CHECK(std::equal(tenth.train_patients.begin(), tenth.train_patients.end(),
                   half.train_patients.begin()));
}

TEST_CASE("subsample 10% of 10 patients keeps one") {
  const auto t = patient_table(14, 1);
  SplitSpec spec;
  spec.dev_fraction = 0.9;  // 13 dev, 1 test
  spec.folds = 4;           // 3 validation, 10 train
  spec.subsample_fraction = 0.10;
  const Splits s = make_splits(t, spec);
  CHECK(s.train_patients.size() == 1);
}

TEST_CASE("split errors") {
  SplitSpec spec;
  CHECK_THROWS_AS(make_splits(patient_table(4, 1), spec), Error);
  spec.dev_fraction = 1.0;
  CHECK_THROWS_AS(make_splits(patient_table(40, 1), spec), Error);
}

TEST_CASE("round_half_up") {
  CHECK(round_half_up(2.5) == 3);
  CHECK(round_half_up(2.4999) == 2);
  CHECK(round_half_up(0.15 * 20) == 3);
  CHECK(round_half_up(348.84) == 349);
}

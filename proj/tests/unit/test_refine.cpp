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

#include <random>

#include "doctest.h"
#include "epibatch/error.hpp"
#include "epibatch/refine.hpp"
#include "oracles.hpp"

using namespace epibatch;

namespace {

ImageVolume image_filled(std::vector<std::size_t> shape, float hu) {
  return ImageVolume(std::move(shape), {}, hu);
}

std::size_t count(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.data.begin(), m.data.end(), [](auto v) { return v != 0; }));
}

// Index into an [8, 8, 8] volume.
std::size_t at(std::size_t z, std::size_t y, std::size_t x) { return (z * 8 + y) * 8 + x; }

}  // namespace

TEST_CASE("HU thresholds are inclusive") {
  const RefineConfig cfg;
  ImageVolume img({1, 1, 6}, {}, 0.0f);
  const float hu[6] = {-30, -29, 150, 151, -190, -191};
  for (int i = 0; i < 6; ++i) img[i] = hu[i];
  const Mask all({1, 1, 6}, {}, 1);
  const Mask muscle = hu_threshold(img, all, cfg.muscle_range);
  CHECK(muscle.data == std::vector<std::uint8_t>{0, 1, 1, 0, 0, 0});
  const Mask fat = hu_threshold(img, all, cfg.sat_imat_range);
  CHECK(fat.data == std::vector<std::uint8_t>{1, 0, 0, 0, 1, 0});
  CHECK(count(hu_threshold(img, Mask({1, 1, 6}, {}, 0), cfg.muscle_range)) == 0);
  CHECK(hu_threshold(img, muscle, cfg.muscle_range).data == muscle.data);
  CHECK_THROWS_AS(hu_threshold(img, Mask({6}, {}, 1), cfg.muscle_range), Error);
}

TEST_CASE("config validation") {
  RefineConfig cfg;
  cfg.connectivity = 8;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = RefineConfig{};
  cfg.min_component_voxels = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS((HuRange{5, 5}.validate()), Error);
  const auto j = to_json(RefineConfig{});
  const RefineConfig back = refine_config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.vat_range.lo == -150);
  CHECK(back.connectivity == 6);
}

TEST_CASE("small components are removed") {
  const RefineConfig cfg;
  Mask four({8, 8, 8}, {}, 0), five({8, 8, 8}, {}, 0);
  for (std::size_t x = 0; x < 4; ++x) four[at(2, 2, x)] = 1;
  for (std::size_t x = 0; x < 5; ++x) five[at(2, 2, x)] = 1;
  CHECK(count(remove_small_components(four, cfg)) == 0);
  CHECK(remove_small_components(five, cfg).data == five.data);
  CHECK(count(remove_small_components(Mask({8, 8, 8}, {}, 0), cfg)) == 0);
}

TEST_CASE("connectivity choice") {
  // Five voxels along a space diagonal touch only at corners.
  Mask diag({8, 8, 8}, {}, 0);
  for (std::size_t k = 0; k < 5; ++k) diag[at(k, k, k)] = 1;
  RefineConfig six;
  RefineConfig full;
  full.connectivity = 26;
  CHECK(count(remove_small_components(diag, six)) == 0);
  CHECK(count(remove_small_components(diag, full)) == 5);
}

TEST_CASE("component removal is idempotent and shrinking") {
  std::mt19937_64 gen(12);
  RefineConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    cfg.connectivity = trial % 2 ? 26 : 6;
    const Mask m = oracle::random_mask(gen, {8, 8, 8}, 0.1 + 0.01 * (trial % 20));
    const Mask once = remove_small_components(m, cfg);
    CHECK(remove_small_components(once, cfg).data == once.data);
    CHECK(count(once) <= count(m));
    for (std::size_t i = 0; i < m.size(); ++i)
      if (once[i]) CHECK(m[i]);
  }
}

TEST_CASE("VAT composition") {
  const RefineConfig cfg;
  Mask fat({8, 8, 8}, {}, 0);
  for (std::size_t x = 0; x < 8; ++x) fat[at(3, 3, x)] = 1;
  SUBCASE("half-covered blob disappears") {
    Mask organ({8, 8, 8}, {}, 0);
    for (std::size_t x = 0; x < 4; ++x) organ[at(3, 3, x)] = 1;
    CHECK(count(compose_vat(fat, organ, cfg)) == 0);
  }
  SUBCASE("full organ cover") {
    CHECK(count(compose_vat(fat, Mask({8, 8, 8}, {}, 1), cfg)) == 0);
  }
  SUBCASE("empty organ mask only filters") {
    Mask noisy = fat;
    noisy[at(6, 6, 6)] = 1;
    CHECK(compose_vat(noisy, Mask({8, 8, 8}, {}, 0), cfg).data == fat.data);
  }
  CHECK_THROWS_AS(compose_vat(fat, Mask({8, 8}, {}, 0), cfg), Error);
}

TEST_CASE("IMAT composition") {
  Mask muscle({1, 1, 4}, {}, 1), fat({1, 1, 4}, {}, 1), sat({1, 1, 4}, {}, 0), vat({1, 1, 4}, {}, 0);
  muscle[3] = 0;
  sat[0] = 1;
  vat[1] = 1;
  const std::vector<Mask> muscles{muscle};
  CHECK(compose_imat(muscles, fat, sat, vat).data == std::vector<std::uint8_t>{0, 0, 1, 0});

  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Mask> groups;
    for (int k = 0; k < 3; ++k) groups.push_back(oracle::random_mask(gen, {8, 8, 8}, 0.2));
    const Mask f = oracle::random_mask(gen, {8, 8, 8}, 0.5);
    const Mask s = oracle::random_mask(gen, {8, 8, 8}, 0.3);
    const Mask v = oracle::random_mask(gen, {8, 8, 8}, 0.3);
    const Mask imat = compose_imat(groups, f, s, v);
    for (std::size_t i = 0; i < imat.size(); ++i) {
      const bool in_muscle = groups[0][i] || groups[1][i] || groups[2][i];
      REQUIRE((imat[i] != 0) == (in_muscle && f[i] && !s[i] && !v[i]));
    }
  }
}

TEST_CASE("longitudinal crop") {
  LabelVolume vert({10, 2, 2}, {}, 0);
  auto mark = [&](std::size_t z, ClassId v) { vert[z * 4] = v; };
  SUBCASE("T3 is the highest detected vertebra") {
    mark(8, vertebra::kT1 + 2);
    mark(7, vertebra::kT1 + 2);
    mark(5, vertebra::kT12);
    mark(2, vertebra::kL4);
    mark(1, vertebra::kL4);
    mark(0, vertebra::kL5);
    const SliceRange r = longitudinal_extent(vert, vertebra::kT1, vertebra::kL4);
    CHECK(r.first == 1);
    CHECK(r.last == 8);
    ImageVolume img({10, 2, 2}, {}, 0.0f);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(i / 4);
    const ImageVolume c = crop_longitudinal(img, vert);
    CHECK(c.shape == std::vector<std::size_t>{8, 2, 2});
    CHECK(c[0] == 1.0f);
    CHECK(c.data.back() == 8.0f);
  }
  SUBCASE("span covering the whole volume") {
    mark(9, vertebra::kT1);
    mark(0, vertebra::kL4);
    ImageVolume img({10, 2, 2}, {}, 3.0f);
    CHECK(crop_longitudinal(img, vert).data == img.data);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(longitudinal_extent(vert, vertebra::kT1, vertebra::kL4), Error);
    mark(4, vertebra::kC1);
    CHECK_THROWS_AS(longitudinal_extent(vert, vertebra::kT1, vertebra::kL4), Error);
    mark(3, vertebra::kL1);
    vert.orientation = "LPS";
    CHECK_THROWS_AS(longitudinal_extent(vert, vertebra::kT1, vertebra::kL4), Error);
  }
}

TEST_CASE("window normalization") {
  CHECK(window_normalize(40.0) == 0.0);
  CHECK(window_normalize(-500.0) == -1.0);
  CHECK(window_normalize(-160.0) == -1.0);
  CHECK(window_normalize(240.0) == 1.0);
  CHECK(window_normalize(1000.0) == 1.0);
  double prev = -2.0;
  for (double hu = -300.0; hu <= 300.0; hu += 0.5) {
    const double v = window_normalize(hu);
    CHECK(v >= prev);
    prev = v;
  }
  const ImageVolume out = hu_window_normalize(image_filled({2, 2}, 140.0f));
  CHECK(out[3] == doctest::Approx(0.5));
}

TEST_CASE("refine_labels assembles the label map") {
  const std::vector<std::size_t> shape{1, 1, 8};
  ImageVolume img(shape, {}, 0.0f);
  const float hu[8] = {50, 60, -100, 70, -100, -100, 80, -60};
  for (int i = 0; i < 8; ++i) img[i] = hu[i];
  RefineInputs in;
  in.image = img;
  for (int k = 0; k < 5; ++k) in.muscle_groups.emplace_back(shape, std::vector<double>{}, 0);
  in.muscle_groups[0][0] = 1;  // ESM
  in.muscle_groups[4][1] = 1;  // RAM
  in.muscle = Mask(shape, {}, 0);
  for (std::size_t i : {0, 1, 2, 3}) in.muscle[i] = 1;
  in.sat = Mask(shape, {}, 0);
  in.sat[4] = 1;
  in.vat = Mask(shape, {}, 0);
  in.vat[5] = 1;
  in.organ_bone = Mask(shape, {}, 0);
  RefineConfig cfg;
  cfg.min_component_voxels = 1;
  const RefineResult r = refine_labels(in, cfg);
  using namespace tissue;
  CHECK(r.labels.data == std::vector<std::uint8_t>{kEsm, kRam, kImat, kSm, kSat, kVat, 0, 0});
  CHECK_FALSE(r.crop.has_value());

  in.muscle_groups.pop_back();
  CHECK_THROWS_AS(refine_labels(in, cfg), Error);
}

TEST_CASE("catalog order") {
  const ClassCatalog c = body_composition_catalog();
  REQUIRE(c.size() == 9);
  CHECK(c.name(tissue::kEsm) == "ESM");
  CHECK(c.name(tissue::kImat) == "IMAT");
  CHECK(c.name(tissue::kVat) == "VAT");
}

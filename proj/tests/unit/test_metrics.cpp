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
#include "epibatch/metrics.hpp"
#include "oracles.hpp"

using namespace epibatch;

namespace {

Mask grid(std::vector<std::size_t> shape, std::initializer_list<std::size_t> on) {
  Mask m(std::move(shape), {}, 0);
  for (auto i : on) m[i] = 1;
  return m;
}

ClassCatalog catalog(int n) {
  std::vector<ClassInfo> c;
  for (int k = 1; k <= n; ++k) c.push_back({static_cast<ClassId>(k), "C" + std::to_string(k)});
  return ClassCatalog(c);
}

}  // namespace

TEST_CASE("dice examples") {
  const Mask p = grid({4, 4}, {0, 1, 2, 3});
  const Mask r = grid({4, 4}, {1, 2, 3, 4, 5, 6});
  CHECK(dice(p, r) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(dice(p, p) == 1.0);
  CHECK(dice(grid({4, 4}, {0}), grid({4, 4}, {5})) == 0.0);
  CHECK(dice(grid({4, 4}, {}), grid({4, 4}, {})) == 1.0);
  CHECK_THROWS_AS(dice(grid({4, 4}, {}), grid({2, 8}, {})), Error);
}

TEST_CASE("hd95 examples") {
  const std::vector<double> mm{1.0, 1.0};
  CHECK(*hd95(grid({5, 5}, {0}), grid({5, 5}, {3}), mm) == doctest::Approx(3.0).epsilon(1e-15));
  const Mask m = grid({5, 5}, {6, 7, 11, 12});
  CHECK(*hd95(m, m, mm) == 0.0);
  CHECK(*hd95(grid({5, 5}, {}), grid({5, 5}, {}), mm) == 0.0);
  CHECK_FALSE(hd95(m, grid({5, 5}, {}), mm).has_value());
  CHECK_FALSE(hd95(grid({5, 5}, {}), m, mm).has_value());
  CHECK_THROWS_AS(hd95(m, m, std::vector<double>{1.0, 0.0}), Error);
  CHECK_THROWS_AS(hd95(m, m, std::vector<double>{1.0}), Error);
}

TEST_CASE("boundary uses face neighbours and the array edge") {
  Mask m({5, 5}, {}, 1);
  const Mask b = boundary(m);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 5; ++x) {
      const bool edge = y == 0 || x == 0 || y == 4 || x == 4;
      CHECK((b[y * 5 + x] != 0) == edge);
    }
  const Mask plus = grid({5, 5}, {7, 11, 12, 13, 17});
  const Mask bp = boundary(plus);
  CHECK(bp[12] == 0);
  CHECK(bp[7] != 0);
}

TEST_CASE("percentile linear interpolation") {
  CHECK(percentile_linear({1, 2, 3, 4, 5}, 0.5) == 3.0);
  CHECK(percentile_linear({4, 1}, 0.95) == doctest::Approx(3.85));
  CHECK(percentile_linear({7}, 0.95) == 7.0);
  CHECK_THROWS_AS(percentile_linear({}, 0.5), Error);
  CHECK_THROWS_AS(percentile_linear({1}, 1.5), Error);
}

TEST_CASE("metrics match oracles on all 3x3 pairs") {
  const std::vector<double> mm{1.0, 1.0};
  long mismatches = 0;
  for (unsigned a = 0; a < 512; ++a) {
    Mask p({3, 3}, {}, 0);
    for (int i = 0; i < 9; ++i) p[i] = (a >> i) & 1;
    for (unsigned b = 0; b < 512; ++b) {
      Mask r({3, 3}, {}, 0);
      for (int i = 0; i < 9; ++i) r[i] = (b >> i) & 1;
      const auto f = oracle::dice_fraction(p, r);
      const double expect = f.den == 0 ? 1.0 : static_cast<double>(f.num) / f.den;
      if (dice(p, r) != expect) ++mismatches;
      const auto h = hd95(p, r, mm), o = oracle::hd95(p, r, mm);
      if (h.has_value() != o.has_value() || (h && std::abs(*h - *o) > 1e-9)) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("hd95 matches the oracle on random masks") {
  std::mt19937_64 gen(7);
  const std::vector<double> spacing{0.8, 1.3};
  for (int trial = 0; trial < 100; ++trial) {
    const double density = 0.05 + 0.4 * (trial % 5) / 4.0;
    const Mask p = oracle::random_mask(gen, {16, 16}, density);
    const Mask r = oracle::random_mask(gen, {16, 16}, density);
    for (bool max_variant : {false, true}) {
      const auto v = max_variant ? Hd95Variant::kMaxOfDirected : Hd95Variant::kUnion;
      const auto h = hd95(p, r, spacing, v), o = oracle::hd95(p, r, spacing, max_variant);
      REQUIRE(h.has_value() == o.has_value());
      if (h) CHECK(std::abs(*h - *o) <= 1e-9);
    }
  }
}

TEST_CASE("hd95 in 3D with anisotropic spacing") {
  std::mt19937_64 gen(8);
  const std::vector<double> spacing{2.5, 0.7, 0.9};
  for (int trial = 0; trial < 20; ++trial) {
    const Mask p = oracle::random_mask(gen, {5, 7, 6}, 0.2);
    const Mask r = oracle::random_mask(gen, {5, 7, 6}, 0.3);
    const auto h = hd95(p, r, spacing), o = oracle::hd95(p, r, spacing);
    REQUIRE(h.has_value() == o.has_value());
    if (h) CHECK(std::abs(*h - *o) <= 1e-9);
  }
}

TEST_CASE("symmetry and scale covariance") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Mask p = oracle::random_mask(gen, {12, 10}, 0.25);
    const Mask r = oracle::random_mask(gen, {12, 10}, 0.15);
    const std::vector<double> s1{1.0, 1.5}, s3{3.0, 4.5};
    CHECK(dice(p, r) == dice(r, p));
    const auto a = hd95(p, r, s1), b = hd95(r, p, s1), c = hd95(p, r, s3);
    REQUIRE(a.has_value());
    CHECK(std::abs(*a - *b) <= 1e-12);
    CHECK(std::abs(*c - 3.0 * *a) <= 1e-9 * std::max(1.0, *c));
  }
}

TEST_CASE("evaluate_pair") {
  const ClassCatalog cat = catalog(9);
  SUBCASE("identical maps with all classes") {
    LabelVolume v({3, 4}, {1.0, 1.0}, 0);
    for (std::size_t i = 0; i < 9; ++i) v[i] = static_cast<std::uint8_t>(i + 1);
    const EvalReport r = evaluate_pair(v, v, cat);
    CHECK(r.mean_dice_fg == 1.0);
    REQUIRE(r.mean_hd95_fg.has_value());
    CHECK(*r.mean_hd95_fg == 0.0);
    for (const auto& s : r.per_class) {
      CHECK(s.dice == 1.0);
      CHECK(*s.hd95 == 0.0);
      CHECK(s.present);
    }
  }
  SUBCASE("absent and one-sided classes") {
    LabelVolume ref({4, 4}, {1.0, 1.0}, 0), pred({4, 4}, {1.0, 1.0}, 0);
    ref[0] = 1;
    pred[0] = 1;
    ref[5] = 2;  // class 2 only in the reference
    const EvalReport r = evaluate_pair(pred, ref, cat);
    CHECK(r.per_class[0].dice == 1.0);
    CHECK(r.per_class[1].dice == 0.0);
    CHECK_FALSE(r.per_class[1].hd95.has_value());
    CHECK(r.per_class[2].dice == 1.0);
    CHECK(*r.per_class[2].hd95 == 0.0);
    CHECK_FALSE(r.per_class[2].present);
    CHECK(r.mean_dice_fg == doctest::Approx(0.5));
    CHECK(r.hd95_excluded == 1);
    CHECK(*r.mean_hd95_fg == 0.0);
  }
  SUBCASE("errors") {
    LabelVolume a({2, 2}, {1.0, 1.0}, 0), b({2, 2}, {1.0, 2.0}, 0), c({2, 2}, {1.0, 1.0}, 0);
    CHECK_THROWS_AS(evaluate_pair(a, b, cat), Error);
    c[0] = 12;
    CHECK_THROWS_AS(evaluate_pair(c, a, cat), Error);
  }
}

TEST_CASE("averaging and CSV output") {
  const ClassCatalog cat = catalog(2);
  LabelVolume ref({2, 2}, {1.0, 1.0}, 0), good({2, 2}, {1.0, 1.0}, 0), bad({2, 2}, {1.0, 1.0}, 0);
  ref[0] = 1;
  good[0] = 1;
  bad[3] = 1;
  const auto avg = average_reports({evaluate_pair(good, ref, cat), evaluate_pair(bad, ref, cat)}, cat);
  CHECK(avg.per_class[0].dice == doctest::Approx(0.5));
  CHECK(*avg.per_class[0].hd95 == doctest::Approx(0.5 * std::sqrt(2.0)));
  CHECK_FALSE(avg.per_class[1].present);
  const std::string csv = eval_csv(avg);
  CHECK(csv.rfind("class,name,dice,hd95_mm\n1,C1,0.500000,0.707107\n2,C2,1.000000,0.000000\n", 0) == 0);
  CHECK(csv.find("AVERAGE,AVERAGE,0.500000,0.707107\n") != std::string::npos);
}

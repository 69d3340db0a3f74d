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

#include <omp.h>

#include <cmath>
#include <random>

#include "doctest.h"
#include "epibatch/kernels.hpp"

using namespace epibatch;
using namespace epibatch::kernels;

namespace {

std::vector<double> random_values(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

struct ThreadCount {
  int saved = omp_get_max_threads();
  explicit ThreadCount(int n) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("conv forward matches the serial reference") {
  std::mt19937_64 gen(1);
  for (ConvShape s : {ConvShape{1, 8, 6, 6}, ConvShape{8, 10, 16, 16}, ConvShape{3, 2, 1, 7},
                      ConvShape{2, 3, 5, 1}}) {
    const int batch = 3;
    const auto in = random_values(gen, batch * s.in_channels * s.plane());
    const auto w = random_values(gen, s.weight_count());
    const auto b = random_values(gen, s.out_channels);
    std::vector<double> fast(batch * s.out_channels * s.plane()), slow(fast.size());
    conv3x3_forward(s, batch, in, w, b, fast);
    conv3x3_forward_serial(s, batch, in, w, b, slow);
    CHECK(max_rel_diff(fast, slow) < 1e-12);
  }
}

TEST_CASE("conv backward matches the serial reference") {
  std::mt19937_64 gen(2);
  for (ConvShape s : {ConvShape{1, 8, 6, 6}, ConvShape{8, 10, 16, 16}, ConvShape{4, 2, 3, 9}}) {
    const int batch = 5;
    const auto in = random_values(gen, batch * s.in_channels * s.plane());
    const auto w = random_values(gen, s.weight_count());
    const auto go = random_values(gen, batch * s.out_channels * s.plane());
    std::vector<double> gi(in.size()), gw(w.size()), gb(s.out_channels);
    std::vector<double> gi2(in.size()), gw2(w.size()), gb2(s.out_channels);
    conv3x3_backward(s, batch, in, w, go, gi, gw, gb);
    conv3x3_backward_serial(s, batch, in, w, go, gi2, gw2, gb2);
    CHECK(max_rel_diff(gi, gi2) < 1e-12);
    CHECK(max_rel_diff(gw, gw2) < 1e-12);
    CHECK(max_rel_diff(gb, gb2) < 1e-12);

    std::vector<double> gw3(w.size()), gb3(s.out_channels);
    conv3x3_backward(s, batch, in, w, go, {}, gw3, gb3);
    CHECK(gw3 == gw);
  }
}

TEST_CASE("conv is linear in the input") {
  std::mt19937_64 gen(3);
  const ConvShape s{2, 3, 5, 4};
  const auto a = random_values(gen, 2 * s.plane()), c = random_values(gen, 2 * s.plane());
  const auto w = random_values(gen, s.weight_count());
  const std::vector<double> zero(3, 0.0);
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + c[i];
  std::vector<double> ya(3 * s.plane()), yc(ya.size()), ys(ya.size());
  conv3x3_forward(s, 1, a, w, zero, ya);
  conv3x3_forward(s, 1, c, w, zero, yc);
  conv3x3_forward(s, 1, sum, w, zero, ys);
  for (std::size_t i = 0; i < ys.size(); ++i) CHECK(ys[i] == doctest::Approx(ya[i] + yc[i]));
}

TEST_CASE("kernel results do not depend on the thread count") {
  std::mt19937_64 gen(4);
  const ConvShape s{8, 10, 12, 12};
  const int batch = 7;
  const auto in = random_values(gen, batch * s.in_channels * s.plane());
  const auto w = random_values(gen, s.weight_count());
  const auto b = random_values(gen, s.out_channels);
  const auto go = random_values(gen, batch * s.out_channels * s.plane());
  std::vector<std::uint8_t> seeds(6 * 7 * 8);
  for (auto& v : seeds) v = gen() % 20 == 0;
  const std::vector<std::size_t> shape{6, 7, 8};
  const std::vector<double> spacing{2.5, 0.8, 0.7};

  auto run = [&](int threads) {
    ThreadCount tc(threads);
    std::vector<double> y(batch * s.out_channels * s.plane()), gi(in.size()), gw(w.size()),
        gb(s.out_channels);
    conv3x3_forward(s, batch, in, w, b, y);
    conv3x3_backward(s, batch, in, w, go, gi, gw, gb);
    auto d = squared_edt(seeds, shape, spacing);
    y.insert(y.end(), gi.begin(), gi.end());
    y.insert(y.end(), gw.begin(), gw.end());
    y.insert(y.end(), gb.begin(), gb.end());
    y.insert(y.end(), d.begin(), d.end());
    return y;
  };
  const auto one = run(1);
  CHECK(run(2) == one);
  CHECK(run(5) == one);
}

TEST_CASE("EDT matches brute force") {
  std::mt19937_64 gen(5);
  const std::vector<std::vector<std::size_t>> shapes{{9}, {7, 11}, {5, 6, 7}, {1, 1, 4}};
  for (const auto& shape : shapes) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    for (double density : {0.0, 0.03, 0.3}) {
      std::vector<std::uint8_t> seeds(n);
      for (auto& v : seeds) v = std::bernoulli_distribution(density)(gen);
      std::vector<double> spacing;
      for (std::size_t d = 0; d < shape.size(); ++d) spacing.push_back(0.5 + 0.7 * d);
      const auto fast = squared_edt(seeds, shape, spacing);
      const auto slow = squared_edt_serial(seeds, shape, spacing);
      for (std::size_t i = 0; i < n; ++i) {
        if (std::isinf(slow[i])) {
          CHECK(std::isinf(fast[i]));
        } else {
          CHECK(std::abs(fast[i] - slow[i]) <= 1e-9 * std::max(1.0, slow[i]));
        }
      }
    }
  }
}

TEST_CASE("EDT on a single seed") {
  std::vector<std::uint8_t> seeds(5 * 5, 0);
  seeds[12] = 1;
  const std::vector<std::size_t> shape{5, 5};
  const std::vector<double> spacing{2.0, 1.0};
  const auto d = squared_edt(seeds, shape, spacing);
  CHECK(d[12] == 0.0);
  CHECK(d[0] == doctest::Approx(4.0 * 4 + 1.0 * 4));
  CHECK(d[14] == doctest::Approx(4.0));
  CHECK(d[22] == doctest::Approx(16.0));
}

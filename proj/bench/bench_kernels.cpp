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

// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <vector>

#include "epibatch/kernels.hpp"
#include "epibatch/rng.hpp"

namespace {

using epibatch::Rng;
namespace k = epibatch::kernels;

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

struct ConvCase {
  k::ConvShape shape;
  int batch;
  std::vector<double> input, weight, bias, output, grad_input, grad_weight, grad_bias;

  explicit ConvCase(int size)
      : shape{8, 10, size, size},
        batch(16),
        input(random_vector(static_cast<std::size_t>(batch) * 8 * shape.plane(), 1)),
        weight(random_vector(shape.weight_count(), 2)),
        bias(random_vector(10, 3)),
        output(static_cast<std::size_t>(batch) * 10 * shape.plane()),
        grad_input(input.size()),
        grad_weight(weight.size()),
        grad_bias(10) {}
};

void BM_ConvForward(benchmark::State& state) {
  ConvCase c(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    k::conv3x3_forward(c.shape, c.batch, c.input, c.weight, c.bias, c.output);
    benchmark::DoNotOptimize(c.output.data());
  }
}

void BM_ConvForwardSerial(benchmark::State& state) {
  ConvCase c(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    k::conv3x3_forward_serial(c.shape, c.batch, c.input, c.weight, c.bias, c.output);
    benchmark::DoNotOptimize(c.output.data());
  }
}

void BM_ConvBackward(benchmark::State& state) {
  ConvCase c(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    k::conv3x3_backward(c.shape, c.batch, c.input, c.weight, c.output, c.grad_input,
                        c.grad_weight, c.grad_bias);
    benchmark::DoNotOptimize(c.grad_weight.data());
  }
}

void BM_ConvBackwardSerial(benchmark::State& state) {
  ConvCase c(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    k::conv3x3_backward_serial(c.shape, c.batch, c.input, c.weight, c.output, c.grad_input,
                               c.grad_weight, c.grad_bias);
    benchmark::DoNotOptimize(c.grad_weight.data());
  }
}

std::vector<std::uint8_t> sparse_seeds(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> s(n);
  for (auto& x : s) x = rng.bernoulli(0.02) ? 1 : 0;
  return s;
}

void BM_Edt(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const std::vector<std::size_t> shape{side, side, side};
  const std::vector<double> spacing{2.5, 0.8, 0.8};
  const auto seeds = sparse_seeds(side * side * side, 4);
  for (auto _ : state) benchmark::DoNotOptimize(k::squared_edt(seeds, shape, spacing));
}

void BM_EdtSerial(benchmark::State& state) {
  const std::size_t side = static_cast<std::size_t>(state.range(0));
  const std::vector<std::size_t> shape{side, side, side};
  const std::vector<double> spacing{2.5, 0.8, 0.8};
  const auto seeds = sparse_seeds(side * side * side, 4);
  for (auto _ : state) benchmark::DoNotOptimize(k::squared_edt_serial(seeds, shape, spacing));
}

}  // namespace

BENCHMARK(BM_ConvForward)->Arg(16)->Arg(64);
BENCHMARK(BM_ConvForwardSerial)->Arg(16)->Arg(64);
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(64);
BENCHMARK(BM_ConvBackwardSerial)->Arg(16)->Arg(64);
BENCHMARK(BM_Edt)->Arg(16)->Arg(24);
BENCHMARK(BM_EdtSerial)->Arg(16)->Arg(24);

BENCHMARK_MAIN();

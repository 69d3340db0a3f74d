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

#ifndef EPIBATCH_KERNELS_HPP_
#define EPIBATCH_KERNELS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace epibatch::kernels {

// Data-parallel inner loops. Each OpenMP kernel has a plain serial reference
// next to it; tests compare the two and bench/ times them.
//
// Parallel kernels never reduce across threads in floating point, so their
// results do not depend on the thread count.

/// Sets the OpenMP thread cap from EPIBATCH_THREADS when it is set.
void apply_thread_limit_from_env();
int max_threads();

/// 3x3 convolution, stride 1, zero padding, over a batch of `batch` images.
/// Layouts: input [n][in][H][W], weight [out][in][3][3], bias [out],
/// output [n][out][H][W].
struct ConvShape {
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * 9;
  }
};

void conv3x3_forward(const ConvShape& s, int batch, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> bias,
                     std::span<double> output);
void conv3x3_forward_serial(const ConvShape& s, int batch, std::span<const double> input,
                            std::span<const double> weight, std::span<const double> bias,
                            std::span<double> output);

/// Gradients of a batch-summed objective. grad_weight / grad_bias are
/// overwritten with the batch sum (images added in index order); grad_input
/// may be empty when not needed.
void conv3x3_backward(const ConvShape& s, int batch, std::span<const double> input,
                      std::span<const double> weight, std::span<const double> grad_output,
                      std::span<double> grad_input, std::span<double> grad_weight,
                      std::span<double> grad_bias);
void conv3x3_backward_serial(const ConvShape& s, int batch, std::span<const double> input,
                             std::span<const double> weight,
                             std::span<const double> grad_output,
                             std::span<double> grad_input, std::span<double> grad_weight,
                             std::span<double> grad_bias);

/// Squared Euclidean distance (physical units) from every voxel to the
/// nearest non-zero voxel of `seeds`; +inf everywhere when there are none.
/// Separable lower-envelope transform, parallel over lines.
std::vector<double> squared_edt(std::span<const std::uint8_t> seeds,
                                std::span<const std::size_t> shape,
                                std::span<const double> spacing);
/// Brute-force nearest-seed scan.
std::vector<double> squared_edt_serial(std::span<const std::uint8_t> seeds,
                                       std::span<const std::size_t> shape,
                                       std::span<const double> spacing);

}  // namespace epibatch::kernels

#endif  // EPIBATCH_KERNELS_HPP_

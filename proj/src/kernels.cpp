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

#include "epibatch/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <memory>
#include <cstdlib>
#include <limits>
#include <string>

#include "epibatch/error.hpp"

namespace epibatch::kernels {

void apply_thread_limit_from_env() {
  if (const char* v = std::getenv("EPIBATCH_THREADS")) {
    const int n = std::atoi(v);
    if (n >= 1) omp_set_num_threads(n);
  }
}

int max_threads() { return omp_get_max_threads(); }

namespace {

void check_conv(const ConvShape& s, int batch, std::size_t input, std::size_t weight,
                std::size_t bias, std::size_t output) {
  const auto n = static_cast<std::size_t>(batch);
  if (input != n * s.in_channels * s.plane() || weight != s.weight_count() ||
      bias != static_cast<std::size_t>(s.out_channels) ||
      output != n * s.out_channels * s.plane())
    throw Error("conv3x3: buffer sizes do not match shape");
}

// Planes are copied into a zero border of one pixel with row stride W+2. A
// tap then becomes a constant offset into the padded plane, and one output
// plane is a single contiguous run of (H-1)*(W+2)+W positions; the two
// positions per row that fall on the border are computed and dropped.
struct Padded {
  int wp;
  std::size_t plane;  // (H+2)*(W+2)
  std::size_t run;    // (H-1)*(W+2)+W

  explicit Padded(const ConvShape& s)
      : wp(s.width + 2),
        plane(static_cast<std::size_t>(s.height + 2) * (s.width + 2)),
        run(static_cast<std::size_t>(s.height - 1) * (s.width + 2) + s.width) {}

  std::size_t tap(int ky, int kx) const { return static_cast<std::size_t>(ky) * wp + kx; }
};

void pad(const ConvShape& s, const Padded& p, const double* src, int channels, double* dst) {
  for (int c = 0; c < channels; ++c) {
    double* d = dst + c * p.plane;
    std::fill_n(d, p.wp, 0.0);
    for (int y = 0; y < s.height; ++y) {
      double* row = d + (y + 1) * p.wp;
      row[0] = 0.0;
      std::copy_n(src + c * s.plane() + y * s.width, s.width, row + 1);
      row[s.width + 1] = 0.0;
    }
    std::fill_n(d + (s.height + 1) * p.wp, p.wp, 0.0);
  }
}

std::unique_ptr<double[]> scratch(std::size_t n) {
  return std::make_unique_for_overwrite<double[]>(n);
}

void unpad_run(const ConvShape& s, const Padded& p, const double* run, double* dst) {
  for (int y = 0; y < s.height; ++y) std::copy_n(run + y * p.wp, s.width, dst + y * s.width);
}

#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
#define EPIBATCH_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define EPIBATCH_CLONES
#endif

EPIBATCH_CLONES double dot(const double* a, const double* b, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t q = 0;
  for (; q + 4 <= n; q += 4) {
    l0 += a[q] * b[q];
    l1 += a[q + 1] * b[q + 1];
    l2 += a[q + 2] * b[q + 2];
    l3 += a[q + 3] * b[q + 3];
  }
  double tail = 0.0;
  for (; q < n; ++q) tail += a[q] * b[q];
  return ((l0 + l1) + (l2 + l3)) + tail;
}

EPIBATCH_CLONES void forward_one(const ConvShape& s, const double* in, const double* w,
                                 const double* b, double* out) {
  const Padded p(s);
  const auto pin = scratch(s.in_channels * p.plane);
  const auto acc = scratch(p.run);
  pad(s, p, in, s.in_channels, pin.get());
  for (int o = 0; o < s.out_channels; ++o) {
    std::fill_n(acc.get(), p.run, b[o]);
    for (int i = 0; i < s.in_channels; ++i) {
      const double* wk = w + (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double c = wk[ky * 3 + kx];
          const double* src = pin.get() + i * p.plane + p.tap(ky, kx);
          double* dst = acc.get();
          for (std::size_t q = 0; q < p.run; ++q) dst[q] += c * src[q];
        }
    }
    unpad_run(s, p, acc.get(), out + o * s.plane());
  }
}

EPIBATCH_CLONES void backward_one(const ConvShape& s, const double* in, const double* w,
                                  const double* gout, double* gin, double* gw, double* gb) {
  const Padded p(s);
  const std::size_t plane = s.plane();
  const auto pin = scratch(s.in_channels * p.plane);
  const auto pgo = scratch(s.out_channels * p.plane);
  pad(s, p, in, s.in_channels, pin.get());
  pad(s, p, gout, s.out_channels, pgo.get());

  for (int o = 0; o < s.out_channels; ++o) {
    const double* go = gout + o * plane;
    double acc = 0.0;
    for (std::size_t k = 0; k < plane; ++k) acc += go[k];
    gb[o] = acc;
    // Border columns of the padded gradient are zero, so they add nothing.
    const double* g = pgo.get() + o * p.plane + p.tap(1, 1);
    for (int i = 0; i < s.in_channels; ++i) {
      const std::size_t wbase = (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          gw[wbase + ky * 3 + kx] = dot(g, pin.get() + i * p.plane + p.tap(ky, kx), p.run);
    }
  }

  if (!gin) return;
  const auto acc = scratch(p.run);
  for (int i = 0; i < s.in_channels; ++i) {
    std::fill_n(acc.get(), p.run, 0.0);
    for (int o = 0; o < s.out_channels; ++o) {
      const double* wk = w + (static_cast<std::size_t>(o) * s.in_channels + i) * 9;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double c = wk[ky * 3 + kx];
          const double* src = pgo.get() + o * p.plane + p.tap(2 - ky, 2 - kx);
          double* dst = acc.get();
          for (std::size_t q = 0; q < p.run; ++q) dst[q] += c * src[q];
        }
    }
    unpad_run(s, p, acc.get(), gin + i * plane);
  }
}

}  // namespace

void conv3x3_forward(const ConvShape& s, int batch, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> bias,
                     std::span<double> output) {
  check_conv(s, batch, input.size(), weight.size(), bias.size(), output.size());
  const std::size_t in_stride = s.in_channels * s.plane();
  const std::size_t out_stride = s.out_channels * s.plane();
#pragma omp parallel for schedule(static) if (batch > 1)
  for (int n = 0; n < batch; ++n)
    forward_one(s, input.data() + n * in_stride, weight.data(), bias.data(),
                output.data() + n * out_stride);
}

void conv3x3_forward_serial(const ConvShape& s, int batch, std::span<const double> input,
                            std::span<const double> weight, std::span<const double> bias,
                            std::span<double> output) {
  check_conv(s, batch, input.size(), weight.size(), bias.size(), output.size());
  const int h = s.height, w = s.width;
  for (int n = 0; n < batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double acc = bias[o];
          for (int i = 0; i < s.in_channels; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = y + ky - 1, xx = x + kx - 1;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                acc += weight[((o * s.in_channels + i) * 3 + ky) * 3 + kx] *
                       input[((n * s.in_channels + i) * h + yy) * w + xx];
              }
          output[((n * s.out_channels + o) * h + y) * w + x] = acc;
        }
}

void conv3x3_backward(const ConvShape& s, int batch, std::span<const double> input,
                      std::span<const double> weight, std::span<const double> grad_output,
                      std::span<double> grad_input, std::span<double> grad_weight,
                      std::span<double> grad_bias) {
  check_conv(s, batch, input.size(), weight.size(), grad_bias.size(), grad_output.size());
  if (grad_weight.size() != weight.size()) throw Error("conv3x3: grad_weight size mismatch");
  if (!grad_input.empty() && grad_input.size() != input.size())
    throw Error("conv3x3: grad_input size mismatch");
  const std::size_t in_stride = s.in_channels * s.plane();
  const std::size_t out_stride = s.out_channels * s.plane();
  const std::size_t nw = weight.size(), nb = grad_bias.size();
  // Per-image partials, summed afterwards in image order.
  std::vector<double> partial(static_cast<std::size_t>(batch) * (nw + nb));
#pragma omp parallel for schedule(static) if (batch > 1)
  for (int n = 0; n < batch; ++n) {
    double* pw = partial.data() + n * (nw + nb);
    backward_one(s, input.data() + n * in_stride, weight.data(),
                 grad_output.data() + n * out_stride,
                 grad_input.empty() ? nullptr : grad_input.data() + n * in_stride, pw, pw + nw);
  }
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  for (int n = 0; n < batch; ++n) {
    const double* pw = partial.data() + n * (nw + nb);
    for (std::size_t k = 0; k < nw; ++k) grad_weight[k] += pw[k];
    for (std::size_t k = 0; k < nb; ++k) grad_bias[k] += pw[nw + k];
  }
}

void conv3x3_backward_serial(const ConvShape& s, int batch, std::span<const double> input,
                             std::span<const double> weight,
                             std::span<const double> grad_output,
                             std::span<double> grad_input, std::span<double> grad_weight,
                             std::span<double> grad_bias) {
  check_conv(s, batch, input.size(), weight.size(), grad_bias.size(), grad_output.size());
  const int h = s.height, w = s.width;
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  if (!grad_input.empty()) std::fill(grad_input.begin(), grad_input.end(), 0.0);
  for (int n = 0; n < batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double g = grad_output[((n * s.out_channels + o) * h + y) * w + x];
          grad_bias[o] += g;
          for (int i = 0; i < s.in_channels; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int yy = y + ky - 1, xx = x + kx - 1;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const std::size_t wi = ((o * s.in_channels + i) * 3 + ky) * 3 + kx;
                const std::size_t ii = ((n * s.in_channels + i) * h + yy) * w + xx;
                grad_weight[wi] += g * input[ii];
                if (!grad_input.empty()) grad_input[ii] += g * weight[wi];
              }
        }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_grid(std::size_t seeds, std::span<const std::size_t> shape,
                std::span<const double> spacing) {
  if (shape.empty() || spacing.size() != shape.size())
    throw Error("distance transform: spacing rank does not match shape");
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != seeds) throw Error("distance transform: mask size does not match shape");
  for (double s : spacing)
    if (!(s > 0.0)) throw Error("distance transform: spacing must be positive");
}

// Lower envelope of parabolas along one line (positions q * h).
void envelope_1d(const double* f, double* d, std::size_t n, double h, std::size_t* v,
                 double* z) {
  std::ptrdiff_t k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double pq = static_cast<double>(q) * h;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const double pv = static_cast<double>(v[k]) * h;
      s = ((f[q] + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  std::ptrdiff_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double pq = static_cast<double>(q) * h;
    while (z[j + 1] < pq) ++j;
    const double pv = static_cast<double>(v[j]) * h;
    d[q] = (pq - pv) * (pq - pv) + f[v[j]];
  }
}

}  // namespace

std::vector<double> squared_edt(std::span<const std::uint8_t> seeds,
                                std::span<const std::size_t> shape,
                                std::span<const double> spacing) {
  check_grid(seeds.size(), shape, spacing);
  std::vector<double> dist(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) dist[i] = seeds[i] ? 0.0 : kInf;

  for (std::size_t axis = 0; axis < shape.size(); ++axis) {
    const std::size_t len = shape[axis];
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
    const std::size_t lines = seeds.size() / len;
    const double h = spacing[axis];
#pragma omp parallel
    {
      std::vector<double> f(len), d(len), z(len + 1);
      std::vector<std::size_t> v(len);
#pragma omp for schedule(static)
      for (std::ptrdiff_t line = 0; line < static_cast<std::ptrdiff_t>(lines); ++line) {
        const std::size_t outer = static_cast<std::size_t>(line) / inner;
        const std::size_t in = static_cast<std::size_t>(line) % inner;
        const std::size_t base = outer * len * inner + in;
        for (std::size_t q = 0; q < len; ++q) f[q] = dist[base + q * inner];
        envelope_1d(f.data(), d.data(), len, h, v.data(), z.data());
        for (std::size_t q = 0; q < len; ++q) dist[base + q * inner] = d[q];
      }
    }
  }
  return dist;
}

std::vector<double> squared_edt_serial(std::span<const std::uint8_t> seeds,
                                       std::span<const std::size_t> shape,
                                       std::span<const double> spacing) {
  check_grid(seeds.size(), shape, spacing);
  const std::size_t rank = shape.size();
  auto coords = [&](std::size_t idx, std::vector<double>& out) {
    for (std::size_t a = rank; a-- > 0;) {
      out[a] = static_cast<double>(idx % shape[a]) * spacing[a];
      idx /= shape[a];
    }
  };
  std::vector<std::vector<double>> points;
  std::vector<double> c(rank);
  for (std::size_t i = 0; i < seeds.size(); ++i)
    if (seeds[i]) {
      coords(i, c);
      points.push_back(c);
    }
  std::vector<double> dist(seeds.size(), kInf);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    coords(i, c);
    for (const auto& p : points) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < rank; ++a) d2 += (c[a] - p[a]) * (c[a] - p[a]);
      dist[i] = std::min(dist[i], d2);
    }
  }
  return dist;
}

}  // namespace epibatch::kernels

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

#include "epibatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "epibatch/kernels.hpp"

namespace epibatch {

double dice(const Mask& pred, const Mask& ref) {
  require_same_shape(pred, ref, "dice");
  std::uint64_t p = 0, r = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] != 0, b = ref[i] != 0;
    p += a;
    r += b;
    both += a && b;
  }
  if (p + r == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + r);
}

Mask boundary(const Mask& mask) {
  Mask out = mask;
  const std::size_t rank = mask.rank();
  std::vector<std::size_t> stride(rank, 1);
  for (std::size_t a = rank - 1; a-- > 0;) stride[a] = stride[a + 1] * mask.shape[a + 1];
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) {
      out[i] = 0;
      continue;
    }
    bool edge = false;
    for (std::size_t a = 0; a < rank && !edge; ++a) {
      const std::size_t coord = (i / stride[a]) % mask.shape[a];
      if (coord == 0 || coord + 1 == mask.shape[a]) {
        edge = true;
      } else if (!mask[i - stride[a]] || !mask[i + stride[a]]) {
        edge = true;
      }
    }
    out[i] = edge ? 1 : 0;
  }
  return out;
}

std::vector<double> directed_surface_distances(const Mask& from, const Mask& to,
                                               std::span<const double> spacing) {
  require_same_shape(from, to, "surface distance");
  const Mask bf = boundary(from);
  const Mask bt = boundary(to);
  const auto d2 = kernels::squared_edt(bt.data, bt.shape, spacing);
  std::vector<double> out;
  for (std::size_t i = 0; i < bf.size(); ++i)
    if (bf[i]) out.push_back(std::sqrt(d2[i]));
  return out;
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("percentile rank must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

bool any(const Mask& m) {
  return std::any_of(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v != 0; });
}

}  // namespace

std::optional<double> hd95(const Mask& pred, const Mask& ref, std::span<const double> spacing,
                           Hd95Variant variant) {
  require_same_shape(pred, ref, "hd95");
  if (spacing.size() != pred.rank()) throw Error("hd95: spacing rank does not match shape");
  for (double s : spacing)
    if (!(s > 0.0)) throw Error("hd95: spacing must be positive");
  const bool p = any(pred), r = any(ref);
  if (!p && !r) return 0.0;
  if (p != r) return std::nullopt;
  auto forward = directed_surface_distances(pred, ref, spacing);
  auto backward = directed_surface_distances(ref, pred, spacing);
  if (variant == Hd95Variant::kMaxOfDirected)
    return std::max(percentile_linear(std::move(forward), 0.95),
                    percentile_linear(std::move(backward), 0.95));
  forward.insert(forward.end(), backward.begin(), backward.end());
  return percentile_linear(std::move(forward), 0.95);
}

namespace {

void finish_means(EvalReport& report) {
  double dice_sum = 0.0, hd_sum = 0.0;
  int present = 0, defined = 0;
  report.hd95_excluded = 0;
  for (const auto& s : report.per_class) {
    if (!s.present) continue;
    ++present;
    dice_sum += s.dice;
    if (s.hd95) {
      ++defined;
      hd_sum += *s.hd95;
    } else {
      ++report.hd95_excluded;
    }
  }
  report.mean_dice_fg = present ? dice_sum / present : 1.0;
  report.mean_hd95_fg = defined ? std::optional<double>(hd_sum / defined) : std::nullopt;
}

}  // namespace

EvalReport evaluate_pair(const LabelVolume& pred, const LabelVolume& ref,
                         const ClassCatalog& catalog, Hd95Variant variant) {
  require_same_shape(pred, ref, "evaluate_pair");
  pred.validate();
  ref.validate();
  if (pred.spacing != ref.spacing) throw Error("evaluate_pair: spacing mismatch");
  for (const auto* v : {&pred, &ref})
    for (std::uint8_t x : v->data)
      if (x != kBackgroundId && !catalog.contains(x))
        throw Error("label " + std::to_string(x) + " is not in the class catalog");

  const auto ids = catalog.ids();
  EvalReport report;
  report.per_class.resize(ids.size());
#pragma omp parallel for schedule(dynamic) if (ids.size() > 1)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(ids.size()); ++k) {
    const ClassId c = ids[static_cast<std::size_t>(k)];
    Mask p(pred.shape, pred.spacing), r(ref.shape, ref.spacing);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      p[i] = pred[i] == c;
      r[i] = ref[i] == c;
    }
    ClassScore& s = report.per_class[static_cast<std::size_t>(k)];
    s.class_id = c;
    s.name = catalog.name(c);
    s.dice = dice(p, r);
    s.hd95 = hd95(p, r, ref.spacing, variant);
    s.present = any(p) || any(r);
  }
  finish_means(report);
  return report;
}

EvalReport average_reports(const std::vector<EvalReport>& reports, const ClassCatalog& catalog) {
  EvalReport out;
  for (ClassId c : catalog.ids()) {
    ClassScore s;
    s.class_id = c;
    s.name = catalog.name(c);
    double dice_sum = 0.0, hd_sum = 0.0;
    int n_dice = 0, n_hd = 0;
    for (const auto& r : reports) {
      const ClassScore& x = r.per_class.at(c - 1);
      if (!x.present) continue;
      dice_sum += x.dice;
      ++n_dice;
      if (x.hd95) {
        hd_sum += *x.hd95;
        ++n_hd;
      }
    }
    s.present = n_dice > 0;
    if (n_dice) s.dice = dice_sum / n_dice;
    if (n_hd) {
      s.hd95 = hd_sum / n_hd;
    } else if (!s.present) {
      s.hd95 = 0.0;
    }
    out.per_class.push_back(s);
  }
  finish_means(out);
  return out;
}

std::string eval_csv(const EvalReport& report) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  out << "class,name,dice,hd95_mm\n";
  for (const auto& s : report.per_class)
    out << static_cast<int>(s.class_id) << ',' << s.name << ',' << num(s.dice) << ','
        << (s.hd95 ? num(*s.hd95) : std::string("undefined")) << '\n';
  out << "AVERAGE,AVERAGE," << num(report.mean_dice_fg) << ','
      << (report.mean_hd95_fg ? num(*report.mean_hd95_fg) : std::string("undefined")) << '\n';
  return out.str();
}

}  // namespace epibatch

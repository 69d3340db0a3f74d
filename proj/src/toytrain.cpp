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

#include "epibatch/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "epibatch/kernels.hpp"
#include "epibatch/refine.hpp"
#include "epibatch/rng.hpp"

namespace epibatch {

ToyModel::ToyModel(int num_classes, std::uint64_t init_seed) : num_classes_(num_classes) {
  if (num_classes < 1) throw Error("toy model needs at least one foreground class");
  params_.resize(b2() + static_cast<std::size_t>(channels()));
  Rng rng(init_seed);
  const double bound1 = 1.0 / std::sqrt(9.0);
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(kHidden * 9));
  for (std::size_t i = w1(); i < w2(); ++i) params_[i] = rng.uniform(-bound1, bound1);
  for (std::size_t i = w2(); i < params_.size(); ++i) params_[i] = rng.uniform(-bound2, bound2);
}

ToyModel::Activations ToyModel::forward(std::span<const double> images, int batch, int height,
                                        int width) const {
  Activations a;
  a.batch = batch;
  a.height = height;
  a.width = width;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (images.size() != plane * batch) throw Error("toy model: image buffer size mismatch");
  a.input.assign(images.begin(), images.end());

  const std::span<const double> p(params_);
  const kernels::ConvShape s1{1, kHidden, height, width};
  a.pre_relu.resize(static_cast<std::size_t>(batch) * kHidden * plane);
  kernels::conv3x3_forward(s1, batch, a.input, p.subspan(w1(), b1() - w1()),
                           p.subspan(b1(), kHidden), a.pre_relu);
  a.hidden.resize(a.pre_relu.size());
  for (std::size_t i = 0; i < a.pre_relu.size(); ++i) a.hidden[i] = std::max(0.0, a.pre_relu[i]);

  const kernels::ConvShape s2{kHidden, channels(), height, width};
  a.logits.resize(static_cast<std::size_t>(batch) * channels() * plane);
  kernels::conv3x3_forward(s2, batch, a.hidden, p.subspan(w2(), b2() - w2()),
                           p.subspan(b2(), static_cast<std::size_t>(channels())), a.logits);
  return a;
}

std::vector<double> ToyModel::backward(const Activations& a,
                                       std::span<const double> grad_logits) const {
  if (grad_logits.size() != a.logits.size()) throw Error("toy model: gradient size mismatch");
  std::vector<double> grad(params_.size(), 0.0);
  const std::span<const double> p(params_);
  const std::span<double> g(grad);

  const kernels::ConvShape s2{kHidden, channels(), a.height, a.width};
  std::vector<double> grad_hidden(a.hidden.size());
  kernels::conv3x3_backward(s2, a.batch, a.hidden, p.subspan(w2(), b2() - w2()), grad_logits,
                            grad_hidden, g.subspan(w2(), b2() - w2()),
                            g.subspan(b2(), static_cast<std::size_t>(channels())));
  for (std::size_t i = 0; i < grad_hidden.size(); ++i)
    if (a.pre_relu[i] <= 0.0) grad_hidden[i] = 0.0;

  const kernels::ConvShape s1{1, kHidden, a.height, a.width};
  kernels::conv3x3_backward(s1, a.batch, a.input, p.subspan(w1(), b1() - w1()), grad_hidden, {},
                            g.subspan(w1(), b1() - w1()), g.subspan(b1(), kHidden));
  return grad;
}

std::vector<double> softmax(std::span<const double> logits, int batch, int channels,
                            std::size_t pixels) {
  std::vector<double> out(logits.size());
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * channels * pixels;
    for (std::size_t px = 0; px < pixels; ++px) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < channels; ++k) mx = std::max(mx, logits[base + k * pixels + px]);
      double sum = 0.0;
      for (int k = 0; k < channels; ++k) {
        const double e = std::exp(logits[base + k * pixels + px] - mx);
        out[base + k * pixels + px] = e;
        sum += e;
      }
      for (int k = 0; k < channels; ++k) out[base + k * pixels + px] /= sum;
    }
  }
  return out;
}

LossResult combined_loss(std::span<const double> logits, std::span<const std::uint8_t> labels,
                         int batch, int channels, std::size_t pixels) {
  const std::size_t total = static_cast<std::size_t>(batch) * pixels;
  if (logits.size() != total * channels || labels.size() != total)
    throw Error("loss: buffer sizes do not match shape");
  for (std::uint8_t l : labels)
    if (l >= channels) throw Error("loss: label " + std::to_string(l) + " out of range");

  LossResult r;
  r.grad.resize(logits.size());
  std::vector<double> prob(logits.size());
  std::vector<double> inter(channels, 0.0), mass(channels, 0.0), ref(channels, 0.0);
  std::vector<bool> predicted(channels, false);
  const double inv_total = 1.0 / static_cast<double>(total);

  // Softmax, cross-entropy and the Dice sums in one pass.
  double ce = 0.0;
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * channels * pixels;
    const double* z = logits.data() + base;
    double* pr = prob.data() + base;
    const std::uint8_t* lab = labels.data() + static_cast<std::size_t>(n) * pixels;
    for (std::size_t px = 0; px < pixels; ++px) {
      int best = 0;
      double mx = z[px];
      for (int k = 1; k < channels; ++k)
        if (z[k * pixels + px] > mx) {
          mx = z[k * pixels + px];
          best = k;
        }
      double sum = 0.0;
      for (int k = 0; k < channels; ++k) {
        const double e = std::exp(z[k * pixels + px] - mx);
        pr[k * pixels + px] = e;
        sum += e;
      }
      const int t = lab[px];
      ce -= z[t * pixels + px] - mx - std::log(sum);
      for (int k = 0; k < channels; ++k) {
        const double pk = pr[k * pixels + px] / sum;
        pr[k * pixels + px] = pk;
        mass[k] += pk;
        r.grad[base + k * pixels + px] = (pk - (t == k ? 1.0 : 0.0)) * inv_total;
      }
      inter[t] += pr[t * pixels + px];
      ref[t] += 1.0;
      predicted[best] = true;
    }
  }
  r.cross_entropy = ce * inv_total;

  // Soft Dice over foreground classes seen in the reference or the argmax.
  std::vector<double> score(channels, 0.0), denom(channels, 0.0);
  std::vector<bool> used(channels, false);
  int used_count = 0;
  double score_sum = 0.0;
  for (int k = 1; k < channels; ++k) {
    if (ref[k] == 0.0 && !predicted[k]) continue;
    used[k] = true;
    ++used_count;
    denom[k] = mass[k] + ref[k] + kDiceSmoothing;
    score[k] = (2.0 * inter[k] + kDiceSmoothing) / denom[k];
    score_sum += score[k];
  }
  if (used_count > 0) {
    r.dice_loss = 1.0 - score_sum / used_count;
    // a_k = d(dice_loss)/d(p_k), chained through the softmax Jacobian.
    std::vector<double> base_a(channels, 0.0), hit_a(channels, 0.0);
    for (int k = 1; k < channels; ++k)
      if (used[k]) {
        base_a[k] = score[k] / denom[k] / used_count;
        hit_a[k] = -(2.0 - score[k]) / denom[k] / used_count;
      }
    for (int n = 0; n < batch; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * channels * pixels;
      const double* pr = prob.data() + base;
      double* g = r.grad.data() + base;
      const std::uint8_t* lab = labels.data() + static_cast<std::size_t>(n) * pixels;
      for (std::size_t px = 0; px < pixels; ++px) {
        const int t = lab[px];
        double dot = 0.0;
        for (int k = 0; k < channels; ++k)
          dot += pr[k * pixels + px] * (k == t ? hit_a[k] : base_a[k]);
        for (int k = 0; k < channels; ++k)
          g[k * pixels + px] += pr[k * pixels + px] * ((k == t ? hit_a[k] : base_a[k]) - dot);
      }
    }
  }
  r.value = r.cross_entropy + r.dice_loss;
  return r;
}

void optimizer_step(std::span<double> params, std::span<const double> grads, OptimState& state,
                    double lr, const AdamWConfig& c) {
  if (params.size() != grads.size()) throw Error("optimizer: gradient size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw Error("optimizer: non-finite gradient");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw Error("optimizer: state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] -= lr * c.weight_decay * params[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

ProtocolSpec parse_protocol(const std::string& s) {
  if (s == "epoch") return {Protocol::kEpoch, 0};
  if (s == "calibrated") return {Protocol::kCalibrated, 0};
  if (s.rfind("fixed:", 0) == 0) {
    const std::string n = s.substr(6);
    char* end = nullptr;
    const long v = std::strtol(n.c_str(), &end, 10);
    if (n.empty() || *end != '\0' || v < 1) throw Error("bad fixed budget in protocol '" + s + "'");
    return {Protocol::kFixed, v};
  }
  throw Error("unknown protocol '" + s + "' (expected epoch, calibrated or fixed:N)");
}

std::string to_string(const ProtocolSpec& p) {
  switch (p.kind) {
    case Protocol::kEpoch: return "epoch";
    case Protocol::kCalibrated: return "calibrated";
    case Protocol::kFixed: return "fixed:" + std::to_string(p.fixed_iterations);
  }
  return "?";
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Normalized images and labels of a slice list, held in memory.
struct SliceCache {
  int height = 0, width = 0;
  std::vector<std::size_t> ids;
  std::vector<double> images;
  std::vector<std::uint8_t> labels;
  std::unordered_map<std::size_t, std::size_t> pos;

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  void load(const Dataset& ds, const std::vector<std::size_t>& slice_ids) {
    for (std::size_t id : slice_ids) {
      const ImageVolume img = ds.image(id);
      const LabelVolume lab = ds.labels(id);
      if (img.rank() != 2 || !img.same_shape(lab))
        throw Error("training needs 2D slices with matching image and label shapes");
      if (ids.empty()) {
        height = static_cast<int>(img.shape[0]);
        width = static_cast<int>(img.shape[1]);
      } else if (img.shape[0] != static_cast<std::size_t>(height) ||
                 img.shape[1] != static_cast<std::size_t>(width)) {
        throw Error("training needs all slices to share one size");
      }
      pos[id] = ids.size();
      ids.push_back(id);
      for (float v : img.data) images.push_back(window_normalize(v));
      labels.insert(labels.end(), lab.data.begin(), lab.data.end());
    }
  }

  void gather(const std::vector<std::size_t>& batch, std::vector<double>& img,
              std::vector<std::uint8_t>& lab) const {
    img.clear();
    lab.clear();
    for (std::size_t id : batch) {
      const std::size_t k = pos.at(id) * plane();
      img.insert(img.end(), images.begin() + static_cast<std::ptrdiff_t>(k),
                 images.begin() + static_cast<std::ptrdiff_t>(k + plane()));
      lab.insert(lab.end(), labels.begin() + static_cast<std::ptrdiff_t>(k),
                 labels.begin() + static_cast<std::ptrdiff_t>(k + plane()));
    }
  }
};

EvaluationRow evaluate(const ToyModel& model, const SliceCache& val, int num_classes) {
  const int n = static_cast<int>(val.ids.size());
  const auto acts = model.forward(val.images, n, val.height, val.width);
  const std::size_t plane = val.plane();
  const int ch = model.channels();
  EvaluationRow row;
  row.val_loss = combined_loss(acts.logits, val.labels, n, ch, plane).value;

  std::vector<std::uint64_t> inter(ch, 0), pred(ch, 0), ref(ch, 0);
  for (int b = 0; b < n; ++b)
    for (std::size_t px = 0; px < plane; ++px) {
      const std::size_t base = static_cast<std::size_t>(b) * ch * plane + px;
      int best = 0;
      for (int k = 1; k < ch; ++k)
        if (acts.logits[base + k * plane] > acts.logits[base + best * plane]) best = k;
      const int truth = val.labels[static_cast<std::size_t>(b) * plane + px];
      ++pred[best];
      ++ref[truth];
      if (best == truth) ++inter[best];
    }
  double sum = 0.0;
  int present = 0;
  for (int k = 1; k <= num_classes; ++k) {
    const std::uint64_t d = pred[k] + ref[k];
    const double score = d == 0 ? 1.0 : 2.0 * static_cast<double>(inter[k]) / static_cast<double>(d);
    row.class_dice.push_back(score);
    if (d > 0) {
      sum += score;
      ++present;
    }
  }
  row.mean_dice_fg = present ? sum / present : 1.0;
  return row;
}

}  // namespace

std::string TrainLog::csv(const ClassCatalog& catalog) const {
  std::ostringstream out;
  out << "kind,iter,lr,train_loss,val_loss,mean_dice_fg";
  for (const auto& c : catalog.classes()) out << ",dice_" << c.name;
  out << '\n';
  const std::string blanks(catalog.size() + 2, ',');
  std::size_t e = 0;
  auto emit_eval = [&](const EvaluationRow& r) {
    out << "eval," << r.iter << ",,," << fmt(r.val_loss) << ',' << fmt(r.mean_dice_fg);
    for (double d : r.class_dice) out << ',' << fmt(d);
    out << '\n';
  };
  for (const auto& it : iterations) {
    out << "train," << it.iter << ',' << fmt(it.lr) << ',' << fmt(it.train_loss) << blanks
        << '\n';
    while (e < evaluations.size() && evaluations[e].iter == it.iter) emit_eval(evaluations[e++]);
  }
  while (e < evaluations.size()) emit_eval(evaluations[e++]);
  out << "# stop_reason=" << stop_reason << '\n';
  return out.str();
}

TrainResult train(const Dataset& dataset, const TrainSetup& setup) {
  TrainResult result;
  SplitSpec split = setup.split;
  split.seed = setup.seed;
  result.splits = make_splits(dataset.table(), split);
  if (result.splits.train.empty()) throw Error("training split is empty");
  if (result.splits.validation.empty()) throw Error("validation split is empty");

  auto train_table =
      std::make_shared<const SliceTable>(dataset.table().subset(result.splits.train));
  SamplerConfig sampler_cfg = setup.sampler;
  sampler_cfg.seed = setup.seed;
  Sampler sampler(train_table, sampler_cfg);
  result.iters_per_epoch = sampler.iterations_per_epoch();

  ScheduleSpec schedule = setup.schedule;
  schedule.iters_per_epoch = result.iters_per_epoch;
  switch (setup.protocol.kind) {
    case Protocol::kEpoch:
      result.plan = epoch_plan(schedule);
      break;
    case Protocol::kFixed:
      result.plan =
          fixed_budget(setup.protocol.fixed_iterations, schedule.base_lr, setup.fixed_eval_every);
      break;
    case Protocol::kCalibrated:
      result.calibration =
          calibrate(schedule, setup.calibration_reference_ipe, result.iters_per_epoch);
      result.plan = calibrated_plan(schedule, *result.calibration);
      break;
  }

  SliceCache train_cache, val_cache;
  train_cache.load(dataset, result.splits.train);
  val_cache.load(dataset, result.splits.validation);

  const int num_classes = static_cast<int>(dataset.catalog().size());
  ToyModel model(num_classes, derive_seed(setup.seed, "init"));
  OptimState optim;
  EarlyStopState stop;
  TrainLog& log = result.log;
  log.stop_reason = "max_iters";

  std::vector<double> images;
  std::vector<std::uint8_t> labels;
  const std::size_t plane = train_cache.plane();
  for (long it = 0; it < result.plan.max_iters; ++it) {
    const double lr = result.plan.lr_at(it);
    const Batch batch = sampler.next_batch();
    train_cache.gather(batch.slice_ids, images, labels);
    const int n = static_cast<int>(batch.slice_ids.size());
    const auto acts = model.forward(images, n, train_cache.height, train_cache.width);
    const LossResult loss = combined_loss(acts.logits, labels, n, model.channels(), plane);
    const auto grads = model.backward(acts, loss.grad);
    optimizer_step(model.params(), grads, optim, lr, setup.optim);
    log.iterations.push_back({it, lr, loss.value});

    if ((it + 1) % result.plan.eval_every != 0) continue;
    EvaluationRow row = evaluate(model, val_cache, num_classes);
    row.iter = it;
    row.index = static_cast<long>(log.evaluations.size());
    if (log.best_iter < 0 || row.mean_dice_fg > log.best_mean_dice) {
      log.best_mean_dice = row.mean_dice_fg;
      log.best_iter = it;
    }
    log.evaluations.push_back(row);
    if (result.plan.patience_evals > 0) {
      stop = early_stop_update(stop, result.plan.patience_evals, row.index, row.mean_dice_fg);
      if (stop.stopped) {
        log.stop_reason = "early_stop";
        break;
      }
    }
  }
  result.params = model.params();
  return result;
}

std::vector<std::uint8_t> encode_params(std::span<const double> params) {
  std::vector<std::uint8_t> out(8 + 4 * params.size());
  const std::uint64_t n = params.size();
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(n >> (8 * i));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const float f = static_cast<float>(params[k]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out[8 + 4 * k + i] = static_cast<std::uint8_t>(bits >> (8 * i));
  }
  return out;
}

std::vector<float> decode_params(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw Error("params: truncated header");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if (bytes.size() != 8 + 4 * n) throw Error("params: size mismatch");
  std::vector<float> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[8 + 4 * k + i]) << (8 * i);
    std::memcpy(&out[k], &bits, 4);
  }
  return out;
}

}  // namespace epibatch

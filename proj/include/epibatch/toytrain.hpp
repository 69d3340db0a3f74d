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

#ifndef EPIBATCH_TOYTRAIN_HPP_
#define EPIBATCH_TOYTRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epibatch/budget.hpp"
#include "epibatch/corpus.hpp"
#include "epibatch/samplers.hpp"

namespace epibatch {

/// Two 3x3 convolutions: 1 -> 8 channels with ReLU, then 8 -> C+1 logits.
/// Parameters live in one flat vector: [w1 | b1 | w2 | b2].
class ToyModel {
 public:
  static constexpr int kHidden = 8;

  ToyModel(int num_classes, std::uint64_t init_seed);

  int num_classes() const { return num_classes_; }
  int channels() const { return num_classes_ + 1; }
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  /// Activations kept for the backward pass. Layouts are [n][channel][pixel].
  struct Activations {
    int batch = 0, height = 0, width = 0;
    std::vector<double> input;
    std::vector<double> pre_relu;
    std::vector<double> hidden;
    std::vector<double> logits;
  };

  Activations forward(std::span<const double> images, int batch, int height, int width) const;

  /// Parameter gradient of an objective whose logit gradient is `grad_logits`.
  std::vector<double> backward(const Activations& acts, std::span<const double> grad_logits) const;

 private:
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return kHidden * 9; }
  std::size_t w2() const { return b1() + kHidden; }
  std::size_t b2() const { return w2() + static_cast<std::size_t>(channels()) * kHidden * 9; }

  int num_classes_;
  std::vector<double> params_;
};

/// Per-pixel softmax over channels; layout [n][channel][pixel].
std::vector<double> softmax(std::span<const double> logits, int batch, int channels,
                            std::size_t pixels);

struct LossResult {
  double value = 0.0;
  double cross_entropy = 0.0;
  double dice_loss = 0.0;
  std::vector<double> grad;  // d value / d logits
};

inline constexpr double kDiceSmoothing = 1e-5;

/// Cross-entropy (mean over pixels) plus soft Dice loss, weighted 1:1.
/// Dice is pooled over the batch and averaged over foreground classes that
/// appear in the reference or in the argmax prediction.
LossResult combined_loss(std::span<const double> logits, std::span<const std::uint8_t> labels,
                         int batch, int channels, std::size_t pixels);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct OptimState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Bias-corrected Adam step with decoupled weight decay:
/// p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps).
void optimizer_step(std::span<double> params, std::span<const double> grads, OptimState& state,
                    double lr, const AdamWConfig& config = {});

enum class Protocol { kEpoch, kFixed, kCalibrated };

/// Parses "epoch", "calibrated" or "fixed:N".
struct ProtocolSpec {
  Protocol kind = Protocol::kEpoch;
  long fixed_iterations = 3000;
};
ProtocolSpec parse_protocol(const std::string& s);
std::string to_string(const ProtocolSpec& p);

struct TrainSetup {
  SamplerConfig sampler;  // its seed is overwritten with `seed`
  ProtocolSpec protocol;
  ScheduleSpec schedule;  // epoch units; iters_per_epoch comes from the sampler
  long calibration_reference_ipe = 500;
  long fixed_eval_every = 100;
  SplitSpec split;  // its seed is overwritten with `seed`
  AdamWConfig optim;
  std::uint64_t seed = 0;
};

struct IterationRow {
  long iter = 0;
  double lr = 0.0;
  double train_loss = 0.0;
};

struct EvaluationRow {
  long iter = 0;  // last optimizer step before the evaluation
  long index = 0;
  double val_loss = 0.0;
  std::vector<double> class_dice;  // catalog order
  double mean_dice_fg = 0.0;
};

struct TrainLog {
  std::vector<IterationRow> iterations;
  std::vector<EvaluationRow> evaluations;
  std::string stop_reason;
  double best_mean_dice = 0.0;
  long best_iter = -1;

  long steps() const { return static_cast<long>(iterations.size()); }
  std::string csv(const ClassCatalog& catalog) const;
};

struct TrainResult {
  TrainLog log;
  std::vector<double> params;
  RunPlan plan;
  long iters_per_epoch = 0;
  std::optional<CalibratedSchedule> calibration;
  Splits splits;
};

TrainResult train(const Dataset& dataset, const TrainSetup& setup);

/// u64 little-endian length, then the parameters as little-endian f32.
std::vector<std::uint8_t> encode_params(std::span<const double> params);
std::vector<float> decode_params(const std::vector<std::uint8_t>& bytes);

}  // namespace epibatch

#endif  // EPIBATCH_TOYTRAIN_HPP_

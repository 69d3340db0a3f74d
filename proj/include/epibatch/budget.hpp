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

#ifndef EPIBATCH_BUDGET_HPP_
#define EPIBATCH_BUDGET_HPP_

#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

namespace epibatch {

enum class StepUnit { kEpoch, kIteration };

/// Epoch-denominated training schedule (MultiStep decay, early stopping
/// patience, epoch cap) for a sampler with `iters_per_epoch` steps per epoch.
struct ScheduleSpec {
  double base_lr = 1e-4;
  std::vector<long> milestones{30, 45};
  double gamma = 0.1;
  long patience_epochs = 20;
  long max_epochs = 200;
  long iters_per_epoch = 1;

  void validate() const;
};

/// base_lr * gamma^(number of milestones <= step). With kIteration the
/// milestones are converted through iters_per_epoch first.
double lr_at(const ScheduleSpec& spec, long step, StepUnit unit);

/// round(num / den) with halves rounded up; num >= 0, den >= 1.
long div_round_half_up(long num, long den);

/// An epoch schedule re-expressed so that its iteration counts match a
/// reference sampler's, then converted back into the target sampler's epochs.
struct CalibratedSchedule {
  long reference_ipe = 0;
  long target_ipe = 0;
  std::vector<long> milestone_iters;
  long patience_iters = 0;
  long max_iters = 0;
  std::vector<long> milestone_epochs;
  long patience_epochs = 0;
  long max_epochs = 0;
  std::vector<std::string> warnings;
};

CalibratedSchedule calibrate(const ScheduleSpec& spec, long reference_ipe, long target_ipe);

nlohmann::ordered_json to_json(const CalibratedSchedule& c);

struct EarlyStopState {
  double best_metric = -std::numeric_limits<double>::infinity();
  long best_step = -1;
  long last_step = -1;
  long steps_since_improve = 0;
  bool stopped = false;
};

/// Records one evaluation. Only a strictly greater metric counts as an
/// improvement; the state stops once steps_since_improve reaches patience.
EarlyStopState early_stop_update(const EarlyStopState& state, long patience, long step,
                                 double metric);

/// Iteration-level plan consumed by the trainer. Every protocol (epoch based,
/// calibrated, fixed budget) lowers to this.
struct RunPlan {
  std::string protocol;
  double base_lr = 1e-4;
  double gamma = 0.1;
  std::vector<long> milestone_iters;
  long max_iters = 0;
  long eval_every = 1;
  long patience_evals = 0;  // 0 disables early stopping

  double lr_at(long iter) const;
  long evaluations() const { return max_iters / eval_every; }
  friend bool operator==(const RunPlan&, const RunPlan&) = default;
};

/// Constant learning rate, no milestones, no early stopping, hard stop after
/// `iterations` steps (last index iterations - 1).
RunPlan fixed_budget(long iterations, double lr = 1e-4, long eval_every = 100);

/// Epoch schedule lowered to iterations for a sampler with
/// spec.iters_per_epoch steps per epoch.
RunPlan epoch_plan(const ScheduleSpec& spec);

/// Calibrated schedule lowered to iterations in the target sampler's epochs.
RunPlan calibrated_plan(const ScheduleSpec& spec, const CalibratedSchedule& calibrated);

nlohmann::ordered_json to_json(const RunPlan& plan);
RunPlan run_plan_from_json(const nlohmann::ordered_json& j);

}  // namespace epibatch

#endif  // EPIBATCH_BUDGET_HPP_

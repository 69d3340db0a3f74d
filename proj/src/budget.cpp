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

#include "epibatch/budget.hpp"

#include <cmath>
#include <cstdio>

#include "epibatch/error.hpp"

namespace epibatch {

void ScheduleSpec::validate() const {
  if (!(base_lr > 0.0)) throw Error("base_lr must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gamma must lie in (0, 1)");
  if (patience_epochs < 1) throw Error("patience must be at least 1");
  if (max_epochs < 1) throw Error("max_epochs must be at least 1");
  if (iters_per_epoch < 1) throw Error("iters_per_epoch must be at least 1");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] < 0) throw Error("milestones must be non-negative");
    if (i > 0 && milestones[i] <= milestones[i - 1])
      throw Error("milestones must be strictly increasing");
  }
}

namespace {

double multistep(double base, double gamma, const std::vector<long>& milestones, long step) {
  double lr = base;
  for (long m : milestones)
    if (m <= step) lr *= gamma;
  return lr;
}

}  // namespace

double lr_at(const ScheduleSpec& spec, long step, StepUnit unit) {
  spec.validate();
  if (step < 0) throw Error("step must be non-negative");
  if (unit == StepUnit::kEpoch) return multistep(spec.base_lr, spec.gamma, spec.milestones, step);
  std::vector<long> iters;
  for (long m : spec.milestones) iters.push_back(m * spec.iters_per_epoch);
  return multistep(spec.base_lr, spec.gamma, iters, step);
}

long div_round_half_up(long num, long den) {
  if (den < 1 || num < 0) throw Error("div_round_half_up needs num >= 0 and den >= 1");
  return (2 * num + den) / (2 * den);
}

CalibratedSchedule calibrate(const ScheduleSpec& spec, long reference_ipe, long target_ipe) {
  spec.validate();
  if (reference_ipe < 1 || target_ipe < 1) throw Error("iterations per epoch must be at least 1");
  CalibratedSchedule c;
  c.reference_ipe = reference_ipe;
  c.target_ipe = target_ipe;
  for (long m : spec.milestones) {
    c.milestone_iters.push_back(m * reference_ipe);
    c.milestone_epochs.push_back(div_round_half_up(m * reference_ipe, target_ipe));
  }
  c.patience_iters = spec.patience_epochs * reference_ipe;
  c.patience_epochs = div_round_half_up(c.patience_iters, target_ipe);
  c.max_iters = spec.max_epochs * reference_ipe;
  c.max_epochs = div_round_half_up(c.max_iters, target_ipe);

  if (c.max_epochs * target_ipe != c.max_iters) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "max_epochs: %ld iterations / %ld per epoch = %.2f, rounded half-up to %ld "
                  "epochs (%ld iterations), not an exact match of the reference budget",
                  c.max_iters, target_ipe,
                  static_cast<double>(c.max_iters) / static_cast<double>(target_ipe),
                  c.max_epochs, c.max_epochs * target_ipe);
    c.warnings.emplace_back(buf);
  }
  return c;
}

nlohmann::ordered_json to_json(const CalibratedSchedule& c) {
  nlohmann::ordered_json j;
  j["reference_ipe"] = c.reference_ipe;
  j["target_ipe"] = c.target_ipe;
  j["milestone_iters"] = c.milestone_iters;
  j["patience_iters"] = c.patience_iters;
  j["max_iters"] = c.max_iters;
  j["derived_epochs"] = {{"milestones", c.milestone_epochs},
                         {"patience", c.patience_epochs},
                         {"max", c.max_epochs}};
  j["rounding"] = "round-half-up";
  j["warnings"] = c.warnings;
  return j;
}

EarlyStopState early_stop_update(const EarlyStopState& state, long patience, long step,
                                 double metric) {
  if (std::isnan(metric) || !std::isfinite(metric)) throw Error("early stopping metric is not finite");
  if (patience < 1) throw Error("patience must be at least 1");
  if (step <= state.last_step) throw Error("evaluation steps must be strictly increasing");
  EarlyStopState next = state;
  next.last_step = step;
  if (metric > state.best_metric) {
    next.best_metric = metric;
    next.best_step = step;
  }
  next.steps_since_improve = step - next.best_step;
  next.stopped = state.stopped || next.steps_since_improve >= patience;
  return next;
}

double RunPlan::lr_at(long iter) const { return multistep(base_lr, gamma, milestone_iters, iter); }

RunPlan fixed_budget(long iterations, double lr, long eval_every) {
  if (iterations < 1) throw Error("fixed budget needs at least one iteration");
  if (!(lr > 0.0)) throw Error("learning rate must be positive");
  if (eval_every < 1) throw Error("eval_every must be at least 1");
  RunPlan p;
  p.protocol = "fixed";
  p.base_lr = lr;
  p.gamma = 1.0;
  p.max_iters = iterations;
  p.eval_every = eval_every;
  p.patience_evals = 0;
  return p;
}

RunPlan epoch_plan(const ScheduleSpec& spec) {
  spec.validate();
  RunPlan p;
  p.protocol = "epoch";
  p.base_lr = spec.base_lr;
  p.gamma = spec.gamma;
  for (long m : spec.milestones) p.milestone_iters.push_back(m * spec.iters_per_epoch);
  p.max_iters = spec.max_epochs * spec.iters_per_epoch;
  p.eval_every = spec.iters_per_epoch;
  p.patience_evals = spec.patience_epochs;
  return p;
}

RunPlan calibrated_plan(const ScheduleSpec& spec, const CalibratedSchedule& c) {
  spec.validate();
  RunPlan p;
  p.protocol = "calibrated";
  p.base_lr = spec.base_lr;
  p.gamma = spec.gamma;
  for (long m : c.milestone_epochs) p.milestone_iters.push_back(m * c.target_ipe);
  p.max_iters = c.max_epochs * c.target_ipe;
  p.eval_every = c.target_ipe;
  p.patience_evals = c.patience_epochs;
  return p;
}

nlohmann::ordered_json to_json(const RunPlan& plan) {
  nlohmann::ordered_json j;
  j["protocol"] = plan.protocol;
  j["base_lr"] = plan.base_lr;
  j["gamma"] = plan.gamma;
  j["milestone_iters"] = plan.milestone_iters;
  j["max_iters"] = plan.max_iters;
  j["eval_every"] = plan.eval_every;
  j["patience_evals"] = plan.patience_evals;
  return j;
}

RunPlan run_plan_from_json(const nlohmann::ordered_json& j) {
  try {
    RunPlan p;
    p.protocol = j.at("protocol").get<std::string>();
    p.base_lr = j.at("base_lr").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.milestone_iters = j.at("milestone_iters").get<std::vector<long>>();
    p.max_iters = j.at("max_iters").get<long>();
    p.eval_every = j.at("eval_every").get<long>();
    p.patience_evals = j.at("patience_evals").get<long>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed run plan: ") + e.what());
  }
}

}  // namespace epibatch

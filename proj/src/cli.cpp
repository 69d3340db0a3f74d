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

#include "epibatch/cli.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "epibatch/budget.hpp"
#include "epibatch/corpus.hpp"
#include "epibatch/error.hpp"
#include "epibatch/kernels.hpp"
#include "epibatch/manifest.hpp"
#include "epibatch/metrics.hpp"
#include "epibatch/payload.hpp"
#include "epibatch/refine.hpp"
#include "epibatch/samplers.hpp"
#include "epibatch/synth.hpp"
#include "epibatch/toytrain.hpp"

namespace epibatch::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct UsageError : Error {
  using Error::Error;
};

// Flag values that fail to parse are usage errors, not run failures.
template <typename F>
auto parse_flag(F&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

const std::set<std::string> kPathFlags = {"--data", "--out",  "--image", "--masks",
                                          "--config", "--pred", "--ref"};

// An output directory that only appears under its final name once complete.
class StagedDir {
 public:
  explicit StagedDir(const fs::path& target) : target_(fs::absolute(target).lexically_normal()) {
    if (fs::exists(target_) && !(fs::is_directory(target_) && fs::is_empty(target_)))
      throw Error("output directory " + target_.string() + " already exists and is not empty");
    staging_ = target_.parent_path() / ("." + target_.filename().string() + ".partial");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    if (fs::exists(target_)) fs::remove(target_);
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

std::vector<std::string> resolve_paths(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    const auto eq = a.find('=');
    if (eq != std::string::npos && kPathFlags.contains(a.substr(0, eq))) {
      out.push_back(a.substr(0, eq + 1) +
                    fs::absolute(a.substr(eq + 1)).lexically_normal().string());
    } else if (kPathFlags.contains(a) && i + 1 < args.size()) {
      out.push_back(a);
      out.push_back(fs::absolute(args[++i]).lexically_normal().string());
    } else {
      out.push_back(a);
    }
  }
  return out;
}

void add_inputs(RunManifest& m, const fs::path& path) {
  const fs::path abs = fs::absolute(path).lexically_normal();
  if (fs::is_directory(abs)) {
    for (const auto& [rel, digest] : digest_tree(abs)) m.inputs[(abs / rel).string()] = digest;
  } else {
    m.inputs[abs.string()] = sha256_file(abs);
  }
}

void finish(StagedDir& stage, RunManifest m) {
  m.outputs = digest_tree(stage.path(), {kManifestName});
  write_manifest(stage.path(), m);
  stage.commit();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

ojson to_json(const SamplerConfig& c) {
  ojson j;
  j["strategy"] = to_string(c.strategy);
  if (c.strategy == Strategy::kEpisodic) {
    j["n_classes"] = c.n_classes;
    j["n_support"] = c.n_support;
    j["n_query"] = c.n_query;
    j["episodes_per_epoch"] = c.episodes_per_epoch;
    j["supervision"] = to_string(c.supervision);
  } else {
    j["batch_size"] = c.batch_size;
    if (c.strategy == Strategy::kRandom) j["permutation"] = c.permutation;
  }
  j["seed"] = c.seed;
  return j;
}

struct SamplerFlags {
  std::string strategy = "random";
  std::string supervision = "queries";
  SamplerConfig cfg;
  std::vector<CLI::Option*> pool_only;
  std::vector<CLI::Option*> episodic_only;
  CLI::Option* permutation = nullptr;

  void add(CLI::App* app) {
    app->add_option("--strategy", strategy, "random, weighted or episodic")
        ->capture_default_str();
    pool_only.push_back(
        app->add_option("--batch-size", cfg.batch_size, "slices per batch (random, weighted)")
            ->capture_default_str());
    permutation = app->add_flag("--permutation", cfg.permutation,
                                "draw random batches from per-epoch permutations");
    episodic_only.push_back(
        app->add_option("--n-classes", cfg.n_classes, "target classes per episode"));
    episodic_only.push_back(
        app->add_option("--n-support", cfg.n_support, "support slices per class"));
    episodic_only.push_back(app->add_option("--n-query", cfg.n_query, "query slices per class"));
    episodic_only.push_back(
        app->add_option("--episodes", cfg.episodes_per_epoch, "episodes per epoch"));
    episodic_only.push_back(
        app->add_option("--supervision", supervision, "queries or supports"));
  }

  SamplerConfig resolve(std::uint64_t seed) const {
    SamplerConfig c = cfg;
    c.strategy = parse_flag([&] { return parse_strategy(strategy); });
    c.supervision = parse_flag([&] { return parse_supervision(supervision); });
    c.seed = seed;
    if (c.strategy == Strategy::kEpisodic) {
      for (const CLI::Option* o : pool_only)
        if (o->count()) throw UsageError(o->get_name() + " does not apply to episodic sampling");
    } else {
      for (const CLI::Option* o : episodic_only)
        if (o->count()) throw UsageError(o->get_name() + " only applies to episodic sampling");
    }
    if (permutation->count() && c.strategy != Strategy::kRandom)
      throw UsageError("--permutation only applies to random sampling");
    c.validate();
    return c;
  }
};

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

// ---- synth ----

struct SynthArgs {
  std::string preset = "paperlike";
  int patients = 40;
  int slices = 20;
  int height = 16;
  int width = 16;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  if (a.preset != "paperlike") throw UsageError("unknown preset '" + a.preset + "'");
  SynthSpec spec = paperlike_preset(a.patients, a.seed);
  spec.slices_per_patient = a.slices;
  spec.height = a.height;
  spec.width = a.width;
  spec.validate();

  StagedDir stage(a.out);
  const SynthSummary summary = generate(spec, stage.path());
  RunManifest m;
  m.command = "synth";
  m.argv = argv;
  m.config = to_json(spec);
  m.config["preset"] = a.preset;
  m.seed = a.seed;
  finish(stage, m);

  ojson j;
  j["slices"] = summary.slices;
  j["prevalence"] = ojson::object();
  for (const auto& c : spec.classes) j["prevalence"][c.name] = summary.realized_prevalence.at(c.id);
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---- sample / audit ----

struct SampleArgs {
  std::string data;
  std::uint64_t seed = 0;
  long iters = 1;
  SamplerFlags sampler;
};

int cmd_sample(const SampleArgs& a, std::ostream& out, std::ostream& err) {
  const SamplerConfig cfg = a.sampler.resolve(a.seed);
  if (a.iters < 0) throw UsageError("--iters must be non-negative");
  const Dataset ds = load_dataset(a.data);
  Sampler sampler(std::make_shared<const SliceTable>(ds.table()), cfg);
  print_warnings(sampler.warnings(), err);
  for (long i = 0; i < a.iters; ++i) out << batch_json_line(sampler.next_batch(), i) << '\n';
  return kExitOk;
}

struct AuditArgs {
  std::string data;
  std::uint64_t seed = 0;
  int epochs = 1;
  std::string format = "csv";
  SamplerFlags sampler;
};

int cmd_audit(const AuditArgs& a, std::ostream& out, std::ostream& err) {
  const SamplerConfig cfg = a.sampler.resolve(a.seed);
  if (a.epochs < 1) throw UsageError("--epochs must be at least 1");
  const Dataset ds = load_dataset(a.data);
  Sampler sampler(std::make_shared<const SliceTable>(ds.table()), cfg);
  print_warnings(sampler.warnings(), err);
  const auto rows = exposure_audit(sampler, a.epochs);
  if (a.format == "csv") {
    out << exposure_csv(rows, ds.catalog());
    return kExitOk;
  }
  ojson j;
  j["sampler"] = to_json(cfg);
  j["iters_per_epoch"] = sampler.iterations_per_epoch();
  j["rows"] = ojson::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"epoch", r.epoch},
                         {"class", r.class_id},
                         {"name", ds.catalog().name(r.class_id)},
                         {"target_count", r.target_count},
                         {"presence_count", r.presence_count}});
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---- calibrate ----

struct CalibrateArgs {
  ScheduleSpec spec;
  long ref_ipe = 500;
  long target_ipe = 0;
};

int cmd_calibrate(const CalibrateArgs& a, std::ostream& out, std::ostream& err) {
  const CalibratedSchedule c = calibrate(a.spec, a.ref_ipe, a.target_ipe);
  print_warnings(c.warnings, err);
  out << to_json(c).dump(2) << '\n';
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string protocol = "epoch";
  std::uint64_t seed = 0;
  std::string out;
  SamplerFlags sampler;
  ScheduleSpec schedule;
  long ref_ipe = 500;
  long eval_every = 100;
  double dev_fraction = 0.85;
  int folds = 5;
  int fold = 0;
  double subsample = 0.0;
  CLI::Option* ref_ipe_opt = nullptr;
  CLI::Option* eval_every_opt = nullptr;
  CLI::Option* subsample_opt = nullptr;
};

ojson loss_metadata() {
  ojson j;
  j["terms"] = "cross_entropy_mean + soft_dice";
  j["dice_smoothing"] = kDiceSmoothing;
  j["dice_classes"] = "foreground only, pooled over the batch";
  j["dice_skip"] = "classes absent from both the reference and the argmax prediction";
  return j;
}

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  TrainSetup setup;
  setup.seed = a.seed;
  setup.sampler = a.sampler.resolve(a.seed);
  setup.protocol = parse_flag([&] { return parse_protocol(a.protocol); });
  if (a.ref_ipe_opt->count() && setup.protocol.kind != Protocol::kCalibrated)
    throw UsageError("--ref-ipe requires --protocol calibrated");
  if (a.eval_every_opt->count() && setup.protocol.kind != Protocol::kFixed)
    throw UsageError("--eval-every requires --protocol fixed:N");
  setup.schedule = a.schedule;
  setup.schedule.validate();
  setup.calibration_reference_ipe = a.ref_ipe;
  setup.fixed_eval_every = a.eval_every;
  setup.split.dev_fraction = a.dev_fraction;
  setup.split.folds = a.folds;
  setup.split.fold = a.fold;
  if (a.subsample_opt->count()) setup.split.subsample_fraction = a.subsample;

  const Dataset ds = load_dataset(a.data);
  StagedDir stage(a.out);
  const TrainResult r = train(ds, setup);
  if (r.calibration) print_warnings(r.calibration->warnings, err);

  write_text(stage.path() / "log.csv", r.log.csv(ds.catalog()));
  write_file(stage.path() / "params.bin", encode_params(r.params));

  ojson schedule;
  schedule["protocol"] = to_string(setup.protocol);
  schedule["iters_per_epoch"] = r.iters_per_epoch;
  schedule["plan"] = to_json(r.plan);
  schedule["calibration"] = r.calibration ? to_json(*r.calibration) : ojson(nullptr);
  schedule["loss"] = loss_metadata();
  schedule["optimizer"] = {{"name", "adamw"},
                           {"beta1", setup.optim.beta1},
                           {"beta2", setup.optim.beta2},
                           {"eps", setup.optim.eps},
                           {"weight_decay", setup.optim.weight_decay}};
  write_text(stage.path() / "schedule.json", schedule.dump(2) + "\n");

  ojson summary;
  summary["strategy"] = to_string(setup.sampler.strategy);
  summary["protocol"] = to_string(setup.protocol);
  summary["seed"] = a.seed;
  summary["steps"] = r.log.steps();
  summary["evaluations"] = r.log.evaluations.size();
  summary["stop_reason"] = r.log.stop_reason;
  summary["best_mean_dice_fg"] = r.log.best_mean_dice;
  summary["best_iter"] = r.log.best_iter;
  summary["final_mean_dice_fg"] =
      r.log.evaluations.empty() ? ojson(nullptr) : ojson(r.log.evaluations.back().mean_dice_fg);
  summary["train_slices"] = r.splits.train.size();
  summary["validation_slices"] = r.splits.validation.size();
  summary["train_patients"] = r.splits.train_patients;
  summary["validation_patients"] = r.splits.validation_patients;
  write_text(stage.path() / "summary.json", summary.dump(2) + "\n");

  RunManifest m;
  m.command = "train";
  m.argv = argv;
  m.seed = a.seed;
  m.config["sampler"] = to_json(setup.sampler);
  m.config["protocol"] = to_string(setup.protocol);
  m.config["schedule"] = {{"base_lr", setup.schedule.base_lr},
                          {"milestones", setup.schedule.milestones},
                          {"gamma", setup.schedule.gamma},
                          {"patience_epochs", setup.schedule.patience_epochs},
                          {"max_epochs", setup.schedule.max_epochs}};
  m.config["reference_ipe"] = setup.calibration_reference_ipe;
  m.config["fixed_eval_every"] = setup.fixed_eval_every;
  m.config["split"] = {{"dev_fraction", setup.split.dev_fraction},
                       {"folds", setup.split.folds},
                       {"fold", setup.split.fold},
                       {"subsample_fraction", setup.split.subsample_fraction
                                                  ? ojson(*setup.split.subsample_fraction)
                                                  : ojson(nullptr)}};
  m.config["loss"] = loss_metadata();
  add_inputs(m, a.data);
  finish(stage, m);

  out << summary.dump(2) << '\n';
  return kExitOk;
}

// ---- eval ----

struct EvalArgs {
  std::string pred;
  std::string ref;
  std::string format = "csv";
  std::string hd95 = "union";
};

ojson hd95_metadata(Hd95Variant v) {
  ojson j;
  j["hd95_variant"] = v == Hd95Variant::kUnion ? "percentile of pooled two-way distances"
                                               : "max of directed percentiles";
  j["percentile"] = "95th, linear interpolation between closest ranks";
  j["boundary"] = "face adjacency, array edge counts as boundary";
  j["both_empty"] = "dice 1, hd95 0";
  j["one_empty"] = "hd95 undefined, excluded from the average";
  return j;
}

template <typename T>
Volume<T> stack(const std::vector<Volume<T>>& slices) {
  Volume<T> v;
  v.shape = {slices.size()};
  v.shape.insert(v.shape.end(), slices.front().shape.begin(), slices.front().shape.end());
  v.spacing = {1.0};
  v.spacing.insert(v.spacing.end(), slices.front().spacing.begin(), slices.front().spacing.end());
  for (const auto& s : slices) v.data.insert(v.data.end(), s.data.begin(), s.data.end());
  return v;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  Hd95Variant variant;
  if (a.hd95 == "union") variant = Hd95Variant::kUnion;
  else if (a.hd95 == "max-directed") variant = Hd95Variant::kMaxOfDirected;
  else throw UsageError("--hd95 must be union or max-directed");

  const Dataset ref = load_dataset(a.ref);
  std::map<std::string, std::vector<std::size_t>> by_patient;
  for (const auto& rec : ref.table().records()) by_patient[rec.patient_id].push_back(rec.slice_id);

  std::vector<EvalReport> reports;
  for (auto& [patient, ids] : by_patient) {
    std::sort(ids.begin(), ids.end());
    std::vector<LabelVolume> p, r;
    for (std::size_t id : ids) {
      LabelVolume rv = ref.labels(id);
      const fs::path pred_path = fs::path(a.pred) / fs::path(ref.files(id).label_file).filename();
      if (!fs::exists(pred_path)) throw Error("missing prediction " + pred_path.string());
      LabelVolume pv = read_labels(pred_path);
      pv.spacing = rv.spacing;
      if (!pv.same_shape(rv)) throw Error("shape mismatch for " + pred_path.string());
      p.push_back(std::move(pv));
      r.push_back(std::move(rv));
    }
    const bool stackable =
        r.front().rank() == 2 &&
        std::all_of(r.begin(), r.end(), [&](const auto& v) { return v.same_shape(r.front()); });
    if (stackable) {
      reports.push_back(evaluate_pair(stack(p), stack(r), ref.catalog(), variant));
    } else {
      for (std::size_t k = 0; k < r.size(); ++k)
        reports.push_back(evaluate_pair(p[k], r[k], ref.catalog(), variant));
    }
  }
  const EvalReport avg = average_reports(reports, ref.catalog());

  if (a.format == "csv") {
    const ojson meta = hd95_metadata(variant);
    for (const auto& [k, v] : meta.items())
      err << "# " << k << ": " << v.get<std::string>() << '\n';
    out << eval_csv(avg);
    return kExitOk;
  }
  ojson j;
  j["cases"] = reports.size();
  j["metadata"] = hd95_metadata(variant);
  j["classes"] = ojson::array();
  for (const auto& c : avg.per_class)
    j["classes"].push_back({{"class", c.class_id},
                            {"name", c.name},
                            {"dice", c.dice},
                            {"hd95_mm", c.hd95 ? ojson(*c.hd95) : ojson(nullptr)}});
  j["mean_dice_fg"] = avg.mean_dice_fg;
  j["mean_hd95_fg"] = avg.mean_hd95_fg ? ojson(*avg.mean_hd95_fg) : ojson(nullptr);
  j["hd95_excluded"] = avg.hd95_excluded;
  out << j.dump(2) << '\n';
  return kExitOk;
}

// ---- refine ----

struct RefineArgs {
  std::string image;
  std::string masks;
  std::string config;
  std::string out;
};

int cmd_refine(const RefineArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  RefineConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error("cannot open config " + a.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error("config " + a.config + " is not valid JSON: " + e.what());
    }
    cfg = refine_config_from_json(j);
  }
  cfg.validate();

  const fs::path dir(a.masks);
  auto mask = [&](const char* name) {
    const fs::path p = dir / (std::string(name) + ".seg");
    if (!fs::exists(p)) throw Error("missing mask " + p.string());
    return read_labels(p);
  };
  RefineInputs in;
  in.image = read_image(a.image);
  for (const char* g : {"esm", "pem", "psm", "qlm", "ram"}) in.muscle_groups.push_back(mask(g));
  in.muscle = mask("muscle");
  in.sat = mask("sat");
  in.vat = mask("vat");
  in.organ_bone = mask("organ_bone");
  if (fs::exists(dir / "vertebrae.seg")) in.vertebrae = mask("vertebrae");

  StagedDir stage(a.out);
  const RefineResult r = refine_labels(in, cfg);
  write_payload(stage.path() / "labels.seg", r.labels);
  write_payload(stage.path() / "image.img", r.image);
  ojson info;
  info["config"] = to_json(cfg);
  info["classes"] = ojson::array();
  const ClassCatalog catalog = body_composition_catalog();
  for (const auto& c : catalog.classes())
    info["classes"].push_back({{"id", c.id}, {"name", c.name}});
  info["crop"] = r.crop ? ojson({{"first", r.crop->first}, {"last", r.crop->last}})
                        : ojson(nullptr);
  write_text(stage.path() / "refine.json", info.dump(2) + "\n");

  RunManifest m;
  m.command = "refine";
  m.argv = argv;
  m.config = to_json(cfg);
  add_inputs(m, a.image);
  add_inputs(m, a.masks);
  if (!a.config.empty()) add_inputs(m, a.config);
  finish(stage, m);
  out << info.dump(2) << '\n';
  return kExitOk;
}

// ---- rerun ----

int cmd_rerun(const std::string& manifest, const std::string& out_dir, std::ostream& out) {
  fs::path target = out_dir;
  const bool temporary = target.empty();
  if (temporary)
    target = fs::temp_directory_path() /
             ("epibatch-rerun-" + std::to_string(::getpid()) + "-" +
              sha256_hex(std::vector<std::uint8_t>(manifest.begin(), manifest.end())).substr(0, 12));
  const RerunReport report = rerun(manifest, target);
  if (temporary) fs::remove_all(target);

  ojson j;
  j["identical"] = report.identical;
  j["outputs"] = report.expected.size();
  j["differing"] = report.differing;
  if (!temporary) j["rerun_dir"] = report.rerun_dir.string();
  out << j.dump(2) << '\n';
  return report.identical ? kExitOk : kExitFailure;
}

}  // namespace

RerunReport rerun(const fs::path& manifest, const fs::path& out_dir) {
  const RunManifest m = read_manifest(manifest);
  if (m.version != kToolVersion)
    throw Error("manifest was written by version " + m.version + ", this is " + kToolVersion);
  for (const auto& [path, digest] : m.inputs) {
    if (!fs::exists(path)) throw Error("input " + path + " no longer exists");
    if (sha256_file(path) != digest) throw Error("input " + path + " changed since the run");
  }

  std::vector<std::string> argv = m.argv;
  bool replaced = false;
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--out") {
      argv[i + 1] = fs::absolute(out_dir).lexically_normal().string();
      replaced = true;
    }
  if (!replaced) throw Error("manifest argv has no --out flag");

  std::ostringstream o, e;
  if (run(argv, o, e) != kExitOk) throw Error("rerun failed: " + e.str());

  RerunReport report;
  report.rerun_dir = out_dir;
  report.expected = m.outputs;
  report.actual = digest_tree(out_dir, {kManifestName});
  for (const auto& [path, digest] : report.expected) {
    const auto it = report.actual.find(path);
    if (it == report.actual.end() || it->second != digest) report.differing.push_back(path);
  }
  for (const auto& [path, digest] : report.actual)
    if (!report.expected.contains(path)) report.differing.push_back(path);
  report.identical = report.differing.empty();
  return report;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  kernels::apply_thread_limit_from_env();

  CLI::App app{"Class-structured batch sampling, budget calibration and segmentation metrics",
               "epibatch"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic labelled slice corpus");
  s->add_option("--preset", synth.preset, "generator preset")->capture_default_str();
  s->add_option("--patients", synth.patients, "number of patients")->capture_default_str();
  s->add_option("--slices-per-patient", synth.slices, "slices per patient")->capture_default_str();
  s->add_option("--height", synth.height, "slice height")->capture_default_str();
  s->add_option("--width", synth.width, "slice width")->capture_default_str();
  s->add_option("--seed", synth.seed, "run seed")->capture_default_str();
  s->add_option("--out", synth.out, "output directory")->required();

  SampleArgs sample;
  auto* sa = app.add_subcommand("sample", "emit a batch index stream as JSON lines");
  sa->add_option("--data", sample.data, "dataset directory")->required();
  sa->add_option("--seed", sample.seed, "run seed")->capture_default_str();
  sa->add_option("--iters", sample.iters, "number of batches")->capture_default_str();
  sample.sampler.add(sa);

  AuditArgs audit;
  auto* au = app.add_subcommand("audit", "per-epoch class exposure of a sampler");
  au->add_option("--data", audit.data, "dataset directory")->required();
  au->add_option("--seed", audit.seed, "run seed")->capture_default_str();
  au->add_option("--epochs", audit.epochs, "epochs to audit")->capture_default_str();
  au->add_option("--format", audit.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  audit.sampler.add(au);

  CalibrateArgs cal;
  auto* ca = app.add_subcommand("calibrate", "re-express an epoch schedule in iterations");
  ca->add_option("--milestones", cal.spec.milestones, "learning-rate milestones in epochs")
      ->delimiter(',');
  ca->add_option("--patience", cal.spec.patience_epochs, "early-stopping patience in epochs")
      ->capture_default_str();
  ca->add_option("--max", cal.spec.max_epochs, "maximum epochs")->capture_default_str();
  ca->add_option("--lr", cal.spec.base_lr, "base learning rate")->capture_default_str();
  ca->add_option("--gamma", cal.spec.gamma, "decay factor")->capture_default_str();
  ca->add_option("--ref-ipe", cal.ref_ipe, "reference iterations per epoch")
      ->capture_default_str();
  ca->add_option("--target-ipe", cal.target_ipe, "target iterations per epoch")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the toy segmentation model");
  t->add_option("--data", tr.data, "dataset directory")->required();
  t->add_option("--protocol", tr.protocol, "epoch, calibrated or fixed:N")->capture_default_str();
  t->add_option("--seed", tr.seed, "run seed")->capture_default_str();
  t->add_option("--out", tr.out, "run directory")->required();
  tr.sampler.add(t);
  t->add_option("--lr", tr.schedule.base_lr, "base learning rate")->capture_default_str();
  t->add_option("--milestones", tr.schedule.milestones, "milestones in epochs")->delimiter(',');
  t->add_option("--gamma", tr.schedule.gamma, "decay factor")->capture_default_str();
  t->add_option("--patience", tr.schedule.patience_epochs, "patience in epochs")
      ->capture_default_str();
  t->add_option("--max-epochs", tr.schedule.max_epochs, "maximum epochs")->capture_default_str();
  tr.ref_ipe_opt = t->add_option("--ref-ipe", tr.ref_ipe, "reference iterations per epoch");
  tr.eval_every_opt =
      t->add_option("--eval-every", tr.eval_every, "iterations between evaluations (fixed)");
  t->add_option("--dev-fraction", tr.dev_fraction, "fraction of patients for development")
      ->capture_default_str();
  t->add_option("--folds", tr.folds, "cross-validation folds")->capture_default_str();
  t->add_option("--fold", tr.fold, "validation fold")->capture_default_str();
  tr.subsample_opt =
      t->add_option("--subsample", tr.subsample, "fraction of development patients to keep");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "per-class Dice and HD95 of predictions");
  e->add_option("--pred", ev.pred, "directory of predicted label payloads")->required();
  e->add_option("--ref", ev.ref, "reference dataset directory")->required();
  e->add_option("--format", ev.format, "csv or json")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();
  e->add_option("--hd95", ev.hd95, "union or max-directed")->capture_default_str();

  RefineArgs rf;
  auto* r = app.add_subcommand("refine", "refine coarse masks into body-composition labels");
  r->add_option("--image", rf.image, "CT image payload in HU")->required();
  r->add_option("--masks", rf.masks, "directory of input masks")->required();
  r->add_option("--config", rf.config, "refinement config JSON");
  r->add_option("--out", rf.out, "output directory")->required();

  std::string manifest, rerun_out;
  auto* rr = app.add_subcommand("rerun", "repeat a recorded run and compare output digests");
  rr->add_option("manifest", manifest, "manifest.json of the run")->required();
  rr->add_option("--out", rerun_out, "keep the rerun outputs in this directory");

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    return app.exit(pe, out, err) == 0 ? kExitOk : kExitUsage;
  }

  const std::vector<std::string> argv = resolve_paths(args);
  try {
    if (*s) return cmd_synth(synth, argv, out);
    if (*sa) return cmd_sample(sample, out, err);
    if (*au) return cmd_audit(audit, out, err);
    if (*ca) return cmd_calibrate(cal, out, err);
    if (*t) return cmd_train(tr, argv, out, err);
    if (*e) return cmd_eval(ev, out, err);
    if (*r) return cmd_refine(rf, argv, out);
    if (*rr) return cmd_rerun(manifest, rerun_out, out);
  } catch (const UsageError& ue) {
    err << "usage error: " << ue.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

int main(int argc, char** argv) {
  return run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}

}  // namespace epibatch::cli

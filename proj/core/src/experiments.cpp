#include "pds/experiments.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace pds {

namespace {

std::string size_label(std::size_t h, std::size_t w) {
  return std::to_string(w) + "x" + std::to_string(h);
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + name);
  if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
  out << text;
}

EvalResult evaluate_with(const PdsNetwork& net, const std::vector<StereoSample>& samples,
                         EstimatorKind kind, int d_run, double delta) {
  EvalSettings s;
  s.estimator.kind = kind;
  s.estimator.d_run = d_run;
  s.estimator.delta = delta;
  return evaluate(samples, net, s);
}

}  // namespace

TrainConfig ExperimentSettings::desk_experiment_train_config() {
  TrainConfig cfg;
  cfg.learning_rate = 0.003;
  cfg.lr_start = 1800;
  cfg.lr_period = 600;
  cfg.iterations = 3000;
  cfg.validate_every = 100;
  return cfg;
}

SyntheticSplits make_synthetic_splits(const ExperimentSettings& settings) {
  SyntheticSplits out;
  out.train = make_synthetic_dataset(settings.data, settings.data_seed);
  SyntheticSpec spec = settings.data;
  spec.count = settings.val_count;
  out.val = make_synthetic_dataset(spec, settings.data_seed + 1);
  spec.count = settings.test_count;
  if (settings.test_height) spec.height = settings.test_height;
  if (settings.test_width) spec.width = settings.test_width;
  out.test = make_synthetic_dataset(spec, settings.data_seed + 2);
  return out;
}

std::vector<StereoSample> center_crops(const std::vector<StereoSample>& samples,
                                       std::size_t crop_h, std::size_t crop_w) {
  std::vector<StereoSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (crop_h > s.height() || crop_w > s.width()) {
      throw std::invalid_argument("center crop " + size_label(crop_h, crop_w) +
                                  " exceeds sample " + size_label(s.height(), s.width()));
    }
    out.push_back(crop(s, (s.height() - crop_h) / 2, (s.width() - crop_w) / 2, crop_h, crop_w));
  }
  return out;
}

std::string FullsizeReport::to_csv() const {
  std::ostringstream os;
  os << "train_size,test_size,3pe,mae\n";
  for (const auto& r : rows) {
    os << r.train_size << ',' << r.test_size << ',' << fixed(r.three_pe) << ','
       << fixed(r.mae) << '\n';
  }
  return os.str();
}

FullsizeReport run_experiment_fullsize(const ExperimentSettings& given,
                                       std::size_t patch_h, std::size_t patch_w) {
  ExperimentSettings settings = given;
  settings.test_height = settings.test_width = 0;
  const auto splits = make_synthetic_splits(settings);
  const std::size_t full_h = settings.data.height, full_w = settings.data.width;
  const auto test_patches = center_crops(splits.test, patch_h, patch_w);

  TrainConfig patch_cfg = settings.train;
  patch_cfg.loss = LossKind::kL1SoftArgmin;
  patch_cfg.crop_height = patch_h;
  patch_cfg.crop_width = patch_w;
  patch_cfg.checkpoint_dir = settings.out_dir.empty() ? "" : settings.out_dir + "/patch";
  TrainConfig full_cfg = patch_cfg;
  full_cfg.crop_height = 0;
  full_cfg.crop_width = 0;
  full_cfg.checkpoint_dir = settings.out_dir.empty() ? "" : settings.out_dir + "/full";

  const auto patch_run = train(patch_cfg, settings.net, splits.train, splits.val);
  const auto full_run = train(full_cfg, settings.net, splits.train, splits.val);

  const double delta = settings.train.delta;
  const auto pp = evaluate_with(patch_run.last, test_patches, EstimatorKind::kSoftArgmin, 0, delta);
  const auto pf = evaluate_with(patch_run.last, splits.test, EstimatorKind::kSoftArgmin, 0, delta);
  const auto ff = evaluate_with(full_run.last, splits.test, EstimatorKind::kSoftArgmin, 0, delta);

  FullsizeReport report;
  const auto patch = size_label(patch_h, patch_w), full = size_label(full_h, full_w);
  report.rows = {{patch, patch, pp.three_pixel_error, pp.mean_absolute_error},
                 {patch, full, pf.three_pixel_error, pf.mean_absolute_error},
                 {full, full, ff.three_pixel_error, ff.mean_absolute_error}};
  report.patch_log = patch_run.log;
  report.full_log = full_run.log;
  write_file(settings.out_dir, "fullsize.csv", report.to_csv());
  write_file(settings.out_dir, "fullsize_patch_log.csv", report.patch_log.to_csv());
  write_file(settings.out_dir, "fullsize_full_log.csv", report.full_log.to_csv());
  return report;
}

std::string EstimatorsReport::to_csv() const {
  std::ostringstream os;
  os << "max_disparity,loss,estimator,3pe,mae\n";
  for (const auto& r : rows) {
    os << r.d_run << ',' << r.loss << ',' << r.estimator << ',' << fixed(r.three_pe) << ','
       << fixed(r.mae) << '\n';
  }
  return os.str();
}

EstimatorsReport evaluate_estimators(const PdsNetwork& l1_net, const PdsNetwork& ce_net,
                                     const std::vector<StereoSample>& test_set,
                                     double delta) {
  const int d = l1_net.config().max_disparity;
  struct Case {
    const PdsNetwork* net;
    LossKind loss;
    EstimatorKind estimator;
    int d_run;
  };
  const Case cases[] = {
      {&l1_net, LossKind::kL1SoftArgmin, EstimatorKind::kSoftArgmin, d},
      {&l1_net, LossKind::kL1SoftArgmin, EstimatorKind::kSubpixelMap, d},
      {&ce_net, LossKind::kSubpixelCrossEntropy, EstimatorKind::kSubpixelMap, d},
      {&l1_net, LossKind::kL1SoftArgmin, EstimatorKind::kSoftArgmin, 2 * d},
      {&l1_net, LossKind::kL1SoftArgmin, EstimatorKind::kSubpixelMap, 2 * d},
  };
  EstimatorsReport report;
  for (const auto& c : cases) {
    const auto r = evaluate_with(*c.net, test_set, c.estimator, c.d_run, delta);
    report.rows.push_back({c.d_run, to_string(c.loss), to_string(c.estimator),
                           r.three_pixel_error, r.mean_absolute_error});
  }
  return report;
}

EstimatorsReport run_experiment_estimators(const ExperimentSettings& settings,
                                           const std::optional<PdsNetwork>& l1_net,
                                           const std::optional<PdsNetwork>& ce_net) {
  const auto splits = make_synthetic_splits(settings);
  TrainLog l1_log, ce_log;
  auto trained = [&](LossKind loss, const std::optional<PdsNetwork>& given, TrainLog& log,
                     const char* tag) {
    if (given) return *given;
    TrainConfig cfg = settings.train;
    cfg.loss = loss;
    cfg.checkpoint_dir = settings.out_dir.empty() ? "" : settings.out_dir + "/" + tag;
    auto run = train(cfg, settings.net, splits.train, splits.val);
    log = run.log;
    return run.last;
  };
  const auto l1 = trained(LossKind::kL1SoftArgmin, l1_net, l1_log, "l1");
  const auto ce = trained(LossKind::kSubpixelCrossEntropy, ce_net, ce_log, "ce");
  auto report = evaluate_estimators(l1, ce, splits.test, settings.train.delta);
  report.l1_log = std::move(l1_log);
  report.ce_log = std::move(ce_log);
  write_file(settings.out_dir, "estimators.csv", report.to_csv());
  if (!report.l1_log.rows.empty()) {
    write_file(settings.out_dir, "convergence_l1.csv", report.l1_log.to_csv());
  }
  if (!report.ce_log.rows.empty()) {
    write_file(settings.out_dir, "convergence_ce.csv", report.ce_log.to_csv());
  }
  return report;
}

std::optional<int> iterations_to_reach(const TrainLog& log, double target_3pe) {
  for (const auto& r : log.rows) {
    if (r.val_3pe <= target_3pe) return r.iteration;
  }
  return std::nullopt;
}

double ConvergenceRun::ratio() const {
  if (!ce_iterations || total_iterations <= 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(*ce_iterations) / total_iterations;
}

ConvergenceRun run_convergence(const ExperimentSettings& settings, std::uint64_t seed) {
  const auto splits = make_synthetic_splits(settings);
  TrainConfig cfg = settings.train;
  cfg.seed = seed;
  cfg.checkpoint_dir.clear();
  ConvergenceRun run;
  run.seed = seed;
  run.total_iterations = cfg.iterations;
  cfg.loss = LossKind::kL1SoftArgmin;
  auto l1 = train(cfg, settings.net, splits.train, splits.val);
  run.l1_log = std::move(l1.log);
  run.l1_net = std::move(l1.last);
  cfg.loss = LossKind::kSubpixelCrossEntropy;
  auto ce = train(cfg, settings.net, splits.train, splits.val);
  run.ce_log = std::move(ce.log);
  run.ce_net = std::move(ce.last);
  run.l1_final_3pe = run.l1_log.rows.back().val_3pe;
  run.ce_iterations = iterations_to_reach(run.ce_log, run.l1_final_3pe);
  const std::string tag = "_seed" + std::to_string(seed) + ".csv";
  write_file(settings.out_dir, "convergence_l1" + tag, run.l1_log.to_csv());
  write_file(settings.out_dir, "convergence_ce" + tag, run.ce_log.to_csv());
  return run;
}

}  // namespace pds

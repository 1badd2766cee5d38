// pds: train, evaluate and inspect the stereo network from the command line.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "pds/arch_analyzer.hpp"
#include "pds/experiments.hpp"

namespace fs = std::filesystem;
using namespace pds;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

struct Common {
  std::optional<std::uint64_t> seed;
  std::string net_config;
  std::string train_config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "RNG seed");
  cmd->add_option("--net-config", c.net_config, "network config JSON (or 'desk', 'paper')");
  cmd->add_option("--train-config", c.train_config, "training config JSON");
  cmd->add_option("--out", c.out, "output directory or file");
}

NetConfig resolve_net_config(const std::string& spec) {
  if (spec.empty() || spec == "desk") return NetConfig::desk();
  if (spec == "paper") return NetConfig::paper();
  return load_net_config(spec);
}

TrainConfig resolve_train_config(const std::string& path, const TrainConfig& fallback) {
  return path.empty() ? fallback : load_train_config(path);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

struct DataOptions {
  std::string manifest;
  std::size_t count = 16;
  std::size_t height = 32;
  std::size_t width = 64;
  int max_disparity = 24;
  std::uint64_t seed = 7;
};

void add_data_options(CLI::App* cmd, DataOptions& d, const std::string& prefix = "") {
  cmd->add_option("--" + prefix + "manifest", d.manifest,
                  "tab-separated left/right/gt manifest (default: synthetic data)");
  cmd->add_option("--" + prefix + "count", d.count, "synthetic sample count")->capture_default_str();
  cmd->add_option("--" + prefix + "data-seed", d.seed, "synthetic data seed")->capture_default_str();
  if (prefix.empty()) {
    cmd->add_option("--height", d.height, "synthetic image height")->capture_default_str();
    cmd->add_option("--width", d.width, "synthetic image width")->capture_default_str();
    cmd->add_option("--data-max-disparity", d.max_disparity, "synthetic disparity bound")
        ->capture_default_str();
  }
}

std::vector<StereoSample> load_data(const DataOptions& d) {
  if (!d.manifest.empty()) return load_dataset(read_manifest(d.manifest));
  SyntheticSpec spec;
  spec.count = d.count;
  spec.height = d.height;
  spec.width = d.width;
  spec.max_disparity = d.max_disparity;
  return make_synthetic_dataset(spec, d.seed);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  DataOptions data;
  DataOptions val{.manifest = "", .count = 16, .seed = 8};
  std::optional<std::string> loss;
  std::optional<int> iterations;
  std::optional<double> learning_rate;
};

int run_train(TrainArgs& a) {
  const auto net_cfg = resolve_net_config(a.common.net_config);
  auto cfg = resolve_train_config(a.common.train_config, TrainConfig{});
  if (a.common.seed) cfg.seed = *a.common.seed;
  if (a.loss) cfg.loss = loss_from_string(*a.loss);
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
  const std::string out = a.common.out.empty() ? "train_out" : a.common.out;
  cfg.checkpoint_dir = out;
  cfg.log_path = out + "/train_log.csv";
  cfg.validate();
  fs::create_directories(out);
  save_net_config(net_cfg, out + "/net_config.json");
  write_text(out + "/train_config.json", to_json(cfg) + "\n");

  a.val.height = a.data.height;
  a.val.width = a.data.width;
  a.val.max_disparity = a.data.max_disparity;
  const auto train_set = load_data(a.data);
  const auto val_set = load_data(a.val);
  std::cerr << "training " << to_string(cfg.loss) << " on " << train_set.size()
            << " samples for " << cfg.iterations << " iterations\n";
  const auto result = train(cfg, net_cfg, train_set, val_set);
  const auto& last = result.log.rows.back();
  std::cerr << "final val 3PE " << last.val_3pe << "%, MAE " << last.val_mae
            << " px; best at iteration " << result.best_iteration << "\n";
  return kOk;
}

struct EvalArgs {
  Common common;
  DataOptions data;
  std::string checkpoint;
  std::string estimator = "subpixel_map";
  double delta = 4.0;
  int d_run = 0;
  double max_eval_disp = std::numeric_limits<double>::infinity();
};

int run_eval(EvalArgs& a) {
  const auto net = load_checkpoint(a.checkpoint);
  EvalSettings s;
  s.estimator.kind = estimator_from_string(a.estimator);
  s.estimator.delta = a.delta;
  s.estimator.d_run = a.d_run;
  s.max_eval_disp = a.max_eval_disp;
  if (a.common.seed) a.data.seed = *a.common.seed;
  const auto result = evaluate(load_data(a.data), net, s);
  write_text(a.common.out, result.to_csv());
  return kOk;
}

struct InferArgs {
  Common common;
  std::string checkpoint;
  std::string left;
  std::string right;
  std::string png;
  std::string estimator = "subpixel_map";
  double delta = 4.0;
  int d_run = 0;
};

int run_infer(InferArgs& a) {
  const auto net = load_checkpoint(a.checkpoint);
  StereoSample s;
  s.left = read_png_image(a.left);
  s.right = read_png_image(a.right);
  if (s.left.shape() != s.right.shape()) {
    throw std::invalid_argument("left and right images differ in size");
  }
  s.gt = DisparityMap(s.left.dim(1), s.left.dim(2), 0.0f);
  s.mask = ValidityMask(s.left.dim(1), s.left.dim(2), std::uint8_t{1});
  EstimatorSettings settings;
  settings.kind = estimator_from_string(a.estimator);
  settings.delta = a.delta;
  settings.d_run = a.d_run;
  const auto disparity = predict(s, net, settings);
  const std::string out = a.common.out.empty() ? "disparity.pfm" : a.common.out;
  write_pfm(out, to_pfm(disparity));
  if (!a.png.empty()) write_kitti_disparity(a.png, disparity, s.mask);
  return kOk;
}

struct SynthArgs {
  Common common;
  DataOptions data;
};

int run_synth(SynthArgs& a) {
  if (a.common.seed) a.data.seed = *a.common.seed;
  a.data.manifest.clear();
  const std::string out = a.common.out.empty() ? "synthetic" : a.common.out;
  fs::create_directories(out);
  DatasetManifest manifest;
  for (const auto& s : load_data(a.data)) manifest.entries.push_back(save_sample(out, s));
  write_manifest(out + "/manifest.tsv", manifest);
  std::cerr << "wrote " << manifest.entries.size() << " samples to " << out << "\n";
  return kOk;
}

struct AnalyzeArgs {
  Common common;
  std::vector<std::string> configs{"paper"};
  std::size_t height = 540;
  std::size_t width = 960;
  int d_run = 0;
  std::string format = "text";
  std::string sort = "params";
};

int run_analyze(AnalyzeArgs& a) {
  const auto format = table_format_from_string(a.format);
  std::vector<ArchReport> reports;
  for (const auto& c : a.configs) {
    reports.push_back(analyze(resolve_net_config(c), a.height, a.width, a.d_run, c));
  }
  std::string text;
  if (reports.size() == 1) {
    text = format == TableFormat::kCsv ? reports[0].to_csv() : reports[0].to_text();
  } else {
    text = compare(reports, compare_key_from_string(a.sort), format);
  }
  write_text(a.common.out, text);
  return kOk;
}

struct ExperimentArgs {
  Common common;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch_height = 32;
  std::size_t patch_width = 64;
  std::size_t train_count = 256;
  std::size_t test_height = 64;
  std::size_t test_width = 128;
  std::string l1_checkpoint;
  std::string ce_checkpoint;
};

ExperimentSettings experiment_settings(const ExperimentArgs& a, std::size_t h, std::size_t w) {
  ExperimentSettings s;
  s.net = resolve_net_config(a.common.net_config);
  s.train = resolve_train_config(a.common.train_config, s.train);
  if (a.common.seed) s.train.seed = *a.common.seed;
  s.data.count = a.train_count;
  s.data.height = a.height ? a.height : h;
  s.data.width = a.width ? a.width : w;
  s.out_dir = a.common.out.empty() ? "experiment_out" : a.common.out;
  return s;
}

int run_fullsize(ExperimentArgs& a) {
  const auto s = experiment_settings(a, 64, 128);
  const auto report = run_experiment_fullsize(s, a.patch_height, a.patch_width);
  std::cout << report.to_csv();
  return kOk;
}

int run_estimators(ExperimentArgs& a) {
  auto s = experiment_settings(a, 32, 64);
  s.test_height = a.test_height;
  s.test_width = a.test_width;
  std::optional<PdsNetwork> l1, ce;
  if (!a.l1_checkpoint.empty()) l1 = load_checkpoint(a.l1_checkpoint);
  if (!a.ce_checkpoint.empty()) ce = load_checkpoint(a.ce_checkpoint);
  const auto report = run_experiment_estimators(s, l1, ce);
  std::cout << report.to_csv();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Practical deep stereo: training, evaluation and analysis"};
  app.require_subcommand(1);
  std::function<int()> action;

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train on a manifest or synthetic data");
  add_common(train_cmd, train_args.common);
  add_data_options(train_cmd, train_args.data);
  add_data_options(train_cmd, train_args.val, "val-");
  train_cmd->add_option("--loss", train_args.loss, "subpixel_ce or l1_softargmin");
  train_cmd->add_option("--iterations", train_args.iterations);
  train_cmd->add_option("--learning-rate", train_args.learning_rate);
  train_cmd->callback([&] { action = [&] { return run_train(train_args); }; });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint, CSV to --out or stdout");
  add_common(eval_cmd, eval_args.common);
  add_data_options(eval_cmd, eval_args.data);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--estimator", eval_args.estimator)
      ->check(CLI::IsMember({"subpixel_map", "soft_argmin"}))->capture_default_str();
  eval_cmd->add_option("--delta", eval_args.delta)->capture_default_str();
  eval_cmd->add_option("--max-disparity", eval_args.d_run, "disparity range at test time");
  eval_cmd->add_option("--max-eval-disp", eval_args.max_eval_disp,
                       "only score ground truth below this disparity");
  eval_cmd->callback([&] { action = [&] { return run_eval(eval_args); }; });

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "disparity map for one image pair");
  add_common(infer_cmd, infer_args.common);
  infer_cmd->add_option("--checkpoint", infer_args.checkpoint)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--left", infer_args.left)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--right", infer_args.right)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--png", infer_args.png, "also write a 16-bit disparity PNG");
  infer_cmd->add_option("--estimator", infer_args.estimator)
      ->check(CLI::IsMember({"subpixel_map", "soft_argmin"}))->capture_default_str();
  infer_cmd->add_option("--delta", infer_args.delta)->capture_default_str();
  infer_cmd->add_option("--max-disparity", infer_args.d_run);
  infer_cmd->callback([&] { action = [&] { return run_infer(infer_args); }; });

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic dataset");
  add_common(synth_cmd, synth_args.common);
  add_data_options(synth_cmd, synth_args.data);
  synth_cmd->callback([&] { action = [&] { return run_synth(synth_args); }; });

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "parameter and activation memory report");
  add_common(analyze_cmd, analyze_args.common);
  analyze_cmd->add_option("--config", analyze_args.configs,
                          "desk, paper or a JSON path; several give a comparison table")
      ->capture_default_str();
  analyze_cmd->add_option("--height", analyze_args.height)->capture_default_str();
  analyze_cmd->add_option("--width", analyze_args.width)->capture_default_str();
  analyze_cmd->add_option("--max-disparity", analyze_args.d_run);
  analyze_cmd->add_option("--format", analyze_args.format)
      ->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  analyze_cmd->add_option("--sort", analyze_args.sort)
      ->check(CLI::IsMember({"label", "params", "memory"}))->capture_default_str();
  analyze_cmd->callback([&] { action = [&] { return run_analyze(analyze_args); }; });

  ExperimentArgs exp_args;
  auto* exp_cmd = app.add_subcommand("experiment", "desk-scale experiments on synthetic data");
  exp_cmd->require_subcommand(1);
  auto* fullsize_cmd = exp_cmd->add_subcommand("fullsize", "patch vs full-size training");
  auto* estimators_cmd =
      exp_cmd->add_subcommand("estimators", "estimators, losses and range extension");
  for (auto* cmd : {fullsize_cmd, estimators_cmd}) {
    add_common(cmd, exp_args.common);
    cmd->add_option("--height", exp_args.height, "full image height");
    cmd->add_option("--width", exp_args.width, "full image width");
    cmd->add_option("--train-count", exp_args.train_count)->capture_default_str();
  }
  fullsize_cmd->add_option("--patch-height", exp_args.patch_height)->capture_default_str();
  fullsize_cmd->add_option("--patch-width", exp_args.patch_width)->capture_default_str();
  estimators_cmd->add_option("--test-height", exp_args.test_height, "test image height")
      ->capture_default_str();
  estimators_cmd->add_option("--test-width", exp_args.test_width, "test image width")
      ->capture_default_str();
  estimators_cmd->add_option("--l1-checkpoint", exp_args.l1_checkpoint)->check(CLI::ExistingFile);
  estimators_cmd->add_option("--ce-checkpoint", exp_args.ce_checkpoint)->check(CLI::ExistingFile);
  fullsize_cmd->callback([&] { action = [&] { return run_fullsize(exp_args); }; });
  estimators_cmd->callback([&] { action = [&] { return run_estimators(exp_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    return action();
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

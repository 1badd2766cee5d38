#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pds/training.hpp"

namespace pds {

/// Shared knobs of the desk-scale experiments on synthetic data.
struct ExperimentSettings {
  NetConfig net = NetConfig::desk();
  TrainConfig train = desk_experiment_train_config();
  SyntheticSpec data = {.count = 256};  // training split; height/width are full size
  std::size_t val_count = 16;
  std::size_t test_count = 32;
  // Test images may be larger than training images; 0 keeps the training size.
  std::size_t test_height = 0;
  std::size_t test_width = 0;
  std::uint64_t data_seed = 2024;
  std::string out_dir;            // empty: nothing written

  static TrainConfig desk_experiment_train_config();
};

/// Train, validation and test splits drawn from disjoint seeds.
struct SyntheticSplits {
  std::vector<StereoSample> train;
  std::vector<StereoSample> val;
  std::vector<StereoSample> test;
};
SyntheticSplits make_synthetic_splits(const ExperimentSettings& settings);

/// Centered crop_h x crop_w window of every sample.
std::vector<StereoSample> center_crops(const std::vector<StereoSample>& samples,
                                       std::size_t crop_h, std::size_t crop_w);

// ---------------------------------------------------------------------------
// Training patch size vs full-size images (L1 + SoftArgmin).

struct FullsizeRow {
  std::string train_size;  // WxH
  std::string test_size;
  double three_pe = 0.0;
  double mae = 0.0;
};

struct FullsizeReport {
  std::vector<FullsizeRow> rows;  // patch/patch, patch/full, full/full
  TrainLog patch_log;
  TrainLog full_log;
  std::string to_csv() const;
};

FullsizeReport run_experiment_fullsize(const ExperimentSettings& settings,
                                       std::size_t patch_h, std::size_t patch_w);

// ---------------------------------------------------------------------------
// Estimators, losses and disparity-range extension.

struct EstimatorRow {
  int d_run = 0;
  std::string loss;
  std::string estimator;
  double three_pe = 0.0;
  double mae = 0.0;
};

struct EstimatorsReport {
  std::vector<EstimatorRow> rows;
  TrainLog l1_log;
  TrainLog ce_log;
  std::string to_csv() const;
};

/// Five rows: L1 model with SoftArgmin and sub-pixel MAP, the cross-entropy
/// model with sub-pixel MAP (all at the configured D), then the L1 model with
/// both estimators at 2D.
EstimatorsReport evaluate_estimators(const PdsNetwork& l1_net, const PdsNetwork& ce_net,
                                     const std::vector<StereoSample>& test_set, double delta);

/// Trains the two models (unless given) and evaluates them.
EstimatorsReport run_experiment_estimators(const ExperimentSettings& settings,
                                           const std::optional<PdsNetwork>& l1_net = {},
                                           const std::optional<PdsNetwork>& ce_net = {});

/// First logged iteration whose validation 3PE is <= target.
std::optional<int> iterations_to_reach(const TrainLog& log, double target_3pe);

/// Convergence comparison for one seed: both losses trained with the same
/// seed, data and schedule.
struct ConvergenceRun {
  std::uint64_t seed = 0;
  TrainLog l1_log;
  TrainLog ce_log;
  std::optional<PdsNetwork> l1_net;  // final weights
  std::optional<PdsNetwork> ce_net;
  double l1_final_3pe = 0.0;
  std::optional<int> ce_iterations;  // to reach l1_final_3pe
  int total_iterations = 0;
  double ratio() const;              // ce_iterations / total, or +inf
};

ConvergenceRun run_convergence(const ExperimentSettings& settings, std::uint64_t seed);

}  // namespace pds

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pds/data_io.hpp"
#include "pds/estimators.hpp"
#include "pds/losses.hpp"
#include "pds/metrics.hpp"
#include "pds/model.hpp"

namespace pds {

/// Training stopped on a non-finite loss or activation.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  LossKind loss = LossKind::kSubpixelCrossEntropy;
  double learning_rate = 0.01;
  int lr_start = 600;   // constant rate before this iteration
  int lr_period = 200;  // then halve every period
  int iterations = 1000;
  // Random crop extents; 0 trains on full-size images.
  std::size_t crop_height = 0;
  std::size_t crop_width = 0;
  double b = 2.0;      // Laplace diversity of the cross-entropy target
  double delta = 4.0;  // sub-pixel MAP half-window for validation
  std::uint64_t seed = 1;
  int validate_every = 100;
  double rmsprop_alpha = 0.99;
  double rmsprop_eps = 1e-8;
  std::string checkpoint_dir;  // empty: no checkpoints
  std::string log_path;        // empty: no CSV log file

  /// Throws std::invalid_argument on a non-positive rate, iteration count,
  /// period or a crop that is not a multiple of 4.
  void validate() const;
  bool full_size() const { return crop_height == 0 || crop_width == 0; }
  /// Estimator used for validation: sub-pixel MAP for cross-entropy runs,
  /// SoftArgmin for L1 runs.
  EstimatorSettings validation_estimator() const;
};

std::string to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(std::string_view json);
TrainConfig load_train_config(const std::string& path);

/// lr0 * 2^-max(0, floor((iter - start) / period) + 1) once iter >= start,
/// lr0 before.
double scheduled_learning_rate(const TrainConfig& cfg, int iteration);

/// state <- alpha*state + (1-alpha)*g^2; param <- param - lr*g/(sqrt(state)+eps).
void rmsprop_step(std::span<float> params, std::span<const float> grads,
                  std::span<float> state, double lr, double alpha, double eps);

class RmsProp {
 public:
  RmsProp(double alpha, double eps) : alpha_(alpha), eps_(eps) {}
  /// Applies one update to every parameter holding a gradient.
  void step(std::vector<NamedParameter<float>>& params, double lr);

 private:
  double alpha_;
  double eps_;
  std::vector<std::vector<float>> state_;
};

struct TrainLogRow {
  int iteration = 0;
  double train_loss = 0.0;  // mean over the iterations since the previous row
  double val_3pe = 0.0;
  double val_mae = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::string to_csv() const;
};

struct TrainResult {
  PdsNetwork last;
  PdsNetwork best;  // lowest validation 3PE (ties: earliest)
  int best_iteration = 0;
  TrainLog log;
};

/// Single-sample RMSprop training. Each iteration draws one training sample,
/// normalizes it, optionally crops it, and takes one step. Validation runs
/// every `validate_every` iterations and after the last one. Throws
/// DivergenceError when the loss stops being finite.
TrainResult train(const TrainConfig& train_cfg, const NetConfig& net_cfg,
                  const std::vector<StereoSample>& train_set,
                  const std::vector<StereoSample>& val_set);

/// Binary weights file plus its NetConfig as JSON next to it (same stem,
/// ".json" extension).
void save_checkpoint(const PdsNetwork& net, const std::string& path);
PdsNetwork load_checkpoint(const std::string& path);
std::string checkpoint_config_path(const std::string& checkpoint_path);

}  // namespace pds

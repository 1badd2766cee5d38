#pragma once

#include <string>
#include <string_view>

namespace pds {

/// Architecture hyperparameters. The desk and full-scale presets are two values of
/// this struct for one network definition.
struct NetConfig {
  int max_disparity = 32;  // D, full-resolution pixels; multiple of 4
  int embed_channels = 8;
  int signature_channels = 4;
  int hourglass_base_channels = 8;
  int hourglass_levels = 2;
  int matching_hidden_channels = 8;
  double norm_eps = 1e-5;
  double lrelu_slope = 0.1;

  /// Minutes-on-one-core scale used by training and the experiments.
  static NetConfig desk();
  /// 32-channel descriptors, 8-channel signatures, D = 192.
  static NetConfig paper();

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  // Channel widths of the two upsampling head stages.
  int head_channels_stage1() const;
  int head_channels_stage2() const;

  bool operator==(const NetConfig&) const = default;
};

std::string to_json(const NetConfig& cfg);
NetConfig net_config_from_json(std::string_view json);
NetConfig load_net_config(const std::string& path);
void save_net_config(const NetConfig& cfg, const std::string& path);

}  // namespace pds

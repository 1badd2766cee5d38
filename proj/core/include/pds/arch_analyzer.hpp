#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pds/net_config.hpp"
#include "pds/model.hpp"
#include "pds/tensor.hpp"

namespace pds {

struct ArchRow {
  std::string name;
  Shape shape;
  std::uint64_t params = 0;  // counted on the first use of a shared layer only
  std::uint64_t activation_bytes = 0;
};

/// Per-layer shapes, parameters and float32 activation sizes of one
/// inference pass. Peak memory assumes sequential execution where a tensor
/// is freed right after its last consumer runs; parameters are excluded.
struct ArchReport {
  std::string label;
  std::size_t height = 0;
  std::size_t width = 0;
  int d_run = 0;
  std::vector<ArchRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t peak_activation_bytes = 0;
  std::string peak_at;  // row during which the peak occurs

  std::string to_text() const;
  std::string to_csv() const;
};

/// d_run = 0 means cfg.max_disparity. Throws std::invalid_argument on
/// invalid geometry (extents not multiples of 4, bad d_run).
ArchReport analyze(const NetConfig& cfg, std::size_t height, std::size_t width,
                   int d_run = 0, std::string label = "pds");

/// Parameters of one convolution: K*C*prod(kernel) + K.
std::uint64_t conv_params(std::uint64_t in_channels, std::uint64_t out_channels,
                          std::uint64_t kernel_volume);

enum class CompareKey { kLabel, kParams, kMemory };
enum class TableFormat { kText, kCsv };

CompareKey compare_key_from_string(const std::string& name);
TableFormat table_format_from_string(const std::string& name);

/// One row per report with label, input size, D, params and peak bytes,
/// sorted ascending by `key` (stable).
std::string compare(std::vector<ArchReport> reports, CompareKey key = CompareKey::kParams,
                    TableFormat format = TableFormat::kText);

}  // namespace pds

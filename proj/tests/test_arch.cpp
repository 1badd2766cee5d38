#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "pds/arch_analyzer.hpp"
#include "pds/model.hpp"

using namespace pds;

namespace {

NetConfig random_config(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  NetConfig c;
  c.max_disparity = 4 * pick(2, 12);
  c.embed_channels = pick(1, 12);
  c.signature_channels = pick(1, 8);
  c.matching_hidden_channels = pick(1, 12);
  c.hourglass_base_channels = pick(1, 12);
  c.hourglass_levels = pick(1, 3);
  return c;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Analyzer, SingleConvCount) { EXPECT_EQ(conv_params(3, 8, 9), 224u); }

TEST(Analyzer, DeskTotalsMatchInstantiation) {
  const auto cfg = NetConfig::desk();
  const auto report = analyze(cfg, 32, 64);
  PdsNetwork net(cfg, 1);
  std::uint64_t brute = 0;
  for (const auto& p : net.parameters()) brute += p.value.numel();
  EXPECT_EQ(report.total_params, brute);
  std::uint64_t rows = 0, largest = 0;
  for (const auto& r : report.rows) {
    rows += r.params;
    largest = std::max(largest, r.activation_bytes);
  }
  EXPECT_EQ(rows, report.total_params);
  EXPECT_GE(report.peak_activation_bytes, largest);
}

TEST(Analyzer, RandomConfigsMatchLiveNetworks) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cfg = random_config(rng);
    const std::size_t h = 4 * std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    const std::size_t w = 4 * std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    PdsNetwork net(cfg, trial);
    const auto report = analyze(cfg, h, w);
    EXPECT_EQ(report.total_params, net.parameter_count()) << to_json(cfg);
    LayerTrace trace;
    net.forward(Tensor::zeros({3, h, w}), Tensor::zeros({3, h, w}), 0, &trace);
    ASSERT_EQ(trace.size(), report.rows.size()) << to_json(cfg);
    for (std::size_t i = 0; i < trace.size(); ++i) {
      EXPECT_EQ(trace[i].name, report.rows[i].name);
      EXPECT_EQ(trace[i].shape, report.rows[i].shape) << trace[i].name;
    }
  }
}

TEST(Analyzer, FullScalePresetMemory) {
  const auto report = analyze(NetConfig::paper(), 540, 960);
  const auto stack = std::find_if(report.rows.begin(), report.rows.end(),
                                  [](const ArchRow& r) { return r.name == "match.stack"; });
  ASSERT_NE(stack, report.rows.end());
  EXPECT_EQ(stack->shape, (Shape{8, 48, 135, 240}));
  EXPECT_EQ(stack->activation_bytes, 8ull * 48 * 135 * 240 * 4);
  EXPECT_EQ(report.rows.back().shape, (Shape{96, 540, 960}));
  EXPECT_GT(report.peak_activation_bytes, stack->activation_bytes);
  EXPECT_LT(report.peak_activation_bytes, 1ull << 30);
}

TEST(Analyzer, PeakGrowsLinearlyWithDisparityRange) {
  const auto cfg = NetConfig::desk();
  const auto a = analyze(cfg, 64, 128, 32), b = analyze(cfg, 64, 128, 64),
             c = analyze(cfg, 64, 128, 96);
  EXPECT_EQ(a.peak_at, b.peak_at);
  EXPECT_EQ(b.peak_at, c.peak_at);
  EXPECT_EQ(c.peak_activation_bytes - b.peak_activation_bytes,
            b.peak_activation_bytes - a.peak_activation_bytes);
  EXPECT_GT(b.peak_activation_bytes, a.peak_activation_bytes);
  EXPECT_EQ(a.total_params, c.total_params);
}

TEST(Analyzer, RejectsBadGeometry) {
  EXPECT_THROW(analyze(NetConfig::desk(), 30, 64), std::invalid_argument);
  EXPECT_THROW(analyze(NetConfig::desk(), 32, 64, 30), std::invalid_argument);
}

TEST(Compare, SingleAndSortedRows) {
  auto desk = analyze(NetConfig::desk(), 64, 128, 0, "desk");
  auto paper = analyze(NetConfig::paper(), 64, 128, 0, "paper");
  auto one = parse_csv(compare({desk}, CompareKey::kParams, TableFormat::kCsv));
  EXPECT_EQ(one.size(), 2u);
  auto two = parse_csv(compare({paper, desk}, CompareKey::kParams, TableFormat::kCsv));
  ASSERT_EQ(two.size(), 3u);
  EXPECT_EQ(two[1][0], "desk");
  EXPECT_EQ(two[2][0], "paper");
  auto by_label = parse_csv(compare({paper, desk}, CompareKey::kLabel, TableFormat::kCsv));
  EXPECT_EQ(by_label[1][0], "desk");
  const auto text = compare({paper, desk}, CompareKey::kMemory, TableFormat::kText);
  EXPECT_LT(text.find("desk"), text.find("paper"));
}

TEST(Compare, CsvRoundTripsNumbers) {
  auto desk = analyze(NetConfig::desk(), 32, 64, 0, "desk");
  auto paper = analyze(NetConfig::paper(), 540, 960, 0, "paper");
  const auto rows = parse_csv(compare({desk, paper}, CompareKey::kParams, TableFormat::kCsv));
  EXPECT_EQ(rows[0], (std::vector<std::string>{"model", "height", "width", "max_disparity",
                                               "params", "peak_bytes"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i][0] == "desk" ? desk : paper;
    EXPECT_EQ(std::stoull(rows[i][1]), r.height);
    EXPECT_EQ(std::stoull(rows[i][2]), r.width);
    EXPECT_EQ(std::stoi(rows[i][3]), r.d_run);
    EXPECT_EQ(std::stoull(rows[i][4]), r.total_params);
    EXPECT_EQ(std::stoull(rows[i][5]), r.peak_activation_bytes);
  }
  EXPECT_EQ(compare_key_from_string("memory"), CompareKey::kMemory);
  EXPECT_EQ(table_format_from_string("csv"), TableFormat::kCsv);
  EXPECT_THROW(compare_key_from_string("speed"), std::invalid_argument);
}

TEST(Report, CsvHasOneLinePerRow) {
  const auto report = analyze(NetConfig::desk(), 32, 64);
  const auto rows = parse_csv(report.to_csv());
  EXPECT_GE(rows.size(), report.rows.size() + 1);
  EXPECT_NE(report.to_text().find("reg.out"), std::string::npos);
}

#include "pds/arch_analyzer.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pds {

namespace {

std::size_t conv_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
  if (n + 2 * pad < k) throw std::invalid_argument("input smaller than kernel");
  return (n + 2 * pad - k) / stride + 1;
}

class Builder {
 public:
  struct Value {
    std::size_t id;
    Shape shape;
  };

  explicit Builder(ArchReport& report) : report_(report) {}

  Value input(const Shape& shape) { return add_tensor(shape, {}, std::nullopt); }

  Value layer(const std::string& name, const std::string& param_key, std::uint64_t params,
              const Shape& shape, std::vector<std::size_t> inputs) {
    ArchRow row{name, shape, 0, 4 * shape_numel(shape)};
    if (!param_key.empty() && counted_.insert(param_key).second) row.params = params;
    report_.rows.push_back(row);
    return add_tensor(shape, std::move(inputs), report_.rows.size() - 1);
  }

  void finish() {
    std::vector<std::size_t> last_use(tensors_.size());
    for (std::size_t t = 0; t < tensors_.size(); ++t) last_use[t] = t;
    for (std::size_t t = 0; t < tensors_.size(); ++t) {
      for (auto in : tensors_[t].inputs) last_use[in] = std::max(last_use[in], t);
    }
    const std::size_t final_output = tensors_.size() - 1;
    std::uint64_t live = 0;
    for (std::size_t t = 0; t < tensors_.size(); ++t) {
      live += tensors_[t].bytes;
      if (live > report_.peak_activation_bytes) {
        report_.peak_activation_bytes = live;
        report_.peak_at = tensors_[t].row ? report_.rows[*tensors_[t].row].name : "input";
      }
      for (std::size_t u = 0; u <= t; ++u) {
        if (last_use[u] == t && u != final_output && !freed_[u]) {
          live -= tensors_[u].bytes;
          freed_[u] = true;
        }
      }
    }
    for (const auto& r : report_.rows) report_.total_params += r.params;
  }

 private:
  struct Node {
    std::uint64_t bytes;
    std::vector<std::size_t> inputs;
    std::optional<std::size_t> row;
  };

  Value add_tensor(const Shape& shape, std::vector<std::size_t> inputs,
                   std::optional<std::size_t> row) {
    tensors_.push_back({4 * shape_numel(shape), std::move(inputs), row});
    freed_.push_back(false);
    return {tensors_.size() - 1, shape};
  }

  ArchReport& report_;
  std::vector<Node> tensors_;
  std::vector<bool> freed_;
  std::set<std::string> counted_;
};

// Conv (+ instance norm affine when `norm`) parameter total.
std::uint64_t layer_params(std::uint64_t in_c, std::uint64_t out_c, std::uint64_t kvol,
                           bool norm) {
  return conv_params(in_c, out_c, kvol) + (norm ? 2 * out_c : 0);
}

std::string human_bytes(std::uint64_t bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", static_cast<double>(bytes) / 1e9);
  return std::string(buf) + " GB";
}

}  // namespace

std::uint64_t conv_params(std::uint64_t in_channels, std::uint64_t out_channels,
                          std::uint64_t kernel_volume) {
  return out_channels * in_channels * kernel_volume + out_channels;
}

ArchReport analyze(const NetConfig& cfg, std::size_t height, std::size_t width, int d_run,
                   std::string label) {
  cfg.validate();
  if (d_run == 0) d_run = cfg.max_disparity;
  if (d_run < 4 || d_run % 4 != 0) {
    throw std::invalid_argument("disparity range must be a positive multiple of 4, got " +
                                std::to_string(d_run));
  }
  if (height == 0 || width == 0 || height % 4 != 0 || width % 4 != 0) {
    throw std::invalid_argument("image extents must be positive multiples of 4, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  ArchReport report;
  report.label = std::move(label);
  report.height = height;
  report.width = width;
  report.d_run = d_run;
  Builder b(report);

  const std::size_t c = cfg.embed_channels;
  const std::size_t sig = cfg.signature_channels;
  const std::size_t hidden = cfg.matching_hidden_channels;
  const std::size_t base = cfg.hourglass_base_channels;
  const std::size_t levels = cfg.hourglass_levels;

  auto embed = [&](const std::string& tag) {
    auto img = b.input({3, height, width});
    const std::string p = tag + "/";
    const std::size_t h1 = conv_extent(height, 5, 2, 2), w1 = conv_extent(width, 5, 2, 2);
    auto x = b.layer(p + "embed.conv1", "embed.conv1", layer_params(3, c, 25, true),
                     {c, h1, w1}, {img.id});
    const std::size_t h2 = conv_extent(h1, 3, 2, 1), w2 = conv_extent(w1, 3, 2, 1);
    x = b.layer(p + "embed.conv2", "embed.conv2", layer_params(c, c, 9, true), {c, h2, w2},
                {x.id});
    for (const std::string block : {"embed.res1", "embed.res2"}) {
      auto r = b.layer(p + block + ".conv1", block + ".conv1", layer_params(c, c, 9, true),
                       {c, h2, w2}, {x.id});
      x = b.layer(p + block + ".conv2", block + ".conv2", layer_params(c, c, 9, true),
                  {c, h2, w2}, {r.id, x.id});
    }
    return x;
  };

  auto left = embed("left");
  auto right = embed("right");
  const std::size_t hq = left.shape[1], wq = left.shape[2];

  const std::size_t slices = static_cast<std::size_t>(d_run) / 4;
  std::vector<std::size_t> signatures;
  for (std::size_t d = 0; d < slices; ++d) {
    const std::string p = "d" + std::to_string(d) + "/";
    auto shifted = b.layer(p + "match.shift", "", 0, {c, hq, wq}, {right.id});
    auto x = b.layer(p + "match.concat", "", 0, {2 * c, hq, wq}, {left.id, shifted.id});
    x = b.layer(p + "match.conv1", "match.conv1", layer_params(2 * c, hidden, 1, true),
                {hidden, hq, wq}, {x.id});
    x = b.layer(p + "match.conv2", "match.conv2", layer_params(hidden, sig, 1, false),
                {sig, hq, wq}, {x.id});
    signatures.push_back(x.id);
  }
  auto x = b.layer("match.stack", "", 0, {sig, slices, hq, wq}, signatures);

  x = b.layer("reg.stem", "reg.stem", layer_params(sig, base, 27, true),
              {base, slices, hq, wq}, {x.id});
  std::vector<Builder::Value> skips{x};
  for (std::size_t l = 1; l <= levels; ++l) {
    const auto& s = x.shape;
    x = b.layer("reg.down" + std::to_string(l), "reg.down" + std::to_string(l),
                layer_params(base << (l - 1), base << l, 27, true),
                {base << l, halved_extent(s[1]), halved_extent(s[2]), halved_extent(s[3])},
                {x.id});
    skips.push_back(x);
  }
  for (std::size_t l = levels; l >= 1; --l) {
    const auto& skip = skips[l - 1];
    x = b.layer("reg.up" + std::to_string(l), "reg.up" + std::to_string(l),
                layer_params(base << l, base << (l - 1), 27, true), skip.shape,
                {x.id, skip.id});
  }
  const std::size_t h1c = cfg.head_channels_stage1(), h2c = cfg.head_channels_stage2();
  const std::size_t dq = x.shape[1];
  x = b.layer("reg.head1", "reg.head1", layer_params(base, h1c, 27, true),
              {h1c, 2 * dq, 2 * hq, 2 * wq}, {x.id});
  x = b.layer("reg.head2", "reg.head2", layer_params(h1c, h2c, 27, true),
              {h2c, 2 * dq, 4 * hq, 4 * wq}, {x.id});
  b.layer("reg.out", "reg.out", layer_params(h2c, 1, 27, false), {2 * dq, 4 * hq, 4 * wq},
          {x.id});
  b.finish();
  return report;
}

std::string ArchReport::to_text() const {
  std::size_t name_w = 5;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  std::ostringstream os;
  os << label << ": " << height << "x" << width << ", D=" << d_run << "\n";
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer" << std::setw(24)
     << "output" << std::right << std::setw(12) << "params" << std::setw(16) << "bytes"
     << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name << std::setw(24)
       << shape_string(r.shape) << std::right << std::setw(12) << r.params << std::setw(16)
       << r.activation_bytes << "\n";
  }
  os << "total params: " << total_params << "\n";
  os << "peak activations: " << peak_activation_bytes << " B (" << human_bytes(peak_activation_bytes)
     << ", at " << peak_at << ")\n";
  return os.str();
}

std::string ArchReport::to_csv() const {
  std::ostringstream os;
  os << "layer,shape,params,bytes\n";
  for (const auto& r : rows) {
    std::string dims;
    for (std::size_t i = 0; i < r.shape.size(); ++i) {
      dims += (i ? "x" : "") + std::to_string(r.shape[i]);
    }
    os << r.name << ',' << dims << ',' << r.params << ',' << r.activation_bytes << "\n";
  }
  os << "TOTAL,," << total_params << ',' << peak_activation_bytes << "\n";
  return os.str();
}

CompareKey compare_key_from_string(const std::string& name) {
  if (name == "label") return CompareKey::kLabel;
  if (name == "params") return CompareKey::kParams;
  if (name == "memory") return CompareKey::kMemory;
  throw std::invalid_argument("unknown sort column '" + name + "' (label, params, memory)");
}

TableFormat table_format_from_string(const std::string& name) {
  if (name == "text") return TableFormat::kText;
  if (name == "csv") return TableFormat::kCsv;
  throw std::invalid_argument("unknown format '" + name + "' (text, csv)");
}

std::string compare(std::vector<ArchReport> reports, CompareKey key, TableFormat format) {
  std::stable_sort(reports.begin(), reports.end(), [key](const auto& a, const auto& b) {
    switch (key) {
      case CompareKey::kLabel: return a.label < b.label;
      case CompareKey::kParams: return a.total_params < b.total_params;
      case CompareKey::kMemory: return a.peak_activation_bytes < b.peak_activation_bytes;
    }
    return false;
  });
  std::ostringstream os;
  if (format == TableFormat::kCsv) {
    os << "model,height,width,max_disparity,params,peak_bytes\n";
    for (const auto& r : reports) {
      os << r.label << ',' << r.height << ',' << r.width << ',' << r.d_run << ','
         << r.total_params << ',' << r.peak_activation_bytes << "\n";
    }
    return os.str();
  }
  std::size_t label_w = 5;
  for (const auto& r : reports) label_w = std::max(label_w, r.label.size());
  os << std::left << std::setw(static_cast<int>(label_w) + 2) << "model" << std::setw(12)
     << "input" << std::right << std::setw(6) << "D" << std::setw(14) << "Params [M]"
     << std::setw(14) << "Memory [GB]" << "\n";
  for (const auto& r : reports) {
    char params[32], mem[32];
    std::snprintf(params, sizeof params, "%.3f", static_cast<double>(r.total_params) / 1e6);
    std::snprintf(mem, sizeof mem, "%.3f", static_cast<double>(r.peak_activation_bytes) / 1e9);
    os << std::left << std::setw(static_cast<int>(label_w) + 2) << r.label << std::setw(12)
       << (std::to_string(r.width) + "x" + std::to_string(r.height)) << std::right
       << std::setw(6) << r.d_run << std::setw(14) << params << std::setw(14) << mem << "\n";
  }
  return os.str();
}

}  // namespace pds

#include "pds/training.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

namespace pds {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (iterations <= 0) throw std::invalid_argument("iterations must be > 0");
  if (lr_period <= 0) throw std::invalid_argument("lr_period must be > 0");
  if (validate_every <= 0) throw std::invalid_argument("validate_every must be > 0");
  if (!(b > 0.0)) throw std::invalid_argument("b must be > 0");
  if (!(delta >= 0.0)) throw std::invalid_argument("delta must be >= 0");
  if (!full_size() && (crop_height % 4 != 0 || crop_width % 4 != 0)) {
    throw std::invalid_argument("crop extents must be multiples of 4");
  }
  if (!(rmsprop_alpha >= 0.0 && rmsprop_alpha < 1.0)) {
    throw std::invalid_argument("rmsprop_alpha must be in [0, 1)");
  }
}

EstimatorSettings TrainConfig::validation_estimator() const {
  EstimatorSettings s;
  s.kind = loss == LossKind::kSubpixelCrossEntropy ? EstimatorKind::kSubpixelMap
                                                   : EstimatorKind::kSoftArgmin;
  s.delta = delta;
  return s;
}

std::string to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["loss"] = to_string(cfg.loss);
  j["learning_rate"] = cfg.learning_rate;
  j["lr_start"] = cfg.lr_start;
  j["lr_period"] = cfg.lr_period;
  j["iterations"] = cfg.iterations;
  j["crop_height"] = cfg.crop_height;
  j["crop_width"] = cfg.crop_width;
  j["b"] = cfg.b;
  j["delta"] = cfg.delta;
  j["seed"] = cfg.seed;
  j["validate_every"] = cfg.validate_every;
  j["rmsprop_alpha"] = cfg.rmsprop_alpha;
  j["rmsprop_eps"] = cfg.rmsprop_eps;
  j["checkpoint_dir"] = cfg.checkpoint_dir;
  j["log_path"] = cfg.log_path;
  return j.dump(2);
}

TrainConfig train_config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("train config: expected a JSON object");
  TrainConfig cfg;
  auto read = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) {
      try {
        it->get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("train config field '") + key + "': " +
                                    e.what());
      }
    }
  };
  std::string loss = to_string(cfg.loss);
  read("loss", loss);
  cfg.loss = loss_from_string(loss);
  read("learning_rate", cfg.learning_rate);
  read("lr_start", cfg.lr_start);
  read("lr_period", cfg.lr_period);
  read("iterations", cfg.iterations);
  read("crop_height", cfg.crop_height);
  read("crop_width", cfg.crop_width);
  read("b", cfg.b);
  read("delta", cfg.delta);
  read("seed", cfg.seed);
  read("validate_every", cfg.validate_every);
  read("rmsprop_alpha", cfg.rmsprop_alpha);
  read("rmsprop_eps", cfg.rmsprop_eps);
  read("checkpoint_dir", cfg.checkpoint_dir);
  read("log_path", cfg.log_path);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"loss",          "learning_rate", "lr_start",
                                  "lr_period",     "iterations",    "crop_height",
                                  "crop_width",    "b",             "delta",
                                  "seed",          "validate_every", "rmsprop_alpha",
                                  "rmsprop_eps",   "checkpoint_dir", "log_path"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return it.key() == k; }) == std::end(known)) {
      throw std::invalid_argument("train config: unknown field '" + it.key() + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str());
}

double scheduled_learning_rate(const TrainConfig& cfg, int iteration) {
  const long long offset = static_cast<long long>(iteration) - cfg.lr_start;
  long long q = offset / cfg.lr_period;
  if (offset % cfg.lr_period != 0 && offset < 0) --q;  // floor, not truncation
  const long long halvings = std::max(0LL, q + 1);
  return cfg.learning_rate * std::ldexp(1.0, static_cast<int>(-halvings));
}

void rmsprop_step(std::span<float> params, std::span<const float> grads,
                  std::span<float> state, double lr, double alpha, double eps) {
  if (params.size() != grads.size() || params.size() != state.size()) {
    throw std::invalid_argument("rmsprop_step: params (" + std::to_string(params.size()) +
                                "), grads (" + std::to_string(grads.size()) +
                                ") and state (" + std::to_string(state.size()) +
                                ") differ in size");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double s = alpha * state[i] + (1.0 - alpha) * g * g;
    state[i] = static_cast<float>(s);
    params[i] = static_cast<float>(params[i] - lr * g / (std::sqrt(s) + eps));
  }
}

void RmsProp::step(std::vector<NamedParameter<float>>& params, double lr) {
  if (state_.empty()) {
    for (const auto& p : params) state_.emplace_back(p.value.numel(), 0.0f);
  }
  if (state_.size() != params.size()) {
    throw std::invalid_argument("RmsProp: parameter list changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    if (!p.has_grad()) continue;
    rmsprop_step(p.mutable_data(), p.grad(), state_[i], lr, alpha_, eps_);
  }
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "iteration,train_loss,val_3pe,val_mae,wall_seconds\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6f,%.3f\n", r.iteration, r.train_loss,
                  r.val_3pe, r.val_mae, r.wall_seconds);
    os << buf;
  }
  return os.str();
}

TrainResult train(const TrainConfig& train_cfg, const NetConfig& net_cfg,
                  const std::vector<StereoSample>& train_set,
                  const std::vector<StereoSample>& val_set) {
  train_cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (val_set.empty()) throw std::invalid_argument("train: empty validation set");

  PdsNetwork net(net_cfg, train_cfg.seed);
  RmsProp optimizer(train_cfg.rmsprop_alpha, train_cfg.rmsprop_eps);
  std::mt19937_64 rng(train_cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);

  EvalSettings eval_settings;
  eval_settings.estimator = train_cfg.validation_estimator();

  TrainResult result{net, net.cast<float>(), 0, {}};
  double best_3pe = std::numeric_limits<double>::infinity();
  double loss_sum = 0.0;
  int loss_count = 0;
  const auto t0 = std::chrono::steady_clock::now();

  if (!train_cfg.checkpoint_dir.empty()) {
    std::filesystem::create_directories(train_cfg.checkpoint_dir);
  }

  for (int iter = 0; iter < train_cfg.iterations; ++iter) {
    auto sample = normalize(train_set[pick(rng)]);
    if (!train_cfg.full_size()) {
      sample = random_crop(sample, train_cfg.crop_height, train_cfg.crop_width, rng);
    }
    double loss_value = 0.0;
    try {
      const auto costs = net.forward(sample.left, sample.right);
      const auto posterior = cost_to_posterior(costs);
      if (count_valid(loss_mask(posterior, sample.gt, sample.mask)) > 0) {
        auto loss =
            compute_loss(train_cfg.loss, posterior, sample.gt, sample.mask, train_cfg.b);
        loss_value = loss.value.item();
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        loss.value.backward();
        optimizer.step(net.parameters(), scheduled_learning_rate(train_cfg, iter));
        net.zero_grad();
        loss_sum += loss_value;
        ++loss_count;
      }
    } catch (const NumericError& e) {
      throw DivergenceError("diverged at iteration " + std::to_string(iter + 1) + ": " +
                            e.what());
    }

    const int done = iter + 1;
    if (done % train_cfg.validate_every != 0 && done != train_cfg.iterations) continue;
    const auto metrics = evaluate(val_set, net, eval_settings);
    TrainLogRow row;
    row.iteration = done;
    row.train_loss = loss_count ? loss_sum / loss_count : std::nan("");
    row.val_3pe = metrics.three_pixel_error;
    row.val_mae = metrics.mean_absolute_error;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.rows.push_back(row);
    loss_sum = 0.0;
    loss_count = 0;
    if (metrics.three_pixel_error < best_3pe) {
      best_3pe = metrics.three_pixel_error;
      result.best = net.cast<float>();
      result.best_iteration = done;
      if (!train_cfg.checkpoint_dir.empty()) {
        save_checkpoint(net, train_cfg.checkpoint_dir + "/best.pdsw");
      }
    }
    if (!train_cfg.log_path.empty()) {
      std::ofstream(train_cfg.log_path) << result.log.to_csv();
    }
  }
  result.last = net;
  if (!train_cfg.checkpoint_dir.empty()) {
    save_checkpoint(net, train_cfg.checkpoint_dir + "/last.pdsw");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: "PDSW", u32 version, u32 count, then per tensor: u32 name
// length, name, u32 rank, u32 extents, float32 values. All integers and
// floats little-endian. The network config sits next to it as JSON.

namespace {

constexpr char kMagic[4] = {'P', 'D', 'S', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(path + ": truncated checkpoint");
  return std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 | std::uint32_t{b[2]} << 16 |
         std::uint32_t{b[3]} << 24;
}

std::string get_string(std::istream& in, std::uint32_t n, const std::string& path) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw FormatError(path + ": truncated checkpoint");
  return s;
}

}  // namespace

std::string checkpoint_config_path(const std::string& checkpoint_path) {
  return std::filesystem::path(checkpoint_path).replace_extension(".json").string();
}

void save_checkpoint(const PdsNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(net.parameters().size()));
  for (const auto& p : net.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (auto e : p.value.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : p.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
  save_net_config(net.config(), checkpoint_config_path(path));
}

PdsNetwork load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + ": not a PDSW checkpoint");
  }
  const auto version = get_u32(in, path);
  if (version != kVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  PdsNetwork net(load_net_config(checkpoint_config_path(path)), 0);
  auto& params = net.parameters();
  const auto count = get_u32(in, path);
  if (count != params.size()) {
    throw FormatError(path + ": " + std::to_string(count) + " tensors, network expects " +
                      std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto name = get_string(in, get_u32(in, path), path);
    if (name != p.name) {
      throw FormatError(path + ": expected tensor " + p.name + ", found " + name);
    }
    Shape shape(get_u32(in, path));
    for (auto& e : shape) e = get_u32(in, path);
    if (shape != p.value.shape()) {
      throw FormatError(path + ": " + name + " has shape " + shape_string(shape) +
                        ", network expects " + shape_string(p.value.shape()));
    }
    auto dst = p.value.mutable_data();
    for (auto& v : dst) v = std::bit_cast<float>(get_u32(in, path));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path + ": trailing bytes after last tensor");
  }
  return net;
}

}  // namespace pds

#include "pds/net_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pds {

NetConfig NetConfig::desk() { return NetConfig{}; }

NetConfig NetConfig::paper() {
  NetConfig cfg;
  cfg.max_disparity = 192;
  cfg.embed_channels = 32;
  cfg.signature_channels = 8;
  cfg.hourglass_base_channels = 16;
  cfg.hourglass_levels = 3;
  cfg.matching_hidden_channels = 32;
  return cfg;
}

void NetConfig::validate() const {
  if (max_disparity < 4 || max_disparity % 4 != 0) {
    throw std::invalid_argument("max_disparity must be a positive multiple of 4, got " +
                                std::to_string(max_disparity));
  }
  const std::pair<const char*, int> widths[] = {
      {"embed_channels", embed_channels},
      {"signature_channels", signature_channels},
      {"hourglass_base_channels", hourglass_base_channels},
      {"matching_hidden_channels", matching_hidden_channels},
      {"hourglass_levels", hourglass_levels},
  };
  for (const auto& [name, value] : widths) {
    if (value < 1) {
      throw std::invalid_argument(std::string(name) + " must be >= 1, got " +
                                  std::to_string(value));
    }
  }
  if (!(norm_eps > 0.0)) throw std::invalid_argument("norm_eps must be > 0");
  if (!(lrelu_slope >= 0.0)) throw std::invalid_argument("lrelu_slope must be >= 0");
}

int NetConfig::head_channels_stage1() const {
  return std::max(2, hourglass_base_channels / 4);
}

int NetConfig::head_channels_stage2() const {
  return std::max(2, hourglass_base_channels / 8);
}

std::string to_json(const NetConfig& cfg) {
  nlohmann::ordered_json j;
  j["max_disparity"] = cfg.max_disparity;
  j["embed_channels"] = cfg.embed_channels;
  j["signature_channels"] = cfg.signature_channels;
  j["hourglass_base_channels"] = cfg.hourglass_base_channels;
  j["hourglass_levels"] = cfg.hourglass_levels;
  j["matching_hidden_channels"] = cfg.matching_hidden_channels;
  j["norm_eps"] = cfg.norm_eps;
  j["lrelu_slope"] = cfg.lrelu_slope;
  return j.dump(2);
}

NetConfig net_config_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("net config: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("net config: expected a JSON object");
  NetConfig cfg;
  auto read = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) {
      try {
        it->get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("net config field ") + key + ": " + e.what());
      }
    }
  };
  read("max_disparity", cfg.max_disparity);
  read("embed_channels", cfg.embed_channels);
  read("signature_channels", cfg.signature_channels);
  read("hourglass_base_channels", cfg.hourglass_base_channels);
  read("hourglass_levels", cfg.hourglass_levels);
  read("matching_hidden_channels", cfg.matching_hidden_channels);
  read("norm_eps", cfg.norm_eps);
  read("lrelu_slope", cfg.lrelu_slope);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* const known[] = {"max_disparity",      "embed_channels",
                                        "signature_channels", "hourglass_base_channels",
                                        "hourglass_levels",   "matching_hidden_channels",
                                        "norm_eps",           "lrelu_slope"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return it.key() == k; }) == std::end(known)) {
      throw std::invalid_argument("net config: unknown field '" + it.key() + "'");
    }
  }
  cfg.validate();
  return cfg;
}

NetConfig load_net_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open net config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return net_config_from_json(ss.str());
}

void save_net_config(const NetConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write net config " + path);
  out << to_json(cfg) << '\n';
}

}  // namespace pds

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pds/net_config.hpp"
#include "pds/ops.hpp"
#include "pds/tensor.hpp"

namespace pds {

/// Matching costs, [D_run/2, H, W]. Slice k scores disparity 2k.
template <typename T>
struct BasicCostTensor {
  BasicTensor<T> values;
  static constexpr double kDisparityStep = 2.0;

  std::size_t slices() const { return values.dim(0); }
  std::size_t height() const { return values.dim(1); }
  std::size_t width() const { return values.dim(2); }
};

using CostTensor = BasicCostTensor<float>;

struct LayerRecord {
  std::string name;
  Shape shape;
};

/// Optional sink for per-layer output shapes of a live forward pass. Names
/// match the rows produced by the architecture analyzer.
using LayerTrace = std::vector<LayerRecord>;

template <typename T>
struct NamedParameter {
  std::string name;
  BasicTensor<T> value;
};

/// Zero-padded horizontal shift of a [C, h, w] right descriptor by `d_q`
/// quarter-resolution pixels. Requires d_q < disparity_slices.
template <typename T>
BasicTensor<T> shift_right_descriptor(const BasicTensor<T>& right_desc, std::size_t d_q,
                                      std::size_t disparity_slices);

/// Embedding (shared between views), bottleneck matching applied at every
/// disparity with shared weights, and a 3-D hourglass regularizer.
template <typename T>
class Network {
 public:
  Network(NetConfig cfg, std::uint64_t seed);

  const NetConfig& config() const { return cfg_; }

  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const BasicTensor<T>& parameter(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// [3, H, W] -> [embed_channels, H/4, W/4]; H, W multiples of 4.
  BasicTensor<T> embed(const BasicTensor<T>& image, LayerTrace* trace = nullptr,
                       const std::string& tag = "left") const;

  /// Descriptor pair (right already shifted) -> [signature_channels, h, w].
  BasicTensor<T> match(const BasicTensor<T>& left_desc,
                       const BasicTensor<T>& right_desc_shifted,
                       LayerTrace* trace = nullptr, const std::string& tag = "d0") const;

  /// Signatures for d_q = 0 .. d_run/4 - 1 stacked into
  /// [signature_channels, d_run/4, h, w].
  BasicTensor<T> match_all(const BasicTensor<T>& left_desc,
                           const BasicTensor<T>& right_desc, int d_run,
                           LayerTrace* trace = nullptr) const;

  /// [signature_channels, d_run/4, h, w] -> [d_run/2, 4h, 4w].
  BasicCostTensor<T> regularize(const BasicTensor<T>& signatures, int d_run = 0,
                                LayerTrace* trace = nullptr) const;

  /// d_run = 0 means the configured max_disparity.
  BasicCostTensor<T> forward(const BasicTensor<T>& left, const BasicTensor<T>& right,
                             int d_run = 0, LayerTrace* trace = nullptr) const;

  /// Same architecture and parameter values in another scalar type.
  template <typename U>
  Network<U> cast() const;

 private:
  template <typename U>
  friend class Network;

  struct NoInit {};
  Network(NetConfig cfg, NoInit);

  BasicTensor<T> conv2d_layer(const std::string& layer, const BasicTensor<T>& x,
                              std::size_t stride, std::size_t pad) const;
  BasicTensor<T> conv3d_layer(const std::string& layer, const BasicTensor<T>& x,
                              std::size_t stride) const;
  // Transposed conv sized to land exactly on `target` spatial extents.
  BasicTensor<T> up_layer(const std::string& layer, const BasicTensor<T>& x,
                          Extent3 stride, Extent3 target) const;
  BasicTensor<T> norm(const std::string& layer, const BasicTensor<T>& x) const;
  BasicTensor<T> act(const BasicTensor<T>& x) const;

  void add_param(const std::string& name, Shape shape, double bound,
                 std::mt19937_64& rng);
  void add_norm(const std::string& layer, std::size_t channels);
  void add_conv(const std::string& layer, Shape weight_shape, bool transposed,
                bool norm, std::mt19937_64& rng);

  NetConfig cfg_;
  std::vector<NamedParameter<T>> params_;
};

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out(cfg_, typename Network<U>::NoInit{});
  for (const auto& p : params_) {
    out.params_.push_back({p.name, p.value.template cast<U>()});
  }
  return out;
}

using PdsNetwork = Network<float>;

/// Number of output extents of a stride-2, k=3, pad=1 convolution.
inline std::size_t halved_extent(std::size_t n) { return (n + 1) / 2; }

}  // namespace pds

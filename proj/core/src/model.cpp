#include "pds/model.hpp"

#include <cmath>
#include <stdexcept>

namespace pds {

namespace {

void record(LayerTrace* trace, std::string name, const Shape& shape) {
  if (trace) trace->push_back({std::move(name), shape});
}

std::size_t kernel_volume(const Shape& weight_shape) {
  std::size_t v = 1;
  for (std::size_t i = 2; i < weight_shape.size(); ++i) v *= weight_shape[i];
  return v;
}

}  // namespace

template <typename T>
BasicTensor<T> shift_right_descriptor(const BasicTensor<T>& right_desc, std::size_t d_q,
                                      std::size_t disparity_slices) {
  if (d_q >= disparity_slices) {
    throw std::out_of_range("shift " + std::to_string(d_q) + " outside [0, " +
                            std::to_string(disparity_slices) + ")");
  }
  if (right_desc.rank() != 3) {
    throw ShapeError("descriptor must be [C, h, w], got " + shape_string(right_desc.shape()));
  }
  return shift_right(right_desc, d_q);
}

template <typename T>
Network<T>::Network(NetConfig cfg, NoInit) : cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
Network<T>::Network(NetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = cfg_.embed_channels;
  const std::size_t sig = cfg_.signature_channels;
  const std::size_t hidden = cfg_.matching_hidden_channels;
  const std::size_t base = cfg_.hourglass_base_channels;
  const std::size_t levels = cfg_.hourglass_levels;

  add_conv("embed.conv1", {c, 3, 5, 5}, false, true, rng);
  add_conv("embed.conv2", {c, c, 3, 3}, false, true, rng);
  for (const char* block : {"embed.res1", "embed.res2"}) {
    add_conv(std::string(block) + ".conv1", {c, c, 3, 3}, false, true, rng);
    add_conv(std::string(block) + ".conv2", {c, c, 3, 3}, false, true, rng);
  }

  add_conv("match.conv1", {hidden, 2 * c, 1, 1}, false, true, rng);
  add_conv("match.conv2", {sig, hidden, 1, 1}, false, false, rng);

  add_conv("reg.stem", {base, sig, 3, 3, 3}, false, true, rng);
  for (std::size_t l = 1; l <= levels; ++l) {
    add_conv("reg.down" + std::to_string(l), {base << l, base << (l - 1), 3, 3, 3}, false,
             true, rng);
  }
  for (std::size_t l = levels; l >= 1; --l) {
    add_conv("reg.up" + std::to_string(l), {base << l, base << (l - 1), 3, 3, 3}, true,
             true, rng);
  }
  const std::size_t h1 = cfg_.head_channels_stage1();
  const std::size_t h2 = cfg_.head_channels_stage2();
  add_conv("reg.head1", {base, h1, 3, 3, 3}, true, true, rng);
  add_conv("reg.head2", {h1, h2, 3, 3, 3}, true, true, rng);
  add_conv("reg.out", {1, h2, 3, 3, 3}, false, false, rng);
}

template <typename T>
void Network<T>::add_param(const std::string& name, Shape shape, double bound,
                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  params_.push_back({name, BasicTensor<T>::from(std::move(shape), std::move(values), true)});
}

template <typename T>
void Network<T>::add_norm(const std::string& layer, std::size_t channels) {
  params_.push_back({layer + ".norm.gamma", BasicTensor<T>::full({channels}, T(1), true)});
  params_.push_back({layer + ".norm.beta", BasicTensor<T>::zeros({channels}, true)});
}

template <typename T>
void Network<T>::add_conv(const std::string& layer, Shape weight_shape, bool transposed,
                          bool norm, std::mt19937_64& rng) {
  // Uniform fan-in rule; fan_in uses axis 1 for both conv and transposed conv.
  const double fan_in = static_cast<double>(weight_shape[1] * kernel_volume(weight_shape));
  const double bound = 1.0 / std::sqrt(fan_in);
  const std::size_t out_channels = transposed ? weight_shape[1] : weight_shape[0];
  add_param(layer + ".weight", weight_shape, bound, rng);
  add_param(layer + ".bias", {out_channels}, bound, rng);
  if (norm) add_norm(layer, out_channels);
}

template <typename T>
const BasicTensor<T>& Network<T>::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
BasicTensor<T> Network<T>::conv2d_layer(const std::string& layer, const BasicTensor<T>& x,
                                        std::size_t stride, std::size_t pad) const {
  return conv2d(x, parameter(layer + ".weight"), parameter(layer + ".bias"), stride, pad);
}

template <typename T>
BasicTensor<T> Network<T>::conv3d_layer(const std::string& layer, const BasicTensor<T>& x,
                                        std::size_t stride) const {
  return conv3d(x, parameter(layer + ".weight"), parameter(layer + ".bias"), stride,
                std::size_t{1});
}

template <typename T>
BasicTensor<T> Network<T>::up_layer(const std::string& layer, const BasicTensor<T>& x,
                                    Extent3 stride, Extent3 target) const {
  Extent3 output_padding{};
  for (std::size_t ax = 0; ax < 3; ++ax) {
    // Kernel 3, pad 1: natural extent is stride*(n-1) + 1.
    const std::size_t natural = stride[ax] * (x.dim(ax + 1) - 1) + 1;
    if (target[ax] < natural || target[ax] - natural >= stride[ax]) {
      throw ShapeError(layer + ": cannot upsample axis " + std::to_string(ax + 1) +
                       " from " + std::to_string(x.dim(ax + 1)) + " to " +
                       std::to_string(target[ax]));
    }
    output_padding[ax] = target[ax] - natural;
  }
  return transposed_conv3d(x, parameter(layer + ".weight"), parameter(layer + ".bias"),
                           stride, Extent3{1, 1, 1}, output_padding);
}

template <typename T>
BasicTensor<T> Network<T>::norm(const std::string& layer, const BasicTensor<T>& x) const {
  return instance_norm(x, parameter(layer + ".norm.gamma"), parameter(layer + ".norm.beta"),
                       cfg_.norm_eps);
}

template <typename T>
BasicTensor<T> Network<T>::act(const BasicTensor<T>& x) const {
  return leaky_relu(x, cfg_.lrelu_slope);
}

template <typename T>
BasicTensor<T> Network<T>::embed(const BasicTensor<T>& image, LayerTrace* trace,
                                 const std::string& tag) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("embed: expected [3, H, W] image, got " + shape_string(image.shape()));
  }
  if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0) {
    throw ShapeError("embed: image extents " + shape_string(image.shape()) +
                     " must be multiples of 4 on axes 1 and 2");
  }
  const std::string p = tag + "/";
  auto x = act(norm("embed.conv1", conv2d_layer("embed.conv1", image, 2, 2)));
  record(trace, p + "embed.conv1", x.shape());
  x = act(norm("embed.conv2", conv2d_layer("embed.conv2", x, 2, 1)));
  record(trace, p + "embed.conv2", x.shape());
  for (const std::string block : {"embed.res1", "embed.res2"}) {
    auto r = act(norm(block + ".conv1", conv2d_layer(block + ".conv1", x, 1, 1)));
    record(trace, p + block + ".conv1", r.shape());
    r = norm(block + ".conv2", conv2d_layer(block + ".conv2", r, 1, 1));
    x = act(x + r);
    record(trace, p + block + ".conv2", x.shape());
  }
  return x;
}

template <typename T>
BasicTensor<T> Network<T>::match(const BasicTensor<T>& left_desc,
                                 const BasicTensor<T>& right_desc_shifted, LayerTrace* trace,
                                 const std::string& tag) const {
  if (left_desc.shape() != right_desc_shifted.shape()) {
    throw ShapeError("match: descriptor shapes differ (" + shape_string(left_desc.shape()) +
                     " vs " + shape_string(right_desc_shifted.shape()) + ")");
  }
  if (left_desc.rank() != 3 ||
      left_desc.dim(0) != static_cast<std::size_t>(cfg_.embed_channels)) {
    throw ShapeError("match: descriptors must be [" + std::to_string(cfg_.embed_channels) +
                     ", h, w], got " + shape_string(left_desc.shape()));
  }
  const std::string p = tag + "/";
  auto x = concat<T>({left_desc, right_desc_shifted}, 0);
  record(trace, p + "match.concat", x.shape());
  x = act(norm("match.conv1", conv2d_layer("match.conv1", x, 1, 0)));
  record(trace, p + "match.conv1", x.shape());
  x = conv2d_layer("match.conv2", x, 1, 0);
  record(trace, p + "match.conv2", x.shape());
  return x;
}

template <typename T>
BasicTensor<T> Network<T>::match_all(const BasicTensor<T>& left_desc,
                                     const BasicTensor<T>& right_desc, int d_run,
                                     LayerTrace* trace) const {
  if (d_run < 4 || d_run % 4 != 0) {
    throw std::invalid_argument("disparity range must be a positive multiple of 4, got " +
                                std::to_string(d_run));
  }
  const std::size_t slices = static_cast<std::size_t>(d_run) / 4;
  std::vector<BasicTensor<T>> signatures;
  signatures.reserve(slices);
  for (std::size_t d = 0; d < slices; ++d) {
    const std::string tag = "d" + std::to_string(d);
    auto shifted = shift_right_descriptor(right_desc, d, slices);
    record(trace, tag + "/match.shift", shifted.shape());
    signatures.push_back(match(left_desc, shifted, trace, tag));
  }
  auto out = stack(signatures, 1);
  record(trace, "match.stack", out.shape());
  return out;
}

template <typename T>
BasicCostTensor<T> Network<T>::regularize(const BasicTensor<T>& signatures, int d_run,
                                          LayerTrace* trace) const {
  if (d_run == 0) d_run = cfg_.max_disparity;
  if (signatures.rank() != 4 ||
      signatures.dim(0) != static_cast<std::size_t>(cfg_.signature_channels)) {
    throw ShapeError("regularize: expected [" + std::to_string(cfg_.signature_channels) +
                     ", D/4, h, w], got " + shape_string(signatures.shape()));
  }
  if (d_run % 4 != 0 || signatures.dim(1) != static_cast<std::size_t>(d_run / 4)) {
    throw ShapeError("regularize: disparity axis 1 has extent " +
                     std::to_string(signatures.dim(1)) + ", expected D/4 = " +
                     std::to_string(d_run / 4));
  }
  auto x = act(norm("reg.stem", conv3d_layer("reg.stem", signatures, 1)));
  record(trace, "reg.stem", x.shape());
  std::vector<BasicTensor<T>> skips{x};
  for (int l = 1; l <= cfg_.hourglass_levels; ++l) {
    const std::string layer = "reg.down" + std::to_string(l);
    x = act(norm(layer, conv3d_layer(layer, x, 2)));
    record(trace, layer, x.shape());
    skips.push_back(x);
  }
  for (int l = cfg_.hourglass_levels; l >= 1; --l) {
    const std::string layer = "reg.up" + std::to_string(l);
    const auto& skip = skips[static_cast<std::size_t>(l - 1)];
    x = act(norm(layer, up_layer(layer, x, {2, 2, 2},
                                 {skip.dim(1), skip.dim(2), skip.dim(3)})));
    x = x + skip;
    record(trace, layer, x.shape());
  }
  const std::size_t dq = x.dim(1), hq = x.dim(2), wq = x.dim(3);
  x = act(norm("reg.head1", up_layer("reg.head1", x, {2, 2, 2}, {2 * dq, 2 * hq, 2 * wq})));
  record(trace, "reg.head1", x.shape());
  x = act(norm("reg.head2", up_layer("reg.head2", x, {1, 2, 2}, {2 * dq, 4 * hq, 4 * wq})));
  record(trace, "reg.head2", x.shape());
  x = conv3d_layer("reg.out", x, 1);
  x = reshape(x, Shape{x.dim(1), x.dim(2), x.dim(3)});
  record(trace, "reg.out", x.shape());
  return {x};
}

template <typename T>
BasicCostTensor<T> Network<T>::forward(const BasicTensor<T>& left,
                                       const BasicTensor<T>& right, int d_run,
                                       LayerTrace* trace) const {
  if (left.shape() != right.shape()) {
    throw ShapeError("forward: left " + shape_string(left.shape()) + " and right " +
                     shape_string(right.shape()) + " images differ in size");
  }
  if (d_run == 0) d_run = cfg_.max_disparity;
  auto left_desc = embed(left, trace, "left");
  auto right_desc = embed(right, trace, "right");
  auto signatures = match_all(left_desc, right_desc, d_run, trace);
  return regularize(signatures, d_run, trace);
}

template class Network<float>;
template class Network<double>;
template BasicTensor<float> shift_right_descriptor(const BasicTensor<float>&, std::size_t,
                                                   std::size_t);
template BasicTensor<double> shift_right_descriptor(const BasicTensor<double>&, std::size_t,
                                                    std::size_t);

}  // namespace pds

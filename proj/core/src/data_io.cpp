#include "pds/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace pds {

namespace fs = std::filesystem;

void StereoSample::validate() const {
  const std::size_t h = gt.height, w = gt.width;
  const Shape image_shape{3, h, w};
  if (left.shape() != image_shape || right.shape() != image_shape) {
    throw std::invalid_argument("sample '" + name + "': images " + shape_string(left.shape()) +
                                "/" + shape_string(right.shape()) + " vs gt " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  if (!mask.same_extent(gt)) throw std::invalid_argument("sample '" + name + "': mask extent");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask.values[i] && !(std::isfinite(gt.values[i]) && gt.values[i] >= 0.0f)) {
      throw std::invalid_argument("sample '" + name + "': invalid gt value at pixel " +
                                  std::to_string(i));
    }
  }
}

// ---------------------------------------------------------------------------
// PFM

namespace {

std::string next_token(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  return buf.substr(start, pos - start);
}

std::size_t parse_extent(const std::string& token, const std::string& path) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size() || v <= 0) throw FormatError(path + ": bad PFM extent '" + token + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

PfmImage read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  const std::string magic = next_token(buf, pos);
  PfmImage img;
  if (magic == "Pf") {
    img.channels = 1;
  } else if (magic == "PF") {
    img.channels = 3;
  } else {
    throw FormatError(path + ": bad PFM magic '" + magic + "'");
  }
  img.width = parse_extent(next_token(buf, pos), path);
  img.height = parse_extent(next_token(buf, pos), path);
  const std::string scale_token = next_token(buf, pos);
  double scale = 0.0;
  try {
    scale = std::stod(scale_token);
  } catch (const std::exception&) {
    throw FormatError(path + ": bad PFM scale '" + scale_token + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw FormatError(path + ": PFM scale is zero");
  ++pos;  // single whitespace byte before the payload

  const Endian endian = scale < 0.0 ? Endian::kLittle : Endian::kBig;
  const bool swap = (endian == Endian::kLittle) != (std::endian::native == std::endian::little);
  const std::size_t count = img.width * img.height * img.channels;
  if (pos > buf.size() || buf.size() - pos < count * 4) {
    throw FormatError(path + ": truncated PFM payload");
  }
  img.values.resize(count);
  const std::size_t row = img.width * img.channels;
  for (std::size_t y = 0; y < img.height; ++y) {
    // File rows run bottom-to-top.
    const char* src = buf.data() + pos + (img.height - 1 - y) * row * 4;
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, src + 4 * i, 4);
      if (swap) bits = __builtin_bswap32(bits);
      std::memcpy(&img.values[y * row + i], &bits, 4);
    }
  }
  return img;
}

void write_pfm(const std::string& path, const PfmImage& image, Endian endian) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("PFM supports 1 or 3 channels");
  }
  if (image.values.size() != image.width * image.height * image.channels) {
    throw std::invalid_argument("PFM value count does not match extents");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << (image.channels == 1 ? "Pf" : "PF") << '\n'
      << image.width << ' ' << image.height << '\n'
      << (endian == Endian::kLittle ? "-1.0" : "1.0") << '\n';
  const bool swap = (endian == Endian::kLittle) != (std::endian::native == std::endian::little);
  const std::size_t row = image.width * image.channels;
  std::vector<char> bytes(row * 4);
  for (std::size_t y = image.height; y-- > 0;) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &image.values[y * row + i], 4);
      if (swap) bits = __builtin_bswap32(bits);
      std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

PfmImage to_pfm(const DisparityMap& map) {
  return PfmImage{map.width, map.height, 1, map.values};
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

// Left pixel -> winning right column via a z-buffer on disparity.
ValidityMask right_visibility(const DisparityMap& gt) {
  ValidityMask visible(gt.height, gt.width, std::uint8_t{0});
  std::vector<long> owner(gt.width);
  std::vector<float> depth(gt.width);
  for (std::size_t y = 0; y < gt.height; ++y) {
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(depth.begin(), depth.end(), -1.0f);
    for (std::size_t x = 0; x < gt.width; ++x) {
      const float d = gt.at(y, x);
      const long xr = static_cast<long>(x) - static_cast<long>(std::lround(d));
      if (xr < 0 || xr >= static_cast<long>(gt.width)) continue;
      if (d > depth[xr]) {
        depth[xr] = d;
        owner[xr] = static_cast<long>(x);
      }
    }
    for (std::size_t xr = 0; xr < gt.width; ++xr) {
      if (owner[xr] >= 0) visible.at(y, static_cast<std::size_t>(owner[xr])) = 1;
    }
  }
  return visible;
}

}  // namespace

ValidityMask visible_in_right(const DisparityMap& gt) { return right_visibility(gt); }

StereoSample make_synthetic_stereogram(std::uint64_t seed, std::size_t height,
                                       std::size_t width, int max_disp, int n_layers) {
  if (max_disp < 0 || 2 * static_cast<std::size_t>(max_disp) >= width) {
    throw std::invalid_argument("synthetic stereogram needs 0 <= max_disp < width/2");
  }
  if (n_layers < 0) throw std::invalid_argument("n_layers must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dot(0.0f, 1.0f);
  const std::size_t plane = height * width;

  std::vector<float> left(3 * plane);
  for (auto& v : left) v = dot(rng);

  std::uniform_int_distribution<int> disparity(0, max_disp);
  DisparityMap gt(height, width, static_cast<float>(disparity(rng)));

  struct Rect {
    int disparity;
    std::size_t top, left, h, w;
  };
  std::vector<Rect> layers;
  std::uniform_int_distribution<std::size_t> rect_h(std::max<std::size_t>(1, height / 8),
                                                    std::max<std::size_t>(1, height / 2));
  std::uniform_int_distribution<std::size_t> rect_w(std::max<std::size_t>(1, width / 8),
                                                    std::max<std::size_t>(1, width / 2));
  for (int i = 0; i < n_layers; ++i) {
    Rect r{};
    r.disparity = disparity(rng);
    r.h = rect_h(rng);
    r.w = rect_w(rng);
    r.top = std::uniform_int_distribution<std::size_t>(0, height - r.h)(rng);
    r.left = std::uniform_int_distribution<std::size_t>(0, width - r.w)(rng);
    layers.push_back(r);
  }
  std::stable_sort(layers.begin(), layers.end(),
                   [](const Rect& a, const Rect& b) { return a.disparity < b.disparity; });
  for (const auto& r : layers) {
    for (std::size_t y = r.top; y < r.top + r.h; ++y)
      for (std::size_t x = r.left; x < r.left + r.w; ++x)
        gt.at(y, x) = static_cast<float>(r.disparity);
  }

  const auto visible = right_visibility(gt);
  std::vector<float> right(3 * plane);
  std::vector<std::uint8_t> filled(plane, 0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!visible.at(y, x)) continue;
      const std::size_t xr = x - static_cast<std::size_t>(gt.at(y, x));
      for (std::size_t c = 0; c < 3; ++c) {
        right[c * plane + y * width + xr] = left[c * plane + y * width + x];
      }
      filled[y * width + xr] = 1;
    }
  }
  for (std::size_t i = 0; i < plane; ++i) {
    if (filled[i]) continue;
    for (std::size_t c = 0; c < 3; ++c) right[c * plane + i] = dot(rng);
  }

  StereoSample s;
  s.left = Tensor::from({3, height, width}, std::move(left));
  s.right = Tensor::from({3, height, width}, std::move(right));
  s.gt = std::move(gt);
  s.mask = ValidityMask(height, width, std::uint8_t{1});
  s.name = "synthetic_" + std::to_string(seed);
  return s;
}

std::vector<StereoSample> make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.min_layers > spec.max_layers) throw std::invalid_argument("min_layers > max_layers");
  std::vector<StereoSample> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    // SplitMix64-style mixing so neighbouring seeds give unrelated streams.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    const int span = spec.max_layers - spec.min_layers + 1;
    const int layers = spec.min_layers + static_cast<int>(z % static_cast<std::uint64_t>(span));
    auto sample = make_synthetic_stereogram(z, spec.height, spec.width, spec.max_disparity, layers);
    sample.name = "sample_" + std::to_string(i);
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Preprocessing

namespace {

Tensor normalize_image(const Tensor& image) {
  auto src = image.data();
  double mu = 0.0;
  for (float v : src) mu += v;
  mu /= static_cast<double>(src.size());
  double var = 0.0;
  for (float v : src) var += (v - mu) * (v - mu);
  var /= static_cast<double>(src.size());
  const double sd = std::max(std::sqrt(var), 1e-6);
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<float>((src[i] - mu) / sd);
  return Tensor::from(image.shape(), std::move(out));
}

Tensor crop_image(const Tensor& image, std::size_t top, std::size_t left, std::size_t h,
                  std::size_t w) {
  const std::size_t ch = image.dim(0), src_h = image.dim(1), src_w = image.dim(2);
  auto src = image.data();
  std::vector<float> out(ch * h * w);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(src.data() + (c * src_h + top + y) * src_w + left, w,
                  out.data() + (c * h + y) * w);
  return Tensor::from({ch, h, w}, std::move(out));
}

template <typename V>
Map2D<V> crop_map(const Map2D<V>& m, std::size_t top, std::size_t left, std::size_t h,
                  std::size_t w) {
  Map2D<V> out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(y, x) = m.at(top + y, left + x);
  return out;
}

}  // namespace

StereoSample normalize(const StereoSample& sample) {
  StereoSample out = sample;
  out.left = normalize_image(sample.left);
  out.right = normalize_image(sample.right);
  return out;
}

StereoSample crop(const StereoSample& sample, std::size_t top, std::size_t left,
                  std::size_t crop_h, std::size_t crop_w) {
  if (crop_h == 0 || crop_w == 0 || top + crop_h > sample.height() ||
      left + crop_w > sample.width()) {
    throw std::invalid_argument("crop window " + std::to_string(crop_h) + "x" +
                                std::to_string(crop_w) + " at (" + std::to_string(top) + "," +
                                std::to_string(left) + ") exceeds " +
                                std::to_string(sample.height()) + "x" +
                                std::to_string(sample.width()));
  }
  StereoSample out;
  out.left = crop_image(sample.left, top, left, crop_h, crop_w);
  out.right = crop_image(sample.right, top, left, crop_h, crop_w);
  out.gt = crop_map(sample.gt, top, left, crop_h, crop_w);
  out.mask = crop_map(sample.mask, top, left, crop_h, crop_w);
  out.name = sample.name;
  return out;
}

StereoSample random_crop(const StereoSample& sample, std::size_t crop_h, std::size_t crop_w,
                         std::mt19937_64& rng) {
  if (crop_h % 4 != 0 || crop_w % 4 != 0) {
    throw std::invalid_argument("crop extents must be multiples of 4");
  }
  if (crop_h > sample.height() || crop_w > sample.width()) {
    throw std::invalid_argument("crop " + std::to_string(crop_h) + "x" +
                                std::to_string(crop_w) + " larger than image " +
                                std::to_string(sample.height()) + "x" +
                                std::to_string(sample.width()));
  }
  const std::size_t top =
      std::uniform_int_distribution<std::size_t>(0, sample.height() - crop_h)(rng);
  const std::size_t left =
      std::uniform_int_distribution<std::size_t>(0, sample.width() - crop_w)(rng);
  return crop(sample, top, left, crop_h, crop_w);
}

StereoSample pad_to_multiple_of_4(const StereoSample& sample) {
  const std::size_t h = sample.height(), w = sample.width();
  const std::size_t ph = (h + 3) / 4 * 4, pw = (w + 3) / 4 * 4;
  if (ph == h && pw == w) return sample;
  auto pad_image = [&](const Tensor& img) {
    auto src = img.data();
    std::vector<float> out(3 * ph * pw);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x)
          out[(c * ph + y) * pw + x] =
              src[(c * h + std::min(y, h - 1)) * w + std::min(x, w - 1)];
    return Tensor::from({3, ph, pw}, std::move(out));
  };
  StereoSample out;
  out.left = pad_image(sample.left);
  out.right = pad_image(sample.right);
  out.gt = DisparityMap(ph, pw, 0.0f);
  out.mask = ValidityMask(ph, pw, std::uint8_t{0});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      out.gt.at(y, x) = sample.gt.at(y, x);
      out.mask.at(y, x) = sample.mask.at(y, x);
    }
  out.name = sample.name;
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).lexically_normal().string();
  };
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected 3 tab-separated paths, got " +
                        std::to_string(fields.size()));
    }
    manifest.entries.push_back({resolve(fields[0]), resolve(fields[1]), resolve(fields[2])});
  }
  return manifest;
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  for (const auto& e : manifest.entries) out << e.left << '\t' << e.right << '\t' << e.gt << '\n';
}

StereoSample load_sample(const ManifestEntry& entry) {
  for (const auto* p : {&entry.left, &entry.right, &entry.gt}) {
    if (!fs::exists(*p)) throw std::runtime_error("missing dataset file " + *p);
  }
  StereoSample s;
  s.left = read_png_image(entry.left);
  s.right = read_png_image(entry.right);
  std::string ext = fs::path(entry.gt).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".pfm") {
    const auto pfm = read_pfm(entry.gt);
    s.gt = DisparityMap(pfm.height, pfm.width, 0.0f);
    s.mask = ValidityMask(pfm.height, pfm.width, std::uint8_t{0});
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
      const float d = pfm.values[i * pfm.channels];
      s.gt.values[i] = d;
      s.mask.values[i] = std::isfinite(d) && d >= 0.0f;
      if (!s.mask.values[i]) s.gt.values[i] = 0.0f;
    }
  } else {
    auto kitti = read_kitti_disparity(entry.gt);
    s.gt = std::move(kitti.gt);
    s.mask = std::move(kitti.mask);
  }
  s.name = fs::path(entry.left).stem().string();
  s.validate();
  return s;
}

std::vector<StereoSample> load_dataset(const DatasetManifest& manifest) {
  std::vector<StereoSample> out;
  for (const auto& entry : manifest.entries) {
    auto s = load_sample(entry);
    if (manifest.max_disparity > 0.0) {
      bool keep = true;
      for (std::size_t i = 0; i < s.gt.size() && keep; ++i) {
        keep = !(s.mask.values[i] && s.gt.values[i] > manifest.max_disparity);
      }
      if (!keep) continue;
    }
    out.push_back(std::move(s));
  }
  return out;
}

ManifestEntry save_sample(const std::string& dir, const StereoSample& sample) {
  fs::create_directories(dir);
  ManifestEntry e{sample.name + "_left.png", sample.name + "_right.png", sample.name + "_gt.pfm"};
  write_png_image((fs::path(dir) / e.left).string(), sample.left);
  write_png_image((fs::path(dir) / e.right).string(), sample.right);
  DisparityMap gt = sample.gt;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!sample.mask.values[i]) gt.values[i] = std::numeric_limits<float>::infinity();
  }
  write_pfm((fs::path(dir) / e.gt).string(), to_pfm(gt));
  return e;
}

}  // namespace pds

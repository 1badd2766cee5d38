#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pds/map2d.hpp"
#include "pds/tensor.hpp"

namespace pds {

/// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Left/right [3, H, W] images with ground truth. Images hold [0, 1] values
/// until `normalize` is applied.
struct StereoSample {
  Tensor left;
  Tensor right;
  DisparityMap gt;
  ValidityMask mask;
  std::string name;

  std::size_t height() const { return gt.height; }
  std::size_t width() const { return gt.width; }
  /// Throws std::invalid_argument if extents disagree or a valid gt value is
  /// negative or non-finite.
  void validate() const;
};

// ---------------------------------------------------------------------------
// PFM

enum class Endian { kLittle, kBig };

struct PfmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;   // 1 ("Pf") or 3 ("PF")
  std::vector<float> values;  // rows top-to-bottom, channels interleaved
};

PfmImage read_pfm(const std::string& path);
void write_pfm(const std::string& path, const PfmImage& image, Endian endian = Endian::kLittle);
PfmImage to_pfm(const DisparityMap& map);

// ---------------------------------------------------------------------------
// PNG

struct KittiDisparity {
  DisparityMap gt;
  ValidityMask mask;
};

/// 16-bit single-channel PNG, disparity = stored / 256, stored 0 = invalid.
KittiDisparity read_kitti_disparity(const std::string& path);
void write_kitti_disparity(const std::string& path, const DisparityMap& gt,
                           const ValidityMask& mask);

/// 8- or 16-bit gray/RGB(A) PNG as a [3, H, W] tensor scaled to [0, 1].
Tensor read_png_image(const std::string& path);
/// Writes [3, H, W] values in [0, 1] as a 16-bit RGB PNG.
void write_png_image(const std::string& path, const Tensor& image);

// ---------------------------------------------------------------------------
// Synthetic data

/// Random-dot stereo pair: a constant-disparity background plus `n_layers`
/// rectangles with integer disparities in [0, max_disp]; larger disparity is
/// nearer and occludes. Right-image pixels uncovered by any left pixel get
/// fresh random dots. Occluded left pixels stay valid in the ground truth.
StereoSample make_synthetic_stereogram(std::uint64_t seed, std::size_t height,
                                       std::size_t width, int max_disp, int n_layers);

struct SyntheticSpec {
  std::size_t count = 16;
  std::size_t height = 32;
  std::size_t width = 64;
  int max_disparity = 24;
  int min_layers = 1;
  int max_layers = 4;
};

/// Deterministic dataset: sample i depends only on (seed, i).
std::vector<StereoSample> make_synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

/// Left pixels whose match lands inside the right image and is not covered
/// by a nearer surface.
ValidityMask visible_in_right(const DisparityMap& gt);

// ---------------------------------------------------------------------------
// Preprocessing

/// Each image independently to zero mean and unit variance over all
/// channels and pixels; std is floored at 1e-6.
StereoSample normalize(const StereoSample& sample);

StereoSample crop(const StereoSample& sample, std::size_t top, std::size_t left,
                  std::size_t crop_h, std::size_t crop_w);

/// Same window for images, gt and mask. Crop extents must be multiples of 4.
StereoSample random_crop(const StereoSample& sample, std::size_t crop_h, std::size_t crop_w,
                         std::mt19937_64& rng);

/// Edge-replicates images on the right/bottom to multiples of 4; padded gt
/// is invalid.
StereoSample pad_to_multiple_of_4(const StereoSample& sample);

// ---------------------------------------------------------------------------
// Manifests

struct ManifestEntry {
  std::string left;
  std::string right;
  std::string gt;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  double max_disparity = 0.0;  // 0: no filtering
};

/// One sample per line: left, right and gt paths separated by tabs.
/// Relative paths resolve against the manifest's directory.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& manifest);

/// Loads a sample; gt is PFM (by extension) or KITTI 16-bit PNG.
StereoSample load_sample(const ManifestEntry& entry);

/// Loads all entries and drops samples with any valid gt above the filter.
std::vector<StereoSample> load_dataset(const DatasetManifest& manifest);

/// Writes a sample as <dir>/<name>_left.png, _right.png, _gt.pfm and returns
/// the manifest entry (paths relative to `dir`).
ManifestEntry save_sample(const std::string& dir, const StereoSample& sample);

}  // namespace pds

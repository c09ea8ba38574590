#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "convtrans/tensor.hpp"

namespace cts {

enum class Split { train, val, test };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct Sample {
  std::string id;
  Split split = Split::train;
  Tensor<float> image;               // [C, H, W], values in [0, 1]
  std::vector<std::int32_t> mask;    // [H, W] labels
  std::size_t width() const { return image.dim(2); }
  std::size_t height() const { return image.dim(1); }
  std::size_t channels() const { return image.dim(0); }
};

struct ManifestEntry {
  Split split = Split::train;
  std::string image;  // relative to the manifest directory unless absolute
  std::string mask;
};

struct DatasetManifest {
  std::string root;  // directory holding the manifest
  std::size_t classes = 2;
  std::size_t channels = 1;
  std::vector<ManifestEntry> entries;
};

/// Parses `cts-manifest v1 classes=<K> channels=<C>` followed by
/// `split<TAB>image<TAB>mask` lines. Blank lines and '#' comments are skipped.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& manifest);

/// Loads every entry. PNG images are scaled by 1/255; images ending in
/// ".ctst" are CTS-T1 tensors [C,H,W] or [H,W] with values already in [0,1].
/// Masks are 8-bit grayscale PNGs whose pixel value is the label.
std::vector<Sample> load_dataset(const DatasetManifest& manifest);
std::vector<Sample> load_dataset(const std::string& manifest_path);

/// Seeded shuffle, then round(7n/10) train, round(n/10) val, rest test.
/// Returns the split of each id index.
std::vector<Split> split(std::size_t count, std::uint64_t seed);

/// Bilinear image resampling (half-pixel centres, edge clamped) and
/// nearest-neighbour masks (source index floor(dst * in / out)).
Sample resize(const Sample& sample, std::size_t width, std::size_t height);

// 8-bit PNG access.
struct Image8 {
  std::size_t width = 0, height = 0, channels = 1;  // 1 = gray, 3 = RGB
  std::vector<std::uint8_t> pixels;                // interleaved, row-major
};
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& image);

// Synthetic data.
struct SynthEllipse {
  std::size_t cls = 1;
  double cx = 0, cy = 0;  // pixel-centre coordinates
  double rx = 1, ry = 1;
  double angle = 0;       // radians
};

/// A distractor: an elliptical ring with the foreground intensity that is
/// labelled background.
struct SynthRing {
  double cx = 0, cy = 0;
  double rx = 1, ry = 1, angle = 0;
  double thickness = 2;  // inner radii are (rx - thickness, ry - thickness)
};

struct SynthGeometry {
  std::size_t size = 64;
  std::vector<SynthEllipse> ellipses;  // painted in order; later ones win
  std::vector<SynthRing> rings;
};

/// Inside test at a pixel centre (x, y).
bool ellipse_contains(double cx, double cy, double rx, double ry, double angle, double x, double y);
/// Label map implied by the geometry: background 0, then each ellipse in order.
std::vector<std::int32_t> rasterize(const SynthGeometry& geometry);

struct SynthOptions {
  std::size_t count = 200;
  std::size_t size = 64;
  std::size_t classes = 2;
  std::uint64_t seed = 7;
};

struct SynthItem {
  SynthGeometry geometry;
  Image8 image;  // grayscale
  std::vector<std::int32_t> mask;
};

/// Deterministic in (options.seed, index).
SynthItem synth_item(const SynthOptions& options, std::size_t index);

/// The dataset synth_generate writes, built in memory (ids are the file stems).
std::vector<Sample> synth_samples(const SynthOptions& options);

/// Writes images/NNNN.png, masks/NNNN.png and manifest.txt into `out_dir`;
/// returns the manifest path.
std::string synth_generate(const SynthOptions& options, const std::string& out_dir);

}  // namespace cts

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "convtrans/data.hpp"
#include "convtrans/errors.hpp"
#include "convtrans/rng.hpp"

namespace fs = std::filesystem;

namespace cts {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBackground = 0.3;

// Foreground level of class c; the top class sits at 0.8.
double class_intensity(std::size_t c, std::size_t classes) {
  if (classes <= 2) return 0.8;
  return 0.55 + 0.25 * static_cast<double>(c - 1) / static_cast<double>(classes - 2);
}

bool ring_contains(const SynthRing& r, double x, double y) {
  return ellipse_contains(r.cx, r.cy, r.rx, r.ry, r.angle, x, y) &&
         !ellipse_contains(r.cx, r.cy, r.rx - r.thickness, r.ry - r.thickness, r.angle, x, y);
}

bool far_apart(double ax, double ay, double ar, double bx, double by, double br) {
  return std::hypot(ax - bx, ay - by) > ar + br + 2.0;
}

}  // namespace

bool ellipse_contains(double cx, double cy, double rx, double ry, double angle, double x, double y) {
  if (rx <= 0 || ry <= 0) return false;
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
  return u * u + v * v <= 1.0;
}

std::vector<std::int32_t> rasterize(const SynthGeometry& g) {
  std::vector<std::int32_t> mask(g.size * g.size, 0);
  for (const auto& e : g.ellipses)
    for (std::size_t y = 0; y < g.size; ++y)
      for (std::size_t x = 0; x < g.size; ++x)
        if (ellipse_contains(e.cx, e.cy, e.rx, e.ry, e.angle, static_cast<double>(x), static_cast<double>(y)))
          mask[y * g.size + x] = static_cast<std::int32_t>(e.cls);
  return mask;
}

SynthItem synth_item(const SynthOptions& opt, std::size_t index) {
  if (opt.size < 16) throw ConfigError("synthetic images need size >= 16");
  if (opt.classes < 2 || opt.classes > 256) throw ConfigError("synthetic classes must lie in [2, 256]");
  RngState rng = RngState(opt.seed).fork(index);
  const double size = static_cast<double>(opt.size);
  SynthItem item;
  item.geometry.size = opt.size;

  // Placed shapes as bounding circles, to keep fills and rings apart.
  struct Disc {
    double x, y, r;
  };
  std::vector<Disc> placed;
  auto place = [&](double r_max) {
    for (int attempt = 0;; ++attempt) {
      const double r = r_max;
      const double x = std::round(rng.uniform(r, size - 1 - r)), y = std::round(rng.uniform(r, size - 1 - r));
      bool ok = true;
      for (const auto& d : placed) ok = ok && far_apart(x, y, r, d.x, d.y, d.r);
      if (ok || attempt > 200) {
        placed.push_back({x, y, r});
        return Disc{x, y, r};
      }
    }
  };

  for (std::size_t c = 1; c < opt.classes; ++c) {
    SynthEllipse e;
    e.cls = c;
    e.rx = rng.uniform(0.10, 0.22) * size;
    e.ry = rng.uniform(0.10, 0.22) * size;
    e.angle = rng.uniform(0, kPi);
    const auto d = place(std::max(e.rx, e.ry));
    e.cx = d.x;
    e.cy = d.y;
    item.geometry.ellipses.push_back(e);
  }
  const std::size_t rings = 1 + rng.below(2);
  for (std::size_t k = 0; k < rings; ++k) {
    SynthRing r;
    r.rx = rng.uniform(0.10, 0.20) * size;
    r.ry = rng.uniform(0.10, 0.20) * size;
    r.angle = rng.uniform(0, kPi);
    r.thickness = rng.uniform(1.5, 3.0);
    const auto d = place(std::max(r.rx, r.ry));
    r.cx = d.x;
    r.cy = d.y;
    item.geometry.rings.push_back(r);
  }
  // Each ring borrows the intensity of a random foreground class.
  std::vector<double> ring_level;
  for (std::size_t k = 0; k < rings; ++k)
    ring_level.push_back(class_intensity(1 + rng.below(opt.classes - 1), opt.classes));

  // Low-frequency texture: three random plane waves.
  double fx[3], fy[3], ph[3];
  for (int k = 0; k < 3; ++k) {
    const double theta = rng.uniform(0, 2 * kPi), freq = rng.uniform(1.0, 4.0) * 2 * kPi / size;
    fx[k] = freq * std::cos(theta);
    fy[k] = freq * std::sin(theta);
    ph[k] = rng.uniform(0, 2 * kPi);
  }

  item.mask = rasterize(item.geometry);
  item.image.width = item.image.height = opt.size;
  item.image.channels = 1;
  item.image.pixels.resize(opt.size * opt.size);
  for (std::size_t y = 0; y < opt.size; ++y)
    for (std::size_t x = 0; x < opt.size; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      double v = kBackground;
      for (int k = 0; k < 3; ++k) v += 0.04 * std::sin(fx[k] * px + fy[k] * py + ph[k]);
      for (std::size_t k = 0; k < rings; ++k)
        if (ring_contains(item.geometry.rings[k], px, py)) v = ring_level[k];
      const auto label = item.mask[y * opt.size + x];
      if (label > 0) v = class_intensity(static_cast<std::size_t>(label), opt.classes);
      v += rng.normal(0.0, 0.05);
      item.image.pixels[y * opt.size + x] =
          static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  return item;
}

namespace {

std::string item_name(const SynthOptions& opt, std::size_t i) {
  const int digits = std::max(4, static_cast<int>(std::to_string(opt.count - 1).size()));
  char name[32];
  std::snprintf(name, sizeof name, "%0*zu", digits, i);
  return name;
}

}  // namespace

std::vector<Sample> synth_samples(const SynthOptions& opt) {
  if (opt.count < 10) throw ConfigError("synthetic datasets need at least 10 samples");
  const auto splits = split(opt.count, opt.seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < opt.count; ++i) {
    auto item = synth_item(opt, i);
    Sample s;
    s.id = item_name(opt, i);
    s.split = splits[i];
    s.image = Tensor<float>({1, opt.size, opt.size});
    for (std::size_t p = 0; p < item.image.pixels.size(); ++p)
      s.image[p] = static_cast<float>(item.image.pixels[p]) / 255.0f;
    s.mask = std::move(item.mask);
    out.push_back(std::move(s));
  }
  return out;
}

std::string synth_generate(const SynthOptions& opt, const std::string& out_dir) {
  if (opt.count < 10) throw ConfigError("synthetic datasets need at least 10 samples");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  const auto splits = split(opt.count, opt.seed);
  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.classes = opt.classes;
  manifest.channels = 1;
  for (std::size_t i = 0; i < opt.count; ++i) {
    auto item = synth_item(opt, i);
    const auto name = item_name(opt, i) + ".png";
    const std::string image = "images/" + name, mask = "masks/" + name;
    write_png((fs::path(out_dir) / image).string(), item.image);
    Image8 m{opt.size, opt.size, 1, std::vector<std::uint8_t>(item.mask.begin(), item.mask.end())};
    write_png((fs::path(out_dir) / mask).string(), m);
    manifest.entries.push_back({splits[i], image, mask});
  }
  const auto path = (fs::path(out_dir) / "manifest.txt").string();
  write_manifest(path, manifest);
  return path;
}

}  // namespace cts

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "convtrans/data.hpp"
#include "convtrans/errors.hpp"
#include "convtrans/ops.hpp"
#include "convtrans/rng.hpp"
#include "convtrans/tensor_io.hpp"

namespace fs = std::filesystem;

namespace cts {
namespace {

std::string resolve(const std::string& root, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? p : (fs::path(root) / path).string();
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw DataError("unknown split '" + name + "' (expected train, val or test)");
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto where = path + ":" + std::to_string(lineno);
    if (!header) {
      std::istringstream ss(line);
      std::string magic, version, tok;
      ss >> magic >> version;
      if (magic != "cts-manifest" || version != "v1")
        throw DataError(where + ": expected header 'cts-manifest v1 classes=<K> channels=<C>'");
      bool classes = false, channels = false;
      while (ss >> tok) {
        try {
          if (tok.rfind("classes=", 0) == 0) {
            m.classes = std::stoul(tok.substr(8));
            classes = true;
          } else if (tok.rfind("channels=", 0) == 0) {
            m.channels = std::stoul(tok.substr(9));
            channels = true;
          } else {
            throw DataError(where + ": unknown header field '" + tok + "'");
          }
        } catch (const std::logic_error&) {
          throw DataError(where + ": malformed header field '" + tok + "'");
        }
      }
      if (!classes || !channels) throw DataError(where + ": header needs classes= and channels=");
      if (m.classes < 2) throw DataError(where + ": classes must be at least 2");
      if (m.channels == 0) throw DataError(where + ": channels must be positive");
      header = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3) throw DataError(where + ": expected split<TAB>image<TAB>mask");
    try {
      m.entries.push_back({parse_split(cols[0]), cols[1], cols[2]});
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (!header) throw DataError("manifest '" + path + "' is empty");
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << "cts-manifest v1 classes=" << m.classes << " channels=" << m.channels << '\n';
  for (const auto& e : m.entries) out << split_name(e.split) << '\t' << e.image << '\t' << e.mask << '\n';
  if (!out) throw DataError("failed writing manifest '" + path + "'");
}

std::vector<Sample> load_dataset(const DatasetManifest& m) {
  std::vector<Sample> out;
  out.reserve(m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    const auto tag = "entry " + std::to_string(i) + " (" + e.image + ")";
    const auto image_path = resolve(m.root, e.image), mask_path = resolve(m.root, e.mask);
    for (const auto& p : {image_path, mask_path})
      if (!fs::exists(p)) throw DataError(tag + ": missing file '" + p + "'");
    Sample s;
    s.id = fs::path(e.image).stem().string();
    s.split = e.split;
    try {
      if (has_suffix(image_path, ".ctst")) {
        auto t = load_tensor(image_path);
        if (t.rank() == 2) t = reshape(t, {1, t.dim(0), t.dim(1)});
        if (t.rank() != 3) throw DataError("tensor image must be [C,H,W] or [H,W], got " + shape_str(t.shape()));
        for (float v : t.data())
          if (!(v >= 0.0f && v <= 1.0f)) throw DataError("tensor image values must lie in [0,1]");
        s.image = t;
      } else {
        const auto img = read_png(image_path);
        s.image = Tensor<float>({img.channels, img.height, img.width});
        auto dst = s.image.data();
        const std::size_t hw = img.width * img.height;
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t c = 0; c < img.channels; ++c)
            dst[c * hw + p] = static_cast<float>(img.pixels[p * img.channels + c]) / 255.0f;
      }
      if (s.channels() != m.channels)
        throw DataError("image has " + std::to_string(s.channels()) + " channels, manifest declares " +
                        std::to_string(m.channels));
      const auto mask = read_png(mask_path);
      if (mask.channels != 1) throw DataError("mask must be single-channel");
      if (mask.width != s.width() || mask.height != s.height())
        throw DataError("mask is " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                        ", image is " + std::to_string(s.width()) + "x" + std::to_string(s.height()));
      s.mask.resize(mask.pixels.size());
      for (std::size_t p = 0; p < mask.pixels.size(); ++p) {
        const auto v = static_cast<std::size_t>(mask.pixels[p]);
        if (v >= m.classes)
          throw DataError("mask label " + std::to_string(v) + " out of range [0," + std::to_string(m.classes) +
                          ") at pixel (" + std::to_string(p / mask.width) + "," + std::to_string(p % mask.width) + ")");
        s.mask[p] = static_cast<std::int32_t>(v);
      }
    } catch (const DataError& err) {
      throw DataError(tag + ": " + err.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> load_dataset(const std::string& manifest_path) {
  return load_dataset(read_manifest(manifest_path));
}

std::vector<Split> split(std::size_t count, std::uint64_t seed) {
  if (count < 10) throw DataError("split needs at least 10 ids, got " + std::to_string(count));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  RngState rng(seed);
  shuffle(order.begin(), order.end(), rng);
    const std::size_t train = (count * 7 + 5) / 10, val = (count + 5) / 10;
  std::vector<Split> out(count);
  for (std::size_t k = 0; k < count; ++k)
    out[order[k]] = k < train ? Split::train : (k < train + val ? Split::val : Split::test);
  return out;
}

Sample resize(const Sample& s, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ConfigError("resize target must be positive");
  const std::size_t c = s.channels(), h = s.height(), w = s.width();
  Sample out;
  out.id = s.id;
  out.split = s.split;
  if (w == width && h == height) {
    out.image = s.image.clone();
    out.mask = s.mask;
    return out;
  }
  out.image = Tensor<float>({c, height, width});
  auto src = s.image.data();
  auto dst = out.image.data();
  auto axis = [](std::size_t out_i, std::size_t in_n, std::size_t out_n, std::size_t& lo, std::size_t& hi,
                 double& t) {
    double x = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(in_n - 1));
    lo = static_cast<std::size_t>(std::floor(x));
    hi = std::min(lo + 1, in_n - 1);
    t = x - static_cast<double>(lo);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double ty;
    axis(y, h, height, y0, y1, ty);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double tx;
      axis(x, w, width, x0, x1, tx);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float* p = src.data() + ch * h * w;
        const double top = p[y0 * w + x0] * (1 - tx) + p[y0 * w + x1] * tx;
        const double bottom = p[y1 * w + x0] * (1 - tx) + p[y1 * w + x1] * tx;
        dst[(ch * height + y) * width + x] = static_cast<float>(top * (1 - ty) + bottom * ty);
      }
    }
  }
  out.mask.resize(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * h / height;
    for (std::size_t x = 0; x < width; ++x) out.mask[y * width + x] = s.mask[sy * w + x * w / width];
  }
  return out;
}

}  // namespace cts

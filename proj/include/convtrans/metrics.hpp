#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cts {

struct BinaryMask {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}
  bool at(std::size_t y, std::size_t x) const { return bits[y * width + x] != 0; }
  void set(std::size_t y, std::size_t x, bool on = true) { bits[y * width + x] = on ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  bool operator==(const BinaryMask&) const = default;
};

/// Pixel coordinate (row, column).
using Pixel = std::pair<std::size_t, std::size_t>;

/// 2|P n G| / (|P| + |G|); 1 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Foreground pixels with a background 4-neighbour (the outside of the image
/// counts as background), in row-major order.
std::vector<Pixel> boundary(const BinaryMask& mask);

enum class AssdStatus : int {
  undefined = 0,  // both masks empty
  defined = 1,
  diagonal = 2,   // exactly one mask empty; the value is the image diagonal
};

struct AssdResult {
  double value = 0;
  AssdStatus status = AssdStatus::undefined;
};

/// Average symmetric surface distance between the boundaries, in pixels.
/// Per-set sums run over boundary pixels in row-major order.
AssdResult assd(const BinaryMask& pred, const BinaryMask& gt);

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `mask` (exact, separable lower-envelope transform). Empty mask: all -1.
std::vector<std::int64_t> squared_distance_transform(const BinaryMask& mask);

enum class WsrtMethod { automatic, exact, normal };

struct WsrtResult {
  double p_value = 1;
  double w_plus = 0;        // sum of ranks of positive differences
  std::size_t n = 0;        // nonzero differences
  WsrtMethod method = WsrtMethod::exact;
};

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences are
/// dropped and ties get average ranks. `automatic` picks exact enumeration for
/// n <= 20 and the tie-corrected normal approximation with continuity
/// correction above. Throws InsufficientData below 5 nonzero differences.
WsrtResult wsrt(const std::vector<double>& a, const std::vector<double>& b,
                WsrtMethod method = WsrtMethod::automatic);

struct EvalEntry {
  std::string image_id;
  std::size_t cls = 1;
  double dc = 0;
  double assd = 0;
  AssdStatus assd_status = AssdStatus::defined;
  bool counted = true;  // false when the ground truth is empty and masking is on

  bool operator==(const EvalEntry&) const = default;
};

struct MeanStd {
  double mean = 0, std = 0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
  bool operator==(const MeanStd&) const = default;
};

struct ClassAggregate {
  std::size_t cls = 0;
  MeanStd dc, assd;
  bool operator==(const ClassAggregate&) const = default;
};

struct EvalReport {
  std::size_t classes = 2;
  bool mask_empty = false;
  std::vector<EvalEntry> entries;  // sorted by image id, then class

  std::vector<ClassAggregate> per_class;
  // Overall: per image, the mean over its counted classes; then mean and std
  // over images. ASSD ignores undefined entries.
  MeanStd overall_dc, overall_assd;

  /// Recomputes the aggregates from `entries`.
  void aggregate();
  /// Per-image overall values {image_id, mean dc, mean assd or nullopt}.
  struct ImageMean {
    std::string image_id;
    std::optional<double> dc, assd;
  };
  std::vector<ImageMean> image_means() const;
};

/// One label map per image, row-major.
struct LabelMap {
  std::string image_id;
  std::size_t width = 0, height = 0;
  std::vector<std::int32_t> labels;
};

/// Scores classes 1..classes-1 of every image (class 0 is background).
EvalReport evaluate(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                    std::size_t classes, bool mask_empty);

/// CSV with columns image_id,class,dc,assd,assd_defined,counted followed by a
/// '#' footer of aggregates. Numbers use 17 significant digits.
void write_report_csv(std::ostream& out, const EvalReport& report);
EvalReport read_report_csv(std::istream& in);
void save_report_csv(const std::string& path, const EvalReport& report);
EvalReport load_report_csv(const std::string& path);

struct CompareRow {
  std::string scope;   // "class <c>" or "overall"
  std::string metric;  // "dc" or "assd"
  std::size_t pairs = 0;
  std::optional<WsrtResult> result;  // empty when the test had too little data
  std::string note;
};

/// Pairs entries by (image_id, class) where both reports count them and runs
/// the signed-rank test per class and on the per-image overall means.
std::vector<CompareRow> compare_reports(const EvalReport& a, const EvalReport& b);

}  // namespace cts

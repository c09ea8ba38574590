#include "convtrans/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "convtrans/errors.hpp"

namespace cts {
namespace {

void require_same_extent(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.width != b.width || a.height != b.height)
    throw DataError(std::string(op) + ": mask extents differ (" + std::to_string(a.width) + "x" +
                    std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                    std::to_string(b.height) + ")");
}

// 1-D squared distance transform of f (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  const std::size_t n = f.size();
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto meet = [&](std::size_t q, std::size_t p) {
    const double dq = static_cast<double>(q), dp = static_cast<double>(p);
    return ((f[q] + dq * dq) - (f[p] + dp * dp)) / (2.0 * dq - 2.0 * dp);
  };
  for (std::size_t q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = xs.size();
  if (xs.empty()) return m;
  double s = 0;
  for (double x : xs) s += x;
  m.mean = s / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return m;
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_extent(pred, gt, "dice");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool a = pred.bits[i] != 0, b = gt.bits[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<Pixel> boundary(const BinaryMask& m) {
  std::vector<Pixel> out;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == m.height || x + 1 == m.width || !m.at(y - 1, x) ||
                        !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1);
      if (edge) out.emplace_back(y, x);
    }
  return out;
}

std::vector<std::int64_t> squared_distance_transform(const BinaryMask& m) {
  const std::size_t w = m.width, h = m.height;
  std::vector<std::int64_t> out(w * h, -1);
  if (m.empty()) return out;
  // Far above any real squared distance, small enough that inf + q^2 stays exact.
  const double inf = 1e12;
  std::vector<double> grid(w * h);
  for (std::size_t i = 0; i < w * h; ++i) grid[i] = m.bits[i] ? 0.0 : inf;
  const std::size_t longest = std::max(w, h);
  std::vector<double> f(longest), d(longest), z(longest + 1);
  std::vector<std::size_t> v(longest);
  // columns
  f.resize(h);
  d.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = grid[y * w + x];
    edt_1d(f, d, v, z);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = std::min(d[y], inf);
  }
  // rows
  f.resize(w);
  d.resize(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) f[x] = grid[y * w + x];
    edt_1d(f, d, v, z);
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = static_cast<std::int64_t>(d[x]);
  }
  return out;
}

AssdResult assd(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_extent(pred, gt, "assd");
  const auto sp = boundary(pred), sg = boundary(gt);
  if (sp.empty() && sg.empty()) return {0.0, AssdStatus::undefined};
  if (sp.empty() || sg.empty())
    return {std::sqrt(static_cast<double>(pred.width * pred.width + pred.height * pred.height)),
            AssdStatus::diagonal};
  BinaryMask bp(pred.width, pred.height), bg(gt.width, gt.height);
  for (auto [y, x] : sp) bp.set(y, x);
  for (auto [y, x] : sg) bg.set(y, x);
  const auto to_g = squared_distance_transform(bg), to_p = squared_distance_transform(bp);
  double sum_p = 0, sum_g = 0;
  for (auto [y, x] : sp) sum_p += std::sqrt(static_cast<double>(to_g[y * gt.width + x]));
  for (auto [y, x] : sg) sum_g += std::sqrt(static_cast<double>(to_p[y * pred.width + x]));
  return {(sum_p + sum_g) / static_cast<double>(sp.size() + sg.size()), AssdStatus::defined};
}

WsrtResult wsrt(const std::vector<double>& a, const std::vector<double>& b, WsrtMethod method) {
  if (a.size() != b.size())
    throw DataError("wsrt: paired samples differ in length (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (!std::isfinite(d)) throw DataError("wsrt: non-finite difference at index " + std::to_string(i));
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n < 5)
    throw InsufficientData("wsrt: " + std::to_string(n) + " nonzero differences, at least 5 required");

  // doubled average ranks of |d|, so ties stay integral
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });
  std::vector<std::size_t> rank2(n);
  double tie_term = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const std::size_t t = j - i + 1;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = i + j + 2;  // 2 * mean of (i+1 .. j+1)
    tie_term += static_cast<double>(t * t * t - t);
    i = j + 1;
  }
  std::size_t w2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0) w2 += rank2[i];

  WsrtResult r;
  r.n = n;
  r.w_plus = static_cast<double>(w2) / 2.0;
  if (method == WsrtMethod::automatic) method = n <= 20 ? WsrtMethod::exact : WsrtMethod::normal;
  r.method = method;
  if (method == WsrtMethod::exact) {
    if (n > 40) throw UsageError("wsrt: exact enumeration limited to 40 differences");
    const std::size_t total = n * (n + 1);
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = reach + 1; s-- > 0;)
        if (counts[s] != 0.0) counts[s + rank2[i]] += counts[s];
      reach += rank2[i];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0, upper = 0;
    for (std::size_t s = 0; s <= total; ++s) {
      if (s <= w2) lower += counts[s];
      if (s >= w2) upper += counts[s];
    }
    r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1) / 4;
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24 - tie_term / 48;
    const double dev = std::max(0.0, std::abs(r.w_plus - mu) - 0.5);
    r.p_value = std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
  }
  return r;
}

void EvalReport::aggregate() {
  std::stable_sort(entries.begin(), entries.end(), [](const EvalEntry& a, const EvalEntry& b) {
    return a.image_id != b.image_id ? a.image_id < b.image_id : a.cls < b.cls;
  });
  per_class.clear();
  for (std::size_t c = 1; c < classes; ++c) {
    std::vector<double> dcs, assds;
    for (const auto& e : entries) {
      if (e.cls != c || !e.counted) continue;
      dcs.push_back(e.dc);
      if (e.assd_status != AssdStatus::undefined) assds.push_back(e.assd);
    }
    per_class.push_back({c, mean_std(dcs), mean_std(assds)});
  }
  std::vector<double> dcs, assds;
  for (const auto& m : image_means()) {
    if (m.dc) dcs.push_back(*m.dc);
    if (m.assd) assds.push_back(*m.assd);
  }
  overall_dc = mean_std(dcs);
  overall_assd = mean_std(assds);
}

std::vector<EvalReport::ImageMean> EvalReport::image_means() const {
  std::vector<ImageMean> out;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t j = i;
    double dc = 0, as = 0;
    std::size_t ndc = 0, nas = 0;
    for (; j < entries.size() && entries[j].image_id == entries[i].image_id; ++j) {
      const auto& e = entries[j];
      if (!e.counted) continue;
      dc += e.dc;
      ++ndc;
      if (e.assd_status != AssdStatus::undefined) {
        as += e.assd;
        ++nas;
      }
    }
    ImageMean m{entries[i].image_id, std::nullopt, std::nullopt};
    if (ndc > 0) m.dc = dc / static_cast<double>(ndc);
    if (nas > 0) m.assd = as / static_cast<double>(nas);
    out.push_back(std::move(m));
    i = j;
  }
  return out;
}

EvalReport evaluate(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                    std::size_t classes, bool mask_empty) {
  if (classes < 2) throw ConfigError("evaluate: classes must be at least 2");
  if (pred.size() != gt.size())
    throw DataError("evaluate: " + std::to_string(pred.size()) + " predictions for " +
                    std::to_string(gt.size()) + " ground-truth maps");
  EvalReport report;
  report.classes = classes;
  report.mask_empty = mask_empty;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& p = pred[i];
    const auto& g = gt[i];
    if (p.image_id != g.image_id)
      throw DataError("evaluate: image " + std::to_string(i) + " ids differ ('" + p.image_id + "' vs '" +
                      g.image_id + "')");
    if (p.width != g.width || p.height != g.height || p.labels.size() != p.width * p.height ||
        g.labels.size() != g.width * g.height)
      throw DataError("evaluate: extents differ for image '" + p.image_id + "'");
    for (const auto* map : {&p, &g})
      for (auto v : map->labels)
        if (v < 0 || static_cast<std::size_t>(v) >= classes)
          throw DataError("evaluate: label " + std::to_string(v) + " out of range [0," +
                          std::to_string(classes) + ") in image '" + map->image_id + "'");
    for (std::size_t c = 1; c < classes; ++c) {
      BinaryMask mp(p.width, p.height), mg(g.width, g.height);
      for (std::size_t k = 0; k < p.labels.size(); ++k) {
        mp.bits[k] = static_cast<std::size_t>(p.labels[k]) == c;
        mg.bits[k] = static_cast<std::size_t>(g.labels[k]) == c;
      }
      const auto a = assd(mp, mg);
      report.entries.push_back({p.image_id, c, dice(mp, mg), a.value, a.status, !(mask_empty && mg.empty())});
    }
  }
  report.aggregate();
  return report;
}

void write_report_csv(std::ostream& out, const EvalReport& r) {
  out << "image_id,class,dc,assd,assd_defined,counted\n";
  for (const auto& e : r.entries) {
    if (e.image_id.find_first_of(",\n\r#") != std::string::npos)
      throw DataError("report: image id '" + e.image_id + "' contains a reserved character");
    out << e.image_id << ',' << e.cls << ',' << fmt(e.dc) << ',' << fmt(e.assd) << ','
        << static_cast<int>(e.assd_status) << ',' << (e.counted ? 1 : 0) << '\n';
  }
  out << "# classes=" << r.classes << " mask_empty=" << (r.mask_empty ? 1 : 0) << '\n';
  auto line = [&](const std::string& scope, const MeanStd& dc, const MeanStd& as) {
    out << "# " << scope << " dc_mean=" << fmt(dc.mean) << " dc_std=" << fmt(dc.std) << " dc_n=" << dc.n
        << " assd_mean=" << fmt(as.mean) << " assd_std=" << fmt(as.std) << " assd_n=" << as.n << '\n';
  };
  for (const auto& c : r.per_class) line("class=" + std::to_string(c.cls), c.dc, c.assd);
  line("overall", r.overall_dc, r.overall_assd);
}

EvalReport read_report_csv(std::istream& in) {
  EvalReport r;
  std::string text;
  std::size_t lineno = 0;
  bool header = false, saw_meta = false;
  std::size_t max_class = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    const auto where = "report line " + std::to_string(lineno);
    if (text[0] == '#') {
      std::istringstream ss(text.substr(1));
      std::string tok;
      while (ss >> tok) {
        if (tok.rfind("classes=", 0) == 0) {
          r.classes = std::stoul(tok.substr(8));
          saw_meta = true;
        } else if (tok.rfind("mask_empty=", 0) == 0) {
          r.mask_empty = tok.substr(11) == "1";
        }
      }
      continue;
    }
    if (!header) {
      if (text != "image_id,class,dc,assd,assd_defined,counted")
        throw DataError(where + ": unexpected header '" + text + "'");
      header = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(text);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 6) throw DataError(where + ": expected 6 columns, got " + std::to_string(cols.size()));
    try {
      EvalEntry e;
      e.image_id = cols[0];
      e.cls = std::stoul(cols[1]);
      e.dc = std::strtod(cols[2].c_str(), nullptr);
      e.assd = std::strtod(cols[3].c_str(), nullptr);
      const int status = std::stoi(cols[4]);
      if (status < 0 || status > 2) throw DataError(where + ": assd_defined must be 0, 1 or 2");
      e.assd_status = static_cast<AssdStatus>(status);
      e.counted = cols[5] == "1";
      max_class = std::max(max_class, e.cls);
      r.entries.push_back(std::move(e));
    } catch (const std::logic_error&) {
      throw DataError(where + ": malformed number");
    }
  }
  if (!header) throw DataError("report: missing header line");
  if (!saw_meta) r.classes = max_class + 1;
  if (max_class >= r.classes) throw DataError("report: class index exceeds the declared class count");
  r.aggregate();
  return r;
}

void save_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write report '" + path + "'");
  write_report_csv(f, report);
  if (!f) throw DataError("failed writing report '" + path + "'");
}

EvalReport load_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open report '" + path + "'");
  return read_report_csv(f);
}

std::vector<CompareRow> compare_reports(const EvalReport& a, const EvalReport& b) {
  std::map<std::pair<std::string, std::size_t>, const EvalEntry*> index;
  for (const auto& e : b.entries)
    if (e.counted) index[{e.image_id, e.cls}] = &e;
  std::vector<CompareRow> rows;
  auto run = [&](std::string scope, std::string metric, const std::vector<double>& x, const std::vector<double>& y) {
    CompareRow row{std::move(scope), std::move(metric), x.size(), std::nullopt, ""};
    try {
      row.result = wsrt(x, y);
    } catch (const InsufficientData& err) {
      row.note = err.what();
    }
    rows.push_back(std::move(row));
  };
  const std::size_t classes = std::max(a.classes, b.classes);
  for (std::size_t c = 1; c < classes; ++c) {
    std::vector<double> xd, yd, xa, ya;
    for (const auto& e : a.entries) {
      if (e.cls != c || !e.counted) continue;
      auto it = index.find({e.image_id, c});
      if (it == index.end()) continue;
      xd.push_back(e.dc);
      yd.push_back(it->second->dc);
      if (e.assd_status != AssdStatus::undefined && it->second->assd_status != AssdStatus::undefined) {
        xa.push_back(e.assd);
        ya.push_back(it->second->assd);
      }
    }
    run("class " + std::to_string(c), "dc", xd, yd);
    run("class " + std::to_string(c), "assd", xa, ya);
  }
  std::map<std::string, EvalReport::ImageMean> other;
  for (auto& m : b.image_means()) other[m.image_id] = m;
  std::vector<double> xd, yd, xa, ya;
  for (const auto& m : a.image_means()) {
    auto it = other.find(m.image_id);
    if (it == other.end()) continue;
    if (m.dc && it->second.dc) {
      xd.push_back(*m.dc);
      yd.push_back(*it->second.dc);
    }
    if (m.assd && it->second.assd) {
      xa.push_back(*m.assd);
      ya.push_back(*it->second.assd);
    }
  }
  run("overall", "dc", xd, yd);
  run("overall", "assd", xa, ya);
  return rows;
}

}  // namespace cts

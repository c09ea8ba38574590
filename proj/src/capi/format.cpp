#include "format.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "convtrans/errors.hpp"
#include "convtrans/model.hpp"
#include "json.hpp"

namespace cts::capi {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string grouped(std::size_t v) {
  auto s = std::to_string(v);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string millions(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(v) / 1e6);
  return buf;
}

std::string fmt(const char* f, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::pair<std::string, std::string>> config_pairs(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(render(c));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) out.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return out;
}

ordered_json typed(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  if (!v.empty() && v.find_first_not_of("0123456789") == std::string::npos)
    return std::strtoull(v.c_str(), nullptr, 10);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (!v.empty() && *end == '\0') return d;
  return v;
}

const char* method_name(WsrtMethod m) {
  switch (m) {
    case WsrtMethod::exact: return "exact";
    case WsrtMethod::normal: return "normal";
    default: return "automatic";
  }
}

ordered_json mean_std(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

}  // namespace

std::string analyze_text(const RunConfig& config) {
  const auto& m = config.model;
  m.validate();
  const auto dims = derive_dims(m);
  const auto params = count_params(m);
  const std::size_t l = m.levels;
  std::ostringstream out;
  out << "input " << m.width << "×" << m.height << "×" << m.in_channels << ", classes " << m.classes
      << ", levels " << l << ", blocks " << m.blocks << ", C_base " << m.base_channels << ", m "
      << m.downsample << ", skip " << (m.use_skip_connections ? "on" : "off") << ", dsl "
      << (m.use_dsl ? "on" : "off") << "\n";
  out << "tokens " << dims.tokens << ", head dim " << m.head_dim() << "\n";
  for (const auto& d : dims.levels) {
    out << "level " << d.level << ": " << d.width << "×" << d.height << "×" << d.channels << " → " << dims.tokens
        << "×" << d.token_dim << "  (";
    if (d.level < l)
      out << "linear to " << d.dsl_channels << ", patch " << d.patch_side << "×" << d.patch_side;
    else
      out << "bridge";
    out << ", heads " << d.heads << ")\n";
  }
  out << "head: " << dims.tokens << "×" << dims.levels[0].token_dim << " → " << m.width << "×" << m.height << "×"
      << dims.head_channels << " → " << m.width << "×" << m.height << "×" << m.classes << "\n";
  out << "parameters\n";
  auto row = [&](const std::string& name, std::size_t v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-18s %14s\n", name.c_str(), grouped(v).c_str());
    out << buf;
  };
  for (std::size_t i = 0; i <= l; ++i) row("encoder level " + std::to_string(i), params.encoder[i]);
  if (params.dsl_total() > 0)
    for (std::size_t i = 0; i < params.dsl.size(); ++i) row("linear level " + std::to_string(i), params.dsl[i]);
  row("pos embedding", params.pos_embedding);
  for (std::size_t i = 0; i <= l; ++i) row("decoder level " + std::to_string(i), params.decoder_blocks[i]);
  for (std::size_t i = 0; i < params.projections.size(); ++i)
    row("proj " + std::to_string(i + 1) + "→" + std::to_string(i), params.projections[i]);
  row("head", params.head);
  out << "  total              " << grouped(params.total()) << " (" << millions(params.total()) << ")\n";
  return out.str();
}

std::string analyze_json(const RunConfig& config) {
  const auto& m = config.model;
  m.validate();
  const auto dims = derive_dims(m);
  const auto params = count_params(m);
  ordered_json doc;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config_pairs(config)) cfg[k] = typed(v);
  doc["config"] = cfg;
  doc["tokens"] = dims.tokens;
  doc["head_channels"] = dims.head_channels;
  ordered_json levels = ordered_json::array();
  for (const auto& d : dims.levels)
    levels.push_back({{"level", d.level},
                      {"width", d.width},
                      {"height", d.height},
                      {"channels", d.channels},
                      {"linear_channels", d.dsl_channels},
                      {"patch_side", d.patch_side},
                      {"token_dim", d.token_dim},
                      {"heads", d.heads}});
  doc["levels"] = levels;
  doc["parameters"] = {{"encoder", params.encoder},
                       {"linear", params.dsl},
                       {"pos_embedding", params.pos_embedding},
                       {"decoder", params.decoder_blocks},
                       {"projections", params.projections},
                       {"head", params.head},
                       {"total", params.total()}};
  return doc.dump(2) + "\n";
}

void apply_config_json(RunConfig& config, const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("config") || !doc["config"].is_object())
    throw DataError("JSON document has no \"config\" object");
  RunConfig out = config;
  for (const auto& [key, value] : doc["config"].items()) {
    const std::string v = value.is_string() ? value.get<std::string>() : value.dump();
    set_run_config_value(out, key, v, "json");
  }
  config = out;
}

std::string report_summary_text(const EvalReport& r) {
  std::ostringstream out;
  out << "images " << r.image_means().size() << ", classes " << r.classes
      << (r.mask_empty ? ", empty classes masked" : "") << "\n";
  auto line = [&](const std::string& scope, const MeanStd& dc, const MeanStd& assd) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s  dc %.4f ± %.4f (n=%zu)  assd %.4f ± %.4f (n=%zu)\n", scope.c_str(),
                  dc.mean, dc.std, dc.n, assd.mean, assd.std, assd.n);
    out << buf;
  };
  for (const auto& c : r.per_class) line("class " + std::to_string(c.cls), c.dc, c.assd);
  line("overall", r.overall_dc, r.overall_assd);
  return out.str();
}

std::string report_summary_json(const EvalReport& r) {
  ordered_json doc;
  doc["classes"] = r.classes;
  doc["mask_empty"] = r.mask_empty;
  doc["images"] = r.image_means().size();
  ordered_json per = ordered_json::array();
  for (const auto& c : r.per_class) per.push_back({{"class", c.cls}, {"dc", mean_std(c.dc)}, {"assd", mean_std(c.assd)}});
  doc["per_class"] = per;
  doc["overall"] = {{"dc", mean_std(r.overall_dc)}, {"assd", mean_std(r.overall_assd)}};
  return doc.dump(2) + "\n";
}

std::string compare_text(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  char buf[200];
  out << "two-sided signed-rank tests on paired values; w_plus sums the ranks where first > second\n";
  std::snprintf(buf, sizeof buf, "%-10s %-6s %6s %10s %12s  %s\n", "scope", "metric", "pairs", "w_plus", "p_value",
                "method");
  out << buf;
  for (const auto& r : rows) {
    if (r.result)
      std::snprintf(buf, sizeof buf, "%-10s %-6s %6zu %10s %12s  %s\n", r.scope.c_str(), r.metric.c_str(), r.pairs,
                    fmt("%.1f", r.result->w_plus).c_str(), fmt("%.6g", r.result->p_value).c_str(),
                    method_name(r.result->method));
    else
      std::snprintf(buf, sizeof buf, "%-10s %-6s %6zu %10s %12s  %s\n", r.scope.c_str(), r.metric.c_str(), r.pairs,
                    "-", "-", r.note.c_str());
    out << buf;
  }
  return out.str();
}

std::string compare_json(const std::vector<CompareRow>& rows) {
  ordered_json doc = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json row{{"scope", r.scope}, {"metric", r.metric}, {"pairs", r.pairs}};
    if (r.result) {
      row["w_plus"] = r.result->w_plus;
      row["n"] = r.result->n;
      row["p_value"] = r.result->p_value;
      row["method"] = method_name(r.result->method);
    } else {
      row["p_value"] = nullptr;
      row["note"] = r.note;
    }
    doc.push_back(row);
  }
  return doc.dump(2) + "\n";
}

std::string gradcheck_text(const std::vector<GradcheckCase>& cases) {
  std::ostringstream out;
  char buf[160];
  for (const auto& c : cases) {
    std::size_t checked = 0, kinks = 0;
    for (const auto& in : c.report.inputs) {
      checked += in.checked;
      kinks += in.skipped_kinks;
    }
    std::snprintf(buf, sizeof buf, "%-24s %s  max_rel_error %.3e  coords %zu  kinks %zu  redraws %d\n",
                  c.name.c_str(), c.report.passed ? "ok  " : "FAIL", c.report.max_error, checked, kinks,
                  c.report.resamples);
    out << buf;
  }
  return out.str();
}

std::string gradcheck_json(const std::vector<GradcheckCase>& cases) {
  ordered_json doc = ordered_json::array();
  for (const auto& c : cases) {
    ordered_json inputs = ordered_json::array();
    for (const auto& in : c.report.inputs)
      inputs.push_back({{"name", in.name},
                        {"max_error", in.max_error},
                        {"checked", in.checked},
                        {"skipped_kinks", in.skipped_kinks}});
    doc.push_back({{"name", c.name},
                   {"passed", c.report.passed},
                   {"max_error", c.report.max_error},
                   {"resamples", c.report.resamples},
                   {"inputs", inputs}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace cts::capi

#include "convtrans/run_config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "convtrans/errors.hpp"

namespace cts {
namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError("expected a non-negative integer, got '" + v + "'");
  char* end = nullptr;
  errno = 0;
  const auto x = std::strtoull(v.c_str(), &end, 10);
  if (*end != '\0' || errno != 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno != 0) throw ConfigError("expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define CTS_SIZE(key, member) \
  {key, {[](const RunConfig& c) { return std::to_string(c.member); }, [](RunConfig& c, const std::string& v) { c.member = to_size(v); }}}
#define CTS_DOUBLE(key, member) \
  {key, {[](const RunConfig& c) { return fmt_double(c.member); }, [](RunConfig& c, const std::string& v) { c.member = to_double(v); }}}
#define CTS_BOOL(key, member) \
  {key, {[](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }, [](RunConfig& c, const std::string& v) { c.member = to_bool(v); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      CTS_SIZE("model.width", model.width),
      CTS_SIZE("model.height", model.height),
      CTS_SIZE("model.in_channels", model.in_channels),
      CTS_SIZE("model.classes", model.classes),
      CTS_SIZE("model.levels", model.levels),
      CTS_SIZE("model.blocks", model.blocks),
      CTS_SIZE("model.base_channels", model.base_channels),
      CTS_SIZE("model.downsample", model.downsample),
      CTS_SIZE("model.ffn_factor", model.ffn_factor),
      CTS_SIZE("model.skip_kernel", model.skip_kernel),
      CTS_DOUBLE("model.dropout", model.dropout),
      CTS_BOOL("model.use_skip_connections", model.use_skip_connections),
      CTS_BOOL("model.use_dsl", model.use_dsl),
      {"model.attention_scale",
       {[](const RunConfig& c) {
          return std::string(c.model.attention_scale == AttentionScale::token_dim ? "token_dim" : "head_dim");
        },
        [](RunConfig& c, const std::string& v) {
          if (v == "token_dim") c.model.attention_scale = AttentionScale::token_dim;
          else if (v == "head_dim") c.model.attention_scale = AttentionScale::head_dim;
          else throw ConfigError("expected token_dim or head_dim, got '" + v + "'");
        }}},
      CTS_DOUBLE("loss.alpha", loss.alpha),
      CTS_DOUBLE("loss.beta", loss.beta),
      CTS_DOUBLE("loss.smooth", loss.smooth),
      CTS_BOOL("loss.mask_empty_classes", loss.mask_empty_classes),
      {"loss.mask_mode",
       {[](const RunConfig& c) {
          return std::string(c.loss.mask_mode == EmptyClassMask::dice_only ? "dice_only" : "dice_and_ce");
        },
        [](RunConfig& c, const std::string& v) {
          if (v == "dice_only") c.loss.mask_mode = EmptyClassMask::dice_only;
          else if (v == "dice_and_ce") c.loss.mask_mode = EmptyClassMask::dice_and_ce;
          else throw ConfigError("expected dice_only or dice_and_ce, got '" + v + "'");
        }}},
      CTS_SIZE("train.epochs", train.epochs),
      CTS_SIZE("train.batch", train.batch),
      CTS_DOUBLE("train.lr", train.lr),
      CTS_DOUBLE("train.beta1", train.beta1),
      CTS_DOUBLE("train.beta2", train.beta2),
      CTS_DOUBLE("train.eps", train.eps),
      CTS_SIZE("train.seed", train.seed),
      CTS_SIZE("train.threads", train.threads),
      {"data", {[](const RunConfig& c) { return c.data; }, [](RunConfig& c, const std::string& v) { c.data = v; }}},
      {"out", {[](const RunConfig& c) { return c.out; }, [](RunConfig& c, const std::string& v) { c.out = v; }}},
  };
  return table;
}

#undef CTS_SIZE
#undef CTS_DOUBLE
#undef CTS_BOOL

}  // namespace

void TrainSettings::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train.eps must be positive");
  if (threads == 0) throw ConfigError("train.threads must be positive");
}

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  train.validate();
}

std::string render(const RunConfig& c) {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) {
    const auto value = field.get(c);
    if ((key == "data" || key == "out") && value.empty()) continue;
    out << key << " = " << value << '\n';
  }
  return out.str();
}

void set_run_config_value(RunConfig& c, const std::string& key, const std::string& value, const std::string& where) {
  const std::string prefix = where.empty() ? "" : where + ": ";
  for (const auto& [name, field] : fields()) {
    if (name != key) continue;
    try {
      field.set(c, value);
    } catch (const ConfigError& e) {
      throw ConfigError(prefix + key + ": " + e.what());
    }
    return;
  }
  throw ConfigError(prefix + "unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& text, const RunConfig& base) {
  RunConfig c = base;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = "config line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    set_run_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return c;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace cts

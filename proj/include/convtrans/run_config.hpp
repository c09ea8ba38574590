#pragma once

#include <cstdint>
#include <string>

#include "convtrans/loss.hpp"
#include "convtrans/model.hpp"

namespace cts {

struct TrainSettings {
  std::size_t epochs = 30;
  std::size_t batch = 8;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 7;
  std::size_t threads = 1;

  void validate() const;
  bool operator==(const TrainSettings&) const = default;
};

/// Everything a run needs. Text form is `key = value` per line with '#'
/// comments, keys such as model.levels, loss.alpha, train.epochs, data, out.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainSettings train;
  std::string data;  // manifest path
  std::string out;   // output directory

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

std::string render(const RunConfig& config);
/// Starts from `base` and applies each assignment. Unknown keys and malformed
/// values raise ConfigError naming the line.
RunConfig parse_run_config(const std::string& text, const RunConfig& base = {});
RunConfig load_run_config(const std::string& path, const RunConfig& base = {});

/// Applies one assignment; `where` prefixes error messages.
void set_run_config_value(RunConfig& config, const std::string& key, const std::string& value,
                          const std::string& where = "");

}  // namespace cts

#include <numeric>
#include <string>

#include "convtrans/errors.hpp"
#include "convtrans/model.hpp"

namespace cts {
namespace {

std::string level_tag(std::size_t i) { return "level " + std::to_string(i); }

}  // namespace

void ModelConfig::validate() const {
  if (levels == 0 || levels > 12) throw ConfigError("levels must lie in [1, 12]");
  if (width == 0 || height == 0) throw ConfigError("input size must be positive");
  const std::size_t grid = std::size_t{1} << levels;
  if (width % grid != 0 || height % grid != 0)
    throw ConfigError("input size " + std::to_string(width) + "x" + std::to_string(height) +
                      " is not divisible by 2^levels = " + std::to_string(grid));
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  if (classes < 2) throw ConfigError("classes must be at least 2");
  if (blocks == 0) throw ConfigError("blocks per level must be positive");
  if (base_channels == 0) throw ConfigError("base_channels must be positive");
  if (downsample == 0) throw ConfigError("downsample factor must be positive");
  if (ffn_factor == 0) throw ConfigError("ffn_factor must be positive");
  if (skip_kernel % 2 == 0) throw ConfigError("skip_kernel must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (use_dsl) {
    for (std::size_t i = 0; i < levels; ++i) {
      const std::size_t c = base_channels << i;
      if (c % downsample != 0)
        throw ConfigError(level_tag(i) + ": channels " + std::to_string(c) +
                          " not divisible by downsample factor " + std::to_string(downsample));
    }
  }
  const auto dims = derive_dims(*this);
  (void)dims;
}

LevelDims derive_dims(const ModelConfig& c) {
  if (c.levels == 0 || c.base_channels == 0 || c.downsample == 0)
    throw ConfigError("levels, base_channels and downsample must be positive");
  const std::size_t l = c.levels;
  const std::size_t grid = std::size_t{1} << l;
  if (c.width % grid != 0 || c.height % grid != 0)
    throw ConfigError("input size " + std::to_string(c.width) + "x" + std::to_string(c.height) +
                      " is not divisible by 2^levels = " + std::to_string(grid));
  LevelDims dims;
  dims.tokens = (c.width / grid) * (c.height / grid);
  dims.levels.resize(l + 1);
  for (std::size_t i = 0; i <= l; ++i) {
    auto& d = dims.levels[i];
    d.level = i;
    d.width = c.width >> i;
    d.height = c.height >> i;
    d.channels = c.base_channels << i;
    d.patch_side = std::size_t{1} << (l - i);
    if (i < l) {
      const std::size_t divisor = c.use_dsl ? c.downsample : 1;
      if (d.channels % divisor != 0)
        throw ConfigError(level_tag(i) + ": channels " + std::to_string(d.channels) +
                          " not divisible by downsample factor " + std::to_string(divisor));
      d.dsl_channels = d.channels / divisor;
      d.token_dim = d.dsl_channels * d.patch_side * d.patch_side;
    } else {
      d.token_dim = d.channels;
    }
    if (d.token_dim % c.head_dim() != 0)
      throw ConfigError(level_tag(i) + ": token dim " + std::to_string(d.token_dim) +
                        " not divisible by head dim " + std::to_string(c.head_dim()));
    d.heads = d.token_dim / c.head_dim();
  }
  dims.head_channels = dims.levels[0].token_dim / (grid * grid);
  return dims;
}

std::size_t ParamCount::encoder_total() const {
  return std::accumulate(encoder.begin(), encoder.end(), std::size_t{0});
}
std::size_t ParamCount::dsl_total() const {
  return std::accumulate(dsl.begin(), dsl.end(), std::size_t{0});
}
std::size_t ParamCount::decoder_total() const {
  return std::accumulate(decoder_blocks.begin(), decoder_blocks.end(), std::size_t{0});
}
std::size_t ParamCount::projection_total() const {
  return std::accumulate(projections.begin(), projections.end(), std::size_t{0});
}
std::size_t ParamCount::total() const {
  return encoder_total() + dsl_total() + pos_embedding + decoder_total() + projection_total() + head;
}

ParamCount count_params(const ModelConfig& c) {
  c.validate();
  const auto dims = derive_dims(c);
  const std::size_t l = c.levels;
  const std::size_t ks = c.skip_kernel;
  ParamCount pc;
  std::size_t c_in = c.in_channels;
  for (std::size_t i = 0; i <= l; ++i) {
    const std::size_t co = dims.levels[i].channels;
    const std::size_t conv1 = c_in * co * 9 + co;
    const std::size_t conv2 = co * co * 9 + co;
    const std::size_t shortcut = c_in * co * ks * ks + co;
    const std::size_t norms = 3 * 2 * co;
    pc.encoder.push_back(conv1 + conv2 + shortcut + norms);
    c_in = co;
  }
  for (std::size_t i = 0; i < l; ++i) {
    const auto& d = dims.levels[i];
    const bool present = c.use_skip_connections && c.use_dsl;
    pc.dsl.push_back(present ? d.channels * d.dsl_channels + d.dsl_channels : 0);
  }
  pc.pos_embedding = dims.tokens * dims.levels[l].token_dim;
  for (std::size_t i = 0; i <= l; ++i) {
    const std::size_t d = dims.levels[i].token_dim;
    const std::size_t hidden = c.ffn_factor * d;
    const std::size_t norms = 2 * 2 * d;
    const std::size_t attention = 4 * (d * d + d);
    const std::size_t feed_forward = d * hidden + hidden + hidden * d + d;
    pc.decoder_blocks.push_back(c.blocks * (norms + attention + feed_forward));
  }
  for (std::size_t i = 1; i <= l; ++i) {
    const std::size_t from = dims.levels[i].token_dim, to = dims.levels[i - 1].token_dim;
    pc.projections.push_back(from * to + to);
  }
  pc.head = dims.head_channels * c.classes + c.classes;
  return pc;
}

}  // namespace cts

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "convtrans/ops.hpp"
#include "convtrans/rng.hpp"
#include "convtrans/tensor.hpp"

namespace cts {

/// Denominator of the attention logits.
enum class AttentionScale {
  token_dim,  // sqrt(d_i), the full token size
  head_dim,   // sqrt(d_h), the per-head convention
};

struct ModelConfig {
  std::size_t width = 224;
  std::size_t height = 224;
  std::size_t in_channels = 3;
  std::size_t classes = 2;
  std::size_t levels = 3;          // encoder depth l; the model has l + 1 levels
  std::size_t blocks = 3;          // Transformer blocks per decoder level
  std::size_t base_channels = 64;  // level-0 encoder width, also the head dim
  std::size_t downsample = 8;      // channel divisor of the skip linears
  std::size_t ffn_factor = 2;
  std::size_t skip_kernel = 3;     // kernel of the ResConv shortcut conv
  double dropout = 0.1;
  bool use_skip_connections = true;
  bool use_dsl = true;
  AttentionScale attention_scale = AttentionScale::token_dim;

  std::size_t head_dim() const { return base_channels; }
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LevelDim {
  std::size_t level = 0;
  std::size_t width = 0;         // spatial extent of the encoder map
  std::size_t height = 0;
  std::size_t channels = 0;      // encoder channels 2^i * C_base
  std::size_t dsl_channels = 0;  // channels after the skip linear (0 at level l)
  std::size_t patch_side = 0;    // 2^(l - i)
  std::size_t token_dim = 0;     // d_i
  std::size_t heads = 0;         // d_i / d_h
};

struct LevelDims {
  std::size_t tokens = 0;         // P_l
  std::size_t head_channels = 0;  // channels after unflattening level-0 tokens
  std::vector<LevelDim> levels;   // index i = level i, size l + 1
};

LevelDims derive_dims(const ModelConfig& config);

struct ParamCount {
  std::vector<std::size_t> encoder;         // per level
  std::vector<std::size_t> dsl;             // per level i < l (zeros when absent)
  std::size_t pos_embedding = 0;
  std::vector<std::size_t> decoder_blocks;  // per level
  std::vector<std::size_t> projections;     // index i - 1 holds the d_i -> d_{i-1} linear
  std::size_t head = 0;

  std::size_t encoder_total() const;
  std::size_t dsl_total() const;
  std::size_t decoder_total() const;
  std::size_t projection_total() const;
  std::size_t total() const;
};

/// Closed-form count of learnable parameters (BN running stats excluded).
ParamCount count_params(const ModelConfig& config);

template <class T>
struct Conv2dParams {
  Tensor<T> weight, bias;
  std::size_t padding = 0;
};

template <class T>
struct BatchNormParams {
  Tensor<T> gamma, beta;
  BatchNormState<T> state;
};

template <class T>
struct LinearParams {
  Tensor<T> weight, bias;  // weight is [d_in, d_out]
};

template <class T>
struct LayerNormParams {
  Tensor<T> gamma, beta;
};

template <class T>
struct ResConvParams {
  Conv2dParams<T> conv1, conv2, shortcut;
  BatchNormParams<T> bn1, bn2, shortcut_bn;
};

template <class T>
struct TransBlockParams {
  LayerNormParams<T> norm1, norm2;
  LinearParams<T> query, key, value, output;
  LinearParams<T> ffn_up, ffn_down;
  std::size_t heads = 1;
};

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
class SegModel {
 public:
  /// Builds and initializes every parameter from `seed`.
  SegModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const LevelDims& dims() const { return dims_; }

  /// Learnable parameters in a fixed order with dotted paths such as
  /// "encoder.level2.conv1.weight".
  std::vector<NamedTensor<T>> parameters() const;
  /// Non-learnable state (batch-norm running statistics).
  std::vector<NamedTensor<T>> buffers() const;
  std::size_t parameter_count() const;
  void zero_grad();

  std::vector<ResConvParams<T>> encoder;             // l + 1 levels
  std::vector<LinearParams<T>> dsl;                  // l entries when skips and DSL are on
  Tensor<T> pos_embedding;                           // [P_l, d_l]
  std::vector<std::vector<TransBlockParams<T>>> decoder;  // [level][block]
  std::vector<LinearParams<T>> projections;          // projections[i-1]: d_i -> d_{i-1}
  Conv2dParams<T> head;

 private:
  ModelConfig config_;
  LevelDims dims_;
};

template <class T>
struct ForwardContext {
  bool training = false;
  RngState* rng = nullptr;  // dropout source, required when training with dropout > 0
  std::function<void(std::size_t level, std::size_t block, const Tensor<T>& weights)> on_attention;
};

/// Shapes seen during a forward pass, for inspection and tests.
struct ForwardTrace {
  std::vector<Shape> encoder;         // per level, before pooling
  std::vector<Shape> decoder_tokens;  // per level, the Transformer input
  Shape head_input;                   // unflattened level-0 map
  Shape logits;
};

template <class T>
Tensor<T> res_conv_forward(const Tensor<T>& x, ResConvParams<T>& block, bool training);

template <class T>
std::vector<Tensor<T>> encoder_forward(const Tensor<T>& x, SegModel<T>& model, bool training);

/// [N, c, H, W] -> [N, (H/s)(W/s), s*s*c]. Tokens follow the patch grid in
/// row-major order; a token concatenates the channel vectors of its patch
/// pixels in row-major pixel order.
template <class T>
Tensor<T> patch_flatten(const Tensor<T>& x, std::size_t side);
/// Exact inverse of patch_flatten.
template <class T>
Tensor<T> patch_unflatten(const Tensor<T>& tokens, std::size_t channels, std::size_t height,
                          std::size_t width, std::size_t side);

template <class T>
Tensor<T> skip_transform(const Tensor<T>& feature, std::size_t level, const SegModel<T>& model);
template <class T>
Tensor<T> bridge_forward(const Tensor<T>& feature, const SegModel<T>& model);

/// softmax(Q K^T / sqrt(scale_dim)) V over [N, h, P, d_h] operands.
template <class T>
Tensor<T> sdpa(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t scale_dim,
               Tensor<T>* weights = nullptr);
template <class T>
Tensor<T> mha(const Tensor<T>& x, const TransBlockParams<T>& block, std::size_t scale_dim,
              Tensor<T>* weights = nullptr);
template <class T>
Tensor<T> ffn(const Tensor<T>& x, const TransBlockParams<T>& block, T dropout_p,
              const ForwardContext<T>& ctx);
/// Pre-norm residual block:
///   x1  = x + Dropout(MHA(Norm(x)))
///   out = x1 + Dropout(FFN(Norm(x1)))
template <class T>
Tensor<T> trans_block(const Tensor<T>& x, const TransBlockParams<T>& block, std::size_t scale_dim,
                      T dropout_p, const ForwardContext<T>& ctx, std::size_t level = 0,
                      std::size_t index = 0);

/// `skips` holds the level-i skip tokens for i < l, or is empty when skip
/// connections are disabled.
template <class T>
Tensor<T> decoder_forward(const Tensor<T>& bridge, const std::vector<Tensor<T>>& skips,
                          const SegModel<T>& model, const ForwardContext<T>& ctx,
                          ForwardTrace* trace = nullptr);
template <class T>
Tensor<T> head_forward(const Tensor<T>& tokens, const SegModel<T>& model,
                       ForwardTrace* trace = nullptr);

/// Full pass: [N, C_ini, H, W] image batch -> [N, Class, H, W] logits.
template <class T>
Tensor<T> forward(const Tensor<T>& images, SegModel<T>& model, const ForwardContext<T>& ctx,
                  ForwardTrace* trace = nullptr);

}  // namespace cts

#include <cmath>

#include "convtrans/errors.hpp"
#include "convtrans/model.hpp"

namespace cts {
namespace {

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, RngState& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

// Kaiming-uniform with ReLU gain: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <class T>
Conv2dParams<T> make_conv(std::size_t c_in, std::size_t c_out, std::size_t k, RngState& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
  return {uniform_tensor<T>({c_out, c_in, k, k}, bound, rng), Tensor<T>::zeros({c_out}), k / 2};
}

template <class T>
BatchNormParams<T> make_bn(std::size_t c) {
  return {Tensor<T>::ones({c}), Tensor<T>::zeros({c}), BatchNormState<T>::identity(c)};
}

// Xavier-uniform.
template <class T>
LinearParams<T> make_linear(std::size_t d_in, std::size_t d_out, RngState& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
  return {uniform_tensor<T>({d_in, d_out}, bound, rng), Tensor<T>::zeros({d_out})};
}

template <class T>
LayerNormParams<T> make_ln(std::size_t d) {
  return {Tensor<T>::ones({d}), Tensor<T>::zeros({d})};
}

std::string lvl(std::size_t i) { return "level" + std::to_string(i); }

template <class T>
void push_conv(std::vector<NamedTensor<T>>& out, const std::string& p, const Conv2dParams<T>& c) {
  out.push_back({p + ".weight", c.weight});
  out.push_back({p + ".bias", c.bias});
}

template <class T>
void push_linear(std::vector<NamedTensor<T>>& out, const std::string& p, const LinearParams<T>& l) {
  out.push_back({p + ".weight", l.weight});
  out.push_back({p + ".bias", l.bias});
}

template <class T>
void push_affine(std::vector<NamedTensor<T>>& out, const std::string& p, const Tensor<T>& g,
                 const Tensor<T>& b) {
  out.push_back({p + ".gamma", g});
  out.push_back({p + ".beta", b});
}

template <class T>
std::size_t scale_dim_of(const ModelConfig& c, const LevelDim& d) {
  return c.attention_scale == AttentionScale::token_dim ? d.token_dim : c.head_dim();
}

}  // namespace

template <class T>
SegModel<T>::SegModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  dims_ = derive_dims(config_);
  RngState rng(seed);
  const std::size_t l = config_.levels;

  std::size_t c_in = config_.in_channels;
  for (std::size_t i = 0; i <= l; ++i) {
    const std::size_t co = dims_.levels[i].channels;
    ResConvParams<T> b;
    b.conv1 = make_conv<T>(c_in, co, 3, rng);
    b.bn1 = make_bn<T>(co);
    b.conv2 = make_conv<T>(co, co, 3, rng);
    b.bn2 = make_bn<T>(co);
    b.shortcut = make_conv<T>(c_in, co, config_.skip_kernel, rng);
    b.shortcut_bn = make_bn<T>(co);
    encoder.push_back(std::move(b));
    c_in = co;
  }
  if (config_.use_skip_connections && config_.use_dsl)
    for (std::size_t i = 0; i < l; ++i)
      dsl.push_back(make_linear<T>(dims_.levels[i].channels, dims_.levels[i].dsl_channels, rng));

  pos_embedding = Tensor<T>({dims_.tokens, dims_.levels[l].token_dim});
  for (auto& v : pos_embedding.data()) v = static_cast<T>(rng.normal(0.0, 0.02));

  decoder.resize(l + 1);
  for (std::size_t i = 0; i <= l; ++i) {
    const std::size_t d = dims_.levels[i].token_dim;
    const std::size_t hidden = config_.ffn_factor * d;
    for (std::size_t j = 0; j < config_.blocks; ++j) {
      TransBlockParams<T> b;
      b.heads = dims_.levels[i].heads;
      b.norm1 = make_ln<T>(d);
      b.query = make_linear<T>(d, d, rng);
      b.key = make_linear<T>(d, d, rng);
      b.value = make_linear<T>(d, d, rng);
      b.output = make_linear<T>(d, d, rng);
      b.norm2 = make_ln<T>(d);
      b.ffn_up = make_linear<T>(d, hidden, rng);
      b.ffn_down = make_linear<T>(hidden, d, rng);
      decoder[i].push_back(std::move(b));
    }
  }
  for (std::size_t i = 1; i <= l; ++i)
    projections.push_back(
        make_linear<T>(dims_.levels[i].token_dim, dims_.levels[i - 1].token_dim, rng));
  head = make_conv<T>(dims_.head_channels, config_.classes, 1, rng);
  for (auto& p : parameters()) p.tensor.set_requires_grad(true);
}

template <class T>
std::vector<NamedTensor<T>> SegModel<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const auto p = "encoder." + lvl(i);
    const auto& b = encoder[i];
    push_conv(out, p + ".conv1", b.conv1);
    push_affine(out, p + ".bn1", b.bn1.gamma, b.bn1.beta);
    push_conv(out, p + ".conv2", b.conv2);
    push_affine(out, p + ".bn2", b.bn2.gamma, b.bn2.beta);
    push_conv(out, p + ".shortcut", b.shortcut);
    push_affine(out, p + ".shortcut_bn", b.shortcut_bn.gamma, b.shortcut_bn.beta);
  }
  for (std::size_t i = 0; i < dsl.size(); ++i) push_linear(out, "skip." + lvl(i) + ".dsl", dsl[i]);
  out.push_back({"bridge.pos_embedding", pos_embedding});
  for (std::size_t i = 0; i < decoder.size(); ++i)
    for (std::size_t j = 0; j < decoder[i].size(); ++j) {
      const auto p = "decoder." + lvl(i) + ".block" + std::to_string(j);
      const auto& b = decoder[i][j];
      push_affine(out, p + ".norm1", b.norm1.gamma, b.norm1.beta);
      push_linear(out, p + ".attn.query", b.query);
      push_linear(out, p + ".attn.key", b.key);
      push_linear(out, p + ".attn.value", b.value);
      push_linear(out, p + ".attn.output", b.output);
      push_affine(out, p + ".norm2", b.norm2.gamma, b.norm2.beta);
      push_linear(out, p + ".ffn.up", b.ffn_up);
      push_linear(out, p + ".ffn.down", b.ffn_down);
    }
  for (std::size_t i = 0; i < projections.size(); ++i)
    push_linear(out, "decoder." + lvl(i + 1) + ".proj", projections[i]);
  push_conv(out, "head", head);
  return out;
}

template <class T>
std::vector<NamedTensor<T>> SegModel<T>::buffers() const {
  std::vector<NamedTensor<T>> out;
  auto push = [&](const std::string& p, const BatchNormParams<T>& bn) {
    out.push_back({p + ".running_mean", bn.state.running_mean});
    out.push_back({p + ".running_var", bn.state.running_var});
  };
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    const auto p = "encoder." + lvl(i);
    push(p + ".bn1", encoder[i].bn1);
    push(p + ".bn2", encoder[i].bn2);
    push(p + ".shortcut_bn", encoder[i].shortcut_bn);
  }
  return out;
}

template <class T>
std::size_t SegModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

template <class T>
void SegModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <class T>
Tensor<T> res_conv_forward(const Tensor<T>& x, ResConvParams<T>& b, bool training) {
  auto main = conv2d(x, b.conv1.weight, b.conv1.bias, b.conv1.padding);
  main = relu(batch_norm2d(main, b.bn1.gamma, b.bn1.beta, b.bn1.state, training));
  main = conv2d(main, b.conv2.weight, b.conv2.bias, b.conv2.padding);
  main = relu(batch_norm2d(main, b.bn2.gamma, b.bn2.beta, b.bn2.state, training));
  auto shortcut = conv2d(x, b.shortcut.weight, b.shortcut.bias, b.shortcut.padding);
  shortcut = batch_norm2d(shortcut, b.shortcut_bn.gamma, b.shortcut_bn.beta, b.shortcut_bn.state,
                          training);
  return add(main, shortcut);
}

template <class T>
std::vector<Tensor<T>> encoder_forward(const Tensor<T>& x, SegModel<T>& model, bool training) {
  const auto& c = model.config();
  if (x.rank() != 4 || x.dim(1) != c.in_channels || x.dim(2) != c.height || x.dim(3) != c.width)
    throw ConfigError("input " + shape_str(x.shape()) + " does not match configured [N," +
                      std::to_string(c.in_channels) + "," + std::to_string(c.height) + "," +
                      std::to_string(c.width) + "]");
  std::vector<Tensor<T>> features;
  Tensor<T> h = x;
  for (std::size_t i = 0; i <= c.levels; ++i) {
    if (i > 0) h = max_pool2(h);
    h = res_conv_forward(h, model.encoder[i], training);
    features.push_back(h);
  }
  return features;
}

template <class T>
Tensor<T> patch_flatten(const Tensor<T>& x, std::size_t side) {
  if (x.rank() != 4) throw ConfigError("patch_flatten: expected [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (side == 0 || h % side != 0 || w % side != 0)
    throw ConfigError("patch_flatten: " + shape_str(x.shape()) + " not divisible into " +
                      std::to_string(side) + "x" + std::to_string(side) + " patches");
  const std::size_t gh = h / side, gw = w / side;
  auto grid = reshape(x, {n, c, gh, side, gw, side});
  auto ordered = permute(grid, {0, 2, 4, 3, 5, 1});  // [N, gh, gw, py, px, c]
  return reshape(ordered, {n, gh * gw, side * side * c});
}

template <class T>
Tensor<T> patch_unflatten(const Tensor<T>& tokens, std::size_t channels, std::size_t height,
                          std::size_t width, std::size_t side) {
  if (tokens.rank() != 3 || side == 0 || height % side != 0 || width % side != 0)
    throw ConfigError("patch_unflatten: invalid request for tokens " + shape_str(tokens.shape()));
  const std::size_t n = tokens.dim(0), gh = height / side, gw = width / side;
  if (tokens.dim(1) != gh * gw || tokens.dim(2) != side * side * channels)
    throw ConfigError("patch_unflatten: tokens " + shape_str(tokens.shape()) +
                      " do not match a " + std::to_string(channels) + "x" + std::to_string(height) +
                      "x" + std::to_string(width) + " map with patch side " + std::to_string(side));
  auto grid = reshape(tokens, {n, gh, gw, side, side, channels});
  auto ordered = permute(grid, {0, 5, 1, 3, 2, 4});  // [N, c, gh, py, gw, px]
  return reshape(ordered, {n, channels, height, width});
}

template <class T>
Tensor<T> skip_transform(const Tensor<T>& feature, std::size_t level, const SegModel<T>& model) {
  const auto& c = model.config();
  if (level >= c.levels) throw ConfigError("skip_transform: level must be below the bridge level");
  const auto& d = model.dims().levels[level];
  if (!c.use_dsl) return patch_flatten(feature, d.patch_side);
  // Per-pixel linear over channels, then patchify straight from NHWC.
  const std::size_t n = feature.dim(0), h = feature.dim(2), w = feature.dim(3), s = d.patch_side;
  auto nhwc = permute(feature, {0, 2, 3, 1});
  auto reduced = linear(nhwc, model.dsl[level].weight, model.dsl[level].bias);
  const std::size_t gh = h / s, gw = w / s, cr = d.dsl_channels;
  auto grid = reshape(reduced, {n, gh, s, gw, s, cr});
  auto ordered = permute(grid, {0, 1, 3, 2, 4, 5});
  return reshape(ordered, {n, gh * gw, s * s * cr});
}

template <class T>
Tensor<T> bridge_forward(const Tensor<T>& feature, const SegModel<T>& model) {
  return add(patch_flatten(feature, 1), model.pos_embedding);
}

template <class T>
Tensor<T> sdpa(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t scale_dim,
               Tensor<T>* weights) {
  if (q.shape() != k.shape() || q.shape() != v.shape())
    throw ConfigError("sdpa: Q, K, V shapes differ");
  auto scores = scale(matmul(q, k, true), T(1) / std::sqrt(static_cast<T>(scale_dim)));
  auto w = softmax_lastdim(scores);
  if (weights != nullptr) *weights = w;
  return matmul(w, v);
}

template <class T>
Tensor<T> mha(const Tensor<T>& x, const TransBlockParams<T>& b, std::size_t scale_dim,
              Tensor<T>* weights) {
  const std::size_t n = x.dim(0), p = x.dim(1), d = x.dim(2);
  if (b.heads == 0 || d % b.heads != 0)
    throw ConfigError("mha: token dim " + std::to_string(d) + " not divisible into " +
                      std::to_string(b.heads) + " heads");
  const std::size_t dh = d / b.heads;
  auto split = [&](const LinearParams<T>& proj) {
    return permute(reshape(linear(x, proj.weight, proj.bias), {n, p, b.heads, dh}), {0, 2, 1, 3});
  };
  auto attended = sdpa(split(b.query), split(b.key), split(b.value), scale_dim, weights);
  auto merged = reshape(permute(attended, {0, 2, 1, 3}), {n, p, d});
  return linear(merged, b.output.weight, b.output.bias);
}

template <class T>
Tensor<T> ffn(const Tensor<T>& x, const TransBlockParams<T>& b, T dropout_p,
              const ForwardContext<T>& ctx) {
  auto h = relu(linear(x, b.ffn_up.weight, b.ffn_up.bias));
  if (ctx.training && dropout_p > T(0)) {
    if (ctx.rng == nullptr) throw UsageError("training with dropout requires an RNG");
    h = dropout(h, dropout_p, true, *ctx.rng);
  }
  return linear(h, b.ffn_down.weight, b.ffn_down.bias);
}

template <class T>
Tensor<T> trans_block(const Tensor<T>& x, const TransBlockParams<T>& b, std::size_t scale_dim,
                      T dropout_p, const ForwardContext<T>& ctx, std::size_t level,
                      std::size_t index) {
  auto drop = [&](const Tensor<T>& t) {
    if (!ctx.training || dropout_p == T(0)) return t;
    if (ctx.rng == nullptr) throw UsageError("training with dropout requires an RNG");
    return dropout(t, dropout_p, true, *ctx.rng);
  };
  Tensor<T> weights;
  auto attended = mha(layer_norm(x, b.norm1.gamma, b.norm1.beta), b, scale_dim,
                      ctx.on_attention ? &weights : nullptr);
  if (ctx.on_attention) ctx.on_attention(level, index, weights);
  auto x1 = add(x, drop(attended));
  auto fed = ffn(layer_norm(x1, b.norm2.gamma, b.norm2.beta), b, dropout_p, ctx);
  return add(x1, drop(fed));
}

template <class T>
Tensor<T> decoder_forward(const Tensor<T>& bridge, const std::vector<Tensor<T>>& skips,
                          const SegModel<T>& model, const ForwardContext<T>& ctx,
                          ForwardTrace* trace) {
  const auto& c = model.config();
  const auto& dims = model.dims();
  const std::size_t l = c.levels;
  const T p = static_cast<T>(c.dropout);
  if (!skips.empty() && skips.size() != l)
    throw ConfigError("decoder_forward: expected " + std::to_string(l) + " skip tensors");

  auto check_tokens = [&](const Tensor<T>& t, std::size_t i) {
    if (t.rank() != 3 || t.dim(1) != dims.tokens || t.dim(2) != dims.levels[i].token_dim)
      throw ConfigError("decoder level " + std::to_string(i) + ": tokens " + shape_str(t.shape()) +
                        " expected [N," + std::to_string(dims.tokens) + "," +
                        std::to_string(dims.levels[i].token_dim) + "]");
  };

  Tensor<T> h = bridge;
  for (std::size_t step = 0; step <= l; ++step) {
    const std::size_t i = l - step;
    if (i < l) {
      h = linear(h, model.projections[i].weight, model.projections[i].bias);
      if (!skips.empty()) h = add(h, skips[i]);
    }
    check_tokens(h, i);
    if (trace != nullptr) trace->decoder_tokens.insert(trace->decoder_tokens.begin(), h.shape());
    const std::size_t scale_dim = scale_dim_of<T>(c, dims.levels[i]);
    for (std::size_t j = 0; j < model.decoder[i].size(); ++j)
      h = trans_block(h, model.decoder[i][j], scale_dim, p, ctx, i, j);
  }
  return h;
}

template <class T>
Tensor<T> head_forward(const Tensor<T>& tokens, const SegModel<T>& model, ForwardTrace* trace) {
  const auto& c = model.config();
  const auto& dims = model.dims();
  auto map = patch_unflatten(tokens, dims.head_channels, c.height, c.width, dims.levels[0].patch_side);
  if (trace != nullptr) trace->head_input = map.shape();
  auto logits = conv2d(map, model.head.weight, model.head.bias, 0);
  if (trace != nullptr) trace->logits = logits.shape();
  return logits;
}

template <class T>
Tensor<T> forward(const Tensor<T>& images, SegModel<T>& model, const ForwardContext<T>& ctx,
                  ForwardTrace* trace) {
  const auto& c = model.config();
  auto features = encoder_forward(images, model, ctx.training);
  if (trace != nullptr) {
    trace->encoder.clear();
    trace->decoder_tokens.clear();
    for (const auto& f : features) trace->encoder.push_back(f.shape());
  }
  std::vector<Tensor<T>> skips;
  if (c.use_skip_connections)
    for (std::size_t i = 0; i < c.levels; ++i) skips.push_back(skip_transform(features[i], i, model));
  auto bridge = bridge_forward(features[c.levels], model);
  auto tokens = decoder_forward(bridge, skips, model, ctx, trace);
  return head_forward(tokens, model, trace);
}

#define CTS_INSTANTIATE(T)                                                                       \
  template class SegModel<T>;                                                                    \
  template Tensor<T> res_conv_forward(const Tensor<T>&, ResConvParams<T>&, bool);                \
  template std::vector<Tensor<T>> encoder_forward(const Tensor<T>&, SegModel<T>&, bool);         \
  template Tensor<T> patch_flatten(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> patch_unflatten(const Tensor<T>&, std::size_t, std::size_t, std::size_t,    \
                                     std::size_t);                                               \
  template Tensor<T> skip_transform(const Tensor<T>&, std::size_t, const SegModel<T>&);          \
  template Tensor<T> bridge_forward(const Tensor<T>&, const SegModel<T>&);                       \
  template Tensor<T> sdpa(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,     \
                          Tensor<T>*);                                                           \
  template Tensor<T> mha(const Tensor<T>&, const TransBlockParams<T>&, std::size_t, Tensor<T>*); \
  template Tensor<T> ffn(const Tensor<T>&, const TransBlockParams<T>&, T,                        \
                         const ForwardContext<T>&);                                              \
  template Tensor<T> trans_block(const Tensor<T>&, const TransBlockParams<T>&, std::size_t, T,   \
                                 const ForwardContext<T>&, std::size_t, std::size_t);            \
  template Tensor<T> decoder_forward(const Tensor<T>&, const std::vector<Tensor<T>>&,            \
                                     const SegModel<T>&, const ForwardContext<T>&,               \
                                     ForwardTrace*);                                             \
  template Tensor<T> head_forward(const Tensor<T>&, const SegModel<T>&, ForwardTrace*);          \
  template Tensor<T> forward(const Tensor<T>&, SegModel<T>&, const ForwardContext<T>&,           \
                             ForwardTrace*);

CTS_INSTANTIATE(float)
CTS_INSTANTIATE(double)
#undef CTS_INSTANTIATE

}  // namespace cts

#include "convtrans/gradcheck_suite.hpp"

#include <functional>
#include <map>

#include "convtrans/errors.hpp"
#include "convtrans/loss.hpp"
#include "convtrans/model.hpp"
#include "convtrans/ops.hpp"

namespace cts {
namespace {

using Fn = std::function<GradcheckReport(std::uint64_t seed, const GradcheckOptions&)>;

Tensor<double> uniform(Shape shape, RngState& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::function<void(std::uint64_t)> redraw(Tensor<double> t) {
  return [t](std::uint64_t seed) mutable {
    RngState r(seed);
    for (auto& v : t.data()) v = r.uniform(-1.0, 1.0);
  };
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.width = c.height = 16;
  c.in_channels = 1;
  c.classes = 2;
  c.levels = 3;
  c.blocks = 1;
  c.base_channels = 8;
  c.downsample = 2;
  c.dropout = 0.0;
  return c;
}

// Random biases so that zero-initialized terms do not hide wiring errors.
void jitter(TransBlockParams<double>& b, RngState& rng) {
  for (auto* t : {&b.norm1.beta, &b.norm2.beta, &b.query.bias, &b.key.bias, &b.value.bias,
                  &b.output.bias, &b.ffn_up.bias, &b.ffn_down.bias})
    for (auto& v : t->data()) v = rng.uniform(-0.2, 0.2);
  for (auto* t : {&b.norm1.gamma, &b.norm2.gamma})
    for (auto& v : t->data()) v = rng.uniform(0.5, 1.5);
}

std::vector<GradcheckInput> block_inputs(const Tensor<double>& x, const TransBlockParams<double>& b) {
  return {{"x", x},
          {"norm1.gamma", b.norm1.gamma}, {"norm1.beta", b.norm1.beta},
          {"query.weight", b.query.weight}, {"query.bias", b.query.bias},
          {"key.weight", b.key.weight}, {"key.bias", b.key.bias},
          {"value.weight", b.value.weight}, {"value.bias", b.value.bias},
          {"output.weight", b.output.weight}, {"output.bias", b.output.bias},
          {"norm2.gamma", b.norm2.gamma}, {"norm2.beta", b.norm2.beta},
          {"ffn_up.weight", b.ffn_up.weight}, {"ffn_up.bias", b.ffn_up.bias},
          {"ffn_down.weight", b.ffn_down.weight}, {"ffn_down.bias", b.ffn_down.bias}};
}

const std::vector<std::pair<std::string, Fn>>& cases() {
  static const std::vector<std::pair<std::string, Fn>> table = {
      {"add", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 4}, rng), b = uniform({3, 4}, rng);
         return gradcheck({{"x", x}, {"b", b}}, [=] { return add(x, b); }, o);
       }},
      {"sub_mul_scale", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({3, 4}, rng), y = uniform({3, 4}, rng);
         return gradcheck({{"x", x}, {"y", y}}, [=] { return scale(sub(x, mul(x, y)), 0.5); }, o);
       }},
      {"sum_mean", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 5}, rng);
         return gradcheck({{"x", x}}, [=] { return add(sum(mul(x, x)), mean(x)); }, o);
       }},
      {"relu", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 4}, rng);
         return gradcheck({{"x", x}}, [=] { return relu(x); }, o, redraw(x));
       }},
      {"softmax", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 5}, rng, -2, 2);
         return gradcheck({{"x", x}}, [=] { return softmax_lastdim(x); }, o);
       }},
      {"dropout", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({4, 6}, rng);
         return gradcheck({{"x", x}}, [=] {
           RngState mask(s + 1);  // same mask on every evaluation
           return dropout(x, 0.3, true, mask);
         }, o);
       }},
      {"linear", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 4}, rng), w = uniform({4, 5}, rng), b = uniform({5}, rng);
         return gradcheck({{"x", x}, {"weight", w}, {"bias", b}}, [=] { return linear(x, w, b); }, o);
       }},
      {"matmul", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto a = uniform({2, 3, 4}, rng), b = uniform({2, 4, 5}, rng), c = uniform({2, 4, 5}, rng);
         return gradcheck({{"a", a}, {"b", b}, {"c", c}},
                          [=] { return matmul(matmul(a, b), c, true); }, o);
       }},
      {"reshape_permute_flatten", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 4}, rng), w = uniform({24}, rng);
         return gradcheck({{"x", x}}, [=] {
           return mul(flatten(permute(reshape(x, {2, 12, 1}), {2, 0, 1}), 0, 2), w);
         }, o);
       }},
      {"conv2d", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 2, 5, 4}, rng), w = uniform({3, 2, 3, 3}, rng), b = uniform({3}, rng);
         return gradcheck({{"x", x}, {"weight", w}, {"bias", b}}, [=] { return conv2d(x, w, b, 1); }, o);
       }},
      {"conv2d_1x1", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 3, 3}, rng), w = uniform({2, 3, 1, 1}, rng), b = uniform({2}, rng);
         return gradcheck({{"x", x}, {"weight", w}, {"bias", b}}, [=] { return conv2d(x, w, b, 0); }, o);
       }},
      {"max_pool2", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 2, 4, 6}, rng);
         return gradcheck({{"x", x}}, [=] { return max_pool2(x); }, o, redraw(x));
       }},
      {"batch_norm_train", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 3, 2}, rng), g = uniform({3}, rng, 0.5, 1.5), b = uniform({3}, rng);
         auto st = BatchNormState<double>::identity(3);
         return gradcheck({{"x", x}, {"gamma", g}, {"beta", b}},
                          [=]() mutable { return batch_norm2d(x, g, b, st, true); }, o);
       }},
      {"batch_norm_eval", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 3, 2}, rng), g = uniform({3}, rng, 0.5, 1.5), b = uniform({3}, rng);
         BatchNormState<double> st{uniform({3}, rng), uniform({3}, rng, 0.5, 2.0)};
         return gradcheck({{"x", x}, {"gamma", g}, {"beta", b}},
                          [=]() mutable { return batch_norm2d(x, g, b, st, false); }, o);
       }},
      {"layer_norm", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto x = uniform({2, 3, 6}, rng), g = uniform({6}, rng, 0.5, 1.5), b = uniform({6}, rng);
         return gradcheck({{"x", x}, {"gamma", g}, {"beta", b}}, [=] { return layer_norm(x, g, b); }, o);
       }},
      {"combined_loss", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto logits = uniform({2, 3, 3, 3}, rng, -2, 2);
         LabelBatch target{2, 3, 3, {}};
         for (int i = 0; i < 18; ++i) target.labels.push_back(static_cast<std::int32_t>(rng.below(2)));
         LossConfig cfg;
         cfg.mask_empty_classes = true;
         cfg.mask_mode = EmptyClassMask::dice_and_ce;
         return gradcheck({{"logits", logits}}, [=] { return combined_loss(logits, target, cfg); }, o);
       }},
      {"res_conv", [](std::uint64_t s, const GradcheckOptions& o) {
         auto model = std::make_shared<SegModel<double>>(tiny_model(), s);
         RngState rng(s + 1);
         auto x = uniform({2, 8, 4, 4}, rng);
         auto& b = model->encoder[1];
         std::vector<GradcheckInput> in{{"x", x},
                                        {"conv1.weight", b.conv1.weight}, {"conv1.bias", b.conv1.bias},
                                        {"bn1.gamma", b.bn1.gamma}, {"bn1.beta", b.bn1.beta},
                                        {"conv2.weight", b.conv2.weight}, {"conv2.bias", b.conv2.bias},
                                        {"bn2.gamma", b.bn2.gamma}, {"bn2.beta", b.bn2.beta},
                                        {"shortcut.weight", b.shortcut.weight}, {"shortcut.bias", b.shortcut.bias},
                                        {"shortcut_bn.gamma", b.shortcut_bn.gamma},
                                        {"shortcut_bn.beta", b.shortcut_bn.beta}};
         auto opts = o;
         opts.max_coords_per_input = 24;
         return gradcheck(in, [=] { return res_conv_forward(x, model->encoder[1], true); }, opts, redraw(x));
       }},
      {"sdpa", [](std::uint64_t s, const GradcheckOptions& o) {
         RngState rng(s);
         auto q = uniform({2, 2, 5, 3}, rng), k = uniform({2, 2, 5, 3}, rng), v = uniform({2, 2, 5, 3}, rng);
         return gradcheck({{"q", q}, {"k", k}, {"v", v}}, [=] { return sdpa(q, k, v, 6); }, o);
       }},
      {"mha", [](std::uint64_t s, const GradcheckOptions& o) {
         auto model = std::make_shared<SegModel<double>>(tiny_model(), s);
         RngState rng(s + 1);
         auto& b = model->decoder[3][0];  // eight heads of 8
         jitter(b, rng);
         auto x = uniform({2, 4, 64}, rng);
         std::vector<GradcheckInput> in{{"x", x},
                                        {"query.weight", b.query.weight}, {"query.bias", b.query.bias},
                                        {"key.weight", b.key.weight}, {"key.bias", b.key.bias},
                                        {"value.weight", b.value.weight}, {"value.bias", b.value.bias},
                                        {"output.weight", b.output.weight}, {"output.bias", b.output.bias}};
         auto opts = o;
         opts.max_coords_per_input = 32;
         return gradcheck(in, [=] { return mha(x, model->decoder[3][0], 64); }, opts);
       }},
      {"ffn", [](std::uint64_t s, const GradcheckOptions& o) {
         auto model = std::make_shared<SegModel<double>>(tiny_model(), s);
         RngState rng(s + 1);
         auto& b = model->decoder[3][0];
         jitter(b, rng);
         auto x = uniform({2, 4, 64}, rng);
         std::vector<GradcheckInput> in{{"x", x},
                                        {"ffn_up.weight", b.ffn_up.weight}, {"ffn_up.bias", b.ffn_up.bias},
                                        {"ffn_down.weight", b.ffn_down.weight}, {"ffn_down.bias", b.ffn_down.bias}};
         auto opts = o;
         opts.max_coords_per_input = 32;
         return gradcheck(in, [=] { return ffn(x, model->decoder[3][0], 0.0, ForwardContext<double>{}); }, opts,
                          redraw(x));
       }},
      {"trans_block", [](std::uint64_t s, const GradcheckOptions& o) {
         auto model = std::make_shared<SegModel<double>>(tiny_model(), s);
         RngState rng(s + 1);
         auto& b = model->decoder[3][0];  // eight heads of 8
         jitter(b, rng);
         auto x = uniform({2, 4, 64}, rng);
         auto opts = o;
         opts.max_coords_per_input = 16;
         return gradcheck(block_inputs(x, b),
                          [=] { return trans_block(x, model->decoder[3][0], 64, 0.0, ForwardContext<double>{}); },
                          opts, redraw(x));
       }},
      {"tiny_model", [](std::uint64_t s, const GradcheckOptions& o) {
         auto model = std::make_shared<SegModel<double>>(tiny_model(), s);
         RngState rng(s + 1);
         for (auto& level : model->decoder)
           for (auto& b : level) jitter(b, rng);
         auto images = uniform({2, 1, 16, 16}, rng, 0, 1);
         LabelBatch target{2, 16, 16, {}};
         for (std::size_t i = 0; i < 512; ++i) {
           const std::size_t r = (i % 256) / 16, c = i % 16;
           target.labels.push_back(r >= 4 && r < 11 && c >= 3 && c < 9 ? 1 : 0);
         }
         std::vector<GradcheckInput> in{{"images", images}};
         for (const auto& p : model->parameters()) in.push_back({p.name, p.tensor});
         auto opts = o;
         opts.max_coords_per_input = 3;
         opts.rel_step = 1e-6;  // thousands of relus sit within reach of a larger step
         return gradcheck(in, [=] {
           ForwardContext<double> ctx;
           ctx.training = true;
           return combined_loss(forward(images, *model, ctx), target, LossConfig{});
         }, opts, redraw(images));
       }},
  };
  return table;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
  std::vector<std::string> out;
  for (const auto& [name, fn] : cases()) out.push_back(name);
  return out;
}

std::vector<GradcheckCase> run_gradcheck_suite(const std::vector<std::string>& names, std::uint64_t seed,
                                               double tolerance) {
  for (const auto& n : names) {
    bool known = false;
    for (const auto& [name, fn] : cases()) known = known || name == n;
    if (!known) throw UsageError("unknown gradcheck case '" + n + "'");
  }
  GradcheckOptions opts;
  opts.tolerance = tolerance;
  opts.seed = seed;
  std::vector<GradcheckCase> out;
  for (const auto& [name, fn] : cases()) {
    bool wanted = names.empty();
    for (const auto& n : names) wanted = wanted || n == name;
    if (wanted) out.push_back({name, fn(seed, opts)});
  }
  return out;
}

}  // namespace cts

#include "convtrans/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "convtrans/errors.hpp"

namespace cts {

void LossConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0))
    throw ConfigError("loss weights need alpha >= 0, beta >= 0 and alpha + beta > 0");
  if (!(smooth >= 0.0)) throw ConfigError("Dice smoothing must be non-negative");
}

template <class T>
Tensor<T> combined_loss(const Tensor<T>& logits, const LabelBatch& target, const LossConfig& cfg,
                        LossTerms* terms) {
  cfg.validate();
  if (logits.rank() != 4)
    throw ConfigError("combined_loss: logits must be [N,Class,H,W], got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), classes = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (target.n != n || target.height != h || target.width != w || target.labels.size() != n * h * w)
    throw ConfigError("combined_loss: target [" + std::to_string(target.n) + "," +
                      std::to_string(target.height) + "," + std::to_string(target.width) +
                      "] does not match logits " + shape_str(logits.shape()));
  const std::size_t hw = h * w;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < hw; ++i) {
      const auto t = target.labels[s * hw + i];
      if (t < 0 || static_cast<std::size_t>(t) >= classes)
        throw DataError("label " + std::to_string(t) + " out of range [0," + std::to_string(classes) +
                        ") in sample " + std::to_string(s) + " at pixel (" + std::to_string(i / w) +
                        "," + std::to_string(i % w) + ")");
    }

  // present[s * classes + c]: class c occurs in sample s
  std::vector<char> present(n * classes, 0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < hw; ++i) present[s * classes + static_cast<std::size_t>(target.labels[s * hw + i])] = 1;
  const bool mask = cfg.mask_empty_classes;
  const bool mask_ce = mask && cfg.mask_mode == EmptyClassMask::dice_and_ce;

  // Softmax per pixel (over present classes only when CE channels are masked).
  std::vector<double> prob(logits.numel(), 0.0);
  auto z = logits.data();
  double ce = 0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = s * classes * hw + i;
      auto active = [&](std::size_t c) { return !mask_ce || present[s * classes + c]; };
      double mx = -INFINITY;
      for (std::size_t c = 0; c < classes; ++c)
        if (active(c)) mx = std::max(mx, static_cast<double>(z[base + c * hw]));
      double total = 0;
      for (std::size_t c = 0; c < classes; ++c)
        if (active(c)) total += std::exp(static_cast<double>(z[base + c * hw]) - mx);
      const double log_total = std::log(total);
      for (std::size_t c = 0; c < classes; ++c)
        if (active(c)) prob[base + c * hw] = std::exp(static_cast<double>(z[base + c * hw]) - mx - log_total);
      const auto t = static_cast<std::size_t>(target.labels[s * hw + i]);
      ce -= static_cast<double>(z[base + t * hw]) - mx - log_total;
    }
  const double pixels = static_cast<double>(n * hw);
  ce /= pixels;

  // Dice per (sample, class).
  std::vector<double> inter(n * classes, 0.0), sum_p(n * classes, 0.0), sum_g(n * classes, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t k = s * classes + c;
      const double* p = prob.data() + (s * classes + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const bool g = static_cast<std::size_t>(target.labels[s * hw + i]) == c;
        sum_p[k] += p[i];
        if (g) {
          inter[k] += p[i];
          sum_g[k] += 1.0;
        }
      }
    }
  std::size_t counted = 0;
  double dice_mean = 0;
  for (std::size_t k = 0; k < n * classes; ++k) {
    if (mask && !present[k]) continue;
    dice_mean += (2 * inter[k] + cfg.smooth) / (sum_p[k] + sum_g[k] + cfg.smooth);
    ++counted;
  }
  dice_mean /= static_cast<double>(counted);
  const double dice_loss = 1.0 - dice_mean;
  const double total = cfg.alpha * ce + cfg.beta * dice_loss;
  if (terms != nullptr) *terms = {ce, dice_loss, total};

  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total));
  if (!detail::should_record<T>({&logits})) return out;

  // d loss / d logits, assembled once here.
  std::vector<T> dlogits(logits.numel());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t base = s * classes * hw + i;
      const auto t = static_cast<std::size_t>(target.labels[s * hw + i]);
      // q_c = d dice_term / d p_c
      double weighted = 0;
      std::vector<double> q(classes, 0.0);
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t k = s * classes + c;
        if (mask && !present[k]) continue;
        const double denom = sum_p[k] + sum_g[k] + cfg.smooth;
        const double g = (t == c) ? 1.0 : 0.0;
        const double dd = (2 * g * denom - (2 * inter[k] + cfg.smooth)) / (denom * denom);
        q[c] = -cfg.beta * dd / static_cast<double>(counted);
        weighted += prob[base + c * hw] * q[c];
      }
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = prob[base + c * hw];
        const double g = (t == c) ? 1.0 : 0.0;
        double grad = p * (q[c] - weighted);
        if (!mask_ce || present[s * classes + c]) grad += cfg.alpha * (p - g) / pixels;
        dlogits[base + c * hw] = static_cast<T>(grad);
      }
    }
  auto ls = logits.storage(), os = out.storage();
  detail::record<T>("combined_loss", out, {&logits}, [ls, os, dlogits = std::move(dlogits)] {
    auto& g = detail::grad_of(*ls);
    const T up = os->grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += up * dlogits[i];
  });
  return out;
}

template Tensor<float> combined_loss(const Tensor<float>&, const LabelBatch&, const LossConfig&,
                                     LossTerms*);
template Tensor<double> combined_loss(const Tensor<double>&, const LabelBatch&, const LossConfig&,
                                      LossTerms*);

}  // namespace cts

#include "convtrans/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "convtrans/ops.hpp"
#include "convtrans/rng.hpp"

namespace cts {
namespace {

double project(const Tensor<double>& out, const Tensor<double>& weights) {
  double acc = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += out[i] * weights[i];
  return acc;
}

std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t limit, RngState& rng) {
  std::vector<std::size_t> all(numel);
  for (std::size_t i = 0; i < numel; ++i) all[i] = i;
  if (limit == 0 || limit >= numel) return all;
  shuffle(all.begin(), all.end(), rng);
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradcheckReport gradcheck(std::vector<GradcheckInput> inputs,
                          const std::function<Tensor<double>()>& fn,
                          const GradcheckOptions& options,
                          const std::function<void(std::uint64_t)>& resample) {
  GradcheckReport report;
  RngState rng(options.seed);

  for (int attempt = 0;; ++attempt) {
    report.inputs.clear();
    report.resamples = attempt;
    for (auto& in : inputs) {
      in.tensor.zero_grad();
      in.tensor.set_requires_grad(true);
    }

    Tensor<double> weights;
    {
      Tape<double> tape;
      Tensor<double> out;
      {
        TapeScope<double> scope(tape);
        out = fn();
      }
      weights = Tensor<double>(out.shape());
      RngState wrng = rng.fork(static_cast<std::uint64_t>(attempt));
      for (auto& w : weights.data()) w = wrng.uniform(-1.0, 1.0);
      Tensor<double> loss;
      {
        TapeScope<double> scope(tape);
        loss = sum(mul(out, weights));
      }
      backward(loss, tape);
    }

    // Numeric estimates for every input first, so the error scale can be
    // floored relative to the largest gradient of the whole function.
    struct Probe {
      std::vector<std::size_t> coords;
      std::vector<double> numeric, numeric_half;
      double scale = 0;
    };
    std::vector<Probe> probes;
    double global = 0;
    for (auto& in : inputs) {
      Probe p;
      auto analytic = in.tensor.grad_tensor();
      RngState crng = rng.fork(1000 + static_cast<std::uint64_t>(attempt));
      p.coords = pick_coords(in.tensor.numel(), options.max_coords_per_input, crng);
      for (auto c : p.coords) p.scale = std::max(p.scale, std::abs(analytic[c]));
      p.numeric.resize(p.coords.size());
      p.numeric_half.resize(p.coords.size());
      auto data = in.tensor.data();
      for (std::size_t idx = 0; idx < p.coords.size(); ++idx) {
        const std::size_t c = p.coords[idx];
        const double x0 = data[c];
        const double h = options.rel_step * std::max(1.0, std::abs(x0));
        auto central = [&](double step) {
          data[c] = x0 + step;
          double fp = project(fn(), weights);
          data[c] = x0 - step;
          double fm = project(fn(), weights);
          data[c] = x0;
          return (fp - fm) / (2 * step);
        };
        p.numeric[idx] = central(h);
        p.numeric_half[idx] = central(h / 2);
        p.scale = std::max(p.scale, std::abs(p.numeric[idx]));
      }
      global = std::max(global, p.scale);
      probes.push_back(std::move(p));
    }

    bool kink = false;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const auto& p = probes[k];
      InputGradcheck check;
      check.name = inputs[k].name;
      auto analytic = inputs[k].tensor.grad_tensor();
      const double scale = std::max({p.scale, 1e-3 * global, 1e-6});
      for (std::size_t idx = 0; idx < p.coords.size(); ++idx) {
        // A smooth function gives O(h^2) disagreement between the two steps.
        if (std::abs(p.numeric[idx] - p.numeric_half[idx]) > options.tolerance * scale) {
          ++check.skipped_kinks;
          kink = true;
          continue;
        }
        const double err = std::abs(analytic[p.coords[idx]] - p.numeric[idx]) / scale;
        check.max_error = std::max(check.max_error, err);
        ++check.checked;
      }
      report.inputs.push_back(check);
    }

    if (kink && resample && attempt < options.max_resamples) {
      resample(options.seed + 7919u * static_cast<std::uint64_t>(attempt + 1));
      continue;
    }
    break;
  }

  report.max_error = 0;
  std::size_t skipped = 0, checked = 0;
  for (const auto& c : report.inputs) {
    report.max_error = std::max(report.max_error, c.max_error);
    skipped += c.skipped_kinks;
    checked += c.checked;
  }
  // A handful of kink coordinates after exhausting resamples is tolerated; a
  // check that skipped most of its coordinates proves nothing.
  report.passed = report.max_error <= options.tolerance && checked > 0 && skipped * 20 <= checked;
  for (auto& in : inputs) in.tensor.zero_grad();
  return report;
}

}  // namespace cts

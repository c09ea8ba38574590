#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "convtrans/tensor.hpp"

namespace cts {

struct GradcheckOptions {
  double tolerance = 1e-4;
  /// Step is rel_step * max(1, |x|).
  double rel_step = 1e-4;
  /// Coordinates checked per input; 0 checks every element.
  std::size_t max_coords_per_input = 0;
  /// How often inputs may be redrawn after a kink was hit.
  int max_resamples = 8;
  std::uint64_t seed = 1;
};

struct InputGradcheck {
  std::string name;
  // max |analytic - numeric| / scale, where scale is the larger inf-norm of the two
  // gradients, floored at 1e-3 of the largest scale over all inputs
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

struct GradcheckReport {
  std::vector<InputGradcheck> inputs;
  double max_error = 0.0;
  int resamples = 0;
  bool passed = false;
};

struct GradcheckInput {
  std::string name;
  Tensor<double> tensor;  // a handle: perturbed in place
};

// Compares reverse-mode gradients of a (possibly non-scalar) function
// against central finite differences. The function output is reduced to a
// scalar with fixed random weights so every output element contributes.
//
// A coordinate whose step-h and step-h/2 estimates disagree is treated as
// sitting on a kink (relu at 0, pooling ties); the inputs are then redrawn
// through `resample` when provided.
GradcheckReport gradcheck(std::vector<GradcheckInput> inputs,
                          const std::function<Tensor<double>()>& fn,
                          const GradcheckOptions& options,
                          const std::function<void(std::uint64_t)>& resample = {});

}  // namespace cts

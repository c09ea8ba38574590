#pragma once

#include <cstdint>
#include <vector>

#include "convtrans/tensor.hpp"

namespace cts {

/// What "ignore classes absent from the ground truth" applies to.
enum class EmptyClassMask {
  dice_only,     // drop absent classes from the Dice class-mean; CE over all pixels
  dice_and_ce,   // additionally renormalize the CE softmax over present classes only
};

struct LossConfig {
  double alpha = 0.5;   // cross-entropy weight
  double beta = 0.5;    // soft-Dice weight
  double smooth = 1.0;  // Dice smoothing
  bool mask_empty_classes = false;
  EmptyClassMask mask_mode = EmptyClassMask::dice_only;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// Integer label maps for a batch, row-major [N, H, W].
struct LabelBatch {
  std::size_t n = 0, height = 0, width = 0;
  std::vector<std::int32_t> labels;
};

struct LossTerms {
  double cross_entropy = 0;
  double dice = 0;  // soft-Dice loss, 1 - mean Dice score
  double total = 0;
};

// alpha * CE + beta * (1 - mean_{n,c} Dice_{n,c}) for logits [N, Class, H, W].
// CE is the mean over all pixels of -log softmax at the target class. Dice
// terms are computed per sample and class on softmax probabilities:
//   Dice_{n,c} = (2 sum p g + smooth) / (sum p + sum g + smooth).
// Records a single fused node on the active tape.
template <class T>
Tensor<T> combined_loss(const Tensor<T>& logits, const LabelBatch& target, const LossConfig& cfg,
                        LossTerms* terms = nullptr);

}  // namespace cts

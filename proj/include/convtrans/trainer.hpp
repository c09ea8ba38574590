#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "convtrans/data.hpp"
#include "convtrans/loss.hpp"
#include "convtrans/metrics.hpp"
#include "convtrans/model.hpp"
#include "convtrans/run_config.hpp"

namespace cts {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m, v;  // one pair per parameter, lazily sized
};

/// One bias-corrected Adam update of every parameter from its gradient.
/// Throws UsageError naming the first parameter without a gradient.
void adam_step(const std::vector<NamedTensor<float>>& params, OptimState& state);

struct TrainRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  std::string ckpt;       // checkpoint written this epoch, empty if none
  double seconds = 0;     // wall time of the epoch
};

struct TrainResult {
  std::vector<TrainRecord> records;
  std::string best_checkpoint;
  double best_val_loss = 0;
  std::size_t best_epoch = 0;
};

struct TrainOptions {
  std::string out_dir;                       // receives best.ckpt and train_log.csv
  std::function<void(const TrainRecord&)> on_epoch;
};

/// Trains `model` on the train split and selects by val loss. Samples are
/// resized to the model input size when they differ.
TrainResult train(SegModel<float>& model, const std::vector<Sample>& dataset, const RunConfig& config,
                  const TrainOptions& options);

/// Mean combined loss over `samples` in eval mode, batched like training.
double dataset_loss(SegModel<float>& model, const std::vector<Sample>& samples, const LossConfig& loss,
                    std::size_t batch);

void write_train_log_header(std::ostream& out);
void write_train_log_row(std::ostream& out, const TrainRecord& record);

// CTS-CKPT1 checkpoints.
struct CheckpointMeta {
  RunConfig config;  // model, loss and train sections are restored
  std::size_t epoch = 0;
  double val_loss = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  SegModel<float> model;
};

void save_checkpoint(const std::string& path, const SegModel<float>& model, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::string& path);

struct CheckpointEval {
  EvalReport report;
  double loss = 0;
  std::vector<LabelMap> predictions;
};

/// Per-pixel argmax of eval-mode logits.
std::vector<LabelMap> predict(SegModel<float>& model, const std::vector<Sample>& samples, std::size_t batch);

/// Scores a model on `samples`. Throws ConfigError when channel or class
/// counts disagree with the model.
CheckpointEval evaluate_model(SegModel<float>& model, const std::vector<Sample>& samples,
                              const LossConfig& loss, std::size_t batch, bool mask_empty);
CheckpointEval evaluate_checkpoint(const std::string& ckpt_path, const std::vector<Sample>& samples,
                                   bool mask_empty);

}  // namespace cts

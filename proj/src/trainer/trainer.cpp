#include "convtrans/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "convtrans/errors.hpp"
#include "convtrans/parallel.hpp"
#include "convtrans/rng.hpp"
#include "convtrans/tensor_io.hpp"

namespace fs = std::filesystem;

namespace cts {
namespace {

constexpr const char* kCheckpointMagic = "CTS-CKPT1";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

// Copies samples at model resolution and checks channel and label ranges.
std::vector<Sample> conform(const std::vector<Sample>& samples, const ModelConfig& c) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.channels() != c.in_channels)
      throw ConfigError("sample '" + s.id + "' has " + std::to_string(s.channels()) +
                        " channels, the model expects " + std::to_string(c.in_channels));
    for (auto v : s.mask)
      if (v < 0 || static_cast<std::size_t>(v) >= c.classes)
        throw ConfigError("sample '" + s.id + "' has label " + std::to_string(v) + ", the model has " +
                          std::to_string(c.classes) + " classes");
    if (s.width() == c.width && s.height() == c.height) out.push_back(s);
    else out.push_back(resize(s, c.width, c.height));
  }
  return out;
}

struct Batch {
  Tensor<float> images;
  LabelBatch labels;
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx, std::size_t begin,
                 std::size_t end) {
  const auto& first = samples[idx[begin]];
  const std::size_t c = first.channels(), h = first.height(), w = first.width(), n = end - begin;
  Batch b;
  b.images = Tensor<float>({n, c, h, w});
  b.labels = {n, h, w, std::vector<std::int32_t>(n * h * w)};
  auto dst = b.images.data();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = samples[idx[begin + k]];
    std::copy(s.image.data().begin(), s.image.data().end(), dst.begin() + static_cast<std::ptrdiff_t>(k * c * h * w));
    std::copy(s.mask.begin(), s.mask.end(), b.labels.labels.begin() + static_cast<std::ptrdiff_t>(k * h * w));
  }
  return b;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double loss_of_conformed(SegModel<float>& model, const std::vector<Sample>& samples, const LossConfig& loss,
                         std::size_t batch) {
  if (samples.empty()) throw DataError("cannot compute a loss over an empty split");
  const auto idx = iota_n(samples.size());
  ForwardContext<float> ctx;
  double total = 0;
  for (std::size_t b = 0; b < samples.size(); b += batch) {
    const std::size_t e = std::min(samples.size(), b + batch);
    auto data = make_batch(samples, idx, b, e);
    LossTerms terms;
    combined_loss(forward(data.images, model, ctx), data.labels, loss, &terms);
    total += terms.total * static_cast<double>(e - b);
  }
  return total / static_cast<double>(samples.size());
}

std::vector<LabelMap> predict_conformed(SegModel<float>& model, const std::vector<Sample>& samples,
                                        std::size_t batch) {
  const auto idx = iota_n(samples.size());
  ForwardContext<float> ctx;
  std::vector<LabelMap> out;
  for (std::size_t b = 0; b < samples.size(); b += batch) {
    const std::size_t e = std::min(samples.size(), b + batch);
    auto data = make_batch(samples, idx, b, e);
    auto logits = forward(data.images, model, ctx);
    const std::size_t classes = logits.dim(1), h = logits.dim(2), w = logits.dim(3), hw = h * w;
    for (std::size_t k = 0; k < e - b; ++k) {
      LabelMap m{samples[b + k].id, w, h, std::vector<std::int32_t>(hw)};
      const float* z = logits.data().data() + k * classes * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
          if (z[c * hw + p] > z[best * hw + p]) best = c;
        m.labels[p] = static_cast<std::int32_t>(best);
      }
      out.push_back(std::move(m));
    }
  }
  return out;
}

}  // namespace

void adam_step(const std::vector<NamedTensor<float>>& params, OptimState& st) {
  for (const auto& p : params)
    if (!p.tensor.has_grad())
      throw UsageError("adam_step: parameter '" + p.name + "' has no gradient");
  if (st.m.empty()) {
    for (const auto& p : params) {
      st.m.emplace_back(p.tensor.numel(), 0.0f);
      st.v.emplace_back(p.tensor.numel(), 0.0f);
    }
  }
  if (st.m.size() != params.size()) throw UsageError("adam_step: parameter list changed between steps");
  ++st.step;
  const auto& c = st.config;
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(c.beta1, t), c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto tensor = params[i].tensor;
    auto w = tensor.data();
    auto g = std::as_const(tensor).grad();
    auto& m = st.m[i];
    auto& v = st.v[i];
    if (m.size() != w.size()) throw UsageError("adam_step: shape of '" + params[i].name + "' changed");
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      const double mk = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      const double vk = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = c.lr * (mk / c1) / (std::sqrt(vk / c2) + c.eps);
      w[k] = static_cast<float>(w[k] - update);
    }
  }
}

double dataset_loss(SegModel<float>& model, const std::vector<Sample>& samples, const LossConfig& loss,
                    std::size_t batch) {
  return loss_of_conformed(model, conform(samples, model.config()), loss, batch);
}

void write_train_log_header(std::ostream& out) { out << "epoch,train_loss,val_loss,ckpt,seconds\n"; }

void write_train_log_row(std::ostream& out, const TrainRecord& r) {
  out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << r.ckpt << ','
      << fmt(r.seconds) << '\n';
}

TrainResult train(SegModel<float>& model, const std::vector<Sample>& dataset, const RunConfig& config,
                  const TrainOptions& options) {
  config.loss.validate();
  config.train.validate();
  if (!(model.config() == config.model)) throw ConfigError("train: model and run configuration disagree");
  std::vector<Sample> train_set, val_set;
  for (const auto& s : dataset) {
    if (s.split == Split::train) train_set.push_back(s);
    else if (s.split == Split::val) val_set.push_back(s);
  }
  if (train_set.empty() || val_set.empty()) throw DataError("train: the dataset needs non-empty train and val splits");
  train_set = conform(train_set, model.config());
  val_set = conform(val_set, model.config());
  set_num_threads(config.train.threads);

  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);
  const std::string ckpt_path = options.out_dir.empty() ? "" : (fs::path(options.out_dir) / "best.ckpt").string();
  std::ofstream log;
  if (!options.out_dir.empty()) {
    log.open(fs::path(options.out_dir) / "train_log.csv");
    if (!log) throw DataError("cannot write the training log in '" + options.out_dir + "'");
    write_train_log_header(log);
  }

  OptimState opt;
  opt.config = {config.train.lr, config.train.beta1, config.train.beta2, config.train.eps};
  RngState shuffle_rng = RngState(config.train.seed).fork(1);
  RngState dropout_rng = RngState(config.train.seed).fork(2);
  const auto params = model.parameters();
  const std::size_t batch = config.train.batch;

  TrainResult result;
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    auto order = iota_n(train_set.size());
    shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0;
    std::size_t batch_id = 0;
    for (std::size_t b = 0; b < order.size(); b += batch, ++batch_id) {
      const std::size_t e = std::min(order.size(), b + batch);
      auto data = make_batch(train_set, order, b, e);
      ForwardContext<float> ctx;
      ctx.training = true;
      ctx.rng = &dropout_rng;
      Tape<float> tape;
      Tensor<float> loss;
      LossTerms terms;
      {
        TapeScope<float> scope(tape);
        loss = combined_loss(forward(data.images, model, ctx), data.labels, config.loss, &terms);
      }
      if (!std::isfinite(terms.total))
        throw DataError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(batch_id));
      model.zero_grad();
      backward(loss, tape);
      adam_step(params, opt);
      sum += terms.total * static_cast<double>(e - b);
    }
    TrainRecord rec;
    rec.epoch = epoch;
    rec.train_loss = sum / static_cast<double>(train_set.size());
    rec.val_loss = loss_of_conformed(model, val_set, config.loss, batch);
    if (!std::isfinite(rec.val_loss))
      throw DataError("non-finite validation loss at epoch " + std::to_string(epoch));
    if (!have_best || rec.val_loss < result.best_val_loss) {
      have_best = true;
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      if (!ckpt_path.empty()) {
        CheckpointMeta meta{config, epoch, rec.val_loss, config.train.seed};
        save_checkpoint(ckpt_path, model, meta);
        rec.ckpt = ckpt_path;
        result.best_checkpoint = ckpt_path;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log.is_open()) {
      write_train_log_row(log, rec);
      log.flush();
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.records.push_back(rec);
  }
  return result;
}

void save_checkpoint(const std::string& path, const SegModel<float>& model, const CheckpointMeta& meta) {
  RunConfig echo = meta.config;
  echo.model = model.config();
  echo.data.clear();
  echo.out.clear();
  std::vector<NamedTensor<float>> tensors = model.parameters();
  for (auto& b : model.buffers()) tensors.push_back(b);

  std::ostringstream header;
  header << kCheckpointMagic << '\n' << render(echo);
  header << "epoch = " << meta.epoch << '\n';
  header << "val_loss = " << hexfloat(meta.val_loss) << '\n';
  header << "seed = " << meta.seed << '\n';
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    header << "tensor " << t.name << ' ' << offset << ' ' << shape_str(t.tensor.shape()) << '\n';
    offset += encoded_tensor_size(t.tensor.shape());
  }
  header << "END\n";

  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out << header.str();
    for (const auto& t : tensors) write_tensor(out, t.tensor);
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw DataError("'" + path + "' is not a CTS-CKPT1 checkpoint");
  CheckpointMeta meta;
  struct Entry {
    std::size_t offset;
    std::string shape;
  };
  std::map<std::string, Entry> entries;
  bool ended = false;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = path + ":" + std::to_string(lineno);
    if (line == "END") {
      ended = true;
      break;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ss(line.substr(7));
      std::string name, shape;
      std::size_t offset = 0;
      if (!(ss >> name >> offset >> shape)) throw DataError(where + ": malformed tensor line");
      entries[name] = {offset, shape};
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError(where + ": malformed header line");
    const auto key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key == "epoch") meta.epoch = std::stoul(value);
    else if (key == "val_loss") meta.val_loss = std::strtod(value.c_str(), nullptr);
    else if (key == "seed") meta.seed = std::stoull(value);
    else set_run_config_value(meta.config, key, value, where);
  }
  if (!ended) throw DataError("checkpoint '" + path + "' is truncated (no END line)");
  const auto payload = in.tellg();

  Checkpoint ck{meta, SegModel<float>(meta.config.model, 0)};
  std::vector<NamedTensor<float>> tensors = ck.model.parameters();
  for (auto& b : ck.model.buffers()) tensors.push_back(b);
  if (tensors.size() != entries.size())
    throw ConfigError("checkpoint '" + path + "' holds " + std::to_string(entries.size()) +
                      " tensors, the configured model has " + std::to_string(tensors.size()));
  for (auto& t : tensors) {
    auto it = entries.find(t.name);
    if (it == entries.end()) throw ConfigError("checkpoint '" + path + "' lacks tensor " + t.name);
    if (it->second.shape != shape_str(t.tensor.shape()))
      throw ConfigError("checkpoint tensor " + t.name + " has shape " + it->second.shape + ", expected " +
                        shape_str(t.tensor.shape()));
    in.clear();
    in.seekg(payload + static_cast<std::streamoff>(it->second.offset));
    Tensor<float> value;
    try {
      value = read_tensor(in);
    } catch (const DataError& e) {
      throw DataError("checkpoint tensor " + t.name + ": " + e.what());
    }
    if (value.shape() != t.tensor.shape())
      throw DataError("checkpoint tensor " + t.name + " payload has shape " + shape_str(value.shape()));
    std::copy(value.data().begin(), value.data().end(), t.tensor.data().begin());
  }
  return ck;
}

std::vector<LabelMap> predict(SegModel<float>& model, const std::vector<Sample>& samples, std::size_t batch) {
  return predict_conformed(model, conform(samples, model.config()), batch);
}

CheckpointEval evaluate_model(SegModel<float>& model, const std::vector<Sample>& samples, const LossConfig& loss,
                              std::size_t batch, bool mask_empty) {
  if (samples.empty()) throw DataError("evaluate: no samples in the selected split");
  const auto conformed = conform(samples, model.config());
  CheckpointEval out;
  out.predictions = predict_conformed(model, conformed, batch);
  std::vector<LabelMap> gt;
  for (const auto& s : conformed) gt.push_back({s.id, s.width(), s.height(), s.mask});
  out.report = evaluate(out.predictions, gt, model.config().classes, mask_empty);
  out.loss = loss_of_conformed(model, conformed, loss, batch);
  return out;
}

CheckpointEval evaluate_checkpoint(const std::string& ckpt_path, const std::vector<Sample>& samples,
                                   bool mask_empty) {
  auto ck = load_checkpoint(ckpt_path);
  return evaluate_model(ck.model, samples, ck.meta.config.loss, ck.meta.config.train.batch, mask_empty);
}

}  // namespace cts

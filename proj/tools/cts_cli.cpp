// convtrans command line: analyze, synth, train, eval, compare, gradcheck.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cts/cts.h"

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

// Thrown to unwind with a C API failure.
struct ApiFailure {
  cts_status status;
};

void check(cts_status s) {
  if (s != CTS_OK) throw ApiFailure{s};
}

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  cts_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Config = Handle<cts_config, cts_config_free>;
using Model = Handle<cts_model, cts_model_free>;
using Report = Handle<cts_report, cts_report_free>;

// Flags shared by analyze and train; unset ones leave the config alone.
struct ModelFlags {
  std::string config;
  std::optional<std::size_t> levels, blocks, base_channels, downsample, classes, in_channels;
  std::string input_size;
  bool no_skip = false, no_dsl = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "key = value run configuration file")->check(CLI::ExistingFile);
    app->add_option("--levels", levels, "encoder depth l");
    app->add_option("--blocks", blocks, "Transformer blocks per decoder level");
    app->add_option("--base-channels", base_channels, "level-0 encoder width C_base");
    app->add_option("--downsample", downsample, "channel divisor m of the skip linears");
    app->add_option("--classes", classes, "output classes including background");
    app->add_option("--in-channels", in_channels, "input image channels");
    app->add_option("--input-size", input_size, "N or WxH");
    app->add_flag("--no-skip", no_skip, "disable skip connections");
    app->add_flag("--no-dsl", no_dsl, "skip connections without the down-sample linear");
  }

  void apply(cts_config* cfg) const {
    if (!config.empty()) check(cts_config_load(cfg, config.c_str()));
    auto set = [&](const char* key, const std::string& v) { check(cts_config_set(cfg, key, v.c_str())); };
    if (levels) set("model.levels", std::to_string(*levels));
    if (blocks) set("model.blocks", std::to_string(*blocks));
    if (base_channels) set("model.base_channels", std::to_string(*base_channels));
    if (downsample) set("model.downsample", std::to_string(*downsample));
    if (classes) set("model.classes", std::to_string(*classes));
    if (in_channels) set("model.in_channels", std::to_string(*in_channels));
    if (!input_size.empty()) {
      const auto x = input_size.find_first_of("x×");
      set("model.width", input_size.substr(0, x));
      set("model.height", x == std::string::npos ? input_size : input_size.substr(input_size.find_first_of("0123456789", x)));
    }
    if (no_skip) set("model.use_skip_connections", "false");
    if (no_dsl) set("model.use_dsl", "false");
  }
};

int run_analyze(const ModelFlags& flags, bool json) {
  Config cfg;
  check(cts_config_new(&cfg.p));
  flags.apply(cfg.p);
  char* text = nullptr;
  check(cts_analyze(cfg.p, json ? 1 : 0, &text));
  std::cout << take(text);
  return kOk;
}

struct SynthFlags {
  std::size_t count = 200, size = 64, classes = 2;
  std::uint64_t seed = 7;
  std::string out;
};

int run_synth(const SynthFlags& f) {
  char* manifest = nullptr;
  check(cts_synth(f.count, f.size, f.classes, f.seed, f.out.c_str(), &manifest));
  std::cout << "wrote " << f.count << " samples, manifest " << take(manifest) << "\n";
  return kOk;
}

struct TrainFlags {
  std::string data, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch, parallel;
  std::optional<double> lr;
  bool mask_empty = false;
};

int run_train(const ModelFlags& model, const TrainFlags& f) {
  Config cfg;
  check(cts_config_new(&cfg.p));
  auto set = [&](const char* key, const std::string& v) { check(cts_config_set(cfg.p, key, v.c_str())); };
  // Defaults < dataset geometry < config file < flags.
  if (!f.data.empty()) {
    std::size_t w = 0, h = 0, c = 0, k = 0;
    check(cts_manifest_info(f.data.c_str(), &w, &h, &c, &k));
    set("model.width", std::to_string(w));
    set("model.height", std::to_string(h));
    set("model.in_channels", std::to_string(c));
    set("model.classes", std::to_string(k));
  }
  model.apply(cfg.p);
  if (!f.data.empty()) set("data", f.data);
  if (!f.out.empty()) set("out", f.out);
  if (f.seed) set("train.seed", std::to_string(*f.seed));
  if (f.epochs) set("train.epochs", std::to_string(*f.epochs));
  if (f.batch) set("train.batch", std::to_string(*f.batch));
  if (f.parallel) set("train.threads", std::to_string(*f.parallel));
  if (f.lr) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *f.lr);
    set("train.lr", buf);
  }
  if (f.mask_empty) set("loss.mask_empty_classes", "true");
  char* out = nullptr;
  check(cts_config_get(cfg.p, "out", &out));
  if (take(out).empty()) set("out", "runs/latest");
  check(cts_config_validate(cfg.p));

  auto on_epoch = [](const cts_epoch* e, void*) {
    std::printf("epoch %zu  train_loss %.6f  val_loss %.6f  %.1fs%s%s\n", e->epoch, e->train_loss, e->val_loss,
                e->seconds, e->checkpoint[0] ? "  saved " : "", e->checkpoint);
    std::fflush(stdout);
  };
  char* best = nullptr;
  double best_loss = 0;
  check(cts_train(cfg.p, on_epoch, nullptr, &best, &best_loss));
  std::printf("best checkpoint %s  val_loss %.6f\n", take(best).c_str(), best_loss);
  return kOk;
}

struct EvalFlags {
  std::string checkpoint, data, split = "test", out;
  bool mask_empty = false;
  std::optional<std::size_t> parallel;
};

int run_eval(const EvalFlags& f, bool json) {
  if (f.parallel) check(cts_set_num_threads(*f.parallel));
  Model model;
  check(cts_model_load(f.checkpoint.c_str(), &model.p));
  Report report;
  double loss = 0;
  check(cts_evaluate(model.p, f.data.c_str(), f.split.c_str(), f.mask_empty ? 1 : 0, &report.p, &loss));
  if (!f.out.empty()) check(cts_report_save(report.p, f.out.c_str()));
  char* summary = nullptr;
  check(cts_report_summary(report.p, json ? 1 : 0, &summary));
  if (!json) std::printf("split %s  loss %.6f\n", f.split.c_str(), loss);
  std::cout << take(summary);
  if (!f.out.empty() && !json) std::cout << "report " << f.out << "\n";
  return kOk;
}

int run_compare(const std::string& a, const std::string& b, bool json) {
  Report ra, rb;
  check(cts_report_load(a.c_str(), &ra.p));
  check(cts_report_load(b.c_str(), &rb.p));
  char* text = nullptr;
  check(cts_compare(ra.p, rb.p, json ? 1 : 0, &text));
  std::cout << take(text);
  return kOk;
}

struct GradcheckFlags {
  std::vector<std::string> cases;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  std::optional<std::size_t> parallel;
};

int run_gradcheck(const GradcheckFlags& f, bool json) {
  if (f.parallel) check(cts_set_num_threads(*f.parallel));
  std::string names;
  for (const auto& c : f.cases) names += (names.empty() ? "" : ",") + c;
  char* text = nullptr;
  int passed = 0;
  check(cts_gradcheck(names.c_str(), f.seed, f.tolerance, json ? 1 : 0, &text, &passed));
  std::cout << take(text);
  if (!passed) {
    std::cerr << "gradcheck: at least one check exceeded the tolerance\n";
    return kFailed;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid CNN-Transformer segmentation: analysis, training and evaluation", "cts"};
  app.require_subcommand(1);
  app.fallthrough();
  bool json = false;
  app.add_flag("--json", json, "machine-readable output");

  ModelFlags analyze_model;
  auto* analyze = app.add_subcommand("analyze", "print level dimensions and parameter counts");
  analyze_model.add_to(analyze);

  SynthFlags synth_flags;
  auto* synth = app.add_subcommand("synth", "write a synthetic segmentation dataset");
  synth->add_option("--count", synth_flags.count, "number of images")->capture_default_str();
  synth->add_option("--size", synth_flags.size, "image side in pixels")->capture_default_str();
  synth->add_option("--classes", synth_flags.classes, "classes including background")->capture_default_str();
  synth->add_option("--seed", synth_flags.seed, "generator and split seed")->capture_default_str();
  synth->add_option("--out", synth_flags.out, "output directory")->required();

  ModelFlags train_model;
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train a model and keep the best validation checkpoint");
  train_model.add_to(train);
  train->add_option("--data", train_flags.data, "manifest file or dataset directory")->required();
  train->add_option("--out", train_flags.out, "run directory (default runs/latest)");
  train->add_option("--seed", train_flags.seed, "initialization, shuffling and dropout seed");
  train->add_option("--epochs", train_flags.epochs, "training epochs");
  train->add_option("--batch", train_flags.batch, "batch size");
  train->add_option("--lr", train_flags.lr, "Adam learning rate");
  train->add_flag("--mask-empty", train_flags.mask_empty, "ignore classes absent from the ground truth in the loss");
  train->add_option("--parallel", train_flags.parallel, "worker threads (default 1)");

  EvalFlags eval_flags;
  auto* eval = app.add_subcommand("eval", "score a checkpoint on one split of a dataset");
  eval->add_option("--checkpoint", eval_flags.checkpoint, "CTS-CKPT1 file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_flags.data, "manifest file or dataset directory")->required();
  eval->add_option("--split", eval_flags.split, "train, val, test or all")->capture_default_str();
  eval->add_option("--out", eval_flags.out, "write the per-image report CSV here");
  eval->add_flag("--mask-empty", eval_flags.mask_empty, "skip classes absent from the ground truth");
  eval->add_option("--parallel", eval_flags.parallel, "worker threads (default 1)");

  std::string compare_a, compare_b;
  auto* compare = app.add_subcommand("compare", "signed-rank tests between two report CSVs");
  compare->add_option("a", compare_a, "baseline report")->required()->check(CLI::ExistingFile);
  compare->add_option("b", compare_b, "other report")->required()->check(CLI::ExistingFile);

  GradcheckFlags gc_flags;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks of every differentiable op");
  gradcheck->add_option("--case", gc_flags.cases, "check to run (repeatable; default all)")->delimiter(',');
  gradcheck->add_option("--seed", gc_flags.seed, "input seed")->capture_default_str();
  gradcheck->add_option("--tolerance", gc_flags.tolerance, "maximum relative error")->capture_default_str();
  gradcheck->add_option("--parallel", gc_flags.parallel, "worker threads (default 1)");

  for (auto* sub : {analyze, synth, train, eval, compare, gradcheck}) sub->fallthrough();

  if (argc < 2) {
    std::cerr << app.help();
    return kUsage;
  }
  const std::string first = argv[1];
  if (first[0] != '-' && app.get_subcommand_no_throw(first) == nullptr) {
    std::cerr << "error: unknown subcommand '" << first << "'\n\n" << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*analyze) return run_analyze(analyze_model, json);
    if (*synth) return run_synth(synth_flags);
    if (*train) return run_train(train_model, train_flags);
    if (*eval) return run_eval(eval_flags, json);
    if (*compare) return run_compare(compare_a, compare_b, json);
    if (*gradcheck) return run_gradcheck(gc_flags, json);
  } catch (const ApiFailure& f) {
    std::cerr << "error: " << cts_last_error() << "\n";
    return f.status == CTS_ERR_USAGE ? kUsage : kFailed;
  }
  std::cerr << app.help();
  return kUsage;
}

#include "cts/cts.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>

#include "convtrans/data.hpp"
#include "convtrans/errors.hpp"
#include "convtrans/gradcheck_suite.hpp"
#include "convtrans/metrics.hpp"
#include "convtrans/parallel.hpp"
#include "convtrans/run_config.hpp"
#include "convtrans/trainer.hpp"
#include "format.hpp"

struct cts_config {
  cts::RunConfig value;
};

struct cts_model {
  cts::Checkpoint checkpoint;
};

struct cts_report {
  cts::EvalReport value;
};

namespace {

thread_local std::string last_error;

cts_status fail(cts_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <class F>
cts_status guarded(F&& body) {
  try {
    body();
    last_error.clear();
    return CTS_OK;
  } catch (const cts::InsufficientData& e) {
    return fail(CTS_ERR_INSUFFICIENT_DATA, e.what());
  } catch (const cts::DataError& e) {
    return fail(CTS_ERR_DATA, e.what());
  } catch (const cts::ConfigError& e) {
    return fail(CTS_ERR_CONFIG, e.what());
  } catch (const cts::UsageError& e) {
    return fail(CTS_ERR_USAGE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CTS_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(CTS_ERR_DATA, e.what());
  } catch (const std::exception& e) {
    return fail(CTS_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CTS_ERR_INTERNAL, "unknown error");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw cts::UsageError(std::string(what) + " is null");
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  require(out, "output pointer");
  *out = dup(s);
}

std::vector<std::string> split_names(const char* names) {
  std::vector<std::string> out;
  if (names == nullptr) return out;
  std::stringstream ss(names);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string manifest_path(const std::string& p) {
  if (std::filesystem::is_directory(p)) return (std::filesystem::path(p) / "manifest.txt").string();
  return p;
}

}  // namespace

extern "C" {

const char* cts_last_error(void) { return last_error.c_str(); }

const char* cts_status_name(cts_status status) {
  switch (status) {
    case CTS_OK: return "ok";
    case CTS_ERR_CONFIG: return "config error";
    case CTS_ERR_DATA: return "data error";
    case CTS_ERR_INSUFFICIENT_DATA: return "insufficient data";
    case CTS_ERR_USAGE: return "usage error";
    case CTS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* cts_version(void) { return "1.0.0"; }

void cts_string_free(char* s) { std::free(s); }

cts_status cts_set_num_threads(size_t n) {
  return guarded([&] {
    if (n == 0) throw cts::UsageError("thread count must be positive");
    cts::set_num_threads(n);
  });
}

cts_status cts_config_new(cts_config** out) {
  return guarded([&] {
    require(out, "output pointer");
    *out = new cts_config{};
  });
}

void cts_config_free(cts_config* cfg) { delete cfg; }

cts_status cts_config_clone(const cts_config* cfg, cts_config** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "output pointer");
    *out = new cts_config{cfg->value};
  });
}

cts_status cts_config_parse(cts_config* cfg, const char* text) {
  return guarded([&] {
    require(cfg, "config");
    require(text, "text");
    cfg->value = cts::parse_run_config(text, cfg->value);
  });
}

cts_status cts_config_load(cts_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "path");
    cfg->value = cts::load_run_config(path, cfg->value);
  });
}

cts_status cts_config_parse_json(cts_config* cfg, const char* json) {
  return guarded([&] {
    require(cfg, "config");
    require(json, "json");
    cts::capi::apply_config_json(cfg->value, json);
  });
}

cts_status cts_config_set(cts_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cts::set_run_config_value(cfg->value, key, value, "");
  });
}

cts_status cts_config_get(const cts_config* cfg, const char* key, char** value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    const std::string k = key;
    std::istringstream in(cts::render(cfg->value));
    std::string line;
    while (std::getline(in, line))
      if (line.rfind(k + " = ", 0) == 0) return put(value, line.substr(k.size() + 3));
    if (k == "data" || k == "out") return put(value, "");
    throw cts::ConfigError("unknown key '" + k + "'");
  });
}

cts_status cts_config_render(const cts_config* cfg, char** text) {
  return guarded([&] {
    require(cfg, "config");
    put(text, cts::render(cfg->value));
  });
}

cts_status cts_config_validate(const cts_config* cfg) {
  return guarded([&] {
    require(cfg, "config");
    cfg->value.validate();
  });
}

int cts_config_equal(const cts_config* a, const cts_config* b) {
  return a != nullptr && b != nullptr && a->value == b->value;
}

cts_status cts_analyze(const cts_config* cfg, int json, char** text) {
  return guarded([&] {
    require(cfg, "config");
    put(text, json ? cts::capi::analyze_json(cfg->value) : cts::capi::analyze_text(cfg->value));
  });
}

cts_status cts_param_count(const cts_config* cfg, uint64_t* total) {
  return guarded([&] {
    require(cfg, "config");
    require(total, "output pointer");
    cfg->value.model.validate();
    *total = cts::count_params(cfg->value.model).total();
  });
}

cts_status cts_synth(size_t count, size_t size, size_t classes, uint64_t seed, const char* out_dir, char** manifest) {
  return guarded([&] {
    require(out_dir, "output directory");
    cts::SynthOptions opt;
    opt.count = count;
    opt.size = size;
    opt.classes = classes;
    opt.seed = seed;
    const auto path = cts::synth_generate(opt, out_dir);
    if (manifest != nullptr) *manifest = dup(path);
  });
}

cts_status cts_manifest_info(const char* manifest, size_t* width, size_t* height, size_t* channels,
                              size_t* classes) {
  return guarded([&] {
    require(manifest, "manifest path");
    auto m = cts::read_manifest(manifest_path(manifest));
    if (m.entries.empty()) throw cts::DataError(std::string("manifest ") + manifest + " has no entries");
    m.entries.resize(1);
    const auto first = cts::load_dataset(m);
    if (width != nullptr) *width = first[0].width();
    if (height != nullptr) *height = first[0].height();
    if (channels != nullptr) *channels = m.channels;
    if (classes != nullptr) *classes = m.classes;
  });
}

cts_status cts_train(const cts_config* cfg, cts_epoch_fn on_epoch, void* user, char** best_checkpoint,
                     double* best_val_loss) {
  return guarded([&] {
    require(cfg, "config");
    const auto& rc = cfg->value;
    if (rc.data.empty()) throw cts::UsageError("no dataset given (data)");
    if (rc.out.empty()) throw cts::UsageError("no output directory given (out)");
    rc.validate();
    cts::set_num_threads(rc.train.threads);
    auto dataset = cts::load_dataset(manifest_path(rc.data));
    cts::SegModel<float> model(rc.model, rc.train.seed);
    cts::TrainOptions opts;
    opts.out_dir = rc.out;
    if (on_epoch != nullptr)
      opts.on_epoch = [&](const cts::TrainRecord& r) {
        cts_epoch e{r.epoch, r.train_loss, r.val_loss, r.seconds, r.ckpt.c_str()};
        on_epoch(&e, user);
      };
    auto result = cts::train(model, dataset, rc, opts);
    if (best_checkpoint != nullptr) *best_checkpoint = dup(result.best_checkpoint);
    if (best_val_loss != nullptr) *best_val_loss = result.best_val_loss;
  });
}

cts_status cts_model_load(const char* checkpoint, cts_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint path");
    require(out, "output pointer");
    *out = new cts_model{cts::load_checkpoint(checkpoint)};
  });
}

void cts_model_free(cts_model* model) { delete model; }

cts_status cts_model_config(const cts_model* model, cts_config** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "output pointer");
    *out = new cts_config{model->checkpoint.meta.config};
  });
}

cts_status cts_model_epoch(const cts_model* model, size_t* epoch, double* val_loss) {
  return guarded([&] {
    require(model, "model");
    if (epoch != nullptr) *epoch = model->checkpoint.meta.epoch;
    if (val_loss != nullptr) *val_loss = model->checkpoint.meta.val_loss;
  });
}

cts_status cts_evaluate(cts_model* model, const char* manifest, const char* split, int mask_empty, cts_report** out,
                        double* loss) {
  return guarded([&] {
    require(model, "model");
    require(manifest, "manifest path");
    require(out, "output pointer");
    const std::string which = split == nullptr ? "test" : split;
    auto all = cts::load_dataset(manifest_path(manifest));
    std::vector<cts::Sample> chosen;
    if (which == "all") {
      chosen = std::move(all);
    } else {
      const auto s = cts::parse_split(which);
      for (auto& x : all)
        if (x.split == s) chosen.push_back(std::move(x));
    }
    if (chosen.empty()) throw cts::DataError("no samples in split '" + which + "' of " + manifest);
    const auto& meta = model->checkpoint.meta;
    auto ev = cts::evaluate_model(model->checkpoint.model, chosen, meta.config.loss, meta.config.train.batch,
                                  mask_empty != 0);
    if (loss != nullptr) *loss = ev.loss;
    *out = new cts_report{std::move(ev.report)};
  });
}

void cts_report_free(cts_report* report) { delete report; }

cts_status cts_report_load(const char* path, cts_report** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "output pointer");
    *out = new cts_report{cts::load_report_csv(path)};
  });
}

cts_status cts_report_save(const cts_report* report, const char* path) {
  return guarded([&] {
    require(report, "report");
    require(path, "path");
    cts::save_report_csv(path, report->value);
  });
}

cts_status cts_report_csv(const cts_report* report, char** text) {
  return guarded([&] {
    require(report, "report");
    std::ostringstream out;
    cts::write_report_csv(out, report->value);
    put(text, out.str());
  });
}

cts_status cts_report_from_csv(const char* text, cts_report** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "output pointer");
    std::istringstream in(text);
    *out = new cts_report{cts::read_report_csv(in)};
  });
}

cts_status cts_report_summary(const cts_report* report, int json, char** text) {
  return guarded([&] {
    require(report, "report");
    put(text, json ? cts::capi::report_summary_json(report->value) : cts::capi::report_summary_text(report->value));
  });
}

int cts_report_equal(const cts_report* a, const cts_report* b) {
  if (a == nullptr || b == nullptr) return 0;
  const auto& x = a->value;
  const auto& y = b->value;
  return x.classes == y.classes && x.mask_empty == y.mask_empty && x.entries == y.entries &&
         x.per_class == y.per_class && x.overall_dc == y.overall_dc && x.overall_assd == y.overall_assd;
}

cts_status cts_report_overall_dc(const cts_report* report, double* mean) {
  return guarded([&] {
    require(report, "report");
    require(mean, "output pointer");
    *mean = report->value.overall_dc.mean;
  });
}

cts_status cts_compare(const cts_report* a, const cts_report* b, int json, char** text) {
  return guarded([&] {
    require(a, "first report");
    require(b, "second report");
    const auto rows = cts::compare_reports(a->value, b->value);
    put(text, json ? cts::capi::compare_json(rows) : cts::capi::compare_text(rows));
  });
}

cts_status cts_gradcheck(const char* names, uint64_t seed, double tolerance, int json, char** text, int* passed) {
  return guarded([&] {
    if (!(tolerance > 0)) throw cts::UsageError("tolerance must be positive");
    const auto cases = cts::run_gradcheck_suite(split_names(names), seed, tolerance);
    bool ok = true;
    for (const auto& c : cases) ok = ok && c.report.passed;
    if (passed != nullptr) *passed = ok ? 1 : 0;
    if (text != nullptr) *text = dup(json ? cts::capi::gradcheck_json(cases) : cts::capi::gradcheck_text(cases));
  });
}

}  // extern "C"

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "cts/cts.h"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  cts_string_free(s);
  return out;
}

struct Config {
  cts_config* p = nullptr;
  Config() { REQUIRE(cts_config_new(&p) == CTS_OK); }
  ~Config() { cts_config_free(p); }
  void set(const char* k, const char* v) { REQUIRE(cts_config_set(p, k, v) == CTS_OK); }
};

}  // namespace

TEST_CASE("status codes and the last error") {
  cts_config* cfg = nullptr;
  CHECK(cts_config_new(nullptr) == CTS_ERR_USAGE);
  CHECK(std::string(cts_last_error()).find("null") != std::string::npos);
  REQUIRE(cts_config_new(&cfg) == CTS_OK);
  CHECK(std::string(cts_last_error()).empty());
  CHECK(cts_config_set(cfg, "model.nope", "1") == CTS_ERR_CONFIG);
  CHECK(std::string(cts_last_error()).find("model.nope") != std::string::npos);
  CHECK(cts_config_set(cfg, "model.levels", "two") == CTS_ERR_CONFIG);
  CHECK(cts_config_set(cfg, "model.width", "100") == CTS_OK);
  CHECK(cts_config_validate(cfg) == CTS_ERR_CONFIG);
  CHECK(std::string(cts_last_error()).find("divisible") != std::string::npos);
  CHECK(cts_set_num_threads(0) == CTS_ERR_USAGE);
  CHECK(std::string(cts_status_name(CTS_ERR_DATA)) == "data error");
  cts_model* m = nullptr;
  CHECK(cts_model_load("/nonexistent/best.ckpt", &m) != CTS_OK);
  CHECK(m == nullptr);
  cts_config_free(cfg);
  cts_config_free(nullptr);
}

TEST_CASE("config text and JSON round trips") {
  Config a;
  a.set("model.width", "256");
  a.set("model.height", "256");
  a.set("model.downsample", "4");
  a.set("train.lr", "0.00031");
  a.set("loss.mask_mode", "dice_and_ce");
  char* text = nullptr;
  REQUIRE(cts_config_render(a.p, &text) == CTS_OK);
  Config b;
  REQUIRE(cts_config_parse(b.p, text) == CTS_OK);
  cts_string_free(text);
  CHECK(cts_config_equal(a.p, b.p));

  char* json = nullptr;
  REQUIRE(cts_analyze(a.p, 1, &json) == CTS_OK);
  const auto doc = take(json);
  Config c;
  REQUIRE(cts_config_parse_json(c.p, doc.c_str()) == CTS_OK);
  CHECK(cts_config_equal(a.p, c.p));
  char* again = nullptr;
  REQUIRE(cts_analyze(c.p, 1, &again) == CTS_OK);
  CHECK(take(again) == doc);
  CHECK(cts_config_parse_json(c.p, "{\"nope\": 1}") == CTS_ERR_DATA);
  CHECK(cts_config_parse_json(c.p, "not json") == CTS_ERR_DATA);

  char* v = nullptr;
  REQUIRE(cts_config_get(a.p, "model.width", &v) == CTS_OK);
  CHECK(take(v) == "256");
}

TEST_CASE("analyze reports the level table and the parameter total") {
  Config fig;
  fig.set("model.width", "256");
  fig.set("model.height", "256");
  fig.set("model.downsample", "4");
  char* text = nullptr;
  REQUIRE(cts_analyze(fig.p, 0, &text) == CTS_OK);
  const auto table = take(text);
  CHECK(table.find("level 2: 64×64×256 → 1024×256") != std::string::npos);
  CHECK(table.find("level 3: 32×32×512 → 1024×512") != std::string::npos);

  Config opt;
  std::uint64_t total = 0;
  REQUIRE(cts_param_count(opt.p, &total) == CTS_OK);
  CHECK(total == 21480074u);
  REQUIRE(cts_analyze(opt.p, 0, &text) == CTS_OK);
  CHECK(take(text).find("21,480,074 (21.48M)") != std::string::npos);
}

TEST_CASE("synth, train, evaluate and compare through handles") {
  const auto root = fs::temp_directory_path() / ("cts_capi_" + std::to_string(::getpid()));
  fs::remove_all(root);
  char* manifest = nullptr;
  REQUIRE(cts_synth(20, 16, 2, 7, (root / "data").c_str(), &manifest) == CTS_OK);
  const auto manifest_path = take(manifest);
  CHECK(fs::exists(manifest_path));

  Config cfg;
  cfg.set("model.width", "16");
  cfg.set("model.height", "16");
  cfg.set("model.in_channels", "1");
  cfg.set("model.base_channels", "8");
  cfg.set("model.downsample", "2");
  cfg.set("model.blocks", "1");
  cfg.set("train.epochs", "2");
  cfg.set("train.batch", "4");
  cfg.set("data", manifest_path.c_str());
  cfg.set("out", (root / "run").c_str());

  int calls = 0;
  char* best = nullptr;
  double best_loss = 0;
  auto cb = [](const cts_epoch* e, void* user) {
    ++*static_cast<int*>(user);
    CHECK(e->epoch >= 1);
  };
  REQUIRE(cts_train(cfg.p, cb, &calls, &best, &best_loss) == CTS_OK);
  CHECK(calls == 2);
  const auto ckpt = take(best);
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(root / "run" / "train_log.csv"));

  cts_model* model = nullptr;
  REQUIRE(cts_model_load(ckpt.c_str(), &model) == CTS_OK);
  cts_config* echo = nullptr;
  REQUIRE(cts_model_config(model, &echo) == CTS_OK);
  char* w = nullptr;
  REQUIRE(cts_config_get(echo, "model.base_channels", &w) == CTS_OK);
  CHECK(take(w) == "8");
  cts_config_free(echo);

  cts_report* val = nullptr;
  double loss = 0;
  REQUIRE(cts_evaluate(model, manifest_path.c_str(), "val", 0, &val, &loss) == CTS_OK);
  CHECK(std::abs(loss - best_loss) <= 1e-6);
  cts_report* test = nullptr;
  REQUIRE(cts_evaluate(model, manifest_path.c_str(), "test", 0, &test, nullptr) == CTS_OK);
  CHECK(cts_evaluate(model, manifest_path.c_str(), "bogus", 0, &test, nullptr) != CTS_OK);

  char* csv = nullptr;
  REQUIRE(cts_report_csv(test, &csv) == CTS_OK);
  cts_report* parsed = nullptr;
  REQUIRE(cts_report_from_csv(csv, &parsed) == CTS_OK);
  cts_string_free(csv);
  CHECK(cts_report_equal(test, parsed));
  const auto saved = (root / "test.csv").string();
  REQUIRE(cts_report_save(test, saved.c_str()) == CTS_OK);
  cts_report* loaded = nullptr;
  REQUIRE(cts_report_load(saved.c_str(), &loaded) == CTS_OK);
  CHECK(cts_report_equal(test, loaded));

  char* summary = nullptr;
  REQUIRE(cts_report_summary(test, 0, &summary) == CTS_OK);
  CHECK(take(summary).find("overall") != std::string::npos);

  // 4 test images give too few pairs for the signed-rank test
  char* cmp = nullptr;
  REQUIRE(cts_compare(test, loaded, 0, &cmp) == CTS_OK);
  CHECK(take(cmp).find("class 1") != std::string::npos);

  cts_report_free(val);
  cts_report_free(test);
  cts_report_free(parsed);
  cts_report_free(loaded);
  cts_model_free(model);
  fs::remove_all(root);
}

TEST_CASE("gradcheck entry point") {
  int passed = 0;
  char* text = nullptr;
  REQUIRE(cts_gradcheck("linear,softmax", 1, 1e-4, 0, &text, &passed) == CTS_OK);
  CHECK(passed == 1);
  const auto out = take(text);
  CHECK(out.find("linear") != std::string::npos);
  CHECK(out.find("softmax") != std::string::npos);
  CHECK(cts_gradcheck("nope", 1, 1e-4, 0, &text, &passed) == CTS_ERR_USAGE);
}

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "pyrovis/pyrovis.h"

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pyrovis-capi-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(pv_status_name(PV_OK)) == "ok");
  CHECK(std::string(pv_status_name(PV_ERR_MISMATCH)) == "mismatch");
  CHECK(std::strlen(pv_version()) > 0);
}

TEST_CASE("configuration handles") {
  pv_config* c = nullptr;
  REQUIRE(pv_config_new(&c) == PV_OK);
  CHECK(pv_config_set(c, "codebook.k", "30") == PV_OK);
  CHECK(std::string(pv_last_error()).empty());
  CHECK(pv_config_set(c, "colour", "red") == PV_ERR_CONFIG);
  CHECK(std::string(pv_last_error()).find("colour") != std::string::npos);
  CHECK(pv_config_set(c, "stability.t1", "0.9") == PV_OK);
  CHECK(pv_config_validate(c) == PV_ERR_CONFIG);
  CHECK(pv_config_set(c, "stability.t1", "0.15") == PV_OK);
  CHECK(pv_config_validate(c) == PV_OK);

  size_t needed = 0;
  CHECK(pv_config_format(c, nullptr, 0, &needed) == PV_OK);
  std::vector<char> full(needed);
  CHECK(pv_config_format(c, full.data(), full.size(), nullptr) == PV_OK);
  CHECK(std::string(full.data()).find("codebook.k = 30\n") != std::string::npos);
  char small[8];
  CHECK(pv_config_format(c, small, sizeof small, nullptr) == PV_OK);
  CHECK(std::strlen(small) == 7);

  CHECK(pv_config_set(nullptr, "a", "b") == PV_ERR_INVALID_ARGUMENT);
  CHECK(pv_config_load("/nonexistent/pyrovis.cfg", &c) == PV_ERR_CONFIG);
  CHECK(c == nullptr);
}

TEST_CASE("train and detect through the C interface") {
  const fs::path dir = fresh_dir("flow");
  const std::string fire = (dir / "fire").string(), nonfire = (dir / "nonfire").string();
  REQUIRE(pv_synth_patches(fire.c_str(), nonfire.c_str(), 15, 15, 3) == PV_OK);

  pv_config* c = nullptr;
  REQUIRE(pv_config_new(&c) == PV_OK);
  REQUIRE(pv_config_set(c, "codebook.k", "30") == PV_OK);
  REQUIRE(pv_config_set(c, "kmeans.iterations", "10") == PV_OK);

  const std::string cb = (dir / "cb.pvcb").string(), model = (dir / "m.pvsm").string();
  const char* dirs[] = {fire.c_str(), nonfire.c_str()};
  pv_codebook_summary cs{};
  REQUIRE(pv_train_codebook(c, dirs, 2, cb.c_str(), nullptr, &cs) == PV_OK);
  CHECK(cs.patches == 30);
  CHECK(cs.k == 30);
  CHECK(cs.sigma > 0.0);

  pv_model_summary ms{};
  REQUIRE(pv_train_model(c, fire.c_str(), nonfire.c_str(), cb.c_str(), model.c_str(), nullptr, &ms) == PV_OK);
  CHECK(ms.train_fire == 12);
  CHECK(ms.test_nonfire == 3);
  CHECK(ms.held_out_accuracy >= 0.0);
  CHECK(ms.held_out_accuracy <= 1.0);
  CHECK(std::isnan(ms.cv_accuracy));

  pv_detector* d = nullptr;
  CHECK(pv_detector_new(c, &d) == PV_ERR_CONFIG);
  REQUIRE(pv_config_set(c, "codebook", cb.c_str()) == PV_OK);
  REQUIRE(pv_config_set(c, "model", model.c_str()) == PV_OK);
  REQUIRE(pv_detector_new(c, &d) == PV_OK);
  std::vector<uint8_t> black(64 * 48 * 3, 0);
  pv_alarm alarms[4];
  for (int i = 0; i < 30; ++i) {
    size_t count = 99;
    REQUIRE(pv_detector_process_rgb8(d, black.data(), 64, 48, i, alarms, 4, &count) == PV_OK);
    CHECK(count == 0);
  }
  size_t count = 0;
  CHECK(pv_detector_process_rgb8(d, black.data(), 0, 48, 30, alarms, 4, &count) == PV_ERR_INVALID_ARGUMENT);
  pv_timings t{};
  CHECK(pv_detector_timings(d, &t) == PV_OK);
  CHECK(t.frames == 30);
  CHECK(t.classifier_calls == 0);
  pv_detector_free(d);

  const std::string scene = (dir / "scene").string();
  REQUIRE(pv_synth_scene(scene.c_str(), 30, 1) == PV_OK);
  const std::string log = (dir / "alarms.txt").string();
  CHECK(pv_detect_dir(c, scene.c_str(), "s", log.c_str(), nullptr, nullptr, &t) == PV_OK);
  CHECK(t.frames == 30);
  CHECK(fs::exists(log));

  pv_config_set(c, "model", (dir / "absent.pvsm").c_str());
  CHECK(pv_detector_new(c, &d) == PV_ERR_CONFIG);
  pv_config_free(c);
}

TEST_CASE("evaluation entry points") {
  pv_eval_summary s{};
  REQUIRE(pv_evaluate_counts(361, 305, 27, 81, nullptr, &s) == PV_OK);
  CHECK(std::abs(100.0 * s.precision - 93.04) <= 0.01);
  CHECK(std::abs(100.0 * s.recall - 81.67) <= 0.01);
  REQUIRE(pv_evaluate_counts(0, 10, 0, 0, nullptr, &s) == PV_OK);
  CHECK(std::isnan(s.precision));
  CHECK(std::isnan(s.recall));
  CHECK(pv_evaluate_counts(-1, 0, 0, 0, nullptr, &s) == PV_ERR_INVALID_ARGUMENT);

  const fs::path dir = fresh_dir("eval");
  const std::string labels = (dir / "labels.txt").string(), log = (dir / "alarms.txt").string();
  FILE* f = std::fopen(labels.c_str(), "w");
  std::fputs("v 0 200 fire\nv 200 400 nofire\n", f);
  std::fclose(f);
  f = std::fopen(log.c_str(), "w");
  std::fputs("v 150 1 0 0 4 4 0.5\n", f);
  std::fclose(f);
  REQUIRE(pv_evaluate_log(log.c_str(), labels.c_str(), nullptr, &s) == PV_OK);
  CHECK(s.tp == 1);
  CHECK(s.tn == 1);
  f = std::fopen(log.c_str(), "w");
  std::fputs("v 400 1 0 0 4 4 0.5\n", f);
  std::fclose(f);
  CHECK(pv_evaluate_log(log.c_str(), labels.c_str(), nullptr, &s) == PV_ERR_MISMATCH);
  CHECK(pv_evaluate_log((dir / "none.txt").c_str(), labels.c_str(), nullptr, &s) == PV_ERR_IO);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "cisskip.h"

namespace {

const csk_mgn_config kTinyConfig = {32, 32, 1, 16, 16, 2, 32};

}  // namespace

TEST_CASE("version and error strings are always available") {
  CHECK(std::string(csk_version()).find("cisskip") != std::string::npos);
  CHECK(csk_last_error() != nullptr);
}

TEST_CASE("mgn handle lifecycle: create, score, save, load") {
  namespace fs = std::filesystem;
  csk_mgn* mgn = nullptr;
  REQUIRE(csk_mgn_create(&kTinyConfig, 7, &mgn) == CSK_OK);
  REQUIRE(mgn != nullptr);

  csk_mgn_config got;
  CHECK(csk_mgn_get_config(mgn, &got) == CSK_OK);
  CHECK(got.embed_dim == 16);
  CHECK(csk_mgn_param_count(mgn) > 0);
  CHECK(csk_mgn_flop_estimate(mgn) > 0);

  std::vector<double> image(32 * 32);
  std::mt19937_64 rng(9);
  for (double& v : image) v = (rng() >> 11) * 0x1.0p-53;
  std::vector<double> scores(4, -1.0);
  REQUIRE(csk_mgn_score(mgn, image.data(), image.size(), scores.data(), scores.size()) == CSK_OK);
  for (double s : scores) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }

  const fs::path path = fs::temp_directory_path() / "cisskip_capi_weights.csk";
  REQUIRE(csk_mgn_save(mgn, path.string().c_str()) == CSK_OK);
  csk_mgn* loaded = nullptr;
  REQUIRE(csk_mgn_load(path.string().c_str(), &loaded) == CSK_OK);
  std::vector<double> scores2(4, -1.0);
  REQUIRE(csk_mgn_score(loaded, image.data(), image.size(), scores2.data(), scores2.size()) ==
          CSK_OK);
  CHECK(scores == scores2);

  // wrong buffer sizes are usage errors with a message
  CHECK(csk_mgn_score(mgn, image.data(), 10, scores.data(), scores.size()) == CSK_ERR_USAGE);
  CHECK(std::string(csk_last_error()).find("image length") != std::string::npos);

  csk_mgn_free(loaded);
  csk_mgn_free(mgn);
  fs::remove(path);
}

TEST_CASE("load of a nonexistent weight file is a usage error") {
  csk_mgn* mgn = nullptr;
  CHECK(csk_mgn_load("/nonexistent/weights.csk", &mgn) == CSK_ERR_USAGE);
  CHECK(mgn == nullptr);
}

TEST_CASE("masking helpers operate on raw arrays") {
  const double scores[4] = {0.2, 0.8, 0.6, 0.4};
  uint8_t bits[4];
  REQUIRE(csk_region_mask(scores, 2, 2, 0.5, bits) == CSK_OK);
  CHECK(bits[0] == 0);
  CHECK(bits[1] == 1);
  CHECK(bits[2] == 1);
  CHECK(bits[3] == 0);

  uint8_t rows[2];
  REQUIRE(csk_row_activity(bits, 2, 2, 0.4, rows) == CSK_OK);
  CHECK(rows[0] == 1);  // 0.5 > 0.4
  CHECK(rows[1] == 1);

  uint8_t mapped[16];
  REQUIRE(csk_map_to_sensor(bits, 2, 2, 64, 64, 16, mapped) == CSK_OK);
  CHECK(mapped[0] == 0);
  CHECK(mapped[1] == 0);
  CHECK(mapped[2] == 1);
  CHECK(mapped[3] == 1);

  const uint8_t pred[4] = {1, 1, 0, 0};
  const uint8_t gt[4] = {1, 0, 1, 0};
  double m = 0.0;
  REQUIRE(csk_miou(pred, gt, 4, &m) == CSK_OK);
  CHECK(m == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("sensor read through the C surface") {
  csk_sensor_config cfg = {64, 64, 10, 16, CSK_MODE_REGION_SKIP};
  std::vector<double> frame(64 * 64, 0.5);
  std::vector<uint16_t> codes(64 * 64, 1);
  std::vector<uint8_t> region(16, 0);
  region[0] = 1;  // only region (0,0)

  csk_ledger ledger;
  REQUIRE(csk_sensor_read(&cfg, frame.data(), nullptr, region.data(), codes.data(), &ledger) ==
          CSK_OK);
  CHECK(ledger.n_px_read == 256);
  CHECK(ledger.n_rows_fully_gated == 48);
  CHECK(codes[0] == 512);
  CHECK(codes[63] == 0);

  // out-of-range pixel values are numeric-domain usage errors
  frame[0] = 1.5;
  csk_sensor_config std_cfg = {64, 64, 10, 16, CSK_MODE_STANDARD};
  CHECK(csk_sensor_read(&std_cfg, frame.data(), nullptr, nullptr, codes.data(), nullptr) ==
        CSK_ERR_USAGE);
}

TEST_CASE("energy helpers mirror the closed forms") {
  csk_energy_params params;
  csk_energy_params_default(&params);
  CHECK(params.e_sense_r + params.e_adc_r == doctest::Approx(1.0));

  double e = 0.0;
  REQUIRE(csk_average_energy(100.0, 1.0, 40.0, 4, 2.0, &e) == CSK_OK);
  CHECK(e == doctest::Approx(57.25));

  csk_energy_params zero = params;
  zero.e_mem_frac = zero.e_com_frac = zero.e_mgn_frac = 0.0;
  zero.e_sense_s_row = zero.e_adc_s_row = 0.086;
  double norm = 0.0;
  REQUIRE(csk_normalized_energy(0.58, CSK_MODE_ROW_SKIP, 24, &zero, &norm) == CSK_OK);
  CHECK(norm == doctest::Approx(0.53977).epsilon(1e-4));

  csk_ledger led = {};
  led.n_rows_driven = 5;
  led.n_rows_fully_gated = 5;
  led.n_px_read = 42;
  led.n_px_skip_in_gated_row = 58;
  double mode_e = 0.0;
  REQUIRE(csk_mode_energy(&led, &zero, CSK_MODE_ROW_SKIP, &mode_e) == CSK_OK);
  CHECK(mode_e == doctest::Approx(42.0 + 58 * 0.172).epsilon(1e-9));

  CHECK(csk_average_energy(1.0, 0.0, 1.0, 0, 0.0, &e) == CSK_ERR_USAGE);
}

TEST_CASE("csk_run drives the pipeline and reports JSON summaries") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "cisskip_capi_run";
  fs::remove_all(dir);

  nlohmann::json cfg = {
      {"seed", 3},
      {"out_dir", dir.string()},
      {"scene", {{"rows", 32}, {"cols", 32}, {"objects", 1}, {"min_size", 6}, {"max_size", 10},
                 {"frames", 6}}},
      {"mgn", {{"input_h", 32}, {"input_w", 32}, {"channels", 1}, {"patch", 16},
               {"embed_dim", 16}, {"heads", 2}, {"ffn_dim", 32}}},
      {"train", {{"epochs", 1}, {"batch", 2}}},
      {"sensor", {{"rows", 32}, {"cols", 32}, {"bit_depth", 10}, {"patch", 16},
                  {"mode", "region"}}},
  };
  const std::string cfg_text = cfg.dump();

  char* summary = nullptr;
  REQUIRE(csk_run("gen", cfg_text.c_str(), &summary) == CSK_OK);
  nlohmann::json parsed = nlohmann::json::parse(summary);
  CHECK(parsed.at("command") == "gen");
  CHECK(parsed.at("status") == "ok");
  csk_string_free(summary);

  // malformed config JSON is a format error
  CHECK(csk_run("gen", "{not json", &summary) == CSK_ERR_FORMAT);
  // unknown verbs are usage errors
  CHECK(csk_run("bogus", cfg_text.c_str(), &summary) == CSK_ERR_USAGE);

  fs::remove_all(dir);
}

// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0
// Exercises the shared library through its C interface only.

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "s2tp/s2tp.h"

namespace {

namespace fs = std::filesystem;

const char* kTinyConfig =
    "d_model = 16\nheads = 2\nffn_hidden = 32\nself_layers = 1\ndecoder_layers = 1\n"
    "n_latents = 8\nk_train = 4\nconv_channels = 16\ntrain_size = 8\nvalid_size = 4\n"
    "batch_size = 4\nmax_epochs = 2\nwarmup_steps = 4\nt_min = 3\nt_max = 5\nkeep_best = 2\n";

struct Handles {
  s2tp_config* config = nullptr;
  s2tp_model* model = nullptr;
  ~Handles() {
    s2tp_model_free(model);
    s2tp_config_free(config);
  }
};

std::string text_of(const s2tp_config* c) {
  std::size_t needed = 0;
  EXPECT_EQ(s2tp_config_text(c, nullptr, 0, &needed), S2TP_OK);
  std::string s(needed, '\0');
  EXPECT_EQ(s2tp_config_text(c, s.data(), s.size(), &needed), S2TP_OK);
  s.resize(needed - 1);
  return s;
}

TEST(CApi, StatusNamesAreDistinct) {
  std::vector<std::string> names;
  for (int s = S2TP_OK; s <= S2TP_ERR_INTERNAL; ++s) {
    names.emplace_back(s2tp_status_name(static_cast<s2tp_status>(s)));
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) EXPECT_NE(names[i], names[j]);
  }
  EXPECT_NE(std::strlen(s2tp_version()), 0u);
}

TEST(CApi, ConfigErrorsMapToDistinctStatuses) {
  Handles h;
  EXPECT_EQ(s2tp_config_parse("bogus_key = 1\n", &h.config), S2TP_ERR_CONFIG);
  EXPECT_NE(std::string(s2tp_last_error()).find("bogus_key"), std::string::npos);
  ASSERT_EQ(s2tp_config_parse(kTinyConfig, &h.config), S2TP_OK);
  EXPECT_EQ(s2tp_config_set(h.config, "nope", "1"), S2TP_ERR_CONFIG);
  ASSERT_EQ(s2tp_config_set(h.config, "k_prime", "9"), S2TP_OK);
  EXPECT_EQ(s2tp_config_validate(h.config), S2TP_ERR_K_PRIME);
  ASSERT_EQ(s2tp_config_set(h.config, "k_prime", "8"), S2TP_OK);
  EXPECT_EQ(s2tp_config_validate(h.config), S2TP_OK);
  char value[32];
  std::size_t needed = 0;
  ASSERT_EQ(s2tp_config_get(h.config, "n_latents", value, sizeof value, &needed), S2TP_OK);
  EXPECT_STREQ(value, "8");
  EXPECT_EQ(s2tp_config_load("/nonexistent/x.cfg", &h.config), S2TP_ERR_IO);
}

TEST(CApi, ConfigTextRoundTrip) {
  Handles a, b;
  ASSERT_EQ(s2tp_config_parse(kTinyConfig, &a.config), S2TP_OK);
  const std::string text = text_of(a.config);
  ASSERT_EQ(s2tp_config_parse(text.c_str(), &b.config), S2TP_OK);
  EXPECT_EQ(text_of(b.config), text);
}

TEST(CApi, NullArgumentsAreRejected) {
  EXPECT_EQ(s2tp_config_parse(nullptr, nullptr), S2TP_ERR_ARGUMENT);
  EXPECT_EQ(s2tp_model_save(nullptr, "x"), S2TP_ERR_ARGUMENT);
  s2tp_config_free(nullptr);
  s2tp_model_free(nullptr);
}

class CApiModel : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("s2tp_capi_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
    ASSERT_EQ(s2tp_config_parse(kTinyConfig, &h_.config), S2TP_OK);
    ASSERT_EQ(s2tp_model_create(h_.config, &h_.model), S2TP_OK);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  Handles h_;
};

TEST_F(CApiModel, SaveLoadRoundTripIsBitIdentical) {
  ASSERT_EQ(s2tp_model_save(h_.model, path("a.ckpt").c_str()), S2TP_OK);
  s2tp_model* back = nullptr;
  ASSERT_EQ(s2tp_model_load(path("a.ckpt").c_str(), &back), S2TP_OK);
  ASSERT_EQ(s2tp_model_save(back, path("b.ckpt").c_str()), S2TP_OK);
  s2tp_model_free(back);
  EXPECT_EQ(fs::file_size(path("a.ckpt")), fs::file_size(path("b.ckpt")));
  std::ifstream a(path("a.ckpt"), std::ios::binary), b(path("b.ckpt"), std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b)));
}

TEST_F(CApiModel, IncompatibleCheckpointStatus) {
  {
    std::ofstream out(path("junk.ckpt"), std::ios::binary);
    out << "NOPE1234";
  }
  s2tp_model* m = nullptr;
  EXPECT_EQ(s2tp_model_load(path("junk.ckpt").c_str(), &m), S2TP_ERR_CHECKPOINT);
  EXPECT_EQ(m, nullptr);
  EXPECT_EQ(s2tp_model_load(path("missing.ckpt").c_str(), &m), S2TP_ERR_IO);
}

TEST_F(CApiModel, EvaluateModesAndKPrime) {
  s2tp_eval_options o = s2tp_eval_options_default();
  o.beam = 0;
  s2tp_eval_metrics full{}, diverse{};
  ASSERT_EQ(s2tp_evaluate(h_.model, nullptr, &o, &full), S2TP_OK);
  EXPECT_EQ(full.examples, 4u);
  o.mode = S2TP_DLA_DIVERSE;
  o.k_prime = 2;
  ASSERT_EQ(s2tp_evaluate(h_.model, nullptr, &o, &diverse), S2TP_OK);
  EXPECT_LT(diverse.flops, full.flops);
  o.k_prime = 9;
  EXPECT_EQ(s2tp_evaluate(h_.model, nullptr, &o, &diverse), S2TP_ERR_K_PRIME);
}

TEST_F(CApiModel, AverageOfOneFileIsThatFile) {
  ASSERT_EQ(s2tp_model_save(h_.model, path("a.ckpt").c_str()), S2TP_OK);
  const std::string a = path("a.ckpt");
  const char* inputs[] = {a.c_str()};
  ASSERT_EQ(s2tp_average_checkpoints(inputs, 1, path("avg.ckpt").c_str()), S2TP_OK);
  std::ifstream x(a, std::ios::binary), y(path("avg.ckpt"), std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(x), {}, std::istreambuf_iterator<char>(y)));
}

TEST_F(CApiModel, RecordAndSelectLatents) {
  ASSERT_EQ(s2tp_record_attention(h_.model, nullptr, 0, path("rec.s2tp").c_str()), S2TP_OK);
  std::vector<std::size_t> ids(8);
  ASSERT_EQ(s2tp_select_latents(path("rec.s2tp").c_str(), S2TP_DLA_DIVERSE, 8, 1, ids.data()),
            S2TP_OK);
  std::vector<std::size_t> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(sorted[i], i);
  std::vector<std::size_t> prefix(3);
  ASSERT_EQ(s2tp_select_latents(path("rec.s2tp").c_str(), S2TP_DLA_DIVERSE, 3, 1, prefix.data()),
            S2TP_OK);
  EXPECT_TRUE(std::equal(prefix.begin(), prefix.end(), ids.begin()));
  EXPECT_EQ(s2tp_select_latents(path("rec.s2tp").c_str(), S2TP_DLA_DIVERSE, 9, 1, ids.data()),
            S2TP_ERR_K_PRIME);
}

TEST_F(CApiModel, TrainWritesArtifactsAndIsDeterministic) {
  std::vector<s2tp_epoch_metrics> log_a, log_b;
  auto collect = [](const s2tp_epoch_metrics* m, void* user) {
    static_cast<std::vector<s2tp_epoch_metrics>*>(user)->push_back(*m);
  };
  ASSERT_EQ(s2tp_train(h_.config, path("run").c_str(), collect, &log_a, nullptr), S2TP_OK);
  ASSERT_EQ(s2tp_train(h_.config, nullptr, collect, &log_b, nullptr), S2TP_OK);
  ASSERT_EQ(log_a.size(), 2u);
  ASSERT_EQ(log_b.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(log_a[i].train_loss, log_b[i].train_loss);
    EXPECT_EQ(log_a[i].valid_token_accuracy, log_b[i].valid_token_accuracy);
  }
  for (const char* f : {"metrics.tsv", "last.ckpt", "averaged.ckpt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  std::ifstream metrics(dir_ / "run" / "metrics.tsv");
  std::string header;
  std::getline(metrics, header);
  EXPECT_EQ(header, "epoch\tstep\tlr\ttrain_loss\tvalid_token_acc\tvalid_exact_match");
}

TEST(CApiFlops, SelfRatioIsOne) {
  Handles h;
  ASSERT_EQ(s2tp_config_parse(kTinyConfig, &h.config), S2TP_OK);
  double ratio = 0.0;
  std::size_t needed = 0;
  ASSERT_EQ(s2tp_flops_report(h.config, h.config, nullptr, 100, 1, &ratio, nullptr, 0, &needed),
            S2TP_OK);
  EXPECT_EQ(ratio, 1.0);
  EXPECT_GT(needed, 1u);
}

}  // namespace

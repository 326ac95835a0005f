// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <filesystem>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "s2tp/checkpoint.hpp"
#include "s2tp/config.hpp"
#include "s2tp/errors.hpp"
#include "test_util.hpp"

namespace s2tp {
namespace {

std::string bytes_of(const Checkpoint& c) {
  std::ostringstream out;
  write_checkpoint(out, c);
  return out.str();
}

Checkpoint read_bytes(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_checkpoint(in);
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.config_text = "d_model = 8\nseed = 3\n";
  std::mt19937_64 rng(1);
  c.tensors.push_back({"a.weight", testing::random_matrix<float>(3, 5, rng)});
  Tensor<float> odd({1, 4});
  odd[0] = std::numeric_limits<float>::denorm_min();
  odd[1] = -0.0f;
  odd[2] = std::numeric_limits<float>::infinity();
  odd[3] = std::numeric_limits<float>::quiet_NaN();
  c.tensors.push_back({"odd", odd});
  c.tensors.push_back({"vec", Tensor<float>(Shape{7})});
  return c;
}

TEST(Checkpoint, HeaderLayout) {
  const std::string bytes = bytes_of(sample_checkpoint());
  EXPECT_EQ(bytes.substr(0, 4), "S2TP");
  const unsigned char* v = reinterpret_cast<const unsigned char*>(bytes.data() + 4);
  EXPECT_EQ(v[0] | v[1] << 8 | v[2] << 16 | v[3] << 24, static_cast<int>(kCheckpointVersion));
  const unsigned char* n = v + 4;
  EXPECT_EQ(n[0], 21u);  // config length, little-endian
  EXPECT_EQ(n[1] | n[2] | n[3], 0);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const Checkpoint c = sample_checkpoint();
  const std::string bytes = bytes_of(c);
  const Checkpoint back = read_bytes(bytes);
  EXPECT_EQ(back.config_text, c.config_text);
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, c.tensors[i].name);
    EXPECT_EQ(back.tensors[i].value.shape(), c.tensors[i].value.shape());
    EXPECT_EQ(std::memcmp(back.tensors[i].value.data(), c.tensors[i].value.data(),
                          c.tensors[i].value.size() * sizeof(float)),
              0);
  }
  EXPECT_EQ(bytes_of(back), bytes);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "s2tp_format_test.ckpt";
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(path.string(), c);
  EXPECT_EQ(bytes_of(load_checkpoint(path.string())), bytes_of(c));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), IoError);
}

TEST(Checkpoint, BadMagicVersionAndTruncationRejected) {
  std::string bytes = bytes_of(sample_checkpoint());
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(read_bytes(bad), IncompatibleCheckpointError);
  bad = bytes;
  bad[4] = static_cast<char>(kCheckpointVersion + 1);
  EXPECT_THROW(read_bytes(bad), IncompatibleCheckpointError);
  for (std::size_t cut : {std::size_t{2}, std::size_t{6}, std::size_t{30}, bytes.size() - 1}) {
    EXPECT_THROW(read_bytes(bytes.substr(0, cut)), IncompatibleCheckpointError) << cut;
  }
}

TEST(Checkpoint, ModelRestoreRoundTrip) {
  ModelConfig mc;
  mc.d = 16;
  mc.heads = 2;
  mc.ffn_hidden = 32;
  mc.n_latents = 8;
  mc.conv_channels = 16;
  const Model<float> a(mc, 1);
  Model<float> b(mc, 2);
  const Checkpoint ca = make_checkpoint(a, "x = 1\n");
  EXPECT_NE(make_checkpoint(b, "x = 1\n"), ca);
  restore_parameters(read_bytes(bytes_of(ca)), b);
  EXPECT_EQ(make_checkpoint(b, "x = 1\n"), ca);

  ModelConfig other = mc;
  other.n_latents = 9;
  Model<float> c(other, 1);
  EXPECT_THROW(restore_parameters(ca, c), IncompatibleCheckpointError);
}

TEST(AttentionRecord, RoundTrip) {
  dla::AttentionRecord<float> r;
  std::mt19937_64 rng(2);
  r.z = testing::random_matrix<float>(4, 3, rng);
  r.attention = testing::random_matrix<float>(4, 5, rng);
  r.frame_mask = {1, 1, 0, 1, 0};
  const Checkpoint c = make_attention_record(r);
  ASSERT_NE(c.find("Z"), nullptr);
  ASSERT_NE(c.find("A"), nullptr);
  ASSERT_NE(c.find("frame_mask"), nullptr);
  const dla::AttentionRecord<float> back = read_attention_record(read_bytes(bytes_of(c)));
  EXPECT_EQ(back.z, r.z);
  EXPECT_EQ(back.attention, r.attention);
  EXPECT_EQ(back.frame_mask, r.frame_mask);
  Checkpoint broken = c;
  broken.tensors.pop_back();
  EXPECT_THROW(read_attention_record(broken), IncompatibleCheckpointError);
}

TEST(Config, DefaultsParseAndValidate) {
  std::istringstream empty("");
  const ExperimentConfig e = Config::parse(empty).experiment();
  EXPECT_EQ(e.model.d, 64u);
  EXPECT_EQ(e.model.n_latents, 64u);
  EXPECT_EQ(e.train.k_train, 16u);
  EXPECT_EQ(e.train.learning_rate, 0.002);
  EXPECT_EQ(e.train.warmup_steps, 500u);
  EXPECT_EQ(e.train.label_smoothing, 0.1);
  EXPECT_EQ(e.train.patience, 15u);
}

TEST(Config, CommentsAndWhitespace) {
  std::istringstream in("# header\n  d_model=32 # inline\n\nheads =\t2\n");
  const Config c = Config::parse(in);
  EXPECT_EQ(c.get("d_model"), "32");
  EXPECT_EQ(c.experiment().model.heads, 2u);
}

TEST(Config, TextRoundTrip) {
  std::istringstream in("d_model = 32\nheads = 2\nlearning_rate = 0.0013\ntask = reverse\n");
  const Config c = Config::parse(in);
  std::istringstream again(c.to_text());
  const Config d = Config::parse(again);
  EXPECT_EQ(d.to_text(), c.to_text());
  // Typed values survive a trip through the experiment view.
  const Config e = Config::from_experiment(c.experiment());
  EXPECT_EQ(e.get("learning_rate"), "0.0013");
  EXPECT_EQ(e.get("task"), "reverse");
  std::istringstream e_text(e.to_text());
  EXPECT_EQ(Config::from_experiment(Config::parse(e_text).experiment()).to_text(), e.to_text());
}

TEST(Config, InvalidInputNamesTheKey) {
  struct Case {
    const char* text;
    const char* key;
  };
  const Case cases[] = {
      {"d_modle = 3\n", "d_modle"},
      {"heads = 5\n", "heads"},
      {"d_model = -1\n", "d_model"},
      {"dropout = 1.5\n", "dropout"},
      {"learning_rate = fast\n", "learning_rate"},
      {"family = rnn\n", "family"},
      {"use_input_processor = maybe\n", "use_input_processor"},
      {"k_train = 65\n", "k_train"},
      {"conv_kernel = 4\n", "conv_kernel"},
      {"seed =\n", "seed"},
      {"vocab_symbols = 27\n", "vocab_symbols"},
      {"batch_size = 0\n", "batch_size"},
  };
  for (const Case& c : cases) {
    std::istringstream in(c.text);
    try {
      Config::parse(in).experiment();
      ADD_FAILURE() << "accepted " << c.text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(c.key), std::string::npos) << e.what();
    }
  }
  std::istringstream no_eq("d_model 3\n");
  EXPECT_THROW(Config::parse(no_eq), ConfigError);
}

TEST(Config, KPrimeAboveNIsDistinct) {
  std::istringstream in("k_prime = 65\n");
  EXPECT_THROW(Config::parse(in).experiment(), KPrimeError);
  std::istringstream empty("");
  Config c = Config::parse(empty);
  EXPECT_THROW(c.set("bogus", "1"), ConfigError);
}

}  // namespace
}  // namespace s2tp

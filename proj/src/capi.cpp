// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/s2tp.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "s2tp/checkpoint.hpp"
#include "s2tp/config.hpp"
#include "s2tp/dla.hpp"
#include "s2tp/errors.hpp"
#include "s2tp/flops.hpp"
#include "s2tp/gradcheck.hpp"
#include "s2tp/train.hpp"

struct s2tp_config {
  s2tp::Config config;
};

struct s2tp_model {
  s2tp::Config config;
  std::unique_ptr<s2tp::Model<float>> model;
};

namespace {

thread_local std::string g_last_error;

s2tp_status status_of(s2tp::ErrorKind kind) {
  using s2tp::ErrorKind;
  switch (kind) {
    case ErrorKind::kConfig: return S2TP_ERR_CONFIG;
    case ErrorKind::kIncompatibleCheckpoint: return S2TP_ERR_CHECKPOINT;
    case ErrorKind::kKPrime: return S2TP_ERR_K_PRIME;
    case ErrorKind::kIo: return S2TP_ERR_IO;
    case ErrorKind::kDivergence: return S2TP_ERR_DIVERGENCE;
    default: return S2TP_ERR_CONTRACT;
  }
}

template <typename F>
s2tp_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return S2TP_OK;
  } catch (const s2tp::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return S2TP_ERR_INTERNAL;
}

#define S2TP_REQUIRE(cond, msg)       \
  do {                                \
    if (!(cond)) {                    \
      g_last_error = (msg);           \
      return S2TP_ERR_ARGUMENT;       \
    }                                 \
  } while (0)

void copy_text(const std::string& text, char* buf, std::size_t cap,
               std::size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (buf && cap > 0) {
    const std::size_t n = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
}

s2tp::DlaMode mode_of(s2tp_dla_mode mode) {
  switch (mode) {
    case S2TP_DLA_FULL: return s2tp::DlaMode::kFull;
    case S2TP_DLA_DIVERSE: return s2tp::DlaMode::kDiverse;
    case S2TP_DLA_RANDOM: return s2tp::DlaMode::kRandom;
  }
  throw s2tp::ContractError("unknown dla mode " + std::to_string(mode));
}

s2tp::EvalOptions eval_options(const s2tp_eval_options* o) {
  s2tp::EvalOptions e;
  if (o == nullptr) return e;
  e.mode = mode_of(o->mode);
  e.k_prime = o->k_prime;
  e.beam = o->beam;
  e.seed = o->seed;
  return e;
}

std::unique_ptr<s2tp_model> model_from_checkpoint(const s2tp::Checkpoint& ck) {
  if (ck.config_text.empty()) {
    throw s2tp::IncompatibleCheckpointError(
        "checkpoint carries no configuration snapshot");
  }
  std::istringstream text(ck.config_text);
  s2tp::Config config;
  try {
    config = s2tp::Config::parse(text, "checkpoint config");
  } catch (const s2tp::ConfigError& e) {
    throw s2tp::IncompatibleCheckpointError(std::string("stored config: ") +
                                            e.what());
  }
  const s2tp::ExperimentConfig exp = config.experiment();
  auto handle = std::make_unique<s2tp_model>();
  handle->config = config;
  handle->model = std::make_unique<s2tp::Model<float>>(exp.model, exp.seed);
  s2tp::restore_parameters(ck, *handle->model);
  return handle;
}

// Held-out examples come from split 2 of the task, which neither training
// nor validation draws from.
constexpr std::uint64_t kTestSplit = 2;

std::vector<s2tp::Example> test_examples(const s2tp_model* model,
                                         const s2tp_config* task,
                                         std::size_t count) {
  const s2tp::ExperimentConfig exp =
      (task ? task->config : model->config).experiment();
  const s2tp::ModelConfig& mc = model->model->config();
  if (exp.task.feature_dim != mc.feature_dim ||
      exp.task.vocab_symbols != mc.vocab_symbols) {
    throw s2tp::ConfigError(
        "key 'feature_dim': task does not match the model's input/vocabulary");
  }
  return s2tp::generate_dataset(exp.task, count ? count : exp.train.valid_size,
                                kTestSplit);
}

std::string flops_text(const s2tp::flops::ModelSpec& spec,
                       const s2tp::flops::ModelSpec& baseline,
                       const char* lengths_path, std::size_t count,
                       std::uint64_t seed, double* ratio) {
  spec.validate();
  baseline.validate();
  const std::vector<s2tp::flops::LengthPair> corpus =
      lengths_path ? s2tp::flops::read_lengths(lengths_path)
                   : s2tp::flops::default_lengths(count ? count : 1000, seed);
  const s2tp::flops::CostReport a = s2tp::flops::corpus_cost(spec, corpus);
  const s2tp::flops::CostReport b = s2tp::flops::corpus_cost(baseline, corpus);
  if (ratio) *ratio = s2tp::flops::corpus_ratio(spec, baseline, corpus);
  std::ostringstream out;
  s2tp::flops::write_report(out, a, b);
  return out.str();
}

}  // namespace

extern "C" {

const char* s2tp_last_error(void) { return g_last_error.c_str(); }

const char* s2tp_status_name(s2tp_status status) {
  switch (status) {
    case S2TP_OK: return "ok";
    case S2TP_ERR_CONFIG: return "config";
    case S2TP_ERR_CHECKPOINT: return "checkpoint";
    case S2TP_ERR_K_PRIME: return "k_prime";
    case S2TP_ERR_IO: return "io";
    case S2TP_ERR_CONTRACT: return "contract";
    case S2TP_ERR_DIVERGENCE: return "divergence";
    case S2TP_ERR_ARGUMENT: return "argument";
    case S2TP_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* s2tp_version(void) { return "0.1.0"; }

s2tp_status s2tp_config_default(s2tp_config** out) {
  S2TP_REQUIRE(out, "out is NULL");
  return guarded([&] {
    auto c = std::make_unique<s2tp_config>();
    for (const auto& [k, v] : s2tp::Config::defaults()) c->config.set(k, v);
    *out = c.release();
  });
}

s2tp_status s2tp_config_load(const char* path, s2tp_config** out) {
  S2TP_REQUIRE(path && out, "path or out is NULL");
  return guarded([&] {
    auto c = std::make_unique<s2tp_config>();
    c->config = s2tp::Config::load(path);
    *out = c.release();
  });
}

s2tp_status s2tp_config_parse(const char* text, s2tp_config** out) {
  S2TP_REQUIRE(text && out, "text or out is NULL");
  return guarded([&] {
    std::istringstream in(text);
    auto c = std::make_unique<s2tp_config>();
    c->config = s2tp::Config::parse(in);
    *out = c.release();
  });
}

s2tp_status s2tp_config_set(s2tp_config* config, const char* key,
                            const char* value) {
  S2TP_REQUIRE(config && key && value, "config, key or value is NULL");
  return guarded([&] { config->config.set(key, value); });
}

s2tp_status s2tp_config_get(const s2tp_config* config, const char* key,
                            char* buf, size_t cap, size_t* needed) {
  S2TP_REQUIRE(config && key, "config or key is NULL");
  return guarded([&] { copy_text(config->config.get(key), buf, cap, needed); });
}

s2tp_status s2tp_config_validate(const s2tp_config* config) {
  S2TP_REQUIRE(config, "config is NULL");
  return guarded([&] { config->config.experiment(); });
}

s2tp_status s2tp_config_text(const s2tp_config* config, char* buf, size_t cap,
                             size_t* needed) {
  S2TP_REQUIRE(config, "config is NULL");
  return guarded([&] { copy_text(config->config.to_text(), buf, cap, needed); });
}

void s2tp_config_free(s2tp_config* config) { delete config; }

s2tp_status s2tp_train(const s2tp_config* config, const char* out_dir,
                       s2tp_epoch_callback callback, void* user,
                       s2tp_model** out_model) {
  S2TP_REQUIRE(config, "config is NULL");
  return guarded([&] {
    const s2tp::ExperimentConfig exp = config->config.experiment();
    const std::string text = config->config.to_text();
    std::ofstream log;
    namespace fs = std::filesystem;
    if (out_dir) {
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      if (ec) throw s2tp::IoError("cannot create " + std::string(out_dir));
      const fs::path p = fs::path(out_dir) / "metrics.tsv";
      log.open(p);
      if (!log) throw s2tp::IoError("cannot write " + p.string());
      s2tp::write_metric_header(log);
    }
    auto on_epoch = [&](const s2tp::EpochMetrics& m) {
      if (log.is_open()) log << s2tp::format_metrics(m) << '\n' << std::flush;
      if (callback) {
        const s2tp_epoch_metrics cm{m.epoch, m.step, m.lr, m.train_loss,
                                    m.valid_token_accuracy, m.valid_exact_match};
        callback(&cm, user);
      }
    };
    const s2tp::TrainResult result = s2tp::train(exp, text, on_epoch);
    const s2tp::Checkpoint averaged = s2tp::averaged_best(result);
    if (out_dir) {
      const fs::path dir(out_dir);
      for (std::size_t i = 0; i < result.best.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "best_%02zu.ckpt", i + 1);
        s2tp::save_checkpoint((dir / name).string(), result.best[i].checkpoint);
      }
      s2tp::save_checkpoint((dir / "last.ckpt").string(), result.last);
      s2tp::save_checkpoint((dir / "averaged.ckpt").string(), averaged);
    }
    if (out_model) *out_model = model_from_checkpoint(averaged).release();
  });
}

s2tp_status s2tp_model_create(const s2tp_config* config, s2tp_model** out) {
  S2TP_REQUIRE(config && out, "config or out is NULL");
  return guarded([&] {
    const s2tp::ExperimentConfig exp = config->config.experiment();
    auto handle = std::make_unique<s2tp_model>();
    handle->config = config->config;
    handle->model = std::make_unique<s2tp::Model<float>>(exp.model, exp.seed);
    *out = handle.release();
  });
}

s2tp_status s2tp_model_load(const char* path, s2tp_model** out) {
  S2TP_REQUIRE(path && out, "path or out is NULL");
  return guarded([&] {
    *out = model_from_checkpoint(s2tp::load_checkpoint(path)).release();
  });
}

s2tp_status s2tp_model_save(const s2tp_model* model, const char* path) {
  S2TP_REQUIRE(model && path, "model or path is NULL");
  return guarded([&] {
    s2tp::save_checkpoint(
        path, s2tp::make_checkpoint(*model->model, model->config.to_text()));
  });
}

s2tp_status s2tp_model_config(const s2tp_model* model, s2tp_config** out) {
  S2TP_REQUIRE(model && out, "model or out is NULL");
  return guarded([&] {
    auto c = std::make_unique<s2tp_config>();
    c->config = model->config;
    *out = c.release();
  });
}

void s2tp_model_free(s2tp_model* model) { delete model; }

s2tp_status s2tp_average_checkpoints(const char* const* paths, size_t count,
                                     const char* out_path) {
  S2TP_REQUIRE(paths && out_path && count > 0,
               "need at least one input path and an output path");
  return guarded([&] {
    std::vector<std::string> list(paths, paths + count);
    s2tp::save_checkpoint(out_path, s2tp::average_checkpoint_files(list));
  });
}

s2tp_eval_options s2tp_eval_options_default(void) {
  return s2tp_eval_options{S2TP_DLA_FULL, 0, 1, 1, 0};
}

s2tp_status s2tp_evaluate(const s2tp_model* model, const s2tp_config* task,
                          const s2tp_eval_options* options,
                          s2tp_eval_metrics* out) {
  S2TP_REQUIRE(model && options && out, "model, options or out is NULL");
  return guarded([&] {
    const std::vector<s2tp::Example> data =
        test_examples(model, task, options->count);
    const s2tp::EvalMetrics m =
        s2tp::evaluate(*model->model, data, eval_options(options));
    *out = s2tp_eval_metrics{m.token_accuracy, m.exact_match, m.flops,
                             m.examples};
  });
}

s2tp_status s2tp_generate(const s2tp_model* model, const float* features,
                          size_t frames, size_t feature_dim,
                          const s2tp_eval_options* options, double* score,
                          char* buf, size_t cap, size_t* needed) {
  S2TP_REQUIRE(model && features && options, "model, features or options is NULL");
  return guarded([&] {
    if (feature_dim != model->model->config().feature_dim) {
      throw s2tp::ContractError(
          "input has " + std::to_string(feature_dim) + " features, model expects " +
          std::to_string(model->model->config().feature_dim));
    }
    const s2tp::Tensor<float> x(
        {frames, feature_dim},
        std::vector<float>(features, features + frames * feature_dim));
    const s2tp::EvalOptions eo = eval_options(options);
    s2tp::Rng rng(eo.seed);
    const s2tp::InferenceMemory<float> memory =
        model->model->encode_inference(x, {}, eo.mode, eo.k_prime, &rng);
    s2tp::GenerationConfig gc;
    gc.beam = std::max<std::size_t>(eo.beam, 1);
    gc.max_len = frames + 2;
    const s2tp::Hypothesis h = model->model->generate(memory, gc);
    if (score) *score = h.score;
    copy_text(s2tp::vocab::render(h.tokens), buf, cap, needed);
  });
}

s2tp_status s2tp_generate_examples(const s2tp_model* model,
                                   const s2tp_config* task,
                                   const s2tp_eval_options* options,
                                   s2tp_text_callback callback, void* user) {
  S2TP_REQUIRE(model && options && callback,
               "model, options or callback is NULL");
  return guarded([&] {
    const s2tp::EvalOptions eo = eval_options(options);
    const std::vector<s2tp::Example> data =
        test_examples(model, task, options->count ? options->count : 10);
    s2tp::Rng rng(eo.seed);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const s2tp::Example& ex = data[i];
      const s2tp::InferenceMemory<float> memory =
          model->model->encode_inference(ex.features, {}, eo.mode, eo.k_prime,
                                         &rng);
      s2tp::GenerationConfig gc;
      gc.beam = std::max<std::size_t>(eo.beam, 1);
      gc.max_len = ex.target.size() + 4;
      const s2tp::Hypothesis h = model->model->generate(memory, gc);
      char score[32];
      std::snprintf(score, sizeof score, "%.4f", h.score);
      const std::string line =
          std::to_string(i) + "\t" +
          s2tp::vocab::render(std::span<const int>(ex.target).subspan(1)) +
          "\t" + s2tp::vocab::render(h.tokens) + "\t" + score;
      callback(line.c_str(), user);
    }
  });
}

s2tp_status s2tp_generate_file(const s2tp_model* model, const char* path,
                               const s2tp_eval_options* options,
                               s2tp_text_callback callback, void* user) {
  S2TP_REQUIRE(model && path && options && callback,
               "model, path, options or callback is NULL");
  return guarded([&] {
    const s2tp::Checkpoint container = s2tp::load_checkpoint(path);
    for (const s2tp::NamedTensor& t : container.tensors) {
      if (t.value.rank() != 2) continue;
      double score = 0.0;
      std::size_t needed = 0;
      const s2tp_status st =
          s2tp_generate(model, t.value.data(), t.value.rows(), t.value.cols(),
                        options, &score, nullptr, 0, &needed);
      if (st != S2TP_OK) throw s2tp::ContractError(t.name + ": " + g_last_error);
      std::string text(needed, '\0');
      s2tp_generate(model, t.value.data(), t.value.rows(), t.value.cols(),
                    options, &score, text.data(), text.size(), &needed);
      text.resize(needed - 1);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", score);
      const std::string line = t.name + "\t" + text + "\t" + buf;
      callback(line.c_str(), user);
    }
  });
}

s2tp_status s2tp_record_attention(const s2tp_model* model,
                                  const s2tp_config* task, size_t index,
                                  const char* path) {
  S2TP_REQUIRE(model && path, "model or path is NULL");
  return guarded([&] {
    if (model->model->config().family != s2tp::flops::Family::kPerceiver) {
      throw s2tp::ContractError("attention records need a perceiver model");
    }
    const std::vector<s2tp::Example> data = test_examples(model, task, index + 1);
    const s2tp::InferenceMemory<float> memory = model->model->encode_inference(
        data[index].features, {}, s2tp::DlaMode::kFull, 0, nullptr);
    s2tp::dla::AttentionRecord<float> rec;
    rec.z = memory.cross_z;
    rec.attention = memory.attention;
    rec.frame_mask = memory.frame_mask;
    s2tp::save_checkpoint(path, s2tp::make_attention_record(rec));
  });
}

s2tp_status s2tp_select_latents(const char* record_path, s2tp_dla_mode mode,
                                size_t k_prime, uint64_t seed, size_t* ids) {
  S2TP_REQUIRE(record_path && ids, "record_path or ids is NULL");
  return guarded([&] {
    const s2tp::dla::AttentionRecord<float> rec =
        s2tp::read_attention_record(s2tp::load_checkpoint(record_path));
    const std::size_t n = rec.attention.rows();
    if (k_prime == 0 || k_prime > n) {
      throw s2tp::KPrimeError("k' = " + std::to_string(k_prime) +
                              " must lie in [1, n = " + std::to_string(n) + "]");
    }
    std::vector<std::size_t> out;
    switch (mode_of(mode)) {
      case s2tp::DlaMode::kDiverse:
        out = s2tp::dla::select_diverse(rec.z, rec.attention, k_prime,
                                        rec.frame_mask)
                  .ids;
        break;
      case s2tp::DlaMode::kRandom: {
        s2tp::Rng rng(seed);
        out = s2tp::dla::select_random(rec.z, k_prime, rng).ids;
        break;
      }
      case s2tp::DlaMode::kFull:
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = i;
        out.resize(k_prime);
        break;
    }
    std::copy(out.begin(), out.end(), ids);
  });
}

s2tp_status s2tp_flops_report(const s2tp_config* spec,
                              const s2tp_config* baseline,
                              const char* lengths_path, size_t default_count,
                              uint64_t seed, double* ratio, char* buf,
                              size_t cap, size_t* needed) {
  S2TP_REQUIRE(spec, "spec is NULL");
  return guarded([&] {
    const s2tp::ExperimentConfig a = spec->config.experiment();
    s2tp::ExperimentConfig b = a;
    if (baseline) {
      b = baseline->config.experiment();
    } else {
      b.model.family = s2tp::flops::Family::kTransformer;
    }
    copy_text(flops_text(a.model.spec(a.k_prime), b.model.spec(b.k_prime),
                         lengths_path, default_count, seed, ratio),
              buf, cap, needed);
  });
}

s2tp_status s2tp_flops_large_report(size_t k_prime, const char* lengths_path,
                                    size_t default_count, uint64_t seed,
                                    double* ratio, char* buf, size_t cap,
                                    size_t* needed) {
  return guarded([&] {
    const s2tp::flops::ModelSpec spec =
        s2tp::flops::large_perceiver(k_prime ? k_prime : 2048);
    copy_text(flops_text(spec, s2tp::flops::large_transformer(), lengths_path,
                         default_count, seed, ratio),
              buf, cap, needed);
  });
}

s2tp_status s2tp_gradcheck(uint64_t seed, double* max_relative_error,
                           char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    const std::vector<s2tp::GradCheckCase> cases =
        s2tp::run_gradchecks(s2tp::GradCheckOptions{}, seed);
    std::ostringstream out;
    out << "case\tmax_rel_error\tmax_abs_error\tcoords\tabove_1e-5\tworst\n";
    double worst = 0.0;
    for (const s2tp::GradCheckCase& c : cases) {
      char line[256];
      std::snprintf(line, sizeof line, "%s\t%.3e\t%.3e\t%zu\t%zu\t%s[%zu]\n",
                    c.name.c_str(), c.report.max_relative_error,
                    c.report.max_absolute_error, c.report.coordinates,
                    c.report.above_1e5, c.report.worst_parameter.c_str(),
                    c.report.worst_index);
      out << line;
      worst = std::max(worst, c.report.max_relative_error);
    }
    if (max_relative_error) *max_relative_error = worst;
    copy_text(out.str(), buf, cap, needed);
  });
}

}  // extern "C"

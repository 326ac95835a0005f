// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// s2tp command-line front end. Talks to the library only through the C API.
//
//   s2tp train --config toy.cfg --out runs/k16
//   s2tp evaluate --checkpoint runs/k16/averaged.ckpt --dla diverse --k-prime 16
//   s2tp flops --large --k-prime 512 --lengths corpus.txt

#include <cstdio>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "s2tp/s2tp.h"

namespace {

// Exit codes, one per failure class.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kCheckpoint = 3,
  kKPrime = 4,
  kIo = 5,
  kContract = 6,
  kDivergence = 7,
  kInternal = 8,
};

int exit_code(s2tp_status s) {
  switch (s) {
    case S2TP_OK: return kOk;
    case S2TP_ERR_CONFIG: return kConfig;
    case S2TP_ERR_CHECKPOINT: return kCheckpoint;
    case S2TP_ERR_K_PRIME: return kKPrime;
    case S2TP_ERR_IO: return kIo;
    case S2TP_ERR_CONTRACT: return kContract;
    case S2TP_ERR_DIVERGENCE: return kDivergence;
    case S2TP_ERR_ARGUMENT: return kUsage;
    case S2TP_ERR_INTERNAL: return kInternal;
  }
  return kInternal;
}

struct Failure {
  s2tp_status status;
};

void check(s2tp_status s) {
  if (s != S2TP_OK) throw Failure{s};
}

struct ConfigDeleter {
  void operator()(s2tp_config* c) const { s2tp_config_free(c); }
};
struct ModelDeleter {
  void operator()(s2tp_model* m) const { s2tp_model_free(m); }
};
using ConfigPtr = std::unique_ptr<s2tp_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<s2tp_model, ModelDeleter>;

template <typename F>
std::string read_text(F&& fill) {
  std::size_t needed = 0;
  check(fill(nullptr, 0, &needed));
  std::string out(needed, '\0');
  check(fill(out.data(), out.size(), &needed));
  out.resize(needed ? needed - 1 : 0);
  return out;
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

ConfigPtr load_config(const Common& c, bool seed_into_config) {
  s2tp_config* raw = nullptr;
  check(c.config_path.empty() ? s2tp_config_default(&raw)
                              : s2tp_config_load(c.config_path.c_str(), &raw));
  ConfigPtr config(raw);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{S2TP_ERR_CONFIG};
    }
    check(s2tp_config_set(config.get(), kv.substr(0, eq).c_str(),
                          kv.substr(eq + 1).c_str()));
  }
  if (seed_into_config && c.seed) {
    check(s2tp_config_set(config.get(), "seed", std::to_string(*c.seed).c_str()));
  }
  check(s2tp_config_validate(config.get()));
  return config;
}

ModelPtr load_model(const std::string& path) {
  s2tp_model* raw = nullptr;
  check(s2tp_model_load(path.c_str(), &raw));
  return ModelPtr(raw);
}

const std::map<std::string, s2tp_dla_mode> kModes = {
    {"full", S2TP_DLA_FULL},
    {"diverse", S2TP_DLA_DIVERSE},
    {"random", S2TP_DLA_RANDOM}};

const char* mode_name(s2tp_dla_mode m) {
  for (const auto& [name, mode] : kModes) {
    if (mode == m) return name.c_str();
  }
  return "?";
}

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) {
    cmd->add_option("--config", c.config_path, "key = value configuration file");
    cmd->add_option("--set", c.overrides, "override a configuration key (key=value)");
  }
  cmd->add_option("--seed", c.seed, "random seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"s2tp: perceiver speech-to-text experiments on a synthetic task"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(s2tp_version()));

  Common common;
  std::string out_path;
  std::string checkpoint;
  std::string dla = "full";
  std::size_t k_prime = 0;
  std::size_t beam = 1;
  std::size_t count = 0;
  std::size_t corpus_size = 1000;
  std::string select_rule = "diverse";
  std::string lengths;
  std::string baseline;
  bool large = false;
  std::string record;
  std::optional<std::size_t> example;
  std::vector<std::string> inputs;
  std::string input;

  CLI::App* train = app.add_subcommand("train", "train a model and write checkpoints");
  add_common(train, common);
  train->add_option("--out", out_path, "output directory")->default_val("run");

  auto add_inference = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    cmd->add_option("--dla", dla, "latent access at inference")
        ->check(CLI::IsMember({"full", "diverse", "random"}));
    cmd->add_option("--k-prime", k_prime, "inference latents for diverse/random");
    cmd->add_option("--beam", beam, "beam width (0: teacher-forced only)");
    cmd->add_option("--count", count, "held-out examples (0: valid_size)");
  };

  CLI::App* evaluate = app.add_subcommand("evaluate", "token accuracy, exact match and FLOPs");
  add_common(evaluate, common);
  add_inference(evaluate);

  CLI::App* generate = app.add_subcommand("generate", "decode held-out examples or an input file");
  add_common(generate, common);
  add_inference(generate);
  generate->add_option("--input", input,
                       "container file whose rank-2 tensors are decoded");

  CLI::App* select = app.add_subcommand("select-latents", "latent ids for an attention record");
  add_common(select, common, false);
  select->add_option("--record", record, "attention record (Z, A, frame_mask)")->required();
  select->add_option("--k-prime", k_prime, "latents to keep")->required();
  select->add_option("--dla", select_rule, "selection rule")
      ->check(CLI::IsMember({"diverse", "random"}))
      ->capture_default_str();
  select->add_option("--checkpoint", checkpoint,
                     "write the record for --example of this model first");
  select->add_option("--example", example, "held-out example index");

  CLI::App* flops = app.add_subcommand("flops", "analytic cost report (TSV)");
  add_common(flops, common);
  flops->add_option("--lengths", lengths, "`m t` pairs, one per line");
  flops->add_option("--baseline", baseline, "baseline configuration (default: transformer)");
  flops->add_option("--k-prime", k_prime, "inference latents of the spec");
  flops->add_option("--count", corpus_size, "default-corpus size")->capture_default_str();
  flops->add_flag("--large", large, "large-scale presets instead of configurations");

  CLI::App* average = app.add_subcommand("average-checkpoints", "elementwise checkpoint mean");
  add_common(average, common, false);
  average->add_option("inputs", inputs, "checkpoints")->required();
  average->add_option("--out", out_path, "output checkpoint")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient report");
  add_common(gradcheck, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::uint64_t seed = common.seed.value_or(1);
  try {
    if (*train) {
      ConfigPtr config = load_config(common, true);
      std::printf("epoch\tstep\tlr\ttrain_loss\tvalid_token_acc\tvalid_exact_match\n");
      auto on_epoch = [](const s2tp_epoch_metrics* m, void*) {
        std::printf("%llu\t%llu\t%.6e\t%.6f\t%.6f\t%.6f\n",
                    static_cast<unsigned long long>(m->epoch),
                    static_cast<unsigned long long>(m->step), m->lr,
                    m->train_loss, m->valid_token_accuracy, m->valid_exact_match);
        std::fflush(stdout);
      };
      check(s2tp_train(config.get(), out_path.c_str(), on_epoch, nullptr, nullptr));
      std::fprintf(stderr, "wrote %s/averaged.ckpt\n", out_path.c_str());
    } else if (*evaluate || *generate) {
      ModelPtr model = load_model(checkpoint);
      ConfigPtr task;
      if (!common.config_path.empty() || !common.overrides.empty()) {
        task = load_config(common, false);
      }
      s2tp_eval_options opts = s2tp_eval_options_default();
      opts.mode = kModes.at(dla);
      opts.k_prime = k_prime;
      opts.beam = beam;
      opts.seed = seed;
      opts.count = count;
      if (*evaluate) {
        s2tp_eval_metrics m{};
        check(s2tp_evaluate(model.get(), task.get(), &opts, &m));
        s2tp_eval_options full = opts;
        full.mode = S2TP_DLA_FULL;
        full.beam = 0;
        s2tp_eval_metrics f{};
        check(s2tp_evaluate(model.get(), task.get(), &full, &f));
        std::printf("mode\tk_prime\texamples\ttoken_acc\texact_match\tflops\tfull_flops\tflops_ratio\n");
        std::printf("%s\t%zu\t%llu\t%.6f\t%.6f\t%.6e\t%.6e\t%.6f\n", mode_name(opts.mode),
                    opts.mode == S2TP_DLA_FULL ? std::size_t{0} : k_prime,
                    static_cast<unsigned long long>(m.examples), m.token_accuracy,
                    m.exact_match, m.flops, f.flops, m.flops / f.flops);
      } else if (!input.empty()) {
        std::printf("name\thypothesis\tscore\n");
        auto emit = [](const char* line, void*) { std::printf("%s\n", line); };
        check(s2tp_generate_file(model.get(), input.c_str(), &opts, emit, nullptr));
      } else {
        std::printf("index\treference\thypothesis\tscore\n");
        auto emit = [](const char* line, void*) { std::printf("%s\n", line); };
        check(s2tp_generate_examples(model.get(), task.get(), &opts, emit, nullptr));
      }
    } else if (*select) {
      if (!checkpoint.empty()) {
        ModelPtr model = load_model(checkpoint);
        check(s2tp_record_attention(model.get(), nullptr, example.value_or(0),
                                    record.c_str()));
      }
      std::vector<std::size_t> ids(k_prime);
      check(s2tp_select_latents(record.c_str(), kModes.at(select_rule), k_prime, seed,
                                ids.data()));
      for (std::size_t i = 0; i < ids.size(); ++i) {
        std::printf(i ? " %zu" : "%zu", ids[i]);
      }
      std::printf("\n");
    } else if (*flops) {
      double ratio = 0.0;
      const char* lp = lengths.empty() ? nullptr : lengths.c_str();
      std::string report;
      if (large) {
        report = read_text([&](char* b, std::size_t cap, std::size_t* need) {
          return s2tp_flops_large_report(k_prime, lp, corpus_size, seed, &ratio, b, cap, need);
        });
      } else {
        Common spec_common = common;
        if (k_prime) spec_common.overrides.push_back("k_prime=" + std::to_string(k_prime));
        ConfigPtr spec = load_config(spec_common, false);
        ConfigPtr base;
        if (!baseline.empty()) {
          Common b;
          b.config_path = baseline;
          base = load_config(b, false);
        }
        report = read_text([&](char* b, std::size_t cap, std::size_t* need) {
          return s2tp_flops_report(spec.get(), base.get(), lp, corpus_size, seed, &ratio,
                                   b, cap, need);
        });
      }
      std::fputs(report.c_str(), stdout);
    } else if (*average) {
      std::vector<const char*> paths;
      for (const std::string& p : inputs) paths.push_back(p.c_str());
      check(s2tp_average_checkpoints(paths.data(), paths.size(), out_path.c_str()));
    } else if (*gradcheck) {
      double worst = 0.0;
      const std::string report = read_text([&](char* b, std::size_t cap, std::size_t* need) {
        return s2tp_gradcheck(seed, &worst, b, cap, need);
      });
      std::fputs(report.c_str(), stdout);
      std::printf("max_rel_error\t%.3e\n", worst);
    }
  } catch (const Failure& f) {
    const char* msg = s2tp_last_error();
    std::fprintf(stderr, "error (%s): %s\n", s2tp_status_name(f.status),
                 msg && *msg ? msg : "failed");
    return exit_code(f.status);
  }
  return kOk;
}

// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop, optimizer, learning-rate schedule and evaluation metrics for
// the synthetic sequence task.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "s2tp/checkpoint.hpp"
#include "s2tp/config.hpp"
#include "s2tp/dataset.hpp"
#include "s2tp/model.hpp"

namespace s2tp {

/// Linear warm-up to `base` at `warmup`, inverse square root decay after.
/// `step` counts from 1.
double lr_schedule(std::size_t step, double base, std::size_t warmup);

/// Adaptive moments with decoupled weight decay. Decay applies to matrices
/// only; biases, norm parameters and the latent array are not decayed.
class AdamW {
 public:
  AdamW(ParameterList<float> params, double beta1, double beta2, double eps,
        double weight_decay);

  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  ParameterList<float> params_;
  std::vector<std::vector<double>> m_, v_;
  std::vector<bool> decay_;
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double valid_token_accuracy = 0.0;
  double valid_exact_match = 0.0;
};

/// One tab-separated metric-log line (no trailing newline):
/// epoch, step, lr, train_loss, valid_token_acc, valid_exact_match.
std::string format_metrics(const EpochMetrics& m);
void write_metric_header(std::ostream& out);

struct Snapshot {
  double score = 0.0;  ///< validation token accuracy
  std::size_t epoch = 0;
  Checkpoint checkpoint;
};

enum class StopReason { kPatience, kMaxEpochs, kMaxSteps, kTimeBudget };
const char* stop_reason_name(StopReason r);

struct TrainResult {
  std::vector<EpochMetrics> log;
  /// Best snapshots by validation token accuracy, best first (ties: earlier
  /// epoch first), at most `keep_best` of them.
  std::vector<Snapshot> best;
  Checkpoint last;
  StopReason stop = StopReason::kMaxEpochs;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains a float model from scratch. Every example draws its own latent
/// subset of size k_train. Throws DivergenceError when the loss stops being
/// finite.
TrainResult train(const ExperimentConfig& config, const std::string& config_text,
                  const EpochCallback& on_epoch = {});

/// Mean of the best snapshots (the usual deliverable of a run).
Checkpoint averaged_best(const TrainResult& result);

struct EvalOptions {
  DlaMode mode = DlaMode::kFull;
  std::size_t k_prime = 0;  ///< ignored for kFull
  /// 0 skips generation: exact match is then the teacher-forced rate, which
  /// equals the greedy exact-match rate.
  std::size_t beam = 1;
  std::uint64_t seed = 1;  ///< random selection only
};

struct EvalMetrics {
  /// Teacher-forced argmax accuracy over target positions after BOS.
  double token_accuracy = 0.0;
  /// Fraction of examples whose output equals the target exactly.
  double exact_match = 0.0;
  /// Analytic forward FLOPs for the evaluated corpus in the chosen mode.
  double flops = 0.0;
  std::size_t examples = 0;
};

/// Throws KPrimeError when k' is outside [1, n] for a selection mode.
EvalMetrics evaluate(const Model<float>& model, std::span<const Example> data,
                     const EvalOptions& options);

/// Token accuracy and exact match of one prepared memory, teacher-forced.
struct TeacherForced {
  std::size_t correct = 0;
  std::size_t total = 0;
  bool all_correct = false;
};
TeacherForced teacher_forced(const Model<float>& model,
                             const InferenceMemory<float>& memory,
                             std::span<const int> target);

}  // namespace s2tp

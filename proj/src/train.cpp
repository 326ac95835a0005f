// Copyright 2026 The s2tp Authors
// SPDX-License-Identifier: Apache-2.0

#include "s2tp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "s2tp/dla.hpp"
#include "s2tp/errors.hpp"

namespace s2tp {

double lr_schedule(std::size_t step, double base, std::size_t warmup) {
  if (step == 0) throw ContractError("lr_schedule: step counts from 1");
  if (warmup == 0) return base / std::sqrt(static_cast<double>(step));
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return base * std::min(s / w, std::sqrt(w / s));
}

AdamW::AdamW(ParameterList<float> params, double beta1, double beta2,
             double eps, double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  for (Parameter<float>* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
    const std::string& n = p->name;
    decay_.push_back(n.ends_with(".weight") || n.ends_with(".embedding"));
  }
}

void AdamW::zero_grad() {
  for (Parameter<float>* p : params_) p->zero_grad();
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter<float>& p = *params_[i];
    if (p.grad.size() != p.value.size()) continue;
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    const double decay = decay_[i] ? lr * weight_decay_ : 0.0;
    float* w = p.value.data();
    const float* g = p.grad.data();
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double gj = g[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
      w[j] = static_cast<float>(w[j] - decay * w[j] - lr * update);
    }
  }
}

std::string format_metrics(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.6e\t%.6f\t%.6f\t%.6f", m.epoch,
                m.step, m.lr, m.train_loss, m.valid_token_accuracy,
                m.valid_exact_match);
  return buf;
}

void write_metric_header(std::ostream& out) {
  out << "epoch\tstep\tlr\ttrain_loss\tvalid_token_acc\tvalid_exact_match\n";
}

const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::kPatience: return "patience";
    case StopReason::kMaxEpochs: return "max_epochs";
    case StopReason::kMaxSteps: return "max_steps";
    case StopReason::kTimeBudget: return "time_budget";
  }
  return "unknown";
}

TeacherForced teacher_forced(const Model<float>& model,
                             const InferenceMemory<float>& memory,
                             std::span<const int> target) {
  if (target.size() < 2) throw ContractError("target needs BOS and EOS");
  const Tensor<float> logits =
      model.logits(memory, target.first(target.size() - 1));
  TeacherForced out;
  out.total = target.size() - 1;
  const std::size_t vocab = logits.cols();
  for (std::size_t i = 0; i < out.total; ++i) {
    const std::span<const float> row = logits.row(i);
    int best = vocab::kEos;
    for (std::size_t v = vocab::kEos; v < vocab; ++v) {
      if (row[v] > row[best]) best = static_cast<int>(v);
    }
    if (best == target[i + 1]) ++out.correct;
  }
  out.all_correct = out.correct == out.total;
  return out;
}

EvalMetrics evaluate(const Model<float>& model, std::span<const Example> data,
                     const EvalOptions& options) {
  const ModelConfig& mc = model.config();
  const bool perceiver = mc.family == flops::Family::kPerceiver;
  if (perceiver && options.mode != DlaMode::kFull &&
      (options.k_prime == 0 || options.k_prime > mc.n_latents)) {
    throw KPrimeError("k' = " + std::to_string(options.k_prime) +
                      " must lie in [1, n = " + std::to_string(mc.n_latents) +
                      "]");
  }
  const std::size_t k_prime =
      options.mode == DlaMode::kFull ? mc.n_latents : options.k_prime;
  const flops::ModelSpec spec = mc.spec(k_prime);

  Rng rng(options.seed);
  EvalMetrics out;
  out.examples = data.size();
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t exact = 0;
  std::vector<flops::LengthPair> lengths;
  lengths.reserve(data.size());
  for (const Example& ex : data) {
    const InferenceMemory<float> memory = model.encode_inference(
        ex.features, {}, options.mode, options.k_prime, &rng);
    const TeacherForced tf = teacher_forced(model, memory, ex.target);
    correct += tf.correct;
    total += tf.total;
    if (options.beam == 0) {
      exact += tf.all_correct ? 1 : 0;
    } else {
      GenerationConfig gc;
      gc.beam = options.beam;
      gc.max_len = ex.target.size() + 4;
      const Hypothesis h = model.generate(memory, gc);
      const std::span<const int> gold(ex.target.begin() + 1, ex.target.end());
      exact += std::ranges::equal(h.tokens, gold) ? 1 : 0;
    }
    lengths.push_back({ex.features.rows(), ex.target.size() - 1});
  }
  if (total > 0) {
    out.token_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  }
  if (!data.empty()) {
    out.exact_match = static_cast<double>(exact) / static_cast<double>(data.size());
    out.flops = static_cast<double>(flops::corpus_cost(spec, lengths).total());
  }
  return out;
}

namespace {

void insert_snapshot(std::vector<Snapshot>& best, Snapshot snap,
                     std::size_t keep) {
  if (keep == 0) return;
  auto pos = std::find_if(best.begin(), best.end(), [&](const Snapshot& s) {
    return snap.score > s.score;
  });
  if (static_cast<std::size_t>(pos - best.begin()) >= keep) return;
  best.insert(pos, std::move(snap));
  if (best.size() > keep) best.pop_back();
}

}  // namespace

TrainResult train(const ExperimentConfig& config, const std::string& config_text,
                  const EpochCallback& on_epoch) {
  config.validate();
  const TrainConfig& tc = config.train;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };

  ToyTask task = config.task;
  const std::vector<Example> train_set = generate_dataset(task, tc.train_size, 0);
  const std::vector<Example> valid_set = generate_dataset(task, tc.valid_size, 1);

  Model<float> model(config.model, config.seed);
  AdamW opt(model.parameters(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps,
            tc.weight_decay);

  // Separate streams so that changing k never perturbs shuffling or dropout.
  Rng shuffle_rng(config.seed * 6364136223846793005ULL + 1);
  Rng latent_rng(config.seed * 6364136223846793005ULL + 2);
  Rng dropout_rng(config.seed * 6364136223846793005ULL + 3);
  const RunContext ctx{true, &dropout_rng};
  const bool perceiver = config.model.family == flops::Family::kPerceiver;
  const std::size_t n = config.model.n_latents;
  const std::size_t k = std::min(tc.k_train, n);

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  double best_score = -1.0;
  std::size_t since_best = 0;
  bool stop = false;

  for (std::size_t epoch = 1; !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double lr = 0.0;
    for (std::size_t b = 0; b < order.size(); b += tc.batch_size) {
      const std::size_t end = std::min(order.size(), b + tc.batch_size);
      const double inv = 1.0 / static_cast<double>(end - b);
      opt.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const Example& ex = train_set[order[i]];
        std::vector<std::size_t> ids;
        if (perceiver) ids = dla::sample_train_latents(n, k, latent_rng);
        Graph<float> g;
        Var loss = model.loss(g, ex.features, ex.target, ids,
                              tc.label_smoothing, ctx);
        const double value = g.value(loss).item();
        if (!std::isfinite(value)) {
          throw DivergenceError("loss became " + std::to_string(value) +
                                " at step " + std::to_string(step + 1) +
                                " (epoch " + std::to_string(epoch) + ")");
        }
        batch_loss += value;
        g.backward(g.scale(loss, static_cast<float>(inv)));
      }
      ++step;
      lr = lr_schedule(step, tc.learning_rate, tc.warmup_steps);
      opt.step(lr);
      loss_sum += batch_loss * inv;
      ++loss_count;
      if (tc.max_steps > 0 && step >= tc.max_steps) {
        result.stop = StopReason::kMaxSteps;
        stop = true;
        break;
      }
      if (tc.max_minutes > 0.0 && elapsed() >= tc.max_minutes * 60.0) {
        result.stop = StopReason::kTimeBudget;
        stop = true;
        break;
      }
    }

    EvalOptions eo;
    eo.beam = 0;
    eo.seed = config.seed;
    const EvalMetrics vm = evaluate(model, valid_set, eo);
    EpochMetrics em;
    em.epoch = epoch;
    em.step = step;
    em.lr = lr;
    em.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    em.valid_token_accuracy = vm.token_accuracy;
    em.valid_exact_match = vm.exact_match;
    result.log.push_back(em);
    if (on_epoch) on_epoch(em);

    insert_snapshot(result.best,
                    {vm.token_accuracy, epoch, make_checkpoint(model, config_text)},
                    tc.keep_best);
    if (vm.token_accuracy > best_score) {
      best_score = vm.token_accuracy;
      since_best = 0;
    } else if (++since_best >= tc.patience && !stop) {
      result.stop = StopReason::kPatience;
      stop = true;
    }
    if (!stop && tc.max_epochs > 0 && epoch >= tc.max_epochs) {
      result.stop = StopReason::kMaxEpochs;
      stop = true;
    }
  }
  result.last = make_checkpoint(model, config_text);
  result.seconds = elapsed();
  return result;
}

Checkpoint averaged_best(const TrainResult& result) {
  if (result.best.empty()) return result.last;
  std::vector<Checkpoint> cks;
  cks.reserve(result.best.size());
  for (const Snapshot& s : result.best) cks.push_back(s.checkpoint);
  return average_checkpoints(cks);
}

}  // namespace s2tp

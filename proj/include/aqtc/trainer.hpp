// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "aqtc/features.hpp"
#include "aqtc/metrics.hpp"
#include "aqtc/model.hpp"

namespace aqtc {

enum class Precision { kFloat32, kFloat64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 0.002;
  int d_h = 768;
  int heads = 3;
  int d_o = 0;  // 0: d_h
  int d_s = 0;  // 0: d_o
  StepVariant step_variant = StepVariant::kGru;
  std::uint64_t seed = 0;
  std::int64_t shuffle_seed = -1;  // -1: derived from seed
  Precision precision = Precision::kFloat32;
  double val_fraction = 0.25;  // 20 of the 80-sample training pool
  BucketScheme buckets;
  int workers = 1;

  /// Throws ConfigError.
  void validate() const;
  ModelConfig model_config(int d_v, int d_t) const;
  std::uint64_t effective_shuffle_seed() const;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Per bucket, round(val_fraction * bucket size) samples go to validation,
/// chosen by a seeded shuffle. Both index lists are in dataset order.
Split stratified_split(std::span<const FeatureBundle> samples, double val_fraction, std::uint64_t seed,
                       const BucketScheme& scheme);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  MetricsReport validation;
  CarryMode validation_carry = CarryMode::kGreedy;
  std::int64_t optimizer_steps = 0;  // cumulative
  double wall_seconds = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::uint64_t seed = 0;
};

/// True when `a` beats `b`: higher R@1, then higher MRR, then lower MR.
bool better_epoch(const MetricsReport& a, const MetricsReport& b);

/// 1-based epoch with the best validation report; ties go to the earliest.
int select_best(const TrainLog& log);

struct EvalResult {
  std::vector<RankRecord> records;
  CarryMode carry = CarryMode::kGreedy;
};

/// Greedy-carry ranks of every step of every sample, in sample order.
/// Samples are split across `workers` threads; results do not depend on it.
template <typename Scalar>
EvalResult evaluate(const Model<Scalar>& model, std::span<const FeatureBundle> samples, const BucketScheme& scheme,
                    int workers = 1) {
  if (samples.empty()) throw ContractError("evaluate: no samples");
  std::vector<std::vector<RankRecord>> per_sample(samples.size());
  auto run = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < samples.size(); i += stride) {
      const auto& b = samples[i];
      const auto scores = predict_scores(model, b);
      for (std::size_t t = 0; t < scores.size(); ++t) {
        per_sample[i].push_back({b.id, static_cast<int>(t), static_cast<int>(scores[t].size()),
                                 rank_of_truth(scores[t], b.steps[t].truth), scheme.label_for(b.button_count)});
      }
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::max(1, workers));
  if (n_workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w, n_workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  EvalResult out;
  for (auto& recs : per_sample) out.records.insert(out.records.end(), recs.begin(), recs.end());
  return out;
}

template <typename Scalar>
struct TrainResult {
  std::unique_ptr<Model<Scalar>> model;  // parameters of the best epoch
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Accumulates single-sample gradients and applies one SGD step per
/// batch_size samples (gradient sum scaled by 1/samples-in-batch), plus one
/// for the remainder at the end of each epoch. The per-sample loss is the
/// teacher-forced mean cross-entropy over steps. Validation runs with greedy
/// carry after every epoch, and the best epoch's parameters are returned.
template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig& config, int d_v, int d_t, std::span<const FeatureBundle> train_set,
                          std::span<const FeatureBundle> val_set, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (train_set.empty()) throw ContractError("train: training set is empty");
  if (val_set.empty()) throw ContractError("train: validation set is empty");
  for (auto set : {train_set, val_set}) {
    for (const auto& b : set) {
      try {
        validate_bundle(b, d_v, d_t);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    }
  }

  auto model = std::make_unique<Model<Scalar>>(config.model_config(d_v, d_t), config.seed);
  auto& params = model->params();
  params.zero_grad();
  Rng shuffle_rng(config.effective_shuffle_seed());
  const auto lr = static_cast<Scalar>(config.learning_rate);

  TrainLog log;
  log.seed = config.seed;
  std::int64_t steps_taken = 0;
  std::vector<Matrix<Scalar>> best_params;
  MetricsReport best_report;
  int pending = 0;
  auto apply_update = [&] {
    params.scale_grad(Scalar(1) / static_cast<Scalar>(pending));
    sgd_step(params, lr);
    params.zero_grad();
    ++steps_taken;
    pending = 0;
  };

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto order = shuffle_rng.permutation(train_set.size());
    double loss_sum = 0;
    for (std::size_t idx : order) {
      const auto& b = train_set[idx];
      try {
        Graph<Scalar> g(GradMode::kRecord);
        auto loss = sample_loss(g, *model, b);
        loss_sum += static_cast<double>(loss.value()(0, 0));
        g.backward(loss);
      } catch (const NonFiniteError& e) {
        throw NonFiniteError("epoch " + std::to_string(epoch) + ", sample '" + b.id + "': " + e.what());
      }
      if (++pending == config.batch_size) apply_update();
    }
    if (pending > 0) apply_update();

    auto eval = evaluate(*model, val_set, config.buckets, config.workers);
    if (eval.carry != CarryMode::kGreedy) throw std::logic_error("validation must use greedy carry");
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.validation = compute_metrics(eval.records);
    rec.validation_carry = eval.carry;
    rec.optimizer_steps = steps_taken;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log.epochs.empty() || better_epoch(rec.validation, best_report)) {
      best_params = params.snapshot();
      best_report = rec.validation;
      log.best_epoch = epoch;
    }
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (select_best(log) != log.best_epoch) throw std::logic_error("best-epoch tracking disagrees with select_best");
  params.restore(best_params);
  return {std::move(model), std::move(log)};
}

}  // namespace aqtc

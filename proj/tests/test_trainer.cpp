// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>

#include "aqtc/config.hpp"
#include "aqtc/data_io.hpp"
#include "aqtc/gradcheck.hpp"
#include "aqtc/trainer.hpp"

namespace aqtc {
namespace {

FeatureBundle with_buttons(int buttons, const std::string& id) {
  FeatureBundle b;
  b.id = id;
  b.button_count = buttons;
  return b;
}

TEST(StratifiedSplit, EqualBucketsAtHalf) {
  std::vector<FeatureBundle> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(with_buttons(5, "a" + std::to_string(i)));
  for (int i = 0; i < 4; ++i) samples.push_back(with_buttons(15, "b" + std::to_string(i)));
  const auto split = stratified_split(samples, 0.5, 1, BucketScheme{});
  ASSERT_EQ(split.validation.size(), 4u);
  int from_a = 0;
  for (auto i : split.validation) from_a += samples[i].button_count == 5;
  EXPECT_EQ(from_a, 2);
}

TEST(StratifiedSplit, FigureTwoBucketsAtQuarter) {
  std::vector<FeatureBundle> samples;
  const int sizes[3] = {39, 29, 12};
  const int buttons[3] = {6, 15, 25};
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < sizes[b]; ++i) samples.push_back(with_buttons(buttons[b], std::to_string(samples.size())));
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto split = stratified_split(samples, 0.25, seed, BucketScheme{});
    int per[3] = {0, 0, 0};
    for (auto i : split.validation)
      for (int b = 0; b < 3; ++b) per[b] += samples[i].button_count == buttons[b];
    EXPECT_EQ(per[0], 10);
    EXPECT_EQ(per[1], 7);
    EXPECT_EQ(per[2], 3);
    EXPECT_EQ(split.validation.size(), 20u);
    EXPECT_EQ(split.train.size(), 60u);
    // Disjoint and exhaustive, each list in dataset order.
    std::vector<int> seen(samples.size(), 0);
    for (auto i : split.train) ++seen[i];
    for (auto i : split.validation) ++seen[i];
    for (int s : seen) EXPECT_EQ(s, 1);
    EXPECT_TRUE(std::is_sorted(split.train.begin(), split.train.end()));
    EXPECT_TRUE(std::is_sorted(split.validation.begin(), split.validation.end()));
  }
  EXPECT_NE(stratified_split(samples, 0.25, 0, BucketScheme{}).validation,
            stratified_split(samples, 0.25, 1, BucketScheme{}).validation);
  EXPECT_EQ(stratified_split(samples, 0.25, 5, BucketScheme{}).validation,
            stratified_split(samples, 0.25, 5, BucketScheme{}).validation);
}

TEST(StratifiedSplit, Preconditions) {
  std::vector<FeatureBundle> samples{with_buttons(3, "x"), with_buttons(4, "y")};
  EXPECT_THROW(stratified_split(samples, 0.0, 0, BucketScheme{}), ConfigError);
  EXPECT_THROW(stratified_split(samples, 1.0, 0, BucketScheme{}), ConfigError);
  EXPECT_THROW(stratified_split(std::vector<FeatureBundle>{}, 0.5, 0, BucketScheme{}), ContractError);
}

MetricsReport report_from_ranks(const std::vector<int>& ranks) {
  std::vector<std::int64_t> counts;
  for (int r : ranks) {
    if (counts.size() < static_cast<std::size_t>(r)) counts.resize(static_cast<std::size_t>(r), 0);
    ++counts[static_cast<std::size_t>(r - 1)];
  }
  return MetricsReport::from_histogram(counts);
}

TrainLog log_of(const std::vector<MetricsReport>& reports) {
  TrainLog log;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    EpochRecord rec;
    rec.epoch = static_cast<int>(i) + 1;
    rec.validation = reports[i];
    log.epochs.push_back(rec);
  }
  return log;
}

TEST(SelectBest, TieRules) {
  // R@1 0.2, then 0.5 with MRR 0.6, then 0.5 with MRR 0.7.
  const auto e1 = report_from_ranks({1, 1, 2, 2, 3, 3, 4, 4, 5, 5});
  const auto e2 = report_from_ranks({1, 1, 1, 1, 1, 5, 5, 5, 5, 5});
  const auto e3 = report_from_ranks({1, 1, 1, 1, 1, 2, 2, 2, 4, 4});
  ASSERT_DOUBLE_EQ(e1.r_at_1(), 0.2);
  ASSERT_DOUBLE_EQ(e2.r_at_1(), 0.5);
  ASSERT_DOUBLE_EQ(e2.mrr(), 0.6);
  ASSERT_DOUBLE_EQ(e3.r_at_1(), 0.5);
  ASSERT_DOUBLE_EQ(e3.mrr(), 0.7);
  EXPECT_EQ(select_best(log_of({e1, e2, e3})), 3);
  EXPECT_EQ(select_best(log_of({e2})), 1);
  EXPECT_EQ(select_best(log_of({e2, e2, e2})), 1);
  // Equal R@1 and MRR: the lower mean rank wins.
  const auto lo = report_from_ranks({4, 4});
  const auto hi = report_from_ranks({3, 6});
  ASSERT_EQ(lo.r_at_1(), hi.r_at_1());
  ASSERT_EQ(lo.mrr(), hi.mrr());
  ASSERT_LT(lo.mr(), hi.mr());
  EXPECT_EQ(select_best(log_of({hi, lo})), 2);
  EXPECT_THROW(select_best(TrainLog{}), ContractError);
}

SyntheticConfig tiny_data(int n, int steps = 2) {
  SyntheticConfig cfg;
  cfg.n_samples = n;
  cfg.frames = 3;
  cfg.sentences = 3;
  cfg.steps = steps;
  cfg.d = 6;
  cfg.max_buttons = 5;
  cfg.buckets.upper_bounds = {3, 4};
  cfg.noise_sigma = 0.05;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 3;
  tc.learning_rate = 0.05;
  tc.d_h = 6;
  tc.heads = 2;
  tc.seed = 11;
  tc.buckets.upper_bounds = {3, 4};
  return tc;
}

template <typename Scalar>
bool same_parameters(const Model<Scalar>& a, const Model<Scalar>& b) {
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i].value;
    const auto& y = b.params()[i].value;
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), sizeof(Scalar) * x.size()) != 0) return false;
  }
  return true;
}

TEST(Train, OneSampleOneEpochIsOneOptimizerStep) {
  const auto data = generate_synthetic(tiny_data(1, 1)).data;
  auto tc = tiny_train();
  tc.epochs = 1;
  int callbacks = 0;
  const auto result = train<float>(tc, 6, 6, data.samples, data.samples, [&](const EpochRecord&) { ++callbacks; });
  ASSERT_EQ(result.log.epochs.size(), 1u);
  EXPECT_EQ(callbacks, 1);
  EXPECT_EQ(result.log.epochs[0].optimizer_steps, 1);
  EXPECT_GT(result.log.epochs[0].train_loss, 0.0);
  EXPECT_EQ(result.log.best_epoch, 1);
  EXPECT_EQ(result.log.seed, 11u);
}

TEST(Train, OptimizerStepsCountRemainderBatches) {
  const auto data = generate_synthetic(tiny_data(7)).data;
  auto tc = tiny_train();
  tc.epochs = 3;
  const auto result = train<float>(tc, 6, 6, data.samples, std::span(data.samples).first(2));
  // ceil(7 / 3) = 3 updates per epoch.
  EXPECT_EQ(result.log.epochs[0].optimizer_steps, 3);
  EXPECT_EQ(result.log.epochs[2].optimizer_steps, 9);
}

TEST(Train, ZeroLearningRateLeavesParametersBitwiseUnchanged) {
  const auto data = generate_synthetic(tiny_data(5)).data;
  auto tc = tiny_train();
  tc.learning_rate = 0;
  tc.epochs = 3;
  const auto result = train<float>(tc, 6, 6, data.samples, data.samples);
  const Model<float> fresh(tc.model_config(6, 6), tc.seed);
  EXPECT_TRUE(same_parameters(*result.model, fresh));
}

TEST(Train, IdenticalConfigsGiveIdenticalResults) {
  const auto data = generate_synthetic(tiny_data(9)).data;
  const auto split = stratified_split(data.samples, 0.25, 3, BucketScheme{{3, 4}});
  std::vector<FeatureBundle> tr, va;
  for (auto i : split.train) tr.push_back(data.samples[i]);
  for (auto i : split.validation) va.push_back(data.samples[i]);
  auto tc = tiny_train();
  tc.epochs = 3;
  const auto a = train<float>(tc, 6, 6, tr, va);
  const auto b = train<float>(tc, 6, 6, tr, va);
  EXPECT_TRUE(same_parameters(*a.model, *b.model));
  EXPECT_EQ(train_log_jsonl(a.log), train_log_jsonl(b.log));
  tc.workers = 3;
  const auto c = train<float>(tc, 6, 6, tr, va);
  EXPECT_TRUE(same_parameters(*a.model, *c.model));
  EXPECT_EQ(train_log_jsonl(a.log), train_log_jsonl(c.log));
  tc.workers = 1;
  tc.seed = 12;
  const auto d = train<float>(tc, 6, 6, tr, va);
  EXPECT_FALSE(same_parameters(*a.model, *d.model));
}

TEST(Train, FirstBatchLossIgnoresTheShuffleSeed) {
  const auto data = generate_synthetic(tiny_data(6)).data;
  auto tc = tiny_train();
  tc.epochs = 1;
  tc.batch_size = 6;  // the whole epoch is one batch, scored before any update
  tc.precision = Precision::kFloat64;
  tc.shuffle_seed = 1;
  const auto a = train<double>(tc, 6, 6, data.samples, data.samples);
  tc.shuffle_seed = 2;
  const auto b = train<double>(tc, 6, 6, data.samples, data.samples);
  EXPECT_NEAR(a.log.epochs[0].train_loss, b.log.epochs[0].train_loss, 1e-14);
  // The order changes the later (post-update) epochs, so the seeds did differ.
  tc.epochs = 2;
  tc.batch_size = 1;
  const auto c = train<double>(tc, 6, 6, data.samples, data.samples);
  tc.shuffle_seed = 1;
  const auto d = train<double>(tc, 6, 6, data.samples, data.samples);
  EXPECT_NE(c.log.epochs[1].train_loss, d.log.epochs[1].train_loss);
}

TEST(Train, AccumulatedBatchEqualsSummedSampleGradients) {
  const auto data = generate_synthetic(tiny_data(4)).data;
  auto tc = tiny_train();
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.learning_rate = 0.1;
  tc.precision = Precision::kFloat64;
  const auto trained = train<double>(tc, 6, 6, data.samples, data.samples);

  // Same order, gradients accumulated by repeated backward passes.
  Model<double> accumulated(tc.model_config(6, 6), tc.seed);
  // Same order, each sample's gradient taken alone and summed by hand.
  Model<double> summed(tc.model_config(6, 6), tc.seed);
  auto& ap = accumulated.params();
  auto& sp = summed.params();
  const auto order = Rng(tc.effective_shuffle_seed()).permutation(data.samples.size());
  ap.zero_grad();
  std::vector<Matrix<double>> total;
  for (std::size_t i = 0; i < sp.size(); ++i) total.push_back(Matrix<double>::Zero(sp[i].value.rows(), sp[i].value.cols()));
  for (auto idx : order) {
    Graph<double> g1;
    g1.backward(sample_loss(g1, accumulated, data.samples[idx]));
    sp.zero_grad();
    Graph<double> g2;
    g2.backward(sample_loss(g2, summed, data.samples[idx]));
    for (std::size_t i = 0; i < sp.size(); ++i) total[i] += sp[i].grad;
  }
  ap.scale_grad(0.25);
  sgd_step(ap, 0.1);
  for (std::size_t i = 0; i < sp.size(); ++i) sp[i].value -= 0.1 * (total[i] * 0.25);

  EXPECT_TRUE(same_parameters(*trained.model, accumulated));
  for (std::size_t i = 0; i < sp.size(); ++i)
    EXPECT_LE((sp[i].value - trained.model->params()[i].value).cwiseAbs().maxCoeff(), 1e-15) << sp[i].name;
}

TEST(Train, BestEpochParametersAreReturned) {
  const auto data = generate_synthetic(tiny_data(8)).data;
  auto tc = tiny_train();
  tc.epochs = 4;
  tc.precision = Precision::kFloat64;
  std::vector<std::vector<Matrix<double>>> per_epoch;
  // Re-run the schedule epoch by epoch to capture each epoch's parameters.
  for (int e = 1; e <= 4; ++e) {
    auto t = tc;
    t.epochs = e;
    auto r = train<double>(t, 6, 6, data.samples, std::span(data.samples).first(3));
    per_epoch.push_back(r.model->params().snapshot());
  }
  const auto full = train<double>(tc, 6, 6, data.samples, std::span(data.samples).first(3));
  const int best = full.log.best_epoch;
  EXPECT_EQ(best, select_best(full.log));
  // A run truncated at the best epoch ends with that epoch's parameters,
  // unless an even earlier epoch was best within it; the full run must match
  // the snapshot of the run that stopped exactly there.
  const auto truncated_best = select_best(TrainLog{std::vector<EpochRecord>(full.log.epochs.begin(),
                                                                            full.log.epochs.begin() + best),
                                                   0, 0});
  ASSERT_EQ(truncated_best, best);
  const auto& expected = per_epoch[static_cast<std::size_t>(best - 1)];
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(full.model->params()[i].value, expected[i]);
}

TEST(Train, ValidationUsesGreedyCarry) {
  const auto data = generate_synthetic(tiny_data(4, 3)).data;
  auto tc = tiny_train();
  tc.epochs = 1;
  const auto r = train<float>(tc, 6, 6, data.samples, data.samples);
  EXPECT_EQ(r.log.epochs[0].validation_carry, CarryMode::kGreedy);
  const auto eval = evaluate(*r.model, data.samples, tc.buckets);
  EXPECT_EQ(eval.carry, CarryMode::kGreedy);

  // Ranks agree with a greedy unroll and, where the greedy choice misses the
  // truth, generally not with a teacher-forced one.
  std::size_t k = 0;
  for (const auto& b : data.samples) {
    Graph<float> g(GradMode::kInference);
    const auto greedy = forward_sample(g, *r.model, b, CarryMode::kGreedy);
    for (std::size_t t = 0; t < b.steps.size(); ++t, ++k) {
      const auto& row = greedy.steps[t].scores.value();
      std::vector<double> s(row.data(), row.data() + row.size());
      EXPECT_EQ(eval.records[k].rank, rank_of_truth(s, b.steps[t].truth));
    }
  }
  EXPECT_EQ(k, eval.records.size());
}

TEST(Train, EmptySetsAndBadConfigsAreRejected) {
  const auto data = generate_synthetic(tiny_data(2)).data;
  auto tc = tiny_train();
  EXPECT_THROW(train<float>(tc, 6, 6, std::span<const FeatureBundle>{}, data.samples), ContractError);
  EXPECT_THROW(train<float>(tc, 6, 6, data.samples, std::span<const FeatureBundle>{}), ContractError);
  EXPECT_THROW(train<float>(tc, 7, 6, data.samples, data.samples), ConfigError);
  tc.batch_size = 0;
  EXPECT_THROW(train<float>(tc, 6, 6, data.samples, data.samples), ConfigError);
  tc = tiny_train();
  tc.heads = 4;
  EXPECT_THROW(train<float>(tc, 6, 6, data.samples, data.samples), ConfigError);
}

TEST(Train, NonFiniteLossNamesEpochAndSample) {
  auto data = generate_synthetic(tiny_data(3)).data;
  data.samples[1].V(0, 0) = std::numeric_limits<float>::infinity();
  auto tc = tiny_train();
  try {
    train<float>(tc, 6, 6, data.samples, data.samples);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch 1"), std::string::npos) << what;
    EXPECT_NE(what.find(data.samples[1].id), std::string::npos) << what;
  }
}

TEST(ModelGradCheck, HeadsMustDivideWidth) {
  GradCheckConfig cfg;
  cfg.heads = 3;
  EXPECT_THROW(model_grad_check(cfg), ConfigError);
}

class FullModelGradCheck : public ::testing::TestWithParam<StepVariant> {};

TEST_P(FullModelGradCheck, EveryGroupBelowTolerance) {
  GradCheckConfig cfg;
  cfg.step_variant = GetParam();
  const auto report = model_grad_check(cfg);
  EXPECT_TRUE(report.failure.empty()) << report.failure;
  for (const auto& e : report.by_group()) EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
  EXPECT_TRUE(report.passed(1e-4));
}

INSTANTIATE_TEST_SUITE_P(Variants, FullModelGradCheck, ::testing::Values(StepVariant::kGru, StepVariant::kMlp),
                         [](const auto& info) { return to_string(info.param); });

}  // namespace
}  // namespace aqtc

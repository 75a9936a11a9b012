#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ocrcap/error.hpp"
#include "ocrcap/gradcheck.hpp"
#include "ocrcap/training.hpp"
#include "support.hpp"

using namespace ocrcap;

TEST(LrSchedule, AnnealsEveryThreeEpochs) {
  const TrainConfig c = TrainConfig::paper(Variant::pointer);
  EXPECT_DOUBLE_EQ(lr_schedule(0, c), 2e-5);
  EXPECT_DOUBLE_EQ(lr_schedule(2, c), 2e-5);
  EXPECT_NEAR(lr_schedule(3, c), 1.6e-5, 1e-18);
  EXPECT_NEAR(lr_schedule(7, c), 1.28e-5, 1e-18);
}

TEST(Presets, EpochCountsAndRates) {
  EXPECT_EQ(TrainConfig::paper(Variant::baseline).epochs, 10u);
  EXPECT_EQ(TrainConfig::paper(Variant::extended).epochs, 15u);
  EXPECT_EQ(TrainConfig::paper(Variant::pointer).epochs, 15u);
  EXPECT_DOUBLE_EQ(TrainConfig::synthetic(Variant::pointer).learning_rate, 5e-3);
  TrainConfig bad = TrainConfig::synthetic(Variant::pointer);
  bad.anneal_factor = 1.5;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = TrainConfig::synthetic(Variant::pointer);
  bad.epochs = 0;
  EXPECT_THROW(bad.validate(), ContractError);
}

namespace {

ExtendedDistribution row(std::vector<double> p, std::size_t fixed) {
  return {Tensor::row(std::move(p)), fixed};
}

}  // namespace

TEST(SequenceLoss, UniformOverSixTokensTwoSteps) {
  const std::vector<ExtendedDistribution> steps = {row(std::vector<double>(6, 1.0 / 6), 6),
                                                   row(std::vector<double>(6, 1.0 / 6), 6)};
  const std::vector<std::size_t> target = {1, 4};
  EXPECT_NEAR(sequence_loss(steps, target).item(), 2 * std::log(6.0), 1e-12);
}

TEST(SequenceLoss, CertainTargetsCostNothing) {
  const std::vector<ExtendedDistribution> steps = {row({0, 1, 0}, 3), row({1, 0, 0}, 3)};
  const std::vector<std::size_t> target = {1, 0};
  EXPECT_DOUBLE_EQ(sequence_loss(steps, target).item(), 0.0);
}

TEST(SequenceLoss, FloorEngagesOnZeroProbability) {
  const std::vector<ExtendedDistribution> steps = {row({1, 0, 0}, 2)};
  const std::vector<std::size_t> target = {2};
  const double loss = sequence_loss(steps, target).item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GE(loss, -std::log(1e-12) - 1e-9);
}

TEST(SequenceLoss, LengthMismatchThrows) {
  const std::vector<ExtendedDistribution> steps = {row({1.0}, 1)};
  const std::vector<std::size_t> target = {0, 0};
  EXPECT_THROW(sequence_loss(steps, target), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Tensor> p = {Tensor::row({0.5, -1.0}, true)};
  const std::vector<std::vector<double>> g = {{0.0, 0.0}};
  AdamState s;
  adam_step(p, g, s, 0.1);
  EXPECT_EQ(p[0].to_vector(), (std::vector<double>{0.5, -1.0}));
}

TEST(Adam, FirstStepMovesAgainstGradientSign) {
  std::vector<Tensor> p = {Tensor::row({1.0, 1.0}, true)};
  const std::vector<std::vector<double>> g = {{0.3, -2.0}};
  AdamState s;
  adam_step(p, g, s, 0.01);
  EXPECT_NEAR(p[0][0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0][1], 1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, TwoStepsMatchReference) {
  std::vector<Tensor> p = {Tensor::scalar(0.5, true)};
  AdamState s;
  const std::vector<std::vector<double>> g1 = {{0.2}}, g2 = {{-0.3}};
  adam_step(p, g1, s, 0.01);
  adam_step(p, g2, s, 0.01);
  EXPECT_NEAR(p[0].item(), oracle::kAdamTwoSteps, 1e-14);
}

TEST(Adam, NonFiniteGradientAbortsBeforeUpdate) {
  std::vector<Tensor> p = {Tensor::row({1.0}, true), Tensor::row({2.0}, true)};
  const std::vector<std::vector<double>> g = {{0.1}, {std::numeric_limits<double>::quiet_NaN()}};
  AdamState s;
  EXPECT_THROW(adam_step(p, g, s, 0.1), NumericalError);
  EXPECT_EQ(p[0].item(), 1.0);
  EXPECT_EQ(s.step, 0u);
}

TEST(Adam, ShapeMismatchThrows) {
  std::vector<Tensor> p = {Tensor::row({1.0, 2.0}, true)};
  const std::vector<std::vector<double>> g = {{0.1}};
  AdamState s;
  EXPECT_THROW(adam_step(p, g, s, 0.1), DimensionError);
}

TEST(ClipGlobalNorm, ScalesOnlyAboveLimit) {
  std::vector<std::vector<double>> g = {{3.0}, {4.0}};
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_EQ(g[1][0], 4.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0][0], 0.6, 1e-15);
  EXPECT_NEAR(g[1][0], 0.8, 1e-15);
}

TEST(Examples, MissingBundleIsDataError) {
  const test::SmallTask task(4);
  Dataset d = task.data();
  d.captions.push_back({"nope", {{"a"}}});
  EXPECT_THROW(make_examples(d), DataError);
  EXPECT_EQ(make_examples(task.data()).size(), 12u);
}

TEST(TeacherForcing, LossGradientMatchesFiniteDifferences) {
  const test::SmallTask task(4);
  ModelConfig mc = task.model(Variant::pointer);
  mc.d_model = 4;
  mc.init_range = 0.5;
  const ModelParams params = ModelParams::initialize(mc);
  const Captioner cap(mc, params, task.vocab);
  const PreparedImage img = cap.prepare(task.synth.bundles[0]);
  const auto target = cap.target_ids(task.synth.captions[0].captions[0], img);
  const auto f = [&] { return teacher_forced_loss(cap, img, target).loss; };
  std::vector<Tensor> checked = {params.pointer.w_context, params.pointer.bias, params.output_weight,
                                 params.attn_query, params.decoder_aoa.gate_query};
  EXPECT_LT(grad_check(f, checked), 1e-4);
}

TEST(Train, ZeroLearningRateLeavesInitialization) {
  const test::SmallTask task(1);
  const ModelConfig mc = task.model(Variant::pointer);
  TrainConfig tc = TrainConfig::synthetic(Variant::pointer);
  tc.epochs = 1;
  tc.learning_rate = 0.0;
  const TrainResult r = train(task.data(), task.vocab, mc, tc);
  const ModelParams init = ModelParams::initialize(mc);
  for (std::size_t i = 0; i < init.tensors().size(); ++i) {
    EXPECT_EQ(r.params.tensors()[i].to_vector(), init.tensors()[i].to_vector());
  }
}

TEST(Train, IsBitReproducible) {
  const test::SmallTask task(8);
  TrainConfig tc = TrainConfig::synthetic(Variant::pointer);
  tc.epochs = 2;
  const auto a = train(task.data(), task.vocab, task.model(Variant::pointer), tc);
  const auto b = train(task.data(), task.vocab, task.model(Variant::pointer), tc);
  ASSERT_EQ(a.log.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(a.log[e].mean_loss, b.log[e].mean_loss);
    EXPECT_EQ(a.log[e].mean_p_gen, b.log[e].mean_p_gen);
  }
  EXPECT_EQ(a.params.tensors().back().to_vector(), b.params.tensors().back().to_vector());
}

TEST(Train, PointerLossDecreasesAndBeatsBaseline) {
  const test::SmallTask task(24);
  TrainConfig tc = TrainConfig::synthetic(Variant::pointer);
  tc.epochs = 8;
  std::size_t callbacks = 0;
  const auto ptr = train(task.data(), task.vocab, task.model(Variant::pointer), tc,
                         [&](const EpochLog&, const ModelParams&) { ++callbacks; });
  EXPECT_EQ(callbacks, 8u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LT(ptr.log[e].mean_loss, ptr.log[e - 1].mean_loss) << e;
  for (const auto& l : ptr.log) {
    ASSERT_TRUE(l.mean_p_gen.has_value());
    EXPECT_GT(*l.mean_p_gen, 0.0);
    EXPECT_LT(*l.mean_p_gen, 1.0);
    EXPECT_GE(l.mean_loss, 0.0);
  }

  TrainConfig bc = tc;
  bc.variant = Variant::baseline;
  const auto base = train(task.data(), task.vocab, task.model(Variant::baseline), bc);
  EXPECT_FALSE(base.log.back().mean_p_gen.has_value());
  // baseline sees <unk> as its target, so compare on the true captions
  const double ptr_nll = evaluation_nll(Captioner(task.model(Variant::pointer), ptr.params, task.vocab), task.data());
  const double base_nll =
      evaluation_nll(Captioner(task.model(Variant::baseline), base.params, task.vocab), task.data());
  EXPECT_GT(base_nll, ptr_nll);
}

TEST(Train, TrainConfigDecidesVariant) {
  const test::SmallTask task(2);
  TrainConfig tc = TrainConfig::synthetic(Variant::pointer);
  tc.epochs = 1;
  const auto r = train(task.data(), task.vocab, task.model(Variant::extended), tc);
  EXPECT_EQ(r.params.parameter_count(), expected_parameter_count(task.model(Variant::pointer)));
  EXPECT_TRUE(r.log.back().mean_p_gen.has_value());
}

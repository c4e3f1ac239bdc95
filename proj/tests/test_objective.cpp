#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "oracles.hpp"
#include "unode/objective/train.hpp"

using namespace unode;

namespace {

AugWeightTable uniform_table() {
  const std::vector<HardAugKind> kinds(kAllHardAugKinds.begin(), kAllHardAugKinds.end());
  return aug_weights(kinds, std::vector<double>(kinds.size(), 0.0));
}

std::vector<double> unit(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

// Tags every image with its batch index in pixel (0,0,0) so provenance survives augmentation.
std::vector<ImageSample> tagged_batch(std::size_t b) {
  std::vector<ImageSample> out;
  for (std::size_t i = 0; i < b; ++i) {
    ImageSample img(1, 8, 8, 0.0f);
    img.label = static_cast<std::uint32_t>(i);
    out.push_back(img);
  }
  return out;
}

}  // namespace

TEST(BuildPairs, NegativeCountIsTwoBMinusOne) {
  const auto t = uniform_table();
  for (std::size_t b : {2u, 8u}) {
    const auto cb = build_pairs(fixture::synth({SynthClass::Blobs}, static_cast<std::uint32_t>(b), 1), t, Rng(1));
    ASSERT_EQ(cb.size(), b);
    EXPECT_EQ(cb.positives.size(), b);
    EXPECT_EQ(cb.negatives.size(), 2 * b);
    for (std::size_t i = 0; i < b; ++i) EXPECT_EQ(cb.negatives_of(i).size(), 2 * (b - 1));
  }
}

TEST(BuildPairs, NegativesOfAnchorNeverDeriveFromIt) {
  // Labels ride along through every augmentation; negatives_of(i) must carry no label i.
  const auto batch = tagged_batch(6);
  const auto cb = build_pairs(batch, uniform_table(), Rng(2));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(cb.anchors[i].label, batch[i].label);
    EXPECT_EQ(cb.positives[i].label, batch[i].label);
    for (auto k : cb.negatives_of(i)) EXPECT_NE(cb.negatives[k].label, batch[i].label);
  }
}

TEST(BuildPairs, SingleSampleBatchThrows) {
  EXPECT_THROW(build_pairs(fixture::synth({SynthClass::Blobs}, 1, 1), uniform_table(), Rng(1)), UsageError);
}

TEST(BuildPairs, DeterministicWithIndependentViews) {
  const auto batch = fixture::synth({SynthClass::OrientedBars}, 4, 3);
  const auto a = build_pairs(batch, uniform_table(), Rng(3)), b = build_pairs(batch, uniform_table(), Rng(3));
  EXPECT_EQ(a.views(), b.views());
  EXPECT_EQ(a.composition, b.composition);
  std::size_t same = 0;
  for (std::size_t i = 0; i < 4; ++i) same += a.anchors[i] == a.positives[i] ? 1 : 0;
  EXPECT_LT(same, 4u);
}

TEST(ContrastiveTerm, Examples) {
  const std::vector<double> e1{1, 0}, neg{-1, 0}, e2{0, 1};
  EXPECT_NEAR(contrastive_term(e1, {e1}, {neg}), std::log1p(std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(contrastive_term(e1, {e1}, {neg}), 0.126928, 1e-6);
  EXPECT_EQ(contrastive_term(e1, {e1, e2}, {}), 0.0);
  EXPECT_NEAR(contrastive_term(e1, {e2}, {e2}), std::log(2.0), 1e-15);
  EXPECT_THROW(contrastive_term(e1, {}, {neg}), UsageError);
}

TEST(ContrastiveTerm, RotationInvariantAndMonotoneInNegatives) {
  Rng r(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::vector<double>> v(4);
    for (auto& x : v) x = unit({r.normal(), r.normal(), r.normal()});
    const double th = r.uniform(0, 6.28);
    auto rot = [&](const std::vector<double>& x) {
      return std::vector<double>{std::cos(th) * x[0] - std::sin(th) * x[1], std::sin(th) * x[0] + std::cos(th) * x[1], x[2]};
    };
    std::vector<std::vector<double>> w;
    for (auto& x : v) w.push_back(rot(x));
    const double a = contrastive_term(v[0], {v[1]}, {v[2], v[3]}), b = contrastive_term(w[0], {w[1]}, {w[2], w[3]});
    EXPECT_NEAR(a, b, 1e-12);
    // Moving a negative toward the anchor strictly increases the loss.
    std::vector<double> closer(3);
    for (int k = 0; k < 3; ++k) closer[k] = 0.5 * v[2][k] + 0.5 * v[0][k];
    closer = unit(closer);
    EXPECT_GT(contrastive_term(v[0], {v[1]}, {closer, v[3]}), a);
  }
}

TEST(BatchContrastive, ClosedFormForAlignedViewsAndOpposedNegatives) {
  for (std::size_t b : {2u, 5u}) {
    std::vector<double> z(4 * b * 3, 0.0);
    for (std::size_t r = 0; r < 4 * b; ++r) z[r * 3] = r < 2 * b ? 1.0 : -1.0;
    const auto loss = batch_contrastive(Tensor<double>::from({4 * b, 3}, z), b);
    const std::vector<double> e1{1, 0, 0}, neg{-1, 0, 0};
    const std::vector<std::span<const double>> negs(2 * (b - 1), std::span<const double>(neg));
    const double term = contrastive_term(e1, {e1}, negs);
    EXPECT_NEAR(loss.item(), 2.0 * term, 1e-12);
  }
}

TEST(BatchContrastive, MatchesPerAnchorSum) {
  Rng r(5);
  const std::size_t b = 4, d = 5;
  std::vector<double> z(4 * b * d);
  for (std::size_t i = 0; i < 4 * b; ++i) {
    std::vector<double> row(d);
    for (auto& x : row) x = r.normal();
    row = unit(row);
    std::copy(row.begin(), row.end(), z.begin() + i * d);
  }
  auto row = [&](std::size_t i) { return std::span<const double>(z.data() + i * d, d); };
  ContrastiveBatch shape;
  shape.anchors.resize(b);
  double ref = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::span<const double>> negs;
    for (auto k : shape.negatives_of(i)) negs.push_back(row(2 * b + k));
    ref += contrastive_term(row(i), {row(b + i)}, negs) + contrastive_term(row(b + i), {row(i)}, negs);
  }
  EXPECT_NEAR(batch_contrastive(Tensor<double>::from({4 * b, d}, z), b).item(), ref / b, 1e-12);
}

TEST(CeLoss, UniformHeadGivesTwoLnTwo) {
  const Model<float> m(fixture::tiny_config(), 6);
  fixture::set_param(m, "head.w", {0.0});
  fixture::set_param(m, "head.b", {0.0});
  const auto in = fixture::synth({SynthClass::Rings}, 4, 6), neg = fixture::synth({SynthClass::Checker}, 4, 6);
  EXPECT_NEAR(ce_loss(m, in, neg).item(), 2.0 * std::log(2.0), 1e-6);
}

TEST(CeLoss, ConfidentCorrectHeadGivesZero) {
  const auto m = Model<float>(fixture::tiny_config(), 7).cast<double>();
  std::vector<double> w(8 * 2, 0.0);
  w[0] = 50.0;  // feature 0 drives the inlier logit up and the outlier logit down
  w[1] = -50.0;
  fixture::set_param(m, "head.w", w);
  fixture::set_param(m, "head.b", {0.0});
  std::vector<double> fi(3 * 8, 0.0), fn(3 * 8, 0.0);
  for (int i = 0; i < 3; ++i) fi[i * 8] = 1.0, fn[i * 8] = -1.0;
  const double loss = ce_loss(m, Tensor<double>::from({3, 8}, fi), Tensor<double>::from({3, 8}, fn)).item();
  EXPECT_GE(loss, 0.0);
  EXPECT_LT(loss, 1e-40);
}

TEST(CeLoss, HeadModeMismatchThrows) {
  auto cfg = fixture::tiny_config();
  const Model<float> bin(cfg, 8);
  const auto in = fixture::synth({SynthClass::Rings}, 2, 8);
  const std::vector<std::uint32_t> labels{0, 1};
  EXPECT_THROW(ce_loss(bin, in, in, labels), UsageError);
  cfg.head = HeadKind::NClass;
  cfg.n_classes = 3;
  const Model<float> nc(cfg, 8);
  EXPECT_THROW(ce_loss(nc, in, in), UsageError);
}

TEST(CeLoss, LabeledNegativesGetUniformTargets) {
  auto cfg = fixture::tiny_config();
  cfg.head = HeadKind::NClass;
  cfg.n_classes = 4;
  const std::vector<std::uint32_t> labels{2};
  const auto t = ce_targets(cfg, 1, 2, labels);
  EXPECT_EQ(t, (std::vector<double>{0, 0, 1, 0, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25, 0.25}));
}

class LossGradient : public ::testing::TestWithParam<int> {};

TEST_P(LossGradient, ContrastiveCeAndTotalMatchFiniteDifferences) {
  const int k = GetParam();
  Rng r(100 + k);
  auto cfg = fixture::tiny_config(k % 2 ? EncoderKind::Mlp : EncoderKind::Conv);
  std::vector<std::uint32_t> labels;
  if (k % 4 == 3) {
    cfg.head = HeadKind::NClass;
    cfg.n_classes = 3;
    labels = {0, 2, 1, 2};
  }
  const auto m = Model<float>(cfg, r.next_u64()).cast<double>();
  // Zero biases put ReLU inputs exactly on the kink for blank image regions; a random
  // parameterization moves every bias off zero so the check probes differentiable points.
  for (const auto& p : m.named_params())
    if (p.name.ends_with(".b")) {
      auto t = p.value;
      for (auto& v : t.mutable_data()) v = 0.1 * r.normal();
    }
  const auto batch = fixture::synth({SynthClass::OrientedBars, SynthClass::Blobs}, 2, r.next_u64());
  const auto cb = build_pairs(batch, uniform_table(), r.fork(1));
  const double lambda = r.uniform(0.2, 2.0), tau = r.uniform(0.5, 1.5);
  const auto params = m.params();
  // Small step so central differences rarely straddle a ReLU kink; double rounding stays near 1e-9.
  const double h = 1e-7;
  EXPECT_LE(oracle::grad_rel_err(params, [&](const auto&) { return unode_terms(m, cb, lambda, tau, labels).con; }, h), 1e-3);
  EXPECT_LE(oracle::grad_rel_err(params, [&](const auto&) { return unode_terms(m, cb, lambda, tau, labels).ce; }, h), 1e-3);
  EXPECT_LE(oracle::grad_rel_err(params, [&](const auto&) { return unode_terms(m, cb, lambda, tau, labels).total; }, h), 1e-3);
}

INSTANTIATE_TEST_SUITE_P(RandomParameterizations, LossGradient, ::testing::Range(0, 20));

TEST(UnodeLoss, LambdaWeighting) {
  const Model<float> m(fixture::tiny_config(), 9);
  const auto batch = fixture::synth({SynthClass::Rings}, 4, 9);
  const auto l0 = unode_loss(m, batch, uniform_table(), Rng(9), 0.0);
  EXPECT_EQ(l0.total, l0.con);
  const auto l1 = unode_loss(m, batch, uniform_table(), Rng(9), 1.0);
  EXPECT_NEAR(l1.total, l1.con + l1.ce, 1e-6);
  EXPECT_EQ(l1.con, l0.con);
  EXPECT_EQ(l1.lambda_loss, 1.0f);
  const auto l3 = unode_loss(m, batch, uniform_table(), Rng(9), 3.0);
  EXPECT_NEAR(l3.total, l3.con + 3.0f * l3.ce, 1e-5);
}

TEST(UnodeLoss, SharedGammaFeedsBothTerms) {
  // The CE negatives are the t(Gamma(x_j)) rows used as contrastive negatives.
  const Model<float> m(fixture::tiny_config(), 10);
  const auto batch = fixture::synth({SynthClass::Rings}, 3, 10);
  const auto cb = build_pairs(batch, uniform_table(), Rng(10));
  std::vector<ImageSample> neg;
  for (std::size_t j = 0; j < 3; ++j) neg.push_back(cb.negatives[2 * j]);
  NoGradGuard g;
  EXPECT_NEAR(unode_terms(m, cb, 1.0).ce.item(), ce_loss(m, cb.anchors, neg).item(), 1e-6);
}

TEST(Train, FiftyStepsReduceFixedBatchLoss) {
  const auto data = fixture::synth({SynthClass::OrientedBars}, 320, 11, 16);  // 10 steps per epoch
  ModelConfig cfg;
  const Model<float> init(cfg, 11);
  Model<float> m = init;
  OptimConfig oc;
  oc.warmup_epochs = 0;
  oc.total_epochs = 5;
  OptimState<float> st(oc);
  TrainConfig tc;
  tc.seed = 11;
  const auto table = uniform_table();
  const std::vector<ImageSample> probe(data.begin(), data.begin() + 32);
  // The loss on one fixed batch with fixed augmentation randomness is the tracked objective.
  auto probe_loss = [&] { return unode_loss(m, probe, table, Rng(12), 1.0).total; };
  std::vector<float> trace{probe_loss()};
  train_model(m, st, data, table, tc, 0, [&](const StepLog&) { trace.push_back(probe_loss()); });
  ASSERT_EQ(trace.size(), 51u);
  int down = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) down += trace[i] < trace[i - 1] ? 1 : 0;
  EXPECT_GE(down, 40) << "decreasing steps";
  EXPECT_LT(trace.back(), trace.front());
}

TEST(Train, SameSeedIsBitIdenticalForHundredSteps) {
  const auto data = fixture::synth({SynthClass::Rings}, 200, 13);
  auto run = [&] {
    Model<float> m(fixture::tiny_config(), 13);
    OptimConfig oc;
    oc.total_epochs = 17;  // 6 steps per epoch at B=32 -> 102 steps
    OptimState<float> st(oc);
    TrainConfig tc;
    tc.seed = 13;
    const auto logs = train_model(m, st, data, uniform_table(), tc);
    std::vector<float> out;
    for (const auto& l : logs) out.insert(out.end(), {l.loss.con, l.loss.ce, l.loss.total});
    for (float v : m.param("head.w").data()) out.push_back(v);
    return out;
  };
  const auto a = run(), b = run();
  ASSERT_GE(a.size(), 300u);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)), 0);
  EXPECT_EQ(a.size(), b.size());
}

TEST(Train, ResumeContinuesBitIdentically) {
  const auto data = fixture::synth({SynthClass::Blobs}, 96, 14);
  OptimConfig oc;
  oc.warmup_epochs = 1;
  oc.total_epochs = 4;
  TrainConfig tc;
  tc.seed = 14;
  Model<float> full(fixture::tiny_config(), 14);
  OptimState<float> sf(oc);
  const auto all = train_model(full, sf, data, uniform_table(), tc);

  Model<float> part(fixture::tiny_config(), 14);
  OptimState<float> sp(oc);
  tc.stop_epoch = 2;
  const auto first = train_model(part, sp, data, uniform_table(), tc);
  tc.stop_epoch = 0;
  const auto rest = train_model(part, sp, data, uniform_table(), tc, first.back().step + 1);
  ASSERT_EQ(first.size() + rest.size(), all.size());
  EXPECT_EQ(rest.front().step, first.back().step + 1);
  for (std::size_t i = 0; i < rest.size(); ++i) EXPECT_EQ(rest[i].loss.total, all[first.size() + i].loss.total);
  for (const auto& p : full.named_params())
    EXPECT_TRUE(std::equal(p.value.data().begin(), p.value.data().end(), part.param(p.name).data().begin()));
}

TEST(Train, StepsPerEpochDropsIncompleteBatch) {
  EXPECT_EQ(steps_per_epoch(100, 32), 3u);
  EXPECT_THROW(steps_per_epoch(10, 32), DataError);
  EXPECT_THROW(steps_per_epoch(10, 1), UsageError);
}

TEST(Train, LossCsvHasOneRowPerStep) {
  std::vector<StepLog> logs(5);
  const auto csv = loss_log_csv(logs);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,epoch,lr,con,ce,total");
}

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "unode/core/normal.hpp"
#include "unode/core/optim.hpp"
#include "unode/core/rng.hpp"

using namespace unode;
using T = Tensor<double>;

namespace {

T rand_tensor(Shape shape, Rng& rng, bool rg = true, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return T::from(std::move(shape), std::move(v), rg);
}

// Scalar probe: sum(out * w) with fixed random weights.
T probe(const T& out, std::uint64_t seed) {
  Rng r(seed, 99);
  return sum(mul(out, rand_tensor(out.shape(), r, false)));
}

}  // namespace

TEST(Backward, SquareAtThreeHasGradSix) {
  auto x = T::scalar(3.0, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, ConstantHasZeroGrad) {
  auto x = T::scalar(3.0, true);
  auto c = T::scalar(5.0, false);
  backward(add(scale(x, 0.0), c));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Backward, NonScalarLossThrows) {
  auto x = T::from({2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(x), UsageError);
}

TEST(Backward, SoftmaxDotMatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = rand_tensor({1, 6}, rng);
    auto w = rand_tensor({1, 6}, rng, false);
    const double err = oracle::grad_rel_err({x}, [&](const auto& in) { return sum(mul(softmax_rows(in[0]), w)); }, 1e-3);
    EXPECT_LE(err, 1e-4);
  }
}

TEST(Backward, SharedSubgraphAccumulates) {
  auto x = T::scalar(2.0, true);
  auto y = mul(x, x);
  backward(add(y, y));  // 2x^2 -> 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(NoGrad, GuardSuppressesGraph) {
  auto x = T::scalar(2.0, true);
  {
    NoGradGuard g;
    EXPECT_FALSE(mul(x, x).requires_grad());
  }
  EXPECT_TRUE(mul(x, x).requires_grad());
}

// Every differentiable op against central differences.
struct OpCase {
  const char* name;
  std::vector<Shape> shapes;
  std::function<T(const std::vector<T>&)> f;
  bool positive = false;
};

class OpGradient : public ::testing::TestWithParam<int> {};

static std::vector<OpCase> op_cases() {
  const std::vector<std::uint8_t> pos{1, 0, 0, 0, 1, 0}, valid{1, 1, 1, 1, 1, 0};
  static const std::vector<double> targets{0.2, 0.8, 1.0, 0.0, 0.5, 0.5};
  return {
      {"add", {{3, 4}, {3, 4}}, [](const auto& a) { return probe(add(a[0], a[1]), 1); }},
      {"sub", {{3, 4}, {3, 4}}, [](const auto& a) { return probe(sub(a[0], a[1]), 2); }},
      {"mul", {{3, 4}, {3, 4}}, [](const auto& a) { return probe(mul(a[0], a[1]), 3); }},
      {"scale", {{5}}, [](const auto& a) { return probe(scale(a[0], 2.5), 4); }},
      {"exp", {{5}}, [](const auto& a) { return probe(exp(a[0]), 5); }},
      {"log", {{5}}, [](const auto& a) { return probe(log(a[0]), 6); }, true},
      {"relu", {{12}}, [](const auto& a) { return probe(relu(a[0]), 7); }},
      {"sum", {{3, 2}}, [](const auto& a) { return mul(sum(a[0]), sum(a[0])); }},
      {"mean", {{3, 2}}, [](const auto& a) { return mul(mean(a[0]), mean(a[0])); }},
      {"matmul", {{3, 4}, {4, 2}}, [](const auto& a) { return probe(matmul(a[0], a[1]), 8); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](const auto& a) { return probe(matmul_nt(a[0], a[1]), 9); }},
      {"add_rowvec", {{3, 4}, {4}}, [](const auto& a) { return probe(add_rowvec(a[0], a[1]), 10); }},
      {"softmax_rows", {{3, 5}}, [](const auto& a) { return probe(softmax_rows(a[0]), 11); }},
      {"log_softmax_rows", {{3, 5}}, [](const auto& a) { return probe(log_softmax_rows(a[0]), 12); }},
      {"row_norms", {{3, 5}}, [](const auto& a) { return probe(row_norms(a[0]), 13); }},
      {"l2_normalize_rows", {{3, 5}}, [](const auto& a) { return probe(l2_normalize_rows(a[0]), 14); }},
      {"slice_rows", {{5, 3}}, [](const auto& a) { return probe(slice_rows(a[0], 1, 4), 15); }},
      {"concat_rows", {{2, 3}, {3, 3}}, [](const auto& a) { return probe(concat_rows<double>({a[0], a[1]}), 16); }},
      {"reshape", {{2, 6}}, [](const auto& a) { return probe(reshape(a[0], {3, 4}), 17); }},
      {"conv2d", {{2, 2, 5, 5}, {3, 2, 3, 3}, {3}},
       [](const auto& a) { return probe(conv2d(a[0], a[1], a[2], 2, 1), 18); }},
      {"conv2d_nobias", {{1, 1, 6, 6}, {2, 1, 3, 3}}, [](const auto& a) { return probe(conv2d(a[0], a[1], T{}, 1, 0), 19); }},
      {"global_avg_pool", {{2, 3, 4, 4}}, [](const auto& a) { return probe(global_avg_pool(a[0]), 20); }},
      {"masked_nce", {{2, 3}}, [=](const auto& a) { return masked_nce(a[0], pos, valid, 0.7, 0.5); }},
      {"soft_cross_entropy", {{3, 2}}, [](const auto& a) { return soft_cross_entropy(a[0], targets, 1.0 / 3); }},
  };
}

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const auto c = op_cases().at(static_cast<std::size_t>(GetParam()));
  SCOPED_TRACE(c.name);
  Rng rng(1000 + GetParam());
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<T> in;
    for (const auto& s : c.shapes) {
      auto t = rand_tensor(s, rng);
      if (c.positive)
        for (auto& v : t.mutable_data()) v = 0.5 + std::abs(v);
      in.push_back(t);
    }
    EXPECT_LE(oracle::grad_rel_err(in, c.f), 1e-4) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, static_cast<int>(op_cases().size())),
                         [](const auto& info) { return std::string(op_cases().at(info.param).name); });

TEST(Ops, ShapeMismatchThrows) {
  auto a = T::zeros({2, 3}), b = T::zeros({3, 2});
  EXPECT_THROW(add(a, b), UsageError);
  EXPECT_THROW(matmul(a, a), UsageError);
}

TEST(Ops, ConvMatchesDirectLoop) {
  Rng rng(3);
  auto x = rand_tensor({1, 2, 5, 5}, rng, false);
  auto w = rand_tensor({3, 2, 3, 3}, rng, false);
  auto b = rand_tensor({3}, rng, false);
  const auto y = conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  for (int o = 0; o < 3; ++o)
    for (int oy = 0; oy < 3; ++oy)
      for (int ox = 0; ox < 3; ++ox) {
        double s = b.data()[o];
        for (int c = 0; c < 2; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || ix < 0 || iy >= 5 || ix >= 5) continue;
              s += x.data()[(c * 5 + iy) * 5 + ix] * w.data()[((o * 2 + c) * 3 + ky) * 3 + kx];
            }
        EXPECT_NEAR(y.data()[(o * 3 + oy) * 3 + ox], s, 1e-12);
      }
}

TEST(NormalCdf, ZeroIsHalf) { EXPECT_EQ(std_normal_cdf(0.0), 0.5); }

TEST(NormalCdf, TwoMatchesIntegrationOracle) {
  const double ref = static_cast<double>(oracle::phi(2.0L));
  EXPECT_NEAR(ref, 0.9772499, 1e-7);
  EXPECT_NEAR(std_normal_cdf(2.0), ref, 1e-7);
}

TEST(NormalCdf, GridAgainstOracleSymmetryAndMonotone) {
  double prev = 0.0;
  for (int i = -600; i <= 600; ++i) {
    const double x = i / 100.0;
    const double v = std_normal_cdf(x);
    EXPECT_NEAR(v, static_cast<double>(oracle::phi(x, 4000)), 1e-7) << x;
    EXPECT_NEAR(v + std_normal_cdf(-x), 1.0, 1e-7) << x;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(NormalCdf, NaNThrows) { EXPECT_THROW(std_normal_cdf(std::nan("")), NumericError); }

TEST(LrSchedule, WarmupEndsAtPeak) {
  OptimConfig c;
  c.lr_peak = 0.3;
  c.warmup_epochs = 2;
  c.total_epochs = 11;
  EXPECT_DOUBLE_EQ(lr_at(c, 9, 5), 0.3);
  EXPECT_DOUBLE_EQ(lr_at(c, 0, 5), 0.3 / 10);
}

TEST(LrSchedule, MidDecayIsHalfPeak) {
  OptimConfig c;
  c.lr_peak = 0.3;
  c.warmup_epochs = 2;
  c.total_epochs = 11;  // 45 decay steps: t_frac = (32 - 10) / 44 = 0.5
  EXPECT_NEAR(lr_at(c, 32, 5), 0.15, 1e-12);
}

TEST(LrSchedule, FinalStepNearZeroAndNonnegative) {
  OptimConfig c;
  c.lr_peak = 2.0;
  c.warmup_epochs = 3;
  c.total_epochs = 17;
  const std::uint64_t spe = 7, total = 17 * spe;
  EXPECT_LE(lr_at(c, total - 1, spe), 1e-6 * c.lr_peak);
  for (std::uint64_t s = 0; s < total; ++s) EXPECT_GE(lr_at(c, s, spe), 0.0);
  EXPECT_THROW(lr_at(c, total, spe), UsageError);
}

TEST(Optim, ZeroGradZeroMomentumLeavesParams) {
  for (auto kind : {OptimKind::SgdMomentum, OptimKind::Lars}) {
    OptimConfig c;
    c.kind = kind;
    c.weight_decay = 0.0;
    OptimState<double> st(c);
    std::vector<T> p{T::from({3}, {1.0, -2.0, 0.5}, true)};
    p[0].zero_grad();
    optim_step(st, std::span<T>(p), 0.5);
    EXPECT_EQ(std::vector<double>(p[0].data().begin(), p[0].data().end()), (std::vector<double>{1.0, -2.0, 0.5}));
  }
}

TEST(Optim, SgdHandStepOnSquare) {
  OptimConfig c;
  c.kind = OptimKind::SgdMomentum;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  OptimState<double> st(c);
  std::vector<T> p{T::scalar(1.0, true)};
  p[0].zero_grad();
  backward(mul(p[0], p[0]));
  optim_step(st, std::span<T>(p), 0.1);
  EXPECT_DOUBLE_EQ(p[0].item(), 0.8);
}

TEST(Optim, LarsUnitTrustRatioEqualsSgd) {
  auto run = [](OptimKind kind) {
    OptimConfig c;
    c.kind = kind;
    c.momentum = 0.0;
    c.weight_decay = 0.0;
    c.trust_coefficient = 1.0;
    OptimState<double> st(c);
    std::vector<T> p{T::from({2}, {3.0, 4.0}, true)};
    auto g = p[0].mutable_grad();
    g[0] = 0.0;  // |g| = |w| = 5
    g[1] = -5.0;
    optim_step(st, std::span<T>(p), 0.1);
    return std::vector<double>(p[0].data().begin(), p[0].data().end());
  };
  const auto lars = run(OptimKind::Lars), sgd = run(OptimKind::SgdMomentum);
  EXPECT_NEAR(lars[0], sgd[0], 1e-15);
  EXPECT_NEAR(lars[1], sgd[1], 1e-15);
  EXPECT_NEAR(sgd[1], 4.5, 1e-15);
}

TEST(Optim, MissingGradThrows) {
  OptimState<double> st;
  std::vector<T> p{T::scalar(1.0, true)};
  EXPECT_THROW(optim_step(st, std::span<T>(p), 0.1), UsageError);
}

TEST(Rng, SameTripleSameValue) {
  Rng a(42, 7, 3), b(42, 7, 3);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_EQ(Rng(42, 7).block_at(3), Rng(42, 7, 3).block_at(3));
  EXPECT_NE(Rng(42, 7).next_u64(), Rng(43, 7).next_u64());
}

TEST(Rng, ForkIsReproducibleAndDistinct) {
  const Rng root(5);
  EXPECT_EQ(root.fork(1).stream_id(), root.fork(1).stream_id());
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 1000; ++k) firsts.insert(root.fork(k).next_u64());
  EXPECT_EQ(firsts.size(), 1000u);
}

TEST(Rng, ForkedStreamsUncorrelated) {
  const Rng root(9);
  Rng a = root.fork(0), b = root.fork(1);
  const int n = 100000;
  double sab = 0.0;
  for (int i = 0; i < n; ++i) sab += (a.uniform() - 0.5) * (b.uniform() - 0.5);
  // Var of each product is 1/144; correlation estimate within 4 sigma of 0.
  EXPECT_LE(std::abs(sab / n), 4.0 * std::sqrt(1.0 / 144.0 / n));
}

TEST(Rng, BelowIsUnbiasedChiSquare) {
  Rng r(11);
  const int k = 7, n = 70000;
  std::vector<int> counts(k, 0);
  for (int i = 0; i < n; ++i) ++counts[r.below(k)];
  double chi = 0.0;
  for (int c : counts) chi += (c - n / k) * double(c - n / k) / (n / k);
  EXPECT_LT(chi, 22.46);  // chi-square(6) upper 0.001 quantile
}

TEST(Rng, NormalSampleMeanWithinFourSigma) {
  Rng r(13);
  const std::vector<double> mean{1.5, -2.0, 0.25};
  const int n = 1000000;
  std::vector<double> acc(3, 0.0);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) acc[d] += r.normal(mean[d], 1.0);
  for (int d = 0; d < 3; ++d) EXPECT_LE(std::abs(acc[d] / n - mean[d]), 4.0 / std::sqrt(double(n)));
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(17);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  std::vector<int> s = v;
  std::sort(s.begin(), s.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(s[i], i);
}

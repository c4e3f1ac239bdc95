#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "unode/eval/synth.hpp"
#include "unode/select/composition.hpp"
#include "unode/select/selector.hpp"

using namespace unode;

namespace {

EmbeddingMatrix gaussian_rows(std::uint32_t n, std::uint32_t d, Rng rng, double offset = 0.0) {
  EmbeddingMatrix m{n, d, std::vector<float>(std::size_t{n} * d)};
  for (auto& v : m.values) v = static_cast<float>(offset + rng.normal());
  return m;
}

// Mean silhouette coefficient of 1-D points with two labeled clusters.
double silhouette_1d(const std::vector<float>& y, const std::vector<int>& label) {
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double same = 0.0, other = 0.0;
    std::size_t ns = 0, no = 0;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (i == j) continue;
      const double d = std::abs(static_cast<double>(y[i]) - y[j]);
      (label[i] == label[j] ? (++ns, same) : (++no, other)) += d;
    }
    const double a = same / ns, b = other / no;
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(y.size());
}

Density from_probs(std::vector<double> probs) {
  Density d;
  d.probs = std::move(probs);
  d.bin_edges = uniform_edges(0.0, 1.0, d.probs.size());
  return d;
}

Density random_density(Rng& rng, std::size_t bins) {
  std::vector<float> coords(200);
  for (auto& c : coords) c = static_cast<float>(std::pow(rng.uniform(), 1.0 + 3.0 * rng.uniform()));
  const auto edges = uniform_edges(0.0, 1.0, bins);
  return density(coords, edges, 1e-6);
}

std::vector<ImageSample> synth_class(SynthClass cls, std::uint32_t n, std::uint64_t seed) {
  SynthSpec spec;
  spec.classes = {cls};
  spec.n_per_class = n;
  spec.seed = seed;
  return gen_synth(spec);
}

}  // namespace

TEST(Embed, FlattenRowIsPixels) {
  ImageSample img(1, 2, 2);
  img.pixels = {0.1f, 0.2f, 0.3f, 0.4f};
  const auto m = embed(std::vector<ImageSample>{img}, flatten_extractor());
  EXPECT_EQ(m.n, 1u);
  EXPECT_EQ(m.values, (std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f}));
}

TEST(Embed, IdenticalImagesIdenticalRows) {
  const auto imgs = synth_class(SynthClass::Rings, 1, 1);
  const std::vector<ImageSample> two{imgs[0], imgs[0]};
  const auto m = embed(two, flatten_extractor());
  EXPECT_TRUE(std::equal(m.row(0).begin(), m.row(0).end(), m.row(1).begin()));
}

TEST(Embed, EmptyListThrows) { EXPECT_THROW(embed({}, flatten_extractor()), DataError); }

TEST(Embed, FileRoundTripAndPrecomputedExtractor) {
  const auto m = gaussian_rows(7, 3, Rng(1));
  const auto path = (std::filesystem::temp_directory_path() / "unode_test_emb.bin").string();
  save_embeddings(m, path);
  const auto back = load_embeddings(path);
  EXPECT_EQ(back, m);
  const std::vector<ImageSample> imgs(7, ImageSample(1, 1, 1));
  EXPECT_EQ(embed(imgs, precomputed_extractor(back)), m);
  std::filesystem::remove(path);
}

TEST(Tsne, DuplicateRowsLandTogether) {
  auto m = gaussian_rows(30, 5, Rng(2));
  for (std::size_t i = 0; i < 10; ++i)  // rows 20..29 duplicate rows 0..9
    std::copy_n(m.values.begin() + i * 5, 5, m.values.begin() + (20 + i) * 5);
  TsneParams p;
  p.iters = 1000;
  p.perplexity = 5;
  const auto y = tsne1(m, p).coords;
  for (std::size_t i = 0; i < 10; ++i) EXPECT_LE(std::abs(y[i] - y[20 + i]), 1e-3) << i;
}

TEST(Tsne, SeparatedClustersSilhouette) {
  auto a = gaussian_rows(50, 10, Rng(3)), b = gaussian_rows(50, 10, Rng(4), 100.0 / std::sqrt(10.0));
  const std::vector<EmbeddingMatrix> parts{a, b};
  const auto y = tsne1(concat(std::span<const EmbeddingMatrix>(parts)), {}).coords;
  std::vector<int> label(100, 0);
  std::fill(label.begin() + 50, label.end(), 1);
  EXPECT_GT(silhouette_1d(y, label), 0.8);
}

TEST(Tsne, KlTailIsMonotone) {
  TsneParams p;
  p.record_kl = true;
  const auto r = tsne1(gaussian_rows(60, 4, Rng(5)), p);
  ASSERT_EQ(r.kl_trace.size(), p.iters);
  // At convergence the objective is flat; allow summation rounding (1e-12 relative), not ascent.
  for (std::size_t i = r.kl_trace.size() - 100; i < r.kl_trace.size(); ++i)
    EXPECT_LE(r.kl_trace[i], r.kl_trace[i - 1] * (1.0 + 1e-12)) << i;
  EXPECT_LT(r.kl_trace.back(), r.kl_trace[p.exaggeration_iters]);
}

TEST(Tsne, DeterministicAndValidated) {
  const auto m = gaussian_rows(20, 3, Rng(6));
  EXPECT_EQ(tsne1(m, {}).coords, tsne1(m, {}).coords);
  EXPECT_THROW(tsne1(gaussian_rows(7, 3, Rng(6)), {}), DataError);
  TsneParams p;
  p.iters = 0;
  EXPECT_THROW(tsne1(m, p), UsageError);
}

TEST(Density, SingleBinWithoutSmoothing) {
  const std::vector<float> coords{0.1f, 0.15f, 0.2f};
  const auto d = density(coords, uniform_edges(0.0, 1.0, 4), 0.0);
  EXPECT_EQ(d.probs, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
}

TEST(Density, UniformCoordsWithinMultinomialCi) {
  Rng r(7);
  const int n = 100000;
  std::vector<float> coords(n);
  for (auto& c : coords) c = static_cast<float>(r.uniform());
  const auto d = density(coords, uniform_edges(0.0, 1.0, 4));
  for (double p : d.probs) EXPECT_LE(std::abs(p - 0.25), 3.0 * std::sqrt(0.25 * 0.75 / n));
}

TEST(Density, SmoothedSumsToOneAndPositive) {
  Rng r(8);
  for (int t = 0; t < 200; ++t) {
    const auto d = random_density(r, 1 + r.below(64) + 1);
    EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-6);
    for (double p : d.probs) EXPECT_GT(p, 0.0);
  }
}

TEST(Density, OutOfRangeClampsToEndBins) {
  const std::vector<float> coords{-5.0f, 5.0f};
  const auto d = density(coords, uniform_edges(0.0, 1.0, 2), 0.0);
  EXPECT_EQ(d.probs, (std::vector<double>{0.5, 0.5}));
}

TEST(Divergence, WorkedPair) {
  const auto p = from_probs({0.5, 0.5}), q = from_probs({0.9, 0.1});
  const long double ref_pq = 0.5L * std::log(0.5L / 0.9L) + 0.5L * std::log(0.5L / 0.1L);
  const long double ref_qp = 0.9L * std::log(0.9L / 0.5L) + 0.1L * std::log(0.1L / 0.5L);
  EXPECT_NEAR(kl_div(p, q), static_cast<double>(ref_pq), 1e-12);
  EXPECT_NEAR(kl_div(p, q), 0.510826, 1e-6);
  EXPECT_NEAR(j_div(p, q), static_cast<double>(ref_pq + ref_qp), 1e-12);
  EXPECT_NEAR(j_div(p, q), 0.878890, 1e-6);
}

TEST(Divergence, IdentitiesOnRandomDensities) {
  Rng r(9);
  for (int t = 0; t < 1000; ++t) {
    const auto p = random_density(r, 16), q = random_density(r, 16);
    EXPECT_EQ(kl_div(p, p), 0.0);
    EXPECT_EQ(j_div(p, p), 0.0);
    EXPECT_GE(kl_div(p, q), 0.0);
    EXPECT_EQ(j_div(p, q), j_div(q, p));
  }
}

TEST(Divergence, MismatchedEdgesThrow) {
  const auto p = from_probs({0.5, 0.5});
  auto q = from_probs({0.5, 0.5});
  q.bin_edges[1] = 0.25;
  EXPECT_THROW(kl_div(p, q), UsageError);
}

TEST(AugWeights, Examples) {
  const std::vector<HardAugKind> k3{HardAugKind::Rotate90, HardAugKind::Blur, HardAugKind::Sobel};
  for (double w : aug_weights(k3, std::vector<double>{0, 0, 0}).weights) EXPECT_NEAR(w, 1.0 / 3, 1e-15);
  const auto t = aug_weights({HardAugKind::Rotate90, HardAugKind::Blur}, std::vector<double>{std::log(2.0), 0.0});
  EXPECT_NEAR(t.weights[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(t.weights[1], 1.0 / 3, 1e-15);
  EXPECT_THROW(aug_weights({}, std::vector<double>{}), UsageError);
}

TEST(AugWeights, ShiftInvariantOrderPreservingAndNormalized) {
  Rng r(10);
  const std::vector<HardAugKind> kinds(kAllHardAugKinds.begin(), kAllHardAugKinds.end());
  for (int t = 0; t < 100; ++t) {
    std::vector<double> j(kinds.size()), js(kinds.size());
    const double c = r.uniform(-50, 50);
    for (std::size_t k = 0; k < j.size(); ++k) js[k] = (j[k] = r.uniform(0, 5)) + c;
    const auto a = aug_weights(kinds, j), b = aug_weights(kinds, js);
    EXPECT_NEAR(std::accumulate(a.weights.begin(), a.weights.end(), 0.0), 1.0, 1e-12);
    for (std::size_t k = 0; k < j.size(); ++k) {
      EXPECT_NEAR(a.weights[k], b.weights[k], 1e-12);
      for (std::size_t m = 0; m < j.size(); ++m)
        if (j[k] < j[m]) EXPECT_LT(a.weights[k], a.weights[m]);
    }
  }
}

TEST(AugWeights, CsvRoundTrip) {
  const auto t = aug_weights({HardAugKind::Rotate90, HardAugKind::MixUp}, std::vector<double>{0.25, 1.5});
  const auto back = parse_weight_table_csv(weight_table_csv(t));
  EXPECT_EQ(back.kinds, t.kinds);
  EXPECT_EQ(weight_table_csv(back), weight_table_csv(t));
}

TEST(Composition, DegenerateWeightsPickKindZero) {
  AugWeightTable t{{HardAugKind::Rotate90, HardAugKind::Blur, HardAugKind::Sobel}, {0, 0, 0}, {1, 0, 0}};
  Rng r(11);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_composition(t, r, 1).kinds, std::vector<HardAugKind>{HardAugKind::Rotate90});
}

TEST(Composition, FirstKindUniformUnderUniformWeights) {
  const std::vector<HardAugKind> kinds(kAllHardAugKinds.begin(), kAllHardAugKinds.end());
  const auto t = aug_weights(kinds, std::vector<double>(kinds.size(), 0.0));
  Rng r(12);
  const int n = 100000;
  std::map<HardAugKind, int> first;
  for (int i = 0; i < n; ++i) ++first[sample_composition(t, r, 3).kinds.front()];
  const double p = 1.0 / kinds.size();
  for (auto k : kinds) EXPECT_LE(std::abs(first[k] / double(n) - p), 3.0 * std::sqrt(p * (1 - p) / n)) << to_string(k);
}

TEST(Composition, LengthUniformChiSquareAndNoDuplicates) {
  const std::vector<HardAugKind> kinds(kAllHardAugKinds.begin(), kAllHardAugKinds.end());
  Rng jr(13);
  std::vector<double> j(kinds.size());
  for (auto& v : j) v = jr.uniform(0, 3);
  const auto t = aug_weights(kinds, j);
  Rng r(14);
  const int n = 100000, rmax = 5;
  std::vector<int> counts(rmax + 1, 0);
  for (int i = 0; i < n; ++i) {
    const auto c = sample_composition(t, r, rmax);
    ++counts[c.kinds.size()];
    EXPECT_EQ(std::set<HardAugKind>(c.kinds.begin(), c.kinds.end()).size(), c.kinds.size());
  }
  double chi = 0.0;
  for (int k = 1; k <= rmax; ++k) chi += std::pow(counts[k] - n / double(rmax), 2) / (n / double(rmax));
  EXPECT_EQ(counts[0], 0);
  EXPECT_LT(chi, 18.47);  // chi-square(4) upper 0.001 quantile
}

TEST(Composition, RMaxOutOfRangeThrows) {
  const auto t = aug_weights({HardAugKind::Rotate90}, std::vector<double>{0.0});
  Rng r(1);
  EXPECT_THROW(sample_composition(t, r, 2), UsageError);
  EXPECT_THROW(sample_composition(t, r, 0), UsageError);
}

TEST(GammaApply, ForcedRotate90RotatesEverySample) {
  const auto batch = synth_class(SynthClass::OrientedBars, 6, 15);
  AugWeightTable t{{HardAugKind::Rotate90, HardAugKind::Blur}, {0, 0}, {1, 0}};
  const auto g = gamma_apply(batch, t, Rng(16), 1);
  ASSERT_EQ(g.composition.kinds, std::vector<HardAugKind>{HardAugKind::Rotate90});
  for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(g.images[i], hard_augment(batch[i], HardAugKind::Rotate90, Rng(0)));
}

TEST(GammaApply, DeterministicAndVaried) {
  const auto batch = synth_class(SynthClass::Blobs, 4, 17);
  const std::vector<HardAugKind> kinds(kAllHardAugKinds.begin(), kAllHardAugKinds.end());
  const auto t = aug_weights(kinds, std::vector<double>(kinds.size(), 0.0));
  const auto a = gamma_apply(batch, t, Rng(18), 3);
  const auto b = gamma_apply(batch, t, Rng(18), 3);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.composition, b.composition);
  std::set<std::vector<HardAugKind>> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(gamma_apply(batch, t, Rng(19).fork(i), 3).composition.kinds);
  EXPECT_GE(seen.size(), 2u);
  for (const auto& img : a.images) EXPECT_TRUE(img.same_shape(batch[0]));
}

TEST(Selector, IdentitySetGetsStrictMinimumWeight) {
  const auto imgs = synth_class(SynthClass::OrientedBars, 500, 20);
  const auto inlier = embed(imgs, flatten_extractor());
  std::vector<EmbeddingMatrix> sets{inlier};  // identity map
  for (auto k : {HardAugKind::Rotate90, HardAugKind::Sobel, HardAugKind::Permute4})
    sets.push_back(embed(augment_set(imgs, k, Rng(21).fork(static_cast<std::uint64_t>(k))), flatten_extractor()));
  SelectionParams p;
  p.tsne.iters = 300;
  const auto s = score_embedding_sets(inlier, sets, p);
  const auto w = softmax_weights(s.j_scores);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-6);
  for (std::size_t k = 1; k < w.size(); ++k) EXPECT_LT(w[0], w[k]);
}

TEST(Selector, PermutingKindsPermutesWeights) {
  const auto imgs = synth_class(SynthClass::OrientedBars, 40, 22);
  const std::vector<HardAugKind> fwd{HardAugKind::Rotate90, HardAugKind::Blur, HardAugKind::CutOut};
  const std::vector<HardAugKind> rev{HardAugKind::CutOut, HardAugKind::Rotate90, HardAugKind::Blur};
  // Precomputed embeddings pin the joint t-SNE input so only the table order changes.
  const auto base = embed(imgs, flatten_extractor());
  std::map<HardAugKind, EmbeddingMatrix> per_kind;
  for (auto k : fwd) per_kind[k] = embed(augment_set(imgs, k, Rng(23).fork(static_cast<std::uint64_t>(k))), flatten_extractor());
  auto weights = [&](const std::vector<HardAugKind>& order) {
    std::vector<EmbeddingMatrix> sets;
    for (auto k : order) sets.push_back(per_kind[k]);
    return aug_weights(order, score_embedding_sets(base, sets, {}).j_scores);
  };
  const auto a = weights(fwd), b = weights(rev);
  // Joint t-SNE sees rows in a different order, so scores agree up to optimizer noise, not bits.
  for (auto k : fwd) EXPECT_NEAR(a.weight_of(k), b.weight_of(k), 0.05) << to_string(k);
  EXPECT_EQ(a.rank_of(HardAugKind::Rotate90), b.rank_of(HardAugKind::Rotate90));
}

TEST(Selector, DirectionalRotationPreference) {
  const std::vector<HardAugKind> kinds(kAllHardAugKinds.begin(), kAllHardAugKinds.end());
  SelectionParams p;
  const auto bars = select_augmentations(synth_class(SynthClass::OrientedBars, 100, 1), kinds, flatten_extractor(), p, Rng(1));
  EXPECT_GT(bars.table.weight_of(HardAugKind::Rotate90), bars.table.weight_of(HardAugKind::GaussianNoise));
  const auto rings = select_augmentations(synth_class(SynthClass::Rings, 100, 1), kinds, flatten_extractor(), p, Rng(1));
  EXPECT_NE(rings.table.rank_of(HardAugKind::Rotate90), 0u);
}

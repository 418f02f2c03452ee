#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "turtle/errors.hpp"
#include "turtle/selection_eval.hpp"
#include "turtle/synth.hpp"

using namespace turtle;

TEST_CASE("hungarian_match on the documented small cases") {
  std::vector<std::vector<long long>> diag{{5, 0}, {0, 5}};
  std::vector<int> perm = hungarian_match(diag);
  CHECK(perm == std::vector<int>{0, 1});
  CHECK(matched_count(diag, perm) == 10);

  std::vector<std::vector<long long>> anti{{0, 5}, {5, 0}};
  perm = hungarian_match(anti);
  CHECK(perm == std::vector<int>{1, 0});
  CHECK(matched_count(anti, perm) == 10);

  // Brute force over both 2-permutations: 3+4=7 beats 1+2=3.
  std::vector<std::vector<long long>> mixed{{3, 1}, {2, 4}};
  perm = hungarian_match(mixed);
  CHECK(perm == std::vector<int>{0, 1});
  CHECK(matched_count(mixed, perm) == 7);
}

TEST_CASE("hungarian_match equals exhaustive search on random matrices") {
  SplitMix64 rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t c = 2 + rng.next_below(5);  // up to 6 classes here
    std::vector<std::vector<long long>> counts(c, std::vector<long long>(c));
    for (auto& row : counts)
      for (auto& v : row) v = static_cast<long long>(rng.next_below(50));
    const long long best = oracle::brute_force_assignment(counts);
    CHECK(matched_count(counts, hungarian_match(counts)) == best);
  }
}

TEST_CASE("clustering_accuracy basics and permutation invariance") {
  std::vector<int> truth{0, 1, 2, 0, 1, 2, 0, 1};
  CHECK(clustering_accuracy(truth, truth, 3).accuracy == doctest::Approx(1.0));

  // Relabeling predictions by a permutation keeps accuracy at 1.
  std::vector<int> relabeled;
  const int perm_map[3] = {2, 0, 1};
  for (int v : truth) relabeled.push_back(perm_map[v]);
  CHECK(clustering_accuracy(relabeled, truth, 3).accuracy == doctest::Approx(1.0));

  // Contingency [[3,1],[2,4]] over 10 samples -> 0.7.
  std::vector<int> pred, gt;
  auto add = [&](int p, int t, int count) {
    for (int i = 0; i < count; ++i) {
      pred.push_back(p);
      gt.push_back(t);
    }
  };
  add(0, 0, 3);
  add(0, 1, 1);
  add(1, 0, 2);
  add(1, 1, 4);
  AccuracyReport rep = clustering_accuracy(pred, gt, 2);
  CHECK(rep.accuracy == doctest::Approx(0.7));
  CHECK(rep.permutation == std::vector<int>{0, 1});
  CHECK(rep.contingency[0][0] == 3);
  CHECK(rep.contingency[1][1] == 4);

  // Permuting truth ids is equally harmless.
  std::vector<int> gt_permuted;
  for (int v : gt) gt_permuted.push_back(perm_map[v]);
  CHECK(clustering_accuracy(pred, gt_permuted, 3).accuracy == doctest::Approx(0.7));

  CHECK_THROWS_AS(clustering_accuracy({0, 1}, {0}, 2), LengthMismatch);
}

TEST_CASE("cross-validation scores ground-truth pseudo-labels highly") {
  SynthSpec spec;
  spec.n_samples = 120;
  spec.n_classes = 3;
  spec.n_views = 2;
  spec.dims = {8, 6};
  spec.separation = 10.0;
  spec.seed = 7;
  SynthResult blobs = synth(spec);
  SplitSpec folds = make_folds(120, 10, 0);
  CVReport rep = cross_validate_task(blobs.dataset, blobs.dataset.labels, folds);
  CHECK(rep.score >= 0.98);
  CHECK(!rep.degenerate);
  CHECK(rep.per_space.size() == 2);
  CHECK(rep.per_fold.size() == 10);
  const double refold =
      std::accumulate(rep.per_fold.begin(), rep.per_fold.end(), 0.0) / 10.0;
  CHECK(rep.score == doctest::Approx(refold).epsilon(1e-12));
}

TEST_CASE("cross-validation scores random pseudo-labels near chance") {
  SynthSpec spec;
  spec.n_samples = 600;
  spec.n_classes = 3;
  spec.n_views = 1;
  spec.dims = {16};
  spec.separation = 10.0;
  spec.seed = 8;
  SynthResult blobs = synth(spec);
  SplitSpec folds = make_folds(600, 10, 1);

  double mean_score = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SplitMix64 rng(900 + seed);
    std::vector<int> random_pseudo(600);
    for (int& v : random_pseudo) v = static_cast<int>(rng.next_below(3));
    mean_score += cross_validate_task(blobs.dataset, random_pseudo, folds).score;
  }
  mean_score /= 5.0;
  CHECK(mean_score <= 0.45);
}

TEST_CASE("constant pseudo-labels score perfectly but are flagged degenerate") {
  SynthSpec spec;
  spec.n_samples = 80;
  spec.n_classes = 3;
  spec.n_views = 1;
  spec.dims = {6};
  spec.separation = 6.0;
  spec.seed = 9;
  SynthResult blobs = synth(spec);
  SplitSpec folds = make_folds(80, 10, 2);
  std::vector<int> constant(80, 1);
  CVReport rep = cross_validate_task(blobs.dataset, constant, folds);
  CHECK(rep.score == doctest::Approx(1.0));
  CHECK(rep.degenerate);
}

TEST_CASE("select_best picks the highest CV score among eligible runs") {
  CHECK(select_best({{0.9, false, false}}) == 0);
  CHECK(select_best({{0.9, false, false}, {0.7, false, false}}) == 0);
  CHECK(select_best({{0.7, false, false}, {0.9, false, false}}) == 1);
  CHECK(select_best({{0.8, false, false}, {0.8, false, false}}) == 0);  // tie -> lowest index
  // Degenerate runs are excluded before the argmax.
  CHECK(select_best({{1.0, true, false}, {0.6, false, false}}) == 1);
  CHECK(select_best({{1.0, false, true}, {0.6, false, false}}) == 1);
  CHECK_THROWS_AS(select_best({{1.0, true, false}, {0.9, false, true}}), AllRunsDegenerate);
}

TEST_CASE("kmeans separates two far blobs and behaves at C=1") {
  SplitMix64 rng(11);
  MultiViewDataset d;
  d.n_classes = 2;
  d.views.push_back({"v", Matrix(100, 2)});
  std::vector<int> truth(100);
  for (std::size_t i = 0; i < 100; ++i) {
    const int cls = i % 2 == 0 ? 0 : 1;
    truth[i] = cls;
    d.views[0].data(i, 0) = (cls == 0 ? 10.0 : -10.0) + rng.next_gaussian();
    d.views[0].data(i, 1) = rng.next_gaussian();
  }
  std::vector<int> labels = kmeans_baseline(d, 2, 3);
  CHECK(clustering_accuracy(labels, truth, 2).accuracy == doctest::Approx(1.0));

  // C=1: every label 0 and inertia equal to total squared deviation.
  KMeansResult one = kmeans(d.views[0].data, 1, 3);
  for (int l : one.labels) CHECK(l == 0);
  std::vector<double> mean(2, 0.0);
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = 0; j < 2; ++j) mean[j] += d.views[0].data(i, j);
  for (double& v : mean) v /= 100.0;
  double total = 0.0;
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double diff = d.views[0].data(i, j) - mean[j];
      total += diff * diff;
    }
  CHECK(one.inertia == doctest::Approx(total).epsilon(1e-9));

  // Inertia never increases across Lloyd iterations.
  KMeansResult full = kmeans(d.views[0].data, 2, 3, 1);
  for (std::size_t i = 1; i < full.inertia_trace.size(); ++i)
    CHECK(full.inertia_trace[i] <= full.inertia_trace[i - 1] + 1e-9);
}

TEST_CASE("duplicate rows land in the same cluster") {
  Matrix points(6, 1);
  points(0, 0) = 0.0;
  points(1, 0) = 0.0;
  points(2, 0) = 5.0;
  points(3, 0) = 5.0;
  points(4, 0) = 5.0;
  points(5, 0) = 0.0;
  KMeansResult res = kmeans(points, 2, 1);
  CHECK(res.labels[0] == res.labels[1]);
  CHECK(res.labels[0] == res.labels[5]);
  CHECK(res.labels[2] == res.labels[3]);
  CHECK(res.labels[2] == res.labels[4]);
  CHECK(res.labels[0] != res.labels[2]);
}

TEST_CASE("linear probe: separable split, chance band, and the ridge limit") {
  // Separable blobs, 70/30 split.
  SynthSpec spec;
  spec.n_samples = 200;
  spec.n_classes = 2;
  spec.n_views = 1;
  spec.dims = {8};
  spec.separation = 10.0;
  spec.seed = 13;
  SynthResult blobs = synth(spec);
  std::vector<std::uint8_t> split(200, 0);
  for (std::size_t i = 0; i < 200; ++i)
    if (i % 10 >= 7) split[i] = 1;
  const double acc = linear_probe(blobs.dataset.views[0], blobs.dataset.labels, split,
                                  default_l2_grid(), 1);
  CHECK(acc == doctest::Approx(1.0));

  // Labels independent of features stay near chance (mean over 5 seeds).
  SplitMix64 rng(77);
  EmbeddingMatrix noise{"n", Matrix(400, 8)};
  for (double& v : noise.data.flat()) v = rng.next_gaussian();
  std::vector<std::uint8_t> split2(400, 0);
  for (std::size_t i = 0; i < 400; ++i)
    if (i % 4 == 3) split2[i] = 1;
  double mean_acc = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    SplitMix64 lrng(500 + s);
    std::vector<int> rnd(400);
    for (int& v : rnd) v = static_cast<int>(lrng.next_below(2));
    mean_acc += linear_probe(noise, rnd, split2, default_l2_grid(), s);
  }
  mean_acc /= 5.0;
  CHECK(mean_acc >= 0.4);
  CHECK(mean_acc <= 0.6);

  // lambda -> infinity shrinks the weights toward 0; the surviving gradient
  // direction predicts the majority class everywhere once the features are
  // label-independent with a common positive offset.
  std::vector<int> imbalanced(200);
  for (std::size_t i = 0; i < 200; ++i) imbalanced[i] = i % 10 < 7 ? 0 : 1;
  EmbeddingMatrix feats{"f", Matrix(200, 4)};
  SplitMix64 frng(31);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      feats.data(i, j) = 3.0 + 0.5 * frng.next_gaussian();
  std::vector<std::uint8_t> split3(200, 0);
  for (std::size_t i = 150; i < 200; ++i) split3[i] = 1;
  double majority = 0.0;
  for (std::size_t i = 150; i < 200; ++i) majority += imbalanced[i] == 0;
  majority /= 50.0;
  const double huge_lambda = linear_probe(feats, imbalanced, split3, {1e9}, 2);
  CHECK(huge_lambda == doctest::Approx(majority));
}

TEST_CASE("regularization grids have the documented sizes and range") {
  std::vector<double> small = default_l2_grid();
  std::vector<double> big = full_l2_grid();
  CHECK(small.size() == 13);
  CHECK(big.size() == 96);
  CHECK(small.front() == doctest::Approx(1e-6));
  CHECK(small.back() == doctest::Approx(1e6));
  CHECK(big.front() == doctest::Approx(1e-6));
  CHECK(big.back() == doctest::Approx(1e6));
}

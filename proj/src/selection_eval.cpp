#include "turtle/selection_eval.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <numeric>

#include "turtle/errors.hpp"
#include "turtle/inner_solver.hpp"
#include "turtle/kernels.hpp"
#include "turtle/rng.hpp"
#include "turtle/task_encoder.hpp"

namespace turtle {

namespace {

Matrix one_hot(const std::vector<int>& labels, int n_classes) {
  Matrix t(labels.size(), static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) t(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return t;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    int best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = static_cast<int>(c);
    out[r] = best;
  }
  return out;
}

double label_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Fixed budget so scores stay comparable across runs: Adam, 300 steps,
// lr 1e-2, zero init.
constexpr int kCvSteps = 300;
constexpr double kCvLearningRate = 1e-2;

}  // namespace

CVReport cross_validate_task(const MultiViewDataset& d, const std::vector<int>& pseudo,
                             const SplitSpec& folds) {
  if (pseudo.size() != d.n_samples())
    throw LengthMismatch("cross_validate_task: pseudo-label count != sample count");
  if (folds.assignment.size() != d.n_samples())
    throw LengthMismatch("cross_validate_task: fold assignment != sample count");

  CVReport report;
  report.degenerate = distinct_class_count(pseudo) < d.n_classes;

  const int n_folds = folds.fold_count;
  const std::size_t k_views = d.n_views();
  std::vector<int> classes_present(pseudo.begin(), pseudo.end());
  std::sort(classes_present.begin(), classes_present.end());
  classes_present.erase(std::unique(classes_present.begin(), classes_present.end()),
                        classes_present.end());

  std::vector<std::vector<double>> space_fold_scores(k_views);
  report.per_fold.clear();

  InnerConfig cv_cfg;
  cv_cfg.steps = kCvSteps;
  cv_cfg.learning_rate = kCvLearningRate;
  cv_cfg.optimizer = InnerOptimizer::kAdam;

  for (int f = 0; f < n_folds; ++f) {
    std::vector<int> train_idx, test_idx;
    for (std::size_t i = 0; i < pseudo.size(); ++i)
      (folds.assignment[i] == f ? test_idx : train_idx).push_back(static_cast<int>(i));

    std::vector<char> seen(static_cast<std::size_t>(d.n_classes), 0);
    for (int i : train_idx) seen[static_cast<std::size_t>(pseudo[static_cast<std::size_t>(i)])] = 1;
    bool missing = false;
    for (int c : classes_present)
      if (!seen[static_cast<std::size_t>(c)]) missing = true;
    if (missing) {
      report.warnings.push_back("fold " + std::to_string(f) +
                                " skipped: a pseudo-class is absent from the training folds");
      continue;
    }

    std::vector<int> train_labels, test_labels;
    for (int i : train_idx) train_labels.push_back(pseudo[static_cast<std::size_t>(i)]);
    for (int i : test_idx) test_labels.push_back(pseudo[static_cast<std::size_t>(i)]);
    const Matrix targets = one_hot(train_labels, d.n_classes);

    double fold_mean = 0.0;
    for (std::size_t k = 0; k < k_views; ++k) {
      const Matrix x_train = kernels::gather_rows(d.views[k].data, train_idx);
      const Matrix x_test = kernels::gather_rows(d.views[k].data, test_idx);
      InnerClassifier clf = make_inner_classifier(d.n_classes, d.views[k].dim());
      fit_inner(clf, x_train, targets, cv_cfg);
      const Matrix logits = kernels::matmul_nt(x_test, clf.weights);
      const double acc = label_accuracy(argmax_rows(logits), test_labels);
      space_fold_scores[k].push_back(acc);
      fold_mean += acc;
    }
    report.per_fold.push_back(fold_mean / static_cast<double>(k_views));
  }

  report.per_space.resize(k_views, 0.0);
  for (std::size_t k = 0; k < k_views; ++k) {
    if (!space_fold_scores[k].empty())
      report.per_space[k] =
          std::accumulate(space_fold_scores[k].begin(), space_fold_scores[k].end(), 0.0) /
          static_cast<double>(space_fold_scores[k].size());
  }
  if (!report.per_space.empty())
    report.score = std::accumulate(report.per_space.begin(), report.per_space.end(), 0.0) /
                   static_cast<double>(report.per_space.size());
  return report;
}

std::size_t select_best(const std::vector<RunEvaluation>& runs) {
  std::size_t best = runs.size();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].failed || runs[i].degenerate) continue;
    if (best == runs.size() || runs[i].cv_score > runs[best].cv_score) best = i;
  }
  if (best == runs.size())
    throw AllRunsDegenerate("select_best: every run is degenerate or failed");
  return best;
}

std::vector<int> hungarian_match(const std::vector<std::vector<long long>>& contingency) {
  const int n = static_cast<int>(contingency.size());
  for (const auto& row : contingency)
    if (static_cast<int>(row.size()) != n)
      throw ShapeMismatch("hungarian_match: contingency must be square");

  // Assignment by potentials on the negated counts (minimization form).
  const long long kInf = LLONG_MAX / 4;
  std::vector<long long> u(static_cast<std::size_t>(n) + 1, 0),
      v(static_cast<std::size_t>(n) + 1, 0), minv(static_cast<std::size_t>(n) + 1);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      long long delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const long long cur = -contingency[static_cast<std::size_t>(i0 - 1)]
                                          [static_cast<std::size_t>(j - 1)] -
                              u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> perm(static_cast<std::size_t>(n), 0);
  for (int j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] != 0)
      perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return perm;
}

long long matched_count(const std::vector<std::vector<long long>>& contingency,
                        const std::vector<int>& perm) {
  long long total = 0;
  for (std::size_t c = 0; c < perm.size(); ++c)
    total += contingency[c][static_cast<std::size_t>(perm[c])];
  return total;
}

AccuracyReport clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                   int n_classes) {
  if (pred.size() != truth.size())
    throw LengthMismatch("clustering_accuracy: prediction and truth lengths differ");
  AccuracyReport report;
  report.contingency.assign(static_cast<std::size_t>(n_classes),
                            std::vector<long long>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= n_classes || truth[i] < 0 || truth[i] >= n_classes)
      throw LengthMismatch("clustering_accuracy: label outside [0, C) at row " +
                           std::to_string(i));
    report.contingency[static_cast<std::size_t>(pred[i])][static_cast<std::size_t>(truth[i])] += 1;
  }
  report.permutation = hungarian_match(report.contingency);
  report.accuracy = static_cast<double>(matched_count(report.contingency, report.permutation)) /
                    static_cast<double>(pred.size());
  return report;
}

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

namespace {

double dist2(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

Matrix kmeanspp_init(const Matrix& points, int k, SplitMix64& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(static_cast<std::size_t>(k), points.cols());
  std::vector<double> d2(n);
  const std::size_t first = static_cast<std::size_t>(rng.next_below(n));
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(points.row(i), centroids.row(0));
  for (int c = 1; c < k; ++c) {
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick;
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(rng.next_below(n));
    } else {
      const double r = rng.next_double() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(),
              centroids.row(static_cast<std::size_t>(c)).begin());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], dist2(points.row(i), centroids.row(static_cast<std::size_t>(c))));
  }
  return centroids;
}

KMeansResult lloyd_once(const Matrix& points, int k, SplitMix64& rng, int max_iters) {
  const std::size_t n = points.rows();
  Matrix centroids = kmeanspp_init(points, k, rng);
  std::vector<int> labels;
  std::vector<double> d2;
  double prev_inertia = std::numeric_limits<double>::infinity();
  KMeansResult result;
  for (int it = 0; it < max_iters; ++it) {
    kernels::assign_nearest(points, centroids, labels, d2);

    // Empty clusters grab the point farthest from its assigned centroid.
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (int l : labels) counts[static_cast<std::size_t>(l)] += 1;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] != 0) continue;
      std::size_t worst = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (d2[i] > d2[worst]) worst = i;
      std::copy(points.row(worst).begin(), points.row(worst).end(),
                centroids.row(static_cast<std::size_t>(c)).begin());
      counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(worst)])] -= 1;
      labels[worst] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      d2[worst] = 0.0;
    }

    double inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
    result.inertia_trace.push_back(inertia);

    centroids.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto crow = centroids.row(static_cast<std::size_t>(labels[i]));
      const auto prow = points.row(i);
      for (std::size_t j = 0; j < prow.size(); ++j) crow[j] += prow[j];
    }
    for (int c = 0; c < k; ++c) {
      auto crow = centroids.row(static_cast<std::size_t>(c));
      const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      for (double& v : crow) v *= inv;
    }

    result.labels = labels;
    result.inertia = inertia;
    result.iterations = it + 1;
    if (std::isfinite(prev_inertia) &&
        std::abs(prev_inertia - inertia) <= 1e-6 * std::max(1.0, prev_inertia))
      break;
    prev_inertia = inertia;
  }
  // Final assignment against the converged centroids.
  kernels::assign_nearest(points, centroids, result.labels, d2);
  result.inertia = std::accumulate(d2.begin(), d2.end(), 0.0);
  return result;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int n_clusters, std::uint64_t seed, int restarts,
                    int max_iters) {
  if (n_clusters < 1) throw TooFewSamples("kmeans: need at least one cluster");
  if (points.rows() < static_cast<std::size_t>(n_clusters))
    throw TooFewSamples("kmeans: fewer points than clusters");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    SplitMix64 rng(SplitMix64::derive(seed, static_cast<std::uint64_t>(r)));
    KMeansResult res = lloyd_once(points, n_clusters, rng, max_iters);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

std::vector<int> kmeans_baseline(const MultiViewDataset& d, int n_classes, std::uint64_t seed) {
  const EmbeddingMatrix concat = concatenate_views(d);
  return kmeans(concat.data, n_classes, seed).labels;
}

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

namespace {

// Full-batch gradient descent on mean cross-entropy + 0.5*lambda*||W||^2.
// The step size comes from the smoothness bound 0.5*lambda_max(X^T X)/N + lambda.
Matrix fit_logistic(const Matrix& x, const std::vector<int>& labels, int n_classes,
                    double lambda, double gram_lambda_max, int iters) {
  Matrix w(static_cast<std::size_t>(n_classes), x.cols());
  const Matrix targets = one_hot(labels, n_classes);
  const double lipschitz = 0.5 * gram_lambda_max / static_cast<double>(x.rows()) + lambda;
  const double step = 1.0 / lipschitz;
  for (int it = 0; it < iters; ++it) {
    Matrix logits = kernels::matmul_nt(x, w);
    Matrix grad = soft_cross_entropy_grad(x, logits, targets);
    double max_abs = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grad.flat()[i] + lambda * w.flat()[i];
      max_abs = std::max(max_abs, std::abs(g));
      w.flat()[i] -= step * g;
    }
    if (max_abs < 1e-12) break;
  }
  return w;
}

double accuracy_on(const Matrix& x, const std::vector<int>& labels, const Matrix& w) {
  return label_accuracy(argmax_rows(kernels::matmul_nt(x, w)), labels);
}

}  // namespace

double linear_probe(const EmbeddingMatrix& view, const std::vector<int>& labels,
                    const std::vector<std::uint8_t>& split, const std::vector<double>& l2_grid,
                    std::uint64_t seed) {
  if (labels.size() != view.n_samples())
    throw LengthMismatch("linear_probe: label count != sample count");
  if (split.size() != view.n_samples())
    throw LengthMismatch("linear_probe: split mask != sample count");
  if (l2_grid.empty()) throw TooFewSamples("linear_probe: empty regularization grid");

  std::vector<int> train_idx, test_idx;
  for (std::size_t i = 0; i < split.size(); ++i)
    (split[i] == 0 ? train_idx : test_idx).push_back(static_cast<int>(i));
  if (train_idx.empty() || test_idx.empty())
    throw TooFewSamples("linear_probe: split leaves an empty train or test set");

  const int n_classes = 1 + *std::max_element(labels.begin(), labels.end());

  // 20% of the training split becomes the validation carve-out.
  SplitMix64 rng(seed);
  std::vector<int> shuffled = train_idx;
  rng.shuffle(shuffled);
  const std::size_t val_count = std::max<std::size_t>(1, shuffled.size() / 5);
  std::vector<int> val_idx(shuffled.begin(), shuffled.begin() + static_cast<long>(val_count));
  std::vector<int> fit_idx(shuffled.begin() + static_cast<long>(val_count), shuffled.end());

  auto labels_of = [&](const std::vector<int>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(labels[static_cast<std::size_t>(i)]);
    return out;
  };

  const Matrix x_fit = kernels::gather_rows(view.data, fit_idx);
  const Matrix x_val = kernels::gather_rows(view.data, val_idx);
  const std::vector<int> y_fit = labels_of(fit_idx);
  const std::vector<int> y_val = labels_of(val_idx);
  const double gram_fit = kernels::gram_lambda_max(x_fit);

  constexpr int kProbeIters = 1000;
  double best_acc = -1.0;
  double best_lambda = l2_grid.front();
  for (double lambda : l2_grid) {
    const Matrix w = fit_logistic(x_fit, y_fit, n_classes, lambda, gram_fit, kProbeIters);
    const double acc = accuracy_on(x_val, y_val, w);
    if (acc > best_acc) {
      best_acc = acc;
      best_lambda = lambda;
    }
  }

  const Matrix x_train = kernels::gather_rows(view.data, train_idx);
  const Matrix x_test = kernels::gather_rows(view.data, test_idx);
  const Matrix w = fit_logistic(x_train, labels_of(train_idx), n_classes, best_lambda,
                                kernels::gram_lambda_max(x_train), kProbeIters);
  return accuracy_on(x_test, labels_of(test_idx), w);
}

std::vector<double> default_l2_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(std::pow(10.0, -6.0 + i));
  return grid;
}

std::vector<double> full_l2_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 96; ++i) grid.push_back(std::pow(10.0, -6.0 + 12.0 * i / 95.0));
  return grid;
}

}  // namespace turtle

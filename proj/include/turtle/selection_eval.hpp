#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turtle/embedding_store.hpp"

namespace turtle {

struct CVReport {
  double score = 0.0;              // mean held-out accuracy on the pseudo-labels
  std::vector<double> per_fold;    // averaged over spaces
  std::vector<double> per_space;   // averaged over folds
  bool degenerate = false;         // pseudo-labeling uses fewer than C classes
  std::vector<std::string> warnings;
};

struct AccuracyReport {
  double accuracy = 0.0;
  std::vector<int> permutation;                  // predicted class -> matched truth class
  std::vector<std::vector<long long>> contingency;  // [pred][truth] counts
};

// Label-free task scoring: train a fresh linear classifier on the
// pseudo-labels fold-wise per representation space, score on the held fold,
// average folds then spaces. Folds whose training part misses a pseudo-class
// are skipped with a warning.
CVReport cross_validate_task(const MultiViewDataset& d, const std::vector<int>& pseudo,
                             const SplitSpec& folds);

// One grid run with its label-free score attached.
struct RunEvaluation {
  double cv_score = 0.0;
  bool degenerate = false;
  bool failed = false;
};

// Argmax of CV score among non-degenerate, non-failed runs; ties resolve to
// the lowest index. Throws AllRunsDegenerate when nothing is eligible.
std::size_t select_best(const std::vector<RunEvaluation>& runs);

// Permutation maximizing sum_c contingency[c][perm[c]], exact.
std::vector<int> hungarian_match(const std::vector<std::vector<long long>>& contingency);
long long matched_count(const std::vector<std::vector<long long>>& contingency,
                        const std::vector<int>& perm);

AccuracyReport clustering_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                   int n_classes);

// Lloyd's algorithm on the concatenated L2-normalized views; 10 seeded
// restarts, lowest inertia kept.
std::vector<int> kmeans_baseline(const MultiViewDataset& d, int n_classes, std::uint64_t seed);

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  int iterations = 0;
  std::vector<double> inertia_trace;  // one value per Lloyd iteration
};
KMeansResult kmeans(const Matrix& points, int n_clusters, std::uint64_t seed, int restarts = 10,
                    int max_iters = 1000);

// L2-regularized multinomial logistic regression; the penalty is chosen on a
// 20% carve-out of the training split, then refit on the full training split.
// Returns test accuracy.
double linear_probe(const EmbeddingMatrix& view, const std::vector<int>& labels,
                    const std::vector<std::uint8_t>& split, const std::vector<double>& l2_grid,
                    std::uint64_t seed);

std::vector<double> default_l2_grid();  // 13 log-spaced values in [1e-6, 1e6]
std::vector<double> full_l2_grid();     // the 96-value grid

}  // namespace turtle

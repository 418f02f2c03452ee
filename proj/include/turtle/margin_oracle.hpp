#pragma once

#include <span>
#include <utility>
#include <vector>

#include "turtle/matrix.hpp"

namespace turtle {

// A binary labeling task over fixed points. `targets` are the values fed to
// the exponential loss (tanh activations for encoder-induced tasks, +-1 for
// explicit labelings); `labels` is always the induced +-1 labeling.
struct BinaryTask {
  Matrix points;                // N x d
  std::vector<double> targets;  // in [-1, 1]
  std::vector<int> labels;      // +-1
};

BinaryTask binary_task_from_labels(Matrix points, std::vector<int> labels);
// targets = tanh(theta^T x); the labeling sign(theta^T x) is separable by
// construction (theta itself separates). theta must be nonzero.
BinaryTask binary_task_from_theta(Matrix points, std::span<const double> theta);
// Scales all points so the largest row norm is 1 (theory preconditions).
BinaryTask rescale_to_unit_norm(BinaryTask task);

struct GdResult {
  std::vector<double> losses;  // loss before each step plus the final one
  std::vector<std::pair<long, std::vector<double>>> checkpoints;
  std::vector<double> final_w;
};

// Plain gradient descent on sum_n exp(-target_n * w^T x_n). Iterates are
// recorded at the requested steps and at the end.
GdResult exp_loss_gd(const BinaryTask& task, std::span<const double> w0, double eta, long steps,
                     std::span<const long> checkpoint_steps = {});

struct SvmSolution {
  std::vector<double> primal;   // w
  std::vector<double> duals;    // alpha >= 0
  std::vector<int> support_set; // indices with margin within 1e-3 of 1
  double objective = 0.0;       // ||w||^2
  double kkt_residual = 0.0;
};

// Hard-margin SVM by projected gradient ascent on the dual, step
// 1/lambda_max(Gram), stopping at KKT residual 1e-6 or 1e6 iterations.
// Throws NotSeparable when no linear separator exists.
SvmSolution hard_margin_svm(const BinaryTask& task);

struct BiasCheckpoint {
  long steps = 0;
  double cosine = 0.0;          // cos(w_M, w_SVM)
  double residual_norm = 0.0;   // ||w_M - w_SVM log M - w_tilde||
  std::vector<double> residual;
};

// Direction-convergence trace for the gradient descent iterates against the
// max-margin solution, with the residual of the log-growth decomposition.
std::vector<BiasCheckpoint> implicit_bias_check(const BinaryTask& task, double eta,
                                                std::span<const long> schedule);

struct BoundReport {
  double lhs = 0.0;            // exp-loss objective at w_M
  double g_theta = 0.0;        // (M eta exp(||r_M||))^-1
  double svm_norm_sq = 0.0;
  double residual_norm = 0.0;
  bool holds = false;          // lhs >= g_theta * svm_norm_sq
};

// Numerical check of the lower bound: the exp-loss GD runs on the tanh
// targets, the SVM and residual machinery on the sign labeling. Points are
// rescaled to max norm 1 on ingestion.
BoundReport bound_check(std::span<const double> theta, const Matrix& points, double eta, long steps);

struct LabelingSearchResult {
  double best_norm_sq = 0.0;
  std::vector<std::vector<int>> labelings;  // all optimal balanced labelings, sign-canonical
};

// Brute-force enumeration of balanced +-1 labelings (first label fixed to +1)
// returning the separable labeling(s) of minimal SVM norm.
LabelingSearchResult margin_search_smoke(const Matrix& points);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace turtle

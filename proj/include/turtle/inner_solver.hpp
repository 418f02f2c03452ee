#pragma once

#include "turtle/matrix.hpp"

namespace turtle {

// Per-space linear classifier with Adam accumulators. Exclusively owned by
// one worker while fitting.
struct InnerClassifier {
  Matrix weights;        // C x q
  Matrix first_moment;   // same shape
  Matrix second_moment;  // same shape
  long step_count = 0;
};

enum class InnerOptimizer { kAdam, kGradientDescent };

struct InnerConfig {
  int steps = 10;
  double learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool warm_start = true;
  InnerOptimizer optimizer = InnerOptimizer::kAdam;  // plain GD kept for theory checks
};

// Cold-start state: zero weights, zero moments.
InnerClassifier make_inner_classifier(int n_classes, std::size_t dim);

// Mean over samples of -sum_c target[r,c] * log softmax(logits[r])_c.
double soft_cross_entropy(const Matrix& logits, const Matrix& target);

// Analytic gradient w.r.t. the weights: (softmax(logits) - target)^T view / N.
Matrix soft_cross_entropy_grad(const Matrix& view, const Matrix& logits, const Matrix& target);

// One optimizer update on the soft cross-entropy; increments step_count.
void inner_step(InnerClassifier& clf, const Matrix& view, const Matrix& target,
                const InnerConfig& cfg);

// Applies inner_step exactly cfg.steps times.
void fit_inner(InnerClassifier& clf, const Matrix& view, const Matrix& target,
               const InnerConfig& cfg);

// Shared Adam update used by both the inner classifiers and the task encoder.
void adam_update(Matrix& params, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 double lr, double beta1, double beta2, double eps);

}  // namespace turtle

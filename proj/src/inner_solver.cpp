#include "turtle/inner_solver.hpp"

#include <cmath>

#include "turtle/errors.hpp"
#include "turtle/kernels.hpp"

namespace turtle {

InnerClassifier make_inner_classifier(int n_classes, std::size_t dim) {
  InnerClassifier clf;
  clf.weights = Matrix(static_cast<std::size_t>(n_classes), dim);
  clf.first_moment = Matrix(clf.weights.rows(), clf.weights.cols());
  clf.second_moment = Matrix(clf.weights.rows(), clf.weights.cols());
  return clf;
}

double soft_cross_entropy(const Matrix& logits, const Matrix& target) {
  if (!logits.same_shape(target)) throw ShapeMismatch("soft_cross_entropy: shapes differ");
  Matrix logp = logits;
  kernels::log_softmax_rows_inplace(logp);
  double total = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) total -= target.flat()[i] * logp.flat()[i];
  return total / static_cast<double>(logits.rows());
}

Matrix soft_cross_entropy_grad(const Matrix& view, const Matrix& logits, const Matrix& target) {
  if (!logits.same_shape(target)) throw ShapeMismatch("soft_cross_entropy_grad: shapes differ");
  if (view.rows() != logits.rows()) throw ShapeMismatch("soft_cross_entropy_grad: row counts differ");
  Matrix delta = logits;
  kernels::softmax_rows_inplace(delta);
  for (std::size_t i = 0; i < delta.size(); ++i) delta.flat()[i] -= target.flat()[i];
  return kernels::matmul_tn(delta, view, 1.0 / static_cast<double>(view.rows()));
}

void adam_update(Matrix& params, const Matrix& grad, Matrix& m, Matrix& v, long step,
                 double lr, double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.flat()[i];
    double& mi = m.flat()[i];
    double& vi = v.flat()[i];
    mi = beta1 * mi + (1.0 - beta1) * g;
    vi = beta2 * vi + (1.0 - beta2) * g * g;
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    params.flat()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace {
void check_config(const InnerConfig& cfg) {
  if (cfg.steps < 1) throw ShapeMismatch("inner config: steps must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw ShapeMismatch("inner config: learning rate must be > 0");
  if (cfg.adam_beta1 < 0.0 || cfg.adam_beta1 >= 1.0 || cfg.adam_beta2 < 0.0 ||
      cfg.adam_beta2 >= 1.0)
    throw ShapeMismatch("inner config: betas must lie in [0, 1)");
}
}  // namespace

void inner_step(InnerClassifier& clf, const Matrix& view, const Matrix& target,
                const InnerConfig& cfg) {
  check_config(cfg);
  Matrix logits = kernels::matmul_nt(view, clf.weights);
  Matrix grad = soft_cross_entropy_grad(view, logits, target);
  if (!grad.all_finite())
    throw NonFiniteGradient("inner_step: non-finite gradient at step " +
                            std::to_string(clf.step_count + 1));
  clf.step_count += 1;
  if (cfg.optimizer == InnerOptimizer::kAdam) {
    adam_update(clf.weights, grad, clf.first_moment, clf.second_moment, clf.step_count,
                cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  } else {
    for (std::size_t i = 0; i < clf.weights.size(); ++i)
      clf.weights.flat()[i] -= cfg.learning_rate * grad.flat()[i];
  }
  if (!clf.weights.all_finite())
    throw NonFiniteGradient("inner_step: weights diverged at step " +
                            std::to_string(clf.step_count));
}

void fit_inner(InnerClassifier& clf, const Matrix& view, const Matrix& target,
               const InnerConfig& cfg) {
  for (int s = 0; s < cfg.steps; ++s) inner_step(clf, view, target, cfg);
}

}  // namespace turtle

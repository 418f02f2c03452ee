#include "turtle/margin_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "turtle/errors.hpp"
#include "turtle/kernels.hpp"

namespace turtle {

namespace {

constexpr double kKktTolerance = 1e-6;
constexpr long kMaxDualIterations = 1000000;
constexpr double kSupportMarginTolerance = 1e-3;

void check_task(const BinaryTask& task) {
  if (task.points.rows() != task.targets.size() || task.points.rows() != task.labels.size())
    throw ShapeMismatch("binary task: points/targets/labels sizes differ");
  for (int l : task.labels)
    if (l != 1 && l != -1) throw ShapeMismatch("binary task: labels must be +-1");
}

// Gaussian elimination with partial pivoting; a is destroyed.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    const double diag = a[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a[r][col] / diag;
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

// Least-squares solve of (rows_i . w = rhs_i) via ridge-damped normal equations.
std::vector<double> least_squares(const std::vector<std::vector<double>>& rows,
                                  const std::vector<double>& rhs) {
  const std::size_t d = rows.empty() ? 0 : rows[0].size();
  std::vector<std::vector<double>> ata(d, std::vector<double>(d, 0.0));
  std::vector<double> atb(d, 0.0);
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t i = 0; i < d; ++i) {
      atb[i] += rows[n][i] * rhs[n];
      for (std::size_t j = 0; j < d; ++j) ata[i][j] += rows[n][i] * rows[n][j];
    }
  }
  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += ata[i][i];
  const double ridge = 1e-12 * std::max(1.0, trace);
  for (std::size_t i = 0; i < d; ++i) ata[i][i] += ridge;
  return solve_dense(std::move(ata), std::move(atb));
}

// Perceptron feasibility pass. Returns false when the update budget runs out,
// which at max point norm r bounds the detectable margin below ~r/1000.
bool perceptron_separable(const BinaryTask& task) {
  const std::size_t n = task.points.rows();
  const std::size_t d = task.points.cols();
  std::vector<double> w(d, 0.0);
  long updates = 0;
  const long budget = 1000000;
  for (;;) {
    bool clean = true;
    for (std::size_t i = 0; i < n; ++i) {
      const double margin = static_cast<double>(task.labels[i]) * kernels::dot(w, task.points.row(i));
      if (margin <= 0.0) {
        const auto row = task.points.row(i);
        for (std::size_t j = 0; j < d; ++j) w[j] += static_cast<double>(task.labels[i]) * row[j];
        clean = false;
        if (++updates > budget) return false;
      }
    }
    if (clean) return true;
  }
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = kernels::norm2(a);
  const double nb = kernels::norm2(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kernels::dot(a, b) / (na * nb);
}

BinaryTask binary_task_from_labels(Matrix points, std::vector<int> labels) {
  BinaryTask task;
  task.points = std::move(points);
  task.labels = std::move(labels);
  task.targets.reserve(task.labels.size());
  for (int l : task.labels) task.targets.push_back(static_cast<double>(l));
  check_task(task);
  return task;
}

BinaryTask binary_task_from_theta(Matrix points, std::span<const double> theta) {
  if (points.cols() != theta.size())
    throw ShapeMismatch("binary_task_from_theta: theta dimension mismatch");
  if (kernels::norm2(theta) == 0.0)
    throw ShapeMismatch("binary_task_from_theta: theta must be nonzero");
  BinaryTask task;
  task.points = std::move(points);
  task.targets.resize(task.points.rows());
  task.labels.resize(task.points.rows());
  for (std::size_t i = 0; i < task.points.rows(); ++i) {
    const double score = kernels::dot(theta, task.points.row(i));
    task.targets[i] = std::tanh(score);
    task.labels[i] = score >= 0.0 ? 1 : -1;
  }
  return task;
}

BinaryTask rescale_to_unit_norm(BinaryTask task) {
  double max_norm = 0.0;
  for (std::size_t i = 0; i < task.points.rows(); ++i)
    max_norm = std::max(max_norm, kernels::norm2(task.points.row(i)));
  if (max_norm > 0.0) {
    const double inv = 1.0 / max_norm;
    for (double& v : task.points.flat()) v *= inv;
  }
  return task;
}

GdResult exp_loss_gd(const BinaryTask& task, std::span<const double> w0, double eta, long steps,
                     std::span<const long> checkpoint_steps) {
  check_task(task);
  const std::size_t n = task.points.rows();
  const std::size_t d = task.points.cols();
  if (w0.size() != d) throw ShapeMismatch("exp_loss_gd: w0 dimension mismatch");

  std::vector<double> w(w0.begin(), w0.end());
  std::vector<double> grad(d);
  std::vector<long> wanted(checkpoint_steps.begin(), checkpoint_steps.end());
  std::sort(wanted.begin(), wanted.end());

  GdResult result;
  result.losses.reserve(static_cast<std::size_t>(steps) + 1);

  int rising = 0;
  double prev_loss = std::numeric_limits<double>::infinity();
  std::size_t next_checkpoint = 0;
  for (long m = 0; m <= steps; ++m) {
    double loss = 0.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = task.points.row(i);
      const double term = std::exp(-task.targets[i] * kernels::dot(w, row));
      loss += term;
      const double coeff = -task.targets[i] * term;
      for (std::size_t j = 0; j < d; ++j) grad[j] += coeff * row[j];
    }
    result.losses.push_back(loss);
    if (!std::isfinite(loss))
      throw DivergenceDetected("exp_loss_gd: loss non-finite at step " + std::to_string(m));
    rising = loss > prev_loss ? rising + 1 : 0;
    if (rising >= 10)
      throw DivergenceDetected("exp_loss_gd: loss increasing for 10 consecutive steps at step " +
                               std::to_string(m));
    prev_loss = loss;

    while (next_checkpoint < wanted.size() && wanted[next_checkpoint] == m) {
      result.checkpoints.emplace_back(m, w);
      ++next_checkpoint;
    }
    if (m == steps) break;
    for (std::size_t j = 0; j < d; ++j) w[j] -= eta * grad[j];
  }
  result.final_w = std::move(w);
  return result;
}

SvmSolution hard_margin_svm(const BinaryTask& task) {
  check_task(task);
  const std::size_t n = task.points.rows();
  const std::size_t d = task.points.cols();
  if (n > 512 || d > 64)
    throw ShapeMismatch("hard_margin_svm: sized for N <= 512, d <= 64");
  if (!perceptron_separable(task)) throw NotSeparable("hard_margin_svm: labeling not separable");

  // Signed Gram matrix Q_ij = tau_i tau_j <x_i, x_j>.
  Matrix q(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double v = static_cast<double>(task.labels[i] * task.labels[j]) *
                       kernels::dot(task.points.row(i), task.points.row(j));
      q(i, j) = v;
      q(j, i) = v;
    }

  // Power iteration for the dual ascent step size.
  double lambda_max = 0.0;
  {
    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n))), qv(n);
    for (int it = 0; it < 300; ++it) {
      for (std::size_t i = 0; i < n; ++i) qv[i] = kernels::dot(q.row(i), v);
      const double nrm = kernels::norm2(qv);
      if (nrm == 0.0) break;
      for (std::size_t i = 0; i < n; ++i) v[i] = qv[i] / nrm;
      if (it > 10 && std::abs(nrm - lambda_max) < 1e-12 * std::max(1.0, nrm)) {
        lambda_max = nrm;
        break;
      }
      lambda_max = nrm;
    }
  }
  const double step = 1.0 / (lambda_max * (1.0 + 1e-3) + 1e-300);

  std::vector<double> alpha(n, 0.0), qa(n, 0.0), w(d, 0.0);
  SvmSolution sol;
  sol.kkt_residual = std::numeric_limits<double>::infinity();

  auto kkt_residual = [&]() {
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double coeff = alpha[i] * static_cast<double>(task.labels[i]);
      if (coeff == 0.0) continue;
      const auto row = task.points.row(i);
      for (std::size_t j = 0; j < d; ++j) w[j] += coeff * row[j];
    }
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double margin =
          static_cast<double>(task.labels[i]) * kernels::dot(w, task.points.row(i));
      res = std::max(res, std::max(0.0, 1.0 - margin));          // primal feasibility
      res = std::max(res, std::abs(alpha[i] * (margin - 1.0)));  // complementary slackness
    }
    return res;
  };

  for (long it = 0; it < kMaxDualIterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) qa[i] = kernels::dot(q.row(i), alpha);
    for (std::size_t i = 0; i < n; ++i)
      alpha[i] = std::max(0.0, alpha[i] + step * (1.0 - qa[i]));
    if (it % 64 == 0 || it == kMaxDualIterations - 1) {
      sol.kkt_residual = kkt_residual();
      if (sol.kkt_residual < kKktTolerance) break;
    }
  }
  sol.kkt_residual = kkt_residual();

  sol.primal = w;
  sol.duals = alpha;
  sol.objective = kernels::dot(w, w);
  for (std::size_t i = 0; i < n; ++i) {
    const double margin =
        static_cast<double>(task.labels[i]) * kernels::dot(w, task.points.row(i));
    if (std::abs(margin - 1.0) < kSupportMarginTolerance)
      sol.support_set.push_back(static_cast<int>(i));
  }
  return sol;
}

std::vector<BiasCheckpoint> implicit_bias_check(const BinaryTask& task, double eta,
                                                std::span<const long> schedule) {
  const SvmSolution svm = hard_margin_svm(task);

  // w_tilde solves eta * exp(-tau_n w^T x_n) = alpha_n on the support set,
  // i.e. tau_n x_n . w = log(eta / alpha_n), in the least-squares sense.
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  for (int idx : svm.support_set) {
    const std::size_t i = static_cast<std::size_t>(idx);
    if (svm.duals[i] <= 1e-12) continue;  // the equation needs a strictly positive dual
    const auto point = task.points.row(i);
    std::vector<double> row(point.size());
    for (std::size_t j = 0; j < point.size(); ++j)
      row[j] = static_cast<double>(task.labels[i]) * point[j];
    rows.push_back(std::move(row));
    rhs.push_back(std::log(eta / svm.duals[i]));
  }
  std::vector<double> w_tilde(task.points.cols(), 0.0);
  if (!rows.empty()) w_tilde = least_squares(rows, rhs);

  const long max_steps = *std::max_element(schedule.begin(), schedule.end());
  std::vector<double> w0(task.points.cols(), 0.0);
  GdResult gd = exp_loss_gd(task, w0, eta, max_steps, schedule);

  std::vector<BiasCheckpoint> out;
  for (const auto& [steps, w] : gd.checkpoints) {
    BiasCheckpoint cp;
    cp.steps = steps;
    cp.cosine = cosine_similarity(w, svm.primal);
    cp.residual.resize(w.size());
    const double log_m = std::log(static_cast<double>(steps));
    for (std::size_t j = 0; j < w.size(); ++j)
      cp.residual[j] = w[j] - svm.primal[j] * log_m - w_tilde[j];
    cp.residual_norm = kernels::norm2(cp.residual);
    out.push_back(std::move(cp));
  }
  return out;
}

BoundReport bound_check(std::span<const double> theta, const Matrix& points, double eta,
                        long steps) {
  BinaryTask soft = rescale_to_unit_norm(binary_task_from_theta(points, theta));
  BinaryTask hard = binary_task_from_labels(soft.points, soft.labels);

  const long schedule[] = {steps};
  std::vector<BiasCheckpoint> bias = implicit_bias_check(hard, eta, schedule);
  const SvmSolution svm = hard_margin_svm(hard);

  std::vector<double> w0(soft.points.cols(), 0.0);
  GdResult gd = exp_loss_gd(soft, w0, eta, steps);

  BoundReport report;
  report.lhs = gd.losses.back();
  report.residual_norm = bias.back().residual_norm;
  report.svm_norm_sq = svm.objective;
  report.g_theta =
      1.0 / (static_cast<double>(steps) * eta * std::exp(report.residual_norm));
  report.holds = report.lhs >= report.g_theta * report.svm_norm_sq;
  return report;
}

LabelingSearchResult margin_search_smoke(const Matrix& points) {
  const std::size_t n = points.rows();
  if (n < 2 || n > 16) throw ShapeMismatch("margin_search_smoke: need 2..16 points");

  LabelingSearchResult result;
  result.best_norm_sq = std::numeric_limits<double>::infinity();
  const std::size_t half_low = n / 2;
  const std::size_t half_high = (n + 1) / 2;

  // First label pinned to +1 collapses the sign symmetry.
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<int> labels(n, 1);
    std::size_t positives = 1;
    for (std::size_t i = 1; i < n; ++i) {
      if (mask & (1u << (i - 1))) {
        labels[i] = -1;
      } else {
        ++positives;
      }
    }
    if (positives != half_low && positives != half_high) continue;
    try {
      const SvmSolution svm = hard_margin_svm(binary_task_from_labels(points, labels));
      if (svm.kkt_residual >= kKktTolerance) continue;
      if (svm.objective < result.best_norm_sq * (1.0 - 1e-6)) {
        result.best_norm_sq = svm.objective;
        result.labelings.assign(1, labels);
      } else if (svm.objective <= result.best_norm_sq * (1.0 + 1e-6)) {
        result.best_norm_sq = std::min(result.best_norm_sq, svm.objective);
        result.labelings.push_back(labels);
      }
    } catch (const NotSeparable&) {
    }
  }
  if (result.labelings.empty())
    throw NoSeparableLabeling("margin_search_smoke: no balanced separable labeling");
  return result;
}

}  // namespace turtle

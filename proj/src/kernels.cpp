#include "turtle/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "turtle/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace turtle::kernels {

namespace {
int g_max_threads = 1;

// Below this many output elements the fork/join overhead dominates.
constexpr std::size_t kParallelCutoff = 16 * 1024;

bool use_parallel(std::size_t work) {
#ifdef _OPENMP
  return g_max_threads > 1 && work >= kParallelCutoff;
#else
  (void)work;
  return false;
#endif
}
}  // namespace

int max_threads() { return g_max_threads; }

void set_max_threads(int n) { g_max_threads = n < 1 ? 1 : n; }

// ---------------------------------------------------------------------------
// Serial reference kernels
// ---------------------------------------------------------------------------

namespace serial {

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeMismatch("matmul_nt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.data() + i * a.cols();
    double* orow = out.data() + i * out.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data() + j * b.cols();
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b, double alpha) {
  if (a.rows() != b.rows()) throw ShapeMismatch("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  // out[c][q] = alpha * sum_n a[n][c] * b[n][q]; fixed n order keeps the
  // result identical to the parallel path.
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double* orow = out.data() + c * out.cols();
    for (std::size_t n = 0; n < a.rows(); ++n) {
      const double w = a(n, c);
      if (w == 0.0) continue;
      const double* brow = b.data() + n * b.cols();
      for (std::size_t q = 0; q < b.cols(); ++q) orow[q] += w * brow[q];
    }
    for (std::size_t q = 0; q < b.cols(); ++q) orow[q] *= alpha;
  }
  return out;
}

namespace {
inline void softmax_row(double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
}

inline void log_softmax_row(double* row, std::size_t n) {
  double mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(row[i] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < n; ++i) row[i] -= lse;
}

inline void l2_normalize_row(double* row, std::size_t n) {
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += row[i] * row[i];
  if (sq == 0.0) return;  // degenerate rows pass through
  const double inv = 1.0 / std::sqrt(sq);
  for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
}

inline void nearest_centroid(const Matrix& points, const Matrix& centroids,
                             std::size_t i, int& label, double& best) {
  const double* p = points.data() + i * points.cols();
  best = std::numeric_limits<double>::infinity();
  label = 0;
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double* m = centroids.data() + c * centroids.cols();
    double d = 0.0;
    for (std::size_t k = 0; k < points.cols(); ++k) {
      const double diff = p[k] - m[k];
      d += diff * diff;
    }
    if (d < best) {  // strict: ties go to the lowest centroid index
      best = d;
      label = static_cast<int>(c);
    }
  }
}
}  // namespace

void softmax_rows_inplace(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) softmax_row(m.data() + r * m.cols(), m.cols());
}

void log_softmax_rows_inplace(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) log_softmax_row(m.data() + r * m.cols(), m.cols());
}

void l2_normalize_rows_inplace(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) l2_normalize_row(m.data() + r * m.cols(), m.cols());
}

void assign_nearest(const Matrix& points, const Matrix& centroids,
                    std::vector<int>& label_out, std::vector<double>& dist2_out) {
  if (points.cols() != centroids.cols()) throw ShapeMismatch("assign_nearest: dim mismatch");
  label_out.resize(points.rows());
  dist2_out.resize(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i)
    nearest_centroid(points, centroids, i, label_out[i], dist2_out[i]);
}

}  // namespace serial

// ---------------------------------------------------------------------------
// Parallel kernels. Each OpenMP loop splits independent output elements;
// per-element summation order matches the serial reference exactly.
// ---------------------------------------------------------------------------

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (!use_parallel(a.rows() * b.rows() * a.cols())) return serial::matmul_nt(a, b);
  if (a.cols() != b.cols()) throw ShapeMismatch("matmul_nt: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_max_threads)
#endif
  for (long long i = 0; i < static_cast<long long>(a.rows()); ++i) {
    const double* arow = a.data() + i * a.cols();
    double* orow = out.data() + i * out.cols();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* brow = b.data() + j * b.cols();
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b, double alpha) {
  if (!use_parallel(a.rows() * b.cols())) return serial::matmul_tn(a, b, alpha);
  if (a.rows() != b.rows()) throw ShapeMismatch("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_max_threads)
#endif
  for (long long c = 0; c < static_cast<long long>(a.cols()); ++c) {
    double* orow = out.data() + c * out.cols();
    for (std::size_t n = 0; n < a.rows(); ++n) {
      const double w = a(n, static_cast<std::size_t>(c));
      if (w == 0.0) continue;
      const double* brow = b.data() + n * b.cols();
      for (std::size_t q = 0; q < b.cols(); ++q) orow[q] += w * brow[q];
    }
    for (std::size_t q = 0; q < b.cols(); ++q) orow[q] *= alpha;
  }
  return out;
}

void softmax_rows_inplace(Matrix& m) {
  if (!use_parallel(m.size())) return serial::softmax_rows_inplace(m);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_max_threads)
#endif
  for (long long r = 0; r < static_cast<long long>(m.rows()); ++r)
    serial::softmax_row(m.data() + r * m.cols(), m.cols());
}

void log_softmax_rows_inplace(Matrix& m) {
  if (!use_parallel(m.size())) return serial::log_softmax_rows_inplace(m);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_max_threads)
#endif
  for (long long r = 0; r < static_cast<long long>(m.rows()); ++r)
    serial::log_softmax_row(m.data() + r * m.cols(), m.cols());
}

void l2_normalize_rows_inplace(Matrix& m) {
  if (!use_parallel(m.size())) return serial::l2_normalize_rows_inplace(m);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_max_threads)
#endif
  for (long long r = 0; r < static_cast<long long>(m.rows()); ++r)
    serial::l2_normalize_row(m.data() + r * m.cols(), m.cols());
}

void assign_nearest(const Matrix& points, const Matrix& centroids,
                    std::vector<int>& label_out, std::vector<double>& dist2_out) {
  if (!use_parallel(points.rows() * centroids.rows() * points.cols()))
    return serial::assign_nearest(points, centroids, label_out, dist2_out);
  if (points.cols() != centroids.cols()) throw ShapeMismatch("assign_nearest: dim mismatch");
  label_out.resize(points.rows());
  dist2_out.resize(points.rows());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(g_max_threads)
#endif
  for (long long i = 0; i < static_cast<long long>(points.rows()); ++i)
    serial::nearest_centroid(points, centroids, static_cast<std::size_t>(i),
                             label_out[i], dist2_out[i]);
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

Matrix gather_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* src = m.data() + static_cast<std::size_t>(rows[i]) * m.cols();
    std::copy(src, src + m.cols(), out.data() + i * m.cols());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double gram_lambda_max(const Matrix& x, int iters) {
  const std::size_t d = x.cols();
  if (d == 0 || x.rows() == 0) return 0.0;
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> xv(x.rows()), gv(d);
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t n = 0; n < x.rows(); ++n) xv[n] = dot(x.row(n), v);
    std::fill(gv.begin(), gv.end(), 0.0);
    for (std::size_t n = 0; n < x.rows(); ++n) {
      const double* row = x.data() + n * d;
      for (std::size_t k = 0; k < d; ++k) gv[k] += xv[n] * row[k];
    }
    const double nrm = norm2(gv);
    if (nrm == 0.0) return 0.0;
    double next = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      v[k] = gv[k] / nrm;
      next += v[k] * gv[k];
    }
    if (it > 10 && std::abs(nrm - lambda) <= 1e-12 * std::max(1.0, lambda)) {
      lambda = nrm;
      break;
    }
    lambda = nrm;
  }
  return lambda;
}

}  // namespace turtle::kernels

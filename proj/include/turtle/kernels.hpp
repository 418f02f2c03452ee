#pragma once

#include <span>
#include <vector>

#include "turtle/matrix.hpp"

namespace turtle::kernels {

// Thread budget for the parallel kernels. Defaults to 1 (serial); the CLI
// raises it via --jobs. Parallel and serial paths produce bit-identical
// results: work is split only across independent output elements, never
// across reduction order.
int max_threads();
void set_max_threads(int n);

// Serial reference implementations, kept callable for tests and benchmarks.
namespace serial {
Matrix matmul_nt(const Matrix& a, const Matrix& b);               // a (n x k) * b^T (k x m) -> n x m
Matrix matmul_tn(const Matrix& a, const Matrix& b, double alpha); // alpha * a^T (k x n) * b (n x q) -> k x q
void softmax_rows_inplace(Matrix& m);
void log_softmax_rows_inplace(Matrix& m);
void l2_normalize_rows_inplace(Matrix& m);                        // zero rows pass through unchanged
void assign_nearest(const Matrix& points, const Matrix& centroids,
                    std::vector<int>& label_out, std::vector<double>& dist2_out);
}  // namespace serial

// Parallel entry points; fall back to the serial path when max_threads() == 1
// or the problem is too small to split.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b, double alpha = 1.0);
void softmax_rows_inplace(Matrix& m);
void log_softmax_rows_inplace(Matrix& m);
void l2_normalize_rows_inplace(Matrix& m);
void assign_nearest(const Matrix& points, const Matrix& centroids,
                    std::vector<int>& label_out, std::vector<double>& dist2_out);

// Small serial helpers shared across modules.
Matrix gather_rows(const Matrix& m, std::span<const int> rows);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Largest eigenvalue of the PSD Gram matrix x^T x (fixed-start power
// iteration; deterministic). Used for Lipschitz-based step sizes.
double gram_lambda_max(const Matrix& x, int iters = 200);

}  // namespace turtle::kernels

// Benchmark comparing the OpenMP kernels against the serial reference on the
// shapes the training loop actually produces. Also asserts the two paths
// agree bit-for-bit.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <string>

#include "turtle/kernels.hpp"
#include "turtle/rng.hpp"

using namespace turtle;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  SplitMix64 rng(seed);
  for (double& v : m.flat()) v = rng.next_gaussian();
  return m;
}

template <typename Fn>
double time_seconds(Fn&& fn, int repeats) {
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(stop - start).count() / repeats;
}

void report(const std::string& name, double serial_s, double parallel_s, bool identical) {
  std::cout << name << ": serial " << serial_s * 1e3 << " ms, parallel " << parallel_s * 1e3
            << " ms, speedup " << serial_s / parallel_s << "x, identical "
            << (identical ? "yes" : "NO") << "\n";
  if (!identical) std::exit(2);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  std::size_t n = 20000, q = 256, c = 64;
  int repeats = 5;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--threads" && i + 1 < argc) threads = std::atoi(argv[++i]);
    else if (arg == "--rows" && i + 1 < argc) n = static_cast<std::size_t>(std::atoll(argv[++i]));
    else if (arg == "--dim" && i + 1 < argc) q = static_cast<std::size_t>(std::atoll(argv[++i]));
    else if (arg == "--classes" && i + 1 < argc) c = static_cast<std::size_t>(std::atoll(argv[++i]));
    else if (arg == "--repeats" && i + 1 < argc) repeats = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: bench_kernels [--threads N] [--rows N] [--dim Q] [--classes C]"
                   " [--repeats R]\n";
      return 1;
    }
  }
  if (threads <= 0) {
#ifdef _OPENMP
    threads = 4;
#else
    threads = 1;
#endif
  }

  std::cout << "rows " << n << ", dim " << q << ", classes " << c << ", threads " << threads
            << "\n";

  const Matrix x = random_matrix(n, q, 1);
  const Matrix w = random_matrix(c, q, 2);
  const Matrix delta = random_matrix(n, c, 3);

  // logits = X W^T
  kernels::set_max_threads(1);
  Matrix logits_serial;
  const double t_nt_serial =
      time_seconds([&]() { logits_serial = kernels::serial::matmul_nt(x, w); }, repeats);
  kernels::set_max_threads(threads);
  Matrix logits_parallel;
  const double t_nt_parallel =
      time_seconds([&]() { logits_parallel = kernels::matmul_nt(x, w); }, repeats);
  report("matmul_nt (logits)", t_nt_serial, t_nt_parallel, logits_serial == logits_parallel);

  // gradient accumulation delta^T X
  kernels::set_max_threads(1);
  Matrix grad_serial;
  const double t_tn_serial = time_seconds(
      [&]() { grad_serial = kernels::serial::matmul_tn(delta, x, 1.0 / double(n)); }, repeats);
  kernels::set_max_threads(threads);
  Matrix grad_parallel;
  const double t_tn_parallel =
      time_seconds([&]() { grad_parallel = kernels::matmul_tn(delta, x, 1.0 / double(n)); },
                   repeats);
  report("matmul_tn (gradient)", t_tn_serial, t_tn_parallel, grad_serial == grad_parallel);

  // row softmax
  Matrix soft_serial = logits_serial, soft_parallel = logits_serial;
  kernels::set_max_threads(1);
  const double t_soft_serial =
      time_seconds([&]() {
        soft_serial = logits_serial;
        kernels::serial::softmax_rows_inplace(soft_serial);
      }, repeats);
  kernels::set_max_threads(threads);
  const double t_soft_parallel =
      time_seconds([&]() {
        soft_parallel = logits_serial;
        kernels::softmax_rows_inplace(soft_parallel);
      }, repeats);
  report("softmax_rows", t_soft_serial, t_soft_parallel, soft_serial == soft_parallel);

  // row normalization
  Matrix norm_serial = x, norm_parallel = x;
  kernels::set_max_threads(1);
  const double t_norm_serial =
      time_seconds([&]() {
        norm_serial = x;
        kernels::serial::l2_normalize_rows_inplace(norm_serial);
      }, repeats);
  kernels::set_max_threads(threads);
  const double t_norm_parallel =
      time_seconds([&]() {
        norm_parallel = x;
        kernels::l2_normalize_rows_inplace(norm_parallel);
      }, repeats);
  report("l2_normalize_rows", t_norm_serial, t_norm_parallel, norm_serial == norm_parallel);

  // nearest-centroid assignment
  const Matrix centroids = random_matrix(c, q, 4);
  std::vector<int> lab_a, lab_b;
  std::vector<double> d_a, d_b;
  kernels::set_max_threads(1);
  const double t_asg_serial = time_seconds(
      [&]() { kernels::serial::assign_nearest(x, centroids, lab_a, d_a); }, repeats);
  kernels::set_max_threads(threads);
  const double t_asg_parallel =
      time_seconds([&]() { kernels::assign_nearest(x, centroids, lab_b, d_b); }, repeats);
  report("assign_nearest", t_asg_serial, t_asg_parallel, lab_a == lab_b && d_a == d_b);

  return 0;
}

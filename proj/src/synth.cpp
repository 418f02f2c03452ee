#include "turtle/synth.hpp"

#include <cmath>
#include <numeric>

#include "turtle/errors.hpp"
#include "turtle/kernels.hpp"
#include "turtle/rng.hpp"

namespace turtle {

namespace {

// Random orthogonal matrix via Gram-Schmidt on Gaussian columns.
Matrix random_orthogonal(std::size_t dim, SplitMix64& rng) {
  Matrix q(dim, dim);
  for (std::size_t r = 0; r < dim; ++r) {
    auto row = q.row(r);
    for (double& v : row) v = rng.next_gaussian();
    for (std::size_t prev = 0; prev < r; ++prev) {
      const auto prow = q.row(prev);
      const double proj = kernels::dot(row, prow);
      for (std::size_t j = 0; j < dim; ++j) row[j] -= proj * prow[j];
    }
    const double nrm = kernels::norm2(row);
    if (nrm < 1e-12) {
      // Degenerate draw; retry the row.
      --r;
      continue;
    }
    for (double& v : row) v /= nrm;
  }
  return q;
}

// Class centroids on a common sphere, radius scaled so the minimum pairwise
// distance equals `separation` (within-blob std is 1). Equal radii keep
// distinct classes from collapsing under row-wise L2 normalization.
Matrix sample_centroids(int n_classes, std::size_t dim, double separation, SplitMix64& rng) {
  Matrix centroids(static_cast<std::size_t>(n_classes), dim);
  for (;;) {
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      auto row = centroids.row(c);
      for (double& v : row) v = rng.next_gaussian();
      const double nrm = kernels::norm2(row);
      if (nrm < 1e-9) return sample_centroids(n_classes, dim, separation, rng);
      for (double& v : row) v /= nrm;
    }
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < centroids.rows(); ++a)
      for (std::size_t b = a + 1; b < centroids.rows(); ++b) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double diff = centroids(a, j) - centroids(b, j);
          d2 += diff * diff;
        }
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    if (min_dist > 1e-3) {  // re-draw nearly coincident directions
      const double scale = separation / min_dist;
      for (double& v : centroids.flat()) v *= scale;
      return centroids;
    }
  }
}

}  // namespace

SynthResult synth(const SynthSpec& spec) {
  if (spec.n_classes < 1 || spec.n_views < 1 || spec.n_samples < 1)
    throw TooFewSamples("synth: need at least one sample, class and view");
  if (spec.separation <= 0.0) throw ShapeMismatch("synth: separation must be positive");

  std::vector<int> dims = spec.dims;
  while (static_cast<int>(dims.size()) < spec.n_views)
    dims.push_back(16 + 8 * static_cast<int>(dims.size()));
  dims.resize(static_cast<std::size_t>(spec.n_views));

  // Class sizes: balanced by default, otherwise from the proportions vector.
  std::vector<std::size_t> class_sizes(static_cast<std::size_t>(spec.n_classes), 0);
  if (spec.proportions.empty()) {
    for (std::size_t i = 0; i < spec.n_samples; ++i)
      class_sizes[i % static_cast<std::size_t>(spec.n_classes)] += 1;
  } else {
    if (spec.proportions.size() != static_cast<std::size_t>(spec.n_classes))
      throw ShapeMismatch("synth: proportions length != class count");
    double total = std::accumulate(spec.proportions.begin(), spec.proportions.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-6) throw ShapeMismatch("synth: proportions must sum to 1");
    std::size_t assigned = 0;
    for (std::size_t c = 0; c + 1 < class_sizes.size(); ++c) {
      class_sizes[c] =
          static_cast<std::size_t>(std::floor(spec.proportions[c] * static_cast<double>(spec.n_samples)));
      assigned += class_sizes[c];
    }
    class_sizes.back() = spec.n_samples - assigned;
  }

  SplitMix64 rng(spec.seed);
  std::vector<int> labels;
  labels.reserve(spec.n_samples);
  for (int c = 0; c < spec.n_classes; ++c)
    labels.insert(labels.end(), class_sizes[static_cast<std::size_t>(c)], c);
  rng.shuffle(labels);

  const std::uint64_t rot_base = spec.rotation_seed ? spec.rotation_seed : spec.seed;

  SynthResult result;
  result.dataset.n_classes = spec.n_classes;
  result.dataset.labels = labels;
  for (int k = 0; k < spec.n_views; ++k) {
    const std::size_t q = static_cast<std::size_t>(dims[static_cast<std::size_t>(k)]);
    const Matrix centroids = sample_centroids(spec.n_classes, q, spec.separation, rng);
    Matrix x(spec.n_samples, q);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
      const auto mean = centroids.row(static_cast<std::size_t>(labels[i]));
      auto row = x.row(i);
      for (std::size_t j = 0; j < q; ++j) row[j] = mean[j] + rng.next_gaussian();
    }
    SplitMix64 rot_rng(SplitMix64::derive(rot_base, 0x526F74ULL + static_cast<std::uint64_t>(k)));
    const Matrix rotation = random_orthogonal(q, rot_rng);
    Matrix rotated = kernels::matmul_nt(x, rotation);
    result.dataset.views.push_back({"view_" + std::to_string(k), std::move(rotated)});
  }
  result.dataset.validate();
  return result;
}

void write_synth(const SynthResult& result, const std::string& out_dir) {
  for (std::size_t k = 0; k < result.dataset.views.size(); ++k)
    save_emb1(out_dir + "/view_" + std::to_string(k) + ".emb", result.dataset.views[k].data);
  save_labels(out_dir + "/labels.txt", result.dataset.labels);
}

}  // namespace turtle

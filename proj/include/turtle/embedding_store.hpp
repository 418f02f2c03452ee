#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turtle/matrix.hpp"

namespace turtle {

// One representation space: an N x q dense matrix with a name for reports.
struct EmbeddingMatrix {
  std::string name;
  Matrix data;

  std::size_t n_samples() const { return data.rows(); }
  std::size_t dim() const { return data.cols(); }
};

// K aligned views of one dataset, plus optional ground-truth labels and an
// optional train/test mask (0 = train, 1 = test).
struct MultiViewDataset {
  std::vector<EmbeddingMatrix> views;
  std::vector<int> labels;         // empty when absent
  int n_classes = 0;
  std::vector<std::uint8_t> split;  // empty when absent

  std::size_t n_views() const { return views.size(); }
  std::size_t n_samples() const { return views.empty() ? 0 : views[0].n_samples(); }
  void validate() const;  // throws on inconsistent shapes or out-of-range labels
};

struct SplitSpec {
  int fold_count = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // per-sample fold index
};

enum class EmbeddingFormat { Emb1, Csv };

// EMB1: magic "EMB1", little-endian u32 N, u32 q, then N*q little-endian
// float32 values row-major.
EmbeddingMatrix load_embeddings(const std::string& path, EmbeddingFormat format);
void save_emb1(const std::string& path, const Matrix& m);

// Labels: plain text, one base-10 integer per line.
std::vector<int> load_labels(const std::string& path);
void save_labels(const std::string& path, const std::vector<int>& labels);

// Row-wise L2 normalization; all-zero rows are returned unchanged.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

// Concatenation of the per-view L2-normalized rows, in view order.
EmbeddingMatrix concatenate_views(const MultiViewDataset& d);

// Balanced fold assignment (sizes differ by at most 1), deterministic in seed.
SplitSpec make_folds(std::size_t n_samples, int fold_count, std::uint64_t seed);

}  // namespace turtle

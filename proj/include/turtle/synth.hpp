#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turtle/embedding_store.hpp"

namespace turtle {

// Desk-scale benchmark generator: Gaussian blobs around on-sphere class
// centroids, re-expressed per view through an independent random orthogonal
// map so the K views are distinct spaces sharing one latent labeling.
struct SynthSpec {
  std::size_t n_samples = 600;
  int n_classes = 3;
  int n_views = 2;
  std::vector<int> dims;            // per view; defaults to {16, 24, 32, ...}
  double separation = 10.0;         // min inter-centroid distance over within-blob std
  std::uint64_t seed = 0;
  std::uint64_t rotation_seed = 0;  // 0 means derive from seed
  std::vector<double> proportions;  // empty = balanced
};

struct SynthResult {
  MultiViewDataset dataset;  // labels filled with the generator ground truth
};

SynthResult synth(const SynthSpec& spec);

// Writes view_<k>.emb and labels.txt into an existing directory.
void write_synth(const SynthResult& result, const std::string& out_dir);

}  // namespace turtle

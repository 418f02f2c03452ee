#pragma once

#include <vector>

#include "turtle/embedding_store.hpp"
#include "turtle/matrix.hpp"
#include "turtle/rng.hpp"

namespace turtle {

// One weight-normalized linear softmax head over a representation space.
// Effective weight row c is gain[c] * direction[c] / ||direction[c]||.
struct TaskHead {
  Matrix direction;          // C x q
  std::vector<double> gain;  // length C
  int space_index = 0;
};

// The labeling hypothesis: an average of K weight-normalized heads, one per
// view. Forward outputs are rows on the probability simplex.
struct TaskEncoder {
  std::vector<TaskHead> heads;
  int n_classes = 0;
};

struct SoftLabeling {
  Matrix probs;  // N x C, rows nonnegative and summing to 1
};

// Random init: direction entries i.i.d. Gaussian with std q^-1/2, gains 1.
TaskEncoder make_task_encoder(const std::vector<std::size_t>& view_dims, int n_classes,
                              SplitMix64& rng);

// Effective (weight-normalized) C x q weight matrix of a head.
Matrix effective_weights(const TaskHead& head);

// Pre-softmax logits of one head on a view.
Matrix head_logits(const TaskHead& head, const Matrix& view);

SoftLabeling forward_head(const TaskHead& head, const EmbeddingMatrix& view);

// Elementwise mean of the K per-head outputs, accumulated in head order.
SoftLabeling forward_ensemble(const TaskEncoder& enc, const MultiViewDataset& d);

// Per-row argmax; ties resolve to the lowest class index.
std::vector<int> hard_assign(const SoftLabeling& s);

// Mean of rows.
std::vector<double> label_distribution(const SoftLabeling& s);

// Shannon entropy in nats with 0 ln 0 := 0.
double entropy_nats(const std::vector<double>& p);

// R(theta) = sum over heads of the entropy of that head's mean output.
double entropy_regularizer(const TaskEncoder& enc, const MultiViewDataset& d);

int distinct_class_count(const std::vector<int>& labels);

}  // namespace turtle

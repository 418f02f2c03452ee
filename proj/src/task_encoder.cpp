#include "turtle/task_encoder.hpp"

#include <cmath>
#include <set>

#include "turtle/errors.hpp"
#include "turtle/kernels.hpp"

namespace turtle {

TaskEncoder make_task_encoder(const std::vector<std::size_t>& view_dims, int n_classes,
                              SplitMix64& rng) {
  TaskEncoder enc;
  enc.n_classes = n_classes;
  for (std::size_t k = 0; k < view_dims.size(); ++k) {
    const std::size_t q = view_dims[k];
    TaskHead head;
    head.space_index = static_cast<int>(k);
    head.direction = Matrix(static_cast<std::size_t>(n_classes), q);
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(q));
    for (double& v : head.direction.flat()) v = std_dev * rng.next_gaussian();
    head.gain.assign(static_cast<std::size_t>(n_classes), 1.0);
    enc.heads.push_back(std::move(head));
  }
  return enc;
}

Matrix effective_weights(const TaskHead& head) {
  Matrix w = head.direction;
  for (std::size_t c = 0; c < w.rows(); ++c) {
    const double nrm = kernels::norm2(w.row(c));
    if (nrm == 0.0) throw NonFiniteGradient("weight-norm direction row has zero norm");
    const double scale = head.gain[c] / nrm;
    for (double& v : w.row(c)) v *= scale;
  }
  return w;
}

Matrix head_logits(const TaskHead& head, const Matrix& view) {
  if (view.cols() != head.direction.cols())
    throw DimensionMismatch("head expects dim " + std::to_string(head.direction.cols()) +
                            ", view has " + std::to_string(view.cols()));
  return kernels::matmul_nt(view, effective_weights(head));
}

SoftLabeling forward_head(const TaskHead& head, const EmbeddingMatrix& view) {
  Matrix logits = head_logits(head, view.data);
  kernels::softmax_rows_inplace(logits);
  return SoftLabeling{std::move(logits)};
}

SoftLabeling forward_ensemble(const TaskEncoder& enc, const MultiViewDataset& d) {
  if (enc.heads.size() != d.n_views())
    throw ViewCountMismatch("encoder has " + std::to_string(enc.heads.size()) +
                            " heads, dataset has " + std::to_string(d.n_views()) + " views");
  std::vector<Matrix> per_head(enc.heads.size());
  // Heads are independent; the mean below accumulates in fixed head order.
  for (std::size_t k = 0; k < enc.heads.size(); ++k) {
    per_head[k] = head_logits(enc.heads[k], d.views[k].data);
    kernels::softmax_rows_inplace(per_head[k]);
  }
  Matrix mean = std::move(per_head[0]);
  for (std::size_t k = 1; k < per_head.size(); ++k)
    for (std::size_t i = 0; i < mean.size(); ++i) mean.flat()[i] += per_head[k].flat()[i];
  const double inv_k = 1.0 / static_cast<double>(enc.heads.size());
  for (double& v : mean.flat()) v *= inv_k;
  return SoftLabeling{std::move(mean)};
}

std::vector<int> hard_assign(const SoftLabeling& s) {
  std::vector<int> labels(s.probs.rows());
  for (std::size_t r = 0; r < s.probs.rows(); ++r) {
    const auto row = s.probs.row(r);
    int best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = static_cast<int>(c);
    labels[r] = best;
  }
  return labels;
}

std::vector<double> label_distribution(const SoftLabeling& s) {
  std::vector<double> mean(s.probs.cols(), 0.0);
  for (std::size_t r = 0; r < s.probs.rows(); ++r) {
    const auto row = s.probs.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) mean[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(s.probs.rows());
  for (double& v : mean) v *= inv;
  return mean;
}

double entropy_nats(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double entropy_regularizer(const TaskEncoder& enc, const MultiViewDataset& d) {
  if (enc.heads.size() != d.n_views())
    throw ViewCountMismatch("entropy_regularizer: head/view count mismatch");
  double r = 0.0;
  for (std::size_t k = 0; k < enc.heads.size(); ++k) {
    SoftLabeling s = forward_head(enc.heads[k], d.views[k]);
    r += entropy_nats(label_distribution(s));
  }
  return r;
}

int distinct_class_count(const std::vector<int>& labels) {
  std::set<int> seen(labels.begin(), labels.end());
  return static_cast<int>(seen.size());
}

}  // namespace turtle

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "turtle/embedding_store.hpp"
#include "turtle/inner_solver.hpp"
#include "turtle/task_encoder.hpp"

namespace turtle {

struct TrainConfig {
  int n_classes = 0;
  double gamma = 10.0;
  int outer_iters = 6000;
  int batch_size = 10000;
  double outer_lr = 1e-3;
  double inner_lr = 1e-2;
  bool warm_start = true;
  std::uint64_t seed = 0;
  bool normalize_views = false;  // optional per-view L2 normalization before training
  InnerConfig inner;             // steps default 10; learning_rate mirrors inner_lr
};

struct TrainReport {
  SoftLabeling soft;            // over the full dataset
  std::vector<int> hard_labels;
  std::vector<double> loss_trace;     // objective per iteration, on the batch
  std::vector<double> entropy_trace;  // R(theta) per iteration, on the batch
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string generator;  // PRNG name
  TrainConfig config;
  int distinct_classes = 0;
  bool degenerate = false;  // hard labeling uses fewer than C classes
  bool failed = false;
  std::string failure;
};

struct HyperGrid {
  std::vector<double> outer_lrs;
  std::vector<double> inner_lrs;
  std::vector<bool> warm_start_options;

  std::size_t size() const {
    return outer_lrs.size() * inner_lrs.size() * warm_start_options.size();
  }
  // 5 outer x 5 inner learning rates x {warm, cold} = 50 triplets.
  static HyperGrid defaults();
};

// Per-head gradient of a scalar w.r.t. the encoder parameters.
struct EncoderGrad {
  std::vector<Matrix> d_direction;
  std::vector<std::vector<double>> d_gain;
};

// sum_k soft_cross_entropy(classifier logits, tau) - gamma * R(theta),
// evaluated on the views passed in (the batch).
double turtle_objective(const TaskEncoder& enc, const std::vector<InnerClassifier>& classifiers,
                        const MultiViewDataset& batch, double gamma);

// Gradient of R(theta) on the given views; finite-difference checked in tests.
EncoderGrad entropy_regularizer_gradient(const TaskEncoder& enc, const MultiViewDataset& batch);

// Partial derivative of the objective w.r.t. theta with all classifier
// weights held constant (the first-order hypergradient). Optionally returns
// the objective and R values computed along the way.
EncoderGrad objective_encoder_gradient(const TaskEncoder& enc,
                                       const std::vector<InnerClassifier>& classifiers,
                                       const MultiViewDataset& batch, double gamma,
                                       double* objective_out = nullptr,
                                       double* entropy_out = nullptr);

// Adam accumulators for the encoder parameters.
struct EncoderAdamState {
  std::vector<Matrix> dir_m, dir_v;
  std::vector<std::vector<double>> gain_m, gain_v;
  long step = 0;
};
EncoderAdamState make_encoder_adam_state(const TaskEncoder& enc);

// One Adam update of theta from the first-order hypergradient. Optionally
// reports the pre-update objective and R values.
void outer_step(TaskEncoder& enc, const std::vector<InnerClassifier>& classifiers,
                const MultiViewDataset& batch, double gamma, double lr,
                EncoderAdamState& adam, double* objective_out = nullptr,
                double* entropy_out = nullptr);

// Alternating optimization (task generation, M inner steps per space, one
// outer step) for outer_iters iterations. Never silently produces NaN: a
// non-finite gradient stops the run and marks the report failed.
TrainReport turtle_train(const MultiViewDataset& d, const TrainConfig& cfg);

// One turtle_train per grid triplet; seeds derive from base.seed and the
// triplet index. Individual failures are recorded, not fatal.
std::vector<std::pair<TrainConfig, TrainReport>> run_grid(const MultiViewDataset& d,
                                                          const HyperGrid& grid,
                                                          const TrainConfig& base, int jobs = 1);

// report.txt (key: value lines), trace.csv, soft_labels.emb, labels.txt.
void write_train_report(const std::string& dir, const TrainReport& report);

}  // namespace turtle

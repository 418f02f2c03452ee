#include <cmath>

#include "doctest.h"
#include "oracle_helpers.hpp"
#include "turtle/kernels.hpp"
#include "turtle/selection_eval.hpp"
#include "turtle/synth.hpp"
#include "turtle/turtle_optimizer.hpp"

using namespace turtle;

namespace {

MultiViewDataset random_dataset(std::size_t n, std::vector<std::size_t> dims, int classes,
                                std::uint64_t seed) {
  MultiViewDataset d;
  d.n_classes = classes;
  SplitMix64 rng(seed);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    EmbeddingMatrix v{"v" + std::to_string(k), Matrix(n, dims[k])};
    for (double& x : v.data.flat()) x = rng.next_gaussian();
    d.views.push_back(std::move(v));
  }
  return d;
}

std::vector<InnerClassifier> zero_classifiers(const MultiViewDataset& d, int classes) {
  std::vector<InnerClassifier> out;
  for (const auto& v : d.views) out.push_back(make_inner_classifier(classes, v.dim()));
  return out;
}

std::vector<double*> encoder_coordinates(TaskEncoder& enc) {
  std::vector<double*> coords;
  for (auto& head : enc.heads) {
    for (double& v : head.direction.flat()) coords.push_back(&v);
    for (double& g : head.gain) coords.push_back(&g);
  }
  return coords;
}

std::vector<double> flatten_grad(const EncoderGrad& grad) {
  std::vector<double> flat;
  for (std::size_t k = 0; k < grad.d_direction.size(); ++k) {
    for (double v : grad.d_direction[k].flat()) flat.push_back(v);
    for (double v : grad.d_gain[k]) flat.push_back(v);
  }
  return flat;
}

}  // namespace

TEST_CASE("objective anchors: uniform case and linearity in gamma") {
  const int classes = 3;
  MultiViewDataset d = random_dataset(12, {4, 6}, classes, 1);
  SplitMix64 rng(2);
  TaskEncoder enc = make_task_encoder({4, 6}, classes, rng);
  for (auto& head : enc.heads)
    for (double& g : head.gain) g = 0.0;
  std::vector<InnerClassifier> clfs = zero_classifiers(d, classes);

  const double k_ln_c = 2.0 * std::log(3.0);
  const double gamma = 10.0;
  CHECK(turtle_objective(enc, clfs, d, gamma) ==
        doctest::Approx(k_ln_c - gamma * k_ln_c).epsilon(1e-9));

  // Doubling gamma subtracts exactly gamma * R more.
  TaskEncoder enc2 = make_task_encoder({4, 6}, classes, rng);
  const double r = entropy_regularizer(enc2, d);
  const double at_g = turtle_objective(enc2, clfs, d, gamma);
  const double at_2g = turtle_objective(enc2, clfs, d, 2.0 * gamma);
  CHECK(at_2g - at_g == doctest::Approx(-gamma * r).epsilon(1e-9));
}

TEST_CASE("objective vanishes in the perfect-fit limit at gamma 0") {
  // One-hot tau aligned with confident classifier logits in a single space.
  MultiViewDataset d;
  d.n_classes = 2;
  d.views.push_back({"v", Matrix(2, 2)});
  d.views[0].data(0, 0) = 1.0;
  d.views[0].data(1, 1) = 1.0;
  TaskEncoder enc;
  enc.n_classes = 2;
  TaskHead head;
  head.direction = Matrix(2, 2);
  head.direction(0, 0) = 1.0;
  head.direction(1, 1) = 1.0;
  head.gain = {80.0, 80.0};
  head.space_index = 0;
  enc.heads.push_back(head);

  std::vector<InnerClassifier> clfs = zero_classifiers(d, 2);
  clfs[0].weights(0, 0) = 80.0;
  clfs[0].weights(1, 1) = 80.0;
  CHECK(turtle_objective(enc, clfs, d, 0.0) < 1e-10);
}

TEST_CASE("entropy regularizer gradient matches finite differences") {
  SplitMix64 seeder(33);
  for (int instance = 0; instance < 10; ++instance) {
    const std::uint64_t seed = seeder.next_u64();
    MultiViewDataset d = random_dataset(6, {3, 4}, 3, seed);
    SplitMix64 rng(seed + 1);
    TaskEncoder enc = make_task_encoder({3, 4}, 3, rng);
    for (auto& head : enc.heads)
      for (double& g : head.gain) g = 1.0 + 0.5 * rng.next_gaussian();

    EncoderGrad analytic = entropy_regularizer_gradient(enc, d);
    const double err = oracle::gradient_check(
        encoder_coordinates(enc), flatten_grad(analytic),
        [&]() { return entropy_regularizer(enc, d); });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("objective encoder gradient matches finite differences") {
  SplitMix64 seeder(44);
  for (int instance = 0; instance < 5; ++instance) {
    const std::uint64_t seed = seeder.next_u64();
    MultiViewDataset d = random_dataset(7, {4, 3}, 3, seed);
    SplitMix64 rng(seed + 9);
    TaskEncoder enc = make_task_encoder({4, 3}, 3, rng);
    std::vector<InnerClassifier> clfs = zero_classifiers(d, 3);
    for (auto& clf : clfs)
      for (double& w : clf.weights.flat()) w = 0.4 * rng.next_gaussian();

    const double gamma = 2.5;
    EncoderGrad analytic = objective_encoder_gradient(enc, clfs, d, gamma);
    const double err = oracle::gradient_check(
        encoder_coordinates(enc), flatten_grad(analytic),
        [&]() { return turtle_objective(enc, clfs, d, gamma); });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("uniform classifier logits make the gamma-0 gradient vanish") {
  MultiViewDataset d = random_dataset(9, {5}, 3, 55);
  SplitMix64 rng(56);
  TaskEncoder enc = make_task_encoder({5}, 3, rng);
  std::vector<InnerClassifier> clfs = zero_classifiers(d, 3);  // uniform predictions

  EncoderGrad grad = objective_encoder_gradient(enc, clfs, d, 0.0);
  for (double v : flatten_grad(grad)) CHECK(std::abs(v) < 1e-12);

  // Finite differences agree that the objective is locally flat: every
  // per-coordinate difference quotient sits below 1e-7 in absolute value.
  for (double* coord : encoder_coordinates(enc)) {
    const double fd = oracle::central_difference(
        [&]() { return turtle_objective(enc, clfs, d, 0.0); },
        [&](double delta) { *coord += delta; });
    CHECK(std::abs(fd) < 1e-7);
  }
}

TEST_CASE("the regularizer term alone drives head means toward uniform") {
  MultiViewDataset d = random_dataset(40, {5}, 3, 66);
  SplitMix64 rng(67);
  TaskEncoder enc = make_task_encoder({5}, 3, rng);
  for (double& g : enc.heads[0].gain) g = 1.0 + rng.next_gaussian();
  // Zero-weight classifiers contribute an exactly-zero cross-entropy
  // gradient, leaving only the entropy term.
  std::vector<InnerClassifier> clfs = zero_classifiers(d, 3);
  EncoderAdamState adam = make_encoder_adam_state(enc);
  for (int step = 0; step < 500; ++step)
    outer_step(enc, clfs, d, 10.0, 1e-3, adam);

  SoftLabeling s = forward_head(enc.heads[0], d.views[0]);
  std::vector<double> mean = label_distribution(s);
  for (double m : mean) CHECK(std::abs(m - 1.0 / 3.0) < 1e-3);
}

TEST_CASE("outer_step is deterministic") {
  MultiViewDataset d = random_dataset(10, {4}, 2, 77);
  SplitMix64 rng(78);
  TaskEncoder enc_a = make_task_encoder({4}, 2, rng);
  TaskEncoder enc_b = enc_a;
  std::vector<InnerClassifier> clfs = zero_classifiers(d, 2);
  for (double& w : clfs[0].weights.flat()) w = 0.3;
  EncoderAdamState adam_a = make_encoder_adam_state(enc_a);
  EncoderAdamState adam_b = make_encoder_adam_state(enc_b);
  outer_step(enc_a, clfs, d, 10.0, 1e-3, adam_a);
  outer_step(enc_b, clfs, d, 10.0, 1e-3, adam_b);
  for (std::size_t k = 0; k < enc_a.heads.size(); ++k) {
    CHECK(enc_a.heads[k].direction == enc_b.heads[k].direction);
    CHECK(enc_a.heads[k].gain == enc_b.heads[k].gain);
  }
}

TEST_CASE("turtle_train recovers well-separated blobs") {
  SynthSpec spec;
  spec.n_samples = 150;
  spec.n_classes = 3;
  spec.n_views = 2;
  spec.dims = {8, 12};
  spec.separation = 10.0;
  spec.seed = 5;
  SynthResult blobs = synth(spec);

  TrainConfig cfg;
  cfg.n_classes = 3;
  cfg.outer_iters = 800;
  cfg.outer_lr = 1e-3;
  cfg.inner_lr = 1e-2;
  cfg.warm_start = true;
  cfg.seed = 9;
  TrainReport report = turtle_train(blobs.dataset, cfg);

  CHECK(!report.failed);
  CHECK(report.loss_trace.size() == 800);
  CHECK(report.entropy_trace.size() == 800);
  for (double v : report.loss_trace) CHECK(std::isfinite(v));
  CHECK(report.degenerate == (report.distinct_classes < 3));

  AccuracyReport acc =
      clustering_accuracy(report.hard_labels, blobs.dataset.labels, 3);
  CHECK(acc.accuracy >= 0.99);
  CHECK(report.generator == std::string("splitmix64"));
}

TEST_CASE("batch sizes at or above N produce identical runs") {
  SynthSpec spec;
  spec.n_samples = 120;
  spec.n_classes = 3;
  spec.n_views = 1;
  spec.dims = {8};
  spec.separation = 8.0;
  spec.seed = 15;
  SynthResult blobs = synth(spec);

  TrainConfig cfg;
  cfg.n_classes = 3;
  cfg.outer_iters = 120;
  cfg.seed = 3;
  cfg.batch_size = 200;
  TrainReport a = turtle_train(blobs.dataset, cfg);
  cfg.batch_size = 10000;
  TrainReport b = turtle_train(blobs.dataset, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.hard_labels == b.hard_labels);
}

TEST_CASE("minibatch runs are deterministic") {
  SynthSpec spec;
  spec.n_samples = 150;
  spec.n_classes = 3;
  spec.n_views = 1;
  spec.dims = {8};
  spec.separation = 8.0;
  spec.seed = 25;
  SynthResult blobs = synth(spec);

  TrainConfig cfg;
  cfg.n_classes = 3;
  cfg.outer_iters = 100;
  cfg.batch_size = 64;
  cfg.seed = 4;
  TrainReport a = turtle_train(blobs.dataset, cfg);
  TrainReport b = turtle_train(blobs.dataset, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.soft.probs == b.soft.probs);
}

TEST_CASE("grid bookkeeping: default size, singleton equivalence, determinism") {
  CHECK(HyperGrid::defaults().size() == 50);

  SynthSpec spec;
  spec.n_samples = 60;
  spec.n_classes = 2;
  spec.n_views = 1;
  spec.dims = {6};
  spec.separation = 8.0;
  spec.seed = 31;
  SynthResult blobs = synth(spec);

  TrainConfig base;
  base.n_classes = 2;
  base.outer_iters = 40;
  base.seed = 77;

  HyperGrid single{{1e-3}, {1e-2}, {true}};
  auto runs = run_grid(blobs.dataset, single, base);
  REQUIRE(runs.size() == 1);
  TrainConfig expect = base;
  expect.outer_lr = 1e-3;
  expect.inner_lr = 1e-2;
  expect.warm_start = true;
  expect.seed = SplitMix64::derive(base.seed, 0);
  TrainReport direct = turtle_train(blobs.dataset, expect);
  CHECK(runs[0].second.loss_trace == direct.loss_trace);
  CHECK(runs[0].second.hard_labels == direct.hard_labels);

  HyperGrid small{{1e-3, 1e-4}, {1e-2}, {true, false}};
  auto first = run_grid(blobs.dataset, small, base, 2);
  auto second = run_grid(blobs.dataset, small, base, 1);
  REQUIRE(first.size() == 4);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].second.loss_trace == second[i].second.loss_trace);
    CHECK(first[i].second.hard_labels == second[i].second.hard_labels);
  }
}

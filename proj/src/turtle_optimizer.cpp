#include "turtle/turtle_optimizer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "turtle/errors.hpp"
#include "turtle/kernels.hpp"
#include "turtle/rng.hpp"

namespace turtle {

HyperGrid HyperGrid::defaults() {
  return HyperGrid{{0.01, 0.005, 0.001, 0.0005, 0.0001},
                   {0.01, 0.005, 0.001, 0.0005, 0.0001},
                   {true, false}};
}

namespace {

void adam_update_span(std::span<double> params, std::span<const double> grad,
                      std::span<double> m, std::span<double> v, long step, double lr,
                      double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

// Backpropagates per-head upstream dL/d(probs) through the softmax and the
// weight normalization. probs[k] are the head outputs on the batch.
EncoderGrad backward_through_heads(const TaskEncoder& enc,
                                   const std::vector<const Matrix*>& views,
                                   const std::vector<Matrix>& probs,
                                   const std::vector<Matrix>& upstream) {
  EncoderGrad grad;
  grad.d_direction.resize(enc.heads.size());
  grad.d_gain.resize(enc.heads.size());
  for (std::size_t k = 0; k < enc.heads.size(); ++k) {
    const Matrix& t = probs[k];
    const Matrix& u = upstream[k];
    Matrix dz(t.rows(), t.cols());
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const auto trow = t.row(r);
      const auto urow = u.row(r);
      const double inner = kernels::dot(urow, trow);
      auto zrow = dz.row(r);
      for (std::size_t c = 0; c < trow.size(); ++c) zrow[c] = trow[c] * (urow[c] - inner);
    }
    // d/d(effective weights) = dz^T X, then split into gain and direction.
    Matrix du = kernels::matmul_tn(dz, *views[k], 1.0);
    const TaskHead& head = enc.heads[k];
    Matrix dv(head.direction.rows(), head.direction.cols());
    std::vector<double> dg(head.gain.size());
    for (std::size_t c = 0; c < head.direction.rows(); ++c) {
      const auto vrow = head.direction.row(c);
      const auto urow = du.row(c);
      const double nrm = kernels::norm2(vrow);
      const double radial = kernels::dot(urow, vrow) / nrm;  // <du, v_hat>
      dg[c] = radial;
      const double scale = head.gain[c] / nrm;
      auto drow = dv.row(c);
      for (std::size_t j = 0; j < vrow.size(); ++j)
        drow[j] = scale * (urow[j] - radial * vrow[j] / nrm);
    }
    grad.d_direction[k] = std::move(dv);
    grad.d_gain[k] = std::move(dg);
  }
  return grad;
}

std::vector<const Matrix*> view_pointers(const MultiViewDataset& d) {
  std::vector<const Matrix*> out;
  out.reserve(d.views.size());
  for (const auto& v : d.views) out.push_back(&v.data);
  return out;
}

std::vector<Matrix> head_probs(const TaskEncoder& enc, const std::vector<const Matrix*>& views) {
  std::vector<Matrix> probs(enc.heads.size());
  for (std::size_t k = 0; k < enc.heads.size(); ++k) {
    probs[k] = head_logits(enc.heads[k], *views[k]);
    kernels::softmax_rows_inplace(probs[k]);
  }
  return probs;
}

Matrix mean_of(const std::vector<Matrix>& probs) {
  Matrix tau = probs[0];
  for (std::size_t k = 1; k < probs.size(); ++k)
    for (std::size_t i = 0; i < tau.size(); ++i) tau.flat()[i] += probs[k].flat()[i];
  const double inv = 1.0 / static_cast<double>(probs.size());
  for (double& v : tau.flat()) v *= inv;
  return tau;
}

std::vector<double> column_mean(const Matrix& m) {
  std::vector<double> mean(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) mean[c] += row[c];
  }
  for (double& v : mean) v /= static_cast<double>(m.rows());
  return mean;
}

struct ObjectivePieces {
  std::vector<Matrix> probs;      // per-head outputs on the batch
  Matrix tau;                     // ensemble mean
  Matrix log_p_sum;               // sum over spaces of classifier log-probs
  std::vector<std::vector<double>> head_means;
  double cross_entropy = 0.0;     // sum over spaces, mean over samples
  double entropy = 0.0;           // R(theta)
};

ObjectivePieces evaluate_pieces(const TaskEncoder& enc,
                                const std::vector<InnerClassifier>& classifiers,
                                const std::vector<const Matrix*>& views) {
  if (enc.heads.size() != views.size())
    throw ViewCountMismatch("objective: head/view count mismatch");
  if (classifiers.size() != views.size())
    throw ViewCountMismatch("objective: classifier/view count mismatch");
  ObjectivePieces out;
  out.probs = head_probs(enc, views);
  out.tau = mean_of(out.probs);

  const std::size_t batch = out.tau.rows();
  out.log_p_sum = Matrix(batch, out.tau.cols());
  for (std::size_t k = 0; k < classifiers.size(); ++k) {
    Matrix logp = kernels::matmul_nt(*views[k], classifiers[k].weights);
    kernels::log_softmax_rows_inplace(logp);
    for (std::size_t i = 0; i < logp.size(); ++i) out.log_p_sum.flat()[i] += logp.flat()[i];
  }
  double ce = 0.0;
  for (std::size_t i = 0; i < out.tau.size(); ++i)
    ce -= out.tau.flat()[i] * out.log_p_sum.flat()[i];
  out.cross_entropy = ce / static_cast<double>(batch);

  out.head_means.resize(out.probs.size());
  for (std::size_t k = 0; k < out.probs.size(); ++k) {
    out.head_means[k] = column_mean(out.probs[k]);
    out.entropy += entropy_nats(out.head_means[k]);
  }
  return out;
}

}  // namespace

double turtle_objective(const TaskEncoder& enc, const std::vector<InnerClassifier>& classifiers,
                        const MultiViewDataset& batch, double gamma) {
  ObjectivePieces p = evaluate_pieces(enc, classifiers, view_pointers(batch));
  return p.cross_entropy - gamma * p.entropy;
}

EncoderGrad entropy_regularizer_gradient(const TaskEncoder& enc, const MultiViewDataset& batch) {
  const auto views = view_pointers(batch);
  std::vector<Matrix> probs = head_probs(enc, views);
  const double inv_b = 1.0 / static_cast<double>(probs[0].rows());
  std::vector<Matrix> upstream(probs.size());
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const std::vector<double> mean = column_mean(probs[k]);
    upstream[k] = Matrix(probs[k].rows(), probs[k].cols());
    for (std::size_t r = 0; r < upstream[k].rows(); ++r) {
      auto row = upstream[k].row(r);
      // dH(mean)/d mean_c = -(ln mean_c + 1), spread over the batch mean.
      for (std::size_t c = 0; c < row.size(); ++c)
        row[c] = -(std::log(mean[c]) + 1.0) * inv_b;
    }
  }
  return backward_through_heads(enc, views, probs, upstream);
}

EncoderGrad objective_encoder_gradient(const TaskEncoder& enc,
                                       const std::vector<InnerClassifier>& classifiers,
                                       const MultiViewDataset& batch, double gamma,
                                       double* objective_out, double* entropy_out) {
  const auto views = view_pointers(batch);
  ObjectivePieces p = evaluate_pieces(enc, classifiers, views);
  if (objective_out) *objective_out = p.cross_entropy - gamma * p.entropy;
  if (entropy_out) *entropy_out = p.entropy;

  const double batch_n = static_cast<double>(p.tau.rows());
  const double k_count = static_cast<double>(enc.heads.size());
  std::vector<Matrix> upstream(p.probs.size());
  for (std::size_t k = 0; k < p.probs.size(); ++k) {
    upstream[k] = Matrix(p.probs[k].rows(), p.probs[k].cols());
    const auto& mean = p.head_means[k];
    for (std::size_t r = 0; r < upstream[k].rows(); ++r) {
      auto row = upstream[k].row(r);
      const auto srow = p.log_p_sum.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        // Cross-entropy targets are tau itself, so the gradient flows through
        // them; the entropy term enters with weight -gamma.
        row[c] = -srow[c] / (batch_n * k_count) +
                 gamma * (std::log(mean[c]) + 1.0) / batch_n;
      }
    }
  }
  return backward_through_heads(enc, views, p.probs, upstream);
}

EncoderAdamState make_encoder_adam_state(const TaskEncoder& enc) {
  EncoderAdamState st;
  for (const auto& head : enc.heads) {
    st.dir_m.emplace_back(head.direction.rows(), head.direction.cols());
    st.dir_v.emplace_back(head.direction.rows(), head.direction.cols());
    st.gain_m.emplace_back(head.gain.size(), 0.0);
    st.gain_v.emplace_back(head.gain.size(), 0.0);
  }
  return st;
}

void outer_step(TaskEncoder& enc, const std::vector<InnerClassifier>& classifiers,
                const MultiViewDataset& batch, double gamma, double lr,
                EncoderAdamState& adam, double* objective_out, double* entropy_out) {
  EncoderGrad grad =
      objective_encoder_gradient(enc, classifiers, batch, gamma, objective_out, entropy_out);
  for (std::size_t k = 0; k < enc.heads.size(); ++k)
    if (!grad.d_direction[k].all_finite())
      throw NonFiniteGradient("outer_step: non-finite encoder gradient");
  adam.step += 1;
  for (std::size_t k = 0; k < enc.heads.size(); ++k) {
    adam_update_span(enc.heads[k].direction.flat(), grad.d_direction[k].flat(),
                     adam.dir_m[k].flat(), adam.dir_v[k].flat(), adam.step, lr, 0.9, 0.999, 1e-8);
    adam_update_span(enc.heads[k].gain, grad.d_gain[k], adam.gain_m[k], adam.gain_v[k],
                     adam.step, lr, 0.9, 0.999, 1e-8);
  }
}

TrainReport turtle_train(const MultiViewDataset& d, const TrainConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  d.validate();
  if (cfg.n_classes < 2) throw TooFewSamples("turtle_train: need at least 2 classes");
  if (d.n_samples() < static_cast<std::size_t>(cfg.n_classes))
    throw TooFewSamples("turtle_train: fewer samples than classes");
  if (cfg.gamma < 0.0) throw ShapeMismatch("turtle_train: gamma must be >= 0");
  if (cfg.outer_iters < 1) throw ShapeMismatch("turtle_train: need at least one iteration");
  if (cfg.batch_size < cfg.n_classes)
    throw ShapeMismatch("turtle_train: batch size below the class count");

  MultiViewDataset data = d;
  if (cfg.normalize_views)
    for (auto& v : data.views) v = l2_normalize(v);

  TrainReport report;
  report.seed = cfg.seed;
  report.generator = kRngName;
  report.config = cfg;

  const std::size_t n = data.n_samples();
  const std::size_t k_views = data.n_views();
  std::vector<std::size_t> dims;
  for (const auto& v : data.views) dims.push_back(v.dim());

  SplitMix64 rng(cfg.seed);
  TaskEncoder enc = make_task_encoder(dims, cfg.n_classes, rng);
  EncoderAdamState enc_adam = make_encoder_adam_state(enc);

  InnerConfig inner_cfg = cfg.inner;
  inner_cfg.learning_rate = cfg.inner_lr;
  inner_cfg.warm_start = cfg.warm_start;

  std::vector<InnerClassifier> classifiers;
  for (std::size_t k = 0; k < k_views; ++k)
    classifiers.push_back(make_inner_classifier(cfg.n_classes, dims[k]));

  const bool full_batch = n <= static_cast<std::size_t>(cfg.batch_size);
  std::vector<int> index_pool(n);
  std::iota(index_pool.begin(), index_pool.end(), 0);

  report.loss_trace.reserve(static_cast<std::size_t>(cfg.outer_iters));
  report.entropy_trace.reserve(static_cast<std::size_t>(cfg.outer_iters));

  try {
    for (int t = 0; t < cfg.outer_iters; ++t) {
      // Assemble the batch. Full-batch runs never touch the PRNG here, so
      // batch_size settings at or above N produce identical streams.
      MultiViewDataset batch_storage;
      const MultiViewDataset* batch = &data;
      if (!full_batch) {
        std::iota(index_pool.begin(), index_pool.end(), 0);
        for (int i = 0; i < cfg.batch_size; ++i) {
          const std::size_t j =
              static_cast<std::size_t>(i) + rng.next_below(n - static_cast<std::size_t>(i));
          std::swap(index_pool[static_cast<std::size_t>(i)], index_pool[j]);
        }
        std::span<const int> chosen(index_pool.data(), static_cast<std::size_t>(cfg.batch_size));
        batch_storage.n_classes = cfg.n_classes;
        for (std::size_t k = 0; k < k_views; ++k)
          batch_storage.views.push_back(
              {data.views[k].name, kernels::gather_rows(data.views[k].data, chosen)});
        batch = &batch_storage;
      }

      // Generate the task from the current encoder.
      SoftLabeling tau = forward_ensemble(enc, *batch);

      // Fit the K linear classifiers for M steps against tau.
      for (std::size_t k = 0; k < k_views; ++k) {
        if (!cfg.warm_start) classifiers[k] = make_inner_classifier(cfg.n_classes, dims[k]);
        fit_inner(classifiers[k], batch->views[k].data, tau.probs, inner_cfg);
      }

      // One first-order update of theta; record the pre-update objective.
      double objective = 0.0, entropy = 0.0;
      outer_step(enc, classifiers, *batch, cfg.gamma, cfg.outer_lr, enc_adam, &objective,
                 &entropy);
      report.loss_trace.push_back(objective);
      report.entropy_trace.push_back(entropy);
    }
  } catch (const NonFiniteGradient& e) {
    report.failed = true;
    report.failure = e.what();
  }

  // Final labeling over every sample, not just the last batch.
  report.soft = forward_ensemble(enc, data);
  report.hard_labels = hard_assign(report.soft);
  report.distinct_classes = distinct_class_count(report.hard_labels);
  report.degenerate = report.distinct_classes < cfg.n_classes;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

std::vector<std::pair<TrainConfig, TrainReport>> run_grid(const MultiViewDataset& d,
                                                          const HyperGrid& grid,
                                                          const TrainConfig& base, int jobs) {
  if (grid.outer_lrs.empty() || grid.inner_lrs.empty() || grid.warm_start_options.empty())
    throw ShapeMismatch("run_grid: grid axes must be nonempty");
  std::vector<TrainConfig> configs;
  for (double outer_lr : grid.outer_lrs)
    for (double inner_lr : grid.inner_lrs)
      for (bool warm : grid.warm_start_options) {
        TrainConfig cfg = base;
        cfg.outer_lr = outer_lr;
        cfg.inner_lr = inner_lr;
        cfg.warm_start = warm;
        cfg.seed = SplitMix64::derive(base.seed, configs.size());
        configs.push_back(cfg);
      }

  std::vector<std::pair<TrainConfig, TrainReport>> results(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= configs.size()) return;
      TrainReport rep;
      try {
        rep = turtle_train(d, configs[i]);
      } catch (const std::exception& e) {
        rep.failed = true;
        rep.failure = e.what();
        rep.config = configs[i];
        rep.seed = configs[i].seed;
        rep.generator = kRngName;
      }
      results[i] = {configs[i], std::move(rep)};
    }
  };

  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(jobs), configs.size());
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

void write_train_report(const std::string& dir, const TrainReport& report) {
  const TrainConfig& cfg = report.config;
  {
    std::ofstream os(dir + "/report.txt");
    os << "seed: " << report.seed << "\n";
    os << "generator: " << report.generator << "\n";
    os << "classes: " << cfg.n_classes << "\n";
    os << "gamma: " << cfg.gamma << "\n";
    os << "iters: " << cfg.outer_iters << "\n";
    os << "batch: " << cfg.batch_size << "\n";
    os << "outer_lr: " << cfg.outer_lr << "\n";
    os << "inner_lr: " << cfg.inner_lr << "\n";
    os << "inner_steps: " << cfg.inner.steps << "\n";
    os << "warm_start: " << (cfg.warm_start ? "true" : "false") << "\n";
    os << "normalize: " << (cfg.normalize_views ? "true" : "false") << "\n";
    os << "wall_seconds: " << report.wall_seconds << "\n";
    os << "distinct_classes: " << report.distinct_classes << "\n";
    os << "degenerate: " << (report.degenerate ? "true" : "false") << "\n";
    os << "failed: " << (report.failed ? "true" : "false") << "\n";
    if (report.failed) os << "failure: " << report.failure << "\n";
  }
  {
    std::ofstream os(dir + "/trace.csv");
    os << "iter,loss,entropy\n";
    for (std::size_t i = 0; i < report.loss_trace.size(); ++i)
      os << i << "," << report.loss_trace[i] << "," << report.entropy_trace[i] << "\n";
  }
  if (!report.soft.probs.empty()) save_emb1(dir + "/soft_labels.emb", report.soft.probs);
  if (!report.hard_labels.empty()) save_labels(dir + "/labels.txt", report.hard_labels);
}

}  // namespace turtle

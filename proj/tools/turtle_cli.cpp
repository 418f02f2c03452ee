// Command-line surface: synthetic benchmark generation, training, grid
// search, label-free selection, evaluation, baselines and the margin
// verification sweep. Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "turtle/embedding_store.hpp"
#include "turtle/kernels.hpp"
#include "turtle/margin_oracle.hpp"
#include "turtle/rng.hpp"
#include "turtle/selection_eval.hpp"
#include "turtle/synth.hpp"
#include "turtle/task_encoder.hpp"
#include "turtle/turtle_optimizer.hpp"

namespace fs = std::filesystem;
using namespace turtle;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_usage(std::ostream& os) {
  os << "Usage: turtle <command> [--key value ...]\n"
        "\n"
        "Commands:\n"
        "  synth         generate a multi-view blob benchmark (EMB1 views + labels)\n"
        "  train         run the alternating max-margin labeling search\n"
        "  grid          train over the learning-rate/warm-start grid\n"
        "  select        pick the best grid run by pseudo-label cross-validation\n"
        "  eval          Hungarian-matched accuracy between two label files\n"
        "  kmeans        k-means baseline on concatenated normalized views\n"
        "  probe         supervised linear probe with L2 grid search\n"
        "  bench-margin  margin lower-bound sweep, CSV output\n"
        "\n"
        "Common flags: --spaces a.emb,b.emb --classes C --gamma F --inner-steps M\n"
        "  --iters T --batch B --outer-lr F --inner-lr F --warm-start BOOL\n"
        "  --seed U64 --normalize BOOL --out PATH --jobs N --config FILE\n";
}

// Flat `key = value` config file; command-line flags override file entries.
std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

class Args {
 public:
  Args(int argc, char** argv, const std::set<std::string>& known) {
    std::map<std::string, std::string> flags;
    for (int i = 2; i < argc; ++i) {
      std::string key = argv[i];
      if (key.rfind("--", 0) != 0) throw UsageError("expected --flag, got '" + key + "'");
      key = key.substr(2);
      if (i + 1 >= argc) throw UsageError("flag --" + key + " needs a value");
      flags[key] = argv[++i];
    }
    if (auto it = flags.find("config"); it != flags.end()) {
      values_ = load_config_file(it->second);
      flags.erase(it);
    }
    for (auto& [k, v] : flags) values_[k] = v;
    for (const auto& [k, v] : values_)
      if (!known.count(k)) throw UsageError("unknown flag --" + k);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    if (!has(key)) throw UsageError("missing required flag --" + key);
    return values_.at(key);
  }

  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    return std::stoll(values_.at(key));
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return std::stoull(values_.at(key));
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return std::stod(values_.at(key));
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = values_.at(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("flag --" + key + " expects true/false, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(require(key));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
    if (out.empty()) throw UsageError("flag --" + key + " expects a comma-separated list");
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

EmbeddingFormat format_of(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? EmbeddingFormat::Csv
                                                                    : EmbeddingFormat::Emb1;
}

MultiViewDataset load_dataset(const Args& args, int classes) {
  MultiViewDataset d;
  d.n_classes = classes;
  for (const std::string& path : args.list("spaces"))
    d.views.push_back(load_embeddings(path, format_of(path)));
  d.validate();
  return d;
}

TrainConfig train_config(const Args& args) {
  TrainConfig cfg;
  cfg.n_classes = static_cast<int>(args.integer("classes", 0));
  if (cfg.n_classes < 2) throw UsageError("--classes must be at least 2");
  cfg.gamma = args.real("gamma", 10.0);
  cfg.outer_iters = static_cast<int>(args.integer("iters", 6000));
  cfg.batch_size = static_cast<int>(args.integer("batch", 10000));
  cfg.outer_lr = args.real("outer-lr", 1e-3);
  cfg.inner_lr = args.real("inner-lr", 1e-2);
  cfg.warm_start = args.boolean("warm-start", true);
  cfg.seed = args.u64("seed", 0);
  cfg.normalize_views = args.boolean("normalize", false);
  cfg.inner.steps = static_cast<int>(args.integer("inner-steps", 10));
  return cfg;
}

int cmd_synth(const Args& args) {
  SynthSpec spec;
  spec.n_samples = static_cast<std::size_t>(args.integer("samples", 600));
  spec.n_classes = static_cast<int>(args.integer("classes", 3));
  spec.n_views = static_cast<int>(args.integer("views", 2));
  spec.separation = args.real("sep", 10.0);
  spec.seed = args.u64("seed", 0);
  spec.rotation_seed = args.u64("rotation-seed", 0);
  if (args.has("dims"))
    for (const std::string& d : args.list("dims")) spec.dims.push_back(std::stoi(d));
  if (args.has("proportions"))
    for (const std::string& p : args.list("proportions"))
      spec.proportions.push_back(std::stod(p));

  const std::string out = args.str("out", "synth_out");
  fs::create_directories(out);
  SynthResult result = synth(spec);
  write_synth(result, out);
  std::cout << "wrote " << result.dataset.n_views() << " views, "
            << result.dataset.n_samples() << " samples, " << spec.n_classes << " classes to "
            << out << "\n";
  return 0;
}

int cmd_train(const Args& args) {
  TrainConfig cfg = train_config(args);
  kernels::set_max_threads(static_cast<int>(args.integer("jobs", 1)));
  MultiViewDataset d = load_dataset(args, cfg.n_classes);
  TrainReport report = turtle_train(d, cfg);

  const std::string out = args.str("out", "train_out");
  fs::create_directories(out);
  write_train_report(out, report);
  {
    std::ofstream os(out + "/report.txt", std::ios::app);
    os << "spaces: " << args.require("spaces") << "\n";
    os << "jobs: " << args.integer("jobs", 1) << "\n";
  }
  if (report.failed) {
    std::cerr << "training aborted: " << report.failure << "\n";
    return 2;
  }
  std::cout << "final loss " << report.loss_trace.back() << ", distinct classes "
            << report.distinct_classes << (report.degenerate ? " (degenerate)" : "")
            << ", report in " << out << "\n";
  return 0;
}

int cmd_grid(const Args& args) {
  TrainConfig base = train_config(args);
  MultiViewDataset d = load_dataset(args, base.n_classes);

  HyperGrid grid = HyperGrid::defaults();
  if (args.has("outer-lrs")) {
    grid.outer_lrs.clear();
    for (const std::string& v : args.list("outer-lrs")) grid.outer_lrs.push_back(std::stod(v));
  }
  if (args.has("inner-lrs")) {
    grid.inner_lrs.clear();
    for (const std::string& v : args.list("inner-lrs")) grid.inner_lrs.push_back(std::stod(v));
  }
  if (args.has("starts")) {
    const std::string v = args.str("starts");
    if (v == "warm") grid.warm_start_options = {true};
    else if (v == "cold") grid.warm_start_options = {false};
    else if (v == "both") grid.warm_start_options = {true, false};
    else throw UsageError("--starts expects warm|cold|both");
  }

  const int jobs = static_cast<int>(args.integer("jobs", 1));
  auto runs = run_grid(d, grid, base, jobs);

  const std::string out = args.str("out", "grid_out");
  fs::create_directories(out);
  std::ofstream summary(out + "/grid_summary.csv");
  summary << "index,outer_lr,inner_lr,warm_start,failed,degenerate,final_loss\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [cfg, report] = runs[i];
    const std::string run_dir = out + "/triplet_" + std::to_string(i);
    fs::create_directories(run_dir);
    write_train_report(run_dir, report);
    summary << i << "," << cfg.outer_lr << "," << cfg.inner_lr << ","
            << (cfg.warm_start ? "true" : "false") << "," << (report.failed ? "true" : "false")
            << "," << (report.degenerate ? "true" : "false") << ","
            << (report.loss_trace.empty() ? 0.0 : report.loss_trace.back()) << "\n";
  }
  std::cout << "ran " << runs.size() << " triplets, summaries in " << out << "\n";
  return 0;
}

int cmd_select(const Args& args) {
  const int classes = static_cast<int>(args.integer("classes", 0));
  if (classes < 2) throw UsageError("--classes must be at least 2");
  MultiViewDataset d = load_dataset(args, classes);
  const std::string grid_dir = args.require("grid-dir");
  const int folds = static_cast<int>(args.integer("folds", 10));
  const std::uint64_t seed = args.u64("seed", 0);

  std::vector<RunEvaluation> evals;
  std::vector<std::string> run_dirs;
  SplitSpec split = make_folds(d.n_samples(), folds, seed);
  for (std::size_t i = 0;; ++i) {
    const std::string run_dir = grid_dir + "/triplet_" + std::to_string(i);
    if (!fs::exists(run_dir + "/labels.txt")) {
      if (!fs::exists(run_dir)) break;
      evals.push_back({0.0, false, true});
      run_dirs.push_back(run_dir);
      continue;
    }
    std::vector<int> pseudo = load_labels(run_dir + "/labels.txt");
    RunEvaluation eval;
    if (pseudo.size() != d.n_samples()) {
      eval.failed = true;
    } else {
      CVReport cv = cross_validate_task(d, pseudo, split);
      eval.cv_score = cv.score;
      eval.degenerate = cv.degenerate;
    }
    evals.push_back(eval);
    run_dirs.push_back(run_dir);
  }
  if (evals.empty()) throw UsageError("no triplet_<i> directories under " + grid_dir);

  const std::size_t best = select_best(evals);
  std::cout << "selected triplet " << best << " (cv score " << evals[best].cv_score << ") at "
            << run_dirs[best] << "\n";
  if (args.has("out")) {
    fs::create_directories(args.str("out"));
    std::ofstream os(args.str("out") + "/selection.txt");
    os << "selected: " << best << "\n";
    os << "cv_score: " << evals[best].cv_score << "\n";
    for (std::size_t i = 0; i < evals.size(); ++i)
      os << "triplet_" << i << ": " << evals[i].cv_score << (evals[i].degenerate ? " degenerate" : "")
         << (evals[i].failed ? " failed" : "") << "\n";
  }
  return 0;
}

int cmd_eval(const Args& args) {
  std::vector<int> pred = load_labels(args.require("pred"));
  std::vector<int> truth = load_labels(args.require("truth"));
  int classes = static_cast<int>(args.integer("classes", 0));
  if (classes == 0) {
    for (int v : pred) classes = std::max(classes, v + 1);
    for (int v : truth) classes = std::max(classes, v + 1);
  }
  AccuracyReport report = clustering_accuracy(pred, truth, classes);
  std::cout << "accuracy " << report.accuracy << "\n";
  if (args.has("out")) {
    fs::create_directories(args.str("out"));
    std::ofstream os(args.str("out") + "/contingency.csv");
    for (const auto& row : report.contingency) {
      for (std::size_t j = 0; j < row.size(); ++j)
        os << row[j] << (j + 1 == row.size() ? '\n' : ',');
    }
    std::ofstream rs(args.str("out") + "/eval.txt");
    rs << "accuracy: " << report.accuracy << "\n";
    rs << "permutation:";
    for (int p : report.permutation) rs << ' ' << p;
    rs << "\n";
  }
  return 0;
}

int cmd_kmeans(const Args& args) {
  const int classes = static_cast<int>(args.integer("classes", 0));
  if (classes < 1) throw UsageError("--classes must be at least 1");
  kernels::set_max_threads(static_cast<int>(args.integer("jobs", 1)));
  MultiViewDataset d = load_dataset(args, classes);
  std::vector<int> labels = kmeans_baseline(d, classes, args.u64("seed", 0));
  const std::string out = args.str("out", "kmeans_out");
  fs::create_directories(out);
  save_labels(out + "/labels.txt", labels);
  std::cout << "wrote " << out << "/labels.txt\n";
  if (args.has("truth")) {
    std::vector<int> truth = load_labels(args.str("truth"));
    std::cout << "accuracy " << clustering_accuracy(labels, truth, classes).accuracy << "\n";
  }
  return 0;
}

int cmd_probe(const Args& args) {
  EmbeddingMatrix view = load_embeddings(args.require("space"), format_of(args.str("space")));
  std::vector<int> labels = load_labels(args.require("labels"));
  const std::uint64_t seed = args.u64("seed", 0);

  std::vector<std::uint8_t> split;
  if (args.has("split-file")) {
    for (int v : load_labels(args.str("split-file")))
      split.push_back(static_cast<std::uint8_t>(v != 0));
  } else {
    const double test_frac = args.real("test-frac", 0.3);
    std::vector<int> order(view.n_samples());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    SplitMix64 rng(seed);
    rng.shuffle(order);
    split.assign(view.n_samples(), 0);
    const std::size_t test_count =
        static_cast<std::size_t>(test_frac * static_cast<double>(view.n_samples()));
    for (std::size_t i = 0; i < test_count; ++i)
      split[static_cast<std::size_t>(order[i])] = 1;
  }

  const bool full = args.boolean("full-grid", false);
  const double acc =
      linear_probe(view, labels, split, full ? full_l2_grid() : default_l2_grid(), seed);
  std::cout << "probe accuracy " << acc << "\n";
  return 0;
}

int cmd_bench_margin(const Args& args) {
  const std::size_t n_points = static_cast<std::size_t>(args.integer("points", 12));
  const std::size_t dim = static_cast<std::size_t>(args.integer("dim", 2));
  const int n_thetas = static_cast<int>(args.integer("thetas", 20));
  const long steps = args.integer("gd-steps", 100000);
  const std::uint64_t seed = args.u64("seed", 0);

  SplitMix64 rng(seed);
  Matrix points(n_points, dim);
  for (double& v : points.flat()) v = rng.next_gaussian();
  const double eta = 0.5 / static_cast<double>(n_points);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (args.has("out")) {
    fs::create_directories(fs::path(args.str("out")).parent_path().string().empty()
                               ? "."
                               : fs::path(args.str("out")).parent_path().string());
    file.open(args.str("out"));
    os = &file;
  }
  (*os) << "theta_id,lhs,rhs,residual,holds\n";
  int violations = 0;
  for (int t = 0; t < n_thetas; ++t) {
    std::vector<double> theta(dim);
    for (double& v : theta) v = rng.next_gaussian();
    BoundReport rep = bound_check(theta, points, eta, steps);
    (*os) << t << "," << rep.lhs << "," << rep.g_theta * rep.svm_norm_sq << ","
          << rep.residual_norm << "," << (rep.holds ? "true" : "false") << "\n";
    violations += rep.holds ? 0 : 1;
  }
  std::cerr << "bound held in " << (n_thetas - violations) << "/" << n_thetas << " draws\n";
  return violations == 0 ? 0 : 2;
}

const std::set<std::string> kSynthFlags{"samples", "classes", "views", "dims", "sep",
                                        "seed", "rotation-seed", "proportions", "out", "config"};
const std::set<std::string> kTrainFlags{"spaces", "classes", "gamma", "inner-steps", "iters",
                                        "batch", "outer-lr", "inner-lr", "warm-start", "seed",
                                        "normalize", "out", "jobs", "config"};
const std::set<std::string> kGridFlags{"spaces", "classes", "gamma", "inner-steps", "iters",
                                       "batch", "outer-lr", "inner-lr", "warm-start", "seed",
                                       "normalize", "out", "jobs", "config", "outer-lrs",
                                       "inner-lrs", "starts"};
const std::set<std::string> kSelectFlags{"spaces", "classes", "grid-dir", "folds", "seed", "out",
                                         "config"};
const std::set<std::string> kEvalFlags{"pred", "truth", "classes", "out", "config"};
const std::set<std::string> kKmeansFlags{"spaces", "classes", "seed", "out", "truth", "jobs",
                                         "config"};
const std::set<std::string> kProbeFlags{"space", "labels", "split-file", "test-frac", "seed",
                                        "full-grid", "config"};
const std::set<std::string> kBenchFlags{"points", "dim", "thetas", "gd-steps", "seed", "out",
                                        "config"};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    print_usage(std::cerr);
    return 1;
  }
  const std::string command = argv[1];
  if (command == "--help" || command == "-h" || command == "help") {
    print_usage(std::cout);
    return 0;
  }
  try {
    if (command == "synth") return cmd_synth(Args(argc, argv, kSynthFlags));
    if (command == "train") return cmd_train(Args(argc, argv, kTrainFlags));
    if (command == "grid") return cmd_grid(Args(argc, argv, kGridFlags));
    if (command == "select") return cmd_select(Args(argc, argv, kSelectFlags));
    if (command == "eval") return cmd_eval(Args(argc, argv, kEvalFlags));
    if (command == "kmeans") return cmd_kmeans(Args(argc, argv, kKmeansFlags));
    if (command == "probe") return cmd_probe(Args(argc, argv, kProbeFlags));
    if (command == "bench-margin") return cmd_bench_margin(Args(argc, argv, kBenchFlags));
    std::cerr << "unknown command '" << command << "'\n";
    print_usage(std::cerr);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    print_usage(std::cerr);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

#include "sparsesense/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "sparsesense/errors.hpp"
#include "sparsesense/features.hpp"
#include "sparsesense/rng.hpp"
#include "sparsesense/sensors.hpp"

namespace sparsesense {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::learned_full: return "learned_full";
    case Strategy::learned_subsampled: return "learned_subsampled";
    case Strategy::learned_randproj: return "learned_randproj";
    case Strategy::random_pixels: return "random_pixels";
    case Strategy::full_pca: return "full_pca";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  for (Strategy s : {Strategy::learned_full, Strategy::learned_subsampled, Strategy::learned_randproj,
                     Strategy::random_pixels, Strategy::full_pca})
    if (name == to_string(s)) return s;
  throw PreconditionError("unknown strategy '" + name + "'");
}

LoadedDataset load_dataset(const DatasetRef& ref) {
  LoadedDataset out;
  switch (ref.kind) {
    case DatasetRef::Kind::synthetic:
      out.data = generate_synthetic(ref.synthetic);
      out.height = ref.synthetic.height;
      out.width = ref.synthetic.width;
      break;
    case DatasetRef::Kind::manifest: {
      const DatasetManifest manifest = load_manifest(ref.manifest);
      out.data = assemble_dataset(manifest);
      out.height = manifest.height;
      out.width = manifest.width;
      break;
    }
    case DatasetRef::Kind::matrix: {
      out.data.values = load_matrix_csv(ref.matrix);
      const Eigen::MatrixXd labels = load_matrix_csv(ref.labels);
      if (labels.size() != out.data.values.cols())
        throw DimensionError("labels file has " + std::to_string(labels.size()) +
                             " entries, matrix has " + std::to_string(out.data.values.cols()) +
                             " columns");
      int c = 0;
      for (Eigen::Index i = 0; i < labels.size(); ++i) {
        const double v = labels.reshaped()(i);
        if (v != std::floor(v) || v < 0) throw IoError("labels must be non-negative integers");
        out.data.labels.push_back(static_cast<int>(v));
        c = std::max(c, static_cast<int>(v) + 1);
      }
      out.data.num_classes = c;
      for (int j = 0; j < c; ++j) out.data.class_names.push_back("class" + std::to_string(j));
      out.data.row_means = Eigen::VectorXd::Zero(out.data.values.rows());
      out.height = ref.height;
      out.width = ref.width;
      if (out.height * out.width != out.data.values.rows()) out.height = out.width = 0;
      break;
    }
  }
  check_data_matrix(out.data);
  return out;
}

void check_spec(const ExperimentSpec& spec) {
  if (spec.iterations < 1) throw PreconditionError("iterations must be >= 1");
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw PreconditionError("train_fraction must lie in (0, 1)");
  if (spec.r_values.empty()) throw PreconditionError("at least one r value is required");
  for (int r : spec.r_values)
    if (r < 1) throw PreconditionError("r values must be >= 1");
  for (int p : spec.p_values)
    if (p < 1) throw PreconditionError("p values must be >= 1");
  for (double l : spec.lambda_values)
    if (!(l >= 0.0)) throw PreconditionError("lambda values must be >= 0");
  if (spec.lambda_values.empty()) throw PreconditionError("at least one lambda value is required");
  if (spec.strategies.empty()) throw PreconditionError("at least one strategy is required");
  if (spec.routes.empty()) throw PreconditionError("at least one classifier route is required");
  for (ClassifierRoute route : spec.routes)
    if (route == ClassifierRoute::full_pca_lda)
      throw PreconditionError("sensor strategies use the induced or retrained route");
  if (spec.jobs < 1) throw PreconditionError("jobs must be >= 1");
  if (spec.max_iter < 1) throw PreconditionError("max_iter must be >= 1");
}

// ---- spec JSON ----

json to_json(const ExperimentSpec& spec) {
  json dataset;
  switch (spec.dataset.kind) {
    case DatasetRef::Kind::synthetic: dataset["synthetic"] = to_json(spec.dataset.synthetic); break;
    case DatasetRef::Kind::manifest: dataset["manifest"] = spec.dataset.manifest.string(); break;
    case DatasetRef::Kind::matrix:
      dataset["matrix"] = spec.dataset.matrix.string();
      dataset["labels"] = spec.dataset.labels.string();
      dataset["height"] = spec.dataset.height;
      dataset["width"] = spec.dataset.width;
      break;
  }
  json strategies = json::array();
  for (Strategy s : spec.strategies) strategies.push_back(to_string(s));
  json routes = json::array();
  for (ClassifierRoute r : spec.routes) routes.push_back(to_string(r));
  return {{"dataset", dataset},
          {"r_values", spec.r_values},
          {"p_values", spec.p_values},
          {"lambda_values", spec.lambda_values},
          {"strategies", strategies},
          {"routes", routes},
          {"iterations", spec.iterations},
          {"train_fraction", spec.train_fraction},
          {"base_seed", spec.base_seed},
          {"solver", spec.solver == SolverKind::convex ? "convex" : "greedy"},
          {"greedy_k", spec.greedy_k},
          {"epsilon", spec.epsilon},
          {"max_iter", spec.max_iter},
          {"sensor_maps", spec.sensor_maps}};
}

ExperimentSpec experiment_from_json(const json& j, ExperimentSpec spec) {
  try {
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("synthetic")) {
        spec.dataset.kind = DatasetRef::Kind::synthetic;
        spec.dataset.synthetic = synthetic_from_json(d.at("synthetic"), spec.dataset.synthetic);
      } else if (d.contains("manifest")) {
        spec.dataset.kind = DatasetRef::Kind::manifest;
        spec.dataset.manifest = d.at("manifest").get<std::string>();
      } else if (d.contains("matrix")) {
        spec.dataset.kind = DatasetRef::Kind::matrix;
        spec.dataset.matrix = d.at("matrix").get<std::string>();
        spec.dataset.labels = d.at("labels").get<std::string>();
        spec.dataset.height = d.value("height", 0);
        spec.dataset.width = d.value("width", 0);
      }
    }
    spec.r_values = j.value("r_values", spec.r_values);
    spec.p_values = j.value("p_values", spec.p_values);
    spec.lambda_values = j.value("lambda_values", spec.lambda_values);
    if (j.contains("strategies")) {
      spec.strategies.clear();
      for (const auto& s : j.at("strategies")) spec.strategies.push_back(strategy_from_string(s));
    }
    if (j.contains("routes")) {
      spec.routes.clear();
      for (const auto& r : j.at("routes")) spec.routes.push_back(route_from_string(r));
    }
    spec.iterations = j.value("iterations", spec.iterations);
    spec.train_fraction = j.value("train_fraction", spec.train_fraction);
    spec.base_seed = j.value("base_seed", spec.base_seed);
    if (j.contains("solver")) {
      const std::string solver = j.at("solver").get<std::string>();
      if (solver == "convex") spec.solver = SolverKind::convex;
      else if (solver == "greedy") spec.solver = SolverKind::greedy;
      else throw PreconditionError("unknown solver '" + solver + "'");
    }
    spec.greedy_k = j.value("greedy_k", spec.greedy_k);
    spec.epsilon = j.value("epsilon", spec.epsilon);
    spec.max_iter = j.value("max_iter", spec.max_iter);
    spec.sensor_maps = j.value("sensor_maps", spec.sensor_maps);
    spec.jobs = j.value("jobs", spec.jobs);
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed experiment spec: ") + e.what());
  }
  return spec;
}

// ---- splitting ----

SplitIndices stratified_split(std::span<const int> labels, int c, double train_fraction,
                              std::uint64_t seed) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= c) throw PreconditionError("split: class id out of range");
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  }
  SplitIndices out;
  for (int j = 0; j < c; ++j) {
    auto& idx = members[static_cast<std::size_t>(j)];
    const int count = static_cast<int>(idx.size());
    if (count < 2)
      throw PreconditionError("class " + std::to_string(j) + " has " + std::to_string(count) +
                              " samples; cross-validation needs at least 2");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    const std::vector<int> order = sample_without_replacement(count, count, rng);
    const int n_train =
        std::clamp(static_cast<int>(std::floor(train_fraction * count)), 1, count - 1);
    for (int t = 0; t < count; ++t)
      (t < n_train ? out.train : out.test).push_back(idx[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

// ---- experiment execution ----

namespace {

enum Stream : std::uint64_t {
  kSubsample = 1'000'000,
  kRandProj = 2'000'000,
  kRandomPixels = 3'000'000,
};

bool uses_p(Strategy s) {
  return s == Strategy::learned_subsampled || s == Strategy::learned_randproj;
}

struct Plan {
  std::vector<CellKey> cells;
};

Plan make_plan(const ExperimentSpec& spec, int n) {
  Plan plan;
  std::vector<int> ps = spec.p_values;
  if (ps.empty()) ps.push_back(std::max(1, n / 10));
  for (int r : spec.r_values) {
    for (Strategy s : spec.strategies) {
      const std::vector<int> p_list = uses_p(s) ? ps : std::vector<int>{0};
      const std::vector<double> l_list =
          s == Strategy::full_pca ? std::vector<double>{0.0} : spec.lambda_values;
      std::vector<ClassifierRoute> r_list = spec.routes;
      if (s == Strategy::random_pixels) r_list = {ClassifierRoute::retrained};
      if (s == Strategy::full_pca) r_list = {ClassifierRoute::full_pca_lda};
      for (int p : p_list)
        for (double lambda : l_list)
          for (ClassifierRoute route : r_list) plan.cells.push_back({s, route, r, p, lambda});
    }
  }
  return plan;
}

struct CellOutcome {
  double accuracy = 0.0;
  int sensors = 0;
  bool nonconverged = false;
  std::vector<int> pixels;  // selected pixels for selector strategies
};

DataMatrix select_columns(const DataMatrix& X, const std::vector<int>& cols) {
  DataMatrix out;
  out.values.resize(X.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.values.col(static_cast<Eigen::Index>(i)) = X.values.col(cols[i]);
    out.labels.push_back(X.labels[static_cast<std::size_t>(cols[i])]);
  }
  out.num_classes = X.num_classes;
  out.class_names = X.class_names;
  out.row_means = Eigen::VectorXd::Zero(X.values.rows());
  return out;
}

// PCA -> LDA -> sparse solve in whatever space `raw` lives in.
struct Learned {
  FeatureBasis basis;
  DiscriminantModel lda;
  SparseSolution solution;
  MeasurementMatrix selector;
  DataMatrix centered;
};

struct FeaturePipeline {
  FeatureBasis basis;
  DiscriminantModel lda;
};

FeaturePipeline fit_features(const DataMatrix& centered, int r) {
  FeaturePipeline f;
  f.basis = snapshot_pca(centered, r);
  f.lda = fit_lda(project(f.basis, centered.values), centered.labels, centered.num_classes);
  return f;
}

Learned learn_sensors(const DataMatrix& centered, const FeaturePipeline& features, double lambda,
                      const ExperimentSpec& spec) {
  Learned out;
  out.basis = features.basis;
  out.lda = features.lda;
  out.centered = centered;
  SparseProblem problem;
  problem.dictionary = features.basis.basis.transpose();
  problem.targets = features.lda.w;
  problem.lambda = lambda;
  problem.epsilon = spec.epsilon;
  problem.solver = spec.solver;
  AdmmOptions options;
  options.max_iter = spec.max_iter;
  out.solution = solve(problem, options, spec.greedy_k);
  out.selector = from_solution(out.solution, centered.dims());
  return out;
}

ClassifierModel classifier_for(const Learned& learned, ClassifierRoute route, const DataMatrix& raw) {
  if (route == ClassifierRoute::induced)
    return build_induced(learned.basis, learned.lda, learned.solution, learned.selector,
                         learned.centered);
  return build_retrained(learned.selector.apply(raw.values), raw.labels, raw.num_classes,
                         learned.selector, raw.class_names);
}

std::vector<CellOutcome> run_iteration(const ExperimentSpec& spec, const Plan& plan,
                                       const DataMatrix& data, int iteration) {
  const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(iteration);
  const SplitIndices split = stratified_split(data.labels, data.num_classes, spec.train_fraction, seed);
  const DataMatrix train = select_columns(data, split.train);
  const DataMatrix test = select_columns(data, split.test);
  const DataMatrix centered = center_rows(train);
  const int n = data.dims();

  std::map<int, FeaturePipeline> full_features;
  auto features_for = [&](int r) -> const FeaturePipeline& {
    auto it = full_features.find(r);
    if (it == full_features.end()) it = full_features.emplace(r, fit_features(centered, r)).first;
    return it->second;
  };
  std::map<std::pair<int, double>, Learned> learned_full;
  auto learned_full_for = [&](int r, double lambda) -> const Learned& {
    auto key = std::make_pair(r, lambda);
    auto it = learned_full.find(key);
    if (it == learned_full.end())
      it = learned_full.emplace(key, learn_sensors(centered, features_for(r), lambda, spec)).first;
    return it->second;
  };
  // Subsampled learning is shared across routes.
  struct SubLearned {
    MeasurementMatrix upstream;
    DataMatrix raw;
    Learned learned;
  };
  std::map<std::tuple<int, int, int, double>, SubLearned> learned_sub;
  auto learned_sub_for = [&](Strategy s, int r, int p, double lambda) -> const SubLearned& {
    auto key = std::make_tuple(static_cast<int>(s), r, p, lambda);
    auto it = learned_sub.find(key);
    if (it != learned_sub.end()) return it->second;
    SubLearned sub;
    sub.upstream = s == Strategy::learned_subsampled
                       ? random_pixels(n, p, derive_seed(seed, kSubsample + static_cast<std::uint64_t>(p)))
                       : bernoulli_projection(n, p, derive_seed(seed, kRandProj + static_cast<std::uint64_t>(p)));
    sub.raw = train;
    sub.raw.values = sub.upstream.apply(train.values);
    sub.raw.row_means = Eigen::VectorXd::Zero(p);
    const DataMatrix sub_centered = center_rows(sub.raw);
    sub.learned = learn_sensors(sub_centered, fit_features(sub_centered, r), lambda, spec);
    return learned_sub.emplace(key, std::move(sub)).first->second;
  };

  std::vector<CellOutcome> outcomes;
  outcomes.reserve(plan.cells.size());
  for (std::size_t cell_index = 0; cell_index < plan.cells.size(); ++cell_index) {
    const CellKey& cell = plan.cells[cell_index];
    CellOutcome out;
    switch (cell.strategy) {
      case Strategy::full_pca: {
        const FeaturePipeline& f = features_for(cell.r);
        const ClassifierModel model = build_full(f.basis, f.lda, centered.row_means, data.class_names);
        out.accuracy = accuracy(model, test.values, test.labels);
        out.sensors = n;
        break;
      }
      case Strategy::learned_full: {
        const Learned& l = learned_full_for(cell.r, cell.lambda);
        const ClassifierModel model = classifier_for(l, cell.route, train);
        out.accuracy = accuracy(model, test.values, test.labels);
        out.sensors = l.selector.rows();
        out.nonconverged = !l.solution.converged;
        out.pixels = l.selector.indices();
        break;
      }
      case Strategy::learned_subsampled:
      case Strategy::learned_randproj: {
        const SubLearned& sub = learned_sub_for(cell.strategy, cell.r, cell.p, cell.lambda);
        const ClassifierModel model =
            prepend_measurement(classifier_for(sub.learned, cell.route, sub.raw), sub.upstream);
        out.accuracy = accuracy(model, test.values, test.labels);
        out.sensors = sub.learned.selector.rows();
        out.nonconverged = !sub.learned.solution.converged;
        if (model.measurement.is_selector()) out.pixels = model.measurement.indices();
        break;
      }
      case Strategy::random_pixels: {
        // Match the learned sensor count when learned sensors are part of the run.
        const bool matched = std::find(spec.strategies.begin(), spec.strategies.end(),
                                       Strategy::learned_full) != spec.strategies.end();
        const int q = matched ? learned_full_for(cell.r, cell.lambda).selector.rows() : cell.r;
        std::uint64_t stream = kRandomPixels + static_cast<std::uint64_t>(cell.r) * 1000 +
                               static_cast<std::uint64_t>(
                                   std::find(spec.lambda_values.begin(), spec.lambda_values.end(), cell.lambda) -
                                   spec.lambda_values.begin());
        const MeasurementMatrix M = random_pixels(n, q, derive_seed(seed, stream));
        const ClassifierModel model =
            build_retrained(M.apply(train.values), train.labels, train.num_classes, M, data.class_names);
        out.accuracy = accuracy(model, test.values, test.labels);
        out.sensors = q;
        out.pixels = M.indices();
        break;
      }
    }
    outcomes.push_back(std::move(out));
  }
  return outcomes;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void summarize(CellStats& cell) {
  const auto count = static_cast<double>(cell.accuracies.size());
  if (cell.accuracies.empty()) return;
  cell.mean_accuracy = std::accumulate(cell.accuracies.begin(), cell.accuracies.end(), 0.0) / count;
  double ss = 0.0;
  for (double a : cell.accuracies) ss += (a - cell.mean_accuracy) * (a - cell.mean_accuracy);
  cell.std_accuracy = cell.accuracies.size() > 1 ? std::sqrt(ss / (count - 1.0)) : 0.0;
  cell.mean_sensors =
      std::accumulate(cell.sensor_counts.begin(), cell.sensor_counts.end(), 0.0) / count;
  std::vector<int> sorted = cell.sensor_counts;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  cell.median_sensors = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

}  // namespace

const CellStats* ExperimentReport::find(Strategy strategy, ClassifierRoute route, int r, int p,
                                        double lambda) const {
  for (const auto& cell : cells) {
    if (cell.key.strategy != strategy || cell.key.route != route || cell.key.r != r) continue;
    if (p >= 0 && cell.key.p != p) continue;
    if (lambda >= 0.0 && cell.key.lambda != lambda) continue;
    return &cell;
  }
  return nullptr;
}

ExperimentReport cross_validate(const ExperimentSpec& spec, const LoadedDataset& dataset,
                                const ProgressFn& progress) {
  check_spec(spec);
  const DataMatrix& data = dataset.data;
  check_data_matrix(data);
  if (data.centered) throw PreconditionError("cross_validate expects uncentered data");
  const auto start = std::chrono::steady_clock::now();
  const Plan plan = make_plan(spec, data.dims());
  for (const CellKey& cell : plan.cells)
    if (uses_p(cell.strategy) && cell.p > data.dims())
      throw PreconditionError("p = " + std::to_string(cell.p) + " exceeds n = " +
                              std::to_string(data.dims()));

  const int total = spec.iterations;
  std::vector<std::vector<CellOutcome>> results(static_cast<std::size_t>(total));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(total));
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= total) return;
      try {
        results[static_cast<std::size_t>(i)] = run_iteration(spec, plan, data, i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        next.store(total);
      }
      const int finished = ++done;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(finished, total);
      }
    }
  };
  const int workers = std::min(spec.jobs, total);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  report.spec = spec;
  report.n = data.dims();
  report.m = data.samples();
  report.c = data.num_classes;
  report.height = dataset.height;
  report.width = dataset.width;
  for (std::size_t k = 0; k < plan.cells.size(); ++k) {
    CellStats cell;
    cell.key = plan.cells[k];
    const bool collect_map = spec.sensor_maps && cell.key.strategy != Strategy::full_pca &&
                             cell.key.strategy != Strategy::learned_randproj;
    if (collect_map) cell.sensor_map.assign(static_cast<std::size_t>(report.n), 0);
    for (const auto& iteration : results) {
      const CellOutcome& o = iteration[k];
      cell.accuracies.push_back(o.accuracy);
      cell.sensor_counts.push_back(o.sensors);
      cell.nonconverged += o.nonconverged ? 1 : 0;
      if (collect_map)
        for (int px : o.pixels) ++cell.sensor_map[static_cast<std::size_t>(px)];
    }
    summarize(cell);
    report.cells.push_back(std::move(cell));
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.timestamp = utc_timestamp();
  return report;
}

ExperimentReport cross_validate(const ExperimentSpec& spec, const ProgressFn& progress) {
  return cross_validate(spec, load_dataset(spec.dataset), progress);
}

ExperimentReport sweep_lambda(ExperimentSpec spec, const LoadedDataset& dataset,
                              const ProgressFn& progress) {
  if (dataset.data.num_classes < 2) throw PreconditionError("lambda sweep needs c >= 2");
  spec.routes = {ClassifierRoute::induced, ClassifierRoute::retrained};
  std::vector<Strategy> kept;
  for (Strategy s : spec.strategies)
    if (s != Strategy::learned_randproj) kept.push_back(s);
  if (std::find(kept.begin(), kept.end(), Strategy::learned_full) == kept.end())
    kept.insert(kept.begin(), Strategy::learned_full);
  spec.strategies = kept;
  return cross_validate(spec, dataset, progress);
}

std::vector<long> sensor_ensemble(ExperimentSpec spec, const LoadedDataset& dataset,
                                  Strategy strategy, const ProgressFn& progress) {
  if (strategy == Strategy::learned_randproj)
    throw PreconditionError("sensor maps need pixel sensors; random projections have no pixel locations");
  if (strategy == Strategy::full_pca)
    throw PreconditionError("full_pca uses every pixel and has no sensor map");
  spec.strategies = {strategy};
  spec.routes = {ClassifierRoute::retrained};
  spec.sensor_maps = true;
  spec.r_values.resize(1);
  spec.lambda_values.resize(1);
  if (spec.p_values.size() > 1) spec.p_values.resize(1);
  const ExperimentReport report = cross_validate(spec, dataset, progress);
  return report.cells.front().sensor_map;
}

// ---- report output ----

json report_json(const ExperimentReport& report) {
  json cells = json::array();
  for (const auto& cell : report.cells) {
    cells.push_back({{"strategy", to_string(cell.key.strategy)},
                     {"route", to_string(cell.key.route)},
                     {"r", cell.key.r},
                     {"p", cell.key.p},
                     {"lambda", cell.key.lambda},
                     {"mean_accuracy", cell.mean_accuracy},
                     {"std_accuracy", cell.std_accuracy},
                     {"mean_sensors", cell.mean_sensors},
                     {"median_sensors", cell.median_sensors},
                     {"nonconverged", cell.nonconverged},
                     {"accuracies", cell.accuracies},
                     {"sensor_counts", cell.sensor_counts}});
  }
  json doc;
  doc["spec"] = to_json(report.spec);
  doc["dataset"] = {{"n", report.n}, {"m", report.m}, {"c", report.c},
                    {"height", report.height}, {"width", report.width}};
  doc["cells"] = cells;
  doc["run_info"] = {{"timestamp", report.timestamp}, {"elapsed_seconds", report.elapsed_seconds}};
  return doc;
}

std::string report_json_text(const ExperimentReport& report, bool include_run_info) {
  json doc = report_json(report);
  if (!include_run_info) doc.erase("run_info");
  return doc.dump(2) + "\n";
}

std::string report_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "strategy,route,r,p,lambda,mean_accuracy,std_accuracy,mean_sensors,median_sensors,nonconverged\n";
  for (const auto& cell : report.cells) {
    out << to_string(cell.key.strategy) << ',' << to_string(cell.key.route) << ',' << cell.key.r
        << ',' << cell.key.p << ',' << json(cell.key.lambda).dump() << ','
        << json(cell.mean_accuracy).dump() << ',' << json(cell.std_accuracy).dump() << ','
        << json(cell.mean_sensors).dump() << ',' << json(cell.median_sensors).dump() << ','
        << cell.nonconverged << '\n';
  }
  return out.str();
}

void write_report(const fs::path& dir, const ExperimentReport& report) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / "report.json", report_json_text(report));
  write_text_file(dir / "cells.csv", report_csv(report));

  // gnuplot curves: accuracy against r, one file per remaining key
  std::map<std::string, std::string> curves;
  for (const auto& cell : report.cells) {
    std::ostringstream name;
    name << to_string(cell.key.strategy) << '_' << to_string(cell.key.route) << "_p" << cell.key.p
         << "_lambda" << json(cell.key.lambda).dump();
    std::string& body = curves[name.str()];
    if (body.empty()) body = "# r mean_accuracy std_accuracy mean_sensors\n";
    body += std::to_string(cell.key.r) + ' ' + json(cell.mean_accuracy).dump() + ' ' +
            json(cell.std_accuracy).dump() + ' ' + json(cell.mean_sensors).dump() + '\n';
  }
  for (const auto& [name, body] : curves) write_text_file(dir / "curves" / (name + ".dat"), body);

  if (report.height > 0 && report.width > 0) {
    for (const auto& cell : report.cells) {
      if (cell.sensor_map.empty()) continue;
      std::ostringstream name;
      name << "sensors_" << to_string(cell.key.strategy) << "_r" << cell.key.r << "_p" << cell.key.p
           << "_lambda" << json(cell.key.lambda).dump() << '_' << to_string(cell.key.route) << ".pgm";
      save_pgm(dir / "heatmaps" / name.str(), normalized_counts(cell.sensor_map), report.height,
               report.width, 255);
    }
  }
}

}  // namespace sparsesense

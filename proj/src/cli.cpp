#include "sparsesense/cli.hpp"

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sparsesense/classify.hpp"
#include "sparsesense/discriminant.hpp"
#include "sparsesense/errors.hpp"
#include "sparsesense/features.hpp"
#include "sparsesense/harness.hpp"
#include "sparsesense/matrixio.hpp"
#include "sparsesense/rng.hpp"
#include "sparsesense/sensors.hpp"
#include "sparsesense/sparsesolve.hpp"
#include "sparsesense/synthetic.hpp"

namespace sparsesense {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Flags shared by every subcommand. Only flags the user actually passed
// override the config file.
struct Flags {
  std::string config;
  std::string output;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;

  std::string manifest;
  std::string matrix;
  std::string labels;
  std::optional<int> classes;
  std::optional<int> samples_per_class;
  std::optional<std::uint64_t> data_seed;

  std::vector<int> r;
  std::vector<int> p;
  std::vector<double> lambda;
  std::vector<std::string> strategies;
  std::string route;
  std::string solver;
  std::optional<int> greedy_k;
  std::optional<int> iterations;
  std::optional<double> train_fraction;
  std::optional<double> epsilon;
  std::optional<int> max_iter;
  bool sensor_maps = false;

  std::string model;
  std::vector<std::string> inputs;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--output", f.output, "Output directory (default: runs/<config hash>)");
  cmd->add_option("--seed", f.seed, "Base seed");
}

void add_dataset(CLI::App* cmd, Flags& f) {
  cmd->add_option("--manifest", f.manifest, "Image dataset manifest (JSON)");
  cmd->add_option("--matrix", f.matrix, "n x m data matrix (CSV)");
  cmd->add_option("--labels", f.labels, "m class ids (CSV), used with --matrix");
  cmd->add_option("--classes", f.classes, "Synthetic dataset: number of classes");
  cmd->add_option("--samples-per-class", f.samples_per_class, "Synthetic dataset: samples per class");
  cmd->add_option("--data-seed", f.data_seed, "Synthetic dataset: generator seed");
}

void add_experiment(CLI::App* cmd, Flags& f) {
  cmd->add_option("--r", f.r, "PCA feature counts")->delimiter(',');
  cmd->add_option("--p", f.p, "Subsample sizes")->delimiter(',');
  cmd->add_option("--lambda", f.lambda, "Coupling weights")->delimiter(',');
  cmd->add_option("--solver", f.solver, "convex or greedy");
  cmd->add_option("--greedy-k", f.greedy_k, "Greedy sensor budget (default r(c-1))");
  cmd->add_option("--epsilon", f.epsilon, "Constraint tolerance of the coupled solve");
  cmd->add_option("--max-iter", f.max_iter, "ADMM iteration cap per solve");
  cmd->add_option("--jobs", f.jobs, "Worker threads");
}

void add_crossval(CLI::App* cmd, Flags& f) {
  cmd->add_option("--strategies", f.strategies, "Sensor strategies")->delimiter(',');
  cmd->add_option("--route", f.route, "Classifier route for learned sensors: induced or retrained");
  cmd->add_option("--iterations", f.iterations, "Random train/test splits");
  cmd->add_option("--train-fraction", f.train_fraction, "Training share of each class");
}

// Everything a subcommand needs, after config-file and flag merging.
struct RunConfig {
  ExperimentSpec spec;
  std::optional<ClassifierRoute> route;  // set from a singular "route" key or --route
  Strategy strategy = Strategy::learned_full;
  std::string output;
  std::string model;
  std::vector<std::string> inputs;
  bool lambda_set = false;
};

json read_json_file(const fs::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

RunConfig merge(const Flags& f) {
  RunConfig cfg;
  json file = json::object();
  if (!f.config.empty()) file = read_json_file(f.config);
  if (!file.is_object()) throw IoError(f.config + ": configuration must be a JSON object");

  cfg.spec = experiment_from_json(file);
  try {
    if (file.contains("seed")) cfg.spec.base_seed = file.at("seed").get<std::uint64_t>();
    if (file.contains("route")) cfg.route = route_from_string(file.at("route").get<std::string>());
    if (file.contains("strategy")) cfg.strategy = strategy_from_string(file.at("strategy").get<std::string>());
    cfg.output = file.value("output", std::string{});
    cfg.model = file.value("model", std::string{});
    cfg.inputs = file.value("inputs", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw IoError(f.config + ": " + e.what());
  }

  ExperimentSpec& s = cfg.spec;
  DatasetRef& d = s.dataset;
  if (!f.manifest.empty()) {
    d.kind = DatasetRef::Kind::manifest;
    d.manifest = f.manifest;
  } else if (!f.matrix.empty()) {
    d.kind = DatasetRef::Kind::matrix;
    d.matrix = f.matrix;
    d.labels = f.labels;
    if (f.labels.empty()) throw PreconditionError("--matrix needs --labels");
  }
  if (f.classes) d.synthetic.classes = *f.classes;
  if (f.samples_per_class) d.synthetic.samples_per_class = *f.samples_per_class;
  if (f.data_seed) d.synthetic.seed = *f.data_seed;

  if (f.seed) s.base_seed = *f.seed;
  if (f.jobs) s.jobs = *f.jobs;
  if (!f.r.empty()) s.r_values = f.r;
  if (!f.p.empty()) s.p_values = f.p;
  cfg.lambda_set = file.contains("lambda_values") || !f.lambda.empty();
  if (!f.lambda.empty()) s.lambda_values = f.lambda;
  if (!f.strategies.empty()) {
    s.strategies.clear();
    for (const auto& name : f.strategies) s.strategies.push_back(strategy_from_string(name));
    cfg.strategy = s.strategies.front();
  }
  if (!f.route.empty()) cfg.route = route_from_string(f.route);
  if (cfg.route) s.routes = {*cfg.route};
  if (!f.solver.empty()) {
    if (f.solver == "convex") s.solver = SolverKind::convex;
    else if (f.solver == "greedy") s.solver = SolverKind::greedy;
    else throw PreconditionError("unknown solver '" + f.solver + "'");
  }
  if (f.greedy_k) s.greedy_k = *f.greedy_k;
  if (f.iterations) s.iterations = *f.iterations;
  if (f.train_fraction) s.train_fraction = *f.train_fraction;
  if (f.epsilon) s.epsilon = *f.epsilon;
  if (f.max_iter) s.max_iter = *f.max_iter;
  if (f.sensor_maps) s.sensor_maps = true;
  if (!f.output.empty()) cfg.output = f.output;
  if (!f.model.empty()) cfg.model = f.model;
  if (!f.inputs.empty()) cfg.inputs = f.inputs;
  return cfg;
}

json effective_json(const std::string& command, const RunConfig& cfg) {
  json j = to_json(cfg.spec);
  j["command"] = command;
  if (command == "train" || command == "sensors-map") j["strategy"] = to_string(cfg.strategy);
  if (command == "classify") {
    j = {{"command", command}, {"model", cfg.model}, {"inputs", cfg.inputs}};
  }
  return j;
}

std::string config_hash(const json& effective) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char ch : effective.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

fs::path output_dir(const std::string& command, const RunConfig& cfg, std::ostream& err) {
  const json effective = effective_json(command, cfg);
  err << "effective config: " << effective.dump() << "\n";
  const fs::path dir = cfg.output.empty() ? fs::path("runs") / config_hash(effective) : fs::path(cfg.output);
  err << "output directory: " << dir.string() << "\n";
  return dir;
}

// Moves every file under staging into dir, replacing same-named files.
void move_tree(const fs::path& staging, const fs::path& dir) {
  fs::create_directories(dir);
  for (auto it = fs::recursive_directory_iterator(staging); it != fs::recursive_directory_iterator(); ++it) {
    const fs::path target = dir / fs::relative(it->path(), staging);
    if (it->is_directory()) fs::create_directories(target);
    else fs::rename(it->path(), target);
  }
  fs::remove_all(staging);
}

// Collects files in memory and writes them only once the whole run succeeded,
// so a failing run leaves no partial output behind.
class OutputSet {
 public:
  void text(const fs::path& rel, std::string contents) { files_.emplace_back(rel, std::move(contents)); }
  void matrix(const fs::path& rel, const Eigen::MatrixXd& M) { text(rel, format_matrix_csv(M)); }
  void pgm(const fs::path& rel, const Eigen::VectorXd& v, int h, int w, int maxval) {
    pgms_.push_back({rel, v, h, w, maxval});
  }
  void model(const fs::path& rel, const ClassifierModel& model) { models_.emplace_back(rel, model); }

  void commit(const fs::path& dir) const {
    fs::path staging = dir;
    staging += ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
      for (const auto& [rel, contents] : files_) write_text_file(staging / rel, contents);
      for (const auto& p : pgms_) save_pgm(staging / p.rel, p.pixels, p.height, p.width, p.maxval);
      for (const auto& [rel, model] : models_) save_model_bundle(staging / rel, model);
      move_tree(staging, dir);
    } catch (const fs::filesystem_error& e) {
      fs::remove_all(staging, ec);
      throw IoError(e.what());
    } catch (...) {
      fs::remove_all(staging, ec);
      throw;
    }
  }

 private:
  struct Pgm {
    fs::path rel;
    Eigen::VectorXd pixels;
    int height, width, maxval;
  };
  std::vector<std::pair<fs::path, std::string>> files_;
  std::vector<Pgm> pgms_;
  std::vector<std::pair<fs::path, ClassifierModel>> models_;
};

ProgressFn progress_to(std::ostream& err) {
  return [&err](int done, int total) {
    err << "\riteration " << done << "/" << total;
    if (done == total) err << "\n";
    err.flush();
  };
}

// ---- subcommands ----

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const fs::path dir = output_dir("train", cfg, err);
  const ExperimentSpec& spec = cfg.spec;
  check_spec(spec);
  const LoadedDataset dataset = load_dataset(spec.dataset);
  const DataMatrix& data = dataset.data;
  const int n = data.dims();
  const int r = spec.r_values.front();
  const double lambda = spec.lambda_values.front();
  const ClassifierRoute route = cfg.route.value_or(spec.routes.front());

  MeasurementMatrix upstream = MeasurementMatrix::identity(n);
  if (cfg.strategy == Strategy::learned_subsampled || cfg.strategy == Strategy::learned_randproj) {
    const int p = spec.p_values.empty() ? std::max(1, n / 10) : spec.p_values.front();
    const std::uint64_t seed = derive_seed(spec.base_seed, static_cast<std::uint64_t>(p));
    upstream = cfg.strategy == Strategy::learned_subsampled ? random_pixels(n, p, seed)
                                                            : bernoulli_projection(n, p, seed);
  } else if (cfg.strategy != Strategy::learned_full) {
    throw PreconditionError("train learns sensors; strategy must be learned_full, learned_subsampled or learned_randproj");
  }

  DataMatrix raw = data;
  raw.values = upstream.apply(data.values);
  raw.row_means = Eigen::VectorXd::Zero(raw.values.rows());
  const DataMatrix centered = center_rows(raw);
  const FeatureBasis basis = snapshot_pca(centered, r);
  const DiscriminantModel lda = fit_lda(project(basis, centered.values), centered.labels, centered.num_classes);

  SparseProblem problem;
  problem.dictionary = basis.basis.transpose();
  problem.targets = lda.w;
  problem.lambda = lambda;
  problem.epsilon = spec.epsilon;
  problem.solver = spec.solver;
  AdmmOptions options;
  options.max_iter = spec.max_iter;
  const SparseSolution solution = solve(problem, options, spec.greedy_k);
  if (!solution.converged)
    throw ConvergenceError("sparse solve did not converge (" + solution.stop_reason + ")");
  const MeasurementMatrix selector = from_solution(solution, raw.dims());

  ClassifierModel model;
  if (route == ClassifierRoute::induced) {
    model = build_induced(basis, lda, solution, selector, centered);
  } else if (route == ClassifierRoute::retrained) {
    model = build_retrained(selector.apply(raw.values), raw.labels, raw.num_classes, selector, raw.class_names);
  } else {
    throw PreconditionError("train builds sparse classifiers; route must be induced or retrained");
  }
  model = prepend_measurement(std::move(model), upstream);

  json sensors = to_json(model.measurement);
  sensors["count"] = model.measurement.rows();
  if (model.measurement.is_selector()) sensors["pixels"] = model.measurement.indices();
  json diagnostics = diagnostics_json(solution);
  diagnostics["training_accuracy"] = accuracy(model, data.values, data.labels);
  diagnostics["n"] = n;
  diagnostics["m"] = data.samples();
  diagnostics["c"] = data.num_classes;

  OutputSet outputs;
  outputs.model("model", model);
  outputs.text("sensors.json", sensors.dump(2) + "\n");
  outputs.text("diagnostics.json", diagnostics.dump(2) + "\n");
  outputs.text("config.json", effective_json("train", cfg).dump(2) + "\n");
  outputs.commit(dir);
  out << "sensors: " << model.measurement.rows() << "\n";
  return 0;
}

Eigen::VectorXd load_input(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".csv" || ext == ".txt") {
    const Eigen::MatrixXd M = load_matrix_csv(path);
    return M.reshaped();
  }
  return load_pgm(path).pixels;
}

int cmd_classify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.model.empty()) throw PreconditionError("classify needs --model");
  const ClassifierModel model = load_model_bundle(cfg.model);
  std::ostringstream lines;
  for (const auto& input : cfg.inputs) {
    Eigen::VectorXd x;
    try {
      x = load_input(input);
    } catch (const IoError& e) {
      throw IoError(input + ": " + e.what());
    }
    if (x.size() != model.dims())
      throw DimensionError(input + ": has " + std::to_string(x.size()) + " values, model expects " +
                           std::to_string(model.dims()));
    const int id = decide(model, x);
    const std::string name = id < static_cast<int>(model.class_names.size())
                                 ? model.class_names[static_cast<std::size_t>(id)]
                                 : "class" + std::to_string(id);
    lines << input << '\t' << id << '\t' << name << '\n';
  }
  if (!cfg.output.empty()) {
    err << "output directory: " << cfg.output << "\n";
    OutputSet outputs;
    outputs.text("predictions.tsv", lines.str());
    outputs.commit(cfg.output);
  }
  out << lines.str();
  return 0;
}

void write_experiment(const fs::path& dir, const ExperimentReport& report, const json& effective) {
  // write_report creates several files; stage it like every other output.
  fs::path staging = dir;
  staging += ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    write_report(staging, report);
    write_text_file(staging / "config.json", effective.dump(2) + "\n");
    move_tree(staging, dir);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    throw IoError(e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

void print_summary(std::ostream& out, const ExperimentReport& report) {
  for (const auto& cell : report.cells) {
    out << to_string(cell.key.strategy) << " route=" << to_string(cell.key.route) << " r=" << cell.key.r;
    if (cell.key.p > 0) out << " p=" << cell.key.p;
    out << " lambda=" << cell.key.lambda << " accuracy=" << cell.mean_accuracy << " +- "
        << cell.std_accuracy << " sensors=" << cell.mean_sensors << "\n";
  }
}

int cmd_crossval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const fs::path dir = output_dir("crossval", cfg, err);
  check_spec(cfg.spec);
  const LoadedDataset dataset = load_dataset(cfg.spec.dataset);
  const ExperimentReport report = cross_validate(cfg.spec, dataset, progress_to(err));
  write_experiment(dir, report, effective_json("crossval", cfg));
  print_summary(out, report);
  return 0;
}

int cmd_sweep(RunConfig cfg, std::ostream& out, std::ostream& err) {
  if (!cfg.lambda_set) cfg.spec.lambda_values = {0.0, 0.1, 1.0, 10.0, 100.0};
  if (!cfg.route) cfg.spec.routes = {ClassifierRoute::induced, ClassifierRoute::retrained};
  const fs::path dir = output_dir("sweep-lambda", cfg, err);
  check_spec(cfg.spec);
  const LoadedDataset dataset = load_dataset(cfg.spec.dataset);
  const ExperimentReport report = sweep_lambda(cfg.spec, dataset, progress_to(err));
  write_experiment(dir, report, effective_json("sweep-lambda", cfg));
  print_summary(out, report);
  return 0;
}

int cmd_sensors_map(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const fs::path dir = output_dir("sensors-map", cfg, err);
  check_spec(cfg.spec);
  const LoadedDataset dataset = load_dataset(cfg.spec.dataset);
  const std::vector<long> counts = sensor_ensemble(cfg.spec, dataset, cfg.strategy, progress_to(err));
  Eigen::MatrixXd column(static_cast<Eigen::Index>(counts.size()), 1);
  long total = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    column(static_cast<Eigen::Index>(i), 0) = static_cast<double>(counts[i]);
    total += counts[i];
  }
  OutputSet outputs;
  outputs.matrix("sensor_counts.csv", column);
  outputs.text("sensor_map.json", json({{"strategy", to_string(cfg.strategy)},
                                        {"iterations", cfg.spec.iterations},
                                        {"total", total},
                                        {"height", dataset.height},
                                        {"width", dataset.width},
                                        {"counts", counts}})
                                      .dump() + "\n");
  if (dataset.height > 0 && dataset.width > 0)
    outputs.pgm("sensor_map.pgm", normalized_counts(counts), dataset.height, dataset.width, 255);
  outputs.text("config.json", effective_json("sensors-map", cfg).dump(2) + "\n");
  outputs.commit(dir);
  out << "sensor selections: " << total << "\n";
  return 0;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const SyntheticSpec& syn = cfg.spec.dataset.synthetic;
  json effective = {{"command", "synth"}, {"synthetic", to_json(syn)}};
  err << "effective config: " << effective.dump() << "\n";
  const fs::path dir = cfg.output.empty() ? fs::path("runs") / config_hash(effective) : fs::path(cfg.output);
  err << "output directory: " << dir.string() << "\n";

  const DataMatrix data = generate_synthetic(syn);
  OutputSet outputs;
  outputs.matrix("data.csv", data.values);
  Eigen::MatrixXd labels(data.samples(), 1);
  for (int i = 0; i < data.samples(); ++i) labels(i, 0) = data.labels[static_cast<std::size_t>(i)];
  outputs.matrix("labels.csv", labels);

  json classes = json::array();
  for (int j = 0; j < data.num_classes; ++j)
    classes.push_back({{"name", data.class_names[static_cast<std::size_t>(j)]}, {"files", json::array()}});
  std::vector<int> seen(static_cast<std::size_t>(data.num_classes), 0);
  for (int i = 0; i < data.samples(); ++i) {
    const int j = data.labels[static_cast<std::size_t>(i)];
    std::ostringstream name;
    name << "images/" << data.class_names[static_cast<std::size_t>(j)] << "/" << std::setw(4)
         << std::setfill('0') << seen[static_cast<std::size_t>(j)]++ << ".pgm";
    classes[static_cast<std::size_t>(j)]["files"].push_back(name.str());
    outputs.pgm(name.str(), data.values.col(i), syn.height, syn.width, 65535);
  }
  outputs.text("manifest.json",
               json({{"classes", classes}, {"height", syn.height}, {"width", syn.width}}).dump(2) + "\n");
  outputs.text("config.json", effective.dump(2) + "\n");
  outputs.commit(dir);
  out << "samples: " << data.samples() << "\n";
  return 0;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return 2;
    case ErrorKind::dimension: return 3;
    case ErrorKind::convergence: return 4;
    case ErrorKind::precondition: return 1;
  }
  return 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn sparse sensor locations for classification and evaluate them."};
  app.require_subcommand(1);
  Flags f;

  CLI::App* train = app.add_subcommand("train", "Learn sensors on a dataset and save a classifier bundle");
  add_common(train, f);
  add_dataset(train, f);
  add_experiment(train, f);
  train->add_option("--strategy", f.strategies, "learned_full, learned_subsampled or learned_randproj");
  train->add_option("--route", f.route, "induced or retrained");

  CLI::App* classify = app.add_subcommand("classify", "Classify images with a saved bundle");
  add_common(classify, f);
  classify->add_option("--model", f.model, "Model bundle directory");
  classify->add_option("inputs", f.inputs, "PGM images or CSV vectors");

  CLI::App* crossval = app.add_subcommand("crossval", "Cross-validate sensor strategies");
  add_common(crossval, f);
  add_dataset(crossval, f);
  add_experiment(crossval, f);
  add_crossval(crossval, f);
  crossval->add_flag("--sensor-maps", f.sensor_maps, "Collect per-pixel sensor frequency maps");

  CLI::App* sweep = app.add_subcommand("sweep-lambda", "Cross-validate coupled sensors across coupling weights");
  add_common(sweep, f);
  add_dataset(sweep, f);
  add_experiment(sweep, f);
  add_crossval(sweep, f);

  CLI::App* smap = app.add_subcommand("sensors-map", "Per-pixel sensor frequencies over repeated training splits");
  add_common(smap, f);
  add_dataset(smap, f);
  add_experiment(smap, f);
  smap->add_option("--strategy", f.strategies, "learned_full, learned_subsampled or random_pixels");
  smap->add_option("--iterations", f.iterations, "Random train/test splits");
  smap->add_option("--train-fraction", f.train_fraction, "Training share of each class");

  CLI::App* synth = app.add_subcommand("synth", "Write the built-in synthetic dataset as CSV and PGM images");
  add_common(synth, f);
  synth->add_option("--classes", f.classes, "Number of classes");
  synth->add_option("--samples-per-class", f.samples_per_class, "Samples per class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = merge(f);
    if (train->parsed()) return cmd_train(cfg, out, err);
    if (classify->parsed()) return cmd_classify(cfg, out, err);
    if (crossval->parsed()) return cmd_crossval(cfg, out, err);
    if (sweep->parsed()) return cmd_sweep(cfg, out, err);
    if (smap->parsed()) return cmd_sensors_map(cfg, out, err);
    if (synth->parsed()) {
      if (f.seed) cfg.spec.dataset.synthetic.seed = *f.seed;
      return cmd_synth(cfg, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace sparsesense

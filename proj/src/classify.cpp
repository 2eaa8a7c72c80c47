#include "sparsesense/classify.hpp"

#include <json.hpp>
#include <limits>

#include "sparsesense/errors.hpp"

namespace sparsesense {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* to_string(ClassifierRoute route) {
  switch (route) {
    case ClassifierRoute::full_pca_lda: return "full_pca_lda";
    case ClassifierRoute::induced: return "induced";
    case ClassifierRoute::retrained: return "retrained";
  }
  return "unknown";
}

ClassifierRoute route_from_string(const std::string& name) {
  if (name == "full_pca_lda" || name == "full") return ClassifierRoute::full_pca_lda;
  if (name == "induced") return ClassifierRoute::induced;
  if (name == "retrained") return ClassifierRoute::retrained;
  throw PreconditionError("unknown classifier route '" + name + "'");
}

namespace {

std::optional<TwoClassThreshold> threshold_from_centroids(const Eigen::MatrixXd& centroids) {
  if (centroids.cols() != 2) return std::nullopt;
  TwoClassThreshold t;
  t.threshold = 0.5 * (centroids(0, 0) + centroids(0, 1));
  t.class0_side = centroids(0, 0) - t.threshold >= 0.0 ? 1.0 : -1.0;
  return t;
}

}  // namespace

ClassifierModel build_full(const FeatureBasis& basis, const DiscriminantModel& model,
                           const Eigen::VectorXd& row_means, std::vector<std::string> class_names) {
  if (basis.basis.cols() != model.w.rows())
    throw DimensionError("build_full: basis rank does not match discriminant dimension");
  if (row_means.size() != basis.basis.rows())
    throw DimensionError("build_full: row means do not match basis dimension");
  ClassifierModel out;
  out.route = ClassifierRoute::full_pca_lda;
  out.measurement = MeasurementMatrix::identity(basis.dims());
  out.measured_means = row_means;
  out.num_classes = model.num_classes();
  out.class_names = std::move(class_names);
  out.basis = basis.basis;
  out.w = model.w;
  out.centroids_decision = model.centroids_decision;
  if (out.num_classes == 2) out.threshold = two_class_threshold(model);
  return out;
}

ClassifierModel build_induced(const FeatureBasis& basis, const DiscriminantModel& model,
                              const SparseSolution& solution, const MeasurementMatrix& M,
                              const DataMatrix& training) {
  const Eigen::Index d = basis.basis.rows();
  if (solution.s.rows() != d || solution.s.cols() != model.w.cols())
    throw DimensionError("build_induced: solution shape does not match basis and discriminant");
  if (M.cols() != d) throw DimensionError("build_induced: measurement width does not match basis");
  if (training.values.rows() != d || !training.centered)
    throw DimensionError("build_induced: training data must be centered and match the basis");

  ClassifierModel out;
  out.route = ClassifierRoute::induced;
  out.measurement = M;
  out.measured_means = M.apply(training.row_means);
  out.num_classes = model.num_classes();
  out.class_names = training.class_names;

  out.z = M.apply(solution.s);                              // q x (c-1)
  const Eigen::MatrixXd measured_modes = M.apply(basis.basis);  // q x r
  const Eigen::MatrixXd modes_t = measured_modes.transpose();   // r x q
  out.T = measured_modes * modes_t;
  out.T = 0.5 * (out.T + out.T.transpose());
  out.projection = out.z.transpose() * out.T;

  const Eigen::MatrixXd eta = out.projection * M.apply(training.values);
  out.centroids_decision = Eigen::MatrixXd::Zero(eta.rows(), out.num_classes);
  std::vector<int> counts(static_cast<std::size_t>(out.num_classes), 0);
  for (Eigen::Index i = 0; i < eta.cols(); ++i) {
    const int label = training.labels[static_cast<std::size_t>(i)];
    out.centroids_decision.col(label) += eta.col(i);
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int j = 0; j < out.num_classes; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0)
      throw PreconditionError("build_induced: class " + std::to_string(j) + " has no training samples");
    out.centroids_decision.col(j) /= counts[static_cast<std::size_t>(j)];
  }
  out.threshold = threshold_from_centroids(out.centroids_decision);
  return out;
}

ClassifierModel build_retrained(const Eigen::MatrixXd& measured, std::span<const int> labels,
                                int c, const MeasurementMatrix& M,
                                std::vector<std::string> class_names) {
  const Eigen::Index q = measured.rows();
  if (M.rows() != q) throw DimensionError("build_retrained: measurement rows do not match data");
  const Eigen::VectorXd means = measured.rowwise().mean();
  const Eigen::MatrixXd centered = measured.colwise() - means;
  const DiscriminantModel lda = fit_lda(centered, labels, c);

  ClassifierModel out;
  out.route = ClassifierRoute::retrained;
  out.measurement = M;
  out.measured_means = means;
  out.num_classes = c;
  out.class_names = std::move(class_names);
  out.w = lda.w;
  out.projection = lda.w.transpose();
  out.centroids_decision = lda.centroids_decision;
  if (c == 2) out.threshold = two_class_threshold(lda);
  return out;
}

ClassifierModel prepend_measurement(ClassifierModel model, const MeasurementMatrix& upstream) {
  model.measurement = compose(model.measurement, upstream);
  return model;
}

Eigen::MatrixXd decision_coordinates(const ClassifierModel& model, const Eigen::MatrixXd& X) {
  const Eigen::MatrixXd xhat = model.measurement.apply(X).colwise() - model.measured_means;
  if (model.route == ClassifierRoute::full_pca_lda) {
    const Eigen::MatrixXd features = model.basis.transpose() * xhat;
    return model.w.transpose() * features;
  }
  return model.projection * xhat;
}

Eigen::VectorXd decision_coordinates(const ClassifierModel& model, const Eigen::VectorXd& x) {
  return decision_coordinates(model, Eigen::MatrixXd(x)).col(0);
}

int decide_from_coordinates(const ClassifierModel& model, const Eigen::VectorXd& eta) {
  if (model.num_classes == 2 && model.threshold) {
    const double side = (eta(0) - model.threshold->threshold) * model.threshold->class0_side;
    return side >= 0.0 ? 0 : 1;
  }
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int j = 0; j < model.num_classes; ++j) {
    const double dist = (eta - model.centroids_decision.col(j)).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = j;
    }
  }
  return best;
}

int decide(const ClassifierModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.dims())
    throw DimensionError("decide: sample has " + std::to_string(x.size()) +
                         " values, model expects " + std::to_string(model.dims()));
  return decide_from_coordinates(model, decision_coordinates(model, x));
}

std::vector<int> decide_batch(const ClassifierModel& model, const Eigen::MatrixXd& X) {
  if (X.rows() != model.dims())
    throw DimensionError("decide: samples have " + std::to_string(X.rows()) +
                         " values, model expects " + std::to_string(model.dims()));
  const Eigen::MatrixXd eta = decision_coordinates(model, X);
  std::vector<int> out(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index i = 0; i < X.cols(); ++i)
    out[static_cast<std::size_t>(i)] = decide_from_coordinates(model, eta.col(i));
  return out;
}

double accuracy(const ClassifierModel& model, const Eigen::MatrixXd& X, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != X.cols())
    throw DimensionError("accuracy: label count does not match samples");
  if (labels.empty()) return 0.0;
  const std::vector<int> predicted = decide_batch(model, X);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void save_model_bundle(const fs::path& dir, const ClassifierModel& model) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create model directory " + dir.string() + ": " + ec.message());
  json j;
  j["route"] = to_string(model.route);
  j["num_classes"] = model.num_classes;
  j["class_names"] = model.class_names;
  j["measurement"] = to_json(model.measurement);
  if (model.threshold) {
    j["threshold"] = model.threshold->threshold;
    j["class0_side"] = model.threshold->class0_side;
  }
  save_matrix_csv(dir / "measured_means.csv", model.measured_means);
  save_matrix_csv(dir / "centroids_decision.csv", model.centroids_decision);
  switch (model.route) {
    case ClassifierRoute::full_pca_lda:
      save_matrix_csv(dir / "basis.csv", model.basis);
      save_matrix_csv(dir / "w.csv", model.w);
      break;
    case ClassifierRoute::induced:
      save_matrix_csv(dir / "T.csv", model.T);
      save_matrix_csv(dir / "z.csv", model.z);
      break;
    case ClassifierRoute::retrained:
      save_matrix_csv(dir / "w.csv", model.w);
      break;
  }
  write_text_file(dir / "model.json", j.dump(2) + "\n");
}

ClassifierModel load_model_bundle(const fs::path& dir) {
  json j;
  try {
    j = json::parse(read_text_file(dir / "model.json"));
  } catch (const json::exception& e) {
    throw IoError("malformed model bundle " + dir.string() + ": " + e.what());
  }
  ClassifierModel model;
  try {
    model.route = route_from_string(j.at("route").get<std::string>());
    model.num_classes = j.at("num_classes").get<int>();
    model.class_names = j.value("class_names", std::vector<std::string>{});
    model.measurement = measurement_from_json(j.at("measurement"));
    if (j.contains("threshold"))
      model.threshold = TwoClassThreshold{j.at("threshold").get<double>(),
                                          j.at("class0_side").get<double>()};
  } catch (const json::exception& e) {
    throw IoError("malformed model bundle " + dir.string() + ": " + e.what());
  }
  model.measured_means = load_matrix_csv(dir / "measured_means.csv").col(0);
  model.centroids_decision = load_matrix_csv(dir / "centroids_decision.csv");
  switch (model.route) {
    case ClassifierRoute::full_pca_lda:
      model.basis = load_matrix_csv(dir / "basis.csv");
      model.w = load_matrix_csv(dir / "w.csv");
      break;
    case ClassifierRoute::induced:
      model.T = load_matrix_csv(dir / "T.csv");
      model.z = load_matrix_csv(dir / "z.csv");
      model.projection = model.z.transpose() * model.T;
      break;
    case ClassifierRoute::retrained:
      model.w = load_matrix_csv(dir / "w.csv");
      model.projection = model.w.transpose();
      break;
  }
  if (model.measured_means.size() != model.measurement.rows())
    throw DimensionError("model bundle: measured means do not match measurement rows");
  return model;
}

}  // namespace sparsesense

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsesense/discriminant.hpp"
#include "sparsesense/features.hpp"
#include "sparsesense/matrixio.hpp"
#include "sparsesense/sensors.hpp"
#include "sparsesense/sparsesolve.hpp"

namespace sparsesense {

enum class ClassifierRoute { full_pca_lda, induced, retrained };

const char* to_string(ClassifierRoute route);
ClassifierRoute route_from_string(const std::string& name);

/// Maps a full-state sample to a class id.
///
/// Every route measures x, subtracts the measured training means, maps the
/// result into R^(c-1), and then applies the threshold rule (c = 2) or the
/// nearest-centroid rule (c > 2). Ties resolve to the lower class id.
struct ClassifierModel {
  ClassifierRoute route = ClassifierRoute::full_pca_lda;
  MeasurementMatrix measurement;   // n -> q (identity for the full route)
  Eigen::VectorXd measured_means;  // training row means seen through the measurement
  int num_classes = 0;
  std::vector<std::string> class_names;

  // full route: eta = w^T (basis^T xhat); basis n x r, w r x (c-1)
  Eigen::MatrixXd basis;
  Eigen::MatrixXd w;  // also the re-fit directions (q x (c-1)) for the retrained route
  // induced route: eta = z^T T xhat
  Eigen::MatrixXd T;  // q x q
  Eigen::MatrixXd z;  // q x (c-1)

  Eigen::MatrixXd projection;          // (c-1) x q, the composed linear map for sparse routes
  Eigen::MatrixXd centroids_decision;  // (c-1) x c
  std::optional<TwoClassThreshold> threshold;

  int dims() const { return measurement.cols(); }
};

ClassifierModel build_full(const FeatureBasis& basis, const DiscriminantModel& model,
                           const Eigen::VectorXd& row_means,
                           std::vector<std::string> class_names = {});

/// Induced projection from sparse measurements into decision space.
///
/// basis, model, and solution live in the same d-dimensional space as the
/// centered training data; M selects q of those d values. Forms z = M s and
/// T = (M Psi)(Psi^T M^T), and places the class centroids at the mean of
/// z^T T xhat over each class's training samples.
ClassifierModel build_induced(const FeatureBasis& basis, const DiscriminantModel& model,
                              const SparseSolution& solution, const MeasurementMatrix& M,
                              const DataMatrix& training);

/// LDA re-fit directly on sparse measurements Xhat (q x m, uncentered).
ClassifierModel build_retrained(const Eigen::MatrixXd& measured, std::span<const int> labels,
                                int c, const MeasurementMatrix& M,
                                std::vector<std::string> class_names = {});

/// Composes an upstream map (e.g. a random subsample) in front of the model's measurement.
ClassifierModel prepend_measurement(ClassifierModel model, const MeasurementMatrix& upstream);

Eigen::VectorXd decision_coordinates(const ClassifierModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd decision_coordinates(const ClassifierModel& model, const Eigen::MatrixXd& X);

int decide_from_coordinates(const ClassifierModel& model, const Eigen::VectorXd& eta);
int decide(const ClassifierModel& model, const Eigen::VectorXd& x);
std::vector<int> decide_batch(const ClassifierModel& model, const Eigen::MatrixXd& X);
double accuracy(const ClassifierModel& model, const Eigen::MatrixXd& X, std::span<const int> labels);

/// Directory bundle: model.json plus CSV matrices.
void save_model_bundle(const std::filesystem::path& dir, const ClassifierModel& model);
ClassifierModel load_model_bundle(const std::filesystem::path& dir);

}  // namespace sparsesense

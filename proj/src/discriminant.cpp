#include "sparsesense/discriminant.hpp"

#include <cmath>
#include <vector>

#include "sparsesense/errors.hpp"
#include "sparsesense/features.hpp"

namespace sparsesense {

Scatter scatter_matrices(const Eigen::MatrixXd& A, std::span<const int> labels, int c) {
  const Eigen::Index r = A.rows();
  const Eigen::Index m = A.cols();
  if (static_cast<Eigen::Index>(labels.size()) != m)
    throw DimensionError("LDA: labels length does not match sample count");
  if (c < 2) throw PreconditionError("LDA needs at least 2 classes");

  std::vector<Eigen::Index> counts(static_cast<std::size_t>(c), 0);
  Scatter s;
  s.class_means = Eigen::MatrixXd::Zero(r, c);
  for (Eigen::Index i = 0; i < m; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= c) throw PreconditionError("LDA: class id out of range");
    s.class_means.col(label) += A.col(i);
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int j = 0; j < c; ++j) {
    if (counts[static_cast<std::size_t>(j)] == 0)
      throw PreconditionError("LDA: class " + std::to_string(j) + " has no samples");
    s.class_means.col(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
  }
  const Eigen::VectorXd mu = A.rowwise().mean();

  Eigen::MatrixXd deviations(r, m);
  for (Eigen::Index i = 0; i < m; ++i)
    deviations.col(i) = A.col(i) - s.class_means.col(labels[static_cast<std::size_t>(i)]);
  s.within = deviations * deviations.transpose();

  s.between = Eigen::MatrixXd::Zero(r, r);
  for (int j = 0; j < c; ++j) {
    const Eigen::VectorXd d = s.class_means.col(j) - mu;
    s.between.noalias() += static_cast<double>(counts[static_cast<std::size_t>(j)]) * d * d.transpose();
  }
  // symmetrize against round-off
  s.within = 0.5 * (s.within + s.within.transpose());
  s.between = 0.5 * (s.between + s.between.transpose());
  return s;
}

DiscriminantModel fit_lda(const Eigen::MatrixXd& A, std::span<const int> labels, int c,
                          const LdaOptions& options) {
  const Eigen::Index r = A.rows();
  const Eigen::Index m = A.cols();
  if (r < 1) throw DimensionError("LDA: feature dimension must be at least 1");
  if (m < r + c)
    throw PreconditionError("LDA needs at least r + c = " + std::to_string(r + c) +
                            " samples, got " + std::to_string(m));
  Scatter s = scatter_matrices(A, labels, c);

  double gamma = 0.0;
  const double trace = s.within.trace();
  if (options.gamma) {
    gamma = *options.gamma;
    if (gamma < 0.0) throw PreconditionError("LDA: gamma must be non-negative");
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> sw(s.within, Eigen::EigenvaluesOnly);
    const double lo = sw.eigenvalues()(0);
    const double hi = sw.eigenvalues()(r - 1);
    const bool well_conditioned = lo > 0.0 && hi / lo < 1e8;
    if (!well_conditioned) {
      gamma = 1e-6 * trace / static_cast<double>(r);
      if (!(gamma > 0.0)) gamma = 1e-6 * std::max(s.between.trace(), 1.0) / static_cast<double>(r);
    }
  }

  Eigen::MatrixXd regularized = s.within;
  regularized.diagonal().array() += gamma;
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(s.between, regularized,
                                                                 Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  if (ges.info() != Eigen::Success)
    throw ConvergenceError("LDA: within-class scatter is not positive definite (gamma = " +
                           std::to_string(gamma) + ")");

  const int k = c - 1;
  if (k > r)
    throw PreconditionError("LDA: c - 1 = " + std::to_string(k) +
                            " directions exceed feature dimension " + std::to_string(r));
  Eigen::VectorXd values = ges.eigenvalues().reverse();
  Eigen::MatrixXd vectors = ges.eigenvectors().rowwise().reverse();
  const double largest = values(0);
  int between_rank = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (largest > 0.0 && values(i) > 1e-10 * largest) ++between_rank;
  if (between_rank < k)
    throw PreconditionError("LDA: between-class scatter has rank " + std::to_string(between_rank) +
                            ", need " + std::to_string(k) + " (coincident class centroids)");

  DiscriminantModel model;
  model.w = vectors.leftCols(k);
  for (int j = 0; j < k; ++j) model.w.col(j).normalize();
  normalize_column_signs(model.w);
  model.eigenvalues = values.head(k);
  model.centroids_feature = s.class_means;
  model.centroids_decision = model.w.transpose() * s.class_means;
  model.regularization_gamma = gamma;
  return model;
}

TwoClassThreshold two_class_threshold(const DiscriminantModel& model) {
  if (model.num_classes() != 2)
    throw PreconditionError("two_class_threshold requires exactly 2 classes, model has " +
                            std::to_string(model.num_classes()));
  const double a = model.centroids_decision(0, 0);
  const double b = model.centroids_decision(0, 1);
  TwoClassThreshold t;
  t.threshold = 0.5 * (a + b);
  t.class0_side = a - t.threshold >= 0.0 ? 1.0 : -1.0;
  return t;
}

}  // namespace sparsesense

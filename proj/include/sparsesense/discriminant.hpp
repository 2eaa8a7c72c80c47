#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>

namespace sparsesense {

/// LDA directions and class geometry in an r-dimensional feature space.
struct DiscriminantModel {
  Eigen::MatrixXd w;                      // r x (c-1), unit-norm columns
  Eigen::MatrixXd centroids_feature;      // r x c, column j = class mean mu_j
  Eigen::MatrixXd centroids_decision;     // (c-1) x c, column j = w^T mu_j
  Eigen::VectorXd eigenvalues;            // c-1 generalized eigenvalues, descending
  double regularization_gamma = 0.0;

  int num_classes() const { return static_cast<int>(centroids_feature.cols()); }
  int dims() const { return static_cast<int>(w.rows()); }
};

struct LdaOptions {
  // Overrides the automatic ridge (1e-6 * trace(S_W) / r when cond(S_W) >= 1e8).
  std::optional<double> gamma;
};

/// Fisher LDA on feature samples A (r x m).
///
/// Solves S_B w = lambda (S_W + gamma I) w through a Cholesky factorization of the
/// regularized within-class scatter and keeps the c-1 leading eigenvectors,
/// unit-normalized with their largest-magnitude entry positive.
/// Requires m >= r + c and every class present; throws if S_B has rank < c-1.
DiscriminantModel fit_lda(const Eigen::MatrixXd& A, std::span<const int> labels, int c,
                          const LdaOptions& options = {});

/// Scatter matrices, exposed for diagnostics and tests.
struct Scatter {
  Eigen::MatrixXd within;
  Eigen::MatrixXd between;
  Eigen::MatrixXd class_means;  // r x c
};
Scatter scatter_matrices(const Eigen::MatrixXd& A, std::span<const int> labels, int c);

struct TwoClassThreshold {
  double threshold = 0.0;
  // Sign of w^T mu_0 - threshold; a projection on this side (or on the
  // threshold itself) is class 0.
  double class0_side = 1.0;
};

/// Midpoint of the two projected class means. Requires c == 2.
TwoClassThreshold two_class_threshold(const DiscriminantModel& model);

}  // namespace sparsesense

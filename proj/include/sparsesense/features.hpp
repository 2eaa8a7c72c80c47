#pragma once

#include <Eigen/Dense>

#include "sparsesense/matrixio.hpp"

namespace sparsesense {

/// Truncated orthonormal PCA basis of a centered data matrix.
struct FeatureBasis {
  Eigen::MatrixXd basis;            // n x r, orthonormal columns
  Eigen::VectorXd singular_values;  // all m values, descending, >= 0

  int rank() const { return static_cast<int>(basis.cols()); }
  int dims() const { return static_cast<int>(basis.rows()); }
};

/// PCA modes via the method of snapshots.
///
/// Eigendecomposes the m x m Gram matrix X^T X, takes sigma_i = sqrt(lambda_i),
/// and forms the modes as X V Sigma^-1, keeping the leading r. Each mode is
/// signed so its largest-magnitude entry is positive. Throws RankError when
/// sigma_r / sigma_1 falls below max(1e-12, sqrt(m * eps)), the smallest ratio
/// the Gram route resolves.
FeatureBasis snapshot_pca(const DataMatrix& X, int r);
FeatureBasis snapshot_pca(const Eigen::MatrixXd& centered_values, int r);

/// Feature coordinates a = Psi_r^T x.
Eigen::VectorXd project(const FeatureBasis& basis, const Eigen::VectorXd& x);
Eigen::MatrixXd project(const FeatureBasis& basis, const Eigen::MatrixXd& X);

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
void normalize_column_signs(Eigen::MatrixXd& M);

}  // namespace sparsesense

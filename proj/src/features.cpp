#include "sparsesense/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparsesense/errors.hpp"

namespace sparsesense {

void normalize_column_signs(Eigen::MatrixXd& M) {
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      const double a = std::abs(M(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (M.rows() > 0 && M(best, j) < 0.0) M.col(j) = -M.col(j);
  }
}

FeatureBasis snapshot_pca(const Eigen::MatrixXd& X, int r) {
  const Eigen::Index m = X.cols();
  if (m == 0 || X.rows() == 0) throw DimensionError("snapshot_pca: empty data matrix");
  if (r < 1) throw PreconditionError("snapshot_pca: rank must be at least 1");
  if (r > std::min<Eigen::Index>(X.rows(), m))
    throw RankError("snapshot_pca: rank " + std::to_string(r) + " exceeds min(n, m) = " +
                        std::to_string(std::min<Eigen::Index>(X.rows(), m)),
                    static_cast<int>(std::min<Eigen::Index>(X.rows(), m)));

  Eigen::MatrixXd gram = Eigen::MatrixXd(X.transpose() * X).selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success)
    throw ConvergenceError("snapshot_pca: Gram eigendecomposition failed");

  // Eigen returns ascending eigenvalues; reverse to descending.
  Eigen::VectorXd lambda = eig.eigenvalues().reverse();
  Eigen::MatrixXd V = eig.eigenvectors().rowwise().reverse();
  const double top = std::max(lambda(0), 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (lambda(i) < 0.0) {
      if (lambda(i) < -1e-10 * top)
        throw ConvergenceError("snapshot_pca: Gram matrix has a significantly negative eigenvalue");
      lambda(i) = 0.0;
    }
  }

  FeatureBasis out;
  out.singular_values = lambda.cwiseSqrt();
  const double sigma1 = out.singular_values(0);
  // Gram eigenvalues carry absolute error near m * eps * sigma_1^2, so a zero
  // singular value comes back as roughly sqrt(m * eps) * sigma_1. The 1e-12
  // cutoff is raised to that floor.
  const double cutoff = std::max(1e-12, std::sqrt(static_cast<double>(m) *
                                                  std::numeric_limits<double>::epsilon()));
  int usable = 0;
  while (usable < m && sigma1 > 0.0 && out.singular_values(usable) / sigma1 >= cutoff) ++usable;
  if (r > usable)
    throw RankError("snapshot_pca: rank " + std::to_string(r) +
                        " exceeds the numerical rank of the data (usable rank " +
                        std::to_string(usable) + ")",
                    usable);

  Eigen::VectorXd inv_sigma = out.singular_values.head(r).cwiseInverse();
  out.basis = X * (V.leftCols(r) * inv_sigma.asDiagonal());
  normalize_column_signs(out.basis);
  return out;
}

FeatureBasis snapshot_pca(const DataMatrix& X, int r) {
  if (!X.centered) throw PreconditionError("snapshot_pca: data matrix must be centered");
  return snapshot_pca(X.values, r);
}

Eigen::VectorXd project(const FeatureBasis& basis, const Eigen::VectorXd& x) {
  if (x.size() != basis.basis.rows())
    throw DimensionError("project: vector length " + std::to_string(x.size()) +
                         " does not match basis dimension " + std::to_string(basis.basis.rows()));
  return basis.basis.transpose() * x;
}

Eigen::MatrixXd project(const FeatureBasis& basis, const Eigen::MatrixXd& X) {
  if (X.rows() != basis.basis.rows())
    throw DimensionError("project: matrix rows " + std::to_string(X.rows()) +
                         " do not match basis dimension " + std::to_string(basis.basis.rows()));
  return basis.basis.transpose() * X;
}

}  // namespace sparsesense

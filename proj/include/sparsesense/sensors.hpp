#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <memory>
#include <span>
#include <vector>

#include "sparsesense/sparsesolve.hpp"

namespace sparsesense {

enum class MeasurementKind { identity_rows, random_pixels, bernoulli_projection, composed };

const char* to_string(MeasurementKind kind);

/// Linear map from n full-state values to a few measurements.
///
/// Selector kinds (identity_rows, random_pixels) hold strictly increasing
/// indices and are applied as gathers. bernoulli_projection holds a dense 0/1
/// matrix regenerated from its seed. composed holds two factors and applies
/// the inner one first; a composition of two selectors collapses to an
/// identity_rows selector at construction.
class MeasurementMatrix {
 public:
  static MeasurementMatrix selector(std::vector<int> indices, int n,
                                    MeasurementKind kind = MeasurementKind::identity_rows,
                                    std::uint64_t seed = 0);
  static MeasurementMatrix projection(Eigen::MatrixXd dense, std::uint64_t seed);
  static MeasurementMatrix identity(int n);

  MeasurementKind kind() const { return kind_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_selector() const {
    return kind_ == MeasurementKind::identity_rows || kind_ == MeasurementKind::random_pixels;
  }
  const std::vector<int>& indices() const { return indices_; }
  const Eigen::MatrixXd& dense() const { return dense_; }
  std::uint64_t seed() const { return seed_; }
  const MeasurementMatrix& outer() const { return *outer_; }
  const MeasurementMatrix& inner() const { return *inner_; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd to_dense() const;

  friend MeasurementMatrix compose(const MeasurementMatrix& phi_hat2,
                                   const MeasurementMatrix& phi_tilde);

 private:
  MeasurementKind kind_ = MeasurementKind::identity_rows;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> indices_;
  Eigen::MatrixXd dense_;
  std::uint64_t seed_ = 0;
  std::shared_ptr<const MeasurementMatrix> outer_;
  std::shared_ptr<const MeasurementMatrix> inner_;
};

/// Rows of the n x n identity at the solution's support.
MeasurementMatrix from_solution(const SparseSolution& solution, int n);

/// p distinct pixels chosen uniformly without replacement, stored sorted.
MeasurementMatrix random_pixels(int n, int p, std::uint64_t seed);

/// p x n matrix of fair 0/1 coins, drawn row by row.
MeasurementMatrix bernoulli_projection(int n, int p, std::uint64_t seed);

/// phi_hat2 after phi_tilde: a q x n map.
MeasurementMatrix compose(const MeasurementMatrix& phi_hat2, const MeasurementMatrix& phi_tilde);

inline Eigen::MatrixXd apply(const MeasurementMatrix& M, const Eigen::MatrixXd& X) {
  return M.apply(X);
}

/// Per-pixel counts from summing the rows of each selector's transpose.
std::vector<long> sensor_counts(std::span<const MeasurementMatrix> ensemble, int n);

/// Counts scaled by their maximum into [0, 1] for heatmap output.
Eigen::VectorXd normalized_counts(std::span<const long> counts);

nlohmann::json to_json(const MeasurementMatrix& M);
MeasurementMatrix measurement_from_json(const nlohmann::json& j);

}  // namespace sparsesense

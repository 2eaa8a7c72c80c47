#include "sparsesense/sensors.hpp"

#include <algorithm>

#include "sparsesense/errors.hpp"
#include "sparsesense/rng.hpp"

namespace sparsesense {

const char* to_string(MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::identity_rows: return "identity_rows";
    case MeasurementKind::random_pixels: return "random_pixels";
    case MeasurementKind::bernoulli_projection: return "bernoulli_projection";
    case MeasurementKind::composed: return "composed";
  }
  return "unknown";
}

MeasurementMatrix MeasurementMatrix::selector(std::vector<int> indices, int n,
                                              MeasurementKind kind, std::uint64_t seed) {
  if (kind != MeasurementKind::identity_rows && kind != MeasurementKind::random_pixels)
    throw PreconditionError("selector kind must be identity_rows or random_pixels");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= n)
      throw DimensionError("selector index " + std::to_string(indices[i]) + " outside [0, " +
                           std::to_string(n) + ")");
    if (i > 0 && indices[i] <= indices[i - 1])
      throw PreconditionError("selector indices must be strictly increasing");
  }
  MeasurementMatrix M;
  M.kind_ = kind;
  M.rows_ = static_cast<int>(indices.size());
  M.cols_ = n;
  M.indices_ = std::move(indices);
  M.seed_ = seed;
  return M;
}

MeasurementMatrix MeasurementMatrix::projection(Eigen::MatrixXd dense, std::uint64_t seed) {
  MeasurementMatrix M;
  M.kind_ = MeasurementKind::bernoulli_projection;
  M.rows_ = static_cast<int>(dense.rows());
  M.cols_ = static_cast<int>(dense.cols());
  M.dense_ = std::move(dense);
  M.seed_ = seed;
  return M;
}

MeasurementMatrix MeasurementMatrix::identity(int n) {
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  return selector(std::move(all), n);
}

Eigen::MatrixXd MeasurementMatrix::apply(const Eigen::MatrixXd& X) const {
  if (X.rows() != cols_)
    throw DimensionError("measurement expects " + std::to_string(cols_) + " rows, got " +
                         std::to_string(X.rows()));
  switch (kind_) {
    case MeasurementKind::identity_rows:
    case MeasurementKind::random_pixels: {
      Eigen::MatrixXd out(rows_, X.cols());
      for (int i = 0; i < rows_; ++i) out.row(i) = X.row(indices_[static_cast<std::size_t>(i)]);
      return out;
    }
    case MeasurementKind::bernoulli_projection:
      return dense_ * X;
    case MeasurementKind::composed:
      return outer_->apply(inner_->apply(X));
  }
  throw PreconditionError("unknown measurement kind");
}

Eigen::VectorXd MeasurementMatrix::apply(const Eigen::VectorXd& x) const {
  return apply(Eigen::MatrixXd(x)).col(0);
}

Eigen::MatrixXd MeasurementMatrix::to_dense() const {
  switch (kind_) {
    case MeasurementKind::identity_rows:
    case MeasurementKind::random_pixels: {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_, cols_);
      for (int i = 0; i < rows_; ++i) out(i, indices_[static_cast<std::size_t>(i)]) = 1.0;
      return out;
    }
    case MeasurementKind::bernoulli_projection:
      return dense_;
    case MeasurementKind::composed:
      return outer_->to_dense() * inner_->to_dense();
  }
  throw PreconditionError("unknown measurement kind");
}

namespace {

bool is_full_identity(const MeasurementMatrix& M) {
  if (!M.is_selector() || M.rows() != M.cols()) return false;
  for (int i = 0; i < M.rows(); ++i)
    if (M.indices()[static_cast<std::size_t>(i)] != i) return false;
  return true;
}

}  // namespace

MeasurementMatrix compose(const MeasurementMatrix& phi_hat2, const MeasurementMatrix& phi_tilde) {
  if (phi_hat2.cols() != phi_tilde.rows())
    throw DimensionError("compose: inner map yields " + std::to_string(phi_tilde.rows()) +
                         " values, outer map expects " + std::to_string(phi_hat2.cols()));
  if (is_full_identity(phi_hat2)) return phi_tilde;
  if (is_full_identity(phi_tilde)) return phi_hat2;
  if (phi_hat2.is_selector() && phi_tilde.is_selector()) {
    std::vector<int> indices;
    indices.reserve(phi_hat2.indices().size());
    for (int i : phi_hat2.indices()) indices.push_back(phi_tilde.indices()[static_cast<std::size_t>(i)]);
    return MeasurementMatrix::selector(std::move(indices), phi_tilde.cols());
  }
  MeasurementMatrix M;
  M.kind_ = MeasurementKind::composed;
  M.rows_ = phi_hat2.rows();
  M.cols_ = phi_tilde.cols();
  M.outer_ = std::make_shared<const MeasurementMatrix>(phi_hat2);
  M.inner_ = std::make_shared<const MeasurementMatrix>(phi_tilde);
  return M;
}

MeasurementMatrix from_solution(const SparseSolution& solution, int n) {
  if (solution.s.rows() != n)
    throw DimensionError("from_solution: solution has " + std::to_string(solution.s.rows()) +
                         " rows, expected " + std::to_string(n));
  if (solution.support.empty()) throw PreconditionError("from_solution: empty sensor support");
  return MeasurementMatrix::selector(solution.support, n);
}

MeasurementMatrix random_pixels(int n, int p, std::uint64_t seed) {
  if (p > n)
    throw PreconditionError("random_pixels: p = " + std::to_string(p) + " exceeds n = " +
                            std::to_string(n));
  if (p < 0) throw PreconditionError("random_pixels: p must be non-negative");
  Rng rng(seed);
  std::vector<int> picked = sample_without_replacement(n, p, rng);
  std::sort(picked.begin(), picked.end());
  return MeasurementMatrix::selector(std::move(picked), n, MeasurementKind::random_pixels, seed);
}

MeasurementMatrix bernoulli_projection(int n, int p, std::uint64_t seed) {
  if (p < 1 || n < 1) throw PreconditionError("bernoulli_projection: p and n must be positive");
  Rng rng(seed);
  Eigen::MatrixXd dense(p, n);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < n; ++j) dense(i, j) = rng.coin() ? 1.0 : 0.0;
  return MeasurementMatrix::projection(std::move(dense), seed);
}

std::vector<long> sensor_counts(std::span<const MeasurementMatrix> ensemble, int n) {
  std::vector<long> counts(static_cast<std::size_t>(n), 0);
  for (const auto& M : ensemble) {
    if (!M.is_selector())
      throw PreconditionError(std::string("sensor map needs pixel selectors, got ") +
                              to_string(M.kind()));
    if (M.cols() != n) throw DimensionError("sensor map: selector width does not match n");
    for (int i : M.indices()) ++counts[static_cast<std::size_t>(i)];
  }
  return counts;
}

Eigen::VectorXd normalized_counts(std::span<const long> counts) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(counts.size()));
  const long top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  for (std::size_t i = 0; i < counts.size(); ++i)
    out(static_cast<Eigen::Index>(i)) =
        top > 0 ? static_cast<double>(counts[i]) / static_cast<double>(top) : 0.0;
  return out;
}

nlohmann::json to_json(const MeasurementMatrix& M) {
  nlohmann::json j;
  j["kind"] = to_string(M.kind());
  j["rows"] = M.rows();
  j["cols"] = M.cols();
  switch (M.kind()) {
    case MeasurementKind::identity_rows:
    case MeasurementKind::random_pixels:
      j["indices"] = M.indices();
      j["seed"] = M.seed();
      break;
    case MeasurementKind::bernoulli_projection:
      j["seed"] = M.seed();
      break;
    case MeasurementKind::composed:
      j["outer"] = to_json(M.outer());
      j["inner"] = to_json(M.inner());
      break;
  }
  return j;
}

MeasurementMatrix measurement_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const int cols = j.at("cols").get<int>();
  const int rows = j.at("rows").get<int>();
  if (kind == "identity_rows" || kind == "random_pixels") {
    return MeasurementMatrix::selector(
        j.at("indices").get<std::vector<int>>(), cols,
        kind == "identity_rows" ? MeasurementKind::identity_rows : MeasurementKind::random_pixels,
        j.value("seed", std::uint64_t{0}));
  }
  if (kind == "bernoulli_projection")
    return bernoulli_projection(cols, rows, j.at("seed").get<std::uint64_t>());
  if (kind == "composed")
    return compose(measurement_from_json(j.at("outer")), measurement_from_json(j.at("inner")));
  throw IoError("unknown measurement kind '" + kind + "'");
}

}  // namespace sparsesense

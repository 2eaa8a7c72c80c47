#include "sparsesense/sparsesolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sparsesense/errors.hpp"

namespace sparsesense {

namespace {

constexpr double kSupportRelThreshold = 1e-6;

double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double bp_feasibility_bound(const Eigen::MatrixXd& targets) {
  return 1e-8 * (1.0 + targets.cwiseAbs().maxCoeff());
}

// Thin SVD of the r x n dictionary, D = U diag(sigma) V^T, shared by the
// constraint projections and the dual fit.
class ConstraintGeometry {
 public:
  explicit ConstraintGeometry(const Eigen::MatrixXd& dictionary) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dictionary.transpose(),
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    V_ = svd.matrixU();      // n x r
    U_ = svd.matrixV();      // r x r
    sigma_ = svd.singularValues();
    const Eigen::Index r = dictionary.rows();
    if (sigma_.size() < r || sigma_(0) <= 0.0 || sigma_(r - 1) / sigma_(0) < 1e-12)
      throw PreconditionError("sparse solver: dictionary is rank deficient");
  }

  // Orthogonal projection onto {S : D S = W}.
  Eigen::MatrixXd project_equality(const Eigen::MatrixXd& S, const Eigen::MatrixXd& W) const {
    const Eigen::MatrixXd Y = V_.transpose() * S;
    const Eigen::MatrixXd target = sigma_.cwiseInverse().asDiagonal() * (U_.transpose() * W);
    return S + V_ * (target - Y);
  }

  // Orthogonal projection onto {S : ||D S - W||_F <= eps}. In the coordinates
  // Y = V^T S the set is the ellipsoid ||diag(sigma) Y - U^T W|| <= eps; the
  // projection is Y' = (Y + mu diag(sigma) B) / (1 + mu sigma^2) for the
  // multiplier mu >= 0 that lands on the boundary.
  Eigen::MatrixXd project_ball(const Eigen::MatrixXd& S, const Eigen::MatrixXd& W,
                               double eps) const {
    if (eps <= 0.0) return project_equality(S, W);
    const Eigen::MatrixXd Y = V_.transpose() * S;
    const Eigen::MatrixXd B = U_.transpose() * W;
    const Eigen::MatrixXd R = sigma_.asDiagonal() * Y - B;
    const double norm = R.norm();
    if (norm <= eps) return S;

    const Eigen::VectorXd sig2 = sigma_.cwiseAbs2();
    const Eigen::VectorXd row_sq = R.rowwise().squaredNorm();
    auto residual_norm = [&](double mu) {
      return std::sqrt((row_sq.array() / (1.0 + mu * sig2.array()).square()).sum());
    };
    // psi(mu) = 1/||R(mu)|| is increasing and close to linear in mu; Newton
    // from below with a bisection safeguard.
    double lo = 0.0;
    double hi = 1.0 / (eps * sig2.minCoeff()) * norm;  // ||R(hi)|| <= eps
    double mu = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      const double rn = residual_norm(mu);
      const double f = 1.0 / rn - 1.0 / eps;
      if (std::abs(f) * eps <= 1e-14) break;
      if (f < 0.0) lo = mu; else hi = mu;
      const double deriv =
          (row_sq.array() * sig2.array() / (1.0 + mu * sig2.array()).cube()).sum() /
          (rn * rn * rn);
      double next = deriv > 0.0 ? mu - f / deriv : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      mu = next;
    }
    Eigen::MatrixXd Yp(Y.rows(), Y.cols());
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
      Yp.row(i) = (Y.row(i) + mu * sigma_(i) * B.row(i)) / (1.0 + mu * sig2(i));
    return S + V_ * (Yp - Y);
  }

  // Least-squares Y with D^T Y ~= G.
  Eigen::MatrixXd dual_fit(const Eigen::MatrixXd& G) const {
    return U_ * (sigma_.cwiseInverse().asDiagonal() * (V_.transpose() * G));
  }

 private:
  Eigen::MatrixXd U_, V_;
  Eigen::VectorXd sigma_;
};

double dual_norm(const Eigen::MatrixXd& G, double lambda) {
  if (lambda == 0.0) return G.cwiseAbs().maxCoeff();
  double t = 0.0;
  for (Eigen::Index i = 0; i < G.rows(); ++i)
    t = std::max(t, coupled_row_dual_norm(G.row(i).transpose(), lambda));
  return t;
}

// Lower bound on the optimal value from a dual candidate Y (r x k):
// max <Y, W> - eps ||Y|| subject to h°(D^T Y) <= 1, after rescaling Y.
double dual_value(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& W,
                  const Eigen::MatrixXd& Y, double lambda, double eps) {
  const double t = dual_norm(dictionary.transpose() * Y, lambda);
  if (!(t > 0.0)) return -std::numeric_limits<double>::infinity();
  return ((Y.array() * W.array()).sum() - eps * Y.norm()) / t;
}

// Moves s along null directions of the support columns without increasing
// ||s||_1 until the support columns are linearly independent (a basic
// solution, at most r nonzeros), then improves that basic solution by a
// bounded number of exchange steps. D s is unchanged up to round-off.
void basic_column(const Eigen::MatrixXd& dictionary, Eigen::Ref<Eigen::VectorXd> s,
                  const Eigen::VectorXd& w, int max_pivots) {
  const Eigen::Index r = dictionary.rows();
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) != 0.0) support.push_back(i);

  while (!support.empty()) {
    const std::size_t take = std::min(support.size(), static_cast<std::size_t>(r + 1));
    Eigen::MatrixXd sub(r, static_cast<Eigen::Index>(take));
    for (std::size_t j = 0; j < take; ++j) sub.col(static_cast<Eigen::Index>(j)) = dictionary.col(support[j]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub, Eigen::ComputeFullV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const bool dependent = static_cast<Eigen::Index>(take) > r ||
                           sv(sv.size() - 1) <= 1e-12 * std::max(sv(0), 1e-300);
    if (!dependent) break;
    Eigen::VectorXd d = svd.matrixV().col(static_cast<Eigen::Index>(take) - 1);

    double slope = 0.0;
    for (std::size_t j = 0; j < take; ++j)
      slope += (s(support[j]) > 0.0 ? 1.0 : -1.0) * d(static_cast<Eigen::Index>(j));
    if (slope > 0.0) d = -d;

    auto first_hit = [&](const Eigen::VectorXd& dir, double& step) {
      std::size_t hit = take;
      step = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < take; ++j) {
        const double si = s(support[j]);
        const double di = dir(static_cast<Eigen::Index>(j));
        if (si * di < 0.0 && -si / di < step) {
          step = -si / di;
          hit = j;
        }
      }
      return hit;
    };
    double step = 0.0;
    std::size_t hit = first_hit(d, step);
    if (hit == take && slope == 0.0) {
      d = -d;
      hit = first_hit(d, step);
    }
    if (hit == take) break;
    for (std::size_t j = 0; j < take; ++j) s(support[j]) += step * d(static_cast<Eigen::Index>(j));
    s(support[hit]) = 0.0;
    support.erase(support.begin() + static_cast<std::ptrdiff_t>(hit));
  }

  if (support.empty()) return;
  auto refit = [&](const std::vector<Eigen::Index>& basis) {
    Eigen::MatrixXd Ds(r, static_cast<Eigen::Index>(basis.size()));
    Eigen::VectorXd ss(static_cast<Eigen::Index>(basis.size()));
    for (std::size_t j = 0; j < basis.size(); ++j) {
      Ds.col(static_cast<Eigen::Index>(j)) = dictionary.col(basis[j]);
      ss(static_cast<Eigen::Index>(j)) = s(basis[j]);
    }
    const Eigen::VectorXd delta = Ds.completeOrthogonalDecomposition().solve(w - Ds * ss);
    for (std::size_t j = 0; j < basis.size(); ++j) s(basis[j]) += delta(static_cast<Eigen::Index>(j));
  };
  refit(support);

  // Crossover: while some off-support column violates dual feasibility
  // |d_j^T y| <= 1 for the KKT dual y of the current support, bring it in and
  // walk to the next basic solution. Each step lowers ||s||_1 by
  // (|d_j^T y| - 1) per unit step, so a step that hits a vertex of the
  // current support is never undone by a later one.
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    const auto k = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd Ds(r, k);
    Eigen::VectorXd signs(k);
    for (Eigen::Index j = 0; j < k; ++j) {
      Ds.col(j) = dictionary.col(support[static_cast<std::size_t>(j)]);
      signs(j) = s(support[static_cast<std::size_t>(j)]) > 0.0 ? 1.0 : -1.0;
    }
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Ds);
    const Eigen::VectorXd y = Ds.transpose().completeOrthogonalDecomposition().solve(signs);
    const Eigen::VectorXd g = dictionary.transpose() * y;
    Eigen::Index enter = -1;
    double worst = 1.0 + 1e-9;
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (s(i) != 0.0) continue;
      if (std::abs(g(i)) > worst) {
        worst = std::abs(g(i));
        enter = i;
      }
    }
    if (enter < 0) break;
    const double sigma = g(enter) > 0.0 ? 1.0 : -1.0;
    const Eigen::VectorXd d = cod.solve(-sigma * dictionary.col(enter));
    if ((Ds * d + sigma * dictionary.col(enter)).norm() > 1e-9 * (1.0 + dictionary.col(enter).norm()))
      break;  // entering column outside the span of a short support
    double step = std::numeric_limits<double>::infinity();
    Eigen::Index leave = -1;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double sj = s(support[static_cast<std::size_t>(j)]);
      if (sj * d(j) < 0.0 && -sj / d(j) < step) {
        step = -sj / d(j);
        leave = j;
      }
    }
    if (leave < 0 || !(step > 0.0)) break;  // unbounded or degenerate; leave it to ADMM
    for (Eigen::Index j = 0; j < k; ++j) s(support[static_cast<std::size_t>(j)]) += step * d(j);
    s(enter) = sigma * step;
    s(support[static_cast<std::size_t>(leave)]) = 0.0;
    support[static_cast<std::size_t>(leave)] = enter;
    std::sort(support.begin(), support.end());
    refit(support);
  }
}

// Keeps the entries of z above the support threshold and applies the
// minimum-norm correction on that support that restores D s = W per column.
// A support whose columns do not span all r rows is first grown by the
// entries with the largest |subgradient| (near-active entries, which is where
// slowly emerging small coefficients live). With purify set (plain l1
// objective) each column is then reduced to a basic solution.
Eigen::MatrixXd polish(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& W,
                       const Eigen::MatrixXd& z, const Eigen::MatrixXd& subgradient,
                       bool purify) {
  const double scale = z.cwiseAbs().maxCoeff();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  if (!(scale > 0.0)) return s;
  const double threshold = kSupportRelThreshold * scale;
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      if (std::abs(z(i, k)) > threshold) idx.push_back(i);
    if (idx.empty()) continue;
    const Eigen::Index r = dictionary.rows();
    auto rank_of = [&](const std::vector<Eigen::Index>& cols) {
      Eigen::MatrixXd M(r, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t j = 0; j < cols.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = dictionary.col(cols[j]);
      return static_cast<Eigen::Index>(M.completeOrthogonalDecomposition().rank());
    };
    if (static_cast<Eigen::Index>(idx.size()) < r || rank_of(idx) < r) {
      std::vector<Eigen::Index> order;
      for (Eigen::Index i = 0; i < z.rows(); ++i)
        if (std::abs(z(i, k)) <= threshold) order.push_back(i);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(subgradient(a, k)) > std::abs(subgradient(b, k));
      });
      std::size_t next = 0;
      while (next < order.size()) {
        while (next < order.size() && static_cast<Eigen::Index>(idx.size()) < r) idx.push_back(order[next++]);
        if (rank_of(idx) >= r) break;
        if (next < order.size()) idx.push_back(order[next++]);
      }
      std::sort(idx.begin(), idx.end());
    }
    Eigen::MatrixXd Ds(dictionary.rows(), static_cast<Eigen::Index>(idx.size()));
    Eigen::VectorXd zs(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      Ds.col(static_cast<Eigen::Index>(j)) = dictionary.col(idx[j]);
      zs(static_cast<Eigen::Index>(j)) = z(idx[j], k);
    }
    const Eigen::VectorXd rhs = W.col(k) - Ds * zs;
    const Eigen::VectorXd delta = Ds.completeOrthogonalDecomposition().solve(rhs);
    for (std::size_t j = 0; j < idx.size(); ++j)
      s(idx[j], k) = zs(static_cast<Eigen::Index>(j)) + delta(static_cast<Eigen::Index>(j));
    if (purify) basic_column(dictionary, s.col(k), W.col(k), 2 * static_cast<int>(r));
  }
  return s;
}

// Face of the coupled objective read off an iterate: the nonzero entries with
// their signs, and the support rows whose sum sits at the kink (sum zero).
struct CoupledFace {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> free;  // (row, column)
  Eigen::MatrixXd sign;
  std::vector<Eigen::Index> zero_sum;  // rows held at sum zero
  Eigen::VectorXd row_sign;            // sign of the row sum, 0 for zero_sum rows
};

CoupledFace face_of(const Eigen::MatrixXd& z) {
  CoupledFace f;
  f.sign = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  f.row_sign = Eigen::VectorXd::Zero(z.rows());
  const double scale = z.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return f;
  const double threshold = kSupportRelThreshold * scale;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    bool any = false;
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      if (std::abs(z(i, k)) > threshold) {
        f.free.emplace_back(i, k);
        f.sign(i, k) = z(i, k) > 0.0 ? 1.0 : -1.0;
        any = true;
      }
    }
    if (!any) continue;
    const double sum = z.row(i).sum();
    if (std::abs(sum) <= threshold) f.zero_sum.push_back(i);
    else f.row_sign(i) = sum > 0.0 ? 1.0 : -1.0;
  }
  return f;
}

// Minimum-norm correction of z on its face so that D s = W holds and the
// zero-sum rows keep a zero sum. At a vertex of the face this is exact.
Eigen::MatrixXd polish_face(const Eigen::MatrixXd& dictionary, const Eigen::MatrixXd& W,
                            const Eigen::MatrixXd& z, const CoupledFace& f) {
  const Eigen::Index r = dictionary.rows();
  const Eigen::Index k = W.cols();
  const auto nf = static_cast<Eigen::Index>(f.free.size());
  const auto nz = static_cast<Eigen::Index>(f.zero_sum.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  if (nf == 0) return s;
  std::vector<Eigen::Index> zero_pos(static_cast<std::size_t>(z.rows()), -1);
  for (Eigen::Index t = 0; t < nz; ++t) zero_pos[static_cast<std::size_t>(f.zero_sum[static_cast<std::size_t>(t)])] = t;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r * k + nz, nf);
  Eigen::VectorXd x0(nf);
  for (Eigen::Index v = 0; v < nf; ++v) {
    const auto [i, col] = f.free[static_cast<std::size_t>(v)];
    A.block(col * r, v, r, 1) = dictionary.col(i);
    if (zero_pos[static_cast<std::size_t>(i)] >= 0) A(r * k + zero_pos[static_cast<std::size_t>(i)], v) = 1.0;
    x0(v) = z(i, col);
  }
  Eigen::VectorXd b = Eigen::VectorXd::Zero(r * k + nz);
  for (Eigen::Index col = 0; col < k; ++col) b.segment(col * r, r) = W.col(col);
  const Eigen::VectorXd x = x0 + A.completeOrthogonalDecomposition().solve(b - A * x0);
  for (Eigen::Index v = 0; v < nf; ++v) {
    const auto [i, col] = f.free[static_cast<std::size_t>(v)];
    s(i, col) = x(v);
  }
  return s;
}

// Moves s along null directions of the face constraints without increasing
// the (linear on the face) objective until the face constraints have full
// column rank. Entries reaching zero leave the face; row sums reaching zero
// become zero-sum rows. Returns the face of the result.
CoupledFace purify_face(const Eigen::MatrixXd& dictionary, Eigen::MatrixXd& s,
                        CoupledFace f, double lambda) {
  const Eigen::Index r = dictionary.rows();
  const Eigen::Index k = s.cols();
  for (int step = 0; step < static_cast<int>(s.size()); ++step) {
    const auto nf = static_cast<Eigen::Index>(f.free.size());
    const auto nz = static_cast<Eigen::Index>(f.zero_sum.size());
    if (nf == 0) break;
    std::vector<Eigen::Index> zero_pos(static_cast<std::size_t>(s.rows()), -1);
    for (Eigen::Index t = 0; t < nz; ++t) zero_pos[static_cast<std::size_t>(f.zero_sum[static_cast<std::size_t>(t)])] = t;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r * k + nz, nf);
    Eigen::VectorXd c(nf);
    for (Eigen::Index v = 0; v < nf; ++v) {
      const auto [i, col] = f.free[static_cast<std::size_t>(v)];
      A.block(col * r, v, r, 1) = dictionary.col(i);
      if (zero_pos[static_cast<std::size_t>(i)] >= 0) A(r * k + zero_pos[static_cast<std::size_t>(i)], v) = 1.0;
      c(v) = f.sign(i, col) + lambda * f.row_sign(i);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    svd.setThreshold(1e-10);
    const Eigen::Index rank = svd.rank();
    if (rank >= nf) break;
    const Eigen::MatrixXd N = svd.matrixV().rightCols(nf - rank);
    Eigen::VectorXd d = -N * (N.transpose() * c);
    if (d.norm() <= 1e-12 * std::max(1.0, c.norm())) d = N.col(0);

    // Ratio test over entry signs and nonzero row-sum signs; flip a
    // cost-neutral direction if it is unblocked.
    auto blocking = [&](const Eigen::VectorXd& dir, double& t_best, Eigen::Index& entry, Eigen::Index& row) {
      t_best = std::numeric_limits<double>::infinity();
      entry = -1;
      row = -1;
      Eigen::VectorXd row_delta = Eigen::VectorXd::Zero(s.rows());
      for (Eigen::Index v = 0; v < nf; ++v) {
        const auto [i, col] = f.free[static_cast<std::size_t>(v)];
        row_delta(i) += dir(v);
        const double x = s(i, col);
        if (x * dir(v) < 0.0 && -x / dir(v) < t_best) {
          t_best = -x / dir(v);
          entry = v;
          row = -1;
        }
      }
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        if (f.row_sign(i) == 0.0) continue;
        const double sum = s.row(i).sum();
        if (sum * row_delta(i) < 0.0 && -sum / row_delta(i) < t_best) {
          t_best = -sum / row_delta(i);
          entry = -1;
          row = i;
        }
      }
    };
    double t = 0.0;
    Eigen::Index entry = -1;
    Eigen::Index row = -1;
    blocking(d, t, entry, row);
    if (!std::isfinite(t)) {
      if (c.dot(d) < 0.0) break;  // objective would be unbounded; face is wrong
      d = -d;
      blocking(d, t, entry, row);
      if (!std::isfinite(t)) break;
    }
    for (Eigen::Index v = 0; v < nf; ++v) {
      const auto [i, col] = f.free[static_cast<std::size_t>(v)];
      s(i, col) += t * d(v);
    }
    if (entry >= 0) {
      const auto [i, col] = f.free[static_cast<std::size_t>(entry)];
      s(i, col) = 0.0;
      f.sign(i, col) = 0.0;
      f.free.erase(f.free.begin() + entry);
      bool any = false;
      for (Eigen::Index j = 0; j < k; ++j) any = any || f.sign(i, j) != 0.0;
      if (!any) {
        f.row_sign(i) = 0.0;
        f.zero_sum.erase(std::remove(f.zero_sum.begin(), f.zero_sum.end(), i), f.zero_sum.end());
      }
    } else if (row >= 0) {
      f.row_sign(row) = 0.0;
      f.zero_sum.push_back(row);
    }
  }
  return f;
}

// Least-squares KKT multiplier for the face: d_i^T y_k = sign_ik + lambda * row_sign_i
// on free entries, with a free row multiplier in place of lambda * row_sign on
// zero-sum rows. The caller rescales it into the dual feasible set.
Eigen::MatrixXd face_dual(const Eigen::MatrixXd& dictionary, Eigen::Index k,
                          const CoupledFace& f, double lambda) {
  const Eigen::Index r = dictionary.rows();
  const auto nf = static_cast<Eigen::Index>(f.free.size());
  const auto nz = static_cast<Eigen::Index>(f.zero_sum.size());
  if (nf == 0) return Eigen::MatrixXd::Zero(r, k);
  std::vector<Eigen::Index> zero_pos(static_cast<std::size_t>(f.sign.rows()), -1);
  for (Eigen::Index t = 0; t < nz; ++t) zero_pos[static_cast<std::size_t>(f.zero_sum[static_cast<std::size_t>(t)])] = t;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nf, r * k + nz);
  Eigen::VectorXd g(nf);
  for (Eigen::Index v = 0; v < nf; ++v) {
    const auto [i, col] = f.free[static_cast<std::size_t>(v)];
    A.block(v, col * r, 1, r) = dictionary.col(i).transpose();
    if (zero_pos[static_cast<std::size_t>(i)] >= 0) A(v, r * k + zero_pos[static_cast<std::size_t>(i)]) = -1.0;
    g(v) = f.sign(i, col) + lambda * f.row_sign(i);
  }
  const Eigen::VectorXd y = A.completeOrthogonalDecomposition().solve(g);
  Eigen::MatrixXd Y(r, k);
  for (Eigen::Index col = 0; col < k; ++col) Y.col(col) = y.segment(col * r, r);
  return Y;
}

enum class ConstraintKind { equality, ball };

struct AdmmSetup {
  const SparseProblem& problem;
  ConstraintKind constraint;
  double eps;             // used for the ball constraint and the dual bound
  double lambda;          // coupling weight inside the prox
  double feasibility_tol;  // polished candidate must satisfy this
};

bool feasible(const AdmmSetup& setup, const Eigen::MatrixXd& s) {
  const Eigen::MatrixXd R = setup.problem.dictionary * s - setup.problem.targets;
  if (setup.constraint == ConstraintKind::equality)
    return R.cwiseAbs().maxCoeff() <= setup.feasibility_tol;
  return R.norm() <= setup.eps + setup.feasibility_tol;
}

void finalize(SparseSolution& sol, const SparseProblem& problem) {
  sol.support = support_of(sol.s);
  sol.objective_value = coupled_objective(sol.s, problem.lambda);
  sol.residual_frobenius = residual_frobenius(problem, sol.s);
}

// Scaled-form ADMM on  min h(z)  s.t.  x in C,  x = z, where C is the
// constraint set and h the (coupled) l1 objective:
//   x <- P_C(z - u);  z <- prox_{h/rho}(x + u);  u <- u + x - z.
// rho * u is a subgradient of h at z, which supplies the dual candidate for
// the certified stopping test.
SparseSolution run_admm(const AdmmSetup& setup, const AdmmOptions& opt) {
  const SparseProblem& problem = setup.problem;
  const Eigen::MatrixXd& D = problem.dictionary;
  const Eigen::MatrixXd& W = problem.targets;
  const ConstraintGeometry geometry(D);
  auto project = [&](const Eigen::MatrixXd& S) {
    return setup.constraint == ConstraintKind::equality ? geometry.project_equality(S, W)
                                                        : geometry.project_ball(S, W, setup.eps);
  };
  auto prox = [&](const Eigen::MatrixXd& V, double t) {
    Eigen::MatrixXd out(V.rows(), V.cols());
    if (setup.lambda == 0.0) {
      out = V.unaryExpr([t](double v) { return soft(v, t); });
    } else {
      for (Eigen::Index i = 0; i < V.rows(); ++i)
        out.row(i) = coupled_row_prox(V.row(i).transpose(), t, setup.lambda).transpose();
    }
    return out;
  };

  const Eigen::Index n = problem.dims();
  const Eigen::Index k = problem.columns();
  SparseSolution sol;
  sol.s = Eigen::MatrixXd::Zero(n, k);

  if (W.cwiseAbs().maxCoeff() == 0.0) {
    sol.converged = true;
    sol.stop_reason = "zero_target";
    finalize(sol, problem);
    return sol;
  }

  double rho = std::clamp(opt.rho_init, 1e-4, 1e4);
  Eigen::MatrixXd x = geometry.project_equality(Eigen::MatrixXd::Zero(n, k), W);
  Eigen::MatrixXd z = x;
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, k);
  const double sqrt_dim = std::sqrt(static_cast<double>(n * k));

  Eigen::MatrixXd best;  // latest feasible polished candidate
  double best_gap = std::numeric_limits<double>::infinity();
  bool stopped = false;
  int it = 0;

  for (; it < opt.max_iter && !stopped; ++it) {
    x = project(z - u);
    const Eigen::MatrixXd z_prev = z;
    const Eigen::MatrixXd u_prev = u;
    z = prox(x + u, 1.0 / rho);
    u += x - z;

    const double r_primal = (x - z).norm();
    const double r_dual = rho * (z - z_prev).norm();
    if (opt.record_trace)
      sol.merit_trace.push_back(rho * ((z - z_prev).squaredNorm() + (u - u_prev).squaredNorm()));

    const double eps_primal = sqrt_dim * opt.abs_tol + opt.rel_tol * std::max(x.norm(), z.norm());
    const double eps_dual = sqrt_dim * opt.abs_tol + opt.rel_tol * rho * u.norm();
    if (r_primal <= eps_primal && r_dual <= eps_dual) {
      sol.stop_reason = "residuals";
      sol.converged = true;
      stopped = true;
    }

    if (!stopped && opt.polish_every > 0 && (it + 1) % opt.polish_every == 0) {
      Eigen::MatrixXd candidate = polish(D, W, z, rho * u, setup.lambda == 0.0);
      if (feasible(setup, candidate)) {
        double primal = coupled_objective(candidate, setup.lambda);
        double lower = dual_value(D, W, geometry.dual_fit(rho * u), setup.lambda, setup.eps);
        if (setup.lambda == 0.0) {
          // KKT dual from the polished sign pattern; exact once the support is right.
          Eigen::MatrixXd G = candidate.unaryExpr([](double v) {
            return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
          });
          Eigen::MatrixXd Y(D.rows(), k);
          for (Eigen::Index col = 0; col < k; ++col) {
            std::vector<Eigen::Index> idx;
            for (Eigen::Index i = 0; i < n; ++i)
              if (G(i, col) != 0.0) idx.push_back(i);
            Eigen::MatrixXd Ds(D.rows(), static_cast<Eigen::Index>(idx.size()));
            Eigen::VectorXd g(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t j = 0; j < idx.size(); ++j) {
              Ds.col(static_cast<Eigen::Index>(j)) = D.col(idx[j]);
              g(static_cast<Eigen::Index>(j)) = G(idx[j], col);
            }
            Y.col(col) = idx.empty() ? Eigen::VectorXd::Zero(D.rows())
                                     : Eigen::VectorXd(Ds.transpose().completeOrthogonalDecomposition().solve(g));
          }
          lower = std::max(lower, dual_value(D, W, Y, 0.0, setup.eps));
        } else {
          CoupledFace face = face_of(z);
          Eigen::MatrixXd on_face = polish_face(D, W, z, face);
          face = purify_face(D, on_face, face, setup.lambda);
          on_face = polish_face(D, W, on_face, face);
          if (feasible(setup, on_face) && coupled_objective(on_face, setup.lambda) < primal) {
            primal = coupled_objective(on_face, setup.lambda);
            candidate = std::move(on_face);
          }
          lower = std::max(lower, dual_value(D, W, face_dual(D, k, face, setup.lambda), setup.lambda, setup.eps));
        }
        const double gap = primal - lower;
        best = std::move(candidate);
        best_gap = gap;
        if (gap <= opt.gap_rel_tol * std::max(1.0, std::abs(primal))) {
          sol.stop_reason = "duality_gap";
          sol.converged = true;
          stopped = true;
        }
      }
    }

    if (!stopped && opt.adaptive_rho && it < opt.adapt_until && (it + 1) % opt.adapt_every == 0) {
      if (r_primal > 10.0 * r_dual && rho < 1e4) {
        rho = std::min(rho * 2.0, 1e4);
        u *= 0.5;
      } else if (r_dual > 10.0 * r_primal && rho > 1e-4) {
        rho = std::max(rho / 2.0, 1e-4);
        u *= 2.0;
      }
    }
  }

  sol.iterations = it;
  sol.rho = rho;
  if (!stopped) sol.stop_reason = "max_iter";

  if (sol.stop_reason == "residuals") {
    Eigen::MatrixXd candidate = polish(D, W, z, rho * u, setup.lambda == 0.0);
    if (feasible(setup, candidate)) {
      const double lower = dual_value(D, W, geometry.dual_fit(rho * u), setup.lambda, setup.eps);
      best_gap = coupled_objective(candidate, setup.lambda) - lower;
      best = std::move(candidate);
    } else {
      best.resize(0, 0);
    }
  }
  if (best.size() > 0 && (sol.converged || feasible(setup, best))) {
    sol.s = best;
    sol.duality_gap = std::max(best_gap, 0.0);
  } else {
    // x lies in the constraint set by construction
    sol.s = x;
    sol.duality_gap = std::numeric_limits<double>::infinity();
    if (sol.converged && !feasible(setup, x)) sol.converged = false;
  }
  finalize(sol, problem);
  return sol;
}

}  // namespace

void check_problem(const SparseProblem& problem) {
  if (problem.dictionary.rows() < 1 || problem.dictionary.cols() < 1)
    throw DimensionError("sparse problem: empty dictionary");
  if (problem.targets.rows() != problem.dictionary.rows())
    throw DimensionError("sparse problem: targets have " + std::to_string(problem.targets.rows()) +
                         " rows, dictionary has " + std::to_string(problem.dictionary.rows()));
  if (problem.targets.cols() < 1) throw DimensionError("sparse problem: no target columns");
  if (problem.dictionary.rows() >= problem.dictionary.cols())
    throw DimensionError("sparse problem: dictionary must be underdetermined (r < n)");
  if (!(problem.lambda >= 0.0)) throw PreconditionError("sparse problem: lambda must be >= 0");
  if (!(problem.epsilon >= 0.0)) throw PreconditionError("sparse problem: epsilon must be >= 0");
}

std::vector<int> support_of(const Eigen::MatrixXd& s) {
  std::vector<int> support;
  if (s.size() == 0) return support;
  const double scale = s.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return support;
  const double threshold = kSupportRelThreshold * scale;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    if (s.row(i).cwiseAbs().maxCoeff() > threshold) support.push_back(static_cast<int>(i));
  return support;
}

double coupled_objective(const Eigen::MatrixXd& s, double lambda) {
  return s.cwiseAbs().sum() + lambda * s.rowwise().sum().cwiseAbs().sum();
}

double residual_frobenius(const SparseProblem& problem, const Eigen::MatrixXd& s) {
  return (problem.dictionary * s - problem.targets).norm();
}

// Prox of the row penalty  p(x) = ||x||_1 + lambda |1^T x|.
//
// Optimality gives x = soft(v - t lambda g, t) with g a subgradient of |.| at
// 1^T x. The row sum sigma(g) = sum_k soft(v_k - t lambda g, t) is
// non-increasing and piecewise linear in g, with breakpoints where
// v_k - t lambda g = +-t, i.e. g = (v_k -+ t) / (t lambda). So:
//   sigma(1) >= 0   ->  g = 1
//   sigma(-1) <= 0  ->  g = -1
//   otherwise g solves sigma(g) = 0 inside (-1, 1); sort the at most 2(c-1)
//   breakpoints, find the bracketing pair, and interpolate linearly (exact,
//   since sigma is affine between consecutive breakpoints).
Eigen::VectorXd coupled_row_prox(const Eigen::VectorXd& v, double t, double lambda) {
  auto shrink = [&](double g) {
    Eigen::VectorXd x(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) x(i) = soft(v(i) - t * lambda * g, t);
    return x;
  };
  if (lambda == 0.0 || t == 0.0) return shrink(0.0);
  auto sigma = [&](double g) { return shrink(g).sum(); };

  if (sigma(1.0) >= 0.0) return shrink(1.0);
  if (sigma(-1.0) <= 0.0) return shrink(-1.0);

  std::vector<double> points{-1.0, 1.0};
  const double scale = t * lambda;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    for (double bp : {(v(i) - t) / scale, (v(i) + t) / scale})
      if (bp > -1.0 && bp < 1.0) points.push_back(bp);
  }
  std::sort(points.begin(), points.end());
  // sigma(points.front()) > 0 > sigma(points.back()); find the sign change.
  std::size_t lo = 0, hi = points.size() - 1;
  double s_lo = sigma(points[lo]), s_hi = sigma(points[hi]);
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    const double s_mid = sigma(points[mid]);
    if (s_mid > 0.0) {
      lo = mid;
      s_lo = s_mid;
    } else if (s_mid < 0.0) {
      hi = mid;
      s_hi = s_mid;
    } else {
      return shrink(points[mid]);
    }
  }
  const double g = points[lo] + (points[hi] - points[lo]) * s_lo / (s_lo - s_hi);
  return shrink(g);
}

// The unit ball of the row dual norm is {a + lambda b 1 : ||a||_inf <= 1, |b| <= 1},
// so the dual norm is min_c max(max_k |y_k - c|, |c| / lambda). The inner
// function is convex piecewise linear in c; its minimum sits where an
// increasing piece (c - min y, c / lambda) meets a decreasing one
// (max y - c, -c / lambda), giving four candidates.
double coupled_row_dual_norm(const Eigen::VectorXd& y, double lambda) {
  if (y.size() == 0) return 0.0;
  if (lambda == 0.0) return y.cwiseAbs().maxCoeff();
  const double ymax = y.maxCoeff();
  const double ymin = y.minCoeff();
  auto value = [&](double c) {
    return std::max({ymax - c, c - ymin, std::abs(c) / lambda});
  };
  double best = value(0.0);
  for (double c : {0.5 * (ymax + ymin), lambda * ymax / (1.0 + lambda),
                   lambda * ymin / (1.0 + lambda)})
    best = std::min(best, value(c));
  return best;
}

SparseSolution solve_bp(const SparseProblem& problem, const AdmmOptions& options) {
  check_problem(problem);
  if (problem.columns() != 1)
    throw DimensionError("solve_bp: targets must have exactly one column");
  AdmmSetup setup{problem, ConstraintKind::equality, 0.0, 0.0,
                  bp_feasibility_bound(problem.targets)};
  SparseSolution sol = run_admm(setup, options);
  // solve_bp ignores lambda; report the plain l1 norm
  sol.objective_value = sol.s.cwiseAbs().sum();
  return sol;
}

SparseSolution solve_coupled(const SparseProblem& problem, const AdmmOptions& options) {
  check_problem(problem);
  const double eps = problem.epsilon > 0.0 ? problem.epsilon : 1e-10;
  const bool near_equality = eps <= 1e-8;

  if (options.allow_dispatch && near_equality &&
      (problem.lambda == 0.0 || problem.columns() == 1)) {
    // Decoupled: the objective separates into independent basis pursuits (for
    // one column it is (1 + lambda) ||s||_1, with the same minimizer).
    SparseSolution sol;
    sol.s = Eigen::MatrixXd::Zero(problem.dims(), problem.columns());
    sol.converged = true;
    sol.stop_reason = "decoupled";
    for (int k = 0; k < problem.columns(); ++k) {
      SparseProblem column = problem;
      column.targets = problem.targets.col(k);
      column.lambda = 0.0;
      SparseSolution part = solve_bp(column, options);
      sol.s.col(k) = part.s;
      sol.iterations = std::max(sol.iterations, part.iterations);
      sol.rho = part.rho;
      sol.duality_gap += (1.0 + problem.lambda) * part.duality_gap;
      if (!part.converged) {
        sol.converged = false;
        sol.stop_reason = part.stop_reason;
      }
      if (options.record_trace)
        sol.merit_trace.insert(sol.merit_trace.end(), part.merit_trace.begin(), part.merit_trace.end());
    }
    finalize(sol, problem);
    return sol;
  }

  AdmmSetup setup{problem, ConstraintKind::ball, eps, problem.lambda, 1e-8};
  return run_admm(setup, options);
}

SparseSolution solve_omp(const SparseProblem& problem, int k) {
  check_problem(problem);
  const int r = problem.rank();
  const int cols = problem.columns();
  if (k < 0 || k > r * cols)
    throw PreconditionError("solve_omp: k must lie in [0, r(c-1)] = [0, " +
                            std::to_string(r * cols) + "]");
  const Eigen::MatrixXd& D = problem.dictionary;
  const Eigen::MatrixXd& W = problem.targets;
  const Eigen::Index n = D.cols();
  const double tol = problem.epsilon;

  SparseSolution sol;
  sol.s = Eigen::MatrixXd::Zero(n, cols);
  std::vector<int> selected;
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  Eigen::MatrixXd residual = W;
  Eigen::MatrixXd coef;

  while (static_cast<int>(selected.size()) < k && residual.norm() > tol) {
    // S-OMP criterion: summed absolute correlation across residual columns.
    const Eigen::MatrixXd corr = D.transpose() * residual;  // n x cols
    int pick = -1;
    double best = -1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double score = corr.row(j).cwiseAbs().sum();
      if (score > best) {  // strict: lowest index wins ties
        best = score;
        pick = static_cast<int>(j);
      }
    }
    if (pick < 0) break;
    selected.push_back(pick);
    used[static_cast<std::size_t>(pick)] = true;

    Eigen::MatrixXd Ds(D.rows(), static_cast<Eigen::Index>(selected.size()));
    for (std::size_t j = 0; j < selected.size(); ++j)
      Ds.col(static_cast<Eigen::Index>(j)) = D.col(selected[j]);
    coef = Ds.completeOrthogonalDecomposition().solve(W);
    residual = W - Ds * coef;
    ++sol.iterations;
  }

  for (std::size_t j = 0; j < selected.size(); ++j)
    sol.s.row(selected[j]) = coef.row(static_cast<Eigen::Index>(j));
  sol.converged = true;
  sol.stop_reason = static_cast<int>(selected.size()) >= k ? "support_size" : "tolerance";
  sol.objective_value = coupled_objective(sol.s, problem.lambda);
  sol.residual_frobenius = residual_frobenius(problem, sol.s);
  // Greedy selection keeps every picked row even if its refit coefficient is tiny.
  sol.support.assign(selected.begin(), selected.end());
  std::sort(sol.support.begin(), sol.support.end());
  return sol;
}

SparseSolution solve(const SparseProblem& problem, const AdmmOptions& options, int greedy_k) {
  if (problem.solver == SolverKind::greedy) {
    const int k = greedy_k > 0 ? greedy_k : problem.rank() * problem.columns();
    return solve_omp(problem, std::min(k, problem.rank() * problem.columns()));
  }
  if (problem.columns() == 1) {
    SparseSolution sol = solve_bp(problem, options);
    sol.objective_value = coupled_objective(sol.s, problem.lambda);
    return sol;
  }
  return solve_coupled(problem, options);
}

Certificate certificate_check(const SparseSolution& solution, const SparseProblem& problem) {
  check_problem(problem);
  if (problem.columns() != 1 || solution.s.cols() != 1 || solution.s.rows() != problem.dims())
    throw DimensionError("certificate_check: expects a single-column solution of matching size");
  const Eigen::MatrixXd& D = problem.dictionary;
  const Eigen::VectorXd s = solution.s.col(0);
  const Eigen::VectorXd w = problem.targets.col(0);

  Certificate cert;
  const double primal = (D * s - w).cwiseAbs().maxCoeff();
  const double feas_tol = bp_feasibility_bound(problem.targets);

  const std::vector<int> support = support_of(solution.s);
  if (support.empty()) {
    cert.dual = Eigen::VectorXd::Zero(D.rows());
    cert.max_violation = primal;
    cert.pass = primal <= feas_tol;
    return cert;
  }
  Eigen::MatrixXd DsT(static_cast<Eigen::Index>(support.size()), D.rows());
  Eigen::VectorXd signs(static_cast<Eigen::Index>(support.size()));
  for (std::size_t j = 0; j < support.size(); ++j) {
    DsT.row(static_cast<Eigen::Index>(j)) = D.col(support[j]).transpose();
    signs(static_cast<Eigen::Index>(j)) = s(support[j]) > 0.0 ? 1.0 : -1.0;
  }
  cert.dual = DsT.completeOrthogonalDecomposition().solve(signs);
  const Eigen::VectorXd correlation = D.transpose() * cert.dual;

  double sign_violation = 0.0;
  std::vector<bool> on_support(static_cast<std::size_t>(D.cols()), false);
  for (std::size_t j = 0; j < support.size(); ++j) {
    on_support[static_cast<std::size_t>(support[j])] = true;
    sign_violation = std::max(sign_violation,
                              std::abs(correlation(support[j]) - signs(static_cast<Eigen::Index>(j))));
  }
  double off_violation = 0.0;
  for (Eigen::Index i = 0; i < D.cols(); ++i)
    if (!on_support[static_cast<std::size_t>(i)])
      off_violation = std::max(off_violation, std::abs(correlation(i)) - 1.0);

  cert.max_violation = std::max({sign_violation, off_violation, primal});
  cert.pass = sign_violation <= 1e-6 && off_violation <= 1e-6 && primal <= feas_tol;
  return cert;
}

nlohmann::json diagnostics_json(const SparseSolution& solution, bool include_trace) {
  nlohmann::json j;
  j["iterations"] = solution.iterations;
  j["converged"] = solution.converged;
  j["stop_reason"] = solution.stop_reason;
  j["objective_value"] = solution.objective_value;
  j["residual_frobenius"] = solution.residual_frobenius;
  j["duality_gap"] = std::isfinite(solution.duality_gap) ? nlohmann::json(solution.duality_gap)
                                                         : nlohmann::json(nullptr);
  j["rho"] = solution.rho;
  j["support_size"] = solution.support.size();
  j["support"] = solution.support;
  if (include_trace) j["merit_trace"] = solution.merit_trace;
  return j;
}

}  // namespace sparsesense

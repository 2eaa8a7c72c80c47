#pragma once

#include <Eigen/Dense>
#include <json.hpp>
#include <string>
#include <vector>

namespace sparsesense {

enum class SolverKind { convex, greedy };

/// l1 sensor-selection problem: find sparse s (n x (c-1)) with dictionary * s ~= targets.
struct SparseProblem {
  Eigen::MatrixXd dictionary;  // r x n, i.e. Psi_r^T
  Eigen::MatrixXd targets;     // r x (c-1), i.e. the discriminant directions
  double lambda = 0.0;         // coupling weight on row sums
  double epsilon = 1e-10;      // Frobenius feasibility radius for the coupled problem
  SolverKind solver = SolverKind::convex;

  int rank() const { return static_cast<int>(dictionary.rows()); }
  int dims() const { return static_cast<int>(dictionary.cols()); }
  int columns() const { return static_cast<int>(targets.cols()); }
};

void check_problem(const SparseProblem& problem);

struct SparseSolution {
  Eigen::MatrixXd s;              // n x (c-1)
  std::vector<int> support;       // strictly increasing row indices
  double objective_value = 0.0;   // ||s||_1 + lambda ||s 1||_1
  int iterations = 0;
  bool converged = false;
  double residual_frobenius = 0.0;
  double duality_gap = 0.0;       // upper bound on suboptimality when converged by certificate
  double rho = 0.0;               // final penalty parameter (convex solvers)
  std::string stop_reason;
  std::vector<double> merit_trace;  // per-iteration ADMM fixed-point residual, when requested
};

struct AdmmOptions {
  int max_iter = 50000;
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  double rho_init = 1.0;
  bool adaptive_rho = true;
  int adapt_every = 10;
  // rho stays fixed from this iteration on, which restores the fixed-penalty
  // convergence guarantee.
  int adapt_until = 2000;
  // Support polishing and the duality-gap stopping test run at this interval;
  // 0 disables them so only the residual test can stop the iteration.
  int polish_every = 25;
  double gap_rel_tol = 1e-9;
  bool record_trace = false;
  // Lets solve_coupled hand decoupled (lambda = 0) or single-column problems to solve_bp.
  bool allow_dispatch = true;
};

/// min ||s||_1 subject to dictionary * s = targets (single column).
SparseSolution solve_bp(const SparseProblem& problem, const AdmmOptions& options = {});

/// min ||S||_1 + lambda ||S 1||_1 subject to ||dictionary * S - targets||_F <= epsilon.
SparseSolution solve_coupled(const SparseProblem& problem, const AdmmOptions& options = {});

/// Simultaneous orthogonal matching pursuit with at most k selected rows.
SparseSolution solve_omp(const SparseProblem& problem, int k);

/// Dispatches on problem.solver and the column count. greedy_k <= 0 picks r(c-1).
SparseSolution solve(const SparseProblem& problem, const AdmmOptions& options = {},
                     int greedy_k = 0);

struct Certificate {
  bool pass = false;
  double max_violation = 0.0;
  Eigen::VectorXd dual;  // y with (dictionary^T y)_i = sign(s_i) on the support
};

/// Basis-pursuit optimality check for a single-column solution: primal
/// feasibility, sign agreement of dictionary^T y on the support within 1e-6,
/// and |dictionary^T y| <= 1 + 1e-6 off the support, with y fit by least
/// squares on the support.
Certificate certificate_check(const SparseSolution& solution, const SparseProblem& problem);

// ---- building blocks, exposed for testing ----

/// Rows whose largest |entry| exceeds 1e-6 * max|s|.
std::vector<int> support_of(const Eigen::MatrixXd& s);
double coupled_objective(const Eigen::MatrixXd& s, double lambda);
double residual_frobenius(const SparseProblem& problem, const Eigen::MatrixXd& s);

/// argmin_x  t * (||x||_1 + lambda |sum(x)|) + 0.5 ||x - v||^2.
Eigen::VectorXd coupled_row_prox(const Eigen::VectorXd& v, double t, double lambda);

/// Dual norm of x -> ||x||_1 + lambda |sum(x)|.
double coupled_row_dual_norm(const Eigen::VectorXd& y, double lambda);

nlohmann::json diagnostics_json(const SparseSolution& solution, bool include_trace = false);

}  // namespace sparsesense

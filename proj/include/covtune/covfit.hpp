#pragma once

#include <Eigen/Dense>

#include "covtune/estimators.hpp"
#include "covtune/linalg.hpp"
#include "covtune/solvers.hpp"

namespace covtune {

/// Structure family a fitted weight matrix is allowed to range over.
enum class CovStructure {
  ScaledIdentity,  ///< kappa * I, kappa >= 0
  Diagonal,        ///< nonnegative diagonal
  Unstructured,    ///< any PSD matrix
};

const char* to_string(CovStructure s);

/// Covariance-fitting criterion ||y y^T - R||^2 evaluated in the R-pseudo
/// inverse norm, R = X C X^T + V. Requires y in range(R) and y != 0.
double spice_criterion(const WeightPair& w, const Dataset& data,
                       double feas_tol = kDefaultRangeTol);

/// J(theta; C, V) = ||y - X theta||^2_{V+} + ||theta||^2_{C+} + tr{R}/||y||^2.
/// Throws InfeasibleError when theta violates the range constraints.
double cost_J(const Eigen::VectorXd& theta, const WeightPair& w, const Dataset& data,
              double feas_tol = kDefaultRangeTol);

/// f(x, Q; W) = ||x||^2_{Q+} + tr{W Q}/y_norm^2 for x in range(Q);
/// +infinity otherwise.
double f_value(const Eigen::VectorXd& x, const PsdMatrix& q, const Eigen::MatrixXd& w,
               double y_norm, double range_tol = kDefaultRangeTol);

/// Closed-form infimum of f over the structure family (the h function):
///   scaled identity: (2/||y||) ||x||_2 sqrt(tr W)
///   diagonal:        (2/||y||) sum_i sqrt(w_ii) |x_i|
///   unstructured:    (2/||y||) ||x||_W
double h_value(const Eigen::VectorXd& x, const Eigen::MatrixXd& w, CovStructure s, double y_norm);

/// The in-family weight attaining h_value. Throws NotAttainedError when the
/// infimum is approached only by unbounded weights (x != 0 with W x = 0 in
/// the unstructured family, and the analogous degenerate diagonal/scaled
/// cases where the formula would divide by zero).
PsdMatrix attaining_weight(const Eigen::VectorXd& x, const Eigen::MatrixXd& w, CovStructure s,
                           double y_norm, double rank_tol = kDefaultRankTol);

/// The regularized criterion (fit term, penalty, tuned lambda) equivalent to
/// covariance fitting over the given structure pair. Rejects an unstructured
/// noise family, which would force a zero estimate.
Criterion tuned_criterion(CovStructure s_c, CovStructure s_v, const Dataset& data);

/// Tuned regularization parameter for the prior structure:
/// sqrt(tr{T}/n) for scaled identity, 1/sqrt(n) for diagonal, where
/// T = X^T X / n. Throws for the unstructured family (seminorm penalty, no
/// single scalar).
double tuned_lambda(CovStructure s_c, const Eigen::MatrixXd& x);

/// Estimated inverse signal-to-noise ratio
/// q = min(1, ||y||_{I - X X+} / (sqrt(n-1) ||y||_{X X+})), with q = 1 when
/// the projection of y onto range(X) vanishes.
double shrinkage_q(const Dataset& data);

/// G(theta) = h(y - X theta, I; s_v) + h(theta, X^T X; s_c), the criterion
/// the covariance-fitting problem reduces to after minimizing over weights.
double g_value(const Eigen::VectorXd& theta, CovStructure s_c, CovStructure s_v,
               const Dataset& data);

/// Full tuned pipeline: build the tuned criterion, minimize it, recover the
/// attaining weight pair, and verify the fitting identities (violations are
/// reported as warnings on the result). lambda_override replaces the tuned
/// parameter before solving; the recovered weights then no longer satisfy the
/// fitting identities exactly, which shows up in the diagnostics.
EstimateReport tuned_estimate(CovStructure s_c, CovStructure s_v, const Dataset& data,
                              const SolverOptions& opts = {},
                              std::optional<double> lambda_override = std::nullopt);

}  // namespace covtune

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "covtune/linalg.hpp"

namespace covtune {

/// Regression data: response y (n) and regressors X (n x d). The tuned
/// methods are allowed to look at nothing else.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Dataset() = default;
  Dataset(Eigen::MatrixXd X_in, Eigen::VectorXd y_in);

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
};

/// PSD weight pair: d x d prior weight C and n x n noise weight V. Only the
/// ray through (C, V) matters; scaling both by the same positive constant
/// leaves the estimate unchanged.
struct WeightPair {
  PsdMatrix C;
  PsdMatrix V;
};

/// Result of an estimation call, with feasibility and (for the tuned
/// pipeline) identity diagnostics.
struct EstimateReport {
  Eigen::VectorXd theta;
  /// ||R R^dagger y - y|| / ||y|| for the R used by the feasibility check.
  double residual_range_gap = 0.0;
  /// Value of the criterion that was minimized.
  double objective = 0.0;
  /// Weights behind the estimate; empty for BLUE (its prior weight is a limit).
  std::optional<WeightPair> weights_used;
  /// Non-fatal diagnostics (rank-deficient X in blue, identity-check misses).
  std::vector<std::string> warnings;

  // Set by the covariance-fitting pipeline only.
  int solver_iterations = 0;
  std::optional<double> fit_identity_residual;  ///< relative Theorem-5 identity gap
  std::optional<double> roundtrip_gap;          ///< relative gap to the re-estimated theta
};

/// Weighted range-constrained estimator theta = C X^T (X C X^T + V)^dagger y.
/// Throws InfeasibleError when y is outside the range of X C X^T + V.
EstimateReport estimate_weighted(const WeightPair& w, const Dataset& data,
                                 double feas_tol = kDefaultRangeTol);

/// Best linear unbiased estimator for noise weight V (optimal when X has full
/// column rank; otherwise the closed form is still returned with a warning).
EstimateReport blue(const PsdMatrix& v, const Dataset& data, double feas_tol = kDefaultRangeTol);

/// MSE-optimal weights (alpha * theta theta^T, alpha * V) for a known
/// parameter vector and noise covariance.
WeightPair oracle_mse_weights(const Eigen::VectorXd& theta_true, const PsdMatrix& v_true,
                              double alpha);

/// Linear minimum mean-square-error estimator: the weighted estimator with
/// the prior and noise covariances as weights.
EstimateReport lmmse(const PsdMatrix& c_prior, const PsdMatrix& v_noise, const Dataset& data,
                     double feas_tol = kDefaultRangeTol);

/// Marginal MSE of the linear estimator theta = K y:
/// tr{(I - K X) C (I - K X)^T + K V K^T}.
double marginal_mse_of_linear(const Eigen::MatrixXd& k, const PsdMatrix& c, const PsdMatrix& v,
                              const Eigen::MatrixXd& x);

/// Diagnostic for when the range constraint in the noise-weighted problem is
/// redundant: true iff V^dagger V X = X, i.e. every regressor column lies in
/// the range of V.
bool regressors_in_noise_range(const PsdMatrix& v, const Eigen::MatrixXd& x,
                               double tol = kDefaultRangeTol);

}  // namespace covtune

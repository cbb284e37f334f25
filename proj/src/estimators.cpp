#include "covtune/estimators.hpp"

#include <cmath>

#include "covtune/errors.hpp"

namespace covtune {

Dataset::Dataset(Eigen::MatrixXd X_in, Eigen::VectorXd y_in) : X(std::move(X_in)), y(std::move(y_in)) {
  if (X.rows() < 1 || X.cols() < 1) {
    throw InvalidInputError("Dataset: X must have at least one row and one column");
  }
  if (y.size() != X.rows()) {
    throw InvalidInputError("Dataset: y length must match the number of rows of X");
  }
  if (!X.allFinite() || !y.allFinite()) {
    throw InvalidInputError("Dataset: entries must be finite");
  }
}

namespace {

double range_gap(const PsdMatrix& r, const Eigen::VectorXd& y) {
  const double ynorm = y.norm();
  if (ynorm == 0.0) {
    return 0.0;
  }
  return (r.project_onto_range(y) - y).norm() / ynorm;
}

}  // namespace

EstimateReport estimate_weighted(const WeightPair& w, const Dataset& data, double feas_tol) {
  const Eigen::MatrixXd& X = data.X;
  const Eigen::VectorXd& y = data.y;
  if (w.C.dim() != data.d() || w.V.dim() != data.n()) {
    throw InvalidInputError("estimate_weighted: weight dimensions do not match the data");
  }

  const double rank_tol = std::max(w.C.rank_tol(), w.V.rank_tol());
  const PsdMatrix r(Eigen::MatrixXd(X * w.C.entries() * X.transpose() + w.V.entries()), rank_tol);

  EstimateReport rep;
  rep.residual_range_gap = range_gap(r, y);
  if (rep.residual_range_gap > feas_tol) {
    throw InfeasibleError("estimate_weighted: y is not in the range of X C X^T + V");
  }

  const Eigen::VectorXd ry = r.pinv_apply(y);
  rep.theta = w.C.entries() * (X.transpose() * ry);
  const Eigen::VectorXd resid = y - X * rep.theta;
  rep.objective = w.V.pinv_quadratic_form(resid) + w.C.pinv_quadratic_form(rep.theta);
  rep.weights_used = w;

  if (!in_range(rep.theta, w.C, feas_tol)) {
    rep.warnings.push_back("estimate lies outside range(C) beyond tolerance");
  }
  if (!in_range(resid, w.V, feas_tol)) {
    rep.warnings.push_back("residual lies outside range(V) beyond tolerance");
  }
  return rep;
}

EstimateReport blue(const PsdMatrix& v, const Dataset& data, double feas_tol) {
  const Eigen::MatrixXd& X = data.X;
  const Eigen::VectorXd& y = data.y;
  const Eigen::Index n = data.n();
  if (v.dim() != n) {
    throw InvalidInputError("blue: V dimension does not match the data");
  }

  const PsdMatrix r(Eigen::MatrixXd(X * X.transpose() + v.entries()), v.rank_tol());
  EstimateReport rep;
  rep.residual_range_gap = range_gap(r, y);
  if (rep.residual_range_gap > feas_tol) {
    throw InfeasibleError("blue: y is not in the range of X X^T + V");
  }

  const Eigen::MatrixXd x_pinv = matrix_pseudo_inverse(X, v.rank_tol());
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - X * x_pinv;
  const PsdMatrix mvm(Eigen::MatrixXd(m * v.entries() * m.transpose()), v.rank_tol());
  const Eigen::VectorXd my = m * y;
  rep.theta = x_pinv * (y - v.entries() * mvm.pinv_apply(my));

  const Eigen::VectorXd resid = y - X * rep.theta;
  rep.objective = v.pinv_quadratic_form(resid);

  const PsdMatrix gram(Eigen::MatrixXd(X.transpose() * X), v.rank_tol());
  if (gram.rank() < data.d()) {
    rep.warnings.push_back("X is column-rank-deficient: the closed form is reported but the "
                           "unbiased-optimality interpretation does not apply");
  }
  return rep;
}

WeightPair oracle_mse_weights(const Eigen::VectorXd& theta_true, const PsdMatrix& v_true,
                              double alpha) {
  if (!(alpha > 0.0)) {
    throw InvalidInputError("oracle_mse_weights: alpha must be positive");
  }
  if (!theta_true.allFinite()) {
    throw InvalidInputError("oracle_mse_weights: theta must be finite");
  }
  WeightPair w;
  w.C = PsdMatrix(Eigen::MatrixXd(alpha * theta_true * theta_true.transpose()), v_true.rank_tol());
  w.V = PsdMatrix(Eigen::MatrixXd(alpha * v_true.entries()), v_true.rank_tol());
  return w;
}

EstimateReport lmmse(const PsdMatrix& c_prior, const PsdMatrix& v_noise, const Dataset& data,
                     double feas_tol) {
  return estimate_weighted(WeightPair{c_prior, v_noise}, data, feas_tol);
}

double marginal_mse_of_linear(const Eigen::MatrixXd& k, const PsdMatrix& c, const PsdMatrix& v,
                              const Eigen::MatrixXd& x) {
  const Eigen::Index d = c.dim();
  if (k.rows() != d || k.cols() != v.dim() || x.rows() != v.dim() || x.cols() != d) {
    throw InvalidInputError("marginal_mse_of_linear: dimension mismatch");
  }
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) - k * x;
  const double mse = (a * c.entries() * a.transpose()).trace() +
                     (k * v.entries() * k.transpose()).trace();
  return std::max(0.0, mse);
}

bool regressors_in_noise_range(const PsdMatrix& v, const Eigen::MatrixXd& x, double tol) {
  if (v.dim() != x.rows()) {
    throw InvalidInputError("regressors_in_noise_range: dimension mismatch");
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (!in_range(x.col(j), v, tol)) {
      return false;
    }
  }
  return true;
}

}  // namespace covtune

#include "covtune/covfit.hpp"

#include <cmath>
#include <limits>

#include "covtune/errors.hpp"

namespace covtune {

const char* to_string(CovStructure s) {
  switch (s) {
    case CovStructure::ScaledIdentity:
      return "scaled-identity";
    case CovStructure::Diagonal:
      return "diagonal";
    case CovStructure::Unstructured:
      return "unstructured";
  }
  return "unknown";
}

double spice_criterion(const WeightPair& w, const Dataset& data, double feas_tol) {
  const double y_sq = data.y.squaredNorm();
  if (y_sq == 0.0) {
    throw InvalidInputError("spice_criterion: y must be nonzero");
  }
  if (w.C.dim() != data.d() || w.V.dim() != data.n()) {
    throw InvalidInputError("spice_criterion: weight dimensions do not match the data");
  }
  const double rank_tol = std::max(w.C.rank_tol(), w.V.rank_tol());
  const PsdMatrix r(
      Eigen::MatrixXd(data.X * w.C.entries() * data.X.transpose() + w.V.entries()), rank_tol);
  if (!in_range(data.y, r, feas_tol)) {
    throw InfeasibleError("spice_criterion: y is not in the range of X C X^T + V");
  }
  const double value = y_sq * r.pinv_quadratic_form(data.y) + r.trace() - 2.0 * y_sq;
  return std::max(0.0, value);
}

double cost_J(const Eigen::VectorXd& theta, const WeightPair& w, const Dataset& data,
              double feas_tol) {
  const double y_sq = data.y.squaredNorm();
  if (y_sq == 0.0) {
    throw InvalidInputError("cost_J: y must be nonzero");
  }
  if (theta.size() != data.d() || w.C.dim() != data.d() || w.V.dim() != data.n()) {
    throw InvalidInputError("cost_J: dimension mismatch");
  }
  const Eigen::VectorXd resid = data.y - data.X * theta;
  if (!in_range(theta, w.C, feas_tol) || !in_range(resid, w.V, feas_tol)) {
    throw InfeasibleError("cost_J: theta violates the range constraints of (C, V)");
  }
  const double trace_r =
      (w.C.entries() * (data.X.transpose() * data.X)).trace() + w.V.trace();
  return w.V.pinv_quadratic_form(resid) + w.C.pinv_quadratic_form(theta) + trace_r / y_sq;
}

double f_value(const Eigen::VectorXd& x, const PsdMatrix& q, const Eigen::MatrixXd& w,
               double y_norm, double range_tol) {
  if (!(y_norm > 0.0)) {
    throw InvalidInputError("f_value: y_norm must be positive");
  }
  if (x.size() != q.dim() || w.rows() != q.dim() || w.cols() != q.dim()) {
    throw InvalidInputError("f_value: dimension mismatch");
  }
  if (!in_range(x, q, range_tol)) {
    return std::numeric_limits<double>::infinity();
  }
  return q.pinv_quadratic_form(x) + (w * q.entries()).trace() / (y_norm * y_norm);
}

double h_value(const Eigen::VectorXd& x, const Eigen::MatrixXd& w, CovStructure s, double y_norm) {
  if (!(y_norm > 0.0)) {
    throw InvalidInputError("h_value: y_norm must be positive");
  }
  if (w.rows() != x.size() || w.cols() != x.size()) {
    throw InvalidInputError("h_value: dimension mismatch");
  }
  const double scale = 2.0 / y_norm;
  switch (s) {
    case CovStructure::ScaledIdentity:
      return scale * x.norm() * std::sqrt(std::max(0.0, w.trace()));
    case CovStructure::Diagonal: {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        acc += std::sqrt(std::max(0.0, w(i, i))) * std::abs(x(i));
      }
      return scale * acc;
    }
    case CovStructure::Unstructured:
      return scale * weighted_norm(x, w);
  }
  throw InvalidInputError("h_value: unknown structure");
}

PsdMatrix attaining_weight(const Eigen::VectorXd& x, const Eigen::MatrixXd& w, CovStructure s,
                           double y_norm, double rank_tol) {
  if (!(y_norm > 0.0)) {
    throw InvalidInputError("attaining_weight: y_norm must be positive");
  }
  const Eigen::Index m = x.size();
  if (w.rows() != m || w.cols() != m) {
    throw InvalidInputError("attaining_weight: dimension mismatch");
  }
  const double x_norm = x.norm();
  if (x_norm == 0.0) {
    return PsdMatrix::Zero(m, rank_tol);
  }
  switch (s) {
    case CovStructure::ScaledIdentity: {
      const double trace_w = w.trace();
      if (trace_w <= 0.0) {
        throw NotAttainedError("attaining_weight: tr{W} = 0 with x != 0, infimum not attained");
      }
      const double kappa = y_norm * x_norm / std::sqrt(trace_w);
      return PsdMatrix(Eigen::MatrixXd(kappa * Eigen::MatrixXd::Identity(m, m)), rank_tol);
    }
    case CovStructure::Diagonal: {
      Eigen::VectorXd diag(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        if (w(i, i) <= 0.0) {
          if (x(i) != 0.0) {
            throw NotAttainedError(
                "attaining_weight: zero diagonal weight with x_i != 0, infimum not attained");
          }
          diag(i) = 0.0;
        } else {
          diag(i) = y_norm * std::abs(x(i)) / std::sqrt(w(i, i));
        }
      }
      return PsdMatrix::FromDiagonal(diag, rank_tol);
    }
    case CovStructure::Unstructured: {
      const double xw = weighted_sq_norm(x, w);
      if (xw == 0.0) {
        throw NotAttainedError("attaining_weight: W x = 0 with x != 0, infimum not attained");
      }
      return PsdMatrix(Eigen::MatrixXd((y_norm / std::sqrt(xw)) * x * x.transpose()), rank_tol);
    }
  }
  throw InvalidInputError("attaining_weight: unknown structure");
}

double tuned_lambda(CovStructure s_c, const Eigen::MatrixXd& x) {
  const double n = static_cast<double>(x.rows());
  switch (s_c) {
    case CovStructure::ScaledIdentity:
      // sqrt(tr{T}/n) with T = X^T X / n.
      return std::sqrt(x.squaredNorm()) / n;
    case CovStructure::Diagonal:
      return 1.0 / std::sqrt(n);
    case CovStructure::Unstructured:
      throw InvalidInputError(
          "tuned_lambda: the unstructured prior family has no single scalar parameter; its "
          "penalty is the seminorm (1/sqrt(n)) ||theta||_T");
  }
  throw InvalidInputError("tuned_lambda: unknown structure");
}

Criterion tuned_criterion(CovStructure s_c, CovStructure s_v, const Dataset& data) {
  if (s_v == CovStructure::Unstructured) {
    throw InvalidInputError(
        "tuned_criterion: with an unstructured noise family the fitted covariance explains the "
        "output completely as noise (V* = y y^T, C* = 0), forcing a zero estimate");
  }
  Criterion c;
  c.fit = s_v == CovStructure::ScaledIdentity ? FitTerm::SqrtMspe : FitTerm::Mad;
  const double n = static_cast<double>(data.n());
  switch (s_c) {
    case CovStructure::ScaledIdentity:
      c.penalty = PenaltyKind::L2;
      c.lambda = tuned_lambda(s_c, data.X);
      break;
    case CovStructure::Diagonal: {
      c.penalty = PenaltyKind::WeightedL1;
      c.lambda = 1.0 / std::sqrt(n);
      c.l1_weights = (data.X.colwise().squaredNorm() / n).cwiseSqrt().transpose();
      break;
    }
    case CovStructure::Unstructured: {
      c.penalty = PenaltyKind::WeightedL2Seminorm;
      c.lambda = 1.0 / std::sqrt(n);
      c.seminorm_weight = PsdMatrix(Eigen::MatrixXd(data.X.transpose() * data.X / n));
      break;
    }
  }
  return c;
}

double shrinkage_q(const Dataset& data) {
  if (data.n() < 2) {
    throw InvalidInputError("shrinkage_q: at least two samples are required");
  }
  if (data.y.norm() == 0.0) {
    throw InvalidInputError("shrinkage_q: y must be nonzero");
  }
  const Eigen::MatrixXd x_pinv = matrix_pseudo_inverse(data.X);
  const Eigen::VectorXd proj = data.X * (x_pinv * data.y);
  const double in_norm = proj.norm();
  if (in_norm == 0.0) {
    return 1.0;
  }
  const double out_norm = (data.y - proj).norm();
  const double q = out_norm / (std::sqrt(static_cast<double>(data.n() - 1)) * in_norm);
  return std::min(1.0, q);
}

double g_value(const Eigen::VectorXd& theta, CovStructure s_c, CovStructure s_v,
               const Dataset& data) {
  const double y_norm = data.y.norm();
  if (y_norm == 0.0) {
    throw InvalidInputError("g_value: y must be nonzero");
  }
  if (theta.size() != data.d()) {
    throw InvalidInputError("g_value: theta dimension mismatch");
  }
  const Eigen::VectorXd resid = data.y - data.X * theta;
  const Eigen::MatrixXd eye_n = Eigen::MatrixXd::Identity(data.n(), data.n());
  const Eigen::MatrixXd gram = data.X.transpose() * data.X;
  return h_value(resid, eye_n, s_v, y_norm) + h_value(theta, gram, s_c, y_norm);
}

EstimateReport tuned_estimate(CovStructure s_c, CovStructure s_v, const Dataset& data,
                              const SolverOptions& opts, std::optional<double> lambda_override) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  const double y_norm = data.y.norm();

  if (s_v == CovStructure::Unstructured) {
    throw InvalidInputError(
        "tuned_estimate: the unstructured noise family is rejected; it would force a zero "
        "estimate");
  }

  EstimateReport rep;
  if (y_norm == 0.0) {
    rep.theta = Eigen::VectorXd::Zero(d);
    rep.weights_used = WeightPair{PsdMatrix::Zero(d), PsdMatrix::Zero(n)};
    rep.objective = 0.0;
    return rep;
  }

  Criterion crit = tuned_criterion(s_c, s_v, data);
  if (lambda_override.has_value()) {
    if (!(*lambda_override >= 0.0)) {
      throw InvalidInputError("tuned_estimate: lambda override must be nonnegative");
    }
    crit.lambda = *lambda_override;
  }

  Eigen::VectorXd theta;
  if (s_c == CovStructure::Unstructured && s_v == CovStructure::ScaledIdentity &&
      !lambda_override.has_value()) {
    // Shrunken least squares (1 - q) X^+ y; equivalent to minimizing the
    // seminorm criterion but exact and closed form.
    const double q = shrinkage_q(data);
    theta = (1.0 - q) * (matrix_pseudo_inverse(data.X) * data.y);
  } else {
    const SolveResult sol = solve(crit, data, opts);
    if (!sol.converged) {
      throw SolverError("tuned_estimate: criterion solver did not converge within max_iterations");
    }
    theta = sol.theta;
    rep.solver_iterations = sol.iterations;
  }

  const Eigen::MatrixXd gram = data.X.transpose() * data.X;
  if (s_c == CovStructure::Unstructured && theta.norm() > 0.0) {
    // Degenerate minimizer with X theta = 0: zero is also a minimizer and is
    // the one the fitted-weight set contains.
    const double fit_norm_sq = weighted_sq_norm(theta, gram);
    if (fit_norm_sq <= 1e-24 * gram.trace() * theta.squaredNorm()) {
      theta = Eigen::VectorXd::Zero(d);
    }
  }

  WeightPair fitted;
  fitted.C = attaining_weight(theta, gram, s_c, y_norm);
  fitted.V = attaining_weight(Eigen::VectorXd(data.y - data.X * theta),
                              Eigen::MatrixXd::Identity(n, n), s_v, y_norm);

  rep.theta = theta;
  rep.objective = criterion_value(crit, theta, data);
  rep.weights_used = fitted;

  try {
    const EstimateReport recon = estimate_weighted(fitted, data);
    rep.residual_range_gap = recon.residual_range_gap;
    const double roundtrip = (recon.theta - theta).norm() / (1.0 + theta.norm());
    rep.roundtrip_gap = roundtrip;
    if (roundtrip > 1e-5) {
      rep.warnings.push_back("re-estimation from the fitted weights moved theta beyond 1e-5");
    }
    const double j = cost_J(recon.theta, fitted, data);
    const double spice = spice_criterion(fitted, data);
    const double identity = std::abs(j - (spice / (y_norm * y_norm) + 2.0)) / (1.0 + std::abs(j));
    rep.fit_identity_residual = identity;
    if (identity > 1e-6) {
      rep.warnings.push_back("covariance-fitting identity residual exceeds 1e-6");
    }
  } catch (const Error& e) {
    rep.warnings.push_back(std::string("fitted-weight verification failed: ") + e.what());
  }
  return rep;
}

}  // namespace covtune

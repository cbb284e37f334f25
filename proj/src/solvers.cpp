#include "covtune/solvers.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "covtune/errors.hpp"

namespace covtune {

namespace {

void validate_criterion(const Criterion& c, const Dataset& data) {
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) {
    throw InvalidInputError("Criterion: lambda must be finite and nonnegative");
  }
  if (c.penalty == PenaltyKind::WeightedL1) {
    if (c.l1_weights.size() != data.d()) {
      throw InvalidInputError("Criterion: l1 weights must have one entry per column of X");
    }
    if (!c.l1_weights.allFinite() || (c.l1_weights.array() < 0.0).any()) {
      throw InvalidInputError("Criterion: l1 weights must be finite and nonnegative");
    }
  }
  if (c.penalty == PenaltyKind::WeightedL2Seminorm) {
    if (!c.seminorm_weight.has_value() || c.seminorm_weight->dim() != data.d()) {
      throw InvalidInputError("Criterion: seminorm penalty requires a d x d PSD weight");
    }
  }
}

void validate_options(const SolverOptions& opts) {
  if (opts.max_iterations < 1) {
    throw InvalidInputError("SolverOptions: max_iterations must be at least 1");
  }
  if (!(opts.objective_tol > 0.0)) {
    throw InvalidInputError("SolverOptions: objective_tol must be positive");
  }
  if (!(opts.rho > 0.0) || !(opts.over_relaxation > 0.0) || !(opts.over_relaxation < 2.0)) {
    throw InvalidInputError("SolverOptions: step parameters out of range");
  }
  if (opts.check_interval < 1) {
    throw InvalidInputError("SolverOptions: check_interval must be at least 1");
  }
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& p, double a) {
  return p.array().sign() * (p.array().abs() - a).max(0.0);
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& p, const Eigen::VectorXd& a) {
  return p.array().sign() * (p.array().abs() - a.array()).max(0.0);
}

Eigen::VectorXd block_soft_threshold(const Eigen::VectorXd& p, double a) {
  const double nrm = p.norm();
  if (nrm <= a) {
    return Eigen::VectorXd::Zero(p.size());
  }
  return p * (1.0 - a / nrm);
}

/// Proximal map of alpha * sqrt(x^T W x) on the eigenbasis of W. The scalar
/// equation sum_i lam_i a_i^2 / (s + alpha lam_i)^2 = 1 has a unique positive
/// root whenever the zero test fails; solved by safeguarded Newton.
struct SeminormProx {
  Eigen::MatrixXd basis;
  Eigen::VectorXd lams;

  Eigen::VectorXd apply(const Eigen::VectorXd& p, double alpha) const {
    if (alpha <= 0.0 || lams.size() == 0) {
      return p;
    }
    const Eigen::VectorXd a = basis.transpose() * p;
    Eigen::VectorXd out = p - basis * a;  // null-space part passes through
    double zero_test = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      zero_test += a(i) * a(i) / lams(i);
    }
    if (zero_test <= alpha * alpha) {
      return out;
    }
    const double s_hi = std::sqrt(lams.dot(a.cwiseProduct(a)));
    double lo = 0.0, hi = s_hi, s = 0.5 * s_hi;
    for (int it = 0; it < 200; ++it) {
      double phi = 0.0, dphi = 0.0;
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double den = s + alpha * lams(i);
        const double t = lams(i) * a(i) * a(i) / (den * den);
        phi += t;
        dphi -= 2.0 * t / den;
      }
      if (phi > 1.0) {
        lo = s;
      } else {
        hi = s;
      }
      if (std::abs(phi - 1.0) <= 1e-14 || hi - lo <= 1e-15 * s_hi) {
        break;
      }
      double step = (phi - 1.0) / dphi;
      double next = s - step;
      if (!(next > lo) || !(next < hi)) {
        next = 0.5 * (lo + hi);
      }
      s = next;
    }
    Eigen::VectorXd xi(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      xi(i) = a(i) * s / (s + alpha * lams(i));
    }
    out += basis * xi;
    return out;
  }
};

/// Turns a raw dual vector into a certified dual-feasible point for the
/// Lagrangian dual max nu^T y subject to nu in the fit dual ball and X^T nu
/// in the penalty dual ball.
struct DualFeasibilizer {
  const Criterion* crit = nullptr;
  const Dataset* data = nullptr;
  Eigen::MatrixXd zero_cols;       // columns whose dual coordinate must vanish
  Eigen::MatrixXd zero_cols_pinv;
  bool has_zero_proj = false;

  DualFeasibilizer(const Criterion& c, const Dataset& d) : crit(&c), data(&d) {
    if (c.lambda == 0.0) {
      zero_cols = d.X;
    } else if (c.penalty == PenaltyKind::WeightedL1) {
      std::vector<Eigen::Index> idx;
      for (Eigen::Index i = 0; i < c.l1_weights.size(); ++i) {
        if (c.l1_weights(i) == 0.0) {
          idx.push_back(i);
        }
      }
      if (!idx.empty()) {
        zero_cols.resize(d.n(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
          zero_cols.col(static_cast<Eigen::Index>(k)) = d.X.col(idx[k]);
        }
      }
    } else if (c.penalty == PenaltyKind::WeightedL2Seminorm) {
      // X^T nu must lie in range(W): project out X * P_null(W).
      const SpectralFactor f = c.seminorm_weight->spectral_factor();
      Eigen::MatrixXd p_null = Eigen::MatrixXd::Identity(d.d(), d.d()) - f.basis * f.basis.transpose();
      Eigen::MatrixXd b = d.X * p_null;
      if (b.cwiseAbs().maxCoeff() > 1e-14 * (1.0 + d.X.cwiseAbs().maxCoeff())) {
        zero_cols = std::move(b);
      }
    }
    if (zero_cols.size() > 0) {
      zero_cols_pinv = matrix_pseudo_inverse(zero_cols);
      has_zero_proj = true;
    }
  }

  Eigen::VectorXd feasiblize(Eigen::VectorXd nu) const {
    const Eigen::Index n = data->n();
    if (has_zero_proj) {
      nu -= zero_cols * (zero_cols_pinv * nu);
    }
    const double fit_scale = crit->fit == FitTerm::SqrtMspe
                                 ? nu.norm() * std::sqrt(static_cast<double>(n))
                                 : nu.lpNorm<Eigen::Infinity>() * static_cast<double>(n);
    if (fit_scale > 1.0) {
      nu /= fit_scale;
    }
    if (crit->lambda > 0.0) {
      const Eigen::VectorXd xi = data->X.transpose() * nu;
      double ratio = 0.0;
      switch (crit->penalty) {
        case PenaltyKind::L2:
          ratio = xi.norm() / crit->lambda;
          break;
        case PenaltyKind::WeightedL1:
          for (Eigen::Index i = 0; i < xi.size(); ++i) {
            if (crit->l1_weights(i) > 0.0) {
              ratio = std::max(ratio, std::abs(xi(i)) / (crit->lambda * crit->l1_weights(i)));
            }
          }
          break;
        case PenaltyKind::WeightedL2Seminorm:
          ratio = std::sqrt(crit->seminorm_weight->pinv_quadratic_form(xi)) / crit->lambda;
          break;
      }
      if (ratio > 1.0) {
        nu /= ratio;
      }
    }
    return nu;
  }
};

}  // namespace

double criterion_value(const Criterion& c, const Eigen::VectorXd& theta, const Dataset& data) {
  validate_criterion(c, data);
  if (theta.size() != data.d()) {
    throw InvalidInputError("criterion_value: theta dimension mismatch");
  }
  const Eigen::VectorXd r = data.y - data.X * theta;
  const double n = static_cast<double>(data.n());
  double value = c.fit == FitTerm::SqrtMspe ? r.norm() / std::sqrt(n) : r.lpNorm<1>() / n;
  if (c.lambda > 0.0) {
    switch (c.penalty) {
      case PenaltyKind::L2:
        value += c.lambda * theta.norm();
        break;
      case PenaltyKind::WeightedL1:
        value += c.lambda * c.l1_weights.cwiseProduct(theta.cwiseAbs()).sum();
        break;
      case PenaltyKind::WeightedL2Seminorm:
        value += c.lambda * std::sqrt(std::max(0.0, theta.dot(c.seminorm_weight->entries() * theta)));
        break;
    }
  }
  return value;
}

double certified_gap(const Criterion& c, const Dataset& data, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& nu) {
  const DualFeasibilizer dual(c, data);
  const Eigen::VectorXd nu_feas = dual.feasiblize(nu);
  const double obj = criterion_value(c, theta, data);
  return std::max(0.0, obj - nu_feas.dot(data.y));
}

SolveResult solve(const Criterion& c, const Dataset& data, const SolverOptions& opts) {
  validate_criterion(c, data);
  validate_options(opts);

  const Eigen::MatrixXd& X = data.X;
  const Eigen::VectorXd& y = data.y;
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  const Eigen::MatrixXd normal =
      X.transpose() * X + Eigen::MatrixXd::Identity(d, d);
  const Eigen::LLT<Eigen::MatrixXd> llt(normal);
  if (llt.info() != Eigen::Success) {
    throw InvalidInputError("solve: failed to factor the consensus system");
  }

  SeminormProx sem;
  if (c.penalty == PenaltyKind::WeightedL2Seminorm && c.lambda > 0.0) {
    const SpectralFactor f = c.seminorm_weight->spectral_factor();
    sem.basis = f.basis;
    sem.lams = f.eigenvalues;
  }
  const DualFeasibilizer dual(c, data);

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sz = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sw = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd uz = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd uw = Eigen::VectorXd::Zero(d);
  double rho = opts.rho;
  const double alpha = opts.over_relaxation;

  SolveResult best;
  best.theta = sw;
  best.objective = criterion_value(c, best.theta, data);
  best.certificate_gap = std::numeric_limits<double>::infinity();
  best.dual_candidate = Eigen::VectorXd::Zero(n);

  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    theta = llt.solve(X.transpose() * (sz - uz) + (sw - uw));
    const Eigen::VectorXd xtheta = X * theta;
    const Eigen::VectorXd hz = alpha * xtheta + (1.0 - alpha) * sz;
    const Eigen::VectorXd hw = alpha * theta + (1.0 - alpha) * sw;

    Eigen::VectorXd sz_new;
    {
      const Eigen::VectorXd p = y - (hz + uz);
      const Eigen::VectorXd r =
          c.fit == FitTerm::SqrtMspe
              ? block_soft_threshold(p, 1.0 / (rho * sqrt_n))
              : soft_threshold(p, 1.0 / (rho * static_cast<double>(n)));
      sz_new = y - r;
    }

    Eigen::VectorXd sw_new;
    {
      const Eigen::VectorXd p = hw + uw;
      if (c.lambda == 0.0) {
        sw_new = p;
      } else {
        switch (c.penalty) {
          case PenaltyKind::L2:
            sw_new = block_soft_threshold(p, c.lambda / rho);
            break;
          case PenaltyKind::WeightedL1:
            sw_new = soft_threshold(p, (c.lambda / rho) * c.l1_weights);
            break;
          case PenaltyKind::WeightedL2Seminorm:
            sw_new = sem.apply(p, c.lambda / rho);
            break;
        }
      }
    }

    uz += hz - sz_new;
    uw += hw - sw_new;

    const bool last = iter == opts.max_iterations;
    if (iter % opts.check_interval == 0 || last) {
      const double obj = criterion_value(c, sw_new, data);
      const Eigen::VectorXd nu = dual.feasiblize(-rho * uz);
      const double gap = std::max(0.0, obj - nu.dot(y));
      if (opts.record_trace) {
        best.objective_trace.push_back(obj);
      }
      if (gap < best.certificate_gap) {
        best.theta = sw_new;
        best.objective = obj;
        best.certificate_gap = gap;
        best.dual_candidate = nu;
        best.iterations = iter;
      }
      if (gap <= opts.objective_tol * (1.0 + std::abs(obj))) {
        best.theta = sw_new;
        best.objective = obj;
        best.certificate_gap = gap;
        best.dual_candidate = nu;
        best.iterations = iter;
        best.converged = true;
        break;
      }
    }

    if (opts.adaptive_rho && iter % opts.balance_interval == 0) {
      const double r_primal = std::sqrt((xtheta - sz_new).squaredNorm() + (theta - sw_new).squaredNorm());
      const double r_dual =
          rho * (X.transpose() * (sz_new - sz) + (sw_new - sw)).norm();
      if (r_primal > opts.balance_threshold * r_dual && rho < 1e8) {
        rho *= opts.balance_factor;
        uz /= opts.balance_factor;
        uw /= opts.balance_factor;
      } else if (r_dual > opts.balance_threshold * r_primal && rho > 1e-8) {
        rho /= opts.balance_factor;
        uz *= opts.balance_factor;
        uw *= opts.balance_factor;
      }
    }

    sz = std::move(sz_new);
    sw = std::move(sw_new);
  }

  if (!best.converged) {
    best.iterations = opts.max_iterations;
  }
  return best;
}

SolveResult lad(const Dataset& data, const SolverOptions& opts) {
  Criterion c;
  c.fit = FitTerm::Mad;
  c.penalty = PenaltyKind::L2;
  c.lambda = 0.0;
  return solve(c, data, opts);
}

}  // namespace covtune

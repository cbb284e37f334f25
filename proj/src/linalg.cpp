#include "covtune/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "covtune/errors.hpp"

namespace covtune {

Eigen::MatrixXd SpectralFactor::sqrt_factor() const {
  return basis * eigenvalues.cwiseSqrt().asDiagonal();
}

PsdMatrix::PsdMatrix(const Eigen::MatrixXd& entries, double rank_tol) : rank_tol_(rank_tol) {
  if (entries.rows() != entries.cols()) {
    throw InvalidInputError("PsdMatrix: matrix must be square");
  }
  if (!entries.allFinite()) {
    throw InvalidInputError("PsdMatrix: entries must be finite");
  }
  if (rank_tol <= 0.0) {
    throw InvalidInputError("PsdMatrix: rank tolerance must be positive");
  }
  const double scale = entries.size() > 0 ? entries.cwiseAbs().maxCoeff() : 0.0;
  const double asym =
      entries.size() > 0 ? (entries - entries.transpose()).cwiseAbs().maxCoeff() : 0.0;
  if (asym > rank_tol * (1.0 + scale)) {
    throw InvalidInputError("PsdMatrix: matrix is not symmetric within tolerance");
  }
  entries_ = 0.5 * (entries + entries.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(entries_);
  if (eig.info() != Eigen::Success) {
    throw InvalidInputError("PsdMatrix: eigendecomposition failed");
  }
  eigvecs_ = eig.eigenvectors();
  eigvals_ = eig.eigenvalues();
  clamp_spectrum();
}

PsdMatrix::PsdMatrix(Eigen::MatrixXd entries, double rank_tol, Eigen::MatrixXd eigvecs,
                     Eigen::VectorXd eigvals)
    : entries_(std::move(entries)),
      rank_tol_(rank_tol),
      eigvecs_(std::move(eigvecs)),
      eigvals_(std::move(eigvals)) {
  clamp_spectrum();
}

void PsdMatrix::clamp_spectrum() {
  const double lambda_max = eigvals_.size() > 0 ? std::max(eigvals_.maxCoeff(), 0.0) : 0.0;
  const double cutoff = rank_tol_ * lambda_max;
  rank_ = 0;
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
    if (eigvals_(i) < -cutoff) {
      throw InvalidInputError("PsdMatrix: negative eigenvalue beyond tolerance");
    }
    if (eigvals_(i) <= cutoff) {
      eigvals_(i) = 0.0;
    } else {
      ++rank_;
    }
  }
}

PsdMatrix PsdMatrix::Zero(Eigen::Index dim, double rank_tol) {
  return PsdMatrix(Eigen::MatrixXd::Zero(dim, dim), rank_tol);
}

PsdMatrix PsdMatrix::Identity(Eigen::Index dim, double rank_tol) {
  return PsdMatrix(Eigen::MatrixXd::Identity(dim, dim), rank_tol);
}

PsdMatrix PsdMatrix::FromDiagonal(const Eigen::VectorXd& diag, double rank_tol) {
  return PsdMatrix(Eigen::MatrixXd(diag.asDiagonal()), rank_tol);
}

SpectralFactor PsdMatrix::spectral_factor() const {
  SpectralFactor f;
  f.basis.resize(dim(), rank_);
  f.eigenvalues.resize(rank_);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
    if (eigvals_(i) > 0.0) {
      f.basis.col(k) = eigvecs_.col(i);
      f.eigenvalues(k) = eigvals_(i);
      ++k;
    }
  }
  return f;
}

PsdMatrix PsdMatrix::pseudo_inverse() const {
  Eigen::VectorXd inv_vals = eigvals_;
  for (Eigen::Index i = 0; i < inv_vals.size(); ++i) {
    inv_vals(i) = inv_vals(i) > 0.0 ? 1.0 / inv_vals(i) : 0.0;
  }
  Eigen::MatrixXd entries = eigvecs_ * inv_vals.asDiagonal() * eigvecs_.transpose();
  entries = 0.5 * (entries + entries.transpose());
  return PsdMatrix(std::move(entries), rank_tol_, eigvecs_, std::move(inv_vals));
}

Eigen::VectorXd PsdMatrix::project_onto_range(const Eigen::VectorXd& v) const {
  if (v.size() != dim()) {
    throw InvalidInputError("PsdMatrix: dimension mismatch in range projection");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
    if (eigvals_(i) > 0.0) {
      out += eigvecs_.col(i) * eigvecs_.col(i).dot(v);
    }
  }
  return out;
}

double PsdMatrix::pinv_quadratic_form(const Eigen::VectorXd& x) const {
  if (x.size() != dim()) {
    throw InvalidInputError("PsdMatrix: dimension mismatch in quadratic form");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
    if (eigvals_(i) > 0.0) {
      const double c = eigvecs_.col(i).dot(x);
      acc += c * c / eigvals_(i);
    }
  }
  return acc;
}

Eigen::VectorXd PsdMatrix::pinv_apply(const Eigen::VectorXd& v) const {
  if (v.size() != dim()) {
    throw InvalidInputError("PsdMatrix: dimension mismatch in pinv apply");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dim());
  for (Eigen::Index i = 0; i < eigvals_.size(); ++i) {
    if (eigvals_(i) > 0.0) {
      out += eigvecs_.col(i) * (eigvecs_.col(i).dot(v) / eigvals_(i));
    }
  }
  return out;
}

PsdMatrix pseudo_inverse(const PsdMatrix& a) { return a.pseudo_inverse(); }

bool in_range(const Eigen::VectorXd& v, const PsdMatrix& a, double tol) {
  if (v.size() != a.dim()) {
    throw InvalidInputError("in_range: dimension mismatch");
  }
  const double vnorm = v.norm();
  if (vnorm == 0.0) {
    return true;
  }
  return (a.project_onto_range(v) - v).norm() <= tol * vnorm;
}

double weighted_sq_norm(const Eigen::VectorXd& x, const PsdMatrix& w) {
  return weighted_sq_norm(x, w.entries());
}

double weighted_sq_norm(const Eigen::VectorXd& x, const Eigen::MatrixXd& w) {
  if (x.size() != w.rows() || w.rows() != w.cols()) {
    throw InvalidInputError("weighted_sq_norm: dimension mismatch");
  }
  return std::max(0.0, x.dot(w * x));
}

double weighted_norm(const Eigen::VectorXd& x, const Eigen::MatrixXd& w) {
  return std::sqrt(weighted_sq_norm(x, w));
}

Eigen::MatrixXd matrix_pseudo_inverse(const Eigen::MatrixXd& x, double rank_tol) {
  if (!x.allFinite()) {
    throw InvalidInputError("matrix_pseudo_inverse: entries must be finite");
  }
  if (x.rows() >= x.cols()) {
    const PsdMatrix gram(Eigen::MatrixXd(x.transpose() * x), rank_tol);
    return gram.pseudo_inverse().entries() * x.transpose();
  }
  const PsdMatrix gram(Eigen::MatrixXd(x * x.transpose()), rank_tol);
  return x.transpose() * gram.pseudo_inverse().entries();
}

}  // namespace covtune

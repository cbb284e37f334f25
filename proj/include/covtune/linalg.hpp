#pragma once

#include <Eigen/Dense>

namespace covtune {

/// Relative eigenvalue cutoff below which a direction counts as null space.
/// Shared default for every PSD matrix the library constructs.
inline constexpr double kDefaultRankTol = 1e-10;

/// Relative tolerance for range-membership (feasibility) checks. Looser than
/// the rank cutoff so it absorbs pseudoinverse rounding.
inline constexpr double kDefaultRangeTol = 1e-8;

/// Truncated eigendecomposition of a PSD matrix: only the strictly positive
/// part, A = basis * eigenvalues.asDiagonal() * basis^T.
struct SpectralFactor {
  Eigen::MatrixXd basis;        ///< dim x m, orthonormal columns spanning the range
  Eigen::VectorXd eigenvalues;  ///< m positive eigenvalues

  /// basis * sqrt(eigenvalues), a dim x m factor S with A = S S^T.
  Eigen::MatrixXd sqrt_factor() const;
};

/// Dense real symmetric positive semi-definite matrix with a cached
/// eigendecomposition. Construction symmetrizes, rejects matrices whose
/// asymmetry or negative eigenvalues exceed tolerance, and clamps
/// within-tolerance negative eigenvalues to zero. Immutable once built.
class PsdMatrix {
 public:
  PsdMatrix() = default;  ///< empty 0x0 matrix

  explicit PsdMatrix(const Eigen::MatrixXd& entries, double rank_tol = kDefaultRankTol);

  static PsdMatrix Zero(Eigen::Index dim, double rank_tol = kDefaultRankTol);
  static PsdMatrix Identity(Eigen::Index dim, double rank_tol = kDefaultRankTol);
  static PsdMatrix FromDiagonal(const Eigen::VectorXd& diag, double rank_tol = kDefaultRankTol);

  Eigen::Index dim() const { return entries_.rows(); }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double rank_tol() const { return rank_tol_; }

  /// Numerical rank: eigenvalues above rank_tol * lambda_max.
  Eigen::Index rank() const { return rank_; }
  double trace() const { return entries_.trace(); }

  /// All eigenvalues, ascending, with sub-cutoff values clamped to exactly 0.
  const Eigen::VectorXd& eigenvalues() const { return eigvals_; }

  /// Strictly positive spectral part (rank() columns).
  SpectralFactor spectral_factor() const;

  /// Moore-Penrose pseudoinverse; shares this matrix's eigenbasis so the
  /// result is symmetric by construction.
  PsdMatrix pseudo_inverse() const;

  /// A A^dagger v, the orthogonal projection of v onto the range.
  Eigen::VectorXd project_onto_range(const Eigen::VectorXd& v) const;

  /// x^T A^dagger x without forming the pseudoinverse.
  double pinv_quadratic_form(const Eigen::VectorXd& x) const;

  /// A^dagger v.
  Eigen::VectorXd pinv_apply(const Eigen::VectorXd& v) const;

 private:
  PsdMatrix(Eigen::MatrixXd entries, double rank_tol, Eigen::MatrixXd eigvecs,
            Eigen::VectorXd eigvals);
  void clamp_spectrum();

  Eigen::MatrixXd entries_;
  double rank_tol_ = kDefaultRankTol;
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd eigvals_;
  Eigen::Index rank_ = 0;
};

/// Moore-Penrose pseudoinverse of a PSD matrix.
PsdMatrix pseudo_inverse(const PsdMatrix& a);

/// True iff ||A A^dagger v - v|| <= tol * ||v||; v = 0 is always in range.
bool in_range(const Eigen::VectorXd& v, const PsdMatrix& a, double tol = kDefaultRangeTol);

/// x^T W x, clamped to 0 when rounding produces a tiny negative.
double weighted_sq_norm(const Eigen::VectorXd& x, const PsdMatrix& w);
double weighted_sq_norm(const Eigen::VectorXd& x, const Eigen::MatrixXd& w);

/// sqrt(x^T W x).
double weighted_norm(const Eigen::VectorXd& x, const Eigen::MatrixXd& w);

/// Pseudoinverse of a general (possibly rectangular) matrix via the Gram
/// route X^dagger = (X^T X)^dagger X^T, so the rank cutoff is the same
/// eigenvalue rule used everywhere else.
Eigen::MatrixXd matrix_pseudo_inverse(const Eigen::MatrixXd& x, double rank_tol = kDefaultRankTol);

}  // namespace covtune

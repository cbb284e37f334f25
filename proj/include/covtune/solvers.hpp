#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "covtune/estimators.hpp"
#include "covtune/linalg.hpp"

namespace covtune {

enum class FitTerm { SqrtMspe, Mad };
enum class PenaltyKind { L2, WeightedL1, WeightedL2Seminorm };

/// A regularized objective: fit term (square-root mean-square or mean
/// absolute deviation of the residual) plus lambda times a penalty norm.
struct Criterion {
  FitTerm fit = FitTerm::SqrtMspe;
  PenaltyKind penalty = PenaltyKind::L2;
  double lambda = 0.0;
  /// Per-coordinate weights, required (size d, nonnegative) for WeightedL1.
  Eigen::VectorXd l1_weights;
  /// W for the weighted-l2 seminorm penalty lambda * sqrt(theta^T W theta).
  std::optional<PsdMatrix> seminorm_weight;
};

struct SolverOptions {
  int max_iterations = 20000;
  /// Relative duality-gap tolerance: converged once the certified gap is
  /// below objective_tol * (1 + |objective|).
  double objective_tol = 1e-9;
  /// Initial ADMM penalty; rescaled automatically when adaptive_rho is set.
  double rho = 1.0;
  double over_relaxation = 1.7;
  bool adaptive_rho = true;
  /// Residual-balancing schedule: every balance_interval iterations, scale
  /// rho by balance_factor when the primal/dual residual ratio exceeds
  /// balance_threshold.
  int balance_interval = 25;
  double balance_threshold = 10.0;
  double balance_factor = 2.0;
  /// Iterations between convergence checks (and trace samples).
  int check_interval = 10;
  bool record_trace = false;
  /// Reserved for randomized restarts; the default splitting scheme is
  /// deterministic and ignores it.
  std::optional<std::uint64_t> seed;
};

struct SolveResult {
  Eigen::VectorXd theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  /// Absolute duality gap certified by dual_candidate at theta.
  double certificate_gap = 0.0;
  /// Dual-feasible point nu: nu^T y is a lower bound on the optimal value.
  Eigen::VectorXd dual_candidate;
  /// Objective at each convergence check, when record_trace is set.
  std::vector<double> objective_trace;
};

/// Minimizes the criterion with a deterministic over-relaxed ADMM splitting.
/// All criteria are convex; the returned certificate_gap bounds the
/// suboptimality of theta. Non-convergence is reported, not thrown.
SolveResult solve(const Criterion& c, const Dataset& data, const SolverOptions& opts = {});

/// Exact objective value of the criterion at theta.
double criterion_value(const Criterion& c, const Eigen::VectorXd& theta, const Dataset& data);

/// Least absolute deviation estimate: MAD fit with no penalty.
SolveResult lad(const Dataset& data, const SolverOptions& opts = {});

/// Checks that nu is dual feasible for the criterion (after tiny-slack
/// scaling) and returns the duality gap it certifies at theta. Used by the
/// solver internally and by independent optimality checks.
double certified_gap(const Criterion& c, const Dataset& data, const Eigen::VectorXd& theta,
                     const Eigen::VectorXd& nu);

}  // namespace covtune

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "covtune/covfit.hpp"
#include "covtune/estimators.hpp"
#include "covtune/linalg.hpp"
#include "covtune/solvers.hpp"

namespace covtune {

/// Deterministic counter-based Gaussian stream. Streams are keyed by
/// (seed, stream index) so trials can run in any order, on any number of
/// threads, and still draw identical values.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream);

  double uniform();  ///< in (0, 1)
  double gauss();    ///< standard normal (Box-Muller)

 private:
  std::uint64_t next_u64();
  std::uint64_t state_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

/// One of the three simulated settings: dense prior (1), sparse prior (2),
/// sparse prior with noise outliers (3).
struct ExperimentCase {
  int case_id = 1;
  int n = 40;
  int d = 40;
  double snr = 10.0;
  /// Number of nonzero prior variances in cases 2 and 3; -1 means max(1, d/10).
  int sparsity = -1;
  int outlier_count = 2;        ///< case 3 only
  double outlier_variance = 500.0;
  std::uint64_t seed = 1;

  int resolved_sparsity() const;
};

/// Fixed design and true covariances for a case. The noise level v solves
/// tr{X C0 X^T} / tr{v I} = snr, before any outlier substitution.
struct CaseData {
  Eigen::MatrixXd X;
  PsdMatrix C0;
  PsdMatrix V0;
  double noise_level = 0.0;  ///< v
};

CaseData generate_case(const ExperimentCase& spec);

/// Draws (theta0, y) with theta0 ~ N(0, C0), eps ~ N(0, V0), y = X theta0 + eps.
/// Singular covariances are sampled through their spectral factors, so
/// zero-variance directions are exactly zero.
std::pair<Eigen::VectorXd, Eigen::VectorXd> sample_trial(const Eigen::MatrixXd& x,
                                                         const PsdMatrix& c0, const PsdMatrix& v0,
                                                         GaussianStream& rng);

/// NMSE of the oracle estimator theta(C0, V0):
/// tr{C0 - C0 X^T R0^+ X C0} / tr{C0}.
double oracle_nmse(const Eigen::MatrixXd& x, const PsdMatrix& c0, const PsdMatrix& v0);

struct NmseCurve {
  std::vector<double> lambdas;
  std::vector<double> nmse;
  std::vector<double> stderrs;
  double tuned_lambda = 0.0;
  double tuned_nmse = 0.0;
  double tuned_stderr = 0.0;
  double oracle_nmse = 0.0;
  int trials = 0;
  int failed_trials = 0;
};

/// Options for nmse_curve beyond the solver settings.
struct CurveOptions {
  SolverOptions solver;
  /// Worker threads over trials; 0 reads COVTUNE_THREADS, falling back to the
  /// hardware count. Results do not depend on the thread count.
  int threads = 0;

  CurveOptions();
};

/// Monte Carlo NMSE over the lambda grid for the estimator selected by the
/// structure pair, with common random numbers across lambda within a trial.
/// Trials whose solves fail to converge are excluded and counted; more than
/// 1% excluded aborts the run.
NmseCurve nmse_curve(const ExperimentCase& spec, CovStructure s_c, CovStructure s_v,
                     const std::vector<double>& lambdas, int trials,
                     const CurveOptions& opts = {});

/// Default sweep grid: 0 plus 60 logarithmically spaced points in [1e-3, 2].
std::vector<double> default_lambda_grid();

/// Writes "lambda,nmse,stderr" rows (atomically: temp file + rename).
void write_curve_csv(const NmseCurve& curve, const std::string& path);

/// Sidecar JSON with the tuned/oracle values and the case parameters.
void write_curve_metadata(const NmseCurve& curve, const ExperimentCase& spec, CovStructure s_c,
                          CovStructure s_v, const std::string& path);

}  // namespace covtune

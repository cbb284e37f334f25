#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "covtune/errors.hpp"
#include "covtune/experiments.hpp"
#include "covtune/io.hpp"
#include "test_helpers.hpp"

using namespace covtune;
namespace tst = covtune::testing;

TEST_SUITE("experiments") {

TEST_CASE("gaussian streams are deterministic and stream-separated") {
  GaussianStream a(42, 7);
  GaussianStream b(42, 7);
  GaussianStream c(42, 8);
  bool differs = false;
  for (int i = 0; i < 32; ++i) {
    const double va = a.gauss();
    CHECK(va == b.gauss());
    if (va != c.gauss()) {
      differs = true;
    }
  }
  CHECK(differs);
}

TEST_CASE("gaussian stream moments are sane") {
  GaussianStream g(7, 0);
  const int n = 200000;
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = g.gauss();
    mean += z;
    var += z * z;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("case 1 generation satisfies the SNR identity exactly") {
  ExperimentCase spec;
  spec.case_id = 1;
  spec.n = 4;
  spec.d = 4;
  spec.seed = 5;
  const CaseData cd = generate_case(spec);
  CHECK((cd.C0.entries() - Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);
  const double recomputed_snr =
      (cd.X * cd.C0.entries() * cd.X.transpose()).trace() / cd.V0.trace();
  CHECK(recomputed_snr == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("case 2 generation produces the requested sparsity") {
  ExperimentCase spec;
  spec.case_id = 2;
  spec.n = 12;
  spec.d = 10;
  spec.sparsity = 1;
  const CaseData cd = generate_case(spec);
  int nonzero = 0;
  for (int i = 0; i < 10; ++i) {
    nonzero += cd.C0.entries()(i, i) != 0.0 ? 1 : 0;
  }
  CHECK(nonzero == 1);
  // Default sparsity is max(1, d/10).
  ExperimentCase def;
  def.d = 40;
  CHECK(def.resolved_sparsity() == 4);
  def.d = 5;
  CHECK(def.resolved_sparsity() == 1);
}

TEST_CASE("case 3 generation substitutes outliers after solving for v") {
  ExperimentCase spec;
  spec.case_id = 3;
  spec.n = 20;
  spec.d = 10;
  spec.seed = 9;
  const CaseData cd = generate_case(spec);
  int big = 0, small = 0;
  for (int i = 0; i < spec.n; ++i) {
    const double vi = cd.V0.entries()(i, i);
    if (vi == 500.0) {
      ++big;
    } else {
      CHECK(vi == doctest::Approx(cd.noise_level).epsilon(1e-14));
      ++small;
    }
  }
  CHECK(big == 2);
  CHECK(small == 18);
  // v comes from the pre-substitution identity tr{X C0 X^T} = snr * n * v.
  double sig = 0.0;
  for (int j = 0; j < spec.resolved_sparsity(); ++j) {
    sig += cd.X.col(j).squaredNorm();
  }
  CHECK(cd.noise_level == doctest::Approx(sig / (10.0 * spec.n)).epsilon(1e-12));
}

TEST_CASE("degenerate covariances sample exactly") {
  std::mt19937 seed_rng(201);
  const Eigen::MatrixXd x = tst::random_matrix(seed_rng, 5, 3);
  GaussianStream rng(3, 1);
  SUBCASE("zero prior: theta0 is identically zero") {
    const auto [theta0, y] = sample_trial(x, PsdMatrix::Zero(3), PsdMatrix::Identity(5), rng);
    CHECK(theta0.norm() == 0.0);
  }
  SUBCASE("zero noise: y = X theta0 exactly") {
    const auto [theta0, y] = sample_trial(x, PsdMatrix::Identity(3), PsdMatrix::Zero(5), rng);
    CHECK((y - x * theta0).norm() == 0.0);
  }
}

TEST_CASE("sample covariance of simulated parameters matches the prior") {
  std::mt19937 seed_rng(207);
  Eigen::MatrixXd c(3, 3);
  c << 2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 0.7;
  const PsdMatrix c0(c);
  const Eigen::MatrixXd x = tst::random_matrix(seed_rng, 2, 3);
  const PsdMatrix v0 = PsdMatrix::Zero(2);
  const int trials = 100000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
  for (int t = 0; t < trials; ++t) {
    GaussianStream rng(11, static_cast<std::uint64_t>(t));
    const auto [theta0, y] = sample_trial(x, c0, v0, rng);
    acc += theta0 * theta0.transpose();
  }
  acc /= static_cast<double>(trials);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      // Standard error of a Gaussian covariance entry.
      const double se = std::sqrt((c(i, i) * c(j, j) + c(i, j) * c(i, j)) / trials);
      CHECK(std::abs(acc(i, j) - c(i, j)) <= 5.0 * se);
    }
  }
}

TEST_CASE("oracle NMSE closed forms") {
  SUBCASE("noiseless identity design recovers exactly") {
    CHECK(oracle_nmse(Eigen::MatrixXd::Identity(3, 3), PsdMatrix::Identity(3),
                      PsdMatrix::Zero(3)) == doctest::Approx(0.0));
  }
  SUBCASE("scalar reduction v/(1+v)") {
    const double v = 0.6;
    CHECK(oracle_nmse(Eigen::MatrixXd::Identity(4, 4), PsdMatrix::Identity(4),
                      PsdMatrix(Eigen::MatrixXd(v * Eigen::MatrixXd::Identity(4, 4)))) ==
          doctest::Approx(v / (1.0 + v)).epsilon(1e-12));
  }
  SUBCASE("degenerate prior is rejected") {
    CHECK_THROWS_AS(oracle_nmse(Eigen::MatrixXd::Identity(2, 2), PsdMatrix::Zero(2),
                                PsdMatrix::Identity(2)),
                    InvalidInputError);
  }
  SUBCASE("Monte Carlo cross-check with the optimal estimator") {
    std::mt19937 seed_rng(211);
    const Eigen::Index n = 4, d = 3;
    const Eigen::MatrixXd x = tst::random_matrix(seed_rng, n, d);
    const PsdMatrix c0(tst::random_psd(seed_rng, d, 2));
    const PsdMatrix v0(Eigen::MatrixXd(0.4 * Eigen::MatrixXd::Identity(n, n)));
    const double oracle = oracle_nmse(x, c0, v0);
    const int trials = 10000;
    double acc = 0.0, acc2 = 0.0;
    for (int t = 0; t < trials; ++t) {
      GaussianStream rng(13, static_cast<std::uint64_t>(t));
      const auto [theta0, y] = sample_trial(x, c0, v0, rng);
      const Dataset data(x, y);
      const auto rep = lmmse(c0, v0, data);
      const double err = (theta0 - rep.theta).squaredNorm() / c0.trace();
      acc += err;
      acc2 += err * err;
    }
    const double mean = acc / trials;
    const double se = std::sqrt((acc2 / trials - mean * mean) / trials);
    CHECK(std::abs(mean - oracle) <= 3.0 * se);
  }
}

TEST_CASE("nmse curves: mechanics at small scale") {
  ExperimentCase spec;
  spec.case_id = 1;
  spec.n = 8;
  spec.d = 8;
  spec.seed = 21;
  const std::vector<double> grid{0.0, 0.05, 0.3, 1.0, 10.0};
  CurveOptions copts;
  copts.threads = 2;
  const NmseCurve curve =
      nmse_curve(spec, CovStructure::ScaledIdentity, CovStructure::ScaledIdentity, grid, 40,
                 copts);
  REQUIRE(curve.nmse.size() == grid.size());
  CHECK(curve.failed_trials == 0);
  CHECK(curve.trials == 40);

  SUBCASE("oracle lower bound holds within 3 standard errors") {
    for (std::size_t i = 0; i < curve.nmse.size(); ++i) {
      CHECK(curve.nmse[i] >= curve.oracle_nmse - 3.0 * curve.stderrs[i]);
    }
  }
  SUBCASE("lambda = 0 reproduces unregularized least squares") {
    const CaseData cd = generate_case(spec);
    double acc = 0.0;
    for (int t = 0; t < 40; ++t) {
      GaussianStream rng(spec.seed, 0x1000ULL + static_cast<std::uint64_t>(t));
      const auto [theta0, y] = sample_trial(cd.X, cd.C0, cd.V0, rng);
      const Eigen::VectorXd ls = tst::lsq_oracle(cd.X, y);
      acc += (theta0 - ls).squaredNorm() / cd.C0.trace();
    }
    CHECK(curve.nmse.front() == doctest::Approx(acc / 40.0).epsilon(1e-5));
  }
  SUBCASE("large lambda drives the estimate to zero and NMSE to the prior scale") {
    const CaseData cd = generate_case(spec);
    double acc = 0.0;
    for (int t = 0; t < 40; ++t) {
      GaussianStream rng(spec.seed, 0x1000ULL + static_cast<std::uint64_t>(t));
      const auto [theta0, y] = sample_trial(cd.X, cd.C0, cd.V0, rng);
      acc += theta0.squaredNorm() / cd.C0.trace();
    }
    CHECK(curve.nmse.back() == doctest::Approx(acc / 40.0).epsilon(1e-9));
  }
  SUBCASE("identical seeds give identical curves regardless of threads") {
    CurveOptions serial;
    serial.threads = 1;
    const NmseCurve again = nmse_curve(spec, CovStructure::ScaledIdentity,
                                       CovStructure::ScaledIdentity, grid, 40, serial);
    CHECK(again.nmse == curve.nmse);
    CHECK(again.stderrs == curve.stderrs);
    CHECK(again.tuned_nmse == curve.tuned_nmse);
  }
}

TEST_CASE("default lambda grid spans the sweep range") {
  const auto grid = default_lambda_grid();
  CHECK(grid.size() == 61);
  CHECK(grid.front() == 0.0);
  CHECK(grid[1] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(grid.back() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("curve files round-trip and are byte-stable") {
  namespace fs = std::filesystem;
  ExperimentCase spec;
  spec.case_id = 2;
  spec.n = 6;
  spec.d = 6;
  spec.seed = 33;
  const std::vector<double> grid{0.0, 0.2, 1.0};
  const NmseCurve curve =
      nmse_curve(spec, CovStructure::Diagonal, CovStructure::ScaledIdentity, grid, 10);
  const fs::path dir = fs::temp_directory_path() / "covtune_test_curves";
  fs::create_directories(dir);
  const std::string csv = (dir / "curve.csv").string();
  const std::string meta = (dir / "curve.meta.json").string();
  write_curve_csv(curve, csv);
  write_curve_metadata(curve, spec, CovStructure::Diagonal, CovStructure::ScaledIdentity, meta);

  const Eigen::MatrixXd parsed = [&] {
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "lambda,nmse,stderr");
    std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string body_path = (dir / "body.csv").string();
    std::ofstream out(body_path);
    out << rest;
    out.close();
    return read_matrix_csv(body_path);
  }();
  REQUIRE(parsed.rows() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(parsed(i, 0) == curve.lambdas[static_cast<std::size_t>(i)]);
    CHECK(parsed(i, 1) == curve.nmse[static_cast<std::size_t>(i)]);
    CHECK(parsed(i, 2) == curve.stderrs[static_cast<std::size_t>(i)]);
  }

  write_curve_csv(curve, csv + ".again");
  std::ifstream a(csv), b(csv + ".again");
  const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  fs::remove_all(dir);
}

TEST_CASE("invalid experiment specifications are rejected") {
  ExperimentCase spec;
  spec.case_id = 4;
  CHECK_THROWS_AS(generate_case(spec), InvalidInputError);
  spec.case_id = 1;
  spec.snr = 0.0;
  CHECK_THROWS_AS(generate_case(spec), InvalidInputError);
  spec.snr = 10.0;
  spec.sparsity = 99;
  spec.d = 10;
  CHECK_THROWS_AS(generate_case(spec), InvalidInputError);

  ExperimentCase ok;
  CHECK_THROWS_AS(nmse_curve(ok, CovStructure::ScaledIdentity, CovStructure::ScaledIdentity,
                             {0.1}, 0),
                  InvalidInputError);
  CHECK_THROWS_AS(nmse_curve(ok, CovStructure::ScaledIdentity, CovStructure::ScaledIdentity,
                             {-0.1}, 5),
                  InvalidInputError);
}

}  // TEST_SUITE

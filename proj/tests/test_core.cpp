#include "lgmi/core.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace lgmi;

TEST(ValidateSamples, PassesFiniteMatrixThrough)
{
  Eigen::MatrixXd raw(3, 2);
  raw << 0.0, 1.0, 2.0, 3.0, 4.0, 5.0;
  const SampleSet samples = validate_samples(raw);
  EXPECT_EQ(samples.n(), 3);
  EXPECT_EQ(samples.dim(), 2);
  EXPECT_EQ(samples.data(), raw);
}

TEST(ValidateSamples, RejectsNonFiniteEntries)
{
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(3, 2);
  raw(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    validate_samples(raw);
    FAIL() << "expected NonFiniteEntryError";
  } catch (const NonFiniteEntryError& e) {
    EXPECT_EQ(e.row, 1);
    EXPECT_EQ(e.col, 0);
  }
  raw(1, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(validate_samples(raw), NonFiniteEntryError);
}

TEST(ValidateSamples, RejectsSingleRow)
{
  Eigen::MatrixXd raw(1, 2);
  raw << 0.0, 1.0;
  EXPECT_THROW(validate_samples(raw), EmptyInputError);
}

TEST(ValidateSamples, WarnsOnDuplicateRowsButSucceeds)
{
  Eigen::MatrixXd raw(3, 2);
  raw << 1.0, 2.0, 1.0, 2.0, 3.0, 4.0;
  std::ostringstream warnings;
  const SampleSet samples = validate_samples(raw, &warnings);
  EXPECT_EQ(samples.n(), 3);
  EXPECT_NE(warnings.str().find("duplicate"), std::string::npos);

  std::ostringstream clean;
  Eigen::MatrixXd distinct(3, 2);
  distinct << 1.0, 2.0, 1.5, 2.0, 3.0, 4.0;
  validate_samples(distinct, &clean);
  EXPECT_TRUE(clean.str().empty());
}

TEST(GaussianLogDensity, StandardNormalAtMode)
{
  GaussianParams params(Eigen::VectorXd::Zero(1),
                        Eigen::MatrixXd::Identity(1, 1));
  const double value = gaussian_log_density(Eigen::VectorXd::Zero(1), params);
  EXPECT_NEAR(value, -0.5 * std::log(2.0 * M_PI), 1e-12);
}

TEST(GaussianLogDensity, BivariateStandardNormalAtMode)
{
  GaussianParams params(Eigen::VectorXd::Zero(2),
                        Eigen::MatrixXd::Identity(2, 2));
  const double value = gaussian_log_density(Eigen::VectorXd::Zero(2), params);
  EXPECT_NEAR(value, -std::log(2.0 * M_PI), 1e-12);
}

TEST(GaussianLogDensity, HandComputedOneDimensionalCase)
{
  // x=1, mu=0, sigma^2=4: -log 2 - log(2 pi)/2 - 1/8
  GaussianParams params(Eigen::VectorXd::Zero(1),
                        2.0 * Eigen::MatrixXd::Identity(1, 1));
  const double value =
    gaussian_log_density(Eigen::VectorXd::Ones(1), params);
  EXPECT_NEAR(value, -std::log(2.0) - 0.5 * std::log(2.0 * M_PI) - 0.125,
              1e-12);
}

TEST(GaussianLogDensity, RejectsDimensionMismatch)
{
  GaussianParams params(Eigen::VectorXd::Zero(2),
                        Eigen::MatrixXd::Identity(2, 2));
  EXPECT_THROW(gaussian_log_density(Eigen::VectorXd::Zero(3), params),
               DimensionMismatchError);
}

TEST(GaussianParams, RejectsInvalidCholeskyFactors)
{
  EXPECT_THROW(GaussianParams(Eigen::VectorXd::Zero(2),
                              Eigen::MatrixXd::Zero(2, 2)),
               DegenerateDataError);
  Eigen::MatrixXd upper(2, 2);
  upper << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(GaussianParams(Eigen::VectorXd::Zero(2), upper),
               InvalidSpecError);
  EXPECT_THROW(GaussianParams(Eigen::VectorXd::Zero(3),
                              Eigen::MatrixXd::Identity(2, 2)),
               DimensionMismatchError);
}

// The implied density integrates to one: quadrature over a +-8 sigma box.
TEST(GaussianLogDensity, DensityNormalizesUnderQuadrature)
{
  std::mt19937_64 engine(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  for (int trial = 0; trial < 3; ++trial) {
    // d = 1
    const double mu = unif(engine);
    const double sd = 0.5 + 0.5 * std::abs(unif(engine));
    GaussianParams p1(Eigen::VectorXd::Constant(1, mu),
                      sd * Eigen::MatrixXd::Identity(1, 1));
    const double mass1 = oracles::simpson(
      [&](double x) {
        return std::exp(
          gaussian_log_density(Eigen::VectorXd::Constant(1, x), p1));
      },
      mu - 8.0 * sd, mu + 8.0 * sd, 4096);
    EXPECT_NEAR(mass1, 1.0, 1e-4);

    // d = 2
    Eigen::MatrixXd chol(2, 2);
    chol << 0.8 + 0.4 * std::abs(unif(engine)), 0.0, 0.3 * unif(engine),
      0.6 + 0.4 * std::abs(unif(engine));
    Eigen::VectorXd mean(2);
    mean << unif(engine), unif(engine);
    GaussianParams p2(mean, chol);
    const double extent = 8.0 * chol.norm();
    const double mass2 = oracles::simpson2d(
      [&](double x, double y) {
        Eigen::VectorXd v(2);
        v << x, y;
        return std::exp(gaussian_log_density(v, p2));
      },
      mean(0) - extent, mean(0) + extent, mean(1) - extent, mean(1) + extent,
      512);
    EXPECT_NEAR(mass2, 1.0, 1e-4);
  }
}

// Simultaneously permuting x, mu, and the rows/columns of Sigma leaves the
// log-density unchanged.
TEST(GaussianLogDensity, InvariantUnderCoordinatePermutation)
{
  std::mt19937_64 engine(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const Eigen::Index d = 3;

  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd chol = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      chol(i, i) = 0.5 + std::abs(unif(engine));
      for (Eigen::Index j = 0; j < i; ++j) {
        chol(i, j) = 0.4 * unif(engine);
      }
    }
    Eigen::VectorXd mean(d), x(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      mean(i) = unif(engine);
      x(i) = unif(engine);
    }
    GaussianParams params(mean, chol);
    const double reference = gaussian_log_density(x, params);

    std::vector<int> perm = { 2, 0, 1 };
    Eigen::PermutationMatrix<Eigen::Dynamic> p(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      p.indices()(i) = perm[static_cast<size_t>(i)];
    }
    const Eigen::MatrixXd sigma = params.covariance();
    const Eigen::MatrixXd sigma_perm = p.transpose() * sigma * p;
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_perm);
    ASSERT_EQ(llt.info(), Eigen::Success);
    GaussianParams permuted(p.transpose() * mean,
                            Eigen::MatrixXd(llt.matrixL()));
    EXPECT_NEAR(gaussian_log_density(p.transpose() * x, permuted), reference,
                1e-12);
  }
}

TEST(BandwidthMatrix, RejectsNonPositiveScales)
{
  EXPECT_THROW(BandwidthMatrix(Eigen::VectorXd::Zero(2)),
               DegenerateDataError);
  EXPECT_THROW(BandwidthMatrix(Eigen::VectorXd::Constant(1, -1.0)),
               DegenerateDataError);
  const BandwidthMatrix bw = BandwidthMatrix::isotropic(3, 0.5);
  EXPECT_EQ(bw.kernel_variances()(2), 0.25);
}

TEST(Core, ClampedExpNeverUnderflowsToZero)
{
  EXPECT_GT(clamped_exp(-1e6), 0.0);
  EXPECT_DOUBLE_EQ(clamped_exp(0.0), 1.0);
}

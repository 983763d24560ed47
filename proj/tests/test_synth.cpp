#include "lgmi/synth.hpp"

#include "lgmi/sweep.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace lgmi;

TEST(Generate, LinearSupportAndDeterminism)
{
  RelationshipSpec spec{ Family::linear, 1.0, 4, 12345 };
  const SampleSet a = generate(spec);
  const SampleSet b = generate(spec);
  ASSERT_EQ(a.n(), 4);
  ASSERT_EQ(a.dim(), 2);
  EXPECT_EQ(a.data(), b.data());
  for (Eigen::Index i = 0; i < a.n(); ++i) {
    const double noise = a.data()(i, 1) - a.data()(i, 0);
    EXPECT_GE(noise, 0.0);
    EXPECT_LE(noise, 1.0);
    EXPECT_GE(a.data()(i, 0), 0.0);
    EXPECT_LE(a.data()(i, 0), 1.0);
  }
}

TEST(Generate, QuadraticNoiseSupport)
{
  RelationshipSpec spec{ Family::quadratic, 0.1, 500, 99 };
  const SampleSet samples = generate(spec);
  for (Eigen::Index i = 0; i < samples.n(); ++i) {
    const double x = samples.data()(i, 0);
    const double noise = samples.data()(i, 1) - x * x;
    EXPECT_GE(noise, 0.0);
    EXPECT_LE(noise, 0.1);
  }
}

TEST(Generate, SupportHoldsAcrossFamiliesAndSeeds)
{
  for (Family family : { Family::linear, Family::cubic, Family::sine,
                         Family::sine_high_freq, Family::sqrt_shape }) {
    for (std::uint64_t seed : { 1ull, 77ull }) {
      RelationshipSpec spec{ family, 0.25, 200, seed };
      const SampleSet samples = generate(spec);
      for (Eigen::Index i = 0; i < samples.n(); ++i) {
        const double x = samples.data()(i, 0);
        const double noise =
          samples.data()(i, 1) - family_function(family, x);
        EXPECT_GE(noise, 0.0);
        EXPECT_LE(noise, 0.25);
      }
    }
  }
}

TEST(Generate, UncorrelatedGaussianHasSmallSampleCorrelation)
{
  RelationshipSpec spec{ Family::bivariate_gaussian, 0.0, 10000, 5 };
  const SampleSet samples = generate(spec);
  const Eigen::VectorXd x = samples.data().col(0);
  const Eigen::VectorXd y = samples.data().col(1);
  const double n = static_cast<double>(samples.n());
  const double cx = x.mean();
  const double cy = y.mean();
  const double cov = ((x.array() - cx) * (y.array() - cy)).sum() / n;
  const double sx = std::sqrt((x.array() - cx).square().sum() / n);
  const double sy = std::sqrt((y.array() - cy).square().sum() / n);
  EXPECT_LE(std::abs(cov / (sx * sy)), 0.05);
}

TEST(Generate, RejectsInvalidSpecs)
{
  EXPECT_THROW(generate({ Family::linear, 0.0, 100, 1 }), InvalidSpecError);
  EXPECT_THROW(generate({ Family::linear, -1.0, 100, 1 }), InvalidSpecError);
  EXPECT_THROW(generate({ Family::bivariate_gaussian, 1.0, 100, 1 }),
               InvalidSpecError);
  EXPECT_THROW(generate({ Family::linear, 1.0, 1, 1 }), InvalidSpecError);
}

TEST(FamilyNames, RoundTrip)
{
  for (Family f : { Family::linear, Family::quadratic, Family::cubic,
                    Family::sine, Family::sine_high_freq, Family::sqrt_shape,
                    Family::bivariate_gaussian,
                    Family::independent_uniform }) {
    EXPECT_EQ(parse_family(family_name(f)), f);
  }
  EXPECT_THROW(parse_family("nope"), InvalidSpecError);
}

TEST(TrueMi, GaussianClosedForm)
{
  EXPECT_NEAR(true_mi({ Family::bivariate_gaussian, 0.9, 100, 1 }), 0.830366,
              1e-5);
  EXPECT_DOUBLE_EQ(true_mi({ Family::bivariate_gaussian, 0.9, 100, 1 }),
                   true_mi({ Family::bivariate_gaussian, -0.9, 100, 1 }));
  EXPECT_DOUBLE_EQ(true_mi({ Family::independent_uniform, 1.0, 100, 1 }),
                   0.0);
}

TEST(TrueMi, LinearUnitNoiseIsTriangularEntropy)
{
  // Y = X + U(0,1) has the symmetric triangular density on [0,2], whose
  // entropy is exactly 1/2 nat, and H(Y|X) = log(1) = 0
  EXPECT_NEAR(true_mi({ Family::linear, 1.0, 100, 1 }), 0.5, 2e-4);
}

TEST(TrueMi, SmallNoiseLimitApproachesLogTheta)
{
  const double value = true_mi({ Family::linear, 1e-4, 100, 1 });
  EXPECT_NEAR(value, 9.2103, 0.01);
}

TEST(TrueMi, StrictlyDecreasingInTheta)
{
  for (Family family : { Family::linear, Family::quadratic, Family::cubic,
                         Family::sine, Family::sine_high_freq,
                         Family::sqrt_shape }) {
    double previous = std::numeric_limits<double>::infinity();
    for (int e = -10; e <= 0; ++e) {
      const double theta = std::ldexp(1.0, e);
      const double value = true_mi({ family, theta, 100, 1 });
      EXPECT_LT(value, previous)
        << family_name(family) << " at theta=" << theta;
      previous = value;
    }
  }
}

TEST(FixtureCsv, HeaderFormatAndRoundTrip)
{
  RelationshipSpec spec{ Family::sine, 0.5, 25, 7 };
  const SampleSet samples = generate(spec);
  std::ostringstream out;
  write_fixture_csv(samples, out);
  const std::string text = out.str();
  EXPECT_EQ(text.rfind("x,y\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 26);
  EXPECT_EQ(text.find('\r'), std::string::npos);

  std::istringstream in(text);
  const auto [matrix, labels] = read_csv_matrix(in);
  ASSERT_EQ(labels.size(), 2u);
  EXPECT_EQ(labels[0], "x");
  EXPECT_EQ(labels[1], "y");
  // 17 significant digits round-trip doubles exactly
  EXPECT_EQ(matrix, samples.data());
}

#include "lgmi/neighbors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace lgmi;

namespace {

SampleSet line_points()
{
  Eigen::MatrixXd raw(3, 1);
  raw << 0.0, 1.0, 2.0;
  return SampleSet(raw);
}

SampleSet random_uniform(Eigen::Index n, Eigen::Index d, std::uint64_t seed)
{
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd raw(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      raw(i, j) = unif(engine);
    }
  }
  return SampleSet(raw);
}

// exhaustive scan ordered by (distance, id)
std::vector<Neighbor> brute_force_knn(const SampleSet& samples,
                                      const Eigen::VectorXd& q,
                                      int k,
                                      Metric metric,
                                      std::optional<Eigen::Index> exclude)
{
  std::vector<Neighbor> all;
  for (Eigen::Index i = 0; i < samples.n(); ++i) {
    if (exclude && *exclude == i) {
      continue;
    }
    const Eigen::VectorXd diff = samples.data().row(i).transpose() - q;
    const double dist = metric == Metric::l2
                          ? diff.norm()
                          : diff.cwiseAbs().maxCoeff();
    all.push_back({ i, dist });
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return std::tie(a.distance, a.id) < std::tie(b.distance, b.id);
  });
  all.resize(std::min<size_t>(all.size(), static_cast<size_t>(k)));
  return all;
}

}  // namespace

TEST(KnnQuery, HandCheckableLine)
{
  const SampleSet samples = line_points();
  NeighborIndex index(samples, Metric::l2);
  const auto hits = knn_query(index, Eigen::VectorXd::Zero(1), 2);
  ASSERT_EQ(hits.size(), 2u);
  EXPECT_EQ(hits[0].id, 1);
  EXPECT_DOUBLE_EQ(hits[0].distance, 1.0);
  EXPECT_EQ(hits[1].id, 2);
  EXPECT_DOUBLE_EQ(hits[1].distance, 2.0);
}

TEST(KnnQuery, MemberPointExcludesItself)
{
  const SampleSet samples = line_points();
  NeighborIndex index(samples, Metric::l2);
  const auto hits = knn_query(index, Eigen::VectorXd::Constant(1, 1.0), 1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_GT(hits[0].distance, 0.0);
  EXPECT_EQ(hits[0].id, 0);  // ids 0 and 2 tie at distance 1; lower id wins
}

TEST(KnnQuery, KTooLargeForMemberPoint)
{
  const SampleSet samples = line_points();
  NeighborIndex index(samples, Metric::l2);
  EXPECT_THROW(knn_query(index, Eigen::VectorXd::Zero(1), 3), KTooLargeError);
  EXPECT_NO_THROW(knn_query(index, Eigen::VectorXd::Constant(1, 0.4), 3));
  EXPECT_THROW(knn_query(index, Eigen::VectorXd::Constant(1, 0.4), 4),
               KTooLargeError);
}

TEST(KnnQuery, MatchesExhaustiveScanExactly)
{
  const SampleSet samples = random_uniform(100, 2, 42);
  for (Metric metric : { Metric::l2, Metric::linf }) {
    NeighborIndex index(samples, metric);
    std::mt19937_64 engine(43);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd q(2);
      q << unif(engine), unif(engine);
      const auto expected = brute_force_knn(samples, q, 5, metric, {});
      const auto actual = index.query(q, 5);
      ASSERT_EQ(actual.size(), expected.size());
      for (size_t t = 0; t < actual.size(); ++t) {
        EXPECT_EQ(actual[t].id, expected[t].id);
        EXPECT_DOUBLE_EQ(actual[t].distance, expected[t].distance);
      }
    }
    // member-point queries with self-exclusion
    for (Eigen::Index i = 0; i < samples.n(); i += 7) {
      const auto expected = brute_force_knn(
        samples, samples.data().row(i).transpose(), 5, metric, i);
      const auto actual = index.query_point(i, 5);
      ASSERT_EQ(actual.size(), expected.size());
      for (size_t t = 0; t < actual.size(); ++t) {
        EXPECT_EQ(actual[t].id, expected[t].id);
      }
    }
  }
}

TEST(KnnQuery, DistancesNonDecreasing)
{
  const SampleSet samples = random_uniform(500, 3, 5);
  NeighborIndex index(samples, Metric::l2);
  const auto hits = index.query_point(0, 20);
  for (size_t t = 1; t < hits.size(); ++t) {
    EXPECT_LE(hits[t - 1].distance, hits[t].distance);
  }
}

TEST(KnnQuery, PermutationInvariantUpToTieBreaking)
{
  const SampleSet samples = random_uniform(200, 2, 9);
  NeighborIndex index(samples, Metric::l2);

  std::vector<Eigen::Index> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(10));
  Eigen::MatrixXd shuffled(200, 2);
  for (Eigen::Index i = 0; i < 200; ++i) {
    shuffled.row(i) = samples.data().row(perm[static_cast<size_t>(i)]);
  }
  const SampleSet shuffled_set(shuffled);
  NeighborIndex shuffled_index(shuffled_set, Metric::l2);

  std::mt19937_64 engine(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd q(2);
    q << unif(engine), unif(engine);
    const auto a = index.query(q, 4);
    const auto b = shuffled_index.query(q, 4);
    ASSERT_EQ(a.size(), b.size());
    for (size_t t = 0; t < a.size(); ++t) {
      EXPECT_DOUBLE_EQ(a[t].distance, b[t].distance);
      EXPECT_EQ(a[t].id, perm[static_cast<size_t>(b[t].id)]);
    }
  }
}

TEST(CountWithin, MatchesExhaustiveStrictCount)
{
  const SampleSet samples = random_uniform(300, 2, 21);
  NeighborIndex index(samples, Metric::linf);
  for (Eigen::Index i = 0; i < samples.n(); i += 13) {
    const Eigen::VectorXd q = samples.data().row(i).transpose();
    for (double radius : { 0.05, 0.2, 0.7 }) {
      Eigen::Index expected = 0;
      for (Eigen::Index j = 0; j < samples.n(); ++j) {
        if (j == i) {
          continue;
        }
        const double dist =
          (samples.data().row(j).transpose() - q).cwiseAbs().maxCoeff();
        if (dist < radius) {
          ++expected;
        }
      }
      EXPECT_EQ(index.count_within(q, radius, i), expected);
    }
  }
}

TEST(SelectBandwidth, GlobalMeanOnEquallySpacedLine)
{
  const auto bw =
    select_bandwidth(line_points(), 1, BandwidthRule::global_mean);
  ASSERT_EQ(bw.size(), 3u);
  for (const auto& b : bw) {
    EXPECT_DOUBLE_EQ(b.diag()(0), 1.0);
  }
}

TEST(SelectBandwidth, PerPointOnEquallySpacedLine)
{
  const auto bw = select_bandwidth(line_points(), 2, BandwidthRule::per_point);
  ASSERT_EQ(bw.size(), 3u);
  EXPECT_DOUBLE_EQ(bw[0].diag()(0), 2.0);
  EXPECT_DOUBLE_EQ(bw[1].diag()(0), 1.0);
  EXPECT_DOUBLE_EQ(bw[2].diag()(0), 2.0);
}

TEST(SelectBandwidth, GlobalMeanMatchesBruteForce)
{
  const SampleSet samples = random_uniform(2500, 2, 77);
  const auto bw = select_bandwidth(samples, 5, BandwidthRule::global_mean);

  double mean = 0.0;
  for (Eigen::Index i = 0; i < samples.n(); ++i) {
    const auto hits = brute_force_knn(
      samples, samples.data().row(i).transpose(), 5, Metric::l2, i);
    mean += hits.back().distance;
  }
  mean /= static_cast<double>(samples.n());
  EXPECT_NEAR(bw[0].diag()(0), mean, 1e-12);
  EXPECT_NEAR(bw[1234].diag()(1), mean, 1e-12);
}

TEST(SelectBandwidth, DuplicatesFallBackToNonzeroDistance)
{
  Eigen::MatrixXd raw(4, 1);
  raw << 0.0, 0.0, 1.0, 3.0;
  const auto bw =
    select_bandwidth(SampleSet(raw), 1, BandwidthRule::per_point);
  // points 0 and 1 coincide; their 1-NN distance is 0, replaced by the
  // nearest larger nonzero distance (1.0 to point 2)
  EXPECT_DOUBLE_EQ(bw[0].diag()(0), 1.0);
  EXPECT_DOUBLE_EQ(bw[1].diag()(0), 1.0);
  EXPECT_DOUBLE_EQ(bw[2].diag()(0), 1.0);
  EXPECT_DOUBLE_EQ(bw[3].diag()(0), 2.0);
}

TEST(SelectBandwidth, AllPointsIdenticalIsDegenerate)
{
  Eigen::MatrixXd raw = Eigen::MatrixXd::Ones(5, 2);
  EXPECT_THROW(select_bandwidth(SampleSet(raw), 2, BandwidthRule::per_point),
               DegenerateDataError);
}

TEST(SelectBandwidth, KTooLarge)
{
  EXPECT_THROW(select_bandwidth(line_points(), 3, BandwidthRule::per_point),
               KTooLargeError);
  EXPECT_THROW(select_bandwidth(line_points(), 0, BandwidthRule::per_point),
               KTooLargeError);
}

// With fixed k the mean k-NN distance shrinks as N grows; majority vote over
// ten seeds on doubling N.
TEST(SelectBandwidth, GlobalMeanShrinksWithSampleSize)
{
  int votes = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto small = select_bandwidth(random_uniform(500, 2, 100 + seed), 5,
                                        BandwidthRule::global_mean);
    const auto large = select_bandwidth(random_uniform(1000, 2, 200 + seed),
                                        5, BandwidthRule::global_mean);
    if (large[0].diag()(0) < small[0].diag()(0)) {
      ++votes;
    }
  }
  EXPECT_GT(votes, 5);
}

#pragma once

#include "lgmi/core.hpp"
#include "lgmi/local_gaussian.hpp"
#include "lgmi/neighbors.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <utility>
#include <vector>

namespace lgmi {

//! Digamma via upward recurrence into the asymptotic regime. Absolute
//! accuracy is better than 1e-12 for positive arguments.
inline double digamma(double x)
{
  if (!(x > 0.0)) {
    throw InvalidSpecError("digamma requires a positive argument");
  }
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 -
                            inv2 * (1.0 / 252.0 -
                                    inv2 * (1.0 / 240.0 -
                                            inv2 * (1.0 / 132.0 -
                                                    inv2 * (691.0 /
                                                            32760.0))))));
  return result;
}

//! log volume of the d-dimensional unit L2 ball.
inline double log_unit_ball_volume(Eigen::Index d)
{
  return 0.5 * static_cast<double>(d) * std::log(M_PI) -
         std::lgamma(0.5 * static_cast<double>(d) + 1.0);
}

//! Options shared by the LGDE-based estimators.
struct EstimatorOptions
{
  int k = 5;                                      // bandwidth neighbor rank
  BandwidthRule rule = BandwidthRule::per_point;  // benchmark default
  int truncation_k = 0;                           // 0 means 4 * k
  bool standardize = true;
  int jobs = 0;  // 0 picks the hardware thread count
  OptimizerOptions optimizer;

  int effective_truncation() const
  {
    return truncation_k > 0 ? truncation_k : 4 * k;
  }
};

namespace detail {

struct ColumnScaling
{
  Eigen::VectorXd mean;
  Eigen::VectorXd sigma;
  double log_sigma_sum = 0.0;
};

//! Shift/scale every column to zero mean, unit variance. Entropy computed on
//! the result is corrected back by adding log_sigma_sum.
inline std::pair<SampleSet, ColumnScaling> standardize_columns(
  const SampleSet& samples)
{
  const Eigen::MatrixXd& x = samples.data();
  const double n = static_cast<double>(x.rows());
  ColumnScaling scaling;
  scaling.mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - scaling.mean.transpose();
  scaling.sigma =
    (centered.array().square().colwise().sum() / (n - 1.0)).sqrt();
  for (Eigen::Index j = 0; j < scaling.sigma.size(); ++j) {
    if (!(scaling.sigma(j) > 0.0) || !std::isfinite(scaling.sigma(j))) {
      throw DegenerateDataError("column " + std::to_string(j) +
                                " has zero variance");
    }
  }
  scaling.log_sigma_sum = scaling.sigma.array().log().sum();
  centered.array().rowwise() /= scaling.sigma.transpose().array();
  return { SampleSet(std::move(centered), samples.column_labels()), scaling };
}

struct Timer
{
  std::chrono::steady_clock::time_point start =
    std::chrono::steady_clock::now();
  double seconds() const
  {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
      .count();
  }
};

}  // namespace detail

//! Entropy by local Gaussian density estimation: the negative mean of the
//! per-point log-densities, with the standardization correction added back.
inline EstimateReport estimate_entropy_lgde(const SampleSet& samples,
                                            const EstimatorOptions& opts = {})
{
  detail::Timer timer;
  const int trunc = opts.effective_truncation();
  if (samples.n() <= std::max(opts.k, trunc)) {
    throw KTooLargeError("need N > max(k, truncation_k)");
  }

  double correction = 0.0;
  DensitySummary summary;
  if (opts.standardize) {
    auto [z, scaling] = detail::standardize_columns(samples);
    summary = lgde_density_at_samples(z, opts.k, opts.rule, trunc,
                                      opts.optimizer, opts.jobs);
    correction = scaling.log_sigma_sum;
  } else {
    summary = lgde_density_at_samples(samples, opts.k, opts.rule, trunc,
                                      opts.optimizer, opts.jobs);
  }

  EstimateReport report;
  report.value = -summary.log_density.mean() + correction;
  report.estimator = EstimatorKind::lgde_entropy;
  report.n_samples = samples.n();
  report.dim_x = samples.dim();
  report.k = opts.k;
  report.n_converged = summary.n_converged;
  report.n_fallback = summary.n_fallback;
  report.wall_time_s = timer.seconds();
  return report;
}

//! A joint sample set with a column partition into an x block and a y block.
class MiTask
{
public:
  MiTask(SampleSet joint,
         std::vector<Eigen::Index> x_cols,
         std::vector<Eigen::Index> y_cols)
    : joint_(std::move(joint))
    , x_cols_(std::move(x_cols))
    , y_cols_(std::move(y_cols))
  {
    if (x_cols_.empty() || y_cols_.empty()) {
      throw InvalidSpecError("both column blocks must be non-empty");
    }
    std::vector<bool> seen(static_cast<size_t>(joint_.dim()), false);
    auto mark = [&](const std::vector<Eigen::Index>& cols) {
      for (auto c : cols) {
        if (c < 0 || c >= joint_.dim() || seen[static_cast<size_t>(c)]) {
          throw InvalidSpecError(
            "column blocks must partition the joint columns");
        }
        seen[static_cast<size_t>(c)] = true;
      }
    };
    mark(x_cols_);
    mark(y_cols_);
    for (bool s : seen) {
      if (!s) {
        throw InvalidSpecError(
          "column blocks must cover every joint column");
      }
    }
  }

  const SampleSet& joint() const { return joint_; }
  const std::vector<Eigen::Index>& x_cols() const { return x_cols_; }
  const std::vector<Eigen::Index>& y_cols() const { return y_cols_; }
  SampleSet x_view() const { return joint_.select_columns(x_cols_); }
  SampleSet y_view() const { return joint_.select_columns(y_cols_); }

private:
  SampleSet joint_;
  std::vector<Eigen::Index> x_cols_;
  std::vector<Eigen::Index> y_cols_;
};

//! Mutual information as H(x) + H(y) - H(x,y), each term estimated by LGDE
//! with a bandwidth selected from its own marginal or joint geometry.
inline EstimateReport estimate_mi_lgde(const MiTask& task,
                                       const EstimatorOptions& opts = {})
{
  detail::Timer timer;
  const EstimateReport hx = estimate_entropy_lgde(task.x_view(), opts);
  const EstimateReport hy = estimate_entropy_lgde(task.y_view(), opts);
  const EstimateReport hxy = estimate_entropy_lgde(task.joint(), opts);

  EstimateReport report;
  report.value = hx.value + hy.value - hxy.value;
  report.estimator = EstimatorKind::lgde_mi;
  report.n_samples = task.joint().n();
  report.dim_x = static_cast<Eigen::Index>(task.x_cols().size());
  report.dim_y = static_cast<Eigen::Index>(task.y_cols().size());
  report.k = opts.k;
  report.n_converged = hx.n_converged + hy.n_converged + hxy.n_converged;
  report.n_fallback = hx.n_fallback + hy.n_fallback + hxy.n_fallback;
  report.wall_time_s = timer.seconds();
  return report;
}

//! Kozachenko-Leonenko entropy: psi(N) - psi(k) + log V_d +
//! (d/N) sum_i log eps_i with eps_i the L2 distance to the k-th neighbor.
//! Columns are standardized first and the estimate corrected back.
inline EstimateReport estimate_entropy_kl(const SampleSet& samples, int k)
{
  detail::Timer timer;
  const Eigen::Index n = samples.n();
  const Eigen::Index d = samples.dim();
  if (k < 1 || static_cast<Eigen::Index>(k) >= n) {
    throw KTooLargeError("k=" + std::to_string(k) + " with N=" +
                         std::to_string(n));
  }
  auto [z, scaling] = detail::standardize_columns(samples);
  NeighborIndex index(z, Metric::l2);
  double log_dist_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eps = index.query_point(i, k).back().distance;
    log_dist_sum += std::log(eps);
  }
  EstimateReport report;
  report.value = digamma(static_cast<double>(n)) -
                 digamma(static_cast<double>(k)) + log_unit_ball_volume(d) +
                 static_cast<double>(d) / static_cast<double>(n) *
                   log_dist_sum +
                 scaling.log_sigma_sum;
  report.estimator = EstimatorKind::kl_entropy;
  report.n_samples = n;
  report.dim_x = d;
  report.k = k;
  report.wall_time_s = timer.seconds();
  return report;
}

//! The first Kraskov-Stoegbauer-Grassberger estimator: max-norm k-NN balls in
//! the joint space, strict marginal counts within the joint radius.
inline EstimateReport estimate_mi_ksg(const MiTask& task, int k)
{
  detail::Timer timer;
  const Eigen::Index n = task.joint().n();
  if (k < 1 || static_cast<Eigen::Index>(k) >= n) {
    throw KTooLargeError("k=" + std::to_string(k) + " with N=" +
                         std::to_string(n));
  }
  auto [z, scaling] = detail::standardize_columns(task.joint());
  (void)scaling;  // MI is invariant under per-column affine maps
  const SampleSet zx = z.select_columns(task.x_cols());
  const SampleSet zy = z.select_columns(task.y_cols());
  NeighborIndex joint_index(z, Metric::linf);
  NeighborIndex x_index(zx, Metric::linf);
  NeighborIndex y_index(zy, Metric::linf);

  double psi_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double radius = joint_index.query_point(i, k).back().distance;
    const auto nx = x_index.count_within(zx.data().row(i).transpose(),
                                         radius, i);
    const auto ny = y_index.count_within(zy.data().row(i).transpose(),
                                         radius, i);
    psi_sum += digamma(static_cast<double>(nx + 1)) +
               digamma(static_cast<double>(ny + 1));
  }

  EstimateReport report;
  report.value = digamma(static_cast<double>(k)) +
                 digamma(static_cast<double>(n)) -
                 psi_sum / static_cast<double>(n);
  report.estimator = EstimatorKind::ksg;
  report.n_samples = n;
  report.dim_x = static_cast<Eigen::Index>(task.x_cols().size());
  report.dim_y = static_cast<Eigen::Index>(task.y_cols().size());
  report.k = k;
  report.wall_time_s = timer.seconds();
  return report;
}

//! Mutual information from three Kozachenko-Leonenko entropies. Used as a
//! second kNN baseline in the benchmark sweeps.
inline EstimateReport estimate_mi_kl(const MiTask& task, int k)
{
  detail::Timer timer;
  const EstimateReport hx = estimate_entropy_kl(task.x_view(), k);
  const EstimateReport hy = estimate_entropy_kl(task.y_view(), k);
  const EstimateReport hxy = estimate_entropy_kl(task.joint(), k);
  EstimateReport report;
  report.value = hx.value + hy.value - hxy.value;
  report.estimator = EstimatorKind::kl_mi;
  report.n_samples = task.joint().n();
  report.dim_x = static_cast<Eigen::Index>(task.x_cols().size());
  report.dim_y = static_cast<Eigen::Index>(task.y_cols().size());
  report.k = k;
  report.wall_time_s = timer.seconds();
  return report;
}

}  // namespace lgmi

#pragma once

#include "lgmi/core.hpp"
#include "lgmi/neighbors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace lgmi {

//! Settings for the per-point modified-Newton maximizer.
struct OptimizerOptions
{
  int max_iters = 200;
  double grad_tol = 1e-6;        // infinity norm of the gradient
  double ftol = 1e-9;            // relative objective change
  double wolfe_c1 = 1e-4;        // sufficient-increase constant
  double wolfe_c2 = 0.9;         // curvature constant
  int max_line_search = 40;      // backtracking trials per iteration
  double diag_floor_rel = 1e-6;  // floor on L_jj, relative to the bandwidth
  bool record_trace = false;     // keep objective values of accepted iterates
};

//! One localized likelihood instance: the query point, the truncated
//! summation set (which contains the query itself), the Gaussian kernel
//! weights of those points, and the bandwidth they were computed with.
//! `sample_count` is the full N of the originating sample set; the data term
//! keeps its 1/N prefactor under truncation.
class LocalLikelihoodProblem
{
public:
  LocalLikelihoodProblem(Eigen::VectorXd query,
                         Eigen::MatrixXd neighbor_points,
                         Eigen::VectorXd kernel_weights,
                         BandwidthMatrix bandwidth,
                         Eigen::Index sample_count)
    : query_(std::move(query))
    , points_(std::move(neighbor_points))
    , weights_(std::move(kernel_weights))
    , bandwidth_(std::move(bandwidth))
    , sample_count_(sample_count)
  {
    if (points_.rows() < 1 || points_.cols() != query_.size() ||
        weights_.size() != points_.rows() ||
        bandwidth_.dim() != query_.size()) {
      throw DimensionMismatchError("inconsistent local likelihood problem");
    }
    if (sample_count_ < points_.rows()) {
      throw InvalidSpecError("sample_count below summation set size");
    }
    for (Eigen::Index i = 0; i < weights_.size(); ++i) {
      if (!(weights_(i) > 0.0)) {
        throw DegenerateDataError("kernel weights must be strictly positive");
      }
    }
  }

  const Eigen::VectorXd& query() const { return query_; }
  const Eigen::MatrixXd& neighbor_points() const { return points_; }
  const Eigen::VectorXd& kernel_weights() const { return weights_; }
  const BandwidthMatrix& bandwidth() const { return bandwidth_; }
  Eigen::Index sample_count() const { return sample_count_; }
  Eigen::Index dim() const { return query_.size(); }
  Eigen::Index set_size() const { return points_.rows(); }

private:
  Eigen::VectorXd query_;
  Eigen::MatrixXd points_;
  Eigen::VectorXd weights_;
  BandwidthMatrix bandwidth_;
  Eigen::Index sample_count_;
};

//! log of the Gaussian product kernel N_d(p; center, diag(h^2)).
inline double log_kernel_weight(const Eigen::VectorXd& p,
                                const Eigen::VectorXd& center,
                                const BandwidthMatrix& bandwidth)
{
  const Eigen::VectorXd& h = bandwidth.diag();
  double v = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double u = (p(j) - center(j)) / h(j);
    v += -0.5 * (log_2pi + u * u) - std::log(h(j));
  }
  return v;
}

//! Builds the truncated problem for one member point of `samples`. The
//! summation set is the query row plus its nearest neighbors under L2; its
//! total size is max(truncation_k + 1, d + 2), capped at N. Truncation is by
//! count, so tiny-weight points are kept deliberately.
inline LocalLikelihoodProblem build_problem(const SampleSet& samples,
                                            const NeighborIndex& index,
                                            Eigen::Index query_index,
                                            const BandwidthMatrix& bandwidth,
                                            int truncation_k)
{
  const Eigen::Index n = samples.n();
  const Eigen::Index d = samples.dim();
  if (truncation_k < 1 || static_cast<Eigen::Index>(truncation_k) > n - 1) {
    throw KTooLargeError("truncation_k=" + std::to_string(truncation_k) +
                         " with N=" + std::to_string(n));
  }
  const Eigen::Index total =
    std::min<Eigen::Index>(std::max<Eigen::Index>(truncation_k + 1, d + 2), n);
  const auto hits =
    index.query_point(query_index, static_cast<int>(total - 1));

  Eigen::MatrixXd points(total, d);
  Eigen::VectorXd weights(total);
  const Eigen::VectorXd query = samples.data().row(query_index).transpose();
  points.row(0) = query.transpose();
  for (Eigen::Index t = 0; t < total - 1; ++t) {
    points.row(t + 1) = samples.data().row(hits[static_cast<size_t>(t)].id);
  }
  for (Eigen::Index i = 0; i < total; ++i) {
    weights(i) = clamped_exp(
      log_kernel_weight(points.row(i).transpose(), query, bandwidth));
  }
  return LocalLikelihoodProblem(query, std::move(points), std::move(weights),
                                bandwidth, n);
}

//! Convenience overload that builds its own neighbor index.
inline LocalLikelihoodProblem build_problem(const SampleSet& samples,
                                            Eigen::Index query_index,
                                            const BandwidthMatrix& bandwidth,
                                            int truncation_k)
{
  NeighborIndex index(samples, Metric::l2);
  return build_problem(samples, index, query_index, bandwidth, truncation_k);
}

namespace detail {

inline Eigen::Index param_count(Eigen::Index d)
{
  return d + d * (d + 1) / 2;
}

//! Packing order: mu first, then the lower triangle of L column by column.
inline Eigen::VectorXd pack_params(const Eigen::VectorXd& mu,
                                   const Eigen::MatrixXd& L)
{
  const Eigen::Index d = mu.size();
  Eigen::VectorXd theta(param_count(d));
  theta.head(d) = mu;
  Eigen::Index t = d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) {
      theta(t++) = L(i, j);
    }
  }
  return theta;
}

inline void unpack_params(const Eigen::VectorXd& theta,
                          Eigen::VectorXd& mu,
                          Eigen::MatrixXd& L)
{
  const Eigen::Index d = mu.size();
  mu = theta.head(d);
  Eigen::Index t = d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) {
      L(i, j) = theta(t++);
    }
  }
}

//! Objective value at raw (mu, L); -inf when L has a non-positive diagonal,
//! which lets the line search reject such trial points.
inline double eval_objective(const LocalLikelihoodProblem& prob,
                             const Eigen::VectorXd& mu,
                             const Eigen::MatrixXd& L)
{
  const Eigen::Index d = prob.dim();
  const Eigen::Index m = prob.set_size();
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(L(j, j) > 0.0)) {
      return -std::numeric_limits<double>::infinity();
    }
  }
  const double inv_n = 1.0 / static_cast<double>(prob.sample_count());
  const Eigen::VectorXd& w = prob.kernel_weights();
  const double w_total = w.sum();

  Eigen::MatrixXd diffs =
    (prob.neighbor_points().rowwise() - mu.transpose()).transpose();  // d x m
  Eigen::MatrixXd z = L.triangularView<Eigen::Lower>().solve(diffs);
  double quad = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    quad += w(i) * z.col(i).squaredNorm();
  }
  const double log_det_half = L.diagonal().array().log().sum();
  const double data_term =
    inv_n * (-w_total * (0.5 * static_cast<double>(d) * log_2pi +
                         log_det_half) -
             0.5 * quad);

  // penalty: N_d(x; mu, diag(h^2) + L L^T), the closed form of the
  // kernel-vs-model convolution integral
  Eigen::MatrixXd a = L * L.transpose();
  a.diagonal() += prob.bandwidth().kernel_variances();
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    return -std::numeric_limits<double>::infinity();
  }
  const Eigen::VectorXd r = prob.query() - mu;
  const Eigen::VectorXd zr =
    llt.matrixL().solve(r);
  const double log_pen = -0.5 * static_cast<double>(d) * log_2pi -
                         Eigen::MatrixXd(llt.matrixL())
                           .diagonal()
                           .array()
                           .log()
                           .sum() -
                         0.5 * zr.squaredNorm();
  return data_term - clamped_exp(log_pen);
}

//! Analytic gradient at raw (mu, L), packed as in pack_params.
inline Eigen::VectorXd eval_gradient(const LocalLikelihoodProblem& prob,
                                     const Eigen::VectorXd& mu,
                                     const Eigen::MatrixXd& L)
{
  const Eigen::Index d = prob.dim();
  const Eigen::Index m = prob.set_size();
  const double inv_n = 1.0 / static_cast<double>(prob.sample_count());
  const Eigen::VectorXd& w = prob.kernel_weights();
  const double w_total = w.sum();

  Eigen::MatrixXd diffs =
    (prob.neighbor_points().rowwise() - mu.transpose()).transpose();  // d x m
  Eigen::MatrixXd z = L.triangularView<Eigen::Lower>().solve(diffs);
  Eigen::MatrixXd v =
    L.transpose().triangularView<Eigen::Upper>().solve(z);  // Sigma^-1 diffs

  Eigen::VectorXd grad_mu =
    inv_n * L.transpose().triangularView<Eigen::Upper>().solve(
              Eigen::VectorXd(z * w));
  Eigen::MatrixXd grad_l = inv_n * (v * w.asDiagonal() * z.transpose());
  for (Eigen::Index j = 0; j < d; ++j) {
    grad_l(j, j) -= inv_n * w_total / L(j, j);
  }

  Eigen::MatrixXd a = L * L.transpose();
  a.diagonal() += prob.bandwidth().kernel_variances();
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  const Eigen::VectorXd r = prob.query() - mu;
  const Eigen::VectorXd g = llt.solve(r);
  const double log_pen = -0.5 * static_cast<double>(d) * log_2pi -
                         Eigen::MatrixXd(llt.matrixL())
                           .diagonal()
                           .array()
                           .log()
                           .sum() -
                         0.5 * r.dot(g);
  const double pen = clamped_exp(log_pen);
  grad_mu -= pen * g;
  const Eigen::MatrixXd a_inv_l = llt.solve(L);
  grad_l -= pen * (g * (g.transpose() * L) - a_inv_l);

  Eigen::VectorXd theta(param_count(d));
  theta.head(d) = grad_mu;
  Eigen::Index t = d;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) {
      theta(t++) = grad_l(i, j);
    }
  }
  return theta;
}

//! Hessian by central differences of the analytic gradient, symmetrized.
//! Steps on the L diagonal are capped so trial factors stay positive.
inline Eigen::MatrixXd eval_hessian(const LocalLikelihoodProblem& prob,
                                    const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& L)
{
  const Eigen::Index d = prob.dim();
  const Eigen::Index p = param_count(d);
  const Eigen::VectorXd theta = pack_params(mu, L);
  Eigen::VectorXd mu_t = mu;
  Eigen::MatrixXd l_t = L;
  Eigen::MatrixXd hess(p, p);
  const double base = 6e-6;  // ~cbrt(machine epsilon)
  Eigen::Index t = d;
  std::vector<bool> is_diag(static_cast<size_t>(p), false);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = j; i < d; ++i) {
      if (i == j) {
        is_diag[static_cast<size_t>(t)] = true;
      }
      ++t;
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    double step = base * std::max(1.0, std::abs(theta(j)));
    if (is_diag[static_cast<size_t>(j)]) {
      step = std::min(step, 0.45 * theta(j));
    }
    Eigen::VectorXd tp = theta;
    tp(j) += step;
    unpack_params(tp, mu_t, l_t);
    const Eigen::VectorXd g_plus = eval_gradient(prob, mu_t, l_t);
    tp(j) = theta(j) - step;
    unpack_params(tp, mu_t, l_t);
    const Eigen::VectorXd g_minus = eval_gradient(prob, mu_t, l_t);
    hess.col(j) = (g_plus - g_minus) / (2.0 * step);
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace detail

//! The reduced local likelihood: kernel-weighted Gaussian log-likelihood over
//! the summation set (1/N prefactor) minus the closed-form penalty
//! N_d(x; mu, diag(h^2) + Sigma).
inline double local_likelihood(const LocalLikelihoodProblem& problem,
                               const GaussianParams& params)
{
  if (params.dim() != problem.dim()) {
    throw DimensionMismatchError("parameter dimension mismatch");
  }
  return detail::eval_objective(problem, params.mean(), params.chol_factor());
}

//! Analytic gradient with respect to (mu, vech(L)); vech takes the lower
//! triangle of L column by column.
inline Eigen::VectorXd local_likelihood_gradient(
  const LocalLikelihoodProblem& problem,
  const GaussianParams& params)
{
  if (params.dim() != problem.dim()) {
    throw DimensionMismatchError("parameter dimension mismatch");
  }
  return detail::eval_gradient(problem, params.mean(), params.chol_factor());
}

//! Symmetric Hessian over (mu, vech(L)), computed as central differences of
//! the analytic gradient.
inline Eigen::MatrixXd local_likelihood_hessian(
  const LocalLikelihoodProblem& problem,
  const GaussianParams& params)
{
  if (params.dim() != problem.dim()) {
    throw DimensionMismatchError("parameter dimension mismatch");
  }
  return detail::eval_hessian(problem, params.mean(), params.chol_factor());
}

enum class FitStatus
{
  converged,        // gradient norm reached grad_tol
  max_iters,        // iteration cap, stalled objective, or line-search failure
  fallback_kernel,  // optimizer produced no finite log-density
};

//! Result of one local fit. `params` always holds the best iterate; when
//! status is fallback_kernel the reported log-density comes from the
//! Gaussian kernel density estimate over the summation set instead.
struct LocalGaussianFit
{
  GaussianParams params;
  double log_density_at_query = 0.0;
  FitStatus status = FitStatus::max_iters;
  int iterations = 0;
  double final_grad_norm = 0.0;
  double objective = 0.0;
  std::vector<double> trace;  // accepted objective values, when recorded
};

//! Maximizes the local likelihood by modified Newton ascent: the negated
//! Hessian is shifted by a doubling multiple of the identity until it
//! factorizes, and steps are backtracked from 1 until they satisfy the
//! strong Wolfe conditions. Default initialization puts mu at the query and
//! L at the Cholesky factor of the kernel-weighted neighbor covariance.
inline LocalGaussianFit fit_local_gaussian(
  const LocalLikelihoodProblem& problem,
  const OptimizerOptions& opts = {},
  const std::optional<GaussianParams>& init = {})
{
  const Eigen::Index d = problem.dim();
  const Eigen::Index m = problem.set_size();
  const Eigen::VectorXd floor_vec =
    opts.diag_floor_rel * problem.bandwidth().diag();

  Eigen::VectorXd mu(d);
  Eigen::MatrixXd l_chol = Eigen::MatrixXd::Zero(d, d);
  if (init) {
    if (init->dim() != d) {
      throw DimensionMismatchError("init dimension mismatch");
    }
    mu = init->mean();
    l_chol = init->chol_factor();
  } else {
    mu = problem.query();
    const Eigen::VectorXd& w = problem.kernel_weights();
    const double w_total = w.sum();
    const Eigen::VectorXd wmean =
      problem.neighbor_points().transpose() * w / w_total;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::VectorXd c =
        problem.neighbor_points().row(i).transpose() - wmean;
      cov.noalias() += w(i) * c * c.transpose();
    }
    cov /= w_total;
    cov.diagonal().array() +=
      1e-8 * cov.trace() / static_cast<double>(d);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success &&
        Eigen::MatrixXd(llt.matrixL()).diagonal().minCoeff() > 0.0) {
      l_chol = llt.matrixL();
    } else {
      l_chol = problem.bandwidth().diag().asDiagonal();
    }
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    l_chol(j, j) = std::max(l_chol(j, j), floor_vec(j));
  }

  LocalGaussianFit fit{ GaussianParams(mu, l_chol), 0.0, FitStatus::max_iters,
                        0, 0.0, 0.0, {} };

  double obj = detail::eval_objective(problem, mu, l_chol);
  Eigen::VectorXd grad = detail::eval_gradient(problem, mu, l_chol);
  if (opts.record_trace) {
    fit.trace.push_back(obj);
  }

  bool converged = false;
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    if (!grad.allFinite() || !std::isfinite(obj)) {
      break;
    }
    if (grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      converged = true;
      break;
    }

    Eigen::MatrixXd hess = detail::eval_hessian(problem, mu, l_chol);
    Eigen::MatrixXd neg_hess = -hess;
    const double hess_scale = hess.lpNorm<Eigen::Infinity>();
    double tau = 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(neg_hess);
    int shifts = 0;
    while (llt.info() != Eigen::Success && shifts < 120) {
      tau = tau == 0.0 ? std::max(1e-8 * hess_scale, 1e-12) : 2.0 * tau;
      Eigen::MatrixXd shifted = neg_hess;
      shifted.diagonal().array() += tau;
      llt.compute(shifted);
      ++shifts;
    }
    if (llt.info() != Eigen::Success) {
      break;
    }
    const Eigen::VectorXd direction = llt.solve(grad);
    const double slope0 = grad.dot(direction);
    if (!(slope0 > 0.0) || !direction.allFinite()) {
      break;
    }

    // strong Wolfe by backtracking
    const Eigen::VectorXd theta = detail::pack_params(mu, l_chol);
    double alpha = 1.0;
    bool accepted = false;
    Eigen::VectorXd mu_trial(d);
    Eigen::MatrixXd l_trial(d, d);
    l_trial.setZero();
    double obj_trial = 0.0;
    Eigen::VectorXd grad_trial;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      const Eigen::VectorXd theta_trial = theta + alpha * direction;
      detail::unpack_params(theta_trial, mu_trial, l_trial);
      obj_trial = detail::eval_objective(problem, mu_trial, l_trial);
      if (std::isfinite(obj_trial) &&
          obj_trial >= obj + opts.wolfe_c1 * alpha * slope0) {
        grad_trial = detail::eval_gradient(problem, mu_trial, l_trial);
        if (grad_trial.allFinite() &&
            std::abs(grad_trial.dot(direction)) <=
              opts.wolfe_c2 * std::abs(slope0)) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      break;
    }

    // keep the factor diagonal above the floor; a projection that loses
    // objective means the maximizer is pinned at the boundary, so stop
    bool projected = false;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (l_trial(j, j) < floor_vec(j)) {
        l_trial(j, j) = floor_vec(j);
        projected = true;
      }
    }
    if (projected) {
      obj_trial = detail::eval_objective(problem, mu_trial, l_trial);
      grad_trial = detail::eval_gradient(problem, mu_trial, l_trial);
      if (!(obj_trial >= obj)) {
        break;
      }
    }

    const double delta = obj_trial - obj;
    mu = mu_trial;
    l_chol = l_trial;
    obj = obj_trial;
    grad = grad_trial;
    if (opts.record_trace) {
      fit.trace.push_back(obj);
    }
    if (std::abs(delta) <= opts.ftol * (1.0 + std::abs(obj))) {
      ++iter;
      converged = grad.allFinite() &&
                  grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
      break;
    }
  }

  fit.iterations = iter;
  fit.params = GaussianParams(mu, l_chol);
  fit.objective = obj;
  fit.final_grad_norm =
    grad.allFinite() ? grad.lpNorm<Eigen::Infinity>()
                     : std::numeric_limits<double>::infinity();
  fit.status = converged ? FitStatus::converged : FitStatus::max_iters;
  fit.log_density_at_query =
    gaussian_log_density(problem.query(), fit.params);
  if (!std::isfinite(fit.log_density_at_query)) {
    // kernel density over the summation set; by kernel symmetry this is the
    // weight sum, always finite and positive
    fit.status = FitStatus::fallback_kernel;
    fit.log_density_at_query =
      std::log(problem.kernel_weights().sum() /
               static_cast<double>(problem.sample_count()));
  }
  return fit;
}

//! Per-point log-density curve over a whole sample set plus fit diagnostics.
struct DensitySummary
{
  Eigen::VectorXd log_density;
  std::vector<FitStatus> status;
  Eigen::Index n_converged = 0;
  Eigen::Index n_fallback = 0;
};

//! Runs the local Gaussian fit at every sample point. Points are processed
//! in parallel chunks; results are ordered by sample index regardless of
//! scheduling. `jobs` = 0 picks the hardware thread count.
inline DensitySummary lgde_density_at_samples(const SampleSet& samples,
                                              int k,
                                              BandwidthRule rule,
                                              int truncation_k,
                                              const OptimizerOptions& opts = {},
                                              int jobs = 0)
{
  const Eigen::Index n = samples.n();
  if (static_cast<Eigen::Index>(k) >= n) {
    throw KTooLargeError("k=" + std::to_string(k) + " with N=" +
                         std::to_string(n));
  }
  const auto bandwidths = select_bandwidth(samples, k, rule);
  NeighborIndex index(samples, Metric::l2);

  DensitySummary out;
  out.log_density.resize(n);
  out.status.resize(static_cast<size_t>(n), FitStatus::max_iters);

  unsigned n_threads = jobs > 0
                         ? static_cast<unsigned>(jobs)
                         : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(n));

  std::atomic<Eigen::Index> next{ 0 };
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    try {
      for (;;) {
        const Eigen::Index i = next.fetch_add(1);
        if (i >= n) {
          return;
        }
        auto problem = build_problem(samples, index, i,
                                     bandwidths[static_cast<size_t>(i)],
                                     truncation_k);
        auto fit = fit_local_gaussian(problem, opts);
        out.log_density(i) = fit.log_density_at_query;
        out.status[static_cast<size_t>(i)] = fit.status;
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) {
        first_error = std::current_exception();
      }
    }
  };

  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }

  for (auto s : out.status) {
    if (s == FitStatus::converged) {
      ++out.n_converged;
    } else {
      ++out.n_fallback;
    }
  }
  return out;
}

}  // namespace lgmi

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgmi {

//! All estimates are reported in nats (natural logarithm throughout).
inline constexpr double log_2pi = 1.8378770664093454836;

//! Floor applied to log-values before exponentiation; exp(-700) is still a
//! normal double, so kernel weights stay strictly positive.
inline constexpr double log_underflow_floor = -700.0;

inline double clamped_exp(double log_v)
{
  return std::exp(std::max(log_v, log_underflow_floor));
}

// ---------------------------------------------------------------------------
// errors

struct Error : public std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct EmptyInputError : public Error
{
  using Error::Error;
};

struct NonFiniteEntryError : public Error
{
  NonFiniteEntryError(Eigen::Index row, Eigen::Index col)
    : Error("non-finite entry at row " + std::to_string(row) + ", column " +
            std::to_string(col))
    , row(row)
    , col(col)
  {
  }
  Eigen::Index row;
  Eigen::Index col;
};

struct DimensionMismatchError : public Error
{
  using Error::Error;
};

struct KTooLargeError : public Error
{
  using Error::Error;
};

struct DegenerateDataError : public Error
{
  using Error::Error;
};

struct InvalidSpecError : public Error
{
  using Error::Error;
};

struct QuadratureError : public Error
{
  using Error::Error;
};

struct EmptyResultsError : public Error
{
  using Error::Error;
};

// ---------------------------------------------------------------------------
// sample sets

//! An immutable N x d matrix of i.i.d. observations (rows are observations,
//! columns are variables). Construction validates shape and finiteness.
class SampleSet
{
public:
  explicit SampleSet(Eigen::MatrixXd data,
                     std::vector<std::string> column_labels = {})
    : data_(std::move(data))
    , column_labels_(std::move(column_labels))
  {
    if (data_.rows() < 2) {
      throw EmptyInputError("need at least 2 observations, got " +
                            std::to_string(data_.rows()));
    }
    if (data_.cols() < 1) {
      throw EmptyInputError("need at least 1 column");
    }
    for (Eigen::Index j = 0; j < data_.cols(); ++j) {
      for (Eigen::Index i = 0; i < data_.rows(); ++i) {
        if (!std::isfinite(data_(i, j))) {
          throw NonFiniteEntryError(i, j);
        }
      }
    }
    if (!column_labels_.empty() &&
        static_cast<Eigen::Index>(column_labels_.size()) != data_.cols()) {
      throw DimensionMismatchError("column label count does not match d");
    }
  }

  const Eigen::MatrixXd& data() const { return data_; }
  Eigen::Index n() const { return data_.rows(); }
  Eigen::Index dim() const { return data_.cols(); }
  const std::vector<std::string>& column_labels() const
  {
    return column_labels_;
  }

  //! New SampleSet holding a copy of the selected columns.
  SampleSet select_columns(const std::vector<Eigen::Index>& cols) const
  {
    if (cols.empty()) {
      throw EmptyInputError("column selection is empty");
    }
    Eigen::MatrixXd out(data_.rows(), static_cast<Eigen::Index>(cols.size()));
    std::vector<std::string> labels;
    for (size_t j = 0; j < cols.size(); ++j) {
      if (cols[j] < 0 || cols[j] >= data_.cols()) {
        throw DimensionMismatchError("column index " +
                                     std::to_string(cols[j]) +
                                     " out of range");
      }
      out.col(static_cast<Eigen::Index>(j)) = data_.col(cols[j]);
      if (!column_labels_.empty()) {
        labels.push_back(column_labels_[static_cast<size_t>(cols[j])]);
      }
    }
    return SampleSet(std::move(out), std::move(labels));
  }

private:
  Eigen::MatrixXd data_;
  std::vector<std::string> column_labels_;
};

//! Validates a raw matrix into a SampleSet. Duplicate rows are legal but
//! reported to `warnings` when given, since they make k-NN distances tie.
inline SampleSet validate_samples(Eigen::MatrixXd raw,
                                  std::ostream* warnings = nullptr)
{
  SampleSet samples(std::move(raw));
  if (warnings != nullptr) {
    const auto& m = samples.data();
    std::vector<Eigen::Index> order(static_cast<size_t>(m.rows()));
    for (size_t i = 0; i < order.size(); ++i) {
      order[i] = static_cast<Eigen::Index>(i);
    }
    auto row_less = [&m](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (m(a, j) != m(b, j)) {
          return m(a, j) < m(b, j);
        }
      }
      return false;
    };
    std::sort(order.begin(), order.end(), row_less);
    for (size_t i = 1; i < order.size(); ++i) {
      if (m.row(order[i - 1]) == m.row(order[i])) {
        *warnings << "warning: duplicate sample rows detected (rows "
                  << order[i - 1] << " and " << order[i] << ")\n";
        break;
      }
    }
  }
  return samples;
}

// ---------------------------------------------------------------------------
// bandwidths

//! Diagonal kernel bandwidth H = diag(h_1, ..., h_d). The entries are length
//! scales in the units of the data columns; the Gaussian product kernel built
//! from them has covariance diag(h_1^2, ..., h_d^2).
class BandwidthMatrix
{
public:
  explicit BandwidthMatrix(Eigen::VectorXd diag)
    : diag_(std::move(diag))
  {
    if (diag_.size() < 1) {
      throw EmptyInputError("bandwidth vector is empty");
    }
    for (Eigen::Index j = 0; j < diag_.size(); ++j) {
      if (!(diag_(j) > 0.0) || !std::isfinite(diag_(j))) {
        throw DegenerateDataError("bandwidth entries must be positive finite");
      }
    }
  }

  //! Isotropic bandwidth, the same scale h in every coordinate.
  static BandwidthMatrix isotropic(Eigen::Index dim, double h)
  {
    return BandwidthMatrix(Eigen::VectorXd::Constant(dim, h));
  }

  const Eigen::VectorXd& diag() const { return diag_; }
  Eigen::Index dim() const { return diag_.size(); }

  //! Covariance matrix of the Gaussian product kernel, diag(h^2).
  Eigen::VectorXd kernel_variances() const
  {
    return diag_.array().square();
  }

private:
  Eigen::VectorXd diag_;
};

// ---------------------------------------------------------------------------
// Gaussian parameters

//! Mean and lower-triangular Cholesky factor L of a covariance Sigma = L L^T.
//! Positive definiteness holds by construction as long as diag(L) > 0.
class GaussianParams
{
public:
  GaussianParams(Eigen::VectorXd mean, Eigen::MatrixXd chol_factor)
    : mean_(std::move(mean))
    , chol_(std::move(chol_factor))
  {
    if (chol_.rows() != chol_.cols() || chol_.rows() != mean_.size()) {
      throw DimensionMismatchError("mean and Cholesky factor sizes disagree");
    }
    for (Eigen::Index i = 0; i < chol_.rows(); ++i) {
      if (!(chol_(i, i) > 0.0)) {
        throw DegenerateDataError("Cholesky diagonal must be positive");
      }
      for (Eigen::Index j = i + 1; j < chol_.cols(); ++j) {
        if (chol_(i, j) != 0.0) {
          throw InvalidSpecError("Cholesky factor must be lower triangular");
        }
      }
    }
  }

  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& chol_factor() const { return chol_; }
  Eigen::Index dim() const { return mean_.size(); }

  Eigen::MatrixXd covariance() const { return chol_ * chol_.transpose(); }

private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_;
};

//! log N_d(x; mu, L L^T) evaluated with triangular solves.
inline double gaussian_log_density(const Eigen::VectorXd& x,
                                   const GaussianParams& params)
{
  if (x.size() != params.dim()) {
    throw DimensionMismatchError("x has dimension " + std::to_string(x.size()) +
                                 ", parameters have " +
                                 std::to_string(params.dim()));
  }
  const Eigen::MatrixXd& L = params.chol_factor();
  Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x - params.mean());
  double log_det_half = L.diagonal().array().log().sum();
  return -0.5 * static_cast<double>(x.size()) * log_2pi - log_det_half -
         0.5 * z.squaredNorm();
}

// ---------------------------------------------------------------------------
// reports

enum class EstimatorKind
{
  lgde_entropy,
  lgde_mi,
  ksg,
  kl_entropy,
  kl_mi,
};

inline std::string to_string(EstimatorKind kind)
{
  switch (kind) {
    case EstimatorKind::lgde_entropy: return "LGDE-entropy";
    case EstimatorKind::lgde_mi: return "LGDE-MI";
    case EstimatorKind::ksg: return "KSG";
    case EstimatorKind::kl_entropy: return "KL-entropy";
    case EstimatorKind::kl_mi: return "KL-MI";
  }
  return "unknown";
}

//! A point estimate in nats plus run metadata. For LGDE estimators the
//! optimizer outcome counts cover every per-point fit performed (N for an
//! entropy run, 3N for an MI run); n_converged counts clean gradient
//! convergence, n_fallback everything else. Both are zero for the kNN
//! baselines.
struct EstimateReport
{
  double value = 0.0;
  EstimatorKind estimator = EstimatorKind::lgde_entropy;
  Eigen::Index n_samples = 0;
  Eigen::Index dim_x = 0;
  Eigen::Index dim_y = 0;  // zero for entropy estimates
  int k = 0;
  Eigen::Index n_converged = 0;
  Eigen::Index n_fallback = 0;
  double wall_time_s = 0.0;
};

}  // namespace lgmi

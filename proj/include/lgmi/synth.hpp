#pragma once

#include "lgmi/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lgmi {

//! Synthetic relationship families. The functional ones draw X uniformly on
//! [0,1] and set Y = f(X) + U(0,theta); the Gaussian family interprets theta
//! as the correlation rho.
enum class Family
{
  linear,            // f(x) = x
  quadratic,         // f(x) = x^2
  cubic,             // f(x) = x^3 - x
  sine,              // f(x) = sin(4 pi x)
  sine_high_freq,    // f(x) = sin(16 pi x)
  sqrt_shape,        // f(x) = sqrt(x)
  bivariate_gaussian,
  independent_uniform,
};

inline bool is_functional(Family family)
{
  return family != Family::bivariate_gaussian &&
         family != Family::independent_uniform;
}

inline std::string family_name(Family family)
{
  switch (family) {
    case Family::linear: return "linear";
    case Family::quadratic: return "quadratic";
    case Family::cubic: return "cubic";
    case Family::sine: return "sine";
    case Family::sine_high_freq: return "sine-high-freq";
    case Family::sqrt_shape: return "sqrt";
    case Family::bivariate_gaussian: return "bivariate-gaussian";
    case Family::independent_uniform: return "independent-uniform";
  }
  return "unknown";
}

inline Family parse_family(const std::string& name)
{
  for (Family f : { Family::linear, Family::quadratic, Family::cubic,
                    Family::sine, Family::sine_high_freq, Family::sqrt_shape,
                    Family::bivariate_gaussian, Family::independent_uniform }) {
    if (family_name(f) == name) {
      return f;
    }
  }
  throw InvalidSpecError("unknown family '" + name + "'");
}

inline double family_function(Family family, double x)
{
  switch (family) {
    case Family::linear: return x;
    case Family::quadratic: return x * x;
    case Family::cubic: return x * x * x - x;
    case Family::sine: return std::sin(4.0 * M_PI * x);
    case Family::sine_high_freq: return std::sin(16.0 * M_PI * x);
    case Family::sqrt_shape: return std::sqrt(x);
    default:
      throw InvalidSpecError("family has no deterministic function");
  }
}

//! A generator description paired with a ground-truth oracle. theta is the
//! additive noise width for functional families and the correlation for the
//! Gaussian family (where it must lie in (-1, 1)).
struct RelationshipSpec
{
  Family family = Family::linear;
  double theta = 1.0;
  Eigen::Index n = 2500;
  std::uint64_t seed = 0;

  void validate() const
  {
    if (n < 2) {
      throw InvalidSpecError("need n >= 2");
    }
    if (family == Family::bivariate_gaussian) {
      if (!(theta > -1.0 && theta < 1.0)) {
        throw InvalidSpecError("rho must lie in (-1, 1)");
      }
    } else if (is_functional(family)) {
      if (!(theta > 0.0) || !std::isfinite(theta)) {
        throw InvalidSpecError("theta must be positive");
      }
    }
  }
};

namespace detail {

//! Uniform draw strictly inside (0,1) from the top 53 bits of the engine
//! output. mt19937_64 output is pinned by the standard, so streams are
//! reproducible across platforms.
inline double uniform01(std::mt19937_64& engine)
{
  return (static_cast<double>(engine() >> 11) + 0.5) * 0x1.0p-53;
}

//! Box-Muller pair from two uniforms.
inline std::pair<double, double> normal_pair(std::mt19937_64& engine)
{
  const double u1 = uniform01(engine);
  const double u2 = uniform01(engine);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  return { radius * std::cos(2.0 * M_PI * u2),
           radius * std::sin(2.0 * M_PI * u2) };
}

}  // namespace detail

//! Draws the N x 2 sample described by the spec. Deterministic per seed.
inline SampleSet generate(const RelationshipSpec& spec)
{
  spec.validate();
  std::mt19937_64 engine(spec.seed);
  Eigen::MatrixXd data(spec.n, 2);
  if (spec.family == Family::bivariate_gaussian) {
    const double rho = spec.theta;
    const double tail = std::sqrt(1.0 - rho * rho);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      auto [z1, z2] = detail::normal_pair(engine);
      data(i, 0) = z1;
      data(i, 1) = rho * z1 + tail * z2;
    }
  } else if (spec.family == Family::independent_uniform) {
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      data(i, 0) = detail::uniform01(engine);
      data(i, 1) = detail::uniform01(engine);
    }
  } else {
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      const double x = detail::uniform01(engine);
      data(i, 0) = x;
      data(i, 1) = family_function(spec.family, x) +
                   spec.theta * detail::uniform01(engine);
    }
  }
  return SampleSet(std::move(data), { "x", "y" });
}

namespace detail {

//! H(Y) for Y = f(X) + U(0,theta), X ~ U(0,1). The output density is
//! p_Y(y) = Leb{x in [0,1] : y - f(x) in [0,theta]} / theta, evaluated on a
//! sorted midpoint grid of f values; the outer entropy integral uses a
//! midpoint rule refined until successive estimates differ by < 1e-5.
inline double functional_output_entropy(Family family, double theta)
{
  constexpr double step_tol = 1e-5;
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int level = 0; level < 6; ++level) {
    const Eigen::Index nx = Eigen::Index{ 1 } << std::min(19 + level, 22);
    const Eigen::Index ny = Eigen::Index{ 1 } << std::min(13 + level, 19);
    std::vector<double> values(static_cast<size_t>(nx));
    for (Eigen::Index j = 0; j < nx; ++j) {
      const double x = (static_cast<double>(j) + 0.5) /
                       static_cast<double>(nx);
      values[static_cast<size_t>(j)] = family_function(family, x);
    }
    std::sort(values.begin(), values.end());
    const double lo = values.front();
    const double hi = values.back() + theta;
    const double dy = (hi - lo) / static_cast<double>(ny);
    double entropy = 0.0;
    for (Eigen::Index t = 0; t < ny; ++t) {
      const double y = lo + (static_cast<double>(t) + 0.5) * dy;
      const auto first =
        std::lower_bound(values.begin(), values.end(), y - theta);
      const auto last = std::upper_bound(values.begin(), values.end(), y);
      const double measure = static_cast<double>(last - first) /
                             static_cast<double>(nx);
      if (measure > 0.0) {
        const double p = measure / theta;
        entropy -= p * std::log(p) * dy;
      }
    }
    if (level > 0 && std::abs(entropy - previous) < step_tol) {
      return entropy;
    }
    previous = entropy;
  }
  throw QuadratureError("output entropy quadrature did not converge for " +
                        family_name(family) + " theta=" +
                        std::to_string(theta));
}

}  // namespace detail

//! Ground-truth mutual information for a relationship spec, in nats. The
//! Gaussian family has the closed form -log(1-rho^2)/2; functional families
//! use I = H(Y) - log(theta), since H(Y|X) = log(theta) for additive uniform
//! noise. Results are memoized, as sweeps ask for the same cell repeatedly.
inline double true_mi(const RelationshipSpec& spec)
{
  spec.validate();
  if (spec.family == Family::bivariate_gaussian) {
    return -0.5 * std::log1p(-spec.theta * spec.theta);
  }
  if (spec.family == Family::independent_uniform) {
    return 0.0;
  }
  static std::map<std::pair<Family, double>, double> cache;
  static std::mutex cache_mutex;
  const std::pair<Family, double> key{ spec.family, spec.theta };
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = cache.find(key);
    if (it != cache.end()) {
      return it->second;
    }
  }
  const double value =
    detail::functional_output_entropy(spec.family, spec.theta) -
    std::log(spec.theta);
  std::lock_guard<std::mutex> lock(cache_mutex);
  cache.emplace(key, value);
  return value;
}

//! CSV fixture dump: header `x,y`, LF line endings, 17 significant digits.
inline void write_fixture_csv(const SampleSet& samples, std::ostream& out)
{
  const auto& labels = samples.column_labels();
  for (Eigen::Index j = 0; j < samples.dim(); ++j) {
    if (j > 0) {
      out << ',';
    }
    if (!labels.empty()) {
      out << labels[static_cast<size_t>(j)];
    } else {
      out << 'c' << j;
    }
  }
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < samples.n(); ++i) {
    for (Eigen::Index j = 0; j < samples.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", samples.data()(i, j));
      if (j > 0) {
        out << ',';
      }
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace lgmi

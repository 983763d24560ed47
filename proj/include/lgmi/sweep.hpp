#pragma once

#include "lgmi/core.hpp"
#include "lgmi/estimators.hpp"
#include "lgmi/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace lgmi {

inline constexpr int sweep_csv_schema = 1;

enum class SweepEstimator
{
  lgde,
  ksg,
  kl_decomposed,
};

inline std::string sweep_estimator_name(SweepEstimator estimator)
{
  switch (estimator) {
    case SweepEstimator::lgde: return "lgde";
    case SweepEstimator::ksg: return "ksg";
    case SweepEstimator::kl_decomposed: return "kl-decomposed";
  }
  return "unknown";
}

inline SweepEstimator parse_sweep_estimator(const std::string& name)
{
  for (SweepEstimator e : { SweepEstimator::lgde, SweepEstimator::ksg,
                            SweepEstimator::kl_decomposed }) {
    if (sweep_estimator_name(e) == name) {
      return e;
    }
  }
  throw InvalidSpecError("unknown estimator '" + name + "'");
}

//! Default noise grid: eleven log-spaced widths 2^-10 ... 2^0.
inline std::vector<double> default_theta_grid()
{
  std::vector<double> grid;
  for (int e = -10; e <= 0; ++e) {
    grid.push_back(std::ldexp(1.0, e));
  }
  return grid;
}

//! One benchmark campaign: every (family, theta, estimator, seed) cell gets
//! a fresh sample and an MI estimate compared to the ground-truth oracle.
struct SweepConfig
{
  std::vector<Family> families = { Family::linear };
  std::vector<double> theta_grid = default_theta_grid();
  Eigen::Index n = 2500;
  int k = 5;
  std::vector<SweepEstimator> estimators = { SweepEstimator::lgde,
                                             SweepEstimator::ksg,
                                             SweepEstimator::kl_decomposed };
  std::vector<std::uint64_t> seeds = { 1 };
  BandwidthRule rule = BandwidthRule::per_point;
  int truncation_k = 0;  // 0 means 4 * k
  int jobs = 0;

  void validate() const
  {
    if (families.empty() || estimators.empty() || seeds.empty() ||
        theta_grid.empty()) {
      throw InvalidSpecError(
        "need at least one family, theta, estimator, and seed");
    }
    for (size_t i = 0; i < theta_grid.size(); ++i) {
      if (!(theta_grid[i] > 0.0)) {
        throw InvalidSpecError("theta grid must be strictly positive");
      }
      if (i > 0 && !(theta_grid[i] > theta_grid[i - 1])) {
        throw InvalidSpecError("theta grid must be strictly increasing");
      }
    }
    if (n < 16) {
      throw InvalidSpecError("sweep n is too small");
    }
  }
};

struct SweepRow
{
  Family family = Family::linear;
  double theta = 0.0;
  SweepEstimator estimator = SweepEstimator::lgde;
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
  int k = 0;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double truth = std::numeric_limits<double>::quiet_NaN();
  Eigen::Index n_converged = 0;
  Eigen::Index n_fallback = 0;
  double wall_time_s = 0.0;  // reported on stderr, never in the CSV
  std::string error;         // empty when the cell succeeded
};

struct SweepResults
{
  std::vector<SweepRow> rows;
  bool any_error = false;
};

namespace detail {

inline std::string format_double(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline EstimateReport run_cell_estimator(SweepEstimator estimator,
                                         const MiTask& task,
                                         const SweepConfig& config)
{
  switch (estimator) {
    case SweepEstimator::lgde: {
      EstimatorOptions opts;
      opts.k = config.k;
      opts.rule = config.rule;
      opts.truncation_k = config.truncation_k;
      opts.jobs = 1;  // cells already run in parallel
      return estimate_mi_lgde(task, opts);
    }
    case SweepEstimator::ksg:
      return estimate_mi_ksg(task, config.k);
    case SweepEstimator::kl_decomposed:
      return estimate_mi_kl(task, config.k);
  }
  throw InvalidSpecError("unknown estimator");
}

}  // namespace detail

//! Runs every sweep cell, up to `jobs` cells in parallel. Per-cell failures
//! are recorded in the row's error field and the sweep continues. Rows come
//! back sorted by (family, theta, estimator, seed), so scheduling never
//! changes the output. Progress lines, including wall times, go to
//! `progress` when given.
inline SweepResults run_sweep(const SweepConfig& config,
                              std::ostream* progress = nullptr)
{
  config.validate();

  SweepResults results;
  for (Family family : config.families) {
    for (double theta : config.theta_grid) {
      for (SweepEstimator estimator : config.estimators) {
        for (std::uint64_t seed : config.seeds) {
          SweepRow row;
          row.family = family;
          row.theta = theta;
          row.estimator = estimator;
          row.seed = seed;
          row.n = config.n;
          row.k = config.k;
          results.rows.push_back(row);
        }
      }
    }
  }
  std::sort(results.rows.begin(), results.rows.end(),
            [](const SweepRow& a, const SweepRow& b) {
              return std::tie(a.family, a.theta, a.estimator, a.seed) <
                     std::tie(b.family, b.theta, b.estimator, b.seed);
            });

  std::atomic<size_t> next{ 0 };
  std::mutex progress_mutex;
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= results.rows.size()) {
        return;
      }
      SweepRow& row = results.rows[i];
      try {
        RelationshipSpec spec{ row.family, row.theta, row.n, row.seed };
        row.truth = true_mi(spec);
        const SampleSet samples = generate(spec);
        MiTask task(samples, { 0 }, { 1 });
        const EstimateReport report =
          detail::run_cell_estimator(row.estimator, task, config);
        row.estimate = report.value;
        row.n_converged = report.n_converged;
        row.n_fallback = report.n_fallback;
        row.wall_time_s = report.wall_time_s;
      } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        row.error = msg;
      }
      if (progress != nullptr) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        *progress << family_name(row.family) << " theta=" << row.theta
                  << " " << sweep_estimator_name(row.estimator) << " seed="
                  << row.seed << ": "
                  << (row.error.empty()
                        ? "estimate=" + detail::format_double(row.estimate) +
                            " truth=" + detail::format_double(row.truth) +
                            " wall=" + detail::format_double(row.wall_time_s) +
                            "s"
                        : "error: " + row.error)
                  << '\n';
      }
    }
  };

  unsigned n_threads =
    config.jobs > 0 ? static_cast<unsigned>(config.jobs)
                    : std::max(1u, std::thread::hardware_concurrency());
  n_threads =
    std::min<unsigned>(n_threads, static_cast<unsigned>(results.rows.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }

  for (const auto& row : results.rows) {
    if (!row.error.empty()) {
      results.any_error = true;
    }
  }
  return results;
}

//! Stable versioned CSV. Wall times are deliberately absent so identical
//! configurations produce byte-identical files.
inline void write_sweep_csv(const SweepResults& results, std::ostream& out)
{
  out << "schema=" << sweep_csv_schema
      << ",family,theta,n,k,estimator,seed,estimate,truth,n_converged,"
         "n_fallback,error\n";
  for (const auto& row : results.rows) {
    out << sweep_csv_schema << ',' << family_name(row.family) << ','
        << detail::format_double(row.theta) << ',' << row.n << ',' << row.k
        << ',' << sweep_estimator_name(row.estimator) << ',' << row.seed
        << ',' << detail::format_double(row.estimate) << ','
        << detail::format_double(row.truth) << ',' << row.n_converged << ','
        << row.n_fallback << ',' << row.error << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

}  // namespace detail

//! Reads a CSV produced by write_sweep_csv.
inline SweepResults read_sweep_csv(std::istream& in)
{
  std::string line;
  if (!std::getline(in, line)) {
    throw EmptyResultsError("empty sweep CSV");
  }
  if (line.rfind("schema=", 0) != 0) {
    throw InvalidSpecError("missing schema tag in sweep CSV header");
  }
  SweepResults results;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < 12) {
      throw InvalidSpecError("malformed sweep CSV row: " + line);
    }
    SweepRow row;
    row.family = parse_family(fields[1]);
    row.theta = std::stod(fields[2]);
    row.n = static_cast<Eigen::Index>(std::stoll(fields[3]));
    row.k = std::stoi(fields[4]);
    row.estimator = parse_sweep_estimator(fields[5]);
    row.seed = std::stoull(fields[6]);
    row.estimate = std::stod(fields[7]);
    row.truth = std::stod(fields[8]);
    row.n_converged = static_cast<Eigen::Index>(std::stoll(fields[9]));
    row.n_fallback = static_cast<Eigen::Index>(std::stoll(fields[10]));
    row.error = fields[11];
    results.rows.push_back(std::move(row));
    if (!results.rows.back().error.empty()) {
      results.any_error = true;
    }
  }
  return results;
}

struct PlotFile
{
  Family family = Family::linear;
  std::string name;     // suggested file name, e.g. "linear.dat"
  std::string content;  // whitespace-delimited columns
};

struct PlotData
{
  std::vector<PlotFile> files;
  std::string summary;  // max |estimate - truth| per family and estimator
};

//! Post-processes sweep rows into gnuplot-ready per-family tables: theta,
//! truth, then one column per estimator holding the mean over seeds.
inline PlotData emit_plot_data(const SweepResults& results)
{
  if (results.rows.empty()) {
    throw EmptyResultsError("no sweep rows to plot");
  }
  std::vector<Family> families;
  std::vector<SweepEstimator> estimators;
  for (const auto& row : results.rows) {
    if (std::find(families.begin(), families.end(), row.family) ==
        families.end()) {
      families.push_back(row.family);
    }
    if (std::find(estimators.begin(), estimators.end(), row.estimator) ==
        estimators.end()) {
      estimators.push_back(row.estimator);
    }
  }
  std::sort(families.begin(), families.end());
  std::sort(estimators.begin(), estimators.end());

  PlotData plot;
  std::ostringstream summary;
  for (Family family : families) {
    // theta -> (truth, estimator -> estimates)
    std::map<double, std::pair<double, std::map<SweepEstimator,
                                                std::vector<double>>>> cells;
    for (const auto& row : results.rows) {
      if (row.family != family || !row.error.empty()) {
        continue;
      }
      auto& cell = cells[row.theta];
      cell.first = row.truth;
      cell.second[row.estimator].push_back(row.estimate);
    }
    std::ostringstream out;
    out << "# theta truth";
    for (SweepEstimator estimator : estimators) {
      out << ' ' << sweep_estimator_name(estimator);
    }
    out << '\n';
    std::map<SweepEstimator, double> worst;
    for (const auto& [theta, cell] : cells) {
      out << detail::format_double(theta) << ' '
          << detail::format_double(cell.first);
      for (SweepEstimator estimator : estimators) {
        const auto it = cell.second.find(estimator);
        if (it == cell.second.end() || it->second.empty()) {
          out << " nan";
          continue;
        }
        double mean = 0.0;
        for (double v : it->second) {
          mean += v;
        }
        mean /= static_cast<double>(it->second.size());
        out << ' ' << detail::format_double(mean);
        auto [w, inserted] = worst.try_emplace(estimator, 0.0);
        w->second = std::max(w->second, std::abs(mean - cell.first));
        (void)inserted;
      }
      out << '\n';
    }
    PlotFile file;
    file.family = family;
    file.name = family_name(family) + ".dat";
    file.content = out.str();
    plot.files.push_back(std::move(file));
    for (const auto& [estimator, err] : worst) {
      summary << family_name(family) << ' '
              << sweep_estimator_name(estimator)
              << " max_abs_error=" << detail::format_double(err) << '\n';
    }
  }
  plot.summary = summary.str();
  return plot;
}

//! Reads a plain comma-delimited CSV with one header row into a matrix plus
//! column labels. Used by the CLI estimate commands.
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> read_csv_matrix(
  std::istream& in)
{
  std::string line;
  if (!std::getline(in, line)) {
    throw EmptyInputError("empty CSV input");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const std::vector<std::string> labels = detail::split_csv_line(line);
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != labels.size()) {
      throw InvalidSpecError("CSV row has " + std::to_string(fields.size()) +
                             " fields, header has " +
                             std::to_string(labels.size()));
    }
    for (const auto& field : fields) {
      size_t used = 0;
      const double v = std::stod(field, &used);
      if (used != field.size()) {
        throw InvalidSpecError("non-numeric CSV field '" + field + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd matrix(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      matrix(i, j) = values[static_cast<size_t>(i * cols + j)];
    }
  }
  return { std::move(matrix), labels };
}

}  // namespace lgmi

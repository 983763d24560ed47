// lgmi - estimate entropy / mutual information from CSV samples and run
// benchmark sweeps against synthetic relationships with known ground truth.
//
// Subcommands:
//   mi        one MI estimate from a CSV file
//   entropy   one entropy estimate from a CSV file
//   sweep     (family x theta x estimator x seed) benchmark, CSV output
//   gen       dump a synthetic fixture as CSV
//   plotdata  post-process a sweep CSV into per-family plot tables
//
// Data goes to stdout or --output files; progress goes to stderr.

#include "lgmi/lgmi.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct EstimateArgs
{
  std::string input;
  std::vector<Eigen::Index> x_cols;
  std::vector<Eigen::Index> y_cols;
  std::string estimator = "lgde";
  int k = 5;
  std::string rule = "per-point";
  int truncation_k = 0;
  int jobs = 0;
};

lgmi::BandwidthRule parse_rule(const std::string& name)
{
  if (name == "per-point") {
    return lgmi::BandwidthRule::per_point;
  }
  if (name == "global-mean") {
    return lgmi::BandwidthRule::global_mean;
  }
  throw lgmi::InvalidSpecError("unknown rule '" + name + "'");
}

lgmi::SampleSet load_csv(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw lgmi::InvalidSpecError("cannot open input file '" + path + "'");
  }
  auto [matrix, labels] = lgmi::read_csv_matrix(in);
  return lgmi::validate_samples(std::move(matrix), &std::cerr);
}

void add_estimate_options(CLI::App* cmd, EstimateArgs& args, bool with_split)
{
  cmd->add_option("--input", args.input, "input CSV file (header row)")
    ->required();
  if (with_split) {
    cmd->add_option("--x-cols", args.x_cols,
                    "0-based column indices of the x block")
      ->delimiter(',')
      ->required();
    cmd->add_option("--y-cols", args.y_cols,
                    "0-based column indices of the y block")
      ->delimiter(',')
      ->required();
  } else {
    cmd->add_option("--x-cols", args.x_cols,
                    "0-based column indices to use (default: all)")
      ->delimiter(',');
  }
  cmd->add_option("--estimator", args.estimator,
                  with_split ? "lgde, ksg, or kl-decomposed"
                             : "lgde or kl");
  cmd->add_option("--k", args.k, "neighbor parameter");
  cmd->add_option("--rule", args.rule, "bandwidth rule")
    ->check(CLI::IsMember({ "per-point", "global-mean" }));
  cmd->add_option("--truncation-k", args.truncation_k,
                  "likelihood summation neighborhood size (0: 4*k)");
  cmd->add_option("--jobs", args.jobs, "worker threads (0: all cores)");
  cmd->set_config("--config");
}

lgmi::EstimatorOptions make_options(const EstimateArgs& args)
{
  lgmi::EstimatorOptions opts;
  opts.k = args.k;
  opts.rule = parse_rule(args.rule);
  opts.truncation_k = args.truncation_k;
  opts.jobs = args.jobs;
  return opts;
}

void print_report(const lgmi::EstimateReport& report)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", report.value);
  std::cout << buf << "\n";
  std::cerr << lgmi::to_string(report.estimator) << ": N=" << report.n_samples
            << " d=" << report.dim_x;
  if (report.dim_y > 0) {
    std::cerr << " b=" << report.dim_y;
  }
  std::cerr << " k=" << report.k;
  if (report.estimator == lgmi::EstimatorKind::lgde_entropy ||
      report.estimator == lgmi::EstimatorKind::lgde_mi) {
    std::cerr << " converged=" << report.n_converged
              << " fallback=" << report.n_fallback;
  }
  std::cerr << " wall=" << report.wall_time_s << "s\n";
}

int run_mi(const EstimateArgs& args)
{
  const lgmi::SampleSet samples = load_csv(args.input);
  lgmi::MiTask task(samples, args.x_cols, args.y_cols);
  lgmi::EstimateReport report;
  if (args.estimator == "lgde") {
    report = lgmi::estimate_mi_lgde(task, make_options(args));
  } else if (args.estimator == "ksg") {
    report = lgmi::estimate_mi_ksg(task, args.k);
  } else if (args.estimator == "kl-decomposed") {
    report = lgmi::estimate_mi_kl(task, args.k);
  } else {
    throw lgmi::InvalidSpecError("unknown MI estimator '" + args.estimator +
                                 "'");
  }
  print_report(report);
  return 0;
}

int run_entropy(const EstimateArgs& args)
{
  lgmi::SampleSet samples = load_csv(args.input);
  if (!args.x_cols.empty()) {
    samples = samples.select_columns(args.x_cols);
  }
  lgmi::EstimateReport report;
  if (args.estimator == "lgde") {
    report = lgmi::estimate_entropy_lgde(samples, make_options(args));
  } else if (args.estimator == "kl") {
    report = lgmi::estimate_entropy_kl(samples, args.k);
  } else {
    throw lgmi::InvalidSpecError("unknown entropy estimator '" +
                                 args.estimator + "'");
  }
  print_report(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "local-Gaussian mutual information estimation benchmark" };
  app.require_subcommand(1);

  // mi / entropy
  EstimateArgs mi_args;
  CLI::App* mi_cmd = app.add_subcommand("mi", "estimate mutual information");
  add_estimate_options(mi_cmd, mi_args, true);

  EstimateArgs entropy_args;
  CLI::App* entropy_cmd = app.add_subcommand("entropy", "estimate entropy");
  add_estimate_options(entropy_cmd, entropy_args, false);

  // sweep
  std::vector<std::string> sweep_families = { "linear" };
  std::vector<double> sweep_thetas;
  std::vector<std::string> sweep_estimators = { "lgde", "ksg",
                                                "kl-decomposed" };
  std::vector<std::uint64_t> sweep_seeds = { 1 };
  long long sweep_n = 2500;
  int sweep_k = 5;
  std::string sweep_rule = "per-point";
  int sweep_truncation = 0;
  int sweep_jobs = 0;
  std::string sweep_output = "sweep.csv";
  CLI::App* sweep_cmd =
    app.add_subcommand("sweep", "benchmark estimators over a grid");
  sweep_cmd->add_option("--family", sweep_families, "relationship families")
    ->delimiter(',');
  sweep_cmd
    ->add_option("--theta", sweep_thetas,
                 "noise widths (default: 2^-10 ... 2^0)")
    ->delimiter(',');
  sweep_cmd->add_option("--n", sweep_n, "sample count per cell");
  sweep_cmd->add_option("--k", sweep_k, "neighbor parameter");
  sweep_cmd->add_option("--estimator", sweep_estimators, "estimators to run")
    ->delimiter(',');
  sweep_cmd->add_option("--seed", sweep_seeds, "seeds")->delimiter(',');
  sweep_cmd->add_option("--rule", sweep_rule, "bandwidth rule")
    ->check(CLI::IsMember({ "per-point", "global-mean" }));
  sweep_cmd->add_option("--truncation-k", sweep_truncation,
                        "likelihood summation neighborhood size (0: 4*k)");
  sweep_cmd->add_option("--jobs", sweep_jobs, "parallel cells (0: all cores)");
  sweep_cmd->add_option("--output", sweep_output, "output CSV path");
  sweep_cmd->set_config("--config");

  // gen
  std::string gen_family = "linear";
  double gen_theta = 1.0;
  long long gen_n = 2500;
  std::uint64_t gen_seed = 1;
  std::string gen_output = "-";
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a CSV fixture");
  gen_cmd->add_option("--family", gen_family, "relationship family");
  gen_cmd->add_option("--theta", gen_theta, "noise width (or rho)");
  gen_cmd->add_option("--n", gen_n, "sample count");
  gen_cmd->add_option("--seed", gen_seed, "seed");
  gen_cmd->add_option("--output", gen_output, "output path ('-' for stdout)");
  gen_cmd->set_config("--config");

  // plotdata
  std::string plot_input;
  std::string plot_output = "./";
  CLI::App* plot_cmd =
    app.add_subcommand("plotdata", "per-family plot tables from a sweep CSV");
  plot_cmd->add_option("--input", plot_input, "sweep CSV")->required();
  plot_cmd->add_option("--output", plot_output,
                       "output prefix (directory prefixes must end in '/')");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*mi_cmd) {
      return run_mi(mi_args);
    }
    if (*entropy_cmd) {
      return run_entropy(entropy_args);
    }
    if (*sweep_cmd) {
      lgmi::SweepConfig config;
      config.families.clear();
      for (const auto& name : sweep_families) {
        config.families.push_back(lgmi::parse_family(name));
      }
      if (!sweep_thetas.empty()) {
        std::sort(sweep_thetas.begin(), sweep_thetas.end());
        config.theta_grid = sweep_thetas;
      }
      config.estimators.clear();
      for (const auto& name : sweep_estimators) {
        config.estimators.push_back(lgmi::parse_sweep_estimator(name));
      }
      config.seeds = sweep_seeds;
      config.n = static_cast<Eigen::Index>(sweep_n);
      config.k = sweep_k;
      config.rule = parse_rule(sweep_rule);
      config.truncation_k = sweep_truncation;
      config.jobs = sweep_jobs;

      const lgmi::SweepResults results = lgmi::run_sweep(config, &std::cerr);
      std::ofstream out(sweep_output, std::ios::binary);
      if (!out) {
        throw lgmi::InvalidSpecError("cannot open output '" + sweep_output +
                                     "'");
      }
      lgmi::write_sweep_csv(results, out);
      std::cerr << "wrote " << results.rows.size() << " rows to "
                << sweep_output << "\n";
      return results.any_error ? 1 : 0;
    }
    if (*gen_cmd) {
      lgmi::RelationshipSpec spec{ lgmi::parse_family(gen_family), gen_theta,
                                   static_cast<Eigen::Index>(gen_n),
                                   gen_seed };
      const lgmi::SampleSet samples = lgmi::generate(spec);
      if (gen_output == "-") {
        lgmi::write_fixture_csv(samples, std::cout);
      } else {
        std::ofstream out(gen_output, std::ios::binary);
        if (!out) {
          throw lgmi::InvalidSpecError("cannot open output '" + gen_output +
                                       "'");
        }
        lgmi::write_fixture_csv(samples, out);
      }
      return 0;
    }
    if (*plot_cmd) {
      std::ifstream in(plot_input);
      if (!in) {
        throw lgmi::InvalidSpecError("cannot open input '" + plot_input +
                                     "'");
      }
      const lgmi::SweepResults results = lgmi::read_sweep_csv(in);
      const lgmi::PlotData plot = lgmi::emit_plot_data(results);
      for (const auto& file : plot.files) {
        const std::string path = plot_output + file.name;
        std::ofstream out(path, std::ios::binary);
        if (!out) {
          throw lgmi::InvalidSpecError("cannot open output '" + path + "'");
        }
        out << file.content;
        std::cerr << "wrote " << path << "\n";
      }
      std::ofstream summary(plot_output + "summary.txt", std::ios::binary);
      summary << plot.summary;
      std::cerr << "wrote " << plot_output << "summary.txt\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

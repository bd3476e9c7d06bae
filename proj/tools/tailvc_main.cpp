// Command-line front end: CSV in, delimited tables + a JSON manifest out.
//
//   tailvc --command fit      --input data.csv --output grid.csv ...
//   tailvc --command tune     --input data.csv --output tables.csv ...
//   tailvc --command test     --input data.csv --output tests.csv ...
//   tailvc --command simulate --output report.csv --setting 1 --n 500 ...
//   tailvc --command qq       --input data.csv --output qq.csv ...

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tailvc/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Varying-coefficient tail index regression"};
  tailvc::RunConfig cfg;

  std::string command;
  std::string kernel = "epanechnikov";
  std::string xi_variant = "rosenblatt";
  std::string discrepancy_variant = "literal";
  std::string sigma_variant = "wald";
  std::string response;
  std::vector<std::string> x_cols, t_cols, normal_score;
  std::vector<double> bandwidth, bandwidth_grid, fraction_grid;
  double fraction = std::numeric_limits<double>::quiet_NaN();
  bool no_intercept = false;

  app.add_option("--command", command, "fit | tune | test | simulate | qq")->required();
  app.add_option("--input", cfg.input, "input CSV with header row");
  app.add_option("--output", cfg.output, "output table path")->required();
  app.add_option("--response", response, "response column (positive values)");
  app.add_option("--x-cols", x_cols, "linear covariate columns")->delimiter(',');
  app.add_option("--t-cols", t_cols, "smoothing covariate columns")->delimiter(',');
  app.add_option("--kernel", kernel, "epanechnikov | spherical");
  app.add_option("--bandwidth", bandwidth, "bandwidth diagonal (1 value or q values)")
      ->delimiter(',');
  app.add_option("--bandwidth-grid", bandwidth_grid, "CV bandwidth candidates")->delimiter(',');
  app.add_option("--fraction", fraction, "exceedance fraction n0/n");
  app.add_option("--fraction-grid", fraction_grid, "threshold fraction candidates")
      ->delimiter(',');
  app.add_option("--folds", cfg.folds, "cross-validation folds D");
  app.add_option("--alpha", cfg.alpha, "test significance level");
  app.add_option("--grid-size", cfg.grid_size, "grid points per axis (0 = default)");
  app.add_option("--seed", cfg.seed, "RNG seed");
  app.add_option("--normal-score", normal_score,
                 "x columns to normal-score transform ('all' for every one)")
      ->delimiter(',');
  app.add_option("--discrepancy-variant", discrepancy_variant, "literal | cvm");
  app.add_option("--xi-variant", xi_variant, "rosenblatt | printed");
  app.add_option("--sigma-variant", sigma_variant, "wald | diagonal");
  app.add_option("--threads", cfg.threads, "worker threads");
  app.add_option("--envelope-reps", cfg.envelope_reps, "qq envelope replications");
  app.add_flag("--no-intercept", no_intercept, "drop the intercept column");
  app.add_option("--setting", cfg.setting, "simulation setting (1, 2 or 3)");
  app.add_option("--n", cfg.sim_n, "simulation sample size");
  app.add_option("--delta", cfg.sim_delta, "simulation second-order parameter");
  app.add_option("--replications", cfg.replications, "Monte Carlo replications");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (command == "fit") cfg.command = tailvc::Command::fit;
  else if (command == "tune") cfg.command = tailvc::Command::tune;
  else if (command == "test") cfg.command = tailvc::Command::test;
  else if (command == "simulate") cfg.command = tailvc::Command::simulate;
  else if (command == "qq") cfg.command = tailvc::Command::qq;
  else {
    std::cerr << R"({"error":{"kind":"InvalidConfig","message":"unknown command )" << command
              << R"("}})" << std::endl;
    return 1;
  }

  if (kernel == "epanechnikov") cfg.kernel = tailvc::KernelFamily::epanechnikov_product;
  else if (kernel == "spherical") cfg.kernel = tailvc::KernelFamily::epanechnikov_spherical;
  else {
    std::cerr << R"({"error":{"kind":"InvalidConfig","message":"unknown kernel"}})" << std::endl;
    return 1;
  }
  cfg.xi_form = xi_variant == "printed" ? tailvc::XiForm::second_derivative
                                        : tailvc::XiForm::gradient_outer;
  cfg.discrepancy_form = discrepancy_variant == "cvm"
                             ? tailvc::DiscrepancyForm::cramer_von_mises
                             : tailvc::DiscrepancyForm::literal;
  cfg.sigma_form = sigma_variant == "diagonal" ? tailvc::SigmaForm::diagonal
                                               : tailvc::SigmaForm::wald;
  cfg.mapping = tailvc::ColumnMapping{response, x_cols, t_cols};
  cfg.bandwidth = bandwidth;
  cfg.bandwidth_grid = bandwidth_grid;
  cfg.fraction = fraction;
  cfg.fraction_grid = fraction_grid;
  cfg.normal_score_cols = normal_score;
  cfg.include_intercept = !no_intercept;

  if (cfg.command != tailvc::Command::simulate) {
    if (cfg.input.empty()) {
      std::cerr << R"({"error":{"kind":"InvalidConfig","message":"--input is required"}})"
                << std::endl;
      return 1;
    }
    if (response.empty() || t_cols.empty()) {
      std::cerr << R"({"error":{"kind":"InvalidConfig","message":)"
                << R"("--response and --t-cols are required"}})" << std::endl;
      return 1;
    }
  }

  return tailvc::run(cfg);
}

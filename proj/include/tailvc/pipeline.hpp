#ifndef TAILVC_PIPELINE_HPP
#define TAILVC_PIPELINE_HPP

#include <cstdint>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailvc/diagnostics.hpp"
#include "tailvc/errors.hpp"
#include "tailvc/estimator.hpp"
#include "tailvc/io.hpp"
#include "tailvc/model.hpp"
#include "tailvc/simulation.hpp"
#include "tailvc/testing.hpp"
#include "tailvc/tuning.hpp"

namespace tailvc {

enum class Command { fit, tune, test, simulate, qq };

inline const char* command_name(Command c) {
  switch (c) {
    case Command::fit: return "fit";
    case Command::tune: return "tune";
    case Command::test: return "test";
    case Command::simulate: return "simulate";
    case Command::qq: return "qq";
  }
  return "?";
}

// Full description of one CLI run. Field applicability depends on the
// command; run() validates what it needs.
struct RunConfig {
  Command command = Command::fit;
  std::string input;
  std::string output;
  ColumnMapping mapping;
  KernelFamily kernel = KernelFamily::epanechnikov_product;
  std::vector<double> bandwidth;        // H diagonal; a single value is broadcast
  std::vector<double> bandwidth_grid;   // CV candidates, broadcast per axis
  double fraction = std::numeric_limits<double>::quiet_NaN();  // n0/n
  std::vector<double> fraction_grid;    // threshold candidates
  int folds = 0;  // 0 = command default (20; the setting's D for simulate)
  double alpha = 0.05;
  int grid_size = 0;  // 0 = default for q
  std::uint64_t seed = 0;
  std::vector<std::string> normal_score_cols;
  bool include_intercept = true;
  DiscrepancyForm discrepancy_form = DiscrepancyForm::literal;
  XiForm xi_form = XiForm::gradient_outer;
  SigmaForm sigma_form = SigmaForm::wald;
  unsigned threads = 1;
  int envelope_reps = 1000;
  // simulate only
  int setting = 1;
  int sim_n = 500;
  double sim_delta = 0.1;
  int replications = 100;
};

namespace detail {

inline Eigen::VectorXd broadcast_bandwidth(const std::vector<double>& values, Eigen::Index q) {
  if (values.empty()) fail(ErrorKind::invalid_config, "--bandwidth is required");
  Eigen::VectorXd h(q);
  if (static_cast<Eigen::Index>(values.size()) == q) {
    for (Eigen::Index k = 0; k < q; ++k) h[k] = values[static_cast<std::size_t>(k)];
  } else if (values.size() == 1) {
    h.setConstant(values[0]);
  } else {
    fail(ErrorKind::invalid_config, "--bandwidth needs 1 or q values");
  }
  return h;
}

inline std::string xi_form_name(XiForm f) {
  return f == XiForm::gradient_outer ? "rosenblatt" : "printed";
}

inline std::string discrepancy_form_name(DiscrepancyForm f) {
  return f == DiscrepancyForm::literal ? "literal" : "cvm";
}

inline std::string sigma_form_name(SigmaForm f) {
  return f == SigmaForm::wald ? "wald" : "diagonal";
}

inline nlohmann::json base_manifest(const RunConfig& cfg) {
  nlohmann::json m;
  m["tool"] = "tailvc";
  m["command"] = command_name(cfg.command);
  m["input"] = cfg.input;
  m["output"] = cfg.output;
  m["seed"] = cfg.seed;
  m["alpha"] = cfg.alpha;
  m["threads"] = cfg.threads;
  m["kernel"] =
      cfg.kernel == KernelFamily::epanechnikov_product ? "epanechnikov" : "spherical";
  m["xi_variant"] = xi_form_name(cfg.xi_form);
  m["discrepancy_variant"] = discrepancy_form_name(cfg.discrepancy_form);
  m["sigma_variant"] = sigma_form_name(cfg.sigma_form);
  m["include_intercept"] = cfg.include_intercept;
  return m;
}

inline void write_manifest(const RunConfig& cfg, nlohmann::json manifest) {
  std::ofstream out(cfg.output + ".manifest.json");
  if (!out) fail(ErrorKind::file_not_found, "cannot write manifest next to " + cfg.output);
  out << manifest.dump(2) << "\n";
}

inline nlohmann::json rescaling_json(const TRescaling& map) {
  nlohmann::json j;
  for (Eigen::Index k = 0; k < map.offset.size(); ++k) {
    j["offset"].push_back(map.offset[k]);
    j["scale"].push_back(map.scale[k]);
  }
  return j;
}

inline std::vector<std::string> coefficient_names(const ColumnMapping& mapping,
                                                  bool intercept) {
  std::vector<std::string> names;
  if (intercept) names.push_back("(intercept)");
  for (const std::string& c : mapping.x_cols) names.push_back(c);
  return names;
}

struct LoadedInput {
  IngestResult ingest;
  FitConfig fit_config;
  Eigen::Index grid_points;
};

inline LoadedInput load_for_fit(const RunConfig& cfg) {
  LoadedInput in{ingest_csv(cfg.input, cfg.mapping, cfg.normal_score_cols, cfg.seed),
                 FitConfig{}, 0};
  const Dataset& data = in.ingest.data;
  in.fit_config.kernel = KernelSpec{cfg.kernel, static_cast<int>(data.q())};
  in.fit_config.include_intercept = cfg.include_intercept;
  in.fit_config.bandwidths = broadcast_bandwidth(cfg.bandwidth, data.q());
  if (std::isnan(cfg.fraction))
    fail(ErrorKind::invalid_config, "--fraction is required for this command");
  in.fit_config.threshold = threshold_for_fraction(data.y, cfg.fraction);
  in.grid_points = cfg.grid_size > 0 ? cfg.grid_size : default_grid_size(data.q());
  return in;
}

}  // namespace detail

// ---- fit -----------------------------------------------------------------

inline void run_fit(const RunConfig& cfg) {
  auto in = detail::load_for_fit(cfg);
  const Dataset& data = in.ingest.data;
  GridOptions gopts;
  gopts.threads = cfg.threads;
  const GridFit grid = fit_grid(data, in.grid_points, in.fit_config, gopts);
  const Eigen::Index d = design_dim(data, in.fit_config);
  const double level = 1.0 - cfg.alpha;

  std::vector<std::vector<std::pair<double, double>>> cis;
  for (Eigen::Index j = 0; j < d; ++j)
    cis.push_back(pointwise_ci(grid, j, data, in.fit_config, level, cfg.sigma_form));

  const Eigen::Index q = data.q();
  std::vector<std::string> lines;
  {
    std::string header;
    for (Eigen::Index k = 0; k < q; ++k) header += "t" + std::to_string(k + 1) + ",";
    for (Eigen::Index k = 0; k < q; ++k) header += "t" + std::to_string(k + 1) + "_original,";
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::string tag = "theta" +
          std::to_string(in.fit_config.include_intercept ? j : j + 1);
      header += tag + "," + tag + "_lo," + tag + "_hi,";
    }
    header += "weight,converged,iterations,gradient_norm";
    lines.push_back(header);
  }
  for (std::size_t l = 0; l < grid.grid.size(); ++l) {
    const CoefficientFit& fit = grid.fits[l];
    std::string line;
    const Eigen::VectorXd orig = in.ingest.rescaling.from_unit(grid.grid[l]);
    for (Eigen::Index k = 0; k < q; ++k) line += format_double(grid.grid[l][k]) + ",";
    for (Eigen::Index k = 0; k < q; ++k) line += format_double(orig[k]) + ",";
    for (Eigen::Index j = 0; j < d; ++j) {
      line += format_double(fit.usable() ? fit.theta[j]
                                          : std::numeric_limits<double>::quiet_NaN()) + ",";
      line += format_double(cis[static_cast<std::size_t>(j)][l].first) + ",";
      line += format_double(cis[static_cast<std::size_t>(j)][l].second) + ",";
    }
    line += format_double(fit.local_exceedance_weight) + ",";
    line += (fit.converged ? "1" : "0");
    line += "," + std::to_string(fit.iterations);
    line += "," + format_double(fit.gradient_norm);
    lines.push_back(line);
  }
  write_lines(cfg.output, lines);

  nlohmann::json manifest = detail::base_manifest(cfg);
  manifest["columns"] = {{"response", cfg.mapping.response},
                         {"x", cfg.mapping.x_cols},
                         {"t", cfg.mapping.t_cols}};
  manifest["normal_score"] = cfg.normal_score_cols;
  manifest["rescaling"] = detail::rescaling_json(in.ingest.rescaling);
  for (Eigen::Index k = 0; k < in.fit_config.bandwidths.size(); ++k)
    manifest["bandwidth"].push_back(in.fit_config.bandwidths[k]);
  manifest["fraction"] = cfg.fraction;
  manifest["threshold"] = in.fit_config.threshold;
  manifest["grid_size"] = in.grid_points;
  manifest["ci_level"] = level;
  detail::write_manifest(cfg, std::move(manifest));
}

// Reads a grid file emitted by run_fit back into a GridFit (locations on the
// rescaled scale, thetas and solver metadata).
inline GridFit read_grid_fit(const std::string& path, Eigen::Index q, Eigen::Index d,
                             bool include_intercept) {
  const CsvTable table = read_csv(path);
  GridFit out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Eigen::VectorXd t(q);
    for (Eigen::Index k = 0; k < q; ++k)
      t[k] = parse_double(table.rows[r][static_cast<std::size_t>(k)], r + 2, k + 1);
    CoefficientFit fit;
    fit.location = t;
    fit.theta.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::string tag = "theta" + std::to_string(include_intercept ? j : j + 1);
      fit.theta[j] = parse_double(table.rows[r][table.column(tag)], r + 2, 0);
    }
    fit.local_exceedance_weight = parse_double(table.rows[r][table.column("weight")], r + 2, 0);
    fit.converged = table.rows[r][table.column("converged")] == "1";
    fit.iterations =
        static_cast<int>(parse_double(table.rows[r][table.column("iterations")], r + 2, 0));
    fit.gradient_norm = parse_double(table.rows[r][table.column("gradient_norm")], r + 2, 0);
    out.grid.push_back(t);
    out.fits.push_back(std::move(fit));
  }
  return out;
}

// ---- tune ----------------------------------------------------------------

inline void run_tune(const RunConfig& cfg) {
  auto ingest = ingest_csv(cfg.input, cfg.mapping, cfg.normal_score_cols, cfg.seed);
  const Dataset& data = ingest.data;
  const KernelSpec kernel{cfg.kernel, static_cast<int>(data.q())};

  TuningPolicy policy;
  if (!cfg.bandwidth_grid.empty()) {
    policy.bandwidth_candidates.clear();
    for (double h : cfg.bandwidth_grid)
      policy.bandwidth_candidates.push_back(Eigen::VectorXd::Constant(data.q(), h));
  }
  if (!std::isnan(cfg.fraction)) policy.predetermined_fraction = cfg.fraction;
  if (!cfg.fraction_grid.empty()) policy.threshold_fractions = cfg.fraction_grid;
  policy.folds = cfg.folds > 0 ? cfg.folds : 20;
  policy.discrepancy_form = cfg.discrepancy_form;
  policy.threads = cfg.threads;

  const TuningResult tuned = tune(data, kernel, cfg.include_intercept, policy, cfg.seed);

  std::vector<std::string> lines{"section,candidate,score,selected"};
  for (const auto& [h, score] : tuned.cv_table) {
    const bool selected = (h - tuned.bandwidths).lpNorm<Eigen::Infinity>() == 0.0;
    lines.push_back("cv_bandwidth," + format_double(h[0]) + "," + format_double(score) + "," +
                    (selected ? "1" : "0"));
  }
  for (const auto& [omega, score] : tuned.dm_table) {
    const bool selected = omega == tuned.threshold;
    lines.push_back("dm_threshold," + format_double(omega) + "," + format_double(score) + "," +
                    (selected ? "1" : "0"));
  }
  write_lines(cfg.output, lines);

  nlohmann::json manifest = detail::base_manifest(cfg);
  manifest["rescaling"] = detail::rescaling_json(ingest.rescaling);
  manifest["folds"] = policy.folds;
  manifest["predetermined_fraction"] = policy.predetermined_fraction;
  for (Eigen::Index k = 0; k < tuned.bandwidths.size(); ++k)
    manifest["selected_bandwidth"].push_back(tuned.bandwidths[k]);
  manifest["selected_threshold"] = tuned.threshold;
  manifest["selected_fraction"] = tuned.threshold_fraction;
  detail::write_manifest(cfg, std::move(manifest));
}

// ---- test ----------------------------------------------------------------

inline void run_test(const RunConfig& cfg) {
  auto in = detail::load_for_fit(cfg);
  const Dataset& data = in.ingest.data;
  GridOptions gopts;
  gopts.threads = cfg.threads;
  const GridFit grid = fit_grid(data, in.grid_points, in.fit_config, gopts);
  const Eigen::Index d = design_dim(data, in.fit_config);
  const auto names = detail::coefficient_names(cfg.mapping, cfg.include_intercept);

  std::vector<std::string> lines{
      "coefficient,column,null,statistic,p_value,rejected,critical_low,critical_high,"
      "null_value,skipped_points"};
  for (Eigen::Index j = 0; j < d; ++j) {
    for (const NullKind kind : {NullKind::constant, NullKind::zero}) {
      const TestOutcome outcome =
          kind == NullKind::zero
              ? test_zero(data, grid, j, in.fit_config, cfg.alpha, cfg.xi_form,
                          cfg.sigma_form)
              : test_constant(data, grid, j, in.fit_config, cfg.alpha, cfg.xi_form,
                              cfg.sigma_form);
      const std::string label =
          "theta" + std::to_string(cfg.include_intercept ? j : j + 1);
      lines.push_back(label + "," + names[static_cast<std::size_t>(j)] + "," +
                      (kind == NullKind::zero ? "H0Z" : "H0C") + "," +
                      format_double(outcome.statistic) + "," + format_double(outcome.p_value) +
                      "," + (outcome.rejected ? "1" : "0") + "," +
                      format_double(outcome.critical_low) + "," +
                      format_double(outcome.critical_high) + "," +
                      format_double(outcome.null_value) + "," +
                      std::to_string(outcome.skipped_points));
    }
  }
  write_lines(cfg.output, lines);

  nlohmann::json manifest = detail::base_manifest(cfg);
  manifest["rescaling"] = detail::rescaling_json(in.ingest.rescaling);
  for (Eigen::Index k = 0; k < in.fit_config.bandwidths.size(); ++k)
    manifest["bandwidth"].push_back(in.fit_config.bandwidths[k]);
  manifest["fraction"] = cfg.fraction;
  manifest["threshold"] = in.fit_config.threshold;
  manifest["grid_size"] = in.grid_points;
  detail::write_manifest(cfg, std::move(manifest));
}

// ---- simulate --------------------------------------------------------------

inline void run_simulate(const RunConfig& cfg) {
  SimSetting setting = make_setting(cfg.setting, cfg.sim_delta, cfg.sim_n);
  if (cfg.grid_size > 0) setting.grid_size = cfg.grid_size;

  TuningPolicy policy;
  if (!cfg.bandwidth_grid.empty()) {
    for (double h : cfg.bandwidth_grid)
      policy.bandwidth_candidates.push_back(Eigen::VectorXd::Constant(setting.q, h));
  }
  policy.predetermined_fraction = std::isnan(cfg.fraction) ? 0.2 : cfg.fraction;
  if (!cfg.fraction_grid.empty()) policy.threshold_fractions = cfg.fraction_grid;
  policy.folds = cfg.folds > 0 ? cfg.folds : setting.folds;
  policy.discrepancy_form = cfg.discrepancy_form;

  const McReport report =
      run_monte_carlo(setting, cfg.replications, policy, cfg.seed, cfg.threads, cfg.alpha,
                      cfg.xi_form, cfg.sigma_form);

  std::vector<std::string> lines{"coefficient,mse,rr_h0c,rr_h0z"};
  for (std::size_t j = 0; j < report.labels.size(); ++j) {
    lines.push_back(report.labels[j] + "," +
                    format_double(report.mse[static_cast<Eigen::Index>(j)]) + "," +
                    format_double(report.rr_constant[static_cast<Eigen::Index>(j)]) + "," +
                    format_double(report.rr_zero[static_cast<Eigen::Index>(j)]));
  }
  write_lines(cfg.output, lines);

  nlohmann::json manifest = detail::base_manifest(cfg);
  manifest["setting"] = report.setting_id;
  manifest["n"] = report.n;
  manifest["delta"] = report.delta;
  manifest["replications"] = report.replications;
  manifest["completed"] = report.completed;
  manifest["failed"] = report.failed;
  manifest["folds"] = policy.folds;
  for (const ReplicationSummary& run : report.runs) {
    manifest["runs"].push_back({{"seed", run.seed},
                                {"ok", run.ok},
                                {"bandwidth", run.bandwidth},
                                {"fraction", run.fraction}});
  }
  detail::write_manifest(cfg, std::move(manifest));
}

// ---- qq --------------------------------------------------------------------

inline void run_qq(const RunConfig& cfg) {
  auto in = detail::load_for_fit(cfg);
  const std::vector<double> residuals = exponential_residuals(in.ingest.data, in.fit_config);
  const QqData qq = qq_data(residuals, cfg.envelope_reps, cfg.seed, cfg.threads);

  std::vector<std::string> lines{"index,theoretical,empirical,envelope_low,envelope_high"};
  for (std::size_t l = 0; l < qq.theoretical.size(); ++l) {
    lines.push_back(std::to_string(l + 1) + "," + format_double(qq.theoretical[l]) + "," +
                    format_double(qq.empirical[l]) + "," + format_double(qq.envelope_low[l]) +
                    "," + format_double(qq.envelope_high[l]));
  }
  write_lines(cfg.output, lines);

  nlohmann::json manifest = detail::base_manifest(cfg);
  manifest["rescaling"] = detail::rescaling_json(in.ingest.rescaling);
  manifest["fraction"] = cfg.fraction;
  manifest["threshold"] = in.fit_config.threshold;
  manifest["envelope_reps"] = cfg.envelope_reps;
  manifest["n0"] = qq.theoretical.size();
  detail::write_manifest(cfg, std::move(manifest));
}

// ---- dispatch ---------------------------------------------------------------

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config:
    case ErrorKind::invalid_alpha:
    case ErrorKind::shape_mismatch:
    case ErrorKind::dimension_mismatch:
    case ErrorKind::bandwidth_out_of_range:
    case ErrorKind::empty_grid:
    case ErrorKind::empty_input:
      return 1;
    case ErrorKind::file_not_found:
    case ErrorKind::parse_error:
    case ErrorKind::non_positive_response:
    case ErrorKind::empty_dataset:
    case ErrorKind::degenerate_coordinate:
    case ErrorKind::no_exceedances:
      return 2;
    default:
      return 3;
  }
}

// Runs one command; on failure prints a machine-readable error record to
// stderr and returns the documented exit status.
inline int run(const RunConfig& cfg) {
  try {
    if (cfg.output.empty()) fail(ErrorKind::invalid_config, "--output is required");
    switch (cfg.command) {
      case Command::fit: run_fit(cfg); break;
      case Command::tune: run_tune(cfg); break;
      case Command::test: run_test(cfg); break;
      case Command::simulate: run_simulate(cfg); break;
      case Command::qq: run_qq(cfg); break;
    }
    return 0;
  } catch (const Error& e) {
    nlohmann::json record{{"error", {{"kind", error_kind_name(e.kind())},
                                     {"message", e.what()}}}};
    std::cerr << record.dump() << std::endl;
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    nlohmann::json record{{"error", {{"kind", "Internal"}, {"message", e.what()}}}};
    std::cerr << record.dump() << std::endl;
    return 3;
  }
}

}  // namespace tailvc

#endif

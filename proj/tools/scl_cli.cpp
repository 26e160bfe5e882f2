// scl: command line front end for the clustered-design library.
//
// Every subcommand reads CSV and writes CSV; output files go to --out (a
// directory for multi-file commands, a file or stdout otherwise).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scl/csv_io.hpp"
#include "scl/design.hpp"
#include "scl/errors.hpp"
#include "scl/estimators.hpp"
#include "scl/geometry.hpp"
#include "scl/harness.hpp"
#include "scl/oracle.hpp"
#include "scl/outcomes.hpp"
#include "scl/owopt.hpp"

namespace fs = std::filesystem;
using namespace scl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAssert = 3;

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

fs::path ensure_dir(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

// Writes to a file when a path is given, stdout otherwise.
template <class Fn>
void emit(const std::string& path, Fn&& fn) {
  if (path.empty() || path == "-") {
    fn(std::cout);
    return;
  }
  auto out = open_out(path);
  fn(out);
}

std::vector<std::uint8_t> read_treatments(const CsvTable& table, std::size_t n) {
  const Vector d = numeric_column(table, "d");
  if (static_cast<std::size_t>(d.size()) != n) throw InvalidInput("treatment column length mismatch");
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = d(static_cast<Eigen::Index>(i));
    if (v != 0.0 && v != 1.0) throw InvalidInput("treatments must be 0 or 1");
    out[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

struct Common {
  std::string population;
  std::string clusters;
  std::string out;
  double eta = 1.0;
  double p = 0.5;
};

void cmd_simulate_population(std::size_t n, std::uint64_t seed, const std::string& out) {
  const auto space = uniform_disk_population(n, seed);
  emit(out, [&](std::ostream& os) { write_population(os, space); });
}

void cmd_design(const Common& c, double c0, std::optional<double> h_override, std::uint64_t seed) {
  const auto space = read_population(c.population);
  const double h = h_override ? *h_override : scaling_rule(space.size(), c.eta, c0);
  const auto partition = scaling_clusters(space, h);
  const auto counts = incidence(space, partition, h);
  const auto draw = draw_treatments(partition, c.p, seed);
  const auto dir = ensure_dir(c.out.empty() ? "." : c.out);
  {
    auto os = open_out(dir / "clusters.csv");
    write_clusters(os, partition);
  }
  {
    auto os = open_out(dir / "incidence.csv");
    CsvWriter csv(os);
    csv.row({"level", "id", "count"});
    for (std::size_t i = 0; i < counts.phi.size(); ++i) {
      csv.cell("unit").cell(i).cell(counts.phi[i]);
      csv.end_row();
    }
    for (std::size_t k = 0; k < counts.gamma.size(); ++k) {
      csv.cell("cluster").cell(k).cell(counts.gamma[k]);
      csv.end_row();
    }
  }
  {
    auto os = open_out(dir / "treatments.csv");
    CsvWriter csv(os);
    csv.row({"unit_id", "d"});
    for (std::size_t i = 0; i < draw.d.size(); ++i) {
      csv.cell(i).cell(static_cast<int>(draw.d[i]));
      csv.end_row();
    }
  }
  std::cerr << "h=" << format_double(h) << " clusters=" << partition.num_clusters()
            << " phi_max=" << counts.phi_max << " gamma_max=" << counts.gamma_max << "\n";
}

void cmd_audit(const Common& c, const AuditThresholds& thresholds, std::optional<std::uint64_t> dgp_seed,
               double k1) {
  const auto space = read_population(c.population);
  const auto grid = default_size_grid(space);
  const auto geo = audit_geometry(space, grid, thresholds);
  emit(c.out, [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"assumption", "constant_hat", "threshold", "pass"});
    csv.cell("bounded_density").cell(geo.k3_hat).cell(thresholds.k3).cell(geo.density_pass ? "true" : "false");
    csv.end_row();
    csv.cell("packing").cell(geo.k4_hat).cell(thresholds.k4).cell(geo.packing_pass ? "true" : "false");
    csv.end_row();
    csv.cell("covering").cell(geo.k5_hat).cell(thresholds.k5).cell(geo.covering_pass ? "true" : "false");
    csv.end_row();
    if (dgp_seed) {
      const auto outcomes = make_sim_dgp(space, *dgp_seed);
      InterferenceBudget budget;
      budget.eta = c.eta;
      budget.k1 = k1;
      const auto audit = audit_interference(outcomes.A, space, budget, grid);
      csv.cell("interference")
          .cell(fit_interference_constant(outcomes.A, space, c.eta, grid))
          .cell(k1)
          .cell(audit.pass ? "true" : "false");
      csv.end_row();
    }
  });
}

void cmd_dgp(const Common& c, std::uint64_t seed, bool dump, const std::string& treatments) {
  const auto space = read_population(c.population);
  const auto outcomes = make_sim_dgp(space, seed);
  const auto guess = make_guess(space, seed);
  const auto dir = ensure_dir(c.out.empty() ? "." : c.out);
  {
    auto os = open_out(dir / "dgp_summary.csv");
    CsvWriter csv(os);
    csv.row({"n", "theta", "outcome_bound", "k1_fit", "guess_total"});
    csv.cell(space.size()).cell(outcomes.theta).cell(outcome_bound(outcomes));
    csv.cell(fit_interference_constant(outcomes.A, space, c.eta)).cell(guess.mean_total());
    csv.end_row();
  }
  if (!treatments.empty()) {
    const auto d = read_treatments(read_csv(treatments), space.size());
    const Vector Y = realize(outcomes, d);
    auto os = open_out(dir / "outcomes.csv");
    CsvWriter csv(os);
    csv.row({"unit_id", "Y", "d"});
    for (std::size_t i = 0; i < d.size(); ++i) {
      csv.cell(i).cell(Y(static_cast<Eigen::Index>(i))).cell(static_cast<int>(d[i]));
      csv.end_row();
    }
  }
  if (dump) {
    if (space.size() > 500) throw InvalidInput("--dump-matrices is limited to n <= 500");
    auto a = open_out(dir / "A.csv");
    write_matrix(a, outcomes.A);
    auto g = open_out(dir / "A_hat.csv");
    write_matrix(g, guess.A_hat);
  }
}

void cmd_estimate(const Common& c, const std::string& outcomes_path, const std::string& estimator,
                  double h, double level, const std::string& guess_path) {
  const auto space = read_population(c.population);
  const auto partition = read_clusters(c.clusters, space.size());
  const auto table = read_csv(outcomes_path);
  const Vector Y = numeric_column(table, "Y");
  const auto d = read_treatments(table, space.size());
  const auto b = cluster_bits_from_units(partition, d);
  const auto kind = parse_estimator(estimator == "shrink" ? "shrinkage" : estimator);
  const ClusterProximity proximity(space, partition);
  const auto sets = neighborhood_clusters(space, proximity, h);

  std::optional<EstimateReport> report;
  std::string flags;
  Vector T;
  try {
    switch (kind) {
      case EstimatorKind::ht:
        report = ipw_ht(Y, d, space, partition, h, c.p);
        break;
      case EstimatorKind::hajek:
        report = hajek(Y, d, space, partition, h, c.p);
        T = treated_fraction(sets, b);
        break;
      case EstimatorKind::ols: {
        const auto ex = exposure(extend_uniform_overlap(proximity, sets), b);
        report = ols(Y, ex);
        T = ex.T;
        break;
      }
      case EstimatorKind::shrinkage: {
        if (guess_path.empty()) throw InvalidInput("shrinkage needs --guess");
        const auto ex = exposure(extend_uniform_overlap(proximity, sets), b);
        report = shrinkage(Y, ex, d, make_guess_from(read_matrix(guess_path)));
        break;
      }
      case EstimatorKind::ow:
        throw InvalidInput("use ow-weights for the optimized-weight estimator");
    }
    if (T.size() > 0) {
      const auto v = variance_ci(*report, Y, T, c.p, space, partition, h, c.eta, level);
      attach(*report, v);
      if (v.truncated) flags = "variance_truncated";
    }
  } catch (const EstimationFailure& err) {
    flags = to_string(err.kind());
  }
  emit(c.out, [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"estimator", "estimate", "var_hat", "ci_lo", "ci_hi", "fail_flags"});
    csv.cell(to_string(kind));
    if (report) {
      csv.cell(report->estimate);
    } else {
      csv.cell(std::string_view{});
    }
    if (report && report->ci) {
      csv.cell(*report->variance_hat).cell(report->ci->lo).cell(report->ci->hi);
    } else {
      csv.cell(std::string_view{}).cell(std::string_view{}).cell(std::string_view{});
    }
    csv.cell(flags);
    csv.end_row();
  });
}

void cmd_ow_weights(const Common& c, double h, const InterferenceBudget& budget,
                    const std::vector<int>& exponents, const std::string& method,
                    std::size_t draws, std::uint64_t seed) {
  const auto space = read_population(c.population);
  const auto partition = read_clusters(c.clusters, space.size());
  std::vector<double> sizes;
  for (int k : exponents) sizes.push_back(std::ldexp(h, k));
  sizes.push_back(h);
  const auto grid = make_size_grid(space, sizes);
  TableOptions options;
  if (method == "mc") {
    options.method = TableMethod::monte_carlo;
    options.draws = draws;
    options.seed = seed;
  } else if (method != "exact") {
    throw InvalidInput("--method must be exact or mc");
  }
  const auto tables = saturation_tables(space, partition, grid, c.p, options);
  const auto result = optimize_weights(tables, budget, h, c.p);
  const auto dir = ensure_dir(c.out.empty() ? "." : c.out);
  {
    auto os = open_out(dir / "weights.csv");
    CsvWriter csv(os);
    csv.row({"unit_id", "s", "w"});
    for (Eigen::Index i = 0; i < result.W.rows(); ++i) {
      for (std::size_t s = 0; s < grid.size(); ++s) {
        csv.cell(static_cast<long long>(i)).cell(grid.sizes[s]).cell(result.W(i, static_cast<Eigen::Index>(s)));
        csv.end_row();
      }
    }
  }
  auto os = open_out(dir / "qp_report.csv");
  CsvWriter csv(os);
  csv.row({"objective", "kkt_residual", "iterations", "start_objective", "converged"});
  csv.cell(result.objective).cell(result.kkt_residual).cell(result.iterations);
  csv.cell(result.start_objective).cell(result.converged ? "true" : "false");
  csv.end_row();
  if (!result.converged) std::cerr << "warning: QP solver stopped before reaching tolerance\n";
}

void cmd_oracle(const Common& c, const std::string& estimator, double h, std::uint64_t seed) {
  const auto space = read_population(c.population);
  const auto partition = read_clusters(c.clusters, space.size());
  const auto outcomes = make_sim_dgp(space, seed);
  const auto guess = make_guess(space, seed);
  const auto kind = parse_estimator(estimator == "shrink" ? "shrinkage" : estimator);
  const ClusterProximity proximity(space, partition);
  const auto sets = neighborhood_clusters(space, proximity, h);
  const auto extended = extend_uniform_overlap(proximity, sets);
  const ClusterResponse response(outcomes, partition);
  const double p = c.p;
  AssignmentFn fn = [&](std::span<const std::uint8_t> b) -> std::optional<double> {
    const Vector Y = response.realize(b);
    try {
      switch (kind) {
        case EstimatorKind::ht: return ipw_ht(Y, b, sets, p).estimate;
        case EstimatorKind::hajek: return hajek(Y, b, sets, p).estimate;
        case EstimatorKind::ols: return ols(Y, exposure(extended, b)).estimate;
        case EstimatorKind::shrinkage:
          return shrinkage(Y, exposure(extended, b), unit_treatments(partition, b), guess).estimate;
        case EstimatorKind::ow: break;
      }
    } catch (const EstimationFailure&) {
      return std::nullopt;
    }
    throw InvalidInput("oracle does not support the optimized-weight estimator");
  };
  const auto e = exact_expectation(fn, enumerate(partition, p));
  emit(c.out, [&](std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"estimator", "expectation", "p_defined", "theta"});
    csv.cell(to_string(kind)).cell(e.value).cell(e.p_defined).cell(outcomes.theta);
    csv.end_row();
  });
}

int cmd_replicate(const std::string& config_path, const std::vector<std::string>& settings,
                  const std::string& out, const std::vector<std::string>& asserts) {
  ExperimentConfig config;
  std::vector<AssertOutcome> checks;
  try {
    config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value");
      apply_setting(config, std::string_view(kv).substr(0, eq), std::string_view(kv).substr(eq + 1));
    }
    config.validate();
  } catch (const InvalidInput& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  }
  const auto result = run_experiment(config);
  const auto dir = ensure_dir(out.empty() ? "." : out);
  {
    auto os = open_out(dir / "results.csv");
    write_results_csv(os, result.rows);
  }
  {
    auto os = open_out(dir / "slopes.csv");
    write_slopes_csv(os, result.slopes);
  }
  bool ok = true;
  for (const auto& a : asserts) {
    AssertOutcome check;
    try {
      check = check_assertion(a, result);
    } catch (const ConfigError& err) {
      std::cerr << "config error: " << err.what() << "\n";
      return kExitConfig;
    }
    std::cout << (check.pass ? "PASS " : "FAIL ") << check.spec << " (" << check.detail << ")\n";
    ok = ok && check.pass;
  }
  return ok ? 0 : kExitAssert;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scaling Clusters designs and global-effect estimators"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help");

  Common common;
  auto add_population = [&](CLI::App* sub) {
    sub->add_option("--population", common.population, "population CSV")->required();
  };

  std::size_t sim_n = 100;
  std::uint64_t seed = 1;
  auto* sim = app.add_subcommand("simulate-population", "uniform disk population of radius sqrt(n)");
  sim->add_option("--n", sim_n)->required();
  sim->add_option("--seed", seed);
  sim->add_option("--out", common.out, "output CSV (stdout by default)");

  double c0 = 1.0;
  std::optional<double> h_override;
  auto* design = app.add_subcommand("design", "build Scaling Clusters and draw treatments");
  add_population(design);
  design->add_option("--eta", common.eta);
  design->add_option("--c0", c0);
  design->add_option("--h", h_override, "override the scaling rule");
  design->add_option("--p", common.p);
  design->add_option("--seed", seed);
  design->add_option("--out", common.out, "output directory");

  AuditThresholds thresholds;
  std::optional<std::uint64_t> dgp_seed;
  double k1 = 1.0;
  auto* audit = app.add_subcommand("audit", "empirical geometry and interference constants");
  add_population(audit);
  audit->add_option("--k3", thresholds.k3);
  audit->add_option("--k4", thresholds.k4);
  audit->add_option("--k5", thresholds.k5);
  audit->add_option("--eta", common.eta);
  audit->add_option("--k1", k1);
  audit->add_option("--dgp-seed", dgp_seed, "also audit the simulated spillover matrix");
  audit->add_option("--out", common.out);

  bool dump = false;
  std::string treatments;
  auto* dgp = app.add_subcommand("dgp", "simulated outcome model on a population");
  add_population(dgp);
  dgp->add_option("--seed", seed);
  dgp->add_option("--eta", common.eta);
  dgp->add_option("--treatments", treatments, "CSV with column d; writes realized outcomes");
  dgp->add_flag("--dump-matrices", dump, "write A.csv and A_hat.csv (n <= 500)");
  dgp->add_option("--out", common.out, "output directory");

  std::string outcomes_path;
  std::string estimator = "ht";
  std::string guess_path;
  double h = 1.0;
  double level = 0.95;
  auto* estimate = app.add_subcommand("estimate", "point estimate and interval from one draw");
  add_population(estimate);
  estimate->add_option("--outcomes", outcomes_path, "CSV with columns Y,d")->required();
  estimate->add_option("--clusters", common.clusters)->required();
  estimate->add_option("--estimator", estimator)->check(CLI::IsMember({"ht", "hajek", "ols", "shrink", "shrinkage"}));
  estimate->add_option("--eta", common.eta);
  estimate->add_option("--h", h)->required();
  estimate->add_option("--p", common.p);
  estimate->add_option("--ci-level", level);
  estimate->add_option("--guess", guess_path, "dense guess matrix CSV (shrinkage)");
  estimate->add_option("--out", common.out);

  InterferenceBudget budget;
  std::vector<int> exponents{-5, -4, -3, -2, -1, 0, 1, 2};
  std::string method = "exact";
  std::size_t draws = 100000;
  auto* oww = app.add_subcommand("ow-weights", "solve for optimized weights");
  add_population(oww);
  oww->add_option("--clusters", common.clusters)->required();
  oww->add_option("--eta", budget.eta);
  oww->add_option("--k1", budget.k1);
  oww->add_option("--ybar", budget.ybar);
  oww->add_option("--p", common.p);
  oww->add_option("--h", h)->required();
  oww->add_option("--grid", exponents, "exponents k of the sizes h*2^k")->delimiter(',');
  oww->add_option("--method", method)->check(CLI::IsMember({"exact", "mc"}));
  oww->add_option("--mc-draws", draws);
  oww->add_option("--seed", seed);
  oww->add_option("--out", common.out, "output directory");

  auto* oracle = app.add_subcommand("oracle", "exact expectation over all cluster assignments");
  add_population(oracle);
  oracle->add_option("--clusters", common.clusters)->required();
  oracle->add_option("--estimator", estimator)->check(CLI::IsMember({"ht", "hajek", "ols", "shrink", "shrinkage"}));
  oracle->add_option("--p", common.p);
  oracle->add_option("--h", h)->required();
  oracle->add_option("--seed", seed, "outcome model seed");
  oracle->add_option("--out", common.out);

  std::string config_path;
  std::vector<std::string> settings;
  std::vector<std::string> asserts;
  auto* rep = app.add_subcommand("replicate", "Monte Carlo replication tables");
  rep->add_option("--config", config_path, "key = value file");
  rep->add_option("--set", settings, "override one key=value");
  rep->add_option("--out", common.out, "output directory");
  rep->add_option("--assert", asserts, "threshold check, e.g. slope:ols:scaling_clusters:-0.45:-0.22");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : kExitConfig;
  }

  try {
    budget.k_effects = budget.ybar;
    if (*sim) cmd_simulate_population(sim_n, seed, common.out);
    if (*design) cmd_design(common, c0, h_override, seed);
    if (*audit) cmd_audit(common, thresholds, dgp_seed, k1);
    if (*dgp) cmd_dgp(common, seed, dump, treatments);
    if (*estimate) cmd_estimate(common, outcomes_path, estimator, h, level, guess_path);
    if (*oww) cmd_ow_weights(common, h, budget, exponents, method, draws, seed);
    if (*oracle) cmd_oracle(common, estimator, h, seed);
    if (*rep) return cmd_replicate(config_path, settings, common.out, asserts);
  } catch (const InvalidInput& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

#include "scl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "scl/csv_io.hpp"
#include "scl/errors.hpp"
#include "scl/owopt.hpp"
#include "scl/rng.hpp"

namespace scl {

const char* to_string(DesignKind kind) {
  return kind == DesignKind::iid ? "iid" : "scaling_clusters";
}

DesignKind parse_design(std::string_view name) {
  if (name == "scaling_clusters" || name == "sc" || name == "clusters") return DesignKind::scaling_clusters;
  if (name == "iid") return DesignKind::iid;
  throw ConfigError("unknown design '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  if (n_list.empty()) throw ConfigError("n_list is empty");
  for (auto n : n_list) {
    if (n < 2) throw ConfigError("every n must be at least 2");
  }
  if (designs.empty()) throw ConfigError("no designs selected");
  if (estimators.empty()) throw ConfigError("no estimators selected");
  if (!(eta > 0.0)) throw ConfigError("eta must be positive");
  if (!(c0 > 0.0)) throw ConfigError("c0 must be positive");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p must lie in (0, 1)");
  if (reps < 1) throw ConfigError("reps must be at least 1");
  if (grid_exponents.empty()) throw ConfigError("grid is empty");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci_level must lie in (0, 1)");
  if (!(hac_epsilon > 0.0 && hac_epsilon < 2.0 * eta / 3.0)) {
    throw ConfigError("hac_epsilon must lie in (0, 2 eta / 3)");
  }
  if (fixed_h && !(*fixed_h > 0.0)) throw ConfigError("fixed_h must be positive");
  if (ow_exact_clusters > kMaxExactClusters) throw ConfigError("ow_exact_clusters must be at most 20");
  if (ow_table_draws < 1) throw ConfigError("ow_table_draws must be at least 1");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_value(std::string_view key, const std::string& text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("bad value '" + text + "' for " + std::string(key));
  }
  return value;
}

template <class T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_value<T>(key, item));
  return out;
}

bool parse_bool(std::string_view key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("bad boolean '" + text + "' for " + std::string(key));
}

}  // namespace

void apply_setting(ExperimentConfig& config, std::string_view key_in, std::string_view value_in) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  if (key == "n_list" || key == "n") {
    config.n_list = parse_list<std::size_t>(key, value);
  } else if (key == "designs" || key == "design") {
    config.designs.clear();
    for (const auto& d : split(value, ',')) config.designs.push_back(parse_design(d));
  } else if (key == "estimators" || key == "estimator") {
    config.estimators.clear();
    for (const auto& e : split(value, ',')) {
      try {
        config.estimators.push_back(parse_estimator(e == "shrink" ? "shrinkage" : e));
      } catch (const InvalidInput& err) {
        throw ConfigError(err.what());
      }
    }
  } else if (key == "eta") {
    config.eta = parse_value<double>(key, value);
  } else if (key == "c0") {
    config.c0 = parse_value<double>(key, value);
  } else if (key == "p") {
    config.p = parse_value<double>(key, value);
  } else if (key == "reps") {
    config.reps = parse_value<std::size_t>(key, value);
  } else if (key == "base_seed" || key == "seed") {
    config.base_seed = parse_value<std::uint64_t>(key, value);
  } else if (key == "grid") {
    config.grid_exponents = parse_list<int>(key, value);
  } else if (key == "ci_level") {
    config.ci_level = parse_value<double>(key, value);
  } else if (key == "hac_epsilon") {
    config.hac_epsilon = parse_value<double>(key, value);
  } else if (key == "fixed_h") {
    if (value.empty() || value == "none") {
      config.fixed_h.reset();
    } else {
      config.fixed_h = parse_value<double>(key, value);
    }
  } else if (key == "ow_max_n") {
    config.ow_max_n = parse_value<std::size_t>(key, value);
  } else if (key == "ow_exact_clusters") {
    config.ow_exact_clusters = parse_value<std::size_t>(key, value);
  } else if (key == "ow_table_draws") {
    config.ow_table_draws = parse_value<std::size_t>(key, value);
  } else if (key == "timing") {
    config.timing = parse_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(std::string_view(raw).substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    apply_setting(config, std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

Scenario build_scenario(const ExperimentConfig& config, std::size_t n, DesignKind design) {
  const std::uint64_t pop_seed = config.base_seed + n;
  auto space = uniform_disk_population(n, pop_seed);
  const double h = config.fixed_h ? *config.fixed_h : scaling_rule(n, config.eta, config.c0);
  auto outcomes = make_sim_dgp(space, pop_seed);
  auto guess = make_guess(space, pop_seed);
  auto partition = design == DesignKind::iid ? singleton_partition(n) : scaling_clusters(space, h);
  return Scenario{n,
                  design,
                  pop_seed,
                  h,
                  std::move(space),
                  std::move(outcomes),
                  std::move(guess),
                  std::move(partition)};
}

ResultRow summarize(std::span<const std::optional<double>> estimates,
                    std::span<const std::optional<bool>> covered, double theta) {
  ResultRow row;
  row.theta = theta;
  std::vector<double> ok;
  for (const auto& e : estimates) {
    if (e) ok.push_back(*e);
  }
  row.reps_ok = ok.size();
  row.fail_rate = estimates.empty()
                      ? 0.0
                      : static_cast<double>(estimates.size() - ok.size()) /
                            static_cast<double>(estimates.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (ok.empty()) {
    row.mean_est = row.bias = row.rmse = row.rmse_se = row.mean_se = row.variance = nan;
    return row;
  }
  const double R = static_cast<double>(ok.size());
  double sum = 0.0;
  double sq_sum = 0.0;
  for (double e : ok) {
    sum += e;
    sq_sum += (e - theta) * (e - theta);
  }
  row.mean_est = sum / R;
  row.bias = row.mean_est - theta;
  const double mse = sq_sum / R;
  row.rmse = std::sqrt(mse);
  double var = 0.0;
  double sq_var = 0.0;
  for (double e : ok) {
    var += (e - row.mean_est) * (e - row.mean_est);
    const double dev = (e - theta) * (e - theta) - mse;
    sq_var += dev * dev;
  }
  row.variance = var / R;
  if (ok.size() > 1) {
    row.mean_se = std::sqrt(var / (R - 1.0) / R);
    row.rmse_se = row.rmse > 0.0 ? std::sqrt(sq_var / (R - 1.0) / R) / (2.0 * row.rmse) : 0.0;
  }
  std::size_t defined = 0;
  std::size_t hits = 0;
  for (const auto& c : covered) {
    if (!c) continue;
    ++defined;
    hits += *c ? 1 : 0;
  }
  if (defined > 0) row.coverage = static_cast<double>(hits) / static_cast<double>(defined);
  return row;
}

namespace {

struct RepOutcome {
  std::optional<double> estimate;
  std::optional<bool> covered;
};

bool wants(const ExperimentConfig& config, EstimatorKind kind) {
  return std::find(config.estimators.begin(), config.estimators.end(), kind) !=
         config.estimators.end();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  for (std::size_t n : config.n_list) {
    for (DesignKind design : config.designs) {
      const auto started = std::chrono::steady_clock::now();
      const Scenario sc = build_scenario(config, n, design);
      const double theta = sc.outcomes.theta;
      const std::size_t C = sc.partition.num_clusters();
      const ClusterProximity proximity(sc.space, sc.partition);
      const auto sets = neighborhood_clusters(sc.space, proximity, sc.h);
      const auto extended = extend_uniform_overlap(proximity, sets);
      const ClusterResponse response(sc.outcomes, sc.partition);
      const ClusterResponse guess_response(sc.guess.A_hat, sc.partition);
      const double guess_total = sc.guess.mean_total();
      const auto graph = hac_dependency_graph(sc.space, proximity, sc.h, config.hac_epsilon);

      std::vector<EstimatorKind> active;
      for (auto kind : config.estimators) {
        if (kind == EstimatorKind::ow && n > config.ow_max_n) continue;
        active.push_back(kind);
      }

      std::optional<OwWeightTable> ow;
      std::optional<SaturationPlan> plan;
      if (wants(config, EstimatorKind::ow) && n <= config.ow_max_n) {
        std::vector<double> sizes;
        for (int k : config.grid_exponents) sizes.push_back(std::ldexp(sc.h, k));
        sizes.push_back(sc.h);
        const auto grid = make_size_grid(sc.space, sizes);
        TableOptions topt;
        if (C > config.ow_exact_clusters) {
          topt.method = TableMethod::monte_carlo;
          topt.draws = config.ow_table_draws;
          topt.seed = derive_seed(sc.population_seed, 11);
        }
        const auto tables = saturation_tables(sc.space, sc.partition, grid, config.p, topt);
        InterferenceBudget budget;
        budget.eta = config.eta;
        budget.k1 = fit_interference_constant(sc.outcomes.A, sc.space, config.eta);
        budget.ybar = outcome_bound(sc.outcomes);
        budget.k_effects = budget.ybar;
        ow = optimize_weights(tables, budget, sc.h, config.p);
        plan.emplace(sc.space, proximity, sc.partition, grid);
      }

      const std::size_t E = active.size();
      std::vector<RepOutcome> outcomes(config.reps * E);
      std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16)
      for (std::ptrdiff_t rr = 0; rr < static_cast<std::ptrdiff_t>(config.reps); ++rr) {
        try {
          const auto r = static_cast<std::size_t>(rr);
          const auto b = draw_cluster_bits(C, config.p, config.base_seed + r);
          const Vector Y = response.realize(b);
          std::optional<ExposureVector> T;
          auto exposure_T = [&]() -> const ExposureVector& {
            if (!T) T = exposure(extended, b);
            return *T;
          };
          for (std::size_t e = 0; e < E; ++e) {
            auto& slot = outcomes[r * E + e];
            try {
              switch (active[e]) {
                case EstimatorKind::ht:
                  slot.estimate = ipw_ht(Y, b, sets, config.p).estimate;
                  break;
                case EstimatorKind::hajek: {
                  const auto rep = hajek(Y, b, sets, config.p);
                  const auto v = variance_ci(rep, Y, treated_fraction(sets, b), config.p, graph,
                                             config.ci_level);
                  slot.estimate = rep.estimate;
                  slot.covered = v.ci.lo <= theta && theta <= v.ci.hi;
                  break;
                }
                case EstimatorKind::ols: {
                  const auto rep = ols(Y, exposure_T());
                  const auto v = variance_ci(rep, Y, exposure_T().T, config.p, graph, config.ci_level);
                  slot.estimate = rep.estimate;
                  slot.covered = v.ci.lo <= theta && theta <= v.ci.hi;
                  break;
                }
                case EstimatorKind::shrinkage:
                  slot.estimate =
                      shrinkage(Y, exposure_T(), guess_response.realize(b), guess_total).estimate;
                  break;
                case EstimatorKind::ow: {
                  const auto d = unit_treatments(sc.partition, b);
                  slot.estimate = ow_estimate(Y, d, plan->profile(b), *ow).estimate;
                  break;
                }
              }
            } catch (const EstimationFailure&) {
              slot = {};
            }
          }
        } catch (...) {
#pragma omp critical
          if (!error) error = std::current_exception();
        }
      }
      if (error) std::rethrow_exception(error);

      const double seconds =
          config.timing
              ? std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()
              : 0.0;
      for (std::size_t e = 0; e < E; ++e) {
        std::vector<std::optional<double>> est(config.reps);
        std::vector<std::optional<bool>> cov(config.reps);
        for (std::size_t r = 0; r < config.reps; ++r) {
          est[r] = outcomes[r * E + e].estimate;
          cov[r] = outcomes[r * E + e].covered;
        }
        ResultRow row = summarize(est, cov, theta);
        row.n = n;
        row.design = design;
        row.estimator = active[e];
        row.seconds = seconds;
        result.rows.push_back(row);
      }
    }
  }
  result.slopes = all_slopes(result.rows);
  return result;
}

double rate_slope(std::span<const ResultRow> rows) {
  std::vector<double> ns;
  for (const auto& r : rows) ns.push_back(static_cast<double>(r.n));
  std::sort(ns.begin(), ns.end());
  if (std::unique(ns.begin(), ns.end()) - ns.begin() < 3) {
    throw InvalidInput("rate slope needs at least 3 distinct n");
  }
  double mx = 0.0;
  double my = 0.0;
  for (const auto& r : rows) {
    if (!(r.rmse > 0.0)) throw InvalidInput("rate slope needs positive rmse values");
    mx += std::log(static_cast<double>(r.n));
    my += std::log(r.rmse);
  }
  const double k = static_cast<double>(rows.size());
  mx /= k;
  my /= k;
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& r : rows) {
    const double dx = std::log(static_cast<double>(r.n)) - mx;
    sxy += dx * (std::log(r.rmse) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<SlopeRow> all_slopes(std::span<const ResultRow> rows) {
  std::vector<SlopeRow> out;
  std::vector<std::pair<DesignKind, EstimatorKind>> keys;
  for (const auto& r : rows) {
    const std::pair key{r.design, r.estimator};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& [design, estimator] : keys) {
    std::vector<ResultRow> subset;
    for (const auto& r : rows) {
      if (r.design == design && r.estimator == estimator && r.rmse > 0.0) subset.push_back(r);
    }
    try {
      out.push_back({design, estimator, rate_slope(subset), subset.size()});
    } catch (const InvalidInput&) {
      // fewer than 3 sizes: no slope for this pair
    }
  }
  return out;
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  CsvWriter csv(out);
  csv.row({"n", "design", "estimator", "reps_ok", "fail_rate", "mean_est", "bias", "rmse",
           "coverage", "seconds", "rmse_se", "mean_se", "theta"});
  for (const auto& r : rows) {
    csv.cell(r.n).cell(to_string(r.design)).cell(to_string(r.estimator)).cell(r.reps_ok);
    csv.cell(r.fail_rate).cell(r.mean_est).cell(r.bias).cell(r.rmse);
    if (r.coverage) {
      csv.cell(*r.coverage);
    } else {
      csv.cell(std::string_view{});
    }
    csv.cell(r.seconds).cell(r.rmse_se).cell(r.mean_se).cell(r.theta);
    csv.end_row();
  }
}

void write_slopes_csv(std::ostream& out, std::span<const SlopeRow> slopes) {
  CsvWriter csv(out);
  csv.row({"design", "estimator", "slope", "points"});
  for (const auto& s : slopes) {
    csv.cell(to_string(s.design)).cell(to_string(s.estimator)).cell(s.slope).cell(s.points);
    csv.end_row();
  }
}

FixedRadiusTargets fixed_radius_targets(const LinearOutcomes& outcomes, const GuessMatrix& guess,
                                        const PremetricSpace& space, double h) {
  FixedRadiusTargets t;
  const double off = off_neighborhood_total(outcomes.A, space, h);
  const double guess_off = off_neighborhood_total(guess.A_hat, space, h);
  t.off_share = off / outcomes.theta;
  t.guess_off_share = guess_off / guess.mean_total();
  t.ols = outcomes.theta - off;
  t.shrinkage = outcomes.theta * (1.0 - t.off_share) / (1.0 - t.guess_off_share);
  return t;
}

namespace {

const ResultRow* find_row(const ExperimentResult& result, EstimatorKind est, DesignKind design,
                          std::size_t n) {
  for (const auto& r : result.rows) {
    if (r.estimator == est && r.design == design && r.n == n) return &r;
  }
  return nullptr;
}

}  // namespace

AssertOutcome check_assertion(std::string_view spec, const ExperimentResult& result) {
  AssertOutcome out;
  out.spec = std::string(spec);
  const auto parts = split(spec, ':');
  auto est = [](const std::string& s) { return parse_estimator(s == "shrink" ? "shrinkage" : s); };
  try {
    if (parts[0] == "slope" && parts.size() == 5) {
      const auto e = est(parts[1]);
      const auto d = parse_design(parts[2]);
      const double lo = parse_value<double>("slope", parts[3]);
      const double hi = parse_value<double>("slope", parts[4]);
      for (const auto& s : result.slopes) {
        if (s.estimator == e && s.design == d) {
          out.pass = lo <= s.slope && s.slope <= hi;
          out.detail = "slope=" + format_double(s.slope);
          return out;
        }
      }
      out.detail = "no slope for this estimator and design";
      return out;
    }
    const bool by_estimator = parts[0] == "rmse_lt" && parts.size() == 5;
    const bool by_design = parts[0] == "design_lt" && parts.size() == 5;
    if (by_estimator || by_design) {
      const auto n = parse_value<std::size_t>("n", parts[4]);
      const ResultRow* a = nullptr;
      const ResultRow* b = nullptr;
      if (by_estimator) {
        const auto d = parse_design(parts[3]);
        a = find_row(result, est(parts[1]), d, n);
        b = find_row(result, est(parts[2]), d, n);
      } else {
        const auto e = est(parts[1]);
        a = find_row(result, e, parse_design(parts[2]), n);
        b = find_row(result, e, parse_design(parts[3]), n);
      }
      if (!a || !b) {
        out.detail = "missing rows";
        return out;
      }
      const double margin = 3.0 * std::hypot(a->rmse_se, b->rmse_se);
      out.pass = b->rmse - a->rmse >= margin;
      out.detail = "rmse " + format_double(a->rmse) + " vs " + format_double(b->rmse) +
                   ", margin " + format_double(margin);
      return out;
    }
    if (parts[0] == "coverage" && parts.size() == 6) {
      const auto* r = find_row(result, est(parts[1]), parse_design(parts[2]),
                               parse_value<std::size_t>("n", parts[3]));
      if (!r || !r->coverage) {
        out.detail = "no coverage recorded";
        return out;
      }
      const double lo = parse_value<double>("coverage", parts[4]);
      const double hi = parse_value<double>("coverage", parts[5]);
      out.pass = lo <= *r->coverage && *r->coverage <= hi;
      out.detail = "coverage=" + format_double(*r->coverage);
      return out;
    }
  } catch (const InvalidInput& err) {
    throw ConfigError("bad assertion '" + std::string(spec) + "': " + err.what());
  }
  throw ConfigError("bad assertion '" + std::string(spec) + "'");
}

}  // namespace scl

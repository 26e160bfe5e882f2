// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. `--only N` runs a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "scl/csv_io.hpp"
#include "scl/design.hpp"
#include "scl/estimators.hpp"
#include "scl/geometry.hpp"
#include "scl/harness.hpp"
#include "scl/oracle.hpp"
#include "scl/outcomes.hpp"
#include "scl/owopt.hpp"

namespace fs = std::filesystem;
using namespace scl;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <class T>
  Detail& operator<<(const T& v) {
    if constexpr (std::is_floating_point_v<T>) {
      out_ << format_double(v);
    } else {
      out_ << v;
    }
    return *this;
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const ResultRow& find(const ExperimentResult& res, EstimatorKind e, DesignKind d, std::size_t n) {
  for (const auto& r : res.rows)
    if (r.estimator == e && r.design == d && r.n == n) return r;
  throw std::runtime_error("missing result row");
}

// Oracle instance shared by the first two criteria: the first seed whose
// ten-unit disk yields six Scaling Clusters.
constexpr std::uint64_t kOracleSeed = 3;

struct OracleInstance {
  PremetricSpace space;
  ClusterPartition partition;
  LinearOutcomes outcomes;
  NeighborhoodClusters sets;
  double h;
};

OracleInstance oracle_instance() {
  auto sp = uniform_disk_population(10, kOracleSeed);
  const double h = scaling_rule(10, 1.0);
  auto part = scaling_clusters(sp, h);
  auto out = make_sim_dgp(sp, kOracleSeed);
  auto sets = neighborhood_clusters(sp, part, h);
  return {std::move(sp), std::move(part), std::move(out), std::move(sets), h};
}

Verdict exact_unbiasedness() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto inst = oracle_instance();
  const std::size_t n = 10;
  const Vector y1 = realize(inst.outcomes, std::vector<std::uint8_t>(n, 1));
  const Vector y0 = realize(inst.outcomes, std::vector<std::uint8_t>(n, 0));
  const auto e = enumerate(inst.partition, 0.5);
  const auto ex = exact_expectation(
      [&](std::span<const std::uint8_t> b) {
        return std::optional<double>(saturated_potential_ht(y1, y0, b, inst.sets, 0.5));
      },
      e);
  const double err = std::abs(ex.value - inst.outcomes.theta);
  const double secs = seconds_since(t0);
  Detail d;
  d << "C=" << inst.partition.num_clusters() << " assignments=" << e.size() << " error=" << err
    << " seconds=" << secs;
  return {inst.partition.num_clusters() == 6 && e.size() == 64 && err <= 1e-10 && secs < 1.0, d.str()};
}

Verdict ht_bias_bound() {
  const auto inst = oracle_instance();
  const double p = 0.5;
  const double eta = 1.0;
  auto grid = default_size_grid(inst.space);
  grid.push_back(inst.h);
  const double k1 = fit_interference_constant(inst.outcomes.A, inst.space, eta, grid);
  const ClusterResponse response(inst.outcomes, inst.partition);
  const auto ex = exact_expectation(
      [&](std::span<const std::uint8_t> b) {
        return std::optional<double>(ipw_ht(response.realize(b), b, inst.sets, p).estimate);
      },
      enumerate(inst.partition, p));
  const double phi = static_cast<double>(inst.sets.phi_max());
  const double bound = 2.0 * k1 * std::pow(inst.h, -eta) / std::pow(p * (1 - p), phi);
  const double bias = std::abs(ex.value - inst.outcomes.theta);
  Detail d;
  d << "|bias|=" << bias << " bound=" << bound << " K1=" << k1 << " phi_max=" << phi;
  return {bias <= bound, d.str()};
}

Verdict estimand_pin() {
  double worst = 0.0;
  for (std::size_t n : {2, 10, 100, 400, 900, 1600, 2500}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto out = make_sim_dgp(uniform_disk_population(n, seed), seed);
      worst = std::max(worst, std::abs(out.theta - 2.0));
    }
  }
  Detail d;
  d << "max |theta - 2|=" << worst;
  return {worst <= 1e-12, d.str()};
}

Verdict rmse_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c;
  c.n_list = {400, 900};
  c.estimators = {EstimatorKind::ht, EstimatorKind::ols, EstimatorKind::shrinkage};
  c.reps = 2000;
  const auto res = run_experiment(c);
  bool pass = true;
  Detail d;
  for (std::size_t n : c.n_list) {
    for (const char* pair : {"shrink:ols", "ols:ht"}) {
      const std::string spec = std::string("rmse_lt:") + pair + ":scaling_clusters:" + std::to_string(n);
      const auto check = check_assertion(spec, res);
      pass = pass && check.pass;
      d << "n=" << n << " " << pair << " " << (check.pass ? "ok" : "no") << " (" << check.detail << "); ";
    }
  }
  const double secs = seconds_since(t0);
  d << "seconds=" << secs;
  return {pass && secs < 600.0, d.str()};
}

Verdict design_effect() {
  ExperimentConfig c;
  c.n_list = {400};
  c.designs = {DesignKind::scaling_clusters, DesignKind::iid};
  c.estimators = {EstimatorKind::ht};
  c.reps = 2000;
  const auto check = check_assertion("design_lt:ht:scaling_clusters:iid:400", run_experiment(c));
  return {check.pass, check.detail};
}

Verdict rate_check() {
  ExperimentConfig c;
  c.n_list = {100, 400, 900, 1600, 2500};
  c.estimators = {EstimatorKind::ht, EstimatorKind::ols};
  c.reps = 1000;
  const auto res = run_experiment(c);
  bool pass = true;
  Detail d;
  for (const char* e : {"ols", "ht"}) {
    const auto check = check_assertion(std::string("slope:") + e + ":scaling_clusters:-0.45:-0.22", res);
    pass = pass && check.pass;
    d << e << " " << check.detail << "; ";
  }
  return {pass, d.str()};
}

Verdict fixed_radius_bias() {
  ExperimentConfig c;
  const std::size_t n = 2000;
  c.n_list = {n};
  c.estimators = {EstimatorKind::ols, EstimatorKind::shrinkage};
  c.reps = 2000;
  c.fixed_h = scaling_rule(400, c.eta, c.c0);
  const auto res = run_experiment(c);
  const auto sc = build_scenario(c, n, DesignKind::scaling_clusters);
  const auto target = fixed_radius_targets(sc.outcomes, sc.guess, sc.space, *c.fixed_h);
  const auto& o = find(res, EstimatorKind::ols, DesignKind::scaling_clusters, n);
  const auto& s = find(res, EstimatorKind::shrinkage, DesignKind::scaling_clusters, n);
  const double zo = (o.mean_est - target.ols) / o.mean_se;
  const double zs = (s.mean_est - target.shrinkage) / s.mean_se;
  Detail d;
  d << "ols mean=" << o.mean_est << " target=" << target.ols << " z=" << zo << "; shrink mean=" << s.mean_est
    << " target=" << target.shrinkage << " z=" << zs;
  return {std::abs(zo) <= 3.0 && std::abs(zs) <= 3.0, d.str()};
}

Verdict ow_dominance() {
  // (a) solver never ends above its feasible ipw start.
  std::size_t worse = 0;
  std::size_t instances = 0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const std::size_t n = 10 + 5 * (k % 11);
    const auto sp = uniform_disk_population(n, 1000 + k);
    const double h = scaling_rule(n, 1.0);
    const auto part = scaling_clusters(sp, h);
    const auto out = make_sim_dgp(sp, 1000 + k);
    const auto grid = make_size_grid(sp, default_ow_sizes(h));
    TableOptions topt;
    if (part.num_clusters() > 12) {
      topt.method = TableMethod::monte_carlo;
      topt.draws = 20000;
      topt.seed = k;
    }
    const double p = k % 3 == 0 ? 0.3 : 0.5;
    const auto tables = saturation_tables(sp, part, grid, p, topt);
    InterferenceBudget budget;
    budget.k1 = fit_interference_constant(out.A, sp, 1.0);
    budget.ybar = outcome_bound(out);
    budget.k_effects = budget.ybar;
    const auto res = optimize_weights(tables, budget, h, p);
    worse += res.objective > res.start_objective;
    ++instances;
  }
  // (b) simulated RMSE.
  ExperimentConfig c;
  c.n_list = {20, 50, 90};
  c.estimators = {EstimatorKind::ht, EstimatorKind::ow};
  c.reps = 2000;
  const auto res = run_experiment(c);
  bool rmse_ok = true;
  Detail d;
  d << "objective above start on " << worse << "/" << instances << " instances; ";
  for (std::size_t n : c.n_list) {
    const auto& ht = find(res, EstimatorKind::ht, DesignKind::scaling_clusters, n);
    const auto& ow = find(res, EstimatorKind::ow, DesignKind::scaling_clusters, n);
    rmse_ok = rmse_ok && ow.rmse <= ht.rmse;
    d << "n=" << n << " ow=" << ow.rmse << " ht=" << ht.rmse << "; ";
  }
  return {worse == 0 && rmse_ok, d.str()};
}

// Brute-force minimum of w'Qw over {W >= 0, sum_s W_is marg_is = r} by
// enumerating every support pattern: on each face the minimizer solves the
// equality-constrained KKT system, and the global minimizer is the best
// feasible face solution.
double face_enumeration_minimum(const Matrix& Q, const Matrix& marg, double p) {
  const auto n = static_cast<std::size_t>(marg.rows());
  const auto S = static_cast<std::size_t>(marg.cols());
  const double r = 1.0 / (p * static_cast<double>(n));
  std::vector<std::vector<std::uint32_t>> options(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t allowed = 0;
    for (std::size_t s = 0; s < S; ++s)
      if (marg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) > 0.0) allowed |= 1u << s;
    for (std::uint32_t m = 1; m < (1u << S); ++m)
      if ((m & ~allowed) == 0) options[i].push_back(m);
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(n, 0);
  while (true) {
    std::vector<int> free;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < S; ++s)
        if (options[i][pick[i]] & (1u << s)) free.push_back(static_cast<int>(i * S + s));
    const auto f = static_cast<Eigen::Index>(free.size());
    const auto m = static_cast<Eigen::Index>(n);
    Matrix K = Matrix::Zero(f + m, f + m);
    Vector rhs = Vector::Zero(f + m);
    for (Eigen::Index a = 0; a < f; ++a) {
      for (Eigen::Index b = 0; b < f; ++b) K(a, b) = 2.0 * Q(free[a], free[b]);
      const auto i = static_cast<Eigen::Index>(free[a] / static_cast<int>(S));
      const auto s = static_cast<Eigen::Index>(free[a] % static_cast<int>(S));
      K(a, f + i) = marg(i, s);
      K(f + i, a) = marg(i, s);
    }
    rhs.tail(m).setConstant(r);
    const Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
    if ((K * sol - rhs).norm() < 1e-9 && sol.head(f).minCoeff() >= -1e-12) {
      Vector w = Vector::Zero(Q.rows());
      for (Eigen::Index a = 0; a < f; ++a) w(free[a]) = std::max(0.0, sol(a));
      best = std::min(best, w.dot(Q * w));
    }
    std::size_t k = 0;
    while (k < n && ++pick[k] == options[k].size()) pick[k++] = 0;
    if (k == n) break;
  }
  return best;
}

Verdict qp_correctness() {
  double worst_gap = 0.0;
  double worst_kkt = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const auto sp = uniform_disk_population(6, 2000 + k);
    std::vector<int> labels{0, 1, 2, 3, static_cast<int>(k % 4), static_cast<int>((k / 4) % 4)};
    const auto part = partition_from_assignment(labels);
    const double h = scaling_rule(6, 1.0);
    const auto grid = make_size_grid(sp, std::vector<double>{h});
    if (grid.size() != 2 || part.num_clusters() != 4) continue;
    const double p = k % 2 ? 0.5 : 0.35;
    const auto tables = saturation_tables(sp, part, grid, p);
    InterferenceBudget budget;
    budget.k1 = 0.5 + 0.1 * static_cast<double>(k);
    budget.ybar = 1.0 + 0.05 * static_cast<double>(k);
    budget.k_effects = budget.ybar;
    const auto res = optimize_weights(tables, budget, h, p);
    const Matrix Q = assemble_objective(tables, budget);
    const double brute = face_enumeration_minimum(Q, tables.marg, p);
    worst_gap = std::max(worst_gap, std::abs(res.objective - brute));
    worst_kkt = std::max(worst_kkt, res.kkt_residual);
    ++checked;
  }
  Detail d;
  d << checked << " instances, max |objective - brute force|=" << worst_gap << " max kkt=" << worst_kkt;
  return {checked >= 10 && worst_gap <= 1e-4 && worst_kkt < 1e-7, d.str()};
}

Verdict lemma_bounds() {
  bool pass = true;
  Detail d;
  for (std::size_t n : {100, 400, 900, 1600, 2500}) {
    const auto sp = uniform_disk_population(n, 1 + n);
    const double h = scaling_rule(n, 1.0);
    const auto part = scaling_clusters(sp, h);
    const auto inc = incidence(sp, part, h);
    auto grid = default_size_grid(sp);
    grid.push_back(h);
    AuditOptions opts;
    opts.max_centers = 1;
    const double k3 = audit_geometry(sp, grid, {}, opts).k3_hat;
    const double bound = std::pow(9.0, 4) * (k3 * static_cast<double>(n) * h + 1.0);
    const bool ok = inc.phi_max <= 81 && inc.sum_gamma_sq <= bound;
    pass = pass && ok;
    d << "n=" << n << " phi_max=" << inc.phi_max << " sum_gamma_sq=" << inc.sum_gamma_sq << "; ";
  }
  return {pass, d.str()};
}

Verdict coverage() {
  ExperimentConfig c;
  c.n_list = {900};
  c.estimators = {EstimatorKind::hajek, EstimatorKind::ols};
  c.reps = 1000;
  const auto res = run_experiment(c);
  bool pass = true;
  Detail d;
  for (const char* e : {"hajek", "ols"}) {
    const auto check = check_assertion(std::string("coverage:") + e + ":scaling_clusters:900:0.91:0.98", res);
    pass = pass && check.pass;
    d << e << " " << check.detail << "; ";
  }
  return {pass, d.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / ("scl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cli = SCL_CLI_PATH;
  for (const char* run_id : {"a", "b"}) {
    const fs::path dir = root / run_id;
    fs::create_directories(dir);
    const std::string pop = (dir / "pop.csv").string();
    const std::string d = dir.string();
    int rc = 0;
    rc |= run(cli + " simulate-population --n 40 --seed 5 --out " + pop);
    rc |= run(cli + " design --population " + pop + " --seed 9 --out " + d + "/design");
    rc |= run(cli + " dgp --population " + pop + " --seed 5 --treatments " + d +
              "/design/treatments.csv --out " + d + "/dgp");
    rc |= run(cli + " estimate --population " + pop + " --outcomes " + d + "/dgp/outcomes.csv --clusters " + d +
              "/design/clusters.csv --estimator hajek --h 3.42 --out " + d + "/estimate.csv");
    rc |= run(cli + " ow-weights --population " + pop + " --clusters " + d +
              "/design/clusters.csv --h 3.42 --method mc --mc-draws 5000 --seed 3 --out " + d + "/ow");
    rc |= run(cli + " replicate --set n=30,40,50 --set reps=40 --set estimators=ht,hajek,ols,shrink,ow --out " + d +
              "/rep");
    if (rc != 0) return {false, std::string("cli run failed in ") + run_id};
  }
  std::size_t files = 0;
  std::size_t differ = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    ++files;
    differ += slurp(entry.path()) != slurp(root / "b" / rel);
  }
  fs::remove_all(root);
  Detail d;
  d << files << " files compared, " << differ << " differ";
  return {files >= 10 && differ == 0, d.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int k = 1; k + 1 < argc; ++k)
    if (std::string(argv[k]) == "--only") only = std::atoi(argv[k + 1]);

  const std::vector<Criterion> criteria{
      {1, "exact unbiasedness of the saturated-potential estimator", exact_unbiasedness},
      {2, "HT bias bound", ht_bias_bound},
      {3, "estimand equals 2", estimand_pin},
      {4, "RMSE shrinkage < OLS < HT", rmse_ordering},
      {5, "clustering beats iid for HT", design_effect},
      {6, "rate slopes", rate_check},
      {7, "fixed-radius bias of OLS and shrinkage", fixed_radius_bias},
      {8, "OW dominance", ow_dominance},
      {9, "QP solver against face enumeration", qp_correctness},
      {10, "phi and gamma bounds", lemma_bounds},
      {11, "HAC interval coverage", coverage},
      {12, "CLI determinism", determinism},
  };
  bool all = true;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " (" << v.detail << ")"
              << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}

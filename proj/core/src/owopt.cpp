#include "scl/owopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scl/errors.hpp"
#include "scl/rng.hpp"

namespace scl {

const Matrix* SaturationTables::block(std::size_t i, std::size_t j) const {
  const auto& row = partners[i];
  const auto it = std::lower_bound(row.begin(), row.end(), static_cast<int>(j));
  if (it == row.end() || *it != static_cast<int>(j)) return nullptr;
  return &blocks[i][static_cast<std::size_t>(it - row.begin())];
}

double SaturationTables::joint(std::size_t i, std::size_t s, std::size_t j, std::size_t t) const {
  if (const Matrix* b = block(i, j)) {
    return (*b)(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
  }
  return marg(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) *
         marg(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t));
}

SaturationTables saturation_tables(const PremetricSpace& space, const ClusterPartition& partition,
                                   const SizeGrid& grid, double p, const TableOptions& options) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("treatment probability must lie in (0, 1)");
  const std::size_t n = space.size();
  const std::size_t C = partition.num_clusters();
  const ClusterProximity proximity(space, partition);
  const SaturationPlan plan(space, proximity, partition, grid);
  const std::size_t S = grid.size();

  std::size_t total = 0;
  if (options.method == TableMethod::exact) {
    if (C > kMaxExactClusters) throw InvalidInput("exact tables need at most 20 clusters");
    total = std::size_t{1} << C;
  } else {
    if (options.draws == 0) throw InvalidInput("Monte Carlo tables need at least one draw");
    total = options.draws;
  }

  SaturationTables tables;
  tables.grid = grid;
  tables.method = options.method;
  tables.draws = options.method == TableMethod::exact ? 0 : options.draws;
  tables.seed = options.seed;
  tables.marg = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(S));
  tables.partners =
      dependency_graph(neighborhood_clusters(space, proximity, grid.back()), C).adjacency;
  tables.blocks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tables.blocks[i].assign(tables.partners[i].size(),
                            Matrix::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S)));
  }

  std::vector<double> by_count(C + 1);
  for (std::size_t k = 0; k <= C; ++k) {
    by_count[k] = std::pow(p, static_cast<double>(k)) * std::pow(1.0 - p, static_cast<double>(C - k));
  }

  // Assignments are processed in fixed batches: indices in parallel over
  // assignments, accumulation in parallel over units in assignment order.
  constexpr std::size_t kBatch = 2048;
  std::vector<std::vector<int>> idx(kBatch);
  std::vector<double> weight(kBatch);
  for (std::size_t start = 0; start < total; start += kBatch) {
    const auto count = static_cast<std::ptrdiff_t>(std::min(kBatch, total - start));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t a = 0; a < count; ++a) {
      const std::size_t id = start + static_cast<std::size_t>(a);
      std::vector<std::uint8_t> b(C);
      if (options.method == TableMethod::exact) {
        std::size_t ones = 0;
        for (std::size_t c = 0; c < C; ++c) {
          b[c] = static_cast<std::uint8_t>((id >> c) & 1u);
          ones += b[c];
        }
        weight[static_cast<std::size_t>(a)] = by_count[ones];
      } else {
        CounterRng rng(options.seed, Stream::tables, static_cast<std::uint64_t>(id) * C);
        for (auto& bit : b) bit = rng.bernoulli(p) ? 1 : 0;
        weight[static_cast<std::size_t>(a)] = 1.0;
      }
      plan.indices(b, idx[static_cast<std::size_t>(a)]);
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const auto& partners = tables.partners[i];
      auto& blocks = tables.blocks[i];
      for (std::ptrdiff_t a = 0; a < count; ++a) {
        const auto& row = idx[static_cast<std::size_t>(a)];
        const double w = weight[static_cast<std::size_t>(a)];
        const int ki = row[i];
        tables.marg(ii, ki) += w;
        for (std::size_t k = 0; k < partners.size(); ++k) {
          blocks[k](ki, row[static_cast<std::size_t>(partners[k])]) += w;
        }
      }
    }
  }

  if (options.method == TableMethod::monte_carlo) {
    const double scale = 1.0 / static_cast<double>(total);
    tables.marg *= scale;
    for (auto& row : tables.blocks) {
      for (auto& b : row) b *= scale;
    }
  }
  return tables;
}

Matrix assemble_objective(const SaturationTables& tables, const InterferenceBudget& budget) {
  budget.validate();
  const std::size_t n = tables.units();
  const std::size_t S = tables.sizes();
  for (double s : tables.grid.sizes) {
    if (!(s > 0.0)) throw InvalidInput("grid sizes must be positive");
  }
  Matrix kernel(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t t = 0; t < S; ++t) {
      const double st = tables.grid.sizes[s] * tables.grid.sizes[t];
      kernel(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) =
          2.0 * budget.ybar * budget.ybar + budget.k1 * budget.k1 * std::pow(st, -budget.eta);
    }
  }
  const auto N = static_cast<Eigen::Index>(n * S);
  const auto SS = static_cast<Eigen::Index>(S);
  Matrix Q(N, N);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      auto block = Q.block(ii * SS, static_cast<Eigen::Index>(j) * SS, SS, SS);
      if (const Matrix* joint = tables.block(i, j)) {
        block = joint->cwiseProduct(kernel);
      } else {
        block = (tables.marg.row(ii).transpose() * tables.marg.row(static_cast<Eigen::Index>(j)))
                    .cwiseProduct(kernel);
      }
    }
  }
  return Q;
}

Vector flatten(const Matrix& W) {
  Vector w(W.size());
  const auto S = W.cols();
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index s = 0; s < S; ++s) w(i * S + s) = W(i, s);
  }
  return w;
}

Matrix unflatten(const Vector& w, std::size_t n, std::size_t sizes) {
  if (static_cast<std::size_t>(w.size()) != n * sizes) throw InvalidInput("weight vector size mismatch");
  Matrix W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(sizes));
  const auto S = static_cast<Eigen::Index>(sizes);
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    for (Eigen::Index s = 0; s < S; ++s) W(i, s) = w(i * S + s);
  }
  return W;
}

double objective_value(const Matrix& Q, const Matrix& W) {
  const Vector w = flatten(W);
  if (Q.rows() != w.size() || Q.cols() != w.size()) throw InvalidInput("objective size mismatch");
  return w.dot(Q * w);
}

Matrix ipw_weight_table(const SaturationTables& tables, double h, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("treatment probability must lie in (0, 1)");
  const std::size_t n = tables.units();
  const std::size_t S = tables.sizes();
  const std::size_t first = tables.grid.index_of(h);
  const double target = 1.0 / (p * static_cast<double>(n));
  Matrix W = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(S));
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double mass = tables.marg.row(i).tail(static_cast<Eigen::Index>(S - first)).sum();
    std::size_t lo = first;
    if (!(mass > 0.0)) {
      // h is never reached: put everything on the largest reachable size.
      lo = S;
      while (lo > 0 && !(tables.marg(i, static_cast<Eigen::Index>(lo - 1)) > 0.0)) --lo;
      if (lo == 0) throw InvalidInput("saturation table row has no mass");
      --lo;
      mass = tables.marg(i, static_cast<Eigen::Index>(lo));
      W(i, static_cast<Eigen::Index>(lo)) = target / mass;
      continue;
    }
    for (std::size_t s = lo; s < S; ++s) W(i, static_cast<Eigen::Index>(s)) = target / mass;
  }
  return W;
}

Vector project_weighted_simplex(const Vector& v, const Vector& a, double r) {
  if (v.size() != a.size()) throw InvalidInput("projection size mismatch");
  if (!(r > 0.0)) throw InvalidInput("projection target must be positive");
  std::vector<Eigen::Index> active;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a(k) > 0.0) active.push_back(k);
  }
  if (active.empty()) throw InvalidInput("constraint row has no positive coefficient");
  std::sort(active.begin(), active.end(), [&](Eigen::Index x, Eigen::Index y) {
    return v(x) / a(x) > v(y) / a(y);
  });
  double av = 0.0;
  double aa = 0.0;
  double lambda = 0.0;
  for (std::size_t m = 0; m < active.size(); ++m) {
    const auto k = active[m];
    av += a(k) * v(k);
    aa += a(k) * a(k);
    lambda = (av - r) / aa;
    const double lower = m + 1 < active.size()
                             ? v(active[m + 1]) / a(active[m + 1])
                             : -std::numeric_limits<double>::infinity();
    if (lambda >= lower) break;
  }
  Vector w = Vector::Zero(v.size());
  for (auto k : active) w(k) = std::max(v(k) - lambda * a(k), 0.0);
  return w;
}

namespace {

struct Problem {
  const Matrix& Q;
  Matrix marg;
  double r;
  std::size_t n;
  std::size_t S;

  Vector project(const Vector& v) const {
    Vector out(v.size());
    const auto SS = static_cast<Eigen::Index>(S);
    for (std::size_t i = 0; i < n; ++i) {
      const auto off = static_cast<Eigen::Index>(i) * SS;
      out.segment(off, SS) = project_weighted_simplex(
          v.segment(off, SS), marg.row(static_cast<Eigen::Index>(i)).transpose(), r);
    }
    return out;
  }

  double f(const Vector& w) const { return w.dot(Q * w); }

  double residual(const Vector& w) const {
    const Vector g = 2.0 * (Q * w);
    return (w - project(w - g)).cwiseAbs().maxCoeff();
  }

  // Minimizes w'Qw with the support of w fixed and the equalities active.
  bool polish(Vector& w) const {
    std::vector<Eigen::Index> support;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      if (w(k) > 0.0) support.push_back(k);
    }
    const auto m = static_cast<Eigen::Index>(support.size());
    const auto rows = static_cast<Eigen::Index>(n);
    Matrix K = Matrix::Zero(m + rows, m + rows);
    Vector rhs = Vector::Zero(m + rows);
    for (Eigen::Index x = 0; x < m; ++x) {
      for (Eigen::Index y = 0; y < m; ++y) K(x, y) = 2.0 * Q(support[x], support[y]);
      const auto unit = support[x] / static_cast<Eigen::Index>(S);
      const auto s = support[x] % static_cast<Eigen::Index>(S);
      K(m + unit, x) = marg(unit, s);
      K(x, m + unit) = marg(unit, s);
    }
    rhs.tail(rows).setConstant(r);
    const Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
    if (!sol.allFinite()) return false;
    Vector candidate = Vector::Zero(w.size());
    for (Eigen::Index x = 0; x < m; ++x) {
      if (sol(x) < -1e-12 * r) return false;
      candidate(support[x]) = std::max(sol(x), 0.0);
    }
    candidate = project(candidate);
    if (f(candidate) > f(w) * (1.0 + 1e-12) + 1e-300) return false;
    w = candidate;
    return true;
  }
};

double top_eigenvalue(const Matrix& Q) {
  Vector x = Vector::Ones(Q.rows()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    const Vector y = Q * x;
    const double norm = y.norm();
    if (!(norm > 0.0)) return 0.0;
    const double next = x.dot(y);
    x = y / norm;
    if (std::abs(next - lambda) <= 1e-10 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  // Power iteration approaches from below; pad with the row-sum bound.
  return std::min(lambda * 1.05, Q.cwiseAbs().rowwise().sum().maxCoeff());
}

}  // namespace

double kkt_residual(const Matrix& Q, const Matrix& marg, double p, const Matrix& W) {
  const std::size_t n = static_cast<std::size_t>(marg.rows());
  const Problem problem{Q, marg, 1.0 / (p * static_cast<double>(n)), n,
                        static_cast<std::size_t>(marg.cols())};
  return problem.residual(flatten(W));
}

OwWeightTable solve_qp(const Matrix& Q, const Matrix& marg, double p, const Matrix& start,
                       const SolverOptions& options) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("treatment probability must lie in (0, 1)");
  const std::size_t n = static_cast<std::size_t>(marg.rows());
  const std::size_t S = static_cast<std::size_t>(marg.cols());
  if (n == 0 || S == 0) throw InvalidInput("empty saturation table");
  if (static_cast<std::size_t>(Q.rows()) != n * S || Q.cols() != Q.rows()) {
    throw InvalidInput("objective does not match the table");
  }
  if (!Q.isApprox(Q.transpose(), 1e-10)) throw InvalidInput("objective must be symmetric");
  const Problem problem{Q, marg.cwiseMax(0.0), 1.0 / (p * static_cast<double>(n)), n, S};

  Vector x;
  if (start.size() == 0) {
    x = Vector::Constant(static_cast<Eigen::Index>(n * S), problem.r);
  } else {
    if (static_cast<std::size_t>(start.rows()) != n || static_cast<std::size_t>(start.cols()) != S) {
      throw InvalidInput("start table has the wrong shape");
    }
    x = flatten(start);
  }
  x = problem.project(x);

  OwWeightTable out;
  out.start_objective = problem.f(x);
  const double L = 2.0 * top_eigenvalue(Q);

  if (L > 0.0) {
    Vector best = x;
    double best_f = out.start_objective;
    Vector y = x;
    double t = 1.0;
    std::vector<Eigen::Index> last_support;
    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
      out.iterations = it;
      const Vector next = problem.project(y - (2.0 / L) * (Q * y));
      if ((y - next).dot(next - x) > 0.0) {
        t = 1.0;  // momentum points uphill
        y = next;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - x);
        t = t_next;
      }
      x = next;
      const double fx = problem.f(x);
      if (fx < best_f) {
        best_f = fx;
        best = x;
      }
      if (it % options.polish_every != 0 && it != options.max_iterations) continue;

      if (problem.residual(best) < options.tolerance) break;
      std::vector<Eigen::Index> support;
      for (Eigen::Index k = 0; k < best.size(); ++k) {
        if (best(k) > 0.0) support.push_back(k);
      }
      if (support != last_support) {
        last_support = support;
        Vector polished = best;
        if (problem.polish(polished)) {
          best = polished;
          best_f = problem.f(best);
          if (problem.residual(best) < options.tolerance) break;
          x = best;
          y = best;
          t = 1.0;
        }
      }
    }
    x = best;
  }

  out.kkt_residual = problem.residual(x);
  out.converged = out.kkt_residual < options.tolerance;
  out.objective = problem.f(x);
  out.W = unflatten(x, n, S);
  return out;
}

OwWeightTable optimize_weights(const SaturationTables& tables, const InterferenceBudget& budget,
                               double h, double p, const SolverOptions& options) {
  const Matrix Q = assemble_objective(tables, budget);
  auto out = solve_qp(Q, tables.marg, p, ipw_weight_table(tables, h, p), options);
  out.grid = tables.grid;
  return out;
}

EstimateReport ow_estimate(const Vector& Y, std::span<const std::uint8_t> d,
                           const SaturationProfile& profile, const OwWeightTable& weights) {
  const auto n = weights.W.rows();
  if (profile.grid.sizes != weights.grid.sizes) {
    throw InvalidInput("saturation profile and weights use different grids");
  }
  if (Y.size() != n || static_cast<Eigen::Index>(d.size()) != n ||
      static_cast<Eigen::Index>(profile.index.size()) != n) {
    throw InvalidInput("OW inputs have mismatched lengths");
  }
  EstimateReport report;
  report.kind = EstimatorKind::ow;
  report.weights = Vector::Zero(n);
  const auto top = static_cast<int>(profile.grid.size()) - 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const double w = weights.W(i, profile.index[u]);
    report.weights(i) = d[u] ? w : -w;
    if (profile.index[u] == top) ++(d[u] ? report.saturated : report.dissaturated);
  }
  report.estimate = report.weights.dot(Y);
  return report;
}

}  // namespace scl

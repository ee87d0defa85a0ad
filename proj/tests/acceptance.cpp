// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <json.hpp>

#include "constrained_support.hpp"
#include "indicator_oracle.hpp"
#include "oracles.hpp"
#include "romforge/constrained.hpp"
#include "romforge/experiments.hpp"
#include "romforge/indicator.hpp"
#include "romforge/io.hpp"
#include "romforge/metrics.hpp"
#include "romforge/pod.hpp"
#include "romforge/rom.hpp"
#include "support.hpp"

using namespace romforge;
namespace rt = romforge::testing;
namespace fs = std::filesystem;

namespace
{

// Tolerances and limits of the acceptance criteria.
constexpr double POD_ORTHO_TOL = 1e-10;
constexpr double POD_TRACE_TOL = 1e-10;
constexpr double POD_MODE_TOL = 1e-8;
constexpr double FULL_SPACE_TOL = 1e-8;
constexpr double QP_OBJECTIVE_TOL = 1e-8;
constexpr int QP_INSTANCES = 1000;
constexpr double INDICATOR_TOL = 1e-10;
constexpr int INDICATOR_TRAJECTORIES = 100;
constexpr double CV_TOL = 1e-12;
constexpr double BOX_SLACK = 1e-12;
constexpr int BOX_STEPS = 200000;
constexpr double SPEARMAN_MIN = 0.4;
constexpr double STABILITY_TOL = 1e-10;

struct Outcome
{
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string &what)
  {
    if (!ok)
    {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

struct Criterion
{
  int id;
  std::string name;
  double limit_s;
  std::function<void(Outcome &)> body;
};

double rel(double a, double b)
{
  const double s = std::max(std::abs(a), std::abs(b));
  return s > 0.0 ? std::abs(a - b) / s : 0.0;
}

std::vector<std::vector<std::string>> read_csv(const std::string &path)
{
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line))
  {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ','))
    {
      cells.push_back(cell);
    }
    rows.push_back(cells);
  }
  return rows;
}

// Average ranks, ties shared; written separately from the library version.
std::vector<double> average_ranks(const std::vector<double> &v)
{
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
  {
    double less = 0.0, equal = 0.0;
    for (double w : v)
    {
      less += w < v[i] ? 1.0 : 0.0;
      equal += w == v[i] ? 1.0 : 0.0;
    }
    r[i] = less + 0.5 * (equal + 1.0);
  }
  return r;
}

double pearson(const std::vector<double> &x, const std::vector<double> &y)
{
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
  {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------------------------

void pod_correctness(Outcome &out)
{
  std::mt19937_64 rng(101);
  struct Case
  {
    std::string label;
    Matrix S;
    Matrix G;
    int N;
  };
  std::vector<Case> cases;
  {
    const FomSpec spec = rt::burgers_spec(32);
    const auto forms = make_provider(spec);
    const FomResult r = run_fom(spec, *forms, 40.0);
    cases.push_back({"burgers n_h=32 K=16", r.snapshots.states, forms->v_matrix(), 4});
  }
  {
    const FomSpec spec = rt::ks_spec(32);
    const auto forms = make_provider(spec);
    const FomResult r = run_fom(spec, *forms, 1.0);
    cases.push_back(
        {"ks n_h=32 K=20", r.snapshots.states.leftCols(20), forms->v_matrix(), 8});
  }
  for (int trial = 0; trial < 5; ++trial)
  {
    const int n = 8 + 6 * trial, K = 4 + 4 * trial;
    cases.push_back({"random n_h=" + std::to_string(n) + " K=" + std::to_string(K),
                     rt::random_matrix(rng, n, K), rt::random_spd(rng, n), std::min(n, K)});
  }
  double worst_ortho = 0.0, worst_trace = 0.0, worst_mode = 0.0;
  for (const Case &c : cases)
  {
    const InnerProduct ip{InnerProductTag::H1, c.G};
    const ReducedSpace s = pod_build(c.S, c.N, ip, 0.0);
    const Matrix defect = s.modes.transpose() * c.G * s.modes - Matrix::Identity(c.N, c.N);
    worst_ortho = std::max(worst_ortho, defect.cwiseAbs().maxCoeff());
    double energy = 0.0, trace = 0.0;
    for (Eigen::Index k = 0; k < c.S.cols(); ++k)
    {
      energy += c.S.col(k).dot(c.G * c.S.col(k));
    }
    for (double l : s.eigenvalues)
    {
      trace += l;
    }
    worst_trace = std::max(worst_trace, rel(trace, energy));
    const rt::SvdPod oracle = rt::svd_pod(c.S, c.G);
    worst_mode = std::max(worst_mode, rt::max_mode_distance(s.modes, oracle.modes.leftCols(c.N)));
  }
  out.detail << "cases=" << cases.size() << " max|Z^T G Z - I|=" << worst_ortho
             << " trace rel=" << worst_trace << " mode dist=" << worst_mode;
  out.require(worst_ortho <= POD_ORTHO_TOL, "orthonormality <= 1e-10");
  out.require(worst_trace <= POD_TRACE_TOL, "trace identity <= 1e-10");
  out.require(worst_mode <= POD_MODE_TOL, "SVD oracle modes <= 1e-8");
}

void full_space_exactness(Outcome &out)
{
  const FomSpec spec = rt::burgers_spec(32, 0.04);
  const auto forms = make_provider(spec);
  const double mu = 120.0;
  Matrix fom(32, spec.grid().J + 1);
  const FomResult r = run_fom(spec, *forms, mu, [&](int j, const Vector &u) { fom.col(j) = u; });
  const ReducedSpace s = ReducedSpace::from_basis(Matrix::Identity(32, 32),
                                                  forms->inner_product(InnerProductTag::H1));
  const ReducedOperators ops = assemble_operators(s, *forms, spec.dt);
  const RomTrajectory t = rom_integrate(ops, initial_coefficients(s, *forms), mu, spec.grid());
  out.require(!t.failed, "ROM completes");
  if (t.failed)
  {
    return;
  }
  double worst = 0.0;
  for (int j = 0; j <= spec.grid().J; ++j)
  {
    worst = std::max(worst, (s.modes * t.a.col(j) - fom.col(j)).norm() / fom.col(j).norm());
  }
  const IndicatorData d = build_indicator(s, *forms);
  const double delta = evaluate_indicator(d, t, mu);
  const double mean_norm = std::sqrt(forms->inner_v(Field::lifted(r.mean), Field::lifted(r.mean)));
  out.detail << "steps=" << spec.grid().J << " max step rel=" << worst << " Delta/||<u>||_V="
             << delta / mean_norm;
  out.require(worst <= FULL_SPACE_TOL, "per-step match <= 1e-8");
  out.require(delta <= FULL_SPACE_TOL * mean_norm, "Delta <= 1e-8 ||<u>||_V");
}

void constrained_optimality(Outcome &out)
{
  std::mt19937_64 rng(103);
  double worst = 0.0;
  int constrained = 0, fallback = 0, fallback_exact = 0, failed = 0;
  for (int trial = 0; trial < QP_INSTANCES; ++trial)
  {
    const int N = 1 + trial % 4;
    const rt::QpInstance q = rt::random_instance(rng, N);
    const ReducedOperators ops = rt::linear_ops(q.A, q.F);
    const Vector a = Vector::Zero(N);
    const ConstrainedStep st = constrained_step(ops, a, 1.0, rt::make_box(q.lo, q.hi));
    if (st.status == StepStatus::Failed)
    {
      ++failed;
      continue;
    }
    const rt::BoxOracle oracle = rt::box_qp_oracle(q.A, q.F, q.lo, q.hi);
    const double obj = (q.A * st.a - q.F).squaredNorm();
    worst = std::max(worst, std::abs(obj - oracle.objective) / (1.0 + oracle.objective));
    constrained += st.status == StepStatus::Constrained ? 1 : 0;

    // Same system with a box that contains the Galerkin solution.
    const Vector gal = *galerkin_step(ops, a, 1.0);
    const BoxBounds wide = rt::make_box(gal.array() - 0.1, gal.array() + 0.1);
    const ConstrainedStep inactive = constrained_step(ops, a, 1.0, wide);
    ++fallback;
    fallback_exact += inactive.status == StepStatus::Galerkin &&
                              std::memcmp(inactive.a.data(), gal.data(), sizeof(double) * N) == 0
                          ? 1
                          : 0;
  }
  out.detail << "instances=" << QP_INSTANCES << " constrained=" << constrained
             << " max objective gap=" << worst << " exact fallbacks=" << fallback_exact << "/"
             << fallback;
  out.require(failed == 0, "no failed steps");
  out.require(worst <= QP_OBJECTIVE_TOL, "objective within 1e-8 of enumeration");
  out.require(fallback_exact == fallback, "bit-exact Galerkin fallback");
}

void indicator_equivalence(Outcome &out)
{
  std::mt19937_64 rng(104);
  FomSpec burgers = rt::burgers_spec(16);
  const FomSpec ks = rt::ks_spec(16);
  double worst = 0.0;
  for (int trial = 0; trial < INDICATOR_TRAJECTORIES; ++trial)
  {
    const FomSpec &spec = trial % 2 == 0 ? burgers : ks;
    const auto forms = make_provider(spec);
    const int N = 1 + trial % 6;
    const ReducedSpace s = ReducedSpace::from_basis(rt::random_matrix(rng, 16, N),
                                                    forms->inner_product(InnerProductTag::H1));
    const IndicatorData d = build_indicator(s, *forms);
    std::uniform_real_distribution<double> pick(spec.mu_lb, spec.mu_ub);
    const double mu = pick(rng);
    const RomTrajectory t = rt::random_trajectory(rng, N, rt::small_grid(), mu);
    worst = std::max(worst, rel(evaluate_indicator(d, t, mu), rt::direct_indicator(*forms, s.modes, t, mu)));
  }
  out.detail << "trajectories=" << INDICATOR_TRAJECTORIES << " max rel=" << worst;
  out.require(worst <= INDICATOR_TOL, "offline/online within 1e-10");
}

void hblock_cv_exactness(Outcome &out)
{
  std::mt19937_64 rng(105);
  double worst_loo = 0.0, worst_h = 0.0;
  for (int trial = 0; trial < 4; ++trial)
  {
    const int n = 12 + 2 * trial;
    const InnerProduct ip{InnerProductTag::H1, rt::random_spd(rng, n)};
    Matrix S = rt::random_matrix(rng, n, 16);
    for (int k = 1; k < 16; ++k)
    {
      S.col(k) = 0.6 * S.col(k - 1) + 0.4 * S.col(k);
    }
    for (int N : {1, 2, 4})
    {
      worst_loo =
          std::max(worst_loo, rel(hblock_cv(S, 0, N, ip).estimate, rt::block_cv_oracle(S, ip.gram, 0, N)));
      for (int h : {1, 2, 3})
      {
        worst_h = std::max(worst_h,
                           rel(hblock_cv(S, h, N, ip).estimate, rt::block_cv_oracle(S, ip.gram, h, N)));
      }
    }
  }
  out.detail << "K=16 h=0 vs LOOCV rel=" << worst_loo << " general h rel=" << worst_h;
  out.require(worst_loo <= CV_TOL, "h = 0 equals LOOCV (to 1e-12)");
  out.require(worst_h <= CV_TOL, "general h within 1e-12");
}

void box_invariant(Outcome &out)
{
  FomSpec spec;
  spec.kind = FomKind::KsPeriodic;
  spec.n_h = 64;
  spec.length = 40.0;
  spec.mu_lb = 0.7;
  spec.mu_ub = 1.3;
  spec.dt = 0.05;
  spec.T = 300.0;
  spec.T0 = 100.0;
  spec.dt_s = 1.0;
  spec.K = 200;
  const auto forms = make_provider(spec);
  const FomResult r = run_fom(spec, *forms, 1.0);
  const InnerProduct ip = forms->inner_product(InnerProductTag::H1);
  const ReducedSpace s = pod_build(r.snapshots, 10, ip);
  const ReducedOperators ops = assemble_operators(s, *forms, spec.dt);
  const BoxBounds b = estimate_bounds(r.snapshots, s, ip, 0.01);

  // The reduced runs cover 2e5 steps, far beyond the snapshot window.
  TimeGrid grid = spec.grid();
  grid.J = BOX_STEPS;
  const Vector a0 = initial_coefficients(s, *forms);
  const ConstrainedRun c = constrained_integrate(ops, a0, 1.0, grid, b);
  double slack = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 1; j < c.trajectory.a.cols(); ++j)
  {
    for (int n = 0; n < 10; ++n)
    {
      const double x = c.trajectory.a(n, j);
      slack = std::max(slack, std::max(b.alpha(n) - x, x - b.beta(n)));
    }
  }
  const bool finite = c.trajectory.a.allFinite();
  const RomTrajectory g = rom_integrate(ops, a0, 1.0, grid);
  out.detail << "J=" << grid.J << " N=10 eps=0.01 max slack=" << slack
             << " #Gal=" << c.activation.global << " galerkin="
             << (g.failed ? "failed at step " + std::to_string(g.failed_step)
                          : "completed, max|a|=" + std::to_string(g.a.cwiseAbs().maxCoeff()))
             << " box max|beta|=" << b.beta.cwiseAbs().maxCoeff();
  out.require(!c.trajectory.failed, "constrained run completes");
  out.require(static_cast<int>(c.trajectory.a.cols()) == BOX_STEPS + 1, "J >= 2e5 steps stored");
  out.require(slack <= BOX_SLACK, "coefficients inside [alpha, beta] to 1e-12");
  out.require(finite, "no non-finite coefficient");
}

struct ParametricRuns
{
  std::string first, second;
  bool ok = false;
};

ParametricRuns &parametric_runs()
{
  static ParametricRuns runs;
  return runs;
}

void greedy_determinism(Outcome &out, const std::string &work)
{
  const ExperimentConfig cfg =
      parse_config(read_text(std::string(ROMFORGE_SOURCE_DIR) + "/configs/ks_parametric.json"));
  ParametricRuns &runs = parametric_runs();
  runs.first = work + "/parametric_a";
  runs.second = work + "/parametric_b";
  run_experiment(cfg, runs.first, true);
  run_experiment(cfg, runs.second, true);
  runs.ok = true;

  // Byte-identical artifacts.
  int files = 0, differ = 0;
  for (const auto &entry : fs::recursive_directory_iterator(runs.first))
  {
    if (!entry.is_regular_file())
    {
      continue;
    }
    const fs::path other = fs::path(runs.second) / fs::relative(entry.path(), runs.first);
    ++files;
    if (!fs::exists(other) || read_text(entry.path().string()) != read_text(other.string()))
    {
      ++differ;
    }
  }
  const auto ga = nlohmann::json::parse(read_text(runs.first + "/greedy/greedy.json"));
  const auto gb = nlohmann::json::parse(read_text(runs.second + "/greedy/greedy.json"));
  std::vector<double> anchors_a, anchors_b;
  for (const auto &a : ga["anchors"])
  {
    anchors_a.push_back(a["mu"]);
  }
  for (const auto &a : gb["anchors"])
  {
    anchors_b.push_back(a["mu"]);
  }

  // Running minimum per training point, recomputed from the per-model indicator column.
  std::map<std::string, double> running;
  std::map<std::string, double> last_logged;
  bool monotone = true, consistent = true;
  for (const auto &row : read_csv(runs.first + "/greedy_log.csv"))
  {
    const std::string &mu = row.at(2);
    const double delta = std::stod(row.at(3));
    const double logged = std::stod(row.at(4));
    running[mu] = running.count(mu) ? std::min(running[mu], delta) : delta;
    consistent = consistent && logged == running[mu];
    if (last_logged.count(mu))
    {
      monotone = monotone && logged <= last_logged[mu];
    }
    last_logged[mu] = logged;
  }
  out.detail << "anchors=";
  for (double a : anchors_a)
  {
    out.detail << a << ' ';
  }
  out.detail << "files=" << files << " differing=" << differ;
  out.require(static_cast<int>(anchors_a.size()) == cfg.L, "L anchors selected");
  out.require(anchors_a == anchors_b, "anchors reproduced");
  out.require(differ == 0 && files > 0, "artifacts byte-identical");
  out.require(monotone, "min indicator nonincreasing");
  out.require(consistent, "logged minimum equals the recomputed running minimum");
}

void parametric_analogue(Outcome &out)
{
  const ParametricRuns &runs = parametric_runs();
  out.require(runs.ok, "parametric study available");
  if (!runs.ok)
  {
    return;
  }
  std::vector<double> delta, error;
  int anchors = 0, anchors_exact = 0;
  for (const auto &row : read_csv(runs.first + "/effectivity.csv"))
  {
    if (row.at(3) == "1")
    {
      ++anchors;
      anchors_exact += row.at(7) == "1" ? 1 : 0;
      continue;
    }
    const double d = std::stod(row.at(4)), e = std::stod(row.at(5));
    if (std::isfinite(d) && std::isfinite(e))
    {
      delta.push_back(d);
      error.push_back(e);
    }
  }
  const double rho = pearson(average_ranks(delta), average_ranks(error));
  const auto sc = nlohmann::json::parse(read_text(runs.first + "/selection_consistency.json"));
  const double reported = sc["spearman"];
  out.detail << "pairs=" << delta.size() << " spearman=" << rho
             << " selection consistency=" << sc["fraction"].get<double>()
             << " anchors with eta_corr == 1: " << anchors_exact << "/" << anchors;
  out.require(anchors > 0 && anchors_exact == anchors, "eta_corr = 1 at every anchor");
  out.require(std::abs(rho - reported) <= 1e-12, "reported Spearman matches recomputation");
  if (rho < SPEARMAN_MIN)
  {
    std::cout << "WARN  [8] Spearman correlation " << rho << " below " << SPEARMAN_MIN << "\n";
  }
}

void stability_constants_unit(Outcome &out)
{
  double worst = 0.0;
  std::mt19937_64 rng(109);
  for (const FomSpec &spec : {rt::ks_spec(32), rt::burgers_spec(32)})
  {
    const auto forms = make_provider(spec);
    const double mu = spec.kind == FomKind::KsPeriodic ? 1.0 : 40.0;
    const FomResult r = run_fom(spec, *forms, mu);
    const ReducedSpace s0 = pod_build(r.snapshots, 3, forms->inner_product(InnerProductTag::H1));
    for (int rot = 0; rot < 2; ++rot)
    {
      ReducedSpace s = s0;
      if (rot == 1)
      {
        const Matrix Q = Eigen::HouseholderQR<Matrix>(rt::random_matrix(rng, 3, 3)).householderQ();
        s.modes = s0.modes * Q;
      }
      const Matrix &Z = s.modes;
      const Matrix &M = forms->mass_matrix();
      const Matrix &V = forms->v_matrix();
      const Vector a_best = (Z.transpose() * V * Z).ldlt().solve(Z.transpose() * V * r.mean);
      double tke_opt = 0.0;
      const Matrix &S = r.snapshots.states;
      for (Eigen::Index k = 0; k < S.cols(); ++k)
      {
        const Vector p =
            Z * (Z.transpose() * M * Z).ldlt().solve(Z.transpose() * M * (S.col(k) - r.mean));
        tke_opt += 0.5 * p.dot(M * p) / static_cast<double>(S.cols());
      }
      const StabilityConstants sc = stability_constants(*forms, S, r.mean, s, a_best, tke_opt);
      worst = std::max({worst, std::abs(sc.m - 1.0), std::abs(sc.sigma - 1.0)});
    }
  }
  out.detail << "cases=4 max |m - 1|, |sigma - 1| = " << worst;
  out.require(worst <= STABILITY_TOL, "m = sigma = 1 to 1e-10");
}

}  // namespace

int main(int argc, char **argv)
{
  const std::string work =
      argc > 1 ? argv[1] : (fs::temp_directory_path() / "romforge_acceptance").string();
  fs::create_directories(work);

  const std::vector<Criterion> criteria{
      {1, "POD correctness", 5.0, pod_correctness},
      {2, "full-space exactness", 30.0, full_space_exactness},
      {3, "constrained-step optimality", 60.0, constrained_optimality},
      {4, "indicator offline/online equivalence", 60.0, indicator_equivalence},
      {5, "h-block CV", 30.0, hblock_cv_exactness},
      {6, "box invariant on chaotic KS", 600.0, box_invariant},
      {7, "greedy monotonicity and determinism", 900.0,
       [&](Outcome &o) { greedy_determinism(o, work); }},
      {8, "parametric analogue", 900.0, parametric_analogue},
      {9, "stability constants", 5.0, stability_constants_unit},
  };

  int failures = 0;
  for (const Criterion &c : criteria)
  {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try
    {
      c.body(out);
    }
    catch (const std::exception &e)
    {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > c.limit_s)
    {
      out.pass = false;
      out.detail << " [runtime over " << c.limit_s << " s]";
    }
    failures += out.pass ? 0 : 1;
    std::cout << (out.pass ? "PASS" : "FAIL") << "  [" << c.id << "] " << c.name << " ("
              << std::fixed << std::setprecision(2) << elapsed << " s): "
              << std::defaultfloat << std::setprecision(6) << out.detail.str() << std::endl;
  }
  fs::remove_all(work);
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << std::endl;
  return failures == 0 ? 0 : 1;
}

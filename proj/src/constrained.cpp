// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/constrained.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "integrate.hpp"
#include "romforge/io.hpp"

namespace romforge
{

bool BoxBounds::contains(const Vector &a) const
{
  if (a.size() != alpha.size())
  {
    throw ConfigError("coefficient vector does not match the bounds");
  }
  for (Eigen::Index n = 0; n < a.size(); ++n)
  {
    if (!(a(n) >= alpha(n) && a(n) <= beta(n)))
    {
      return false;
    }
  }
  return true;
}

BoxBounds estimate_bounds(const Matrix &states, const ReducedSpace &space,
                          const InnerProduct &inner, double eps)
{
  if (!(eps >= 0.0))
  {
    throw ConfigError("bound margin eps must be nonnegative");
  }
  if (states.cols() < 1)
  {
    throw ConfigError("bounds need at least one snapshot");
  }
  if (states.rows() != space.dim() || inner.gram.rows() != space.dim())
  {
    throw ConfigError("snapshots and reduced space have different lengths");
  }
  const Matrix coeffs = space.modes.transpose() * (inner.gram * states);
  BoxBounds b;
  b.eps = eps;
  b.anchor = space.anchor;
  b.sample_min = coeffs.rowwise().minCoeff();
  b.sample_max = coeffs.rowwise().maxCoeff();
  const Vector spread = b.sample_max - b.sample_min;
  b.alpha = b.sample_min - eps * spread;
  b.beta = b.sample_max + eps * spread;
  return b;
}

BoxBounds estimate_bounds(const SnapshotSet &snapshots, const ReducedSpace &space,
                          const InnerProduct &inner, double eps)
{
  BoxBounds b = estimate_bounds(snapshots.states, space, inner, eps);
  b.anchor = snapshots.mu;
  return b;
}

std::vector<BoxBounds> bounds_per_anchor(const std::vector<const SnapshotSet *> &snapshots,
                                         const std::vector<const ReducedSpace *> &spaces,
                                         const InnerProduct &inner, double eps)
{
  if (snapshots.size() != spaces.size())
  {
    throw ConfigError("need exactly one snapshot set per anchor space");
  }
  std::vector<BoxBounds> out;
  for (std::size_t l = 0; l < spaces.size(); ++l)
  {
    out.push_back(estimate_bounds(*snapshots[l], *spaces[l], inner, eps));
  }
  return out;
}

namespace
{

double feas_tol(double bound)
{
  return 1e-14 * (1.0 + std::abs(bound));
}

}  // namespace

QpResult solve_box_qp(const Matrix &A, const Vector &F, const Vector &lo, const Vector &hi,
                      const ActiveSet &warm)
{
  const Eigen::Index N = A.cols();
  if (A.rows() != N || F.size() != N || lo.size() != N || hi.size() != N)
  {
    throw ConfigError("box QP: dimension mismatch");
  }
  if (!warm.empty() && static_cast<Eigen::Index>(warm.size()) != N)
  {
    throw ConfigError("box QP: warm-start set has the wrong length");
  }
  for (Eigen::Index i = 0; i < N; ++i)
  {
    if (!(lo(i) <= hi(i)))
    {
      throw ConfigError("box QP: lower bound exceeds upper bound");
    }
  }
  QpResult res;
  res.x = Vector::Zero(N);
  res.active.assign(N, Bound::Free);
  if (N == 0)
  {
    res.ok = true;
    return res;
  }

  Matrix H = A.transpose() * A;
  const Vector g = A.transpose() * F;
  {
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(H, Eigen::EigenvaluesOnly)
                          .eigenvalues();
    const double lmin = ev.minCoeff(), lmax = ev.maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > QP_COND_LIMIT)
    {
      H.diagonal().array() += QP_REGULARIZATION * H.trace() / N;
    }
  }

  auto fixed = [&](Eigen::Index i) { return lo(i) == hi(i); };
  ActiveSet &W = res.active;
  Vector &x = res.x;
  const Vector start = Eigen::LLT<Matrix>(H).solve(g);
  for (Eigen::Index i = 0; i < N; ++i)
  {
    if (fixed(i))
    {
      W[i] = Bound::Lower;
    }
    else if (!warm.empty() && warm[i] != Bound::Free)
    {
      W[i] = warm[i];
    }
    else if (start.allFinite() && start(i) < lo(i))
    {
      W[i] = Bound::Lower;
    }
    else if (start.allFinite() && start(i) > hi(i))
    {
      W[i] = Bound::Upper;
    }
    if (W[i] == Bound::Lower)
    {
      x(i) = lo(i);
    }
    else if (W[i] == Bound::Upper)
    {
      x(i) = hi(i);
    }
    else
    {
      x(i) = start.allFinite() ? std::clamp(start(i), lo(i), hi(i)) : 0.5 * (lo(i) + hi(i));
    }
  }

  const double scale = std::max({1.0, g.cwiseAbs().maxCoeff(), H.cwiseAbs().maxCoeff()});
  const int cap = QP_CHANGE_FACTOR * static_cast<int>(N);
  while (res.changes <= cap)
  {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < N; ++i)
    {
      if (W[i] == Bound::Free)
      {
        free.push_back(i);
      }
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
    Vector y(nf);
    if (nf > 0)
    {
      Matrix Hff(nf, nf);
      Vector rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a)
      {
        rhs(a) = g(free[a]);
        for (Eigen::Index i = 0; i < N; ++i)
        {
          if (W[i] != Bound::Free)
          {
            rhs(a) -= H(free[a], i) * x(i);
          }
        }
        for (Eigen::Index b = 0; b < nf; ++b)
        {
          Hff(a, b) = H(free[a], free[b]);
        }
      }
      Eigen::LLT<Matrix> chol(Hff);
      if (chol.info() != Eigen::Success)
      {
        return res;
      }
      y = chol.solve(rhs);
      if (!y.allFinite())
      {
        return res;
      }
    }

    // Largest feasible fraction of the step towards the subproblem minimizer.
    double t = 1.0;
    Eigen::Index block = -1;
    Bound block_side = Bound::Free;
    for (Eigen::Index a = 0; a < nf; ++a)
    {
      const Eigen::Index i = free[a];
      const double d = y(a) - x(i);
      if (y(a) < lo(i) - feas_tol(lo(i)) && d < 0.0)
      {
        const double ti = (lo(i) - x(i)) / d;
        if (ti < t)
        {
          t = ti;
          block = i;
          block_side = Bound::Lower;
        }
      }
      else if (y(a) > hi(i) + feas_tol(hi(i)) && d > 0.0)
      {
        const double ti = (hi(i) - x(i)) / d;
        if (ti < t)
        {
          t = ti;
          block = i;
          block_side = Bound::Upper;
        }
      }
    }

    if (block < 0)
    {
      for (Eigen::Index a = 0; a < nf; ++a)
      {
        x(free[a]) = std::clamp(y(a), lo(free[a]), hi(free[a]));
      }
      // Multipliers of the working set; drop the most negative one.
      const Vector grad = H * x - g;
      double worst = -1e-13 * scale;
      Eigen::Index drop = -1;
      for (Eigen::Index i = 0; i < N; ++i)
      {
        if (fixed(i) || W[i] == Bound::Free)
        {
          continue;
        }
        const double lambda = W[i] == Bound::Lower ? grad(i) : -grad(i);
        if (lambda < worst)
        {
          worst = lambda;
          drop = i;
        }
      }
      if (drop < 0)
      {
        res.ok = true;
        return res;
      }
      W[drop] = Bound::Free;
      ++res.changes;
      continue;
    }

    t = std::max(t, 0.0);
    for (Eigen::Index a = 0; a < nf; ++a)
    {
      const Eigen::Index i = free[a];
      x(i) = std::clamp(x(i) + t * (y(a) - x(i)), lo(i), hi(i));
    }
    x(block) = block_side == Bound::Lower ? lo(block) : hi(block);
    W[block] = block_side;
    ++res.changes;
  }
  return res;
}

ConstrainedStep constrained_step(const ReducedOperators &ops, const Vector &a, double mu,
                                 const BoxBounds &bounds, const ActiveSet &warm)
{
  if (bounds.N() != ops.N())
  {
    throw ConfigError("bounds do not match the reduced operators");
  }
  if (a.size() != ops.N())
  {
    throw ConfigError("coefficient vector does not match the reduced operators");
  }
  ConstrainedStep out;
  const Matrix A = ops.system(a, mu);
  const Vector F = ops.rhs(a, mu);
  auto gal = solve_reduced(A, F);
  if (!gal)
  {
    return out;
  }
  out.galerkin = *gal;
  if (bounds.contains(*gal))
  {
    out.a = std::move(*gal);
    out.status = StepStatus::Galerkin;
    out.active.assign(ops.N(), Bound::Free);
    return out;
  }
  QpResult qp = solve_box_qp(A, F, bounds.alpha, bounds.beta, warm);
  if (!qp.ok || !qp.x.allFinite())
  {
    return out;
  }
  out.a = std::move(qp.x);
  out.active = std::move(qp.active);
  out.status = StepStatus::Constrained;
  return out;
}

ConstrainedRun constrained_integrate(const ReducedOperators &ops, const Vector &a0, double mu,
                                     const TimeGrid &grid, const BoxBounds &bounds)
{
  const int N = ops.N();
  if (bounds.N() != N)
  {
    throw ConfigError("bounds do not match the reduced operators");
  }
  ConstrainedRun run;
  std::vector<long> in_box(N, 0);
  long all_in_box = 0, counted = 0;
  ActiveSet warm;

  run.trajectory = detail::integrate(
      N, a0, mu, grid,
      [&](int j, const Vector &a) -> std::optional<std::pair<Vector, StepStatus>>
      {
        ConstrainedStep step = constrained_step(ops, a, mu, bounds, warm);
        if (step.status == StepStatus::Failed)
        {
          return std::nullopt;
        }
        if (j + 1 > grid.J0)
        {
          bool all = true;
          for (int n = 0; n < N; ++n)
          {
            const bool inside = step.galerkin(n) >= bounds.alpha(n) &&
                                step.galerkin(n) <= bounds.beta(n);
            in_box[n] += inside ? 1 : 0;
            all = all && inside;
          }
          all_in_box += all ? 1 : 0;
          ++counted;
        }
        warm = std::move(step.active);
        return std::make_pair(std::move(step.a), step.status);
      });

  ActivationReport &rep = run.activation;
  rep.steps = static_cast<int>(counted);
  rep.per_mode.assign(N, 0.0);
  if (counted > 0)
  {
    for (int n = 0; n < N; ++n)
    {
      rep.per_mode[n] = static_cast<double>(in_box[n]) / counted;
    }
    rep.global = static_cast<double>(all_in_box) / counted;
  }
  return run;
}

std::string activation_csv(const ActivationReport &report)
{
  std::ostringstream out;
  out << "n,rate\n";
  out << 0 << ',' << format_double(report.global) << '\n';
  for (std::size_t n = 0; n < report.per_mode.size(); ++n)
  {
    out << (n + 1) << ',' << format_double(report.per_mode[n]) << '\n';
  }
  return out.str();
}

namespace
{

std::vector<double> to_std(const Vector &v)
{
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector from_std(const std::vector<double> &v)
{
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string bounds_json(const BoxBounds &bounds)
{
  nlohmann::json j;
  j["mu"] = bounds.anchor;
  j["eps"] = bounds.eps;
  j["alpha"] = to_std(bounds.alpha);
  j["beta"] = to_std(bounds.beta);
  j["sample_min"] = to_std(bounds.sample_min);
  j["sample_max"] = to_std(bounds.sample_max);
  return j.dump(2) + "\n";
}

BoxBounds bounds_from_json(const std::string &text)
{
  BoxBounds b;
  try
  {
    const auto j = nlohmann::json::parse(text);
    b.anchor = j.at("mu").get<double>();
    b.eps = j.at("eps").get<double>();
    b.alpha = from_std(j.at("alpha").get<std::vector<double>>());
    b.beta = from_std(j.at("beta").get<std::vector<double>>());
    b.sample_min = from_std(j.at("sample_min").get<std::vector<double>>());
    b.sample_max = from_std(j.at("sample_max").get<std::vector<double>>());
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ConfigError(std::string("malformed bounds JSON: ") + e.what());
  }
  if (b.alpha.size() != b.beta.size())
  {
    throw ConfigError("bounds JSON: alpha and beta differ in length");
  }
  return b;
}

ExtremaCurves coefficient_extrema(const std::vector<const SnapshotSet *> &snapshots,
                                  const ReducedSpace &space, const InnerProduct &inner,
                                  const BoxBounds &anchor_bounds)
{
  const int N = space.N();
  if (anchor_bounds.N() != N)
  {
    throw ConfigError("anchor bounds do not match the reduced space");
  }
  ExtremaCurves out;
  const Eigen::Index P = static_cast<Eigen::Index>(snapshots.size());
  out.min.resize(N, P);
  out.max.resize(N, P);
  out.min_deviation = Vector::Zero(N);
  out.max_deviation = Vector::Zero(N);
  const Vector spread = anchor_bounds.spread();
  auto relative = [](double diff, double ref)
  {
    if (ref > 0.0)
    {
      return diff / ref;
    }
    return diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  for (Eigen::Index p = 0; p < P; ++p)
  {
    const BoxBounds b = estimate_bounds(snapshots[p]->states, space, inner, 0.0);
    out.mu.push_back(snapshots[p]->mu);
    out.min.col(p) = b.sample_min;
    out.max.col(p) = b.sample_max;
    for (int n = 0; n < N; ++n)
    {
      out.min_deviation(n) = std::max(
          out.min_deviation(n),
          relative(std::abs(b.sample_min(n) - anchor_bounds.sample_min(n)), spread(n)));
      out.max_deviation(n) = std::max(
          out.max_deviation(n),
          relative(std::abs(b.sample_max(n) - anchor_bounds.sample_max(n)), spread(n)));
    }
  }
  return out;
}

}  // namespace romforge

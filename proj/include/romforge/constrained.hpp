// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_CONSTRAINED_HPP
#define ROMFORGE_CONSTRAINED_HPP

#include <string>
#include <vector>

#include "romforge/fom.hpp"
#include "romforge/pod.hpp"
#include "romforge/rom.hpp"
#include "romforge/types.hpp"

namespace romforge
{

constexpr double QP_COND_LIMIT = 1e14;
constexpr double QP_REGULARIZATION = 1e-12;
constexpr int QP_CHANGE_FACTOR = 10;

// alpha = m - eps (M - m), beta = M + eps (M - m), with m and M the per-mode sample
// extrema of the snapshot coefficients.
struct BoxBounds
{
  Vector alpha;
  Vector beta;
  double eps = 0.0;
  Vector sample_min;
  Vector sample_max;
  double anchor = 0.0;

  int N() const { return static_cast<int>(alpha.size()); }
  Vector spread() const { return sample_max - sample_min; }
  bool contains(const Vector &a) const;
};

// Coefficients a_n^k = (u^k, z_n) in `inner`; accepts any K >= 1.
BoxBounds estimate_bounds(const Matrix &states, const ReducedSpace &space,
                          const InnerProduct &inner, double eps);
BoxBounds estimate_bounds(const SnapshotSet &snapshots, const ReducedSpace &space,
                          const InnerProduct &inner, double eps);

// Bounds of anchor l come from anchor l's snapshots and space only.
std::vector<BoxBounds> bounds_per_anchor(const std::vector<const SnapshotSet *> &snapshots,
                                         const std::vector<const ReducedSpace *> &spaces,
                                         const InnerProduct &inner, double eps);

enum class Bound : signed char
{
  Free = 0,
  Lower = -1,
  Upper = 1
};

// Which coordinates sat on a bound at the previous solve.
using ActiveSet = std::vector<Bound>;

struct QpResult
{
  Vector x;
  ActiveSet active;
  int changes = 0;
  bool ok = false;
};

// Minimizes 1/2 ||A x - F||^2 over lo <= x <= hi by a primal active-set method on the normal
// equations. Coordinates with lo == hi are fixed. `warm` seeds the working set.
QpResult solve_box_qp(const Matrix &A, const Vector &F, const Vector &lo, const Vector &hi,
                      const ActiveSet &warm = {});

struct ConstrainedStep
{
  Vector a;
  StepStatus status = StepStatus::Failed;
  Vector galerkin;  // unconstrained solution of the same step
  ActiveSet active;
};

ConstrainedStep constrained_step(const ReducedOperators &ops, const Vector &a, double mu,
                                 const BoxBounds &bounds, const ActiveSet &warm = {});

struct ActivationReport
{
  std::vector<double> per_mode;  // fraction of steps whose Galerkin component n is in the box
  double global = 0.0;           // fraction of steps whose whole Galerkin solution is
  int steps = 0;
};

struct ConstrainedRun
{
  RomTrajectory trajectory;
  ActivationReport activation;
};

// Rates are taken over j = J0+1..J.
ConstrainedRun constrained_integrate(const ReducedOperators &ops, const Vector &a0, double mu,
                                     const TimeGrid &grid, const BoxBounds &bounds);

// CSV with header n,rate; the global rate is written with n = 0.
std::string activation_csv(const ActivationReport &report);
std::string bounds_json(const BoxBounds &bounds);
BoxBounds bounds_from_json(const std::string &text);

// Per-parameter coefficient extrema against the anchor bounds.
struct ExtremaCurves
{
  std::vector<double> mu;
  Matrix min;  // N x n_mu
  Matrix max;
  // max over mu of |m_n(mu) - m_n| / Delta_n and the same for the maxima.
  Vector min_deviation;
  Vector max_deviation;
};

ExtremaCurves coefficient_extrema(const std::vector<const SnapshotSet *> &snapshots,
                                  const ReducedSpace &space, const InnerProduct &inner,
                                  const BoxBounds &anchor_bounds);

}  // namespace romforge

#endif  // ROMFORGE_CONSTRAINED_HPP

// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_INDICATOR_HPP
#define ROMFORGE_INDICATOR_HPP

#include <string>

#include "romforge/fom.hpp"
#include "romforge/pod.hpp"
#include "romforge/rom.hpp"
#include "romforge/types.hpp"

namespace romforge
{

constexpr double SIGMA_CLAMP_TOL = 1e-10;

// Riesz-representer Gramian of the time-averaged residual. The catalogue order is
//   m_n (N), a_{q,n} (Q blocks of N), cg_n (N), c_{m,n} (N^2, row-major in (m, n)),
//   mg_n (N), f_q (Q), f_c (1),
// with functionals (z_n, v)_M, a_q(z_n, v), c(R_g, z_n, v), c(z_n, z_m, v), c(z_n, R_g, v),
// a_q(R_g, v), c(R_g, R_g, v). Hence M = N^2 + (3 + Q) N + Q + 1.
struct IndicatorData
{
  Matrix sigma;        // M x M
  Matrix representers; // n_h x M
  int N = 0;
  int Q = 0;
  double lambda_max = 0.0;
  double anchor = 0.0;
  FomKind kind = FomKind::BurgersDirichlet;

  int M() const { return static_cast<int>(sigma.rows()); }
  static int catalogue_size(int N, int Q) { return N * N + (3 + Q) * N + Q + 1; }
};

// Residual functionals of the catalogue tested against every basis vector, n_h x M.
Matrix residual_functionals(const ReducedSpace &space, const FormProvider &forms);

IndicatorData build_indicator(const ReducedSpace &space, const FormProvider &forms);

// Theta for accumulators over a window of length T - T0.
Vector theta_vector(const IndicatorData &data, const TrajectoryAccumulators &acc, double mu,
                    double window);

// sqrt(Theta^T Sigma Theta) with tiny negative forms clamped to zero.
double indicator_from_theta(const IndicatorData &data, const Vector &theta);

// Throws NumericalError for failed trajectories.
double evaluate_indicator(const IndicatorData &data, const RomTrajectory &traj, double mu);

// Delta / eta with eta the effectivity at the anchor.
double corrected_indicator(double delta, double eta_anchor);

}  // namespace romforge

#endif  // ROMFORGE_INDICATOR_HPP

// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_ROM_HPP
#define ROMFORGE_ROM_HPP

#include <optional>
#include <string>
#include <vector>

#include "romforge/fom.hpp"
#include "romforge/pod.hpp"
#include "romforge/types.hpp"

namespace romforge
{

constexpr double LU_PIVOT_TOL = 1e-14;

// Dense tensors of the reduced system
//   [A1 + sum_q theta_q A2_q + C(a^j)] a^{j+1} = E a^j - sum_q theta_q G_q - H.
struct ReducedOperators
{
  Matrix A1;               // M_Z / dt + c(R_g, z_n, z_m)
  std::vector<Matrix> A2;  // a_q(z_n, z_m)
  std::vector<Matrix> C;   // C[i](m, n) = c(z_i, z_n, z_m)
  Matrix E;                // M_Z / dt - c(z_n, R_g, z_m)
  std::vector<Vector> G;   // a_q(R_g, z_m)
  Vector H;                // c(R_g, R_g, z_m)
  Matrix mode_mass;        // (z_n, z_m)_{L2}
  double dt = 0.0;
  double anchor = 0.0;
  FomKind kind = FomKind::BurgersDirichlet;

  int N() const { return static_cast<int>(A1.rows()); }
  double theta(int q, double mu) const { return affine_coefficient(kind, q, mu); }

  Matrix system(const Vector &a, double mu) const;
  Vector rhs(const Vector &a, double mu) const;
};

ReducedOperators assemble_operators(const ReducedSpace &space, const FormProvider &forms,
                                    double dt);

enum class StepStatus
{
  Galerkin,
  Constrained,
  Failed
};

std::string to_string(StepStatus status);

// Dense LU with partial pivoting; nullopt when a pivot falls below the tolerance.
std::optional<Vector> solve_reduced(const Matrix &system, const Vector &rhs);

std::optional<Vector> galerkin_step(const ReducedOperators &ops, const Vector &a, double mu);

// Time averages needed by the indicator and the statistics, with weight dt / (T - T0):
// abar_plus over j = J0+1..J, abar_minus over J0..J-1, cbar(m, n) = sum a_m^{j+1} a_n^j.
struct TrajectoryAccumulators
{
  Vector abar_plus;
  Vector abar_minus;
  Matrix cbar;
  Vector a_start;  // a^{J0}
  Vector a_end;    // a^J
};

// Offline evaluation of the accumulators from stored coefficients a^0..a^J.
TrajectoryAccumulators accumulate(const Matrix &a, int J0);

struct RomTrajectory
{
  Matrix a;  // N x (J + 1), truncated after a failed step
  TimeGrid grid;
  double mu = 0.0;
  std::vector<StepStatus> status;  // one per stored column; column 0 is Galerkin
  bool failed = false;
  int failed_step = -1;
  TrajectoryAccumulators acc;

  int N() const { return static_cast<int>(a.rows()); }
  // Time-averaged coefficients over the statistics window (abar_plus).
  const Vector &mean_coeffs() const { return acc.abar_plus; }
  // Coefficients at the K sampling steps.
  Matrix samples() const;
};

// L2 projection of the FOM initial state onto the space.
Vector initial_coefficients(const ReducedSpace &space, const FormProvider &forms);

RomTrajectory rom_integrate(const ReducedOperators &ops, const Vector &a0, double mu,
                            const TimeGrid &grid);

// CSV with header j,t,a_1..a_N,status.
std::string trajectory_csv(const RomTrajectory &traj);

}  // namespace romforge

#endif  // ROMFORGE_ROM_HPP

// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_SRC_INTEGRATE_HPP
#define ROMFORGE_SRC_INTEGRATE_HPP

#include <optional>
#include <utility>

#include "romforge/rom.hpp"

namespace romforge
{

namespace detail
{

// Runs `step(a_j) -> optional<pair<a_{j+1}, status>>` for j = 0..J-1, storing every state
// and summing the accumulators online.
template <typename Step>
RomTrajectory integrate(int N, const Vector &a0, double mu, const TimeGrid &grid, Step &&step)
{
  if (a0.size() != N)
  {
    throw ConfigError("initial coefficients do not match the reduced operators");
  }
  if (!a0.allFinite())
  {
    throw ConfigError("initial coefficients are not finite");
  }
  RomTrajectory traj;
  traj.grid = grid;
  traj.mu = mu;
  traj.a.resize(N, grid.J + 1);
  traj.a.col(0) = a0;
  traj.status.assign(1, StepStatus::Galerkin);
  traj.status.reserve(grid.J + 1);

  TrajectoryAccumulators &acc = traj.acc;
  acc.abar_plus = Vector::Zero(N);
  acc.abar_minus = Vector::Zero(N);
  acc.cbar = Matrix::Zero(N, N);
  acc.a_start = grid.J0 == 0 ? a0 : Vector::Zero(N);
  acc.a_end = a0;

  for (int j = 0; j < grid.J; ++j)
  {
    auto next = step(j, traj.a.col(j));
    if (!next)
    {
      traj.failed = true;
      traj.failed_step = j + 1;
      traj.a.conservativeResize(N, j + 1);
      return traj;
    }
    traj.a.col(j + 1) = next->first;
    traj.status.push_back(next->second);
    if (j >= grid.J0)
    {
      acc.abar_plus += traj.a.col(j + 1);
      acc.abar_minus += traj.a.col(j);
      acc.cbar += traj.a.col(j + 1) * traj.a.col(j).transpose();
    }
    if (j + 1 == grid.J0)
    {
      acc.a_start = traj.a.col(j + 1);
    }
  }
  const double w = grid.J > grid.J0 ? 1.0 / (grid.J - grid.J0) : 0.0;
  acc.abar_plus *= w;
  acc.abar_minus *= w;
  acc.cbar *= w;
  acc.a_end = traj.a.col(grid.J);
  return traj;
}

}  // namespace detail

}  // namespace romforge

#endif  // ROMFORGE_SRC_INTEGRATE_HPP

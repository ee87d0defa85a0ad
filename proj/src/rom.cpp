// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/rom.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/LU>

#include "integrate.hpp"
#include "romforge/io.hpp"
#include "romforge/kernels.hpp"
#include "romforge/metrics.hpp"

namespace romforge
{

Matrix ReducedOperators::system(const Vector &a, double mu) const
{
  Matrix A = A1;
  for (std::size_t q = 0; q < A2.size(); ++q)
  {
    A += theta(static_cast<int>(q), mu) * A2[q];
  }
  for (int i = 0; i < N(); ++i)
  {
    A += a(i) * C[i];
  }
  return A;
}

Vector ReducedOperators::rhs(const Vector &a, double mu) const
{
  Vector F = E * a - H;
  for (std::size_t q = 0; q < G.size(); ++q)
  {
    F -= theta(static_cast<int>(q), mu) * G[q];
  }
  return F;
}

ReducedOperators assemble_operators(const ReducedSpace &space, const FormProvider &forms,
                                    double dt)
{
  if (space.dim() != forms.size())
  {
    throw ConfigError("reduced space and form provider have different lengths");
  }
  if (!(dt > 0.0))
  {
    throw ConfigError("dt must be positive");
  }
  const Matrix &Z = space.modes;
  const int N = space.N();
  ReducedOperators ops;
  ops.dt = dt;
  ops.anchor = space.anchor;
  ops.kind = forms.spec().kind;
  ops.mode_mass = Z.transpose() * forms.mass_matrix() * Z;

  const Matrix lift_conv = forms.convection_matrix(Field::lift_only());
  ops.A1 = ops.mode_mass / dt + Z.transpose() * lift_conv * Z;

  Matrix lift_second(forms.size(), N);
  for (int n = 0; n < N; ++n)
  {
    const Vector zn = Z.col(n);
    lift_second.col(n) = forms.convection(Field::of(zn), Field::lift_only());
  }
  ops.E = ops.mode_mass / dt - Z.transpose() * lift_second;

  for (int q = 0; q < forms.num_affine_terms(); ++q)
  {
    ops.A2.push_back(Z.transpose() * forms.linear_matrix(q) * Z);
    ops.G.push_back(Z.transpose() * forms.linear_action(q, Field::lift_only()));
  }
  ops.H = Z.transpose() * forms.convection(Field::lift_only(), Field::lift_only());
  ops.C = kernels::convection_slices(forms, Z);

  auto finite = [](const Matrix &m) { return m.allFinite(); };
  bool ok = finite(ops.A1) && finite(ops.E) && ops.H.allFinite();
  for (const auto &m : ops.A2)
  {
    ok = ok && finite(m);
  }
  for (const auto &m : ops.C)
  {
    ok = ok && finite(m);
  }
  if (!ok)
  {
    throw NumericalError("reduced operators contain non-finite entries");
  }
  return ops;
}

std::string to_string(StepStatus status)
{
  switch (status)
  {
    case StepStatus::Galerkin:
      return "galerkin";
    case StepStatus::Constrained:
      return "constrained";
    case StepStatus::Failed:
      return "failed";
  }
  return "failed";
}

std::optional<Vector> solve_reduced(const Matrix &system, const Vector &rhs)
{
  if (!system.allFinite() || !rhs.allFinite())
  {
    return std::nullopt;
  }
  const double scale = system.cwiseAbs().maxCoeff();
  Eigen::PartialPivLU<Matrix> lu(system);
  const Matrix &LU = lu.matrixLU();
  for (Eigen::Index i = 0; i < LU.rows(); ++i)
  {
    if (!(std::abs(LU(i, i)) >= LU_PIVOT_TOL * scale) || scale == 0.0)
    {
      return std::nullopt;
    }
  }
  Vector x = lu.solve(rhs);
  if (!x.allFinite())
  {
    return std::nullopt;
  }
  return x;
}

std::optional<Vector> galerkin_step(const ReducedOperators &ops, const Vector &a, double mu)
{
  if (a.size() != ops.N())
  {
    throw ConfigError("coefficient vector does not match the reduced operators");
  }
  return solve_reduced(ops.system(a, mu), ops.rhs(a, mu));
}

TrajectoryAccumulators accumulate(const Matrix &a, int J0)
{
  const int J = static_cast<int>(a.cols()) - 1;
  if (J0 < 0 || J0 >= J)
  {
    throw ConfigError("accumulators need 0 <= J0 < J");
  }
  const Eigen::Index N = a.rows();
  TrajectoryAccumulators acc;
  acc.abar_plus = Vector::Zero(N);
  acc.abar_minus = Vector::Zero(N);
  acc.cbar = Matrix::Zero(N, N);
  for (int j = J0; j < J; ++j)
  {
    acc.abar_plus += a.col(j + 1);
    acc.abar_minus += a.col(j);
    acc.cbar += a.col(j + 1) * a.col(j).transpose();
  }
  const double w = 1.0 / (J - J0);
  acc.abar_plus *= w;
  acc.abar_minus *= w;
  acc.cbar *= w;
  acc.a_start = a.col(J0);
  acc.a_end = a.col(J);
  return acc;
}

Matrix RomTrajectory::samples() const
{
  Matrix out(N(), grid.K);
  for (int k = 1; k <= grid.K; ++k)
  {
    const int j = grid.sample_step(k);
    if (j >= a.cols())
    {
      throw NumericalError("trajectory ended before the sampling window");
    }
    out.col(k - 1) = a.col(j);
  }
  return out;
}

Vector initial_coefficients(const ReducedSpace &space, const FormProvider &forms)
{
  return projection_coefficients(space.modes, forms.mass_matrix(), forms.initial_state());
}

RomTrajectory rom_integrate(const ReducedOperators &ops, const Vector &a0, double mu,
                            const TimeGrid &grid)
{
  return detail::integrate(
      ops.N(), a0, mu, grid,
      [&](int, const Vector &a) -> std::optional<std::pair<Vector, StepStatus>>
      {
        auto next = galerkin_step(ops, a, mu);
        if (!next)
        {
          return std::nullopt;
        }
        return std::make_pair(std::move(*next), StepStatus::Galerkin);
      });
}

std::string trajectory_csv(const RomTrajectory &traj)
{
  std::ostringstream out;
  out << "j,t";
  for (int n = 1; n <= traj.N(); ++n)
  {
    out << ",a_" << n;
  }
  out << ",status\n";
  for (Eigen::Index j = 0; j < traj.a.cols(); ++j)
  {
    out << j << ',' << format_double(j * traj.grid.dt);
    for (int n = 0; n < traj.N(); ++n)
    {
      out << ',' << format_double(traj.a(n, j));
    }
    out << ',' << to_string(traj.status[j]) << '\n';
  }
  if (traj.failed)
  {
    out << traj.failed_step << ',' << format_double(traj.failed_step * traj.grid.dt);
    for (int n = 0; n < traj.N(); ++n)
    {
      out << ",nan";
    }
    out << ",failed\n";
  }
  return out.str();
}

}  // namespace romforge

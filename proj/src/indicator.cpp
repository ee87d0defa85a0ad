// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/indicator.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "romforge/kernels.hpp"

namespace romforge
{

Matrix residual_functionals(const ReducedSpace &space, const FormProvider &forms)
{
  if (space.dim() != forms.size())
  {
    throw ConfigError("reduced space and form provider have different lengths");
  }
  const Matrix &Z = space.modes;
  const int N = space.N();
  const int Q = forms.num_affine_terms();
  Matrix R(forms.size(), IndicatorData::catalogue_size(N, Q));
  Eigen::Index col = 0;
  const Field lift = Field::lift_only();
  std::vector<Vector> modes(N);
  for (int n = 0; n < N; ++n)
  {
    modes[n] = Z.col(n);
  }

  for (int n = 0; n < N; ++n)
  {
    R.col(col++) = forms.mass_matrix() * modes[n];
  }
  for (int q = 0; q < Q; ++q)
  {
    for (int n = 0; n < N; ++n)
    {
      R.col(col++) = forms.linear_action(q, Field::of(modes[n]));
    }
  }
  for (int n = 0; n < N; ++n)
  {
    R.col(col++) = forms.convection(lift, Field::of(modes[n]));
  }
  for (int m = 0; m < N; ++m)
  {
    for (int n = 0; n < N; ++n)
    {
      R.col(col++) = forms.convection(Field::of(modes[n]), Field::of(modes[m]));
    }
  }
  for (int n = 0; n < N; ++n)
  {
    R.col(col++) = forms.convection(Field::of(modes[n]), lift);
  }
  for (int q = 0; q < Q; ++q)
  {
    R.col(col++) = forms.linear_action(q, lift);
  }
  R.col(col++) = forms.convection(lift, lift);
  return R;
}

IndicatorData build_indicator(const ReducedSpace &space, const FormProvider &forms)
{
  const Matrix R = residual_functionals(space, forms);
  const Matrix &V = forms.v_matrix();
  Eigen::LLT<Matrix> chol(V);
  if (chol.info() != Eigen::Success)
  {
    throw NumericalError("V inner-product matrix is not positive definite");
  }
  IndicatorData data;
  data.N = space.N();
  data.Q = forms.num_affine_terms();
  data.anchor = space.anchor;
  data.kind = forms.spec().kind;
  data.representers = kernels::riesz_solve(chol, R);
  data.sigma = kernels::gram(data.representers, V);
  if (!data.sigma.allFinite())
  {
    throw NumericalError("Riesz Gramian contains non-finite entries");
  }
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(data.sigma, Eigen::EigenvaluesOnly)
                        .eigenvalues();
  data.lambda_max = ev.size() > 0 ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  return data;
}

Vector theta_vector(const IndicatorData &data, const TrajectoryAccumulators &acc, double mu,
                    double window)
{
  const int N = data.N;
  if (acc.abar_plus.size() != N || acc.abar_minus.size() != N || acc.cbar.rows() != N ||
      acc.cbar.cols() != N || acc.a_start.size() != N || acc.a_end.size() != N)
  {
    throw ConfigError("trajectory accumulators do not match the indicator space");
  }
  if (!(window > 0.0))
  {
    throw ConfigError("averaging window must be positive");
  }
  Vector theta(data.M());
  Eigen::Index i = 0;
  for (int n = 0; n < N; ++n)
  {
    theta(i++) = (acc.a_end(n) - acc.a_start(n)) / window;
  }
  for (int q = 0; q < data.Q; ++q)
  {
    const double th = affine_coefficient(data.kind, q, mu);
    for (int n = 0; n < N; ++n)
    {
      theta(i++) = th * acc.abar_plus(n);
    }
  }
  for (int n = 0; n < N; ++n)
  {
    theta(i++) = acc.abar_plus(n);
  }
  for (int m = 0; m < N; ++m)
  {
    for (int n = 0; n < N; ++n)
    {
      theta(i++) = acc.cbar(m, n);
    }
  }
  for (int n = 0; n < N; ++n)
  {
    theta(i++) = acc.abar_minus(n);
  }
  for (int q = 0; q < data.Q; ++q)
  {
    theta(i++) = affine_coefficient(data.kind, q, mu);
  }
  theta(i++) = 1.0;
  if (!theta.allFinite())
  {
    throw NumericalError("indicator coefficient vector is not finite");
  }
  return theta;
}

double indicator_from_theta(const IndicatorData &data, const Vector &theta)
{
  if (theta.size() != data.M())
  {
    throw ConfigError("coefficient vector does not match the Riesz Gramian");
  }
  const double q = theta.dot(data.sigma * theta);
  if (q >= 0.0)
  {
    return std::sqrt(q);
  }
  if (q >= -SIGMA_CLAMP_TOL * data.lambda_max * theta.squaredNorm())
  {
    return 0.0;
  }
  std::ostringstream msg;
  msg << "indicator quadratic form is negative beyond roundoff (" << q << ")";
  throw NumericalError(msg.str());
}

double evaluate_indicator(const IndicatorData &data, const RomTrajectory &traj, double mu)
{
  if (traj.failed)
  {
    throw NumericalError("cannot evaluate the indicator on a failed trajectory");
  }
  if (traj.N() != data.N)
  {
    throw ConfigError("trajectory does not match the indicator space");
  }
  if (!(traj.grid.J0 < traj.grid.J))
  {
    throw ConfigError("indicator needs J0 < J");
  }
  const double window = (traj.grid.J - traj.grid.J0) * traj.grid.dt;
  return indicator_from_theta(data, theta_vector(data, traj.acc, mu, window));
}

double corrected_indicator(double delta, double eta_anchor)
{
  if (!(eta_anchor > 0.0) || !std::isfinite(eta_anchor))
  {
    throw ConfigError("anchor effectivity must be positive and finite");
  }
  return delta / eta_anchor;
}

}  // namespace romforge

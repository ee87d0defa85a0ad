// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "romforge/io.hpp"

namespace romforge
{

std::vector<double> tke_series(const Matrix &states, const Vector &mean, const Matrix &mass)
{
  if (mean.size() != states.rows() || mass.rows() != states.rows() ||
      mass.cols() != states.rows())
  {
    throw ConfigError("tke_series: dimension mismatch");
  }
  std::vector<double> tke(states.cols());
  for (Eigen::Index j = 0; j < states.cols(); ++j)
  {
    const Vector d = states.col(j) - mean;
    tke[j] = 0.5 * d.dot(mass * d);
  }
  return tke;
}

std::vector<double> tke_series_reduced(const Matrix &coeffs, const Vector &mean_coeffs,
                                       const Matrix &mode_mass)
{
  if (mean_coeffs.size() != coeffs.rows() || mode_mass.rows() != coeffs.rows() ||
      mode_mass.cols() != coeffs.rows())
  {
    throw ConfigError("tke_series_reduced: dimension mismatch");
  }
  std::vector<double> tke(coeffs.cols());
  for (Eigen::Index j = 0; j < coeffs.cols(); ++j)
  {
    const Vector d = coeffs.col(j) - mean_coeffs;
    tke[j] = 0.5 * d.dot(mode_mass * d);
  }
  return tke;
}

MeanFlowErrors mean_flow_errors(const FormProvider &forms, const Vector &fom_mean,
                                const Matrix &modes, const Vector &mean_coeffs)
{
  if (fom_mean.size() != forms.size() || modes.rows() != forms.size() ||
      modes.cols() != mean_coeffs.size())
  {
    throw ConfigError("mean_flow_errors: dimension mismatch");
  }
  const Vector diff = fom_mean - modes * mean_coeffs;  // the lift cancels
  const double den0 = forms.inner_mass(Field::lifted(fom_mean), Field::lifted(fom_mean));
  const double den1 = forms.inner_v(Field::lifted(fom_mean), Field::lifted(fom_mean));
  if (!(den0 > 0.0) || !(den1 > 0.0))
  {
    throw NumericalError("mean flow is zero; relative mean-flow errors are undefined");
  }
  MeanFlowErrors e;
  e.e0 = std::sqrt(forms.inner_mass(Field::of(diff), Field::of(diff)) / den0);
  e.e1 = std::sqrt(forms.inner_v(Field::of(diff), Field::of(diff)) / den1);
  return e;
}

double autocorrelation(const std::vector<double> &series, int lag)
{
  const int n = static_cast<int>(series.size());
  if (lag < 0 || n < lag + 2)
  {
    std::ostringstream msg;
    msg << "autocorrelation at lag " << lag << " needs more than " << lag + 1 << " samples";
    throw ConfigError(msg.str());
  }
  double mean = 0.0;
  for (double y : series)
  {
    mean += y;
  }
  mean /= n;
  double var = 0.0;
  for (double y : series)
  {
    var += (y - mean) * (y - mean);
  }
  var /= n;
  if (!(var > 0.0))
  {
    throw NumericalError("autocorrelation of a constant series is undefined");
  }
  double cov = 0.0;
  for (int i = 0; i + lag < n; ++i)
  {
    cov += (series[i] - mean) * (series[i + lag] - mean);
  }
  cov /= (n - lag);
  return cov / var;
}

int decorrelation_lag(const std::vector<double> &series, double level)
{
  const int n = static_cast<int>(series.size());
  for (int lag = 1; lag + 2 <= n; ++lag)
  {
    if (autocorrelation(series, lag) < level)
    {
      return lag;
    }
  }
  return -1;
}

Moments sample_moments(const std::vector<double> &series)
{
  const std::size_t n = series.size();
  if (n == 0)
  {
    throw ConfigError("moments of an empty series");
  }
  Moments m;
  for (double y : series)
  {
    m.mean += y;
  }
  m.mean /= static_cast<double>(n);
  if (n > 1)
  {
    for (double y : series)
    {
      m.variance += (y - m.mean) * (y - m.mean);
    }
    m.variance /= static_cast<double>(n - 1);
  }
  return m;
}

Vector projection_coefficients(const Matrix &modes, const Matrix &gram, const Vector &u)
{
  if (modes.rows() != u.size() || gram.rows() != u.size())
  {
    throw ConfigError("projection: dimension mismatch");
  }
  if (modes.cols() == 0)
  {
    return Vector::Zero(0);
  }
  const Matrix GZ = gram * modes;
  const Matrix small = modes.transpose() * GZ;
  Eigen::LLT<Matrix> chol(small);
  if (chol.info() != Eigen::Success)
  {
    throw NumericalError("projection: modes are linearly dependent");
  }
  return chol.solve(GZ.transpose() * u);
}

namespace
{

double ratio_or_inf(double num, double den)
{
  if (!(den > STABILITY_ZERO_TOL))
  {
    return std::numeric_limits<double>::infinity();
  }
  return num / den;
}

}  // namespace

StabilityConstants stability_constants(const FormProvider &forms, const Matrix &fom_samples,
                                       const Vector &fom_mean, const ReducedSpace &space,
                                       const Vector &rom_mean_coeffs, double rom_mean_tke_s)
{
  const Matrix &Z = space.modes;
  if (fom_samples.rows() != forms.size() || fom_mean.size() != forms.size() ||
      Z.rows() != forms.size() || rom_mean_coeffs.size() != Z.cols())
  {
    throw ConfigError("stability_constants: dimension mismatch");
  }
  const Matrix &V = forms.v_matrix();
  const Matrix &M = forms.mass_matrix();
  const double full_norm = std::sqrt(forms.inner_v(Field::lifted(fom_mean),
                                                   Field::lifted(fom_mean)));
  if (!(full_norm > 0.0))
  {
    throw NumericalError("mean flow is zero; stability constants are undefined");
  }

  const Vector best = fom_mean - Z * projection_coefficients(Z, V, fom_mean);
  const Vector actual = fom_mean - Z * rom_mean_coeffs;
  const double best_err = std::sqrt(std::max(best.dot(V * best), 0.0));
  const double actual_err = std::sqrt(std::max(actual.dot(V * actual), 0.0));

  const std::vector<double> tke = tke_series(fom_samples, fom_mean, M);
  std::vector<double> tke_opt(fom_samples.cols());
  for (Eigen::Index k = 0; k < fom_samples.cols(); ++k)
  {
    const Vector p = Z * projection_coefficients(Z, M, fom_samples.col(k) - fom_mean);
    tke_opt[k] = 0.5 * p.dot(M * p);
  }
  const double tke_s = sample_moments(tke).mean;
  const double tke_opt_s = sample_moments(tke_opt).mean;
  if (!(tke_s > 0.0))
  {
    throw NumericalError("mean TKE is zero; stability constants are undefined");
  }

  StabilityConstants out;
  out.e1_opt = best_err / full_norm;
  out.e2_opt = std::abs(tke_s - tke_opt_s) / tke_s;
  out.m = ratio_or_inf(actual_err / full_norm, out.e1_opt);
  out.sigma = ratio_or_inf(std::abs(tke_s - rom_mean_tke_s) / tke_s, out.e2_opt);
  return out;
}

std::string flow_stats_json(const FlowStats &stats)
{
  nlohmann::json j;
  j["tke_mean_s"] = stats.tke_mean_s;
  j["tke_var_s"] = stats.tke_var_s;
  j["coeff_mean_s"] = stats.coeff_mean_s;
  j["coeff_var_s"] = stats.coeff_var_s;
  j["E0"] = stats.e0;
  j["E1"] = stats.e1;
  j["mean_g_norm_l2"] = stats.mean_g.norm();
  return j.dump(2) + "\n";
}

std::string tke_csv(const std::vector<int> &steps, double dt, const std::vector<double> &tke)
{
  if (steps.size() != tke.size())
  {
    throw ConfigError("tke_csv: step and value counts differ");
  }
  std::ostringstream out;
  out << "j,t,tke\n";
  for (std::size_t i = 0; i < tke.size(); ++i)
  {
    out << steps[i] << ',' << format_double(steps[i] * dt) << ',' << format_double(tke[i])
        << '\n';
  }
  return out.str();
}

}  // namespace romforge

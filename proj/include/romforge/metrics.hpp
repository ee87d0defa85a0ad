// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_METRICS_HPP
#define ROMFORGE_METRICS_HPP

#include <string>
#include <vector>

#include "romforge/fom.hpp"
#include "romforge/pod.hpp"
#include "romforge/types.hpp"

namespace romforge
{

// TKE^j = 1/2 (u^j - mean)^T M (u^j - mean) for every column.
std::vector<double> tke_series(const Matrix &states, const Vector &mean, const Matrix &mass);

// Same on the reduced side: 1/2 (a^j - abar)^T (Z^T M Z) (a^j - abar).
std::vector<double> tke_series_reduced(const Matrix &coeffs, const Vector &mean_coeffs,
                                       const Matrix &mode_mass);

struct MeanFlowErrors
{
  double e0 = 0.0;  // relative L2 error
  double e1 = 0.0;  // relative V error
};

// The ROM mean is sum_n abar_n z_n + R_g; the FOM mean is fom_mean + R_g. Throws
// NumericalError when the FOM mean flow vanishes.
MeanFlowErrors mean_flow_errors(const FormProvider &forms, const Vector &fom_mean,
                                const Matrix &modes, const Vector &mean_coeffs);

// rho(k) = [1/(n-k) sum_{i<n-k} (y_i - ybar)(y_{i+k} - ybar)] / [1/n sum (y_i - ybar)^2] with
// n the series length. The series is y^{J0}..y^J.
double autocorrelation(const std::vector<double> &series, int lag);

// Smallest lag >= 1 with autocorrelation below `level`, or -1 if there is none.
int decorrelation_lag(const std::vector<double> &series, double level);

struct Moments
{
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};

Moments sample_moments(const std::vector<double> &series);

struct StabilityConstants
{
  double m = 0.0;
  double sigma = 0.0;
  double e1_opt = 0.0;
  double e2_opt = 0.0;
};

// Relative best-fit errors at or below this level count as vanishing.
constexpr double STABILITY_ZERO_TOL = 1e-13;

// m = ||<u> - <u_rom>||_V / (||<u>||_V e1_opt) and sigma = |<TKE>_s - <TKE_rom>_s| /
// (<TKE>_s e2_opt). A vanishing best-fit error yields +infinity.
StabilityConstants stability_constants(const FormProvider &forms, const Matrix &fom_samples,
                                       const Vector &fom_mean, const ReducedSpace &space,
                                       const Vector &rom_mean_coeffs, double rom_mean_tke_s);

// Coefficients of the orthogonal projection onto span(modes) in the inner product `gram`.
Vector projection_coefficients(const Matrix &modes, const Matrix &gram, const Vector &u);

struct FlowStats
{
  Vector mean_g;
  double tke_mean_s = 0.0;
  double tke_var_s = 0.0;
  std::vector<double> coeff_mean_s;
  std::vector<double> coeff_var_s;
  double e0 = 0.0;
  double e1 = 0.0;
};

std::string flow_stats_json(const FlowStats &stats);
std::string tke_csv(const std::vector<int> &steps, double dt, const std::vector<double> &tke);

}  // namespace romforge

#endif  // ROMFORGE_METRICS_HPP

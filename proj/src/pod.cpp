// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/pod.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "romforge/io.hpp"
#include "romforge/kernels.hpp"
#include "romforge/metrics.hpp"

namespace romforge
{

namespace
{

constexpr double CV_RHO_LEVEL = 0.8;
constexpr int CV_SERIES = 3;
constexpr double DEFLATION_TOL = 1e-20;  // relative squared norm left after deflation

struct Spectrum
{
  Vector values;   // nonincreasing, clamped at zero
  Matrix vectors;  // matching columns
};

Spectrum sorted_spectrum(const Matrix &U)
{
  Eigen::SelfAdjointEigenSolver<Matrix> eig(U);
  if (eig.info() != Eigen::Success)
  {
    throw NumericalError("eigen-decomposition of the snapshot Gramian failed");
  }
  const Eigen::Index K = U.rows();
  Spectrum s{eig.eigenvalues().reverse(), eig.eigenvectors().rowwise().reverse()};
  const double top = K > 0 ? s.values(0) : 0.0;
  for (Eigen::Index k = 0; k < K; ++k)
  {
    if (s.values(k) < 0.0)
    {
      if (s.values(k) < -POD_CLAMP_TOL * std::max(top, 0.0))
      {
        throw NumericalError("snapshot Gramian is not positive semidefinite");
      }
      s.values(k) = 0.0;
    }
  }
  return s;
}

int numerical_rank(const Vector &values)
{
  if (values.size() == 0 || !(values(0) > 0.0))
  {
    return 0;
  }
  int r = 0;
  while (r < values.size() && values(r) / values(0) >= POD_RANK_TOL)
  {
    ++r;
  }
  return r;
}

// One modified Gram-Schmidt pass in G over columns [first, cols), keeping columns before
// `first` as they are (assumed orthonormal). Columns with a residual norm below the drop
// tolerance are removed.
Matrix mgs(const Matrix &Z, const Matrix &G, Eigen::Index first)
{
  std::vector<Vector> kept;
  std::vector<Vector> kept_g;
  for (Eigen::Index j = 0; j < first; ++j)
  {
    kept.push_back(Z.col(j));
    kept_g.push_back(G * Z.col(j));
  }
  for (Eigen::Index j = first; j < Z.cols(); ++j)
  {
    Vector v = Z.col(j);
    for (std::size_t i = 0; i < kept.size(); ++i)
    {
      v -= kept_g[i].dot(v) * kept[i];
    }
    const double norm = std::sqrt(std::max(v.dot(G * v), 0.0));
    if (norm < POD_DROP_TOL)
    {
      continue;
    }
    v /= norm;
    kept_g.push_back(G * v);
    kept.push_back(std::move(v));
  }
  Matrix out(Z.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i)
  {
    out.col(static_cast<Eigen::Index>(i)) = kept[i];
  }
  return out;
}

void check_inner(const Matrix &states, const InnerProduct &inner)
{
  if (inner.gram.rows() != states.rows() || inner.gram.cols() != states.rows())
  {
    throw ConfigError("inner-product matrix does not match the snapshot length");
  }
}

}  // namespace

void normalize_signs(Matrix &modes)
{
  for (Eigen::Index n = 0; n < modes.cols(); ++n)
  {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < modes.rows(); ++i)
    {
      if (std::abs(modes(i, n)) > best)
      {
        best = std::abs(modes(i, n));
        arg = i;
      }
    }
    if (modes.rows() > 0 && modes(arg, n) < 0.0)
    {
      modes.col(n) *= -1.0;
    }
  }
}

ReducedSpace ReducedSpace::from_basis(const Matrix &basis, const InnerProduct &inner,
                                      double anchor)
{
  check_inner(basis, inner);
  Matrix unit = basis;
  for (Eigen::Index j = 0; j < unit.cols(); ++j)
  {
    const double norm = std::sqrt(inner.norm_sq(unit.col(j)));
    if (norm > 0.0)
    {
      unit.col(j) /= norm;
    }
  }
  ReducedSpace space;
  space.modes = mgs(unit, inner.gram, 0);
  space.inner = inner.tag;
  space.anchor = anchor;
  return space;
}

ReducedSpace pod_build(const Matrix &states, int N, const InnerProduct &inner, double anchor)
{
  check_inner(states, inner);
  const int K = static_cast<int>(states.cols());
  if (N < 1 || N > K)
  {
    std::ostringstream msg;
    msg << "POD size N = " << N << " must lie in [1, " << K << "]";
    throw ConfigError(msg.str());
  }
  const Spectrum s = sorted_spectrum(kernels::gram(states, inner.gram));
  const int rank = numerical_rank(s.values);
  if (rank < N)
  {
    std::ostringstream msg;
    msg << "requested N = " << N << " exceeds the numerical rank " << rank
        << " of the snapshot set";
    throw NumericalError(msg.str());
  }
  Matrix Z = states * s.vectors.leftCols(N);
  for (int n = 0; n < N; ++n)
  {
    Z.col(n) /= std::sqrt(s.values(n));
  }
  Z = mgs(Z, inner.gram, 0);
  if (Z.cols() < N)
  {
    std::ostringstream msg;
    msg << "only " << Z.cols() << " of " << N << " modes survived re-orthonormalization";
    throw NumericalError(msg.str());
  }
  normalize_signs(Z);

  ReducedSpace space;
  space.modes = std::move(Z);
  space.eigenvalues.assign(s.values.data(), s.values.data() + s.values.size());
  space.inner = inner.tag;
  space.anchor = anchor;
  return space;
}

ReducedSpace pod_build(const SnapshotSet &snapshots, int N, const InnerProduct &inner)
{
  snapshots.validate();
  return pod_build(snapshots.states, N, inner, snapshots.mu);
}

double energy_ratio(const ReducedSpace &space, int N)
{
  const int K = static_cast<int>(space.eigenvalues.size());
  if (N < 2 || N > K)
  {
    std::ostringstream msg;
    msg << "energy ratio needs 2 <= N <= " << K << ", got " << N;
    throw ConfigError(msg.str());
  }
  double num = 0.0, den = 0.0;
  for (int n = 1; n < K; ++n)
  {
    den += space.eigenvalues[n];
    if (n < N)
    {
      num += space.eigenvalues[n];
    }
  }
  if (den <= 0.0)
  {
    return 1.0;
  }
  return std::clamp(num / den, 0.0, 1.0);
}

Vector project_coefficients(const ReducedSpace &space, const InnerProduct &inner,
                            const Vector &u)
{
  return projection_coefficients(space.modes, inner.gram, u);
}

double projection_error_sq(const ReducedSpace &space, const InnerProduct &inner,
                           const Matrix &states)
{
  check_inner(states, inner);
  double total = 0.0;
  for (Eigen::Index k = 0; k < states.cols(); ++k)
  {
    const Vector r = states.col(k) - space.modes * project_coefficients(space, inner,
                                                                        states.col(k));
    total += inner.norm_sq(r);
  }
  return total;
}

ReducedSpace pod_merge_deflated(const ReducedSpace &base, const SnapshotSet &snapshots, int N2,
                                const InnerProduct &inner)
{
  snapshots.validate();
  check_inner(snapshots.states, inner);
  if (base.N() > 0 && base.dim() != snapshots.dim())
  {
    throw ConfigError("base space and snapshots have different lengths");
  }
  if (base.N() > 0 && base.inner != inner.tag)
  {
    throw ConfigError("base space is orthonormal in a different inner product");
  }
  const Matrix &Z = base.modes;
  Matrix D = snapshots.states;
  if (base.N() > 0)
  {
    // Two projection sweeps keep the deflated set orthogonal to the base at roundoff.
    for (int sweep = 0; sweep < 2; ++sweep)
    {
      D -= Z * (Z.transpose() * (inner.gram * D));
    }
  }
  double energy = 0.0, deflated = 0.0;
  for (Eigen::Index k = 0; k < D.cols(); ++k)
  {
    energy += inner.norm_sq(snapshots.states.col(k));
    deflated += inner.norm_sq(D.col(k));
  }
  if (!(deflated > DEFLATION_TOL * energy))
  {
    throw NumericalError("snapshots are already contained in the base space");
  }
  ReducedSpace added = pod_build(D, N2, inner, base.N() > 0 ? base.anchor : snapshots.mu);
  if (base.N() == 0)
  {
    return added;
  }
  Matrix merged(Z.rows(), Z.cols() + added.N());
  merged << Z, added.modes;
  merged = mgs(merged, inner.gram, Z.cols());
  if (merged.cols() < Z.cols() + N2)
  {
    throw NumericalError("merged modes lost rank after re-orthonormalization");
  }
  Matrix tail = merged.rightCols(N2);
  normalize_signs(tail);
  merged.rightCols(N2) = tail;

  ReducedSpace out;
  out.modes = std::move(merged);
  out.eigenvalues = added.eigenvalues;
  out.inner = inner.tag;
  out.anchor = base.anchor;
  return out;
}

CvReport hblock_cv(const Matrix &states, int h, int N, const InnerProduct &inner,
                   const Matrix *held_out)
{
  check_inner(states, inner);
  const int K = static_cast<int>(states.cols());
  if (h < 0 || N < 1)
  {
    throw ConfigError("h-block CV needs h >= 0 and N >= 1");
  }
  if (K - 2 * h - 1 < N)
  {
    std::ostringstream msg;
    msg << "h-block CV with K = " << K << ", h = " << h << " supports at most N = "
        << std::max(K - 2 * h - 1, 0);
    throw ConfigError(msg.str());
  }
  const Matrix U = kernels::gram(states, inner.gram);
  std::vector<double> fold_error(K, 0.0);

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < K; ++k)
  {
    std::vector<int> idx;
    for (int j = 0; j < K; ++j)
    {
      if (std::abs(j - k) > h)
      {
        idx.push_back(j);
      }
    }
    const Eigen::Index m = static_cast<Eigen::Index>(idx.size());
    Matrix sub(m, m);
    Vector cross(m);
    for (Eigen::Index a = 0; a < m; ++a)
    {
      cross(a) = U(idx[a], k);
      for (Eigen::Index b = 0; b < m; ++b)
      {
        sub(a, b) = U(idx[a], idx[b]);
      }
    }
    const Spectrum s = sorted_spectrum(sub);
    const int usable = std::min(N, numerical_rank(s.values));
    // (z_n, s_k) = v_n^T U(idx, k) / sqrt(lambda_n) for the fold's POD modes.
    double captured = 0.0;
    for (int n = 0; n < usable; ++n)
    {
      const double c = s.vectors.col(n).dot(cross);
      captured += c * c / s.values(n);
    }
    fold_error[k] = std::max(U(k, k) - captured, 0.0);
  }

  CvReport report;
  report.h = h;
  report.N = N;
  double sum = 0.0;
  for (int k = 0; k < K; ++k)
  {
    sum += fold_error[k];
  }
  report.estimate = sum / K;

  const Spectrum full = sorted_spectrum(U);
  double tail = 0.0;
  for (int n = N; n < K; ++n)
  {
    tail += full.values(n);
  }
  report.in_sample = tail / K;

  if (held_out)
  {
    check_inner(*held_out, inner);
    const ReducedSpace space = pod_build(states, N, inner, 0.0);
    report.held_out = projection_error_sq(space, inner, *held_out) /
                      static_cast<double>(std::max<Eigen::Index>(held_out->cols(), 1));
  }
  return report;
}

CvReport hblock_cv(const SnapshotSet &snapshots, int h, int N, const InnerProduct &inner,
                   const Matrix *held_out)
{
  snapshots.validate();
  return hblock_cv(snapshots.states, h, N, inner, held_out);
}

int default_cv_block(const Matrix &states, const InnerProduct &inner)
{
  check_inner(states, inner);
  const int K = static_cast<int>(states.cols());
  const Spectrum s = sorted_spectrum(kernels::gram(states, inner.gram));
  const int series = std::min(CV_SERIES, numerical_rank(s.values));
  int h = 1;
  for (int n = 0; n < series; ++n)
  {
    // Coefficient series of mode n: (z_n, s_k) = sqrt(lambda_n) v_n(k).
    std::vector<double> y(K);
    for (int k = 0; k < K; ++k)
    {
      y[k] = std::sqrt(s.values(n)) * s.vectors(k, n);
    }
    int lag = -1;
    try
    {
      lag = decorrelation_lag(y, CV_RHO_LEVEL);
    }
    catch (const NumericalError &)
    {
      lag = -1;
    }
    h = std::max(h, lag < 0 ? K / 4 : lag);
  }
  return std::clamp(h, 0, std::max((K - 2) / 2, 0));
}

void save_space(const ReducedSpace &space, const std::string &dir)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["N"] = space.N();
  meta["n_h"] = space.dim();
  meta["inner_product"] = to_string(space.inner);
  meta["mu"] = space.anchor;
  meta["eigenvalues"] = space.eigenvalues;
  write_text((fs::path(dir) / "space.json").string(), meta.dump(2) + "\n");
  write_f64((fs::path(dir) / "modes.f64").string(), space.modes);
}

ReducedSpace load_space(const std::string &dir)
{
  namespace fs = std::filesystem;
  ReducedSpace space;
  try
  {
    const auto meta = nlohmann::json::parse(read_text((fs::path(dir) / "space.json").string()));
    const int N = meta.at("N").get<int>();
    const int n_h = meta.at("n_h").get<int>();
    space.inner = inner_product_from_string(meta.at("inner_product").get<std::string>());
    space.anchor = meta.at("mu").get<double>();
    space.eigenvalues = meta.at("eigenvalues").get<std::vector<double>>();
    space.modes = read_f64((fs::path(dir) / "modes.f64").string(), n_h, N);
  }
  catch (const nlohmann::json::exception &e)
  {
    throw ConfigError("malformed space.json in '" + dir + "': " + e.what());
  }
  return space;
}

}  // namespace romforge

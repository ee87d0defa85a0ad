// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_POD_HPP
#define ROMFORGE_POD_HPP

#include <optional>
#include <string>
#include <vector>

#include "romforge/fom.hpp"
#include "romforge/types.hpp"

namespace romforge
{

// N modes orthonormal in the tagged inner product, plus the snapshot-Gramian spectrum.
struct ReducedSpace
{
  Matrix modes;                     // n_h x N
  std::vector<double> eigenvalues;  // nonincreasing, all K kept
  InnerProductTag inner = InnerProductTag::H1;
  double anchor = 0.0;

  int N() const { return static_cast<int>(modes.cols()); }
  int dim() const { return static_cast<int>(modes.rows()); }

  // Wraps given columns after one MGS pass in `inner`; no spectrum is attached.
  static ReducedSpace from_basis(const Matrix &basis, const InnerProduct &inner,
                                 double anchor = 0.0);
};

constexpr double POD_RANK_TOL = 1e-14;
constexpr double POD_DROP_TOL = 1e-12;
constexpr double POD_CLAMP_TOL = 1e-12;

// Method of snapshots on the K x K Gramian of the columns of `states`.
ReducedSpace pod_build(const Matrix &states, int N, const InnerProduct &inner, double anchor);
ReducedSpace pod_build(const SnapshotSet &snapshots, int N, const InnerProduct &inner);

// Fraction of fluctuation energy captured by modes 2..N.
double energy_ratio(const ReducedSpace &space, int N);

// Appends N2 POD modes of the snapshots deflated against `base`.
ReducedSpace pod_merge_deflated(const ReducedSpace &base, const SnapshotSet &snapshots, int N2,
                                const InnerProduct &inner);

// Coefficients (z_n, u) for every mode.
Vector project_coefficients(const ReducedSpace &space, const InnerProduct &inner,
                            const Vector &u);

// Sum over columns of ||s - Pi s||^2 with the orthogonal projection onto the space.
double projection_error_sq(const ReducedSpace &space, const InnerProduct &inner,
                           const Matrix &states);

// Applies the sign convention: the largest-magnitude entry of each column is positive.
void normalize_signs(Matrix &modes);

struct CvReport
{
  double estimate = 0.0;   // h-block CV estimate
  double in_sample = 0.0;  // mean projection error on the full-data space
  std::optional<double> held_out;
  int h = 0;
  int N = 0;
};

// Errors are averaged over snapshots: (1/K) sum ||s - Pi s||_V^2. Folds run in parallel and
// are reduced in index order.
CvReport hblock_cv(const Matrix &states, int h, int N, const InnerProduct &inner,
                   const Matrix *held_out = nullptr);
CvReport hblock_cv(const SnapshotSet &snapshots, int h, int N, const InnerProduct &inner,
                   const Matrix *held_out = nullptr);

// Smallest lag at which the autocorrelation of any leading POD coefficient series drops
// below 0.8, maximized over up to three leading modes.
int default_cv_block(const Matrix &states, const InnerProduct &inner);

// space.json + modes.f64.
void save_space(const ReducedSpace &space, const std::string &dir);
ReducedSpace load_space(const std::string &dir);

}  // namespace romforge

#endif  // ROMFORGE_POD_HPP

// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_KERNELS_HPP
#define ROMFORGE_KERNELS_HPP

#include <vector>

#include <Eigen/Cholesky>

#include "romforge/fom.hpp"
#include "romforge/types.hpp"

namespace romforge
{

// Caps the OpenMP worker count at ROMFORGE_THREADS when that variable is set. Returns the
// number of threads in effect.
int apply_thread_cap();

namespace kernels
{

// Every kernel exists twice: a serial reference and an OpenMP version. Both evaluate each
// output entry with the same operation sequence, so their results are bit-identical.

namespace serial
{

// S^T G S.
Matrix gram(const Matrix &S, const Matrix &G);

// slices[i](m, n) = c(z_i, z_n, z_m) for the columns z of Z.
std::vector<Matrix> convection_slices(const FormProvider &forms, const Matrix &Z);

// Columns X with L L^T X = R.
Matrix riesz_solve(const Eigen::LLT<Matrix> &chol, const Matrix &R);

}  // namespace serial

namespace parallel
{

Matrix gram(const Matrix &S, const Matrix &G);
std::vector<Matrix> convection_slices(const FormProvider &forms, const Matrix &Z);
Matrix riesz_solve(const Eigen::LLT<Matrix> &chol, const Matrix &R);

}  // namespace parallel

using parallel::convection_slices;
using parallel::gram;
using parallel::riesz_solve;

}  // namespace kernels

}  // namespace romforge

#endif  // ROMFORGE_KERNELS_HPP

// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/kernels.hpp"

#include <cstdlib>
#include <string>

#include <omp.h>

namespace romforge
{

int apply_thread_cap()
{
  if (const char *env = std::getenv("ROMFORGE_THREADS"))
  {
    const int cap = std::atoi(env);
    if (cap > 0)
    {
      omp_set_num_threads(cap);
    }
  }
  return omp_get_max_threads();
}

namespace kernels
{

namespace
{

void check_gram_args(const Matrix &S, const Matrix &G)
{
  if (G.rows() != G.cols() || G.cols() != S.rows())
  {
    throw ConfigError("gram: inner-product matrix does not match the vector length");
  }
}

// Shared per-entry bodies; the serial and parallel drivers differ only in the loop pragma.
inline void gram_column(const Matrix &S, const Matrix &G, Matrix &GS, Eigen::Index k)
{
  GS.col(k).noalias() = G * S.col(k);
}

inline void gram_row(const Matrix &S, const Matrix &GS, Matrix &U, Eigen::Index k)
{
  for (Eigen::Index l = k; l < S.cols(); ++l)
  {
    U(k, l) = S.col(k).dot(GS.col(l));
  }
}

void symmetrize_upper(Matrix &U)
{
  for (Eigen::Index k = 0; k < U.rows(); ++k)
  {
    for (Eigen::Index l = 0; l < k; ++l)
    {
      U(k, l) = U(l, k);
    }
  }
}

inline Matrix slice(const FormProvider &forms, const Matrix &Z, Eigen::Index i)
{
  const Vector zi = Z.col(i);
  const Matrix conv = forms.convection_matrix(Field::of(zi));
  return Z.transpose() * (conv * Z);
}

}  // namespace

namespace serial
{

Matrix gram(const Matrix &S, const Matrix &G)
{
  check_gram_args(S, G);
  const Eigen::Index K = S.cols();
  Matrix GS(S.rows(), K), U(K, K);
  for (Eigen::Index k = 0; k < K; ++k)
  {
    gram_column(S, G, GS, k);
  }
  for (Eigen::Index k = 0; k < K; ++k)
  {
    gram_row(S, GS, U, k);
  }
  symmetrize_upper(U);
  return U;
}

std::vector<Matrix> convection_slices(const FormProvider &forms, const Matrix &Z)
{
  std::vector<Matrix> out(Z.cols());
  for (Eigen::Index i = 0; i < Z.cols(); ++i)
  {
    out[i] = slice(forms, Z, i);
  }
  return out;
}

Matrix riesz_solve(const Eigen::LLT<Matrix> &chol, const Matrix &R)
{
  Matrix X(R.rows(), R.cols());
  for (Eigen::Index m = 0; m < R.cols(); ++m)
  {
    X.col(m) = chol.solve(R.col(m));
  }
  return X;
}

}  // namespace serial

namespace parallel
{

Matrix gram(const Matrix &S, const Matrix &G)
{
  check_gram_args(S, G);
  const Eigen::Index K = S.cols();
  Matrix GS(S.rows(), K), U(K, K);
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < K; ++k)
  {
    gram_column(S, G, GS, k);
  }
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index k = 0; k < K; ++k)
  {
    gram_row(S, GS, U, k);
  }
  symmetrize_upper(U);
  return U;
}

std::vector<Matrix> convection_slices(const FormProvider &forms, const Matrix &Z)
{
  std::vector<Matrix> out(Z.cols());
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index i = 0; i < Z.cols(); ++i)
  {
    out[i] = slice(forms, Z, i);
  }
  return out;
}

Matrix riesz_solve(const Eigen::LLT<Matrix> &chol, const Matrix &R)
{
  Matrix X(R.rows(), R.cols());
#pragma omp parallel for schedule(static)
  for (Eigen::Index m = 0; m < R.cols(); ++m)
  {
    X.col(m) = chol.solve(R.col(m));
  }
  return X;
}

}  // namespace parallel

}  // namespace kernels

}  // namespace romforge

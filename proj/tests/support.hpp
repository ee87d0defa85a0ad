// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_TESTS_SUPPORT_HPP
#define ROMFORGE_TESTS_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "romforge/fom.hpp"
#include "romforge/types.hpp"

namespace romforge::testing
{

// Burgers transient from rest towards the steady profile; rich enough for a few modes.
inline FomSpec burgers_spec(int n_h = 16, double T0 = 0.0)
{
  FomSpec s;
  s.kind = FomKind::BurgersDirichlet;
  s.n_h = n_h;
  s.length = 1.0;
  s.g0 = 0.0;
  s.g1 = 1.0;
  s.mu_lb = 1.0;
  s.mu_ub = 200.0;
  s.dt = 1e-3;
  s.T = 0.2;
  s.T0 = T0;
  s.dt_s = 0.01;
  s.K = 16;
  return s;
}

// Chaotic Kuramoto-Sivashinsky on a short window.
inline FomSpec ks_spec(int n_h = 32, double T = 60.0)
{
  FomSpec s;
  s.kind = FomKind::KsPeriodic;
  s.n_h = n_h;
  s.length = 40.0;
  s.mu_lb = 0.7;
  s.mu_ub = 1.3;
  s.dt = 0.05;
  s.T = T;
  s.T0 = 20.0;
  s.dt_s = 0.5;
  s.K = 40;
  return s;
}

inline Matrix random_matrix(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols)
{
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
  {
    for (Eigen::Index i = 0; i < rows; ++i)
    {
      m(i, j) = d(rng);
    }
  }
  return m;
}

inline Vector random_vector(std::mt19937_64 &rng, Eigen::Index n)
{
  return random_matrix(rng, n, 1).col(0);
}

// Random symmetric positive definite matrix with condition number of order `spread`.
inline Matrix random_spd(std::mt19937_64 &rng, Eigen::Index n, double spread = 10.0)
{
  const Matrix q = random_matrix(rng, n, n).householderQr().householderQ();
  std::uniform_real_distribution<double> d(1.0, spread);
  Vector ev(n);
  for (Eigen::Index i = 0; i < n; ++i)
  {
    ev(i) = d(rng);
  }
  const Matrix a = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

inline double rel_diff(double a, double b)
{
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  explicit TempDir(const std::string &tag)
  {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("romforge_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  std::string str() const { return path_.string(); }
  std::string sub(const std::string &name) const { return (path_ / name).string(); }

private:
  std::filesystem::path path_;
};

}  // namespace romforge::testing

#endif  // ROMFORGE_TESTS_SUPPORT_HPP

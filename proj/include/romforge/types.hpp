// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_TYPES_HPP
#define ROMFORGE_TYPES_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace romforge
{

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised for malformed inputs: bad configs, size mismatches, violated preconditions.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a numerical procedure cannot produce a valid result (divergence, singular
// systems, rank deficiency).
class NumericalError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// Which inner product a reduced space is orthonormal in.
enum class InnerProductTag
{
  H1,  // the energy (V) inner product
  L2   // the mass inner product
};

std::string to_string(InnerProductTag tag);
InnerProductTag inner_product_from_string(const std::string &s);

// Symmetric positive definite inner-product matrix with its tag.
struct InnerProduct
{
  InnerProductTag tag = InnerProductTag::H1;
  Matrix gram;

  double operator()(const Vector &u, const Vector &v) const { return u.dot(gram * v); }
  double norm_sq(const Vector &u) const { return u.dot(gram * u); }
};

}  // namespace romforge

#endif  // ROMFORGE_TYPES_HPP

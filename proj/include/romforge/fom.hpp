// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_FOM_HPP
#define ROMFORGE_FOM_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "romforge/types.hpp"

namespace romforge
{

enum class FomKind
{
  BurgersDirichlet,  // u_t + u u_x = (1/Re) u_xx, Dirichlet data g at both ends, mu = Re
  KsPeriodic         // u_t + u u_x + u_xx + nu u_xxxx = 0, periodic, mu = nu
};

std::string to_string(FomKind kind);
FomKind fom_kind_from_string(const std::string &s);

// theta_q(mu) of the affine linear terms: 1/Re for Burgers; 1 and nu for KS.
double affine_coefficient(FomKind kind, int q, double mu);
int affine_term_count(FomKind kind);

// Uniform time grid t^j = j dt, j = 0..J. Statistics start at J0; snapshots are taken at
// j = J0 + k * stride, k = 1..K.
struct TimeGrid
{
  double dt = 0.0;
  int J = 0;
  int J0 = 0;
  int stride = 1;
  int K = 0;

  double T() const { return dt * J; }
  double T0() const { return dt * J0; }
  int sample_step(int k) const { return J0 + k * stride; }  // k is 1-based
};

struct FomSpec
{
  FomKind kind = FomKind::BurgersDirichlet;
  int n_h = 32;
  double length = 1.0;
  double g0 = 0.0;  // Dirichlet data (Burgers only)
  double g1 = 1.0;
  double mu_lb = 50.0;
  double mu_ub = 200.0;
  double dt = 1e-3;
  double T = 1.0;
  double T0 = 0.5;
  double dt_s = 0.01;
  int K = 20;

  // Throws ConfigError if any invariant is violated.
  void validate() const;
  TimeGrid grid() const;
  bool contains(double mu) const { return mu >= mu_lb && mu <= mu_ub; }
};

// Argument of a form: interior + lift * R_g, where R_g carries the boundary data. A null
// interior pointer stands for the zero vector.
struct Field
{
  const Vector *interior = nullptr;
  double lift = 0.0;

  static Field of(const Vector &v) { return {&v, 0.0}; }
  static Field lifted(const Vector &v) { return {&v, 1.0}; }
  static Field lift_only() { return {nullptr, 1.0}; }
};

// Discrete forms of a full-order model with the skeleton
//   (d_t u, v)_M + sum_q theta_q(mu) a_q(u + R_g, v) + c(u + R_g, u + R_g, v) = 0.
// Test functions are the interior basis vectors e_k; the *_action and convection methods
// return the form evaluated against every e_k.
class FormProvider
{
public:
  virtual ~FormProvider() = default;

  const FomSpec &spec() const { return spec_; }
  int size() const { return spec_.n_h; }
  int num_affine_terms() const { return static_cast<int>(linear_.size()); }
  virtual double theta(int q, double mu) const = 0;

  const Matrix &mass_matrix() const { return mass_; }
  const Matrix &v_matrix() const { return v_; }
  const Matrix &linear_matrix(int q) const { return linear_.at(q); }
  const Vector &lift() const { return lift_; }

  // r_k = c(w, u, e_k).
  virtual Vector convection(Field w, Field u) const = 0;
  // (k, l) entry is c(w, e_l, e_k).
  virtual Matrix convection_matrix(Field w) const = 0;
  // r_k = a_q(u, e_k).
  virtual Vector linear_action(int q, Field u) const = 0;
  // V inner product of lifted fields, boundary data included.
  virtual double inner_v(Field u, Field v) const = 0;
  double inner_mass(Field u, Field v) const;

  double trilinear(Field w, Field u, const Vector &v) const { return v.dot(convection(w, u)); }

  InnerProduct inner_product(InnerProductTag tag) const;

  // Lifted initial state of the time integration.
  virtual Vector initial_state() const = 0;

protected:
  explicit FormProvider(FomSpec spec) : spec_(std::move(spec)) {}
  Vector materialize(Field f) const;

  FomSpec spec_;
  Matrix mass_;
  Matrix v_;
  std::vector<Matrix> linear_;
  Vector lift_;
};

std::unique_ptr<FormProvider> make_provider(const FomSpec &spec);

// Harmonic extension of the boundary data (Burgers) or zero (KS), at the interior nodes.
Vector compute_lift(const FomSpec &spec);

struct SnapshotSet
{
  FomSpec spec;
  double mu = 0.0;
  Matrix states;  // n_h x K, lifted fields
  std::vector<double> times;

  int size() const { return static_cast<int>(states.cols()); }
  int dim() const { return static_cast<int>(states.rows()); }
  void validate() const;
};

struct FomResult
{
  SnapshotSet snapshots;
  Vector mean;  // lifted grid-time mean over j = J0+1..J
  Vector final_state;
};

using StateObserver = std::function<void(int step, const Vector &state)>;

// Advances the full-order model with the first-order semi-implicit scheme; throws
// NumericalError naming the step on divergence. The observer sees every state j = 0..J.
FomResult run_fom(const FomSpec &spec, const FormProvider &forms, double mu,
                  const StateObserver &observer = {});
FomResult run_fom(const FomSpec &spec, double mu, const StateObserver &observer = {});

struct FormValues
{
  double trilinear = 0.0;  // c(w, u, v)
  double inner_v = 0.0;    // (u, v)_V
  double mass = 0.0;       // (u, v)_M
  std::vector<double> linear;  // a_q(u, v)
};

FormValues evaluate_forms(const FormProvider &forms, const Vector &w, const Vector &u,
                          const Vector &v);

}  // namespace romforge

#endif  // ROMFORGE_FOM_HPP

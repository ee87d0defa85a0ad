// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/fom.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/LU>

namespace romforge
{

std::string to_string(InnerProductTag tag)
{
  return tag == InnerProductTag::H1 ? "H1" : "L2";
}

InnerProductTag inner_product_from_string(const std::string &s)
{
  if (s == "H1")
  {
    return InnerProductTag::H1;
  }
  if (s == "L2")
  {
    return InnerProductTag::L2;
  }
  throw ConfigError("unknown inner product '" + s + "' (expected H1 or L2)");
}

std::string to_string(FomKind kind)
{
  return kind == FomKind::BurgersDirichlet ? "burgers-dirichlet" : "ks-periodic";
}

FomKind fom_kind_from_string(const std::string &s)
{
  if (s == "burgers-dirichlet")
  {
    return FomKind::BurgersDirichlet;
  }
  if (s == "ks-periodic")
  {
    return FomKind::KsPeriodic;
  }
  throw ConfigError("unknown FOM kind '" + s + "'");
}

double affine_coefficient(FomKind kind, int q, double mu)
{
  if (q < 0 || q >= affine_term_count(kind))
  {
    throw ConfigError("affine term index out of range");
  }
  if (kind == FomKind::BurgersDirichlet)
  {
    return 1.0 / mu;
  }
  return q == 0 ? 1.0 : mu;
}

int affine_term_count(FomKind kind)
{
  return kind == FomKind::BurgersDirichlet ? 1 : 2;
}

namespace
{

constexpr double GRID_TOL = 1e-9;

int checked_ratio(double num, double den, const char *what)
{
  const double r = num / den;
  const double n = std::round(r);
  if (std::abs(r - n) > GRID_TOL * std::max(1.0, std::abs(r)))
  {
    throw ConfigError(std::string(what) + " must be an integer multiple of dt");
  }
  return static_cast<int>(n);
}

}  // namespace

void FomSpec::validate() const
{
  if (n_h < 8)
  {
    throw ConfigError("n_h must be at least 8");
  }
  if (!(length > 0.0))
  {
    throw ConfigError("domain length must be positive");
  }
  if (!(dt > 0.0))
  {
    throw ConfigError("dt must be positive");
  }
  if (!(T0 < T))
  {
    throw ConfigError("T0 must be smaller than T");
  }
  if (T0 < 0.0)
  {
    throw ConfigError("T0 must be nonnegative");
  }
  if (!(mu_lb <= mu_ub))
  {
    throw ConfigError("parameter range must satisfy mu_lb <= mu_ub");
  }
  if (!(mu_lb > 0.0))
  {
    throw ConfigError("parameter range must be positive");
  }
  if (K < 2)
  {
    throw ConfigError("K must be at least 2");
  }
  const int stride = checked_ratio(dt_s, dt, "dt_s");
  if (stride < 1)
  {
    throw ConfigError("dt_s must be positive");
  }
  const int J0 = checked_ratio(T0, dt, "T0");
  const int J = checked_ratio(T, dt, "T");
  if (J0 + K * stride > J)
  {
    throw ConfigError("T0 + K * dt_s exceeds T");
  }
}

TimeGrid FomSpec::grid() const
{
  validate();
  TimeGrid g;
  g.dt = dt;
  g.J = static_cast<int>(std::round(T / dt));
  g.J0 = static_cast<int>(std::round(T0 / dt));
  g.stride = static_cast<int>(std::round(dt_s / dt));
  g.K = K;
  return g;
}

Vector compute_lift(const FomSpec &spec)
{
  Vector lift = Vector::Zero(spec.n_h);
  if (spec.kind == FomKind::BurgersDirichlet)
  {
    // -R'' = 0 with R(0) = g0, R(L) = g1: linear interpolation, exact for the 3-point stencil.
    const double h = spec.length / (spec.n_h + 1);
    for (int i = 0; i < spec.n_h; ++i)
    {
      const double x = (i + 1) * h;
      lift(i) = spec.g0 + (spec.g1 - spec.g0) * x / spec.length;
    }
  }
  return lift;
}

double FormProvider::inner_mass(Field u, Field v) const
{
  return materialize(u).dot(mass_ * materialize(v));
}

Vector FormProvider::materialize(Field f) const
{
  Vector out = f.interior ? *f.interior : Vector::Zero(size());
  if (out.size() != size())
  {
    throw ConfigError("field length does not match n_h");
  }
  if (f.lift != 0.0)
  {
    out += f.lift * lift_;
  }
  return out;
}

InnerProduct FormProvider::inner_product(InnerProductTag tag) const
{
  return InnerProduct{tag, tag == InnerProductTag::H1 ? v_ : mass_};
}

namespace
{

// Second-order finite differences on n interior nodes of (0, L); nodal (lumped) mass.
class BurgersForms final : public FormProvider
{
public:
  explicit BurgersForms(const FomSpec &spec) : FormProvider(spec)
  {
    const int n = spec.n_h;
    h_ = spec.length / (n + 1);
    mass_ = h_ * Matrix::Identity(n, n);
    v_ = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
    {
      v_(i, i) = 2.0 / h_;
      if (i > 0)
      {
        v_(i, i - 1) = -1.0 / h_;
      }
      if (i + 1 < n)
      {
        v_(i, i + 1) = -1.0 / h_;
      }
    }
    linear_ = {v_};
    lift_ = compute_lift(spec);
  }

  double theta(int q, double mu) const override
  {
    return affine_coefficient(FomKind::BurgersDirichlet, q, mu);
  }

  Vector convection(Field w, Field u) const override
  {
    const Vector we = extended(w), ue = extended(u);
    const int n = size();
    Vector r(n);
    for (int k = 1; k <= n; ++k)
    {
      r(k - 1) = 0.5 * we(k) * (ue(k + 1) - ue(k - 1));
    }
    return r;
  }

  Matrix convection_matrix(Field w) const override
  {
    const Vector we = extended(w);
    const int n = size();
    Matrix c = Matrix::Zero(n, n);
    for (int k = 0; k < n; ++k)
    {
      if (k + 1 < n)
      {
        c(k, k + 1) = 0.5 * we(k + 1);
      }
      if (k > 0)
      {
        c(k, k - 1) = -0.5 * we(k + 1);
      }
    }
    return c;
  }

  Vector linear_action(int q, Field u) const override
  {
    theta(q, 1.0);
    const Vector ue = extended(u);
    const int n = size();
    Vector r(n);
    for (int k = 1; k <= n; ++k)
    {
      r(k - 1) = (2.0 * ue(k) - ue(k - 1) - ue(k + 1)) / h_;
    }
    return r;
  }

  double inner_v(Field u, Field v) const override
  {
    const Vector ue = extended(u), ve = extended(v);
    double s = 0.0;
    for (int e = 0; e + 1 < ue.size(); ++e)
    {
      s += (ue(e + 1) - ue(e)) * (ve(e + 1) - ve(e));
    }
    return s / h_;
  }

  Vector initial_state() const override { return -lift_; }

private:
  // Nodal values including both boundary nodes.
  Vector extended(Field f) const
  {
    const int n = size();
    Vector e(n + 2);
    e(0) = f.lift * spec_.g0;
    e(n + 1) = f.lift * spec_.g1;
    e.segment(1, n) = materialize(f);
    return e;
  }

  double h_ = 0.0;
};

// Fourier collocation on n equispaced nodes of [0, L). Quadratic forms are built from
// their Fourier symbols so the Nyquist mode is handled consistently.
class KsForms final : public FormProvider
{
public:
  explicit KsForms(const FomSpec &spec) : FormProvider(spec)
  {
    const int n = spec.n_h;
    h_ = spec.length / n;
    const double k1 = 2.0 * std::numbers::pi / spec.length;
    mass_ = h_ * Matrix::Identity(n, n);
    v_ = symbol_matrix([k1](double kappa, bool mean) { return mean ? k1 * k1 : kappa * kappa; });
    linear_ = {symbol_matrix([](double kappa, bool) { return -kappa * kappa; }),
               symbol_matrix([](double kappa, bool) { return kappa * kappa * kappa * kappa; })};
    lift_ = Vector::Zero(n);

    // First-derivative collocation matrix with the Nyquist wavenumber removed.
    deriv_ = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
    {
      for (int l = 0; l < n; ++l)
      {
        double s = 0.0;
        for (int m = 0; m < n; ++m)
        {
          const int k = wavenumber(m);
          if (2 * k == n)
          {
            continue;
          }
          const double kappa = k * k1;
          s += kappa * std::sin(kappa * (i - l) * h_);
        }
        deriv_(i, l) = -s / n;
      }
    }
  }

  double theta(int q, double mu) const override
  {
    return affine_coefficient(FomKind::KsPeriodic, q, mu);
  }

  // Flux form c(w, u, v) = -1/2 (w u, v_x), which conserves the spatial mean.
  Vector convection(Field w, Field u) const override
  {
    const Vector wu = materialize(w).cwiseProduct(materialize(u));
    return -0.5 * h_ * (deriv_.transpose() * wu);
  }

  Matrix convection_matrix(Field w) const override
  {
    const Vector wv = materialize(w);
    const int n = size();
    Matrix c(n, n);
    for (int k = 0; k < n; ++k)
    {
      for (int l = 0; l < n; ++l)
      {
        c(k, l) = -0.5 * h_ * wv(l) * deriv_(l, k);
      }
    }
    return c;
  }

  Vector linear_action(int q, Field u) const override
  {
    theta(q, 1.0);
    return linear_[q] * materialize(u);
  }

  double inner_v(Field u, Field v) const override
  {
    return materialize(u).dot(v_ * materialize(v));
  }

  Vector initial_state() const override
  {
    const int n = size();
    const double k1 = 2.0 * std::numbers::pi / spec_.length;
    Vector u(n);
    for (int i = 0; i < n; ++i)
    {
      const double x = i * h_;
      u(i) = std::cos(k1 * x) * (1.0 + std::sin(k1 * x));
    }
    u.array() -= u.mean();
    return u;
  }

private:
  int wavenumber(int m) const
  {
    const int n = size();
    return m <= n / 2 ? m : m - n;
  }

  template <typename Symbol>
  Matrix symbol_matrix(Symbol symbol) const
  {
    const int n = size();
    const double k1 = 2.0 * std::numbers::pi / spec_.length;
    std::vector<double> values(n), kappas(n);
    for (int m = 0; m < n; ++m)
    {
      kappas[m] = wavenumber(m) * k1;
      values[m] = symbol(kappas[m], m == 0);
    }
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
    {
      for (int l = 0; l < n; ++l)
      {
        double s = 0.0;
        for (int m = 0; m < n; ++m)
        {
          s += values[m] * std::cos(kappas[m] * (i - l) * h_);
        }
        a(i, l) = h_ * s / n;
      }
    }
    return 0.5 * (a + a.transpose());
  }

  double h_ = 0.0;
  Matrix deriv_;
};

}  // namespace

std::unique_ptr<FormProvider> make_provider(const FomSpec &spec)
{
  spec.validate();
  if (spec.kind == FomKind::BurgersDirichlet)
  {
    return std::make_unique<BurgersForms>(spec);
  }
  return std::make_unique<KsForms>(spec);
}

void SnapshotSet::validate() const
{
  if (states.cols() < 2)
  {
    throw ConfigError("a snapshot set needs at least two snapshots");
  }
  if (static_cast<Eigen::Index>(times.size()) != states.cols())
  {
    throw ConfigError("snapshot times do not match the snapshot count");
  }
  if (!states.allFinite())
  {
    throw ConfigError("snapshot set contains non-finite values");
  }
  for (std::size_t k = 1; k < times.size(); ++k)
  {
    if (!(times[k] > times[k - 1]))
    {
      throw ConfigError("snapshot times must be strictly increasing");
    }
  }
}

FomResult run_fom(const FomSpec &spec, const FormProvider &forms, double mu,
                  const StateObserver &observer)
{
  const TimeGrid grid = spec.grid();
  if (!spec.contains(mu))
  {
    std::ostringstream msg;
    msg << "parameter " << mu << " outside [" << spec.mu_lb << ", " << spec.mu_ub << "]";
    throw ConfigError(msg.str());
  }
  if (forms.size() != spec.n_h)
  {
    throw ConfigError("form provider does not match the FOM spec");
  }
  const int n = spec.n_h;
  const bool periodic = spec.kind == FomKind::KsPeriodic;

  Matrix base = forms.mass_matrix() / grid.dt;
  Vector lift_load = Vector::Zero(n);
  for (int q = 0; q < forms.num_affine_terms(); ++q)
  {
    const double th = forms.theta(q, mu);
    base += th * forms.linear_matrix(q);
    lift_load += th * forms.linear_action(q, Field::lift_only());
  }

  FomResult result;
  result.snapshots.spec = spec;
  result.snapshots.mu = mu;
  result.snapshots.states.resize(n, grid.K);
  result.snapshots.times.resize(grid.K);
  Vector sum = Vector::Zero(n);

  Vector u = forms.initial_state();
  if (observer)
  {
    observer(0, u);
  }
  int next_sample = 1;
  for (int j = 0; j < grid.J; ++j)
  {
    const Field current = Field::lifted(u);
    const Matrix system = base + forms.convection_matrix(current);
    const Vector rhs = forms.mass_matrix() * u / grid.dt - lift_load -
                       forms.convection(current, Field::lift_only());
    Vector next = Eigen::PartialPivLU<Matrix>(system).solve(rhs);
    if (periodic)
    {
      next.array() -= next.mean();
    }
    if (!next.allFinite())
    {
      std::ostringstream msg;
      msg << "full-order model diverged at step " << (j + 1) << " (mu = " << mu << ")";
      throw NumericalError(msg.str());
    }
    u = std::move(next);
    const int step = j + 1;
    if (step > grid.J0)
    {
      sum += u;
    }
    if (next_sample <= grid.K && step == grid.sample_step(next_sample))
    {
      result.snapshots.states.col(next_sample - 1) = u;
      result.snapshots.times[next_sample - 1] = step * grid.dt;
      ++next_sample;
    }
    if (observer)
    {
      observer(step, u);
    }
  }
  result.mean = sum * (grid.dt / (grid.T() - grid.T0()));
  result.final_state = u;
  return result;
}

FomResult run_fom(const FomSpec &spec, double mu, const StateObserver &observer)
{
  const auto forms = make_provider(spec);
  return run_fom(spec, *forms, mu, observer);
}

FormValues evaluate_forms(const FormProvider &forms, const Vector &w, const Vector &u,
                          const Vector &v)
{
  const int n = forms.size();
  if (w.size() != n || u.size() != n || v.size() != n)
  {
    throw ConfigError("evaluate_forms: vector length does not match n_h");
  }
  FormValues out;
  out.trilinear = forms.trilinear(Field::of(w), Field::of(u), v);
  out.inner_v = forms.inner_v(Field::of(u), Field::of(v));
  out.mass = forms.inner_mass(Field::of(u), Field::of(v));
  for (int q = 0; q < forms.num_affine_terms(); ++q)
  {
    out.linear.push_back(v.dot(forms.linear_action(q, Field::of(u))));
  }
  return out;
}

}  // namespace romforge

// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/greedy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "romforge/io.hpp"
#include "romforge/metrics.hpp"

namespace romforge
{

namespace
{

constexpr double INF = std::numeric_limits<double>::infinity();

}  // namespace

double GreedyState::min_indicator(int i) const
{
  double m = INF;
  for (const auto &row : table)
  {
    m = std::min(m, row.at(i));
  }
  return m;
}

RomTrajectory run_local_rom(const AnchorModel &model, const FomSpec &spec, double mu)
{
  return constrained_integrate(model.ops, model.a0, mu, spec.grid(), model.bounds).trajectory;
}

double model_indicator(const AnchorModel &model, const FormProvider &, const FomSpec &spec,
                       double mu)
{
  const RomTrajectory traj = run_local_rom(model, spec, mu);
  if (traj.failed)
  {
    return INF;
  }
  return evaluate_indicator(model.indicator, traj, mu);
}

AnchorModel build_anchor_model(const FomSpec &spec, const FormProvider &forms, double mu,
                               const GreedyOptions &options)
{
  AnchorModel model;
  model.mu = mu;
  FomResult fom;
  try
  {
    fom = run_fom(spec, forms, mu);
  }
  catch (const NumericalError &e)
  {
    std::ostringstream msg;
    msg << "greedy: FOM failed at anchor mu = " << mu << ": " << e.what();
    throw NumericalError(msg.str());
  }
  model.snapshots = std::move(fom.snapshots);
  model.fom_mean = std::move(fom.mean);
  const InnerProduct inner = forms.inner_product(options.inner);
  model.space = pod_build(model.snapshots, options.N, inner);
  model.ops = assemble_operators(model.space, forms, spec.dt);
  model.bounds = estimate_bounds(model.snapshots, model.space, inner, options.eps);
  model.indicator = build_indicator(model.space, forms);
  model.a0 = initial_coefficients(model.space, forms);

  const RomTrajectory traj = run_local_rom(model, spec, mu);
  if (traj.failed)
  {
    model.delta_anchor = INF;
    model.true_error_anchor = INF;
    model.eta = INF;
    return model;
  }
  model.delta_anchor = evaluate_indicator(model.indicator, traj, mu);
  const Vector diff = model.fom_mean - model.space.modes * traj.mean_coeffs();
  model.true_error_anchor = std::sqrt(forms.inner_v(Field::of(diff), Field::of(diff)));
  model.eta = model.delta_anchor / model.true_error_anchor;
  return model;
}

int select_next_anchor(const std::vector<std::vector<double>> &table,
                       const std::vector<int> &anchors)
{
  if (table.empty())
  {
    return -1;
  }
  const int n = static_cast<int>(table.front().size());
  int best = -1;
  double best_value = -INF;
  for (int i = 0; i < n; ++i)
  {
    if (std::find(anchors.begin(), anchors.end(), i) != anchors.end())
    {
      continue;
    }
    double m = INF;
    for (const auto &row : table)
    {
      m = std::min(m, row.at(i));
    }
    if (best < 0 || m > best_value)
    {
      best = i;
      best_value = m;
    }
  }
  return best;
}

GreedyState greedy_offline(const FomSpec &spec, std::vector<double> train,
                           const GreedyOptions &options, const GreedyHooks &hooks)
{
  spec.validate();
  std::sort(train.begin(), train.end());
  if (train.empty())
  {
    throw ConfigError("greedy: empty training set");
  }
  if (std::adjacent_find(train.begin(), train.end()) != train.end())
  {
    throw ConfigError("greedy: training set has repeated parameters");
  }
  for (double mu : train)
  {
    if (!spec.contains(mu))
    {
      std::ostringstream msg;
      msg << "greedy: training parameter " << mu << " outside the parameter range";
      throw ConfigError(msg.str());
    }
  }
  const int n_train = static_cast<int>(train.size());
  if (options.L < 1 || options.L > n_train)
  {
    throw ConfigError("greedy: need 1 <= L <= number of training parameters");
  }
  if (options.N < 1 || options.N > spec.K)
  {
    throw ConfigError("greedy: need 1 <= N <= K");
  }

  const auto forms = make_provider(spec);
  const auto build = hooks.build_model ? hooks.build_model : build_anchor_model;
  const auto evaluate = hooks.evaluate ? hooks.evaluate : model_indicator;

  GreedyState state;
  state.spec = spec;
  state.options = options;
  state.train = train;

  // Reduction modulo n keeps the draw identical across standard libraries.
  std::mt19937_64 rng(options.seed);
  int next = static_cast<int>(rng() % static_cast<std::uint64_t>(n_train));

  for (int iter = 1; iter <= options.L && next >= 0; ++iter)
  {
    state.anchor_index.push_back(next);
    state.models.push_back(build(spec, *forms, train[next], options));
    const AnchorModel &model = state.models.back();

    std::vector<double> row(n_train, INF);
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n_train; ++i)
    {
      row[i] = evaluate(model, *forms, spec, train[i]);
    }
    state.table.push_back(std::move(row));

    for (int i = 0; i < n_train; ++i)
    {
      state.log.push_back({iter, model.mu, train[i], state.table.back()[i],
                           state.min_indicator(i)});
    }
    next = iter < options.L ? select_next_anchor(state.table, state.anchor_index) : -1;
  }
  return state;
}

std::vector<int> nearest_anchors(const std::vector<double> &anchors, double mu, int n_cand)
{
  std::vector<int> order(anchors.size());
  for (std::size_t l = 0; l < anchors.size(); ++l)
  {
    order[l] = static_cast<int>(l);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b)
                   {
                     const double da = std::abs(anchors[a] - mu), db = std::abs(anchors[b] - mu);
                     if (da != db)
                     {
                       return da < db;
                     }
                     return anchors[a] < anchors[b];
                   });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(n_cand)));
  return order;
}

OnlineResult greedy_online(const GreedyState &state, double mu, int n_cand)
{
  const int L = state.iterations();
  if (L < 1)
  {
    throw ConfigError("greedy online stage needs at least one model");
  }
  if (n_cand < 1 || n_cand > L)
  {
    throw ConfigError("n_cand must lie in [1, number of models]");
  }
  std::vector<double> anchors;
  for (const auto &m : state.models)
  {
    anchors.push_back(m.mu);
  }
  OnlineResult out;
  out.candidates = nearest_anchors(anchors, mu, n_cand);
  out.delta = INF;
  for (int l : out.candidates)
  {
    RomTrajectory traj = run_local_rom(state.models[l], state.spec, mu);
    const double d = traj.failed ? INF : evaluate_indicator(state.models[l].indicator, traj, mu);
    out.deltas.push_back(d);
    if (out.model < 0 || d < out.delta)
    {
      out.model = l;
      out.delta = d;
      out.trajectory = std::move(traj);
    }
  }
  return out;
}

std::string greedy_log_csv(const std::vector<GreedyLogRow> &rows)
{
  std::ostringstream out;
  out << "iter,anchor,mu,delta_u,min_delta_u\n";
  for (const auto &r : rows)
  {
    out << r.iter << ',' << format_double(r.anchor) << ',' << format_double(r.mu) << ','
        << format_double(r.delta_u) << ',' << format_double(r.min_delta_u) << '\n';
  }
  return out.str();
}

void save_greedy(const GreedyState &state, const std::string &dir)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["train"] = state.train;
  j["N"] = state.options.N;
  j["L"] = state.options.L;
  j["eps"] = state.options.eps;
  j["seed"] = state.options.seed;
  j["n_cand"] = state.options.n_cand;
  j["inner_product"] = to_string(state.options.inner);
  j["table"] = state.table;
  nlohmann::json anchors = nlohmann::json::array();
  for (std::size_t l = 0; l < state.models.size(); ++l)
  {
    const AnchorModel &m = state.models[l];
    const std::string name = "anchor_" + std::to_string(l + 1);
    nlohmann::json a;
    a["mu"] = m.mu;
    a["train_index"] = state.anchor_index[l];
    a["delta_u"] = m.delta_anchor;
    a["true_error"] = m.true_error_anchor;
    a["eta"] = m.eta;
    a["dir"] = name;
    anchors.push_back(a);

    const fs::path sub = fs::path(dir) / name;
    save_snapshots((sub / "snapshots").string(), m.snapshots, state.options.inner);
    save_space(m.space, (sub / "space").string());
    write_text((sub / "bounds.json").string(), bounds_json(m.bounds));
    write_f64((sub / "sigma.f64").string(), m.indicator.sigma);
  }
  j["anchors"] = anchors;
  write_text((fs::path(dir) / "greedy.json").string(), j.dump(2) + "\n");
}

}  // namespace romforge

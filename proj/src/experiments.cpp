// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "romforge/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "romforge/constrained.hpp"
#include "romforge/greedy.hpp"
#include "romforge/indicator.hpp"
#include "romforge/io.hpp"
#include "romforge/metrics.hpp"
#include "romforge/pod.hpp"
#include "romforge/rom.hpp"

namespace romforge
{

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace
{

constexpr double NaN = std::numeric_limits<double>::quiet_NaN();
constexpr double INF = std::numeric_limits<double>::infinity();
constexpr double DEFAULT_EPS_REPRODUCE = 0.01;
constexpr double DEFAULT_EPS_PARAMETRIC = 0.05;
constexpr double SPEARMAN_TARGET = 0.4;

}  // namespace

std::string to_string(ExperimentKind kind)
{
  switch (kind)
  {
    case ExperimentKind::Reproduce:
      return "reproduce";
    case ExperimentKind::Parametric:
      return "parametric";
    case ExperimentKind::CvStudy:
      return "cv-study";
    case ExperimentKind::EpsSweep:
      return "eps-sweep";
    case ExperimentKind::PVsH:
      return "p-vs-h";
  }
  return "reproduce";
}

ExperimentKind experiment_kind_from_string(const std::string &s)
{
  for (auto k : {ExperimentKind::Reproduce, ExperimentKind::Parametric, ExperimentKind::CvStudy,
                 ExperimentKind::EpsSweep, ExperimentKind::PVsH})
  {
    if (to_string(k) == s)
    {
      return k;
    }
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

namespace
{

template <typename T>
T get_or(const json &j, const char *key, T fallback)
{
  if (!j.contains(key))
  {
    return fallback;
  }
  try
  {
    return j.at(key).get<T>();
  }
  catch (const json::exception &)
  {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json &j, const std::vector<std::string> &known, const std::string &where)
{
  for (auto it = j.begin(); it != j.end(); ++it)
  {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
    {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

FomSpec parse_fom(const json &j)
{
  if (!j.is_object())
  {
    throw ConfigError("config key 'fom' must be an object");
  }
  reject_unknown(j, {"kind", "n_h", "length", "g0", "g1", "mu_lb", "mu_ub", "dt", "T", "T0",
                     "dt_s", "K"},
                 "'fom'");
  FomSpec s;
  if (!j.contains("kind"))
  {
    throw ConfigError("config 'fom' block lacks 'kind'");
  }
  s.kind = fom_kind_from_string(get_or<std::string>(j, "kind", ""));
  s.n_h = get_or(j, "n_h", s.n_h);
  s.length = get_or(j, "length", s.length);
  s.g0 = get_or(j, "g0", s.g0);
  s.g1 = get_or(j, "g1", s.g1);
  s.mu_lb = get_or(j, "mu_lb", s.mu_lb);
  s.mu_ub = get_or(j, "mu_ub", s.mu_ub);
  s.dt = get_or(j, "dt", s.dt);
  s.T = get_or(j, "T", s.T);
  s.T0 = get_or(j, "T0", s.T0);
  s.dt_s = get_or(j, "dt_s", s.dt_s);
  s.K = get_or(j, "K", s.K);
  s.validate();
  return s;
}

void require(bool cond, const std::string &msg)
{
  if (!cond)
  {
    throw ConfigError(msg);
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string &json_text)
{
  json j;
  try
  {
    j = json::parse(json_text);
  }
  catch (const json::exception &e)
  {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  reject_unknown(j, {"kind", "fom", "mu", "N", "eps", "P_train", "P_test", "anchors", "L",
                     "n_cand", "seed", "h", "inner_product", "write_trajectories", "output"},
                 "config");
  require(j.contains("kind"), "config lacks 'kind'");
  require(j.contains("fom"), "config lacks 'fom'");

  ExperimentConfig cfg;
  cfg.kind = experiment_kind_from_string(get_or<std::string>(j, "kind", ""));
  cfg.fom = parse_fom(j.at("fom"));
  cfg.inner = inner_product_from_string(get_or<std::string>(j, "inner_product", "H1"));
  cfg.mu = get_or(j, "mu", 0.5 * (cfg.fom.mu_lb + cfg.fom.mu_ub));
  cfg.N = get_or<std::vector<int>>(j, "N", {});
  cfg.eps = get_or<std::vector<double>>(j, "eps", {});
  cfg.train = get_or<std::vector<double>>(j, "P_train", {});
  cfg.test = get_or<std::vector<double>>(j, "P_test", {});
  cfg.anchors = get_or<std::vector<double>>(j, "anchors", {});
  cfg.L = get_or(j, "L", cfg.L);
  cfg.n_cand = get_or(j, "n_cand", cfg.n_cand);
  cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("h"))
  {
    cfg.h = get_or(j, "h", 0);
  }
  cfg.write_trajectories = get_or(j, "write_trajectories", false);
  cfg.output = get_or<std::string>(j, "output", "");

  require(!cfg.N.empty(), "config key 'N' must list at least one reduced dimension");
  for (int n : cfg.N)
  {
    require(n >= 1 && n <= cfg.fom.K, "every N must lie in [1, K]");
  }
  if (cfg.eps.empty())
  {
    cfg.eps = {cfg.kind == ExperimentKind::Parametric ? DEFAULT_EPS_PARAMETRIC
                                                      : DEFAULT_EPS_REPRODUCE};
  }
  for (double e : cfg.eps)
  {
    require(e >= 0.0, "every eps must be nonnegative");
  }
  auto check_range = [&](const std::vector<double> &v, const char *name)
  {
    for (double mu : v)
    {
      require(cfg.fom.contains(mu), std::string("parameter in '") + name +
                                        "' lies outside [mu_lb, mu_ub]");
    }
  };
  switch (cfg.kind)
  {
    case ExperimentKind::Reproduce:
    case ExperimentKind::CvStudy:
    case ExperimentKind::EpsSweep:
      require(cfg.fom.contains(cfg.mu), "config key 'mu' lies outside [mu_lb, mu_ub]");
      break;
    case ExperimentKind::Parametric:
      require(!cfg.train.empty(), "parametric runs need 'P_train'");
      require(!cfg.test.empty(), "parametric runs need 'P_test'");
      require(cfg.N.size() == 1, "parametric runs take a single N");
      require(cfg.L >= 1 && cfg.L <= static_cast<int>(cfg.train.size()),
              "'L' must lie in [1, size of P_train]");
      require(cfg.n_cand >= 1 && cfg.n_cand <= cfg.L, "'n_cand' must lie in [1, L]");
      check_range(cfg.train, "P_train");
      check_range(cfg.test, "P_test");
      break;
    case ExperimentKind::PVsH:
      require(cfg.anchors.size() == 2, "p-vs-h runs need exactly two 'anchors'");
      check_range(cfg.anchors, "anchors");
      check_range(cfg.test, "P_test");
      for (int n : cfg.N)
      {
        require(n >= 2, "p-vs-h needs N >= 2 so both anchors contribute modes");
      }
      break;
  }
  if (cfg.h)
  {
    require(*cfg.h >= 0, "'h' must be nonnegative");
  }
  return cfg;
}

double spearman(const std::vector<double> &x, const std::vector<double> &y)
{
  if (x.size() != y.size() || x.size() < 2)
  {
    throw ConfigError("spearman: need two series of equal length >= 2");
  }
  auto ranks = [](const std::vector<double> &v)
  {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();)
    {
      std::size_t k = i;
      while (k + 1 < idx.size() && v[idx[k + 1]] == v[idx[i]])
      {
        ++k;
      }
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(k)) + 1.0;
      for (std::size_t t = i; t <= k; ++t)
      {
        r[idx[t]] = avg;
      }
      i = k + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i)
  {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
  {
    return NaN;
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace
{

std::string fmt(double x)
{
  return format_double(x);
}

class ArtifactWriter
{
public:
  ArtifactWriter(std::string dir, RunSummary &summary) : dir_(std::move(dir)), summary_(summary)
  {
  }

  void text(const std::string &name, const std::string &content)
  {
    const fs::path p = fs::path(dir_) / name;
    fs::create_directories(p.parent_path());
    write_text(p.string(), content);
    summary_.files.push_back(name);
  }

  void json_file(const std::string &name, const json &j) { text(name, j.dump(2) + "\n"); }

  const std::string &dir() const { return dir_; }

private:
  std::string dir_;
  RunSummary &summary_;
};

double mean_of(const std::vector<double> &v)
{
  return v.empty() ? NaN : sample_moments(v).mean;
}

// Outcome of one ROM run measured against the FOM.
struct RomOutcome
{
  bool failed = true;
  std::string failure;
  MeanFlowErrors errors{NaN, NaN};
  double tke_mean_s = NaN;
  double tke_var_s = NaN;
  double abs_error_v = NaN;  // ||<u> - <u_rom>||_V
  double delta = NaN;
  RomTrajectory trajectory;
  ActivationReport activation;
};

RomOutcome measure(const FormProvider &forms, const FomResult &fom, const ReducedSpace &space,
                   const ReducedOperators &ops, RomTrajectory traj,
                   const IndicatorData *indicator, double mu)
{
  RomOutcome out;
  out.trajectory = std::move(traj);
  const RomTrajectory &t = out.trajectory;
  if (t.failed)
  {
    std::ostringstream msg;
    msg << "ROM step failed at j = " << t.failed_step;
    out.failure = msg.str();
    return out;
  }
  out.failed = false;
  out.errors = mean_flow_errors(forms, fom.mean, space.modes, t.mean_coeffs());
  const Vector diff = fom.mean - space.modes * t.mean_coeffs();
  out.abs_error_v = std::sqrt(forms.inner_v(Field::of(diff), Field::of(diff)));
  const auto tke = tke_series_reduced(t.samples(), t.mean_coeffs(), ops.mode_mass);
  const Moments m = sample_moments(tke);
  out.tke_mean_s = m.mean;
  out.tke_var_s = m.variance;
  if (indicator)
  {
    out.delta = evaluate_indicator(*indicator, t, mu);
  }
  return out;
}

std::string status_of(const RomOutcome &o)
{
  return o.failed ? "failed" : "ok";
}

json stats_json(const FlowStats &s)
{
  return json::parse(flow_stats_json(s));
}

FlowStats rom_stats(const RomOutcome &o, const ReducedSpace &space)
{
  FlowStats s;
  if (o.failed)
  {
    s.tke_mean_s = s.tke_var_s = s.e0 = s.e1 = NaN;
    return s;
  }
  s.tke_mean_s = o.tke_mean_s;
  s.tke_var_s = o.tke_var_s;
  s.e0 = o.errors.e0;
  s.e1 = o.errors.e1;
  const Matrix samples = o.trajectory.samples();
  for (Eigen::Index n = 0; n < samples.rows(); ++n)
  {
    std::vector<double> series(samples.cols());
    for (Eigen::Index k = 0; k < samples.cols(); ++k)
    {
      series[k] = samples(n, k);
    }
    const Moments m = sample_moments(series);
    s.coeff_mean_s.push_back(m.mean);
    s.coeff_var_s.push_back(m.variance);
  }
  s.mean_g = space.modes * o.trajectory.mean_coeffs();
  return s;
}

}  // namespace

RunSummary cmd_reproduce(const ExperimentConfig &cfg, const std::string &out_dir)
{
  RunSummary summary;
  ArtifactWriter out(out_dir, summary);
  const FomSpec &spec = cfg.fom;
  const auto forms = make_provider(spec);
  const InnerProduct inner = forms->inner_product(cfg.inner);
  const TimeGrid grid = spec.grid();
  const double eps = cfg.eps.front();

  const FomResult fom = run_fom(spec, *forms, cfg.mu);
  const auto fom_tke = tke_series(fom.snapshots.states, fom.mean, forms->mass_matrix());
  const Moments fom_m = sample_moments(fom_tke);
  {
    std::vector<int> steps;
    for (int k = 1; k <= grid.K; ++k)
    {
      steps.push_back(grid.sample_step(k));
    }
    out.text("tke_fom.csv", tke_csv(steps, grid.dt, fom_tke));
    FlowStats s;
    s.mean_g = fom.mean;
    s.tke_mean_s = fom_m.mean;
    s.tke_var_s = fom_m.variance;
    out.text("fom_stats.json", flow_stats_json(s));
  }
  save_snapshots(out.dir() + "/snapshots", fom.snapshots, cfg.inner, &forms->v_matrix());
  summary.files.push_back("snapshots/");

  std::ostringstream errors, stability;
  errors << "N,r_N,E0_galerkin,E1_galerkin,tke_galerkin,delta_galerkin,E0_constrained,"
            "E1_constrained,tke_constrained,delta_constrained,tke_fom,gal_rate,"
            "status_galerkin,status_constrained\n";
  stability << "N,m_galerkin,sigma_galerkin,m_constrained,sigma_constrained,e1_opt,e2_opt\n";

  // Each N is an independent work item; artifacts are written afterwards in N order.
  struct PerN
  {
    std::string errors, stability;
    std::vector<std::pair<std::string, std::string>> files;
    std::vector<std::string> warnings;
  };
  std::vector<PerN> results(cfg.N.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < cfg.N.size(); ++i)
  {
    const int N = cfg.N[i];
    PerN &res = results[i];
    const std::string tag = std::to_string(N);
    std::ostringstream errors, stability;
    try
    {
      const ReducedSpace space = pod_build(fom.snapshots, N, inner);
      const ReducedOperators ops = assemble_operators(space, *forms, spec.dt);
      const IndicatorData ind = build_indicator(space, *forms);
      const BoxBounds bounds = estimate_bounds(fom.snapshots, space, inner, eps);
      const Vector a0 = initial_coefficients(space, *forms);

      const RomOutcome gal = measure(*forms, fom, space, ops, rom_integrate(ops, a0, cfg.mu, grid),
                                     &ind, cfg.mu);
      ConstrainedRun crun = constrained_integrate(ops, a0, cfg.mu, grid, bounds);
      const ActivationReport act = crun.activation;
      const RomOutcome con = measure(*forms, fom, space, ops, std::move(crun.trajectory), &ind,
                                     cfg.mu);
      const double r_N = N >= 2 ? energy_ratio(space, N) : NaN;
      errors << N << ',' << fmt(r_N) << ',' << fmt(gal.errors.e0) << ',' << fmt(gal.errors.e1)
             << ',' << fmt(gal.tke_mean_s) << ',' << fmt(gal.delta) << ','
             << fmt(con.errors.e0) << ',' << fmt(con.errors.e1) << ',' << fmt(con.tke_mean_s)
             << ',' << fmt(con.delta) << ',' << fmt(fom_m.mean) << ',' << fmt(act.global) << ','
             << status_of(gal) << ',' << status_of(con) << '\n';

      auto constants = [&](const RomOutcome &o) -> std::pair<double, double>
      {
        if (o.failed)
        {
          return {NaN, NaN};
        }
        const StabilityConstants sc =
            stability_constants(*forms, fom.snapshots.states, fom.mean, space,
                                o.trajectory.mean_coeffs(), o.tke_mean_s);
        return {sc.m, sc.sigma};
      };
      const auto [mg, sg] = constants(gal);
      const auto [mc, sc] = constants(con);
      const StabilityConstants ref =
          stability_constants(*forms, fom.snapshots.states, fom.mean, space,
                              projection_coefficients(space.modes, forms->v_matrix(), fom.mean),
                              fom_m.mean);
      stability << N << ',' << fmt(mg) << ',' << fmt(sg) << ',' << fmt(mc) << ',' << fmt(sc)
                << ',' << fmt(ref.e1_opt) << ',' << fmt(ref.e2_opt) << '\n';

      std::ostringstream series;
      series << "j,t,tke_fom,tke_galerkin,tke_constrained\n";
      const auto tg = gal.failed ? std::vector<double>(grid.K, NaN)
                                 : tke_series_reduced(gal.trajectory.samples(),
                                                      gal.trajectory.mean_coeffs(),
                                                      ops.mode_mass);
      const auto tc = con.failed ? std::vector<double>(grid.K, NaN)
                                 : tke_series_reduced(con.trajectory.samples(),
                                                      con.trajectory.mean_coeffs(),
                                                      ops.mode_mass);
      for (int k = 1; k <= grid.K; ++k)
      {
        const int j = grid.sample_step(k);
        series << j << ',' << fmt(j * grid.dt) << ',' << fmt(fom_tke[k - 1]) << ','
               << fmt(tg[k - 1]) << ',' << fmt(tc[k - 1]) << '\n';
      }
      res.files.emplace_back("tke_series_N" + tag + ".csv", series.str());
      res.files.emplace_back("activation_N" + tag + ".csv", activation_csv(act));
      res.files.emplace_back("bounds_N" + tag + ".json", bounds_json(bounds));

      json stats;
      stats["galerkin"] = stats_json(rom_stats(gal, space));
      stats["constrained"] = stats_json(rom_stats(con, space));
      res.files.emplace_back("stats_N" + tag + ".json", stats.dump(2) + "\n");
      if (cfg.write_trajectories)
      {
        res.files.emplace_back("trajectory_galerkin_N" + tag + ".csv",
                               trajectory_csv(gal.trajectory));
        res.files.emplace_back("trajectory_constrained_N" + tag + ".csv",
                               trajectory_csv(con.trajectory));
      }
      for (const RomOutcome *o : {&gal, &con})
      {
        if (o->failed)
        {
          res.warnings.push_back("N = " + tag + ": " +
                                 (o == &gal ? "galerkin " : "constrained ") + o->failure);
        }
      }
    }
    catch (const std::exception &e)
    {
      res.files.clear();
      res.warnings.push_back("N = " + tag + ": " + e.what());
      errors.str("");
      stability.str("");
      errors << N << ",nan,nan,nan,nan,nan,nan,nan,nan,nan," << fmt(fom_m.mean)
             << ",nan,failed,failed\n";
      stability << N << ",nan,nan,nan,nan,nan,nan\n";
    }
    res.errors = errors.str();
    res.stability = stability.str();
  }
  for (const PerN &res : results)
  {
    errors << res.errors;
    stability << res.stability;
    for (const auto &[name, content] : res.files)
    {
      out.text(name, content);
    }
    summary.warnings.insert(summary.warnings.end(), res.warnings.begin(), res.warnings.end());
  }
  out.text("errors_vs_N.csv", errors.str());
  out.text("stability_constants.csv", stability.str());
  return summary;
}

RunSummary cmd_parametric(const ExperimentConfig &cfg, const std::string &out_dir)
{
  RunSummary summary;
  ArtifactWriter out(out_dir, summary);
  const FomSpec &spec = cfg.fom;
  const auto forms = make_provider(spec);

  GreedyOptions opt;
  opt.N = cfg.N.front();
  opt.L = cfg.L;
  opt.eps = cfg.eps.front();
  opt.seed = cfg.seed;
  opt.n_cand = cfg.n_cand;
  opt.inner = cfg.inner;
  const GreedyState state = greedy_offline(spec, cfg.train, opt);
  out.text("greedy_log.csv", greedy_log_csv(state.log));
  save_greedy(state, out.dir() + "/greedy");
  summary.files.push_back("greedy/");

  // Truth at every test parameter and every (model, test) pair.
  const int L = state.iterations();
  const int P = static_cast<int>(cfg.test.size());
  std::vector<FomResult> truth(P);
#pragma omp parallel for schedule(dynamic, 1)
  for (int p = 0; p < P; ++p)
  {
    truth[p] = run_fom(spec, *forms, cfg.test[p]);
  }
  std::vector<std::vector<double>> delta(L, std::vector<double>(P, INF));
  std::vector<std::vector<double>> error(L, std::vector<double>(P, INF));
#pragma omp parallel for collapse(2) schedule(dynamic, 1)
  for (int l = 0; l < L; ++l)
  {
    for (int p = 0; p < P; ++p)
    {
      const AnchorModel &m = state.models[l];
      const RomTrajectory t = run_local_rom(m, spec, cfg.test[p]);
      if (!t.failed)
      {
        delta[l][p] = evaluate_indicator(m.indicator, t, cfg.test[p]);
        const Vector diff = truth[p].mean - m.space.modes * t.mean_coeffs();
        error[l][p] = std::sqrt(forms->inner_v(Field::of(diff), Field::of(diff)));
      }
    }
  }

  std::ostringstream minlog;
  minlog << "iter,max_test_min_delta_u\n";
  for (int iter = 1; iter <= L; ++iter)
  {
    GreedyState partial = state;
    partial.models.resize(iter);
    partial.table.resize(iter);
    partial.anchor_index.resize(iter);
    const int n_cand = std::min(cfg.n_cand, iter);
    std::ostringstream ind, tru;
    ind << "mu,model,delta_u,delta_u_corr\n";
    tru << "mu,model,true_error,best_model,best_true_error\n";
    double max_min = -INF;
    for (int p = 0; p < P; ++p)
    {
      const double mu = cfg.test[p];
      const OnlineResult r = greedy_online(partial, mu, n_cand);
      const AnchorModel &chosen = partial.models[r.model];
      const double corr = std::isfinite(chosen.eta) && chosen.eta > 0.0
                              ? corrected_indicator(r.delta, chosen.eta)
                              : NaN;
      ind << fmt(mu) << ',' << (r.model + 1) << ',' << fmt(r.delta) << ',' << fmt(corr) << '\n';
      int best = 0;
      double min_delta = INF;
      for (int l = 0; l < iter; ++l)
      {
        if (error[l][p] < error[best][p])
        {
          best = l;
        }
        min_delta = std::min(min_delta, delta[l][p]);
      }
      tru << fmt(mu) << ',' << (r.model + 1) << ',' << fmt(error[r.model][p]) << ','
          << (best + 1) << ',' << fmt(error[best][p]) << '\n';
      max_min = std::max(max_min, min_delta);
    }
    minlog << iter << ',' << fmt(max_min) << '\n';
    out.text("indicator_vs_mu_iter" + std::to_string(iter) + ".csv", ind.str());
    out.text("true_error_vs_mu_iter" + std::to_string(iter) + ".csv", tru.str());
  }
  out.text("min_indicator_vs_iter.csv", minlog.str());

  // Effectivities over every (parameter, model) pair, anchors included.
  std::ostringstream eff;
  eff << "mu,model,anchor,is_anchor,delta_u,true_error,eta,eta_corr\n";
  std::vector<double> all_delta, all_error;
  for (int l = 0; l < L; ++l)
  {
    const AnchorModel &m = state.models[l];
    const double eta_corr = std::isfinite(m.eta) && m.eta > 0.0
                                ? corrected_indicator(m.delta_anchor, m.eta) /
                                      m.true_error_anchor
                                : NaN;
    eff << fmt(m.mu) << ',' << (l + 1) << ',' << fmt(m.mu) << ",1," << fmt(m.delta_anchor)
        << ',' << fmt(m.true_error_anchor) << ',' << fmt(m.eta) << ',' << fmt(eta_corr) << '\n';
  }
  for (int p = 0; p < P; ++p)
  {
    for (int l = 0; l < L; ++l)
    {
      const AnchorModel &m = state.models[l];
      const double eta = delta[l][p] / error[l][p];
      const double eta_corr = std::isfinite(m.eta) && m.eta > 0.0 ? eta / m.eta : NaN;
      eff << fmt(cfg.test[p]) << ',' << (l + 1) << ',' << fmt(m.mu) << ",0,"
          << fmt(delta[l][p]) << ',' << fmt(error[l][p]) << ',' << fmt(eta) << ','
          << fmt(eta_corr) << '\n';
      if (std::isfinite(delta[l][p]) && std::isfinite(error[l][p]))
      {
        all_delta.push_back(delta[l][p]);
        all_error.push_back(error[l][p]);
      }
    }
  }
  out.text("effectivity.csv", eff.str());

  int consistent = 0;
  for (int p = 0; p < P; ++p)
  {
    int by_delta = 0, by_error = 0;
    for (int l = 1; l < L; ++l)
    {
      by_delta = delta[l][p] < delta[by_delta][p] ? l : by_delta;
      by_error = error[l][p] < error[by_error][p] ? l : by_error;
    }
    consistent += by_delta == by_error ? 1 : 0;
  }
  const double rho = all_delta.size() >= 2 ? spearman(all_delta, all_error) : NaN;
  json sel;
  sel["fraction"] = static_cast<double>(consistent) / P;
  sel["consistent"] = consistent;
  sel["total"] = P;
  sel["spearman"] = std::isfinite(rho) ? json(rho) : json(nullptr);
  sel["spearman_pairs"] = all_delta.size();
  sel["spearman_target"] = SPEARMAN_TARGET;
  if (!(rho >= SPEARMAN_TARGET))
  {
    std::ostringstream msg;
    msg << "indicator/true-error Spearman correlation " << rho << " is below "
        << SPEARMAN_TARGET;
    summary.warnings.push_back(msg.str());
    sel["warning"] = msg.str();
  }
  out.json_file("selection_consistency.json", sel);
  return summary;
}

RunSummary cmd_cv_study(const ExperimentConfig &cfg, const std::string &out_dir)
{
  RunSummary summary;
  ArtifactWriter out(out_dir, summary);
  const FomSpec &spec = cfg.fom;
  const auto forms = make_provider(spec);
  const InnerProduct inner = forms->inner_product(cfg.inner);
  const FomResult fom = run_fom(spec, *forms, cfg.mu);

  // The first half of the samples trains; the second half is held out.
  const int K = spec.K;
  const int K_train = K / 2;
  const Matrix train = fom.snapshots.states.leftCols(K_train);
  const Matrix held = fom.snapshots.states.rightCols(K - K_train);
  const int h = cfg.h ? *cfg.h : default_cv_block(train, inner);

  std::ostringstream csv;
  csv << "N,h,E_in,E_cv,E_loo,E_out\n";
  double ref = NaN;
  for (int N : cfg.N)
  {
    try
    {
      const CvReport r = hblock_cv(train, h, N, inner, &held);
      const CvReport loo = hblock_cv(train, 0, N, inner);
      if (std::isnan(ref))
      {
        ref = N == 1 ? r.in_sample : hblock_cv(train, 0, 1, inner).in_sample;
      }
      const double s = ref > 0.0 ? 1.0 / ref : 1.0;
      csv << N << ',' << h << ',' << fmt(r.in_sample * s) << ',' << fmt(r.estimate * s) << ','
          << fmt(loo.estimate * s) << ',' << fmt(r.held_out.value_or(NaN) * s) << '\n';
    }
    catch (const std::exception &e)
    {
      summary.warnings.push_back("N = " + std::to_string(N) + ": " + e.what());
      csv << N << ',' << h << ",nan,nan,nan,nan\n";
    }
  }
  out.text("cv_vs_N.csv", csv.str());
  json meta;
  meta["h"] = h;
  meta["h_source"] = cfg.h ? "config" : "autocorrelation";
  meta["K_train"] = K_train;
  meta["K_held_out"] = K - K_train;
  meta["normalization"] = std::isfinite(ref) ? json(ref) : json(nullptr);
  out.json_file("cv_meta.json", meta);
  return summary;
}

RunSummary cmd_eps_sweep(const ExperimentConfig &cfg, const std::string &out_dir)
{
  RunSummary summary;
  ArtifactWriter out(out_dir, summary);
  const FomSpec &spec = cfg.fom;
  const auto forms = make_provider(spec);
  const InnerProduct inner = forms->inner_product(cfg.inner);
  const TimeGrid grid = spec.grid();
  const FomResult fom = run_fom(spec, *forms, cfg.mu);
  const double tke_fom =
      mean_of(tke_series(fom.snapshots.states, fom.mean, forms->mass_matrix()));

  // Spaces are built in order so that rank errors surface deterministically; the (N, eps)
  // integrations then run as independent work items.
  struct Model
  {
    ReducedSpace space;
    ReducedOperators ops;
    Vector a0;
  };
  std::vector<Model> models;
  for (int N : cfg.N)
  {
    Model m;
    m.space = pod_build(fom.snapshots, N, inner);
    m.ops = assemble_operators(m.space, *forms, spec.dt);
    m.a0 = initial_coefficients(m.space, *forms);
    models.push_back(std::move(m));
  }
  const std::size_t n_eps = cfg.eps.size();
  const std::size_t items = models.size() * n_eps;
  std::vector<std::string> rows(items);
  std::vector<std::string> warnings(items);
  std::vector<std::exception_ptr> errors(items);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < items; ++i)
  {
    try
    {
      const Model &m = models[i / n_eps];
      const int N = cfg.N[i / n_eps];
      const double eps = cfg.eps[i % n_eps];
      const BoxBounds bounds = estimate_bounds(fom.snapshots, m.space, inner, eps);
      ConstrainedRun run = constrained_integrate(m.ops, m.a0, cfg.mu, grid, bounds);
      const double rate = run.activation.global;
      const RomOutcome o = measure(*forms, fom, m.space, m.ops, std::move(run.trajectory),
                                   nullptr, cfg.mu);
      std::ostringstream row;
      row << N << ',' << fmt(eps) << ',' << fmt(o.errors.e0) << ',' << fmt(o.errors.e1) << ','
          << fmt(o.tke_mean_s) << ',' << fmt(tke_fom) << ',' << fmt(rate) << ','
          << status_of(o) << '\n';
      rows[i] = row.str();
      if (o.failed)
      {
        warnings[i] = "N = " + std::to_string(N) + ", eps = " + fmt(eps) + ": " + o.failure;
      }
    }
    catch (...)
    {
      errors[i] = std::current_exception();
    }
  }
  std::ostringstream csv;
  csv << "N,eps,E0,E1,tke,tke_fom,gal_rate,status\n";
  for (std::size_t i = 0; i < items; ++i)
  {
    if (errors[i])
    {
      std::rethrow_exception(errors[i]);
    }
    csv << rows[i];
    if (!warnings[i].empty())
    {
      summary.warnings.push_back(warnings[i]);
    }
  }
  out.text("eps_sweep.csv", csv.str());
  return summary;
}

RunSummary cmd_p_vs_h(const ExperimentConfig &cfg, const std::string &out_dir)
{
  RunSummary summary;
  ArtifactWriter out(out_dir, summary);
  const FomSpec &spec = cfg.fom;
  const auto forms = make_provider(spec);
  const InnerProduct inner = forms->inner_product(cfg.inner);
  const TimeGrid grid = spec.grid();
  const double eps = cfg.eps.front();

  std::vector<FomResult> anchor_runs;
  for (double mu : cfg.anchors)
  {
    anchor_runs.push_back(run_fom(spec, *forms, mu));
  }
  std::vector<double> test = cfg.test.empty() ? cfg.anchors : cfg.test;
  std::vector<FomResult> truth;
  for (double mu : test)
  {
    const auto it = std::find(cfg.anchors.begin(), cfg.anchors.end(), mu);
    truth.push_back(it != cfg.anchors.end() ? anchor_runs[it - cfg.anchors.begin()]
                                            : run_fom(spec, *forms, mu));
  }
  Matrix both(spec.n_h, 2 * spec.K);
  both << anchor_runs[0].snapshots.states, anchor_runs[1].snapshots.states;

  std::ostringstream csv;
  csv << "N,mu,h_model,E0_h,E1_h,E0_p,E1_p,status_h,status_p\n";
  for (int N : cfg.N)
  {
    try
    {
      // h: one N-dimensional space per anchor. p: N/2 modes at the first anchor merged with
      // the rest from the second anchor's deflated snapshots.
      std::vector<ReducedSpace> h_spaces;
      std::vector<ReducedOperators> h_ops;
      std::vector<BoxBounds> h_bounds;
      for (const auto &run : anchor_runs)
      {
        h_spaces.push_back(pod_build(run.snapshots, N, inner));
        h_ops.push_back(assemble_operators(h_spaces.back(), *forms, spec.dt));
        h_bounds.push_back(estimate_bounds(run.snapshots, h_spaces.back(), inner, eps));
      }
      const int N1 = N / 2;
      const ReducedSpace base = pod_build(anchor_runs[0].snapshots, N1, inner);
      const ReducedSpace merged = pod_merge_deflated(base, anchor_runs[1].snapshots, N - N1,
                                                     inner);
      const ReducedOperators p_ops = assemble_operators(merged, *forms, spec.dt);
      const BoxBounds p_bounds = estimate_bounds(both, merged, inner, eps);

      for (std::size_t t = 0; t < test.size(); ++t)
      {
        const double mu = test[t];
        const int l = nearest_anchors(cfg.anchors, mu, 1).front();
        const RomOutcome ho = measure(
            *forms, truth[t], h_spaces[l], h_ops[l],
            constrained_integrate(h_ops[l], initial_coefficients(h_spaces[l], *forms), mu, grid,
                                  h_bounds[l])
                .trajectory,
            nullptr, mu);
        const RomOutcome po = measure(
            *forms, truth[t], merged, p_ops,
            constrained_integrate(p_ops, initial_coefficients(merged, *forms), mu, grid,
                                  p_bounds)
                .trajectory,
            nullptr, mu);
        csv << N << ',' << fmt(mu) << ',' << (l + 1) << ',' << fmt(ho.errors.e0) << ','
            << fmt(ho.errors.e1) << ',' << fmt(po.errors.e0) << ',' << fmt(po.errors.e1) << ','
            << status_of(ho) << ',' << status_of(po) << '\n';
      }
    }
    catch (const std::exception &e)
    {
      summary.warnings.push_back("N = " + std::to_string(N) + ": " + e.what());
    }
  }
  out.text("p_vs_h.csv", csv.str());
  return summary;
}

RunSummary run_experiment(const ExperimentConfig &cfg, const std::string &out_dir, bool force)
{
  if (out_dir.empty())
  {
    throw ConfigError("no output directory given");
  }
  const fs::path dir = fs::absolute(out_dir).lexically_normal();
  if (fs::exists(dir))
  {
    if (!force)
    {
      throw ConfigError("output directory '" + out_dir +
                        "' already exists; pass --force to overwrite it");
    }
    if (dir == dir.root_path() || dir == fs::current_path())
    {
      throw ConfigError("refusing to overwrite '" + out_dir + "'");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  RunSummary summary;
  switch (cfg.kind)
  {
    case ExperimentKind::Reproduce:
      summary = cmd_reproduce(cfg, dir.string());
      break;
    case ExperimentKind::Parametric:
      summary = cmd_parametric(cfg, dir.string());
      break;
    case ExperimentKind::CvStudy:
      summary = cmd_cv_study(cfg, dir.string());
      break;
    case ExperimentKind::EpsSweep:
      summary = cmd_eps_sweep(cfg, dir.string());
      break;
    case ExperimentKind::PVsH:
      summary = cmd_p_vs_h(cfg, dir.string());
      break;
  }
  json manifest;
  manifest["kind"] = to_string(cfg.kind);
  manifest["fom_kind"] = to_string(cfg.fom.kind);
  manifest["files"] = summary.files;
  manifest["warnings"] = summary.warnings;
  write_text((dir / "run.json").string(), manifest.dump(2) + "\n");
  return summary;
}

std::string inspect_artifacts(const std::string &dir)
{
  if (!fs::is_directory(dir))
  {
    throw ConfigError("'" + dir + "' is not a directory");
  }
  std::ostringstream out;
  const fs::path root(dir);
  if (fs::exists(root / "run.json"))
  {
    const json run = json::parse(read_text((root / "run.json").string()));
    out << "experiment: " << run.value("kind", "?") << " (" << run.value("fom_kind", "?")
        << ")\n";
    for (const auto &w : run.value("warnings", json::array()))
    {
      out << "warning: " << w.get<std::string>() << "\n";
    }
  }
  if (fs::exists(root / "meta.json"))
  {
    const SnapshotArchive a = load_snapshots(dir);
    out << "snapshot archive: " << to_string(a.snapshots.spec.kind)
        << ", n_h = " << a.snapshots.dim() << ", K = " << a.snapshots.size()
        << ", mu = " << a.snapshots.mu << ", inner product " << to_string(a.inner)
        << (a.gram_v ? ", with V Gramian" : "") << "\n";
  }
  if (fs::exists(root / "space.json"))
  {
    const ReducedSpace s = load_space(dir);
    out << "reduced space: N = " << s.N() << ", n_h = " << s.dim() << ", anchor " << s.anchor
        << ", inner product " << to_string(s.inner) << "\n";
  }
  if (fs::exists(root / "greedy.json"))
  {
    const json g = json::parse(read_text((root / "greedy.json").string()));
    out << "greedy: N = " << g.value("N", 0) << ", L = " << g.value("L", 0) << ", anchors";
    for (const auto &a : g.value("anchors", json::array()))
    {
      out << ' ' << a.value("mu", NaN);
    }
    out << "\n";
  }
  std::vector<std::string> names;
  for (const auto &entry : fs::directory_iterator(root))
  {
    names.push_back(entry.path().filename().string() + (entry.is_directory() ? "/" : ""));
  }
  std::sort(names.begin(), names.end());
  out << "files:\n";
  for (const auto &n : names)
  {
    out << "  " << n << "\n";
  }
  return out.str();
}

}  // namespace romforge

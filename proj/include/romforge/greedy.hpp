// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_GREEDY_HPP
#define ROMFORGE_GREEDY_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "romforge/constrained.hpp"
#include "romforge/fom.hpp"
#include "romforge/indicator.hpp"
#include "romforge/pod.hpp"
#include "romforge/rom.hpp"

namespace romforge
{

// Local model built from the FOM run at one anchor.
struct AnchorModel
{
  double mu = 0.0;
  SnapshotSet snapshots;
  Vector fom_mean;
  ReducedSpace space;
  ReducedOperators ops;
  BoxBounds bounds;
  IndicatorData indicator;
  Vector a0;
  double delta_anchor = 0.0;       // indicator at the anchor
  double true_error_anchor = 0.0;  // ||<u - u_rom>||_V at the anchor
  double eta = 0.0;                // delta_anchor / true_error_anchor
};

struct GreedyOptions
{
  int N = 10;
  int L = 3;
  double eps = 0.05;
  std::uint64_t seed = 0;
  int n_cand = 2;
  InnerProductTag inner = InnerProductTag::H1;
};

struct GreedyLogRow
{
  int iter = 0;
  double anchor = 0.0;
  double mu = 0.0;
  double delta_u = 0.0;
  double min_delta_u = 0.0;
};

struct GreedyState
{
  FomSpec spec;
  GreedyOptions options;
  std::vector<double> train;  // sorted
  std::vector<AnchorModel> models;
  std::vector<std::vector<double>> table;  // table[l][i] = Delta_l(train[i])
  std::vector<int> anchor_index;           // into train
  std::vector<GreedyLogRow> log;

  int iterations() const { return static_cast<int>(models.size()); }
  // min over built models of the indicator at training point i.
  double min_indicator(int i) const;
};

// Test seams. The defaults run the FOM, build the local model and integrate constrained ROMs.
struct GreedyHooks
{
  std::function<AnchorModel(const FomSpec &, const FormProvider &, double mu,
                            const GreedyOptions &)>
      build_model;
  std::function<double(const AnchorModel &, const FormProvider &, const FomSpec &, double mu)>
      evaluate;
};

AnchorModel build_anchor_model(const FomSpec &spec, const FormProvider &forms, double mu,
                               const GreedyOptions &options);

// Constrained ROM of `model` at mu. Failed integrations are returned with failed = true.
RomTrajectory run_local_rom(const AnchorModel &model, const FomSpec &spec, double mu);

// Indicator of `model` at mu; +infinity if the ROM fails.
double model_indicator(const AnchorModel &model, const FormProvider &forms, const FomSpec &spec,
                       double mu);

// Training index maximizing the min-over-models indicator, skipping previous anchors; ties go
// to the lowest parameter. Returns -1 when every point is an anchor.
int select_next_anchor(const std::vector<std::vector<double>> &table,
                       const std::vector<int> &anchors);

GreedyState greedy_offline(const FomSpec &spec, std::vector<double> train,
                           const GreedyOptions &options, const GreedyHooks &hooks = {});

// The n_cand anchors closest to mu (ties go to the lower anchor), by increasing distance.
std::vector<int> nearest_anchors(const std::vector<double> &anchors, double mu, int n_cand);

struct OnlineResult
{
  int model = -1;
  std::vector<int> candidates;
  std::vector<double> deltas;  // per candidate
  double delta = 0.0;
  RomTrajectory trajectory;
};

OnlineResult greedy_online(const GreedyState &state, double mu, int n_cand);

std::string greedy_log_csv(const std::vector<GreedyLogRow> &rows);

// greedy.json plus one directory per anchor (snapshots, space, bounds, Sigma).
void save_greedy(const GreedyState &state, const std::string &dir);

}  // namespace romforge

#endif  // ROMFORGE_GREEDY_HPP

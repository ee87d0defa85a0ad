// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef ROMFORGE_EXPERIMENTS_HPP
#define ROMFORGE_EXPERIMENTS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "romforge/fom.hpp"
#include "romforge/types.hpp"

namespace romforge
{

enum class ExperimentKind
{
  Reproduce,
  Parametric,
  CvStudy,
  EpsSweep,
  PVsH
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string &s);

struct ExperimentConfig
{
  ExperimentKind kind = ExperimentKind::Reproduce;
  FomSpec fom;
  InnerProductTag inner = InnerProductTag::H1;
  double mu = 0.0;                   // reproduce, cv-study, eps-sweep
  std::vector<int> N;                // reduced dimensions
  std::vector<double> eps;           // bound margins
  std::vector<double> train;         // parametric
  std::vector<double> test;          // parametric, p-vs-h
  std::vector<double> anchors;       // p-vs-h
  int L = 3;
  int n_cand = 2;
  std::uint64_t seed = 0;
  std::optional<int> h;              // cv-study; autocorrelation-based when absent
  bool write_trajectories = false;
  std::string output;
};

// Parses and validates a JSON config; throws ConfigError naming the offending key.
ExperimentConfig parse_config(const std::string &json_text);

struct RunSummary
{
  std::vector<std::string> files;  // written artifacts, relative to the output directory
  std::vector<std::string> warnings;
};

RunSummary cmd_reproduce(const ExperimentConfig &cfg, const std::string &out_dir);
RunSummary cmd_parametric(const ExperimentConfig &cfg, const std::string &out_dir);
RunSummary cmd_cv_study(const ExperimentConfig &cfg, const std::string &out_dir);
RunSummary cmd_eps_sweep(const ExperimentConfig &cfg, const std::string &out_dir);
RunSummary cmd_p_vs_h(const ExperimentConfig &cfg, const std::string &out_dir);

// Prepares the output directory (refusing to reuse one unless `force`) and dispatches.
RunSummary run_experiment(const ExperimentConfig &cfg, const std::string &out_dir, bool force);

// Human-readable description of an artifact directory.
std::string inspect_artifacts(const std::string &dir);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double> &x, const std::vector<double> &y);

}  // namespace romforge

#endif  // ROMFORGE_EXPERIMENTS_HPP

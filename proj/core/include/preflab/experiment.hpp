#pragma once

// End-to-end sample-efficiency experiment: per seed, plant an instance,
// fit the factorized policy on plentiful proxy preferences, then sweep a
// grid of true-preference budgets comparing the adapter arm (stage 2 on the
// frozen stage-1 policy) against a from-scratch tabular baseline.

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "preflab/bounds.hpp"
#include "preflab/instance.hpp"
#include "preflab/train.hpp"

namespace preflab {

// Constants for the report's bound evaluations that the condition checker
// cannot estimate.
struct BoundConfig {
  int embedding_dim = 0;  // D' for the no-proxy route; 0 means |X|
  double cov_const = 1.0;
  double cov_const_prime = 10.0;
  double epsilon = 0.5;
  double omega = 0.1;
  double n_samples = 10000.0;
};

struct ExperimentConfig {
  InstanceSizes sizes;
  double beta = 1.0;
  std::vector<std::uint64_t> seeds;  // explicit; empty derives base_seed + i
  std::uint64_t base_seed = 1;
  int replicates = 10;
  std::vector<int> n_true_grid;
  int n_proxy = 20000;
  TrainConfig stage1;
  TrainConfig stage2;
  TrainConfig scratch;
  BoundConfig bounds;
  std::string output_dir = "lab_out";
  int threads = 1;
};

// The configuration the acceptance experiment runs: pinned here so the CLI
// and the test suite share one source of truth.
ExperimentConfig default_experiment_config();

// JSON round trip with defaulting: absent fields keep their defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct CurvePoint {
  std::uint64_t seed = 0;
  std::string arm;  // "two_stage" or "scratch"
  int n_true = 0;
  double dr_error = 0.0;
  double pop_loss_gap = 0.0;
  bool completed = true;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  ConditionReport certificates;  // of the planted instance
  LossReport stage1_report;
  nlohmann::json bounds;  // bound record at this instance's estimated constants
  std::vector<CurvePoint> cells;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<SeedOutcome> outcomes;
  bool all_cells_completed = true;

  // All cells sorted by (seed, arm, n_true): the CSV row order.
  std::vector<CurvePoint> points() const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

std::string curves_csv(const ExperimentResult& result);
nlohmann::json experiment_report(const ExperimentResult& result);
std::string curves_svg(const ExperimentResult& result);

// Writes curves.csv, report.json and curves.svg into dir (created if
// needed).  Validates before touching the filesystem: no partial output.
void emit_outputs(const ExperimentResult& result, const std::string& dir);

}  // namespace preflab

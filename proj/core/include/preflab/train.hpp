#pragma once

// Gradient-descent training loops for the two-stage pipeline: stage 1 fits
// the factorized policy (encodings, latent map, decoder) on proxy
// preferences; stage 2 freezes all of it and fits only an adapter table on
// scarce true preferences.  A plain logit-table trainer provides the
// from-scratch baseline.

#include <cstdint>
#include <string>
#include <vector>

#include "preflab/dpo.hpp"

namespace preflab {

struct TrainConfig {
  double beta = 1.0;
  double learning_rate = 0.5;
  int max_steps = 5000;
  double grad_tol = 1e-8;
  std::uint64_t seed = 0;
  int latent_dim = 0;                // stage 1: N; must be positive there
  std::vector<std::string> frozen;   // subset of {tau, theta, decoder, adapter}
  double rep_merge_tol = 1e-9;       // stage 2: tolerance for grouping tau rows
  std::string log_path;              // optional CSV training log (step,loss,grad_norm)
};

struct LossReport {
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  int steps = 0;
  bool converged = false;
};

struct Stage1Result {
  FactorizedPolicy policy;
  LossReport report;
};

struct Stage2Result {
  AdapterMap adapter;
  LossReport report;
};

struct TabularResult {
  TabularPolicy policy;
  MatrixXd logits;
  LossReport report;
};

// Joint descent on (tau, theta, decoder) minus cfg.frozen, with tau rows
// projected back onto the simplex after every step.
Stage1Result train_stage1(const PreferenceDataset& proxy_data, const TabularPolicy& pi_ref,
                          int simplex_dim, const TrainConfig& cfg);
Stage1Result train_stage1_population(const DataProcess& g, const TabularPolicy& pi_ref,
                                     int simplex_dim, const TrainConfig& cfg);

// Adapter-table descent with every factorized component frozen.  The table
// holds one row per distinct tau row (grouped at cfg.rep_merge_tol) and is
// initialized to the identity.  An empty dataset is rejected; "adapter" in
// cfg.frozen is contradictory and rejected.
Stage2Result train_stage2(const PreferenceDataset& true_data, const FactorizedPolicy& fp,
                          const TabularPolicy& pi_ref, const TrainConfig& cfg);
Stage2Result train_stage2_population(const DataProcess& g, const FactorizedPolicy& fp,
                                     const TabularPolicy& pi_ref, const TrainConfig& cfg);

// From-scratch baseline: free logits per (prompt, response).
TabularResult train_logit_policy(const PreferenceDataset& data, const TabularPolicy& pi_ref,
                                 const TrainConfig& cfg);
TabularResult train_logit_policy_population(const DataProcess& g, const TabularPolicy& pi_ref,
                                            const TrainConfig& cfg);

// The representative grouping stage 2 trains over: one row per distinct tau
// row at the given tolerance, keeping first-seen order.
MatrixXd distinct_tau_rows(const MatrixXd& tau, double tol);

}  // namespace preflab

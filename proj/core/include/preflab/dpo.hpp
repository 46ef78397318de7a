#pragma once

// The pairwise-preference (DPO) objective: empirical and population losses
// and analytic gradients for the factorized policy, its adapter table, and a
// plain logit-table policy.  Both losses run over weighted preference cells,
// so their cost is independent of the raw sample count.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "preflab/factorized.hpp"
#include "preflab/preference.hpp"

namespace preflab {

// log pi(.|x) for the policy being optimized.
using LogRowFn = std::function<VectorXd(int)>;

// Preference triples collapsed to unique (x, winner, loser) cells with
// weights summing to one.
struct WeightedPreferences {
  struct Cell {
    int x = 0;
    int winner = 0;
    int loser = 0;
    double weight = 0.0;
  };
  std::vector<Cell> cells;
  int num_prompts = 0;
  int num_responses = 0;
};

// Duplicate triples aggregate to their empirical frequency.
WeightedPreferences aggregate_dataset(const PreferenceDataset& data);

// Every ordered response pair (including collisions) at its occurrence
// probability under the generating process times its Bradley-Terry label
// probability.  The resulting loss is the exact expectation.
WeightedPreferences population_cells(const DataProcess& g);

// - (1/n) sum log sigmoid(beta * (log-ratio of winner - log-ratio of loser))
// over the given cells.
double dpo_loss_cells(const LogRowFn& policy, const TabularPolicy& pi_ref,
                      const WeightedPreferences& cells, double beta);

// Convenience entry points on raw data / the generating process.
double dpo_loss(const LogRowFn& policy, const TabularPolicy& pi_ref, const PreferenceDataset& data,
                double beta);
double population_dpo_loss(const LogRowFn& policy, const TabularPolicy& pi_ref,
                           const DataProcess& g, double beta);

LogRowFn log_rows_of(const TabularPolicy& pi);
LogRowFn log_rows_of(const FactorizedPolicy& fp);
LogRowFn log_rows_of(const FactorizedPolicy& fp, const AdapterMap& adapter);
LogRowFn log_rows_of_logits(const MatrixXd& logits);

// Which parameters a gradient call should differentiate.
struct ComponentSet {
  bool tau = false;
  bool theta = false;
  bool decoder = false;
  bool adapter = false;

  // Parses names from {"tau", "theta", "decoder", "adapter"}; anything else
  // raises InvalidInputError.
  static ComponentSet from_names(const std::vector<std::string>& names);
};

// Gradients for requested components; unrequested ones stay empty (size 0),
// so freezing is checkable by the caller.
struct FactorizedGradients {
  MatrixXd tau;
  MatrixXd theta;
  MatrixXd weight;
  VectorXd bias;
  MatrixXd adapter;  // w.r.t. the adapter table's value rows
};

// Analytic gradient of dpo_loss_cells for the factorized policy, optionally
// composed with a table adapter.  With an adapter present the tau gradient
// is unavailable (the table lookup is not differentiable in tau) and
// requesting it raises InvalidInputError.
FactorizedGradients dpo_gradient(const FactorizedPolicy& fp, const AdapterMap* adapter,
                                 const TabularPolicy& pi_ref, const WeightedPreferences& cells,
                                 double beta, const ComponentSet& wrt);

// Loss gradient w.r.t. a logit table (row-wise softmax policy).
MatrixXd dpo_gradient_logits(const MatrixXd& logits, const TabularPolicy& pi_ref,
                             const WeightedPreferences& cells, double beta);

}  // namespace preflab

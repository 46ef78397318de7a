#pragma once

// Covering-number and sample-complexity bounds, evaluated in log space so
// that astronomically large counts stay comparable.  Values are also
// exponentiated on a best-effort basis (inf when unrepresentable).

#include <functional>
#include <nlohmann/json.hpp>
#include <vector>

#include "preflab/errors.hpp"

namespace preflab {

struct LogBound {
  double log_value = 0.0;
  double value = 1.0;  // exp(log_value), +inf on overflow
};
LogBound log_bound_from(double log_value);

// Covering number of the D-simplex under a metric scaled by `scale`:
// (2 * E * scale * sqrt(D) / kappa)^D, log space.
LogBound covering_number_simplex(int simplex_dim, double cov_const, double scale, double kappa);

// Covering number of the composed policy class: the simplex bound with the
// decoder-and-latent scale, raised per level-set cell:
// (2 E L_phi ||Theta|| sqrt(D) / kappa)^(D * (2 E sqrt(D) / delta)^D).
LogBound composite_covering_bound(int simplex_dim, double cov_const, double l_phi,
                                  double theta_opnorm, double kappa, double delta);

// Sample count sufficient for the two-stage route:
// (D / eps^2) * (96 L_phi ||Theta|| L_pibar sqrt(D) / eps)^D
//            * log(96 L_phi ||Theta|| sqrt(D) / eps)  +  log(1 / omega).
// The logarithmic factor must exceed 1 (DomainError otherwise).
LogBound sample_complexity_with_proxy(int simplex_dim, double epsilon, double omega, double l_phi,
                                      double theta_opnorm, double l_pibar);

// Sample count for learning over the full prompt embedding of dimension D'
// without a proxy stage:
// (D' / eps^2) * (48 L_phi ||Theta|| L_pibar E' sqrt(D') / eps)^(D')
//             * log(48 L_phi ||Theta|| L_pibar E' sqrt(D') / eps) + log(1 / omega).
LogBound sample_complexity_without_proxy(int embedding_dim, double epsilon, double omega,
                                         double l_phi, double theta_opnorm, double l_pibar,
                                         double cov_const_prime);

// log of the deviation probability bound
// 2 * Cov * exp(-2 (1 - alpha)^2 n eps^2 / (4 C^2)),
// given the log covering number at radius alpha * eps / 4.
double concentration_bound(double cov_log, double alpha, double n, double epsilon,
                           double reward_bound);

// Evaluates the concentration bound over alpha in {0.05, 0.10, ..., 0.95},
// querying cov_log_fn at radius alpha * eps / 4, and reports the tightest.
struct AlphaSweep {
  double best_alpha = 0.0;
  double best_log_prob = 0.0;
  std::vector<std::pair<double, double>> grid;  // (alpha, log_prob)
};
AlphaSweep concentration_alpha_sweep(const std::function<double(double)>& cov_log_fn, double n,
                                     double epsilon, double reward_bound);

// Everything the CLI bounds record needs in one bag.
struct BoundInputs {
  int simplex_dim = 2;            // D
  int embedding_dim = 24;         // D'
  double epsilon = 0.5;
  double omega = 0.1;
  double l_phi = 1.0;
  double theta_opnorm = 1.0;
  double l_pibar = 1.0;
  double reward_bound = 50.0;     // C
  double cov_const = 1.0;         // E  (simplex route)
  double cov_const_prime = 10.0;  // E' (embedding route)
  double n_samples = 10000.0;     // for the concentration row
};

BoundInputs bound_inputs_from_json(const nlohmann::json& j);
nlohmann::json bound_inputs_to_json(const BoundInputs& in);

// One JSON record with every bound evaluated at the given inputs.  The
// composite covering and concentration rows instantiate kappa = eps / 8
// (the alpha = 1/2 radius) and delta = eps / (48 L_phi ||Theta|| L_pibar).
nlohmann::json bounds_record(const BoundInputs& in);

}  // namespace preflab

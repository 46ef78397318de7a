#pragma once

// Tabular policies over a finite prompt space X and response space Y,
// reward tables, the KL-regularized closed-form optimum, implicit rewards,
// and the sup-norm metrics derived from them.

#include <Eigen/Dense>
#include <cstdint>

#include "preflab/errors.hpp"

namespace preflab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Probabilities this small are floored before any log is taken, keeping the
// log-ratio metrics finite for policies with (numerically) vanishing mass.
inline constexpr double kProbFloor = 1e-300;

// Default bound on |r(x, y)| accepted by RewardTable validation.
inline constexpr double kDefaultRewardBound = 50.0;

// A distribution over responses for one prompt.
struct ResponseDist {
  VectorXd probs;

  static ResponseDist checked(VectorXd p, double tol = 1e-12);
  int num_responses() const { return static_cast<int>(probs.size()); }
};

// One distribution row per prompt.
struct TabularPolicy {
  MatrixXd table;  // |X| x |Y|, each row a distribution

  static TabularPolicy checked(MatrixXd t, double tol = 1e-12);
  int num_prompts() const { return static_cast<int>(table.rows()); }
  int num_responses() const { return static_cast<int>(table.cols()); }
  ResponseDist row(int x) const;
};

// Bounded reward values together with the regularization strength they are
// calibrated against.
struct RewardTable {
  MatrixXd values;  // |X| x |Y|
  double beta = 1.0;

  static RewardTable checked(MatrixXd v, double beta, double bound = kDefaultRewardBound);
};

// beta * log(pi / pi_ref), entrywise, with the probability floor applied to
// pi.  pi_ref must be strictly positive.  With floor_probs = false a zero in
// pi where pi_ref is positive raises DomainError instead of being floored.
RewardTable implicit_reward(const TabularPolicy& pi, const TabularPolicy& pi_ref, double beta,
                            bool floor_probs = true);

// Row-wise softmax optimum of the KL-regularized objective:
// pi(y|x) proportional to pi_ref(y|x) * exp(r(x, y) / beta).
TabularPolicy optimal_policy(const RewardTable& r, const TabularPolicy& pi_ref);

// Sup-norm distance between implicit rewards: max_{x,y} |r_pi1 - r_pi2|.
double d_r(const TabularPolicy& pi1, const TabularPolicy& pi2, const TabularPolicy& pi_ref,
           double beta);

// Sup-norm log-ratio distance between two response distributions:
// max_y |beta * log(p(y) / q(y))|, probabilities floored.
double d_py(const ResponseDist& p, const ResponseDist& q, double beta);

// Number of sequences of length 1..max_len over an alphabet of k symbols:
// sum_{l=1}^{max_len} k^l, with overflow checking.
std::uint64_t sequence_space_size(std::uint64_t k, std::uint64_t max_len);

}  // namespace preflab

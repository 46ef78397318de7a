#include "preflab/policy.hpp"

#include <cmath>
#include <limits>

namespace preflab {
namespace {

double floored_log(double p) { return std::log(std::max(p, kProbFloor)); }

void check_distribution(const VectorXd& p, double tol, const char* who) {
  if (p.size() == 0) throw InvalidInputError(std::string(who) + ": empty distribution");
  if (!p.allFinite()) throw InvalidInputError(std::string(who) + ": non-finite entries");
  if (std::abs(p.sum() - 1.0) > tol)
    throw InvalidInputError(std::string(who) + ": probabilities sum to " +
                            std::to_string(p.sum()));
  if (p.minCoeff() < -tol)
    throw InvalidInputError(std::string(who) + ": negative probability");
}

}  // namespace

ResponseDist ResponseDist::checked(VectorXd p, double tol) {
  check_distribution(p, tol, "ResponseDist");
  for (int i = 0; i < p.size(); ++i)
    if (p[i] < 0.0) p[i] = 0.0;
  return ResponseDist{std::move(p)};
}

TabularPolicy TabularPolicy::checked(MatrixXd t, double tol) {
  if (t.rows() == 0 || t.cols() == 0) throw InvalidInputError("TabularPolicy: empty table");
  for (int x = 0; x < t.rows(); ++x) {
    VectorXd row = t.row(x);
    check_distribution(row, tol, "TabularPolicy");
    for (int y = 0; y < t.cols(); ++y)
      if (t(x, y) < 0.0) t(x, y) = 0.0;
  }
  return TabularPolicy{std::move(t)};
}

ResponseDist TabularPolicy::row(int x) const {
  if (x < 0 || x >= num_prompts()) throw InvalidInputError("TabularPolicy::row: prompt out of range");
  return ResponseDist{table.row(x).transpose()};
}

RewardTable RewardTable::checked(MatrixXd v, double beta, double bound) {
  if (v.rows() == 0 || v.cols() == 0) throw InvalidInputError("RewardTable: empty table");
  if (!v.allFinite()) throw InvalidInputError("RewardTable: non-finite entries");
  if (!(beta > 0.0)) throw InvalidInputError("RewardTable: beta must be positive");
  const double mag = v.cwiseAbs().maxCoeff();
  if (mag > bound)
    throw DomainError("RewardTable: magnitude " + std::to_string(mag) + " exceeds bound " +
                      std::to_string(bound));
  return RewardTable{std::move(v), beta};
}

RewardTable implicit_reward(const TabularPolicy& pi, const TabularPolicy& pi_ref, double beta,
                            bool floor_probs) {
  if (pi.table.rows() != pi_ref.table.rows() || pi.table.cols() != pi_ref.table.cols())
    throw InvalidInputError("implicit_reward: policy shape mismatch");
  if (!(beta > 0.0)) throw InvalidInputError("implicit_reward: beta must be positive");
  if (pi_ref.table.minCoeff() <= 0.0)
    throw InvalidInputError("implicit_reward: reference policy must be strictly positive");
  MatrixXd values(pi.table.rows(), pi.table.cols());
  for (int x = 0; x < pi.table.rows(); ++x) {
    for (int y = 0; y < pi.table.cols(); ++y) {
      const double p = pi.table(x, y);
      if (!floor_probs && p <= 0.0)
        throw DomainError("implicit_reward: zero probability with flooring disabled");
      values(x, y) = beta * (floored_log(p) - std::log(pi_ref.table(x, y)));
    }
  }
  return RewardTable{std::move(values), beta};
}

TabularPolicy optimal_policy(const RewardTable& r, const TabularPolicy& pi_ref) {
  if (r.values.rows() != pi_ref.table.rows() || r.values.cols() != pi_ref.table.cols())
    throw InvalidInputError("optimal_policy: shape mismatch");
  if (pi_ref.table.minCoeff() <= 0.0)
    throw InvalidInputError("optimal_policy: reference policy must be strictly positive");
  MatrixXd out(r.values.rows(), r.values.cols());
  for (int x = 0; x < r.values.rows(); ++x) {
    // Work on log pi_ref + r / beta and subtract the max before
    // exponentiating, the usual overflow-safe softmax.
    VectorXd logits(r.values.cols());
    for (int y = 0; y < r.values.cols(); ++y)
      logits[y] = std::log(pi_ref.table(x, y)) + r.values(x, y) / r.beta;
    const double peak = logits.maxCoeff();
    VectorXd w = (logits.array() - peak).exp();
    out.row(x) = (w / w.sum()).transpose();
  }
  return TabularPolicy{std::move(out)};
}

double d_r(const TabularPolicy& pi1, const TabularPolicy& pi2, const TabularPolicy& pi_ref,
           double beta) {
  const RewardTable r1 = implicit_reward(pi1, pi_ref, beta);
  const RewardTable r2 = implicit_reward(pi2, pi_ref, beta);
  return (r1.values - r2.values).cwiseAbs().maxCoeff();
}

double d_py(const ResponseDist& p, const ResponseDist& q, double beta) {
  if (p.probs.size() != q.probs.size()) throw InvalidInputError("d_py: size mismatch");
  if (!(beta > 0.0)) throw InvalidInputError("d_py: beta must be positive");
  double worst = 0.0;
  for (int y = 0; y < p.probs.size(); ++y)
    worst = std::max(worst, std::abs(beta * (floored_log(p.probs[y]) - floored_log(q.probs[y]))));
  return worst;
}

std::uint64_t sequence_space_size(std::uint64_t k, std::uint64_t max_len) {
  if (k < 1 || max_len < 1)
    throw InvalidInputError("sequence_space_size: alphabet and length must be at least 1");
  std::uint64_t total = 0, term = 1;
  for (std::uint64_t l = 1; l <= max_len; ++l) {
    if (term > std::numeric_limits<std::uint64_t>::max() / k)
      throw std::overflow_error("sequence_space_size: overflow");
    term *= k;
    if (total > std::numeric_limits<std::uint64_t>::max() - term)
      throw std::overflow_error("sequence_space_size: overflow");
    total += term;
  }
  return total;
}

}  // namespace preflab

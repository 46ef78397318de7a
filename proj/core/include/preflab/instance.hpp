#pragma once

// Synthetic planted instances: a factorized proxy policy with a known
// level-set structure, a planted adapter defining the target policy, both
// rewards derived from the policies, and certificates showing every
// transfer condition holds.  break_condition produces fixtures failing
// exactly one targeted condition.

#include <cstdint>
#include <string>

#include "preflab/conditions.hpp"
#include "preflab/preference.hpp"

namespace preflab {

struct InstanceSizes {
  int num_prompts = 24;
  int num_responses = 12;
  int latent_dim = 5;   // N
  int simplex_dim = 2;  // D
  int level_sets = 6;
};

struct InstanceBundle {
  InstanceSizes sizes;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::string note;  // "planted", "break-1", "break-2", "break-4"

  FactorizedPolicy fp;
  AdapterMap planted_adapter{AdapterAffine{}};
  TabularPolicy pi_ref;
  TabularPolicy proxy_policy;  // evaluate_policy(fp), stored for fixtures
  TabularPolicy true_policy;   // planted: evaluate_policy_with_adapter(fp, planted_adapter)
  RewardTable proxy_reward;
  RewardTable true_reward;
  VectorXd prompt_dist;
  ConditionReport certificates;
};

// Draws a planted instance; redraws components until margins hold and the
// certificates all pass (GenerationFailedError after 100 attempts).
InstanceBundle generate_instance(const InstanceSizes& sizes, double beta, std::uint64_t seed);

// A copy of `bundle` perturbed to fail exactly the targeted condition:
// 1 merges two target-policy level sets, 2 moves one class's target row off
// the decodable image, 4 drags two encodings together so the level-set
// re-mapping's Lipschitz ratio explodes.  (Condition 3 is constructive and
// has no break fixture.)  FixtureInvalidError when no clean perturbation is
// found.
InstanceBundle break_condition(const InstanceBundle& bundle, int which, std::uint64_t seed);

// The two data-generating processes of a bundle.
DataProcess proxy_process(const InstanceBundle& bundle);
DataProcess true_process(const InstanceBundle& bundle);

// Directory round trip: manifest.json, checkpoint.json, adapter.json,
// policies.json, rewards.csv, certificates.json.
void save_bundle(const InstanceBundle& bundle, const std::string& dir);
InstanceBundle load_bundle(const std::string& dir);

}  // namespace preflab

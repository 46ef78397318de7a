#pragma once

// Pairwise preference data: the generating process (prompt distribution,
// reference policy, reward), Bradley-Terry sampling, and JSON-lines
// round-tripping of sampled datasets.

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "preflab/policy.hpp"

namespace preflab {

// The data-generating process: x ~ prompt_dist, y1, y2 iid ~ pi_ref(.|x),
// winner chosen by a Bradley-Terry draw on the reward difference.
struct DataProcess {
  VectorXd prompt_dist;  // distribution over prompts
  TabularPolicy pi_ref;  // strictly positive reference policy
  RewardTable reward;

  static DataProcess checked(VectorXd prompt_dist, TabularPolicy pi_ref, RewardTable reward);
  int num_prompts() const { return static_cast<int>(prompt_dist.size()); }
  int num_responses() const { return pi_ref.num_responses(); }
};

struct PreferenceTriple {
  int x = 0;
  int winner = 0;
  int loser = 0;
};

struct PreferenceDataset {
  std::vector<PreferenceTriple> triples;
  std::string source;  // free-form provenance tag ("proxy", "true", ...)
  std::uint64_t seed = 0;
  int num_prompts = 0;
  int num_responses = 0;
  double beta = 1.0;

  std::size_t size() const { return triples.size(); }
};

// Probability that y1 beats y2 under the Bradley-Terry model:
// sigmoid(r(x, y1) - r(x, y2)).
double population_win_prob(const DataProcess& g, int x, int y1, int y2);

// Draws n triples.  Same-response collisions are kept and labeled by a fair
// coin, exactly as the Bradley-Terry draw at zero reward gap prescribes.
PreferenceDataset sample_preferences(const DataProcess& g, std::size_t n, std::uint64_t seed,
                                     std::string source = "sampled");

// JSON-lines round trip: a header record with the provenance fields, then
// one {"x":..,"yw":..,"yl":..} record per triple.
void save_dataset_jsonl(const PreferenceDataset& data, std::ostream& out);
void save_dataset_jsonl(const PreferenceDataset& data, const std::string& path);
PreferenceDataset load_dataset_jsonl(std::istream& in);
PreferenceDataset load_dataset_jsonl(const std::string& path);

double sigmoid(double z);

}  // namespace preflab

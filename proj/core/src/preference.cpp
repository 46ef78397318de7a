#include "preflab/preference.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "preflab/rng.hpp"

namespace preflab {

using nlohmann::json;

double sigmoid(double z) {
  // Evaluate via the non-overflowing branch.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

DataProcess DataProcess::checked(VectorXd prompt_dist, TabularPolicy pi_ref, RewardTable reward) {
  if (prompt_dist.size() != pi_ref.num_prompts() || reward.values.rows() != pi_ref.num_prompts() ||
      reward.values.cols() != pi_ref.num_responses())
    throw InvalidInputError("DataProcess: shape mismatch between prompt_dist, pi_ref and reward");
  if (!prompt_dist.allFinite() || std::abs(prompt_dist.sum() - 1.0) > 1e-12 ||
      prompt_dist.minCoeff() < 0.0)
    throw InvalidInputError("DataProcess: prompt_dist is not a distribution");
  if (pi_ref.table.minCoeff() <= 0.0)
    throw InvalidInputError("DataProcess: reference policy must be strictly positive");
  return DataProcess{std::move(prompt_dist), std::move(pi_ref), std::move(reward)};
}

double population_win_prob(const DataProcess& g, int x, int y1, int y2) {
  if (x < 0 || x >= g.num_prompts() || y1 < 0 || y1 >= g.num_responses() || y2 < 0 ||
      y2 >= g.num_responses())
    throw InvalidInputError("population_win_prob: index out of range");
  return sigmoid(g.reward.values(x, y1) - g.reward.values(x, y2));
}

PreferenceDataset sample_preferences(const DataProcess& g, std::size_t n, std::uint64_t seed,
                                     std::string source) {
  PreferenceDataset data;
  data.source = std::move(source);
  data.seed = seed;
  data.num_prompts = g.num_prompts();
  data.num_responses = g.num_responses();
  data.beta = g.reward.beta;
  data.triples.reserve(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const int x = rng.categorical(g.prompt_dist);
    const VectorXd row = g.pi_ref.table.row(x);
    const int y1 = rng.categorical(row);
    const int y2 = rng.categorical(row);
    const bool first_wins = rng.bernoulli(population_win_prob(g, x, y1, y2));
    data.triples.push_back(first_wins ? PreferenceTriple{x, y1, y2} : PreferenceTriple{x, y2, y1});
  }
  return data;
}

void save_dataset_jsonl(const PreferenceDataset& data, std::ostream& out) {
  json header = {{"source", data.source},
                 {"seed", data.seed},
                 {"num_prompts", data.num_prompts},
                 {"num_responses", data.num_responses},
                 {"beta", data.beta}};
  out << header.dump() << "\n";
  for (const auto& t : data.triples) {
    json rec = {{"x", t.x}, {"yw", t.winner}, {"yl", t.loser}};
    out << rec.dump() << "\n";
  }
}

void save_dataset_jsonl(const PreferenceDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("save_dataset_jsonl: cannot open " + path);
  save_dataset_jsonl(data, out);
}

PreferenceDataset load_dataset_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInputError("load_dataset_jsonl: empty stream");
  PreferenceDataset data;
  try {
    const json header = json::parse(line);
    data.source = header.at("source").get<std::string>();
    data.seed = header.at("seed").get<std::uint64_t>();
    data.num_prompts = header.at("num_prompts").get<int>();
    data.num_responses = header.at("num_responses").get<int>();
    data.beta = header.at("beta").get<double>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      PreferenceTriple t{rec.at("x").get<int>(), rec.at("yw").get<int>(),
                         rec.at("yl").get<int>()};
      if (t.x < 0 || t.x >= data.num_prompts || t.winner < 0 || t.winner >= data.num_responses ||
          t.loser < 0 || t.loser >= data.num_responses)
        throw InvalidInputError("load_dataset_jsonl: triple index out of range");
      data.triples.push_back(t);
    }
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("load_dataset_jsonl: malformed record: ") + e.what());
  }
  return data;
}

PreferenceDataset load_dataset_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("load_dataset_jsonl: cannot open " + path);
  return load_dataset_jsonl(in);
}

}  // namespace preflab

#include "preflab/dpo.hpp"

#include <cmath>
#include <map>
#include <tuple>

namespace preflab {
namespace {

// -log sigmoid(h), evaluated without overflow on either branch.
double softplus_neg(double h) {
  if (h >= 0.0) return std::log1p(std::exp(-h));
  return -h + std::log1p(std::exp(h));
}

void check_cells(const WeightedPreferences& cells, const TabularPolicy& pi_ref) {
  if (cells.num_prompts != pi_ref.num_prompts() || cells.num_responses != pi_ref.num_responses())
    throw InvalidInputError("dpo: cell sizes disagree with reference policy");
  if (cells.cells.empty()) throw InvalidInputError("dpo: empty preference cells");
  if (pi_ref.table.minCoeff() <= 0.0)
    throw InvalidInputError("dpo: reference policy must be strictly positive");
}

// Floored log of the reference policy, precomputed once.
MatrixXd log_ref(const TabularPolicy& pi_ref) {
  MatrixXd lr(pi_ref.num_prompts(), pi_ref.num_responses());
  for (int x = 0; x < lr.rows(); ++x)
    for (int y = 0; y < lr.cols(); ++y) lr(x, y) = std::log(pi_ref.table(x, y));
  return lr;
}

}  // namespace

WeightedPreferences aggregate_dataset(const PreferenceDataset& data) {
  if (data.triples.empty()) throw InvalidInputError("aggregate_dataset: empty dataset");
  std::map<std::tuple<int, int, int>, double> counts;
  for (const auto& t : data.triples) {
    if (t.x < 0 || t.x >= data.num_prompts || t.winner < 0 || t.winner >= data.num_responses ||
        t.loser < 0 || t.loser >= data.num_responses)
      throw InvalidInputError("aggregate_dataset: triple out of range");
    counts[{t.x, t.winner, t.loser}] += 1.0;
  }
  WeightedPreferences cells;
  cells.num_prompts = data.num_prompts;
  cells.num_responses = data.num_responses;
  const double n = static_cast<double>(data.triples.size());
  cells.cells.reserve(counts.size());
  for (const auto& [key, count] : counts)
    cells.cells.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), count / n});
  return cells;
}

WeightedPreferences population_cells(const DataProcess& g) {
  WeightedPreferences cells;
  cells.num_prompts = g.num_prompts();
  cells.num_responses = g.num_responses();
  cells.cells.reserve(static_cast<std::size_t>(cells.num_prompts) *
                      static_cast<std::size_t>(cells.num_responses) *
                      static_cast<std::size_t>(cells.num_responses));
  for (int x = 0; x < cells.num_prompts; ++x) {
    if (g.prompt_dist[x] == 0.0) continue;
    for (int y1 = 0; y1 < cells.num_responses; ++y1) {
      for (int y2 = 0; y2 < cells.num_responses; ++y2) {
        const double base = g.prompt_dist[x] * g.pi_ref.table(x, y1) * g.pi_ref.table(x, y2);
        const double win = population_win_prob(g, x, y1, y2);
        const double w = base * win;
        // (y1, y2) drawn, y1 labeled winner; the mirrored outcome appears
        // when the loop reaches (y2, y1).
        if (w > 0.0) cells.cells.push_back({x, y1, y2, w});
      }
    }
  }
  return cells;
}

double dpo_loss_cells(const LogRowFn& policy, const TabularPolicy& pi_ref,
                      const WeightedPreferences& cells, double beta) {
  check_cells(cells, pi_ref);
  if (!(beta > 0.0)) throw InvalidInputError("dpo: beta must be positive");
  const MatrixXd lr = log_ref(pi_ref);
  double loss = 0.0;
  int last_x = -1;
  VectorXd lp;
  for (const auto& c : cells.cells) {
    if (c.x != last_x) {
      lp = policy(c.x);
      last_x = c.x;
    }
    const double h =
        beta * ((lp[c.winner] - lr(c.x, c.winner)) - (lp[c.loser] - lr(c.x, c.loser)));
    loss += c.weight * softplus_neg(h);
  }
  return loss;
}

double dpo_loss(const LogRowFn& policy, const TabularPolicy& pi_ref, const PreferenceDataset& data,
                double beta) {
  return dpo_loss_cells(policy, pi_ref, aggregate_dataset(data), beta);
}

double population_dpo_loss(const LogRowFn& policy, const TabularPolicy& pi_ref,
                           const DataProcess& g, double beta) {
  return dpo_loss_cells(policy, pi_ref, population_cells(g), beta);
}

LogRowFn log_rows_of(const TabularPolicy& pi) {
  return [pi](int x) {
    VectorXd row = pi.table.row(x).transpose();
    for (int y = 0; y < row.size(); ++y) row[y] = std::log(std::max(row[y], kProbFloor));
    return row;
  };
}

LogRowFn log_rows_of(const FactorizedPolicy& fp) {
  return [&fp](int x) { return log_evaluate(fp, x); };
}

LogRowFn log_rows_of(const FactorizedPolicy& fp, const AdapterMap& adapter) {
  return [&fp, &adapter](int x) { return log_evaluate_with_adapter(fp, adapter, x); };
}

LogRowFn log_rows_of_logits(const MatrixXd& logits) {
  return [logits](int x) { return log_softmax(logits.row(x).transpose()); };
}

ComponentSet ComponentSet::from_names(const std::vector<std::string>& names) {
  ComponentSet set;
  for (const auto& name : names) {
    if (name == "tau")
      set.tau = true;
    else if (name == "theta")
      set.theta = true;
    else if (name == "decoder")
      set.decoder = true;
    else if (name == "adapter")
      set.adapter = true;
    else
      throw InvalidInputError("unknown component name '" + name + "'");
  }
  return set;
}

namespace {

// Accumulates dLoss/dlogits rows for every prompt that occurs in the cells.
// The softmax normalizer cancels in winner-minus-loser differences, so each
// cell touches exactly two entries.
MatrixXd logit_space_gradient(const LogRowFn& policy, const TabularPolicy& pi_ref,
                              const WeightedPreferences& cells, double beta) {
  const MatrixXd lr = log_ref(pi_ref);
  MatrixXd grad = MatrixXd::Zero(cells.num_prompts, cells.num_responses);
  int last_x = -1;
  VectorXd lp;
  for (const auto& c : cells.cells) {
    if (c.x != last_x) {
      lp = policy(c.x);
      last_x = c.x;
    }
    const double h =
        beta * ((lp[c.winner] - lr(c.x, c.winner)) - (lp[c.loser] - lr(c.x, c.loser)));
    const double coef = -c.weight * beta * sigmoid(-h);
    grad(c.x, c.winner) += coef;
    grad(c.x, c.loser) -= coef;
  }
  return grad;
}

}  // namespace

FactorizedGradients dpo_gradient(const FactorizedPolicy& fp, const AdapterMap* adapter,
                                 const TabularPolicy& pi_ref, const WeightedPreferences& cells,
                                 double beta, const ComponentSet& wrt) {
  check_cells(cells, pi_ref);
  if (fp.num_prompts() != cells.num_prompts || fp.num_responses() != cells.num_responses)
    throw InvalidInputError("dpo_gradient: policy sizes disagree with cells");
  if (wrt.adapter && adapter == nullptr)
    throw InvalidInputError("dpo_gradient: adapter gradient requested without an adapter");
  if (adapter != nullptr && wrt.tau)
    throw InvalidInputError(
        "dpo_gradient: tau gradient is undefined through a table adapter lookup");
  if (adapter != nullptr && !adapter->is_table())
    throw InvalidInputError("dpo_gradient: only table adapters are trainable");

  const LogRowFn policy =
      adapter == nullptr ? log_rows_of(fp) : log_rows_of(fp, *adapter);
  const MatrixXd glogits = logit_space_gradient(policy, pi_ref, cells, beta);

  // Encoded simplex point actually fed to theta for each prompt, and the
  // adapter row it came from (table mode).
  const int nx = fp.num_prompts();
  MatrixXd encoded(nx, fp.tau.cols());
  std::vector<int> adapter_row(static_cast<std::size_t>(nx), -1);
  for (int x = 0; x < nx; ++x) {
    if (adapter == nullptr) {
      encoded.row(x) = fp.tau.row(x);
    } else {
      const auto& t = adapter->table();
      const int r = t.find(fp.tau.row(x).transpose());
      if (r < 0)
        throw UndefinedRepresentativeError("dpo_gradient: tau row matches no representative");
      adapter_row[static_cast<std::size_t>(x)] = r;
      encoded.row(x) = t.values.row(r);
    }
  }

  FactorizedGradients out;
  // dLoss/dv_x = W^T glogits_x; reused by theta, tau and adapter chains.
  MatrixXd dv;
  if (wrt.tau || wrt.theta || wrt.adapter) {
    dv.resize(nx, fp.latent_dim());
    for (int x = 0; x < nx; ++x)
      dv.row(x) = (fp.decoder.weight.transpose() * glogits.row(x).transpose()).transpose();
  }
  if (wrt.tau) {
    out.tau.resize(nx, fp.tau.cols());
    for (int x = 0; x < nx; ++x)
      out.tau.row(x) = (fp.theta.transpose() * dv.row(x).transpose()).transpose();
  }
  if (wrt.theta) {
    out.theta = MatrixXd::Zero(fp.latent_dim(), fp.tau.cols());
    for (int x = 0; x < nx; ++x) out.theta += dv.row(x).transpose() * encoded.row(x);
  }
  if (wrt.decoder) {
    out.weight = MatrixXd::Zero(fp.decoder.weight.rows(), fp.decoder.weight.cols());
    out.bias = VectorXd::Zero(fp.decoder.bias.size());
    for (int x = 0; x < nx; ++x) {
      const VectorXd v = fp.theta * encoded.row(x).transpose();
      out.weight += glogits.row(x).transpose() * v.transpose();
      out.bias += glogits.row(x).transpose();
    }
  }
  if (wrt.adapter) {
    out.adapter = MatrixXd::Zero(adapter->table().size(), fp.tau.cols());
    for (int x = 0; x < nx; ++x)
      out.adapter.row(adapter_row[static_cast<std::size_t>(x)]) +=
          (fp.theta.transpose() * dv.row(x).transpose()).transpose();
  }
  return out;
}

MatrixXd dpo_gradient_logits(const MatrixXd& logits, const TabularPolicy& pi_ref,
                             const WeightedPreferences& cells, double beta) {
  check_cells(cells, pi_ref);
  if (logits.rows() != cells.num_prompts || logits.cols() != cells.num_responses)
    throw InvalidInputError("dpo_gradient_logits: size mismatch");
  return logit_space_gradient(log_rows_of_logits(logits), pi_ref, cells, beta);
}

}  // namespace preflab

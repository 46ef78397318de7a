#include "preflab/train.hpp"

#include <cmath>
#include <fstream>
#include <functional>

#include "preflab/rng.hpp"

namespace preflab {
namespace {

void validate_config(const TrainConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw InvalidInputError("TrainConfig: beta must be positive");
  if (!(cfg.learning_rate > 0.0))
    throw InvalidInputError("TrainConfig: learning_rate must be positive");
  if (cfg.max_steps < 0) throw InvalidInputError("TrainConfig: max_steps must be >= 0");
  if (!(cfg.grad_tol >= 0.0)) throw InvalidInputError("TrainConfig: grad_tol must be >= 0");
  ComponentSet::from_names(cfg.frozen);  // rejects unknown names
}

class TrainLog {
 public:
  explicit TrainLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw InvalidInputError("TrainConfig: cannot open log file " + path);
    out_ << "step,loss,grad_norm\n";
  }
  void record(int step, double loss, double grad_norm) {
    if (out_.is_open()) out_ << step << "," << loss << "," << grad_norm << "\n";
  }

 private:
  std::ofstream out_;
};

// Shared descent loop: evaluate() returns (loss, grad_norm) at the current
// parameters, apply() takes one projected gradient step.  Steps counted are
// applied updates; the final evaluation never follows an unreported step.
LossReport descend(const TrainConfig& cfg,
                   const std::function<std::pair<double, double>()>& evaluate,
                   const std::function<void()>& apply) {
  TrainLog log(cfg.log_path);
  LossReport report;
  for (int step = 0;; ++step) {
    const auto [loss, grad_norm] = evaluate();
    if (!std::isfinite(loss)) throw TrainingDivergedError("training loss is not finite", step);
    log.record(step, loss, grad_norm);
    report.final_loss = loss;
    report.final_grad_norm = grad_norm;
    report.steps = step;
    if (grad_norm < cfg.grad_tol) {
      report.converged = true;
      break;
    }
    if (step >= cfg.max_steps) break;
    apply();
  }
  return report;
}

double squared_or_zero(const MatrixXd& m) { return m.size() ? m.squaredNorm() : 0.0; }

Stage1Result train_stage1_cells(const WeightedPreferences& cells, const TabularPolicy& pi_ref,
                                int simplex_dim, const TrainConfig& cfg) {
  validate_config(cfg);
  if (simplex_dim < 1) throw InvalidInputError("train_stage1: simplex_dim must be >= 1");
  if (cfg.latent_dim < 1) throw InvalidInputError("train_stage1: cfg.latent_dim must be >= 1");
  ComponentSet frozen = ComponentSet::from_names(cfg.frozen);
  if (frozen.adapter)
    throw InvalidInputError("train_stage1: no adapter exists in stage 1");
  ComponentSet wrt;
  wrt.tau = !frozen.tau;
  wrt.theta = !frozen.theta;
  wrt.decoder = !frozen.decoder;
  if (!wrt.tau && !wrt.theta && !wrt.decoder)
    throw InvalidInputError("train_stage1: every component is frozen");

  const int nx = cells.num_prompts;
  const int ny = cells.num_responses;
  const int d1 = simplex_dim + 1;
  const int n = cfg.latent_dim;

  // Initialization: uniform encodings, latent columns in the unit ball,
  // small random decoder redrawn until its centered weight has full rank.
  Rng rng(cfg.seed);
  FactorizedPolicy fp;
  fp.tau = MatrixXd::Constant(nx, d1, 1.0 / static_cast<double>(d1));
  fp.theta.resize(n, d1);
  for (int c = 0; c < d1; ++c) {
    VectorXd col(n);
    for (int i = 0; i < n; ++i) col[i] = rng.normal();
    const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
    const double len = col.norm();
    fp.theta.col(c) = len > 0.0 ? VectorXd(col * (radius / len)) : VectorXd::Zero(n);
  }
  for (int attempt = 0;; ++attempt) {
    fp.decoder.weight.resize(ny, n);
    for (int i = 0; i < ny; ++i)
      for (int k = 0; k < n; ++k) fp.decoder.weight(i, k) = 0.5 * rng.normal();
    fp.decoder.bias = VectorXd::Zero(ny);
    if (decoder_injectivity(fp.decoder).injective) break;
    if (attempt >= 100)
      throw GenerationFailedError("train_stage1: could not draw an injective decoder");
  }

  FactorizedGradients grads;
  auto evaluate = [&]() {
    const double loss = dpo_loss_cells(log_rows_of(fp), pi_ref, cells, cfg.beta);
    grads = dpo_gradient(fp, nullptr, pi_ref, cells, cfg.beta, wrt);
    const double gnorm = std::sqrt(squared_or_zero(grads.tau) + squared_or_zero(grads.theta) +
                                   squared_or_zero(grads.weight) +
                                   (grads.bias.size() ? grads.bias.squaredNorm() : 0.0));
    return std::make_pair(loss, gnorm);
  };
  auto apply = [&]() {
    if (wrt.tau) {
      fp.tau -= cfg.learning_rate * grads.tau;
      for (int x = 0; x < nx; ++x)
        fp.tau.row(x) = geometry::project_to_simplex(fp.tau.row(x).transpose()).transpose();
    }
    if (wrt.theta) fp.theta -= cfg.learning_rate * grads.theta;
    if (wrt.decoder) {
      fp.decoder.weight -= cfg.learning_rate * grads.weight;
      fp.decoder.bias -= cfg.learning_rate * grads.bias;
    }
  };
  LossReport report = descend(cfg, evaluate, apply);
  return Stage1Result{std::move(fp), report};
}

Stage2Result train_stage2_cells(const WeightedPreferences& cells, const FactorizedPolicy& fp,
                                const TabularPolicy& pi_ref, const TrainConfig& cfg) {
  validate_config(cfg);
  validate_factorized(fp);
  ComponentSet frozen = ComponentSet::from_names(cfg.frozen);
  if (frozen.adapter)
    throw InvalidInputError("train_stage2: the adapter is the only trainable component");

  AdapterMap adapter =
      AdapterMap::identity_table(distinct_tau_rows(fp.tau, cfg.rep_merge_tol), cfg.rep_merge_tol);
  ComponentSet wrt;
  wrt.adapter = true;

  FactorizedGradients grads;
  auto evaluate = [&]() {
    const double loss = dpo_loss_cells(log_rows_of(fp, adapter), pi_ref, cells, cfg.beta);
    grads = dpo_gradient(fp, &adapter, pi_ref, cells, cfg.beta, wrt);
    return std::make_pair(loss, grads.adapter.norm());
  };
  auto apply = [&]() {
    AdapterTable& t = adapter.table();
    t.values -= cfg.learning_rate * grads.adapter;
    for (int r = 0; r < t.size(); ++r)
      t.values.row(r) = geometry::project_to_simplex(t.values.row(r).transpose()).transpose();
  };
  LossReport report = descend(cfg, evaluate, apply);
  return Stage2Result{std::move(adapter), report};
}

TabularResult train_logit_policy_cells(const WeightedPreferences& cells,
                                       const TabularPolicy& pi_ref, const TrainConfig& cfg) {
  validate_config(cfg);
  MatrixXd logits = MatrixXd::Zero(cells.num_prompts, cells.num_responses);
  MatrixXd grad;
  auto evaluate = [&]() {
    const double loss = dpo_loss_cells(log_rows_of_logits(logits), pi_ref, cells, cfg.beta);
    grad = dpo_gradient_logits(logits, pi_ref, cells, cfg.beta);
    return std::make_pair(loss, grad.norm());
  };
  auto apply = [&]() { logits -= cfg.learning_rate * grad; };
  LossReport report = descend(cfg, evaluate, apply);
  MatrixXd table(logits.rows(), logits.cols());
  for (int x = 0; x < logits.rows(); ++x)
    table.row(x) = softmax(logits.row(x).transpose()).transpose();
  return TabularResult{TabularPolicy{std::move(table)}, std::move(logits), report};
}

}  // namespace

MatrixXd distinct_tau_rows(const MatrixXd& tau, double tol) {
  if (tau.rows() == 0) throw InvalidInputError("distinct_tau_rows: empty tau");
  std::vector<int> rep_rows;
  for (int x = 0; x < tau.rows(); ++x) {
    bool seen = false;
    for (int r : rep_rows) {
      if ((tau.row(x) - tau.row(r)).cwiseAbs().maxCoeff() <= tol) {
        seen = true;
        break;
      }
    }
    if (!seen) rep_rows.push_back(x);
  }
  MatrixXd reps(static_cast<int>(rep_rows.size()), tau.cols());
  for (std::size_t i = 0; i < rep_rows.size(); ++i)
    reps.row(static_cast<int>(i)) = tau.row(rep_rows[i]);
  return reps;
}

Stage1Result train_stage1(const PreferenceDataset& proxy_data, const TabularPolicy& pi_ref,
                          int simplex_dim, const TrainConfig& cfg) {
  return train_stage1_cells(aggregate_dataset(proxy_data), pi_ref, simplex_dim, cfg);
}

Stage1Result train_stage1_population(const DataProcess& g, const TabularPolicy& pi_ref,
                                     int simplex_dim, const TrainConfig& cfg) {
  return train_stage1_cells(population_cells(g), pi_ref, simplex_dim, cfg);
}

Stage2Result train_stage2(const PreferenceDataset& true_data, const FactorizedPolicy& fp,
                          const TabularPolicy& pi_ref, const TrainConfig& cfg) {
  return train_stage2_cells(aggregate_dataset(true_data), fp, pi_ref, cfg);
}

Stage2Result train_stage2_population(const DataProcess& g, const FactorizedPolicy& fp,
                                     const TabularPolicy& pi_ref, const TrainConfig& cfg) {
  return train_stage2_cells(population_cells(g), fp, pi_ref, cfg);
}

TabularResult train_logit_policy(const PreferenceDataset& data, const TabularPolicy& pi_ref,
                                 const TrainConfig& cfg) {
  return train_logit_policy_cells(aggregate_dataset(data), pi_ref, cfg);
}

TabularResult train_logit_policy_population(const DataProcess& g, const TabularPolicy& pi_ref,
                                            const TrainConfig& cfg) {
  return train_logit_policy_cells(population_cells(g), pi_ref, cfg);
}

}  // namespace preflab

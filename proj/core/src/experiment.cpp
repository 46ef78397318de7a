#include "preflab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "preflab/rng.hpp"

namespace preflab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kArmTwoStage = "two_stage";
constexpr const char* kArmScratch = "scratch";

void validate_experiment_config(const ExperimentConfig& cfg) {
  if (!(cfg.beta > 0.0)) throw InvalidInputError("experiment: beta must be positive");
  if (cfg.n_true_grid.empty()) throw InvalidInputError("experiment: empty n_true_grid");
  for (std::size_t i = 0; i < cfg.n_true_grid.size(); ++i) {
    if (cfg.n_true_grid[i] < 0) throw InvalidInputError("experiment: negative n_true entry");
    if (i > 0 && cfg.n_true_grid[i] <= cfg.n_true_grid[i - 1])
      throw InvalidInputError("experiment: n_true_grid must be strictly ascending");
  }
  if (cfg.seeds.empty() && cfg.replicates < 1)
    throw InvalidInputError("experiment: need at least one replicate");
  if (cfg.n_proxy < 1) throw InvalidInputError("experiment: n_proxy must be >= 1");
  if (cfg.threads < 1) throw InvalidInputError("experiment: threads must be >= 1");
  if (cfg.output_dir.empty()) throw InvalidInputError("experiment: empty output_dir");
}

std::vector<std::uint64_t> effective_seeds(const ExperimentConfig& cfg) {
  if (!cfg.seeds.empty()) return cfg.seeds;
  std::vector<std::uint64_t> seeds;
  seeds.reserve(static_cast<std::size_t>(cfg.replicates));
  for (int i = 0; i < cfg.replicates; ++i)
    seeds.push_back(cfg.base_seed + static_cast<std::uint64_t>(i));
  return seeds;
}

TrainConfig stage_config(const TrainConfig& base, double beta, std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.beta = beta;
  cfg.seed = seed;
  cfg.log_path.clear();  // per-cell logs are not part of the experiment outputs
  return cfg;
}

json bounds_for_instance(const InstanceBundle& bundle, const BoundConfig& bc) {
  BoundInputs in;
  in.simplex_dim = bundle.sizes.simplex_dim;
  in.embedding_dim = bc.embedding_dim > 0 ? bc.embedding_dim : bundle.sizes.num_prompts;
  in.epsilon = bc.epsilon;
  in.omega = bc.omega;
  in.l_phi = bundle.certificates.encoding.l_phi;
  in.theta_opnorm = bundle.certificates.encoding.theta_opnorm;
  in.l_pibar = bundle.certificates.lipschitz_diff.estimate;
  in.cov_const = bc.cov_const;
  in.cov_const_prime = bc.cov_const_prime;
  in.n_samples = bc.n_samples;
  try {
    return bounds_record(in);
  } catch (const std::exception& e) {
    return json{{"inputs", bound_inputs_to_json(in)}, {"error", e.what()}};
  }
}

SeedOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedOutcome outcome;
  outcome.seed = seed;
  const InstanceBundle bundle = generate_instance(cfg.sizes, cfg.beta, seed);
  outcome.certificates = bundle.certificates;
  outcome.bounds = bounds_for_instance(bundle, cfg.bounds);

  const DataProcess g_proxy = proxy_process(bundle);
  const DataProcess g_true = true_process(bundle);
  const PreferenceDataset proxy_data = sample_preferences(
      g_proxy, static_cast<std::size_t>(cfg.n_proxy), derive_seed(seed, 10), "proxy");

  TrainConfig s1 = stage_config(cfg.stage1, cfg.beta, derive_seed(seed, 11));
  s1.latent_dim = cfg.sizes.latent_dim;
  Stage1Result stage1 = train_stage1(proxy_data, bundle.pi_ref, cfg.sizes.simplex_dim, s1);
  outcome.stage1_report = stage1.report;

  const WeightedPreferences pop_true = population_cells(g_true);
  const double base_loss =
      dpo_loss_cells(log_rows_of(bundle.true_policy), bundle.pi_ref, pop_true, cfg.beta);

  for (std::size_t ci = 0; ci < cfg.n_true_grid.size(); ++ci) {
    const int n_true = cfg.n_true_grid[ci];
    // Cell draws are keyed by the sample count itself, not the grid index, so
    // refining the grid adds measurements without perturbing existing cells.
    const auto cell_tag = static_cast<std::uint64_t>(n_true);
    PreferenceDataset true_data;
    if (n_true > 0)
      true_data = sample_preferences(g_true, static_cast<std::size_t>(n_true),
                                     derive_seed(seed, 20, cell_tag), "true");

    CurvePoint a;
    a.seed = seed;
    a.arm = kArmTwoStage;
    a.n_true = n_true;
    try {
      AdapterMap adapter = AdapterMap::identity_table(
          distinct_tau_rows(stage1.policy.tau, cfg.stage2.rep_merge_tol), cfg.stage2.rep_merge_tol);
      if (n_true > 0) {
        TrainConfig s2 = stage_config(cfg.stage2, cfg.beta, derive_seed(seed, 21, cell_tag));
        adapter = train_stage2(true_data, stage1.policy, bundle.pi_ref, s2).adapter;
      }
      const TabularPolicy fitted = evaluate_policy_with_adapter(stage1.policy, adapter);
      a.dr_error = d_r(fitted, bundle.true_policy, bundle.pi_ref, cfg.beta);
      a.pop_loss_gap =
          dpo_loss_cells(log_rows_of(fitted), bundle.pi_ref, pop_true, cfg.beta) - base_loss;
    } catch (const TrainingDivergedError&) {
      a.completed = false;
      a.dr_error = std::nan("");
      a.pop_loss_gap = std::nan("");
    }
    outcome.cells.push_back(std::move(a));

    CurvePoint b;
    b.seed = seed;
    b.arm = kArmScratch;
    b.n_true = n_true;
    try {
      TabularPolicy fitted{MatrixXd::Constant(bundle.sizes.num_prompts,
                                              bundle.sizes.num_responses,
                                              1.0 / bundle.sizes.num_responses)};
      if (n_true > 0) {
        TrainConfig s3 = stage_config(cfg.scratch, cfg.beta, derive_seed(seed, 22, cell_tag));
        fitted = train_logit_policy(true_data, bundle.pi_ref, s3).policy;
      }
      b.dr_error = d_r(fitted, bundle.true_policy, bundle.pi_ref, cfg.beta);
      b.pop_loss_gap =
          dpo_loss_cells(log_rows_of(fitted), bundle.pi_ref, pop_true, cfg.beta) - base_loss;
    } catch (const TrainingDivergedError&) {
      b.completed = false;
      b.dr_error = std::nan("");
      b.pop_loss_gap = std::nan("");
    }
    outcome.cells.push_back(std::move(b));
  }
  return outcome;
}

struct Aggregate {
  std::string arm;
  int n_true = 0;
  double mean_dr = 0.0;
  double std_dr = 0.0;
  double mean_gap = 0.0;
  int count = 0;
};

std::vector<Aggregate> aggregate_curves(const ExperimentResult& result) {
  std::vector<Aggregate> aggs;
  for (const char* arm : {kArmScratch, kArmTwoStage}) {
    for (int n : result.config.n_true_grid) {
      Aggregate agg;
      agg.arm = arm;
      agg.n_true = n;
      std::vector<double> vals;
      for (const auto& outcome : result.outcomes) {
        for (const auto& cell : outcome.cells) {
          if (cell.arm == arm && cell.n_true == n && cell.completed) {
            vals.push_back(cell.dr_error);
            agg.mean_gap += cell.pop_loss_gap;
          }
        }
      }
      agg.count = static_cast<int>(vals.size());
      if (agg.count > 0) {
        for (double v : vals) agg.mean_dr += v;
        agg.mean_dr /= agg.count;
        agg.mean_gap /= agg.count;
        if (agg.count > 1) {
          double ss = 0.0;
          for (double v : vals) ss += (v - agg.mean_dr) * (v - agg.mean_dr);
          agg.std_dr = std::sqrt(ss / (agg.count - 1));
        }
      }
      aggs.push_back(std::move(agg));
    }
  }
  return aggs;
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.sizes = InstanceSizes{};  // 24 prompts, 12 responses, N=5, D=2, 6 level sets
  cfg.beta = 1.0;
  cfg.base_seed = 1;
  cfg.replicates = 10;
  // Doubling grid from 100 up to ~1.6M, densified between 100k and 800k where
  // both arms cross the 0.1 recovery threshold.
  cfg.n_true_grid = {0,      100,    400,    1600,   6400,    25600,   51200,  102400,
                     153600, 204800, 307200, 409600, 614400,  819200,  1228800, 1638400};
  cfg.n_proxy = 20000;

  cfg.stage1.learning_rate = 2.0;
  cfg.stage1.max_steps = 4000;
  cfg.stage1.grad_tol = 1e-6;

  cfg.stage2.learning_rate = 2.0;
  cfg.stage2.max_steps = 4000;
  cfg.stage2.grad_tol = 1e-7;

  cfg.scratch.learning_rate = 2.0;
  cfg.scratch.max_steps = 2000;
  cfg.scratch.grad_tol = 1e-7;

  cfg.output_dir = "lab_out";
  cfg.threads = 1;
  return cfg;
}

namespace {

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  auto get = [&j](const char* key, auto fallback) {
    using T = decltype(fallback);
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  };
  base.learning_rate = get("learning_rate", base.learning_rate);
  base.max_steps = get("max_steps", base.max_steps);
  base.grad_tol = get("grad_tol", base.grad_tol);
  base.rep_merge_tol = get("rep_merge_tol", base.rep_merge_tol);
  base.frozen = get("frozen", base.frozen);
  return base;
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"max_steps", cfg.max_steps},
              {"grad_tol", cfg.grad_tol},
              {"rep_merge_tol", cfg.rep_merge_tol},
              {"frozen", cfg.frozen}};
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg = default_experiment_config();
  auto get = [&j](const char* key, auto fallback) {
    using T = decltype(fallback);
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  };
  try {
    if (j.contains("sizes")) {
      const auto& s = j.at("sizes");
      auto gets = [&s](const char* key, int fallback) {
        return s.contains(key) ? s.at(key).get<int>() : fallback;
      };
      cfg.sizes.num_prompts = gets("num_prompts", cfg.sizes.num_prompts);
      cfg.sizes.num_responses = gets("num_responses", cfg.sizes.num_responses);
      cfg.sizes.latent_dim = gets("latent_dim", cfg.sizes.latent_dim);
      cfg.sizes.simplex_dim = gets("simplex_dim", cfg.sizes.simplex_dim);
      cfg.sizes.level_sets = gets("level_sets", cfg.sizes.level_sets);
    }
    cfg.beta = get("beta", cfg.beta);
    cfg.seeds = get("seeds", cfg.seeds);
    cfg.base_seed = get("base_seed", cfg.base_seed);
    cfg.replicates = get("replicates", cfg.replicates);
    cfg.n_true_grid = get("n_true_grid", cfg.n_true_grid);
    cfg.n_proxy = get("n_proxy", cfg.n_proxy);
    if (j.contains("stage1")) cfg.stage1 = train_config_from_json(j.at("stage1"), cfg.stage1);
    if (j.contains("stage2")) cfg.stage2 = train_config_from_json(j.at("stage2"), cfg.stage2);
    if (j.contains("scratch")) cfg.scratch = train_config_from_json(j.at("scratch"), cfg.scratch);
    if (j.contains("bounds")) {
      const auto& b = j.at("bounds");
      auto getb = [&b](const char* key, auto fallback) {
        using T = decltype(fallback);
        return b.contains(key) ? b.at(key).get<T>() : fallback;
      };
      cfg.bounds.embedding_dim = getb("embedding_dim", cfg.bounds.embedding_dim);
      cfg.bounds.cov_const = getb("cov_const", cfg.bounds.cov_const);
      cfg.bounds.cov_const_prime = getb("cov_const_prime", cfg.bounds.cov_const_prime);
      cfg.bounds.epsilon = getb("epsilon", cfg.bounds.epsilon);
      cfg.bounds.omega = getb("omega", cfg.bounds.omega);
      cfg.bounds.n_samples = getb("n_samples", cfg.bounds.n_samples);
    }
    cfg.output_dir = get("output_dir", cfg.output_dir);
    cfg.threads = get("threads", cfg.threads);
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("experiment config: malformed JSON: ") + e.what());
  }
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  return json{{"sizes",
               {{"num_prompts", cfg.sizes.num_prompts},
                {"num_responses", cfg.sizes.num_responses},
                {"latent_dim", cfg.sizes.latent_dim},
                {"simplex_dim", cfg.sizes.simplex_dim},
                {"level_sets", cfg.sizes.level_sets}}},
              {"beta", cfg.beta},
              {"seeds", cfg.seeds},
              {"base_seed", cfg.base_seed},
              {"replicates", cfg.replicates},
              {"n_true_grid", cfg.n_true_grid},
              {"n_proxy", cfg.n_proxy},
              {"stage1", train_config_to_json(cfg.stage1)},
              {"stage2", train_config_to_json(cfg.stage2)},
              {"scratch", train_config_to_json(cfg.scratch)},
              {"bounds",
               {{"embedding_dim", cfg.bounds.embedding_dim},
                {"cov_const", cfg.bounds.cov_const},
                {"cov_const_prime", cfg.bounds.cov_const_prime},
                {"epsilon", cfg.bounds.epsilon},
                {"omega", cfg.bounds.omega},
                {"n_samples", cfg.bounds.n_samples}}},
              {"output_dir", cfg.output_dir},
              {"threads", cfg.threads}};
}

std::vector<CurvePoint> ExperimentResult::points() const {
  std::vector<CurvePoint> pts;
  for (const auto& outcome : outcomes) pts.insert(pts.end(), outcome.cells.begin(), outcome.cells.end());
  std::sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) {
    if (a.seed != b.seed) return a.seed < b.seed;
    if (a.arm != b.arm) return a.arm < b.arm;
    return a.n_true < b.n_true;
  });
  return pts;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  validate_experiment_config(cfg);
  const std::vector<std::uint64_t> seeds = effective_seeds(cfg);

  ExperimentResult result;
  result.config = cfg;
  result.outcomes.resize(seeds.size());

  const int workers = std::min<int>(cfg.threads, static_cast<int>(seeds.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(seeds.size());
  auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        result.outcomes[i] = run_seed(cfg, seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);

  for (const auto& outcome : result.outcomes)
    for (const auto& cell : outcome.cells)
      if (!cell.completed) result.all_cells_completed = false;
  return result;
}

std::string curves_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "seed,arm,n_true,dr_error,pop_loss_gap\n";
  for (const auto& p : result.points())
    out << p.seed << "," << p.arm << "," << p.n_true << "," << format_double(p.dr_error) << ","
        << format_double(p.pop_loss_gap) << "\n";
  return out.str();
}

json experiment_report(const ExperimentResult& result) {
  json per_seed = json::array();
  for (const auto& outcome : result.outcomes) {
    per_seed.push_back({{"seed", outcome.seed},
                        {"certificates", report_to_json(outcome.certificates)},
                        {"stage1",
                         {{"final_loss", outcome.stage1_report.final_loss},
                          {"final_grad_norm", outcome.stage1_report.final_grad_norm},
                          {"steps", outcome.stage1_report.steps},
                          {"converged", outcome.stage1_report.converged}}},
                        {"bounds", outcome.bounds}});
  }
  json aggregates = json::array();
  for (const auto& agg : aggregate_curves(result)) {
    // Sample std needs at least two replicates; report null below that.
    json std_entry = agg.count >= 2 ? json(agg.std_dr) : json(nullptr);
    aggregates.push_back({{"arm", agg.arm},
                          {"n_true", agg.n_true},
                          {"mean_dr_error", agg.mean_dr},
                          {"std_dr_error", std_entry},
                          {"mean_pop_loss_gap", agg.mean_gap},
                          {"cells", agg.count}});
  }
  return json{{"config", experiment_config_to_json(result.config)},
              {"all_cells_completed", result.all_cells_completed},
              {"per_seed", per_seed},
              {"aggregates", aggregates}};
}

std::string curves_svg(const ExperimentResult& result) {
  const std::vector<Aggregate> aggs = aggregate_curves(result);
  const auto& grid = result.config.n_true_grid;
  const int width = 720, height = 480;
  const double left = 80, right = 30, top = 40, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double y_max = 0.0;
  for (const auto& a : aggs) y_max = std::max(y_max, a.mean_dr + a.std_dr);
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.05;

  // Budgets are positioned by grid index: the grid typically spans decades
  // and an index axis keeps every point readable.
  auto x_at = [&](int n) {
    const auto it = std::find(grid.begin(), grid.end(), n);
    const double idx = static_cast<double>(it - grid.begin());
    const double denom = grid.size() > 1 ? static_cast<double>(grid.size() - 1) : 1.0;
    return left + plot_w * idx / denom;
  };
  auto y_at = [&](double v) { return top + plot_h * (1.0 - v / y_max); };

  std::ostringstream svg;
  svg << std::setprecision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">True-preference budget vs reward-metric error</text>\n";

  // Axes.
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = x_at(grid[i]);
    svg << "<line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\"" << x << "\" y2=\""
        << top + plot_h + 5 << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << top + plot_h + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << grid[i]
        << "</text>\n";
  }
  for (int t = 0; t <= 5; ++t) {
    const double v = y_max * t / 5.0;
    const double y = y_at(v);
    svg << "<line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 9 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << std::setprecision(3) << v << std::setprecision(6) << "</text>\n";
  }
  svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << "true-preference samples</text>\n";
  svg << "<text x=\"20\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\""
      << " transform=\"rotate(-90 20 " << top + plot_h / 2 << ")\">sup-norm reward error</text>\n";

  const struct {
    const char* arm;
    const char* color;
    const char* label;
  } series[] = {{kArmTwoStage, "#1f77b4", "proxy + adapter"},
                {kArmScratch, "#d62728", "from scratch"}};
  for (const auto& s : series) {
    std::ostringstream band_top, band_bottom, line;
    for (const auto& agg : aggs) {
      if (agg.arm != s.arm || agg.count == 0) continue;
      const double x = x_at(agg.n_true);
      const double se = agg.count > 1 ? agg.std_dr / std::sqrt(static_cast<double>(agg.count)) : 0.0;
      band_top << x << "," << y_at(std::min(agg.mean_dr + se, y_max)) << " ";
      band_bottom << x << "," << y_at(std::max(agg.mean_dr - se, 0.0)) << " ";
      line << x << "," << y_at(std::min(agg.mean_dr, y_max)) << " ";
    }
    // mean +/- stderr band: top edge forward, bottom edge reversed.
    std::istringstream rev(band_bottom.str());
    std::vector<std::string> pts;
    for (std::string p; rev >> p;) pts.push_back(p);
    std::ostringstream band;
    band << band_top.str();
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) band << *it << " ";
    svg << "<polygon points=\"" << band.str() << "\" fill=\"" << s.color
        << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    svg << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
  }
  // Legend.
  double ly = top + 10;
  for (const auto& s : series) {
    svg << "<line x1=\"" << left + plot_w - 150 << "\" y1=\"" << ly << "\" x2=\""
        << left + plot_w - 120 << "\" y2=\"" << ly << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + plot_w - 114 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
    ly += 18;
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_outputs(const ExperimentResult& result, const std::string& dir) {
  if (result.outcomes.empty() || result.config.n_true_grid.empty())
    throw InvalidInputError("emit_outputs: empty result");
  const std::string csv = curves_csv(result);
  const json report = experiment_report(result);
  const std::string svg = curves_svg(result);

  fs::create_directories(dir);
  const fs::path base(dir);
  auto write = [](const fs::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInputError("emit_outputs: cannot open " + path.string());
    out << contents;
  };
  write(base / "curves.csv", csv);
  write(base / "report.json", report.dump(2) + "\n");
  write(base / "curves.svg", svg);
}

}  // namespace preflab

#include "preflab/instance.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "preflab/rng.hpp"

namespace preflab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMaxAttempts = 100;
constexpr double kMinPairGap = 1e-3;      // hard separation floor for drawn simplex points
constexpr double kRepGap = 0.25;          // target separation of planted class encodings
constexpr double kRepInterior = 0.10;     // coordinate floor keeping encodings off the boundary
constexpr double kThetaSigmaMin = 0.05;   // conditioning floor for the latent map
constexpr double kDecoderSigmaMin = 1e-3; // conditioning floor for the centered decoder
constexpr double kLipschitzMargin = 0.1;  // planted instances stay at <= threshold * margin
constexpr double kRewardSpread = 0.5;     // planted per-class implicit-reward spread
constexpr double kBiasRange = 0.02;       // decoder bias draw range, kept small so class
                                          // structure dominates the logit spread

void validate_sizes(const InstanceSizes& s) {
  if (s.num_prompts < 1 || s.num_responses < 2 || s.latent_dim < 1 || s.simplex_dim < 1 ||
      s.level_sets < 1)
    throw InvalidInputError("generate_instance: all sizes must be positive");
  if (s.level_sets > s.num_prompts)
    throw InvalidInputError("generate_instance: more level sets than prompts");
  if (s.simplex_dim + 1 > s.num_responses)
    throw InvalidInputError("generate_instance: simplex dimension too large for response space");
  if (s.latent_dim > s.num_responses)
    throw InvalidInputError("generate_instance: latent dimension exceeds response count");
  if (s.simplex_dim + 1 > s.latent_dim)
    throw InvalidInputError(
        "generate_instance: full-column-rank latent map requires simplex_dim + 1 <= latent_dim");
}

// Draws `count` simplex points with a minimum pairwise infinity-norm gap and
// every coordinate at least `interior` (points are drawn in the accordingly
// shrunk simplex).  If the requested gap is infeasible for the shape, it is
// halved until the hard floor kMinPairGap is reached.
MatrixXd draw_separated_points(Rng& rng, int count, int dim, int max_attempts, double gap,
                               double interior = 0.0) {
  const double shrink = 1.0 - static_cast<double>(dim) * interior;
  if (shrink <= 0.0)
    throw InvalidInputError("draw_separated_points: interior margin leaves no room");
  for (; gap >= kMinPairGap; gap *= 0.5) {
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      MatrixXd pts(count, dim);
      for (int i = 0; i < count; ++i)
        pts.row(i) =
            (interior + shrink * rng.simplex_uniform(dim).array()).matrix().transpose();
      bool ok = true;
      for (int i = 0; i < count && ok; ++i)
        for (int j = i + 1; j < count && ok; ++j)
          ok = (pts.row(i) - pts.row(j)).cwiseAbs().maxCoeff() >= gap;
      if (ok) return pts;
    }
  }
  throw GenerationFailedError("generate_instance: could not separate simplex points");
}

// Draws `count` points as interior convex combinations of the rows of `hull`,
// separated pairwise in infinity norm.  Mixing toward equal weights keeps a
// barycentric margin from the hull boundary, so the targets stay reachable
// under small perturbations of the hull points.
MatrixXd draw_separated_hull_points(Rng& rng, const MatrixXd& hull, int count, int max_attempts) {
  constexpr double kInteriorMix = 0.9;
  const int m = static_cast<int>(hull.rows());
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    MatrixXd pts(count, hull.cols());
    for (int i = 0; i < count; ++i) {
      VectorXd w = rng.simplex_uniform(m);
      w = (1.0 - kInteriorMix) * w + VectorXd::Constant(m, kInteriorMix / m);
      pts.row(i) = (hull.transpose() * w).transpose();
    }
    bool ok = true;
    for (int i = 0; i < count && ok; ++i)
      for (int j = i + 1; j < count && ok; ++j)
        ok = (pts.row(i) - pts.row(j)).cwiseAbs().maxCoeff() >= kMinPairGap;
    if (ok) return pts;
  }
  throw GenerationFailedError("generate_instance: could not separate adapter targets");
}

double smallest_singular_value(const MatrixXd& m) {
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& sigma = svd.singularValues();
  return sigma.size() ? sigma[sigma.size() - 1] : 0.0;
}

ConditionCheckConfig check_config_for(const InstanceBundle& bundle) {
  ConditionCheckConfig cfg;
  cfg.beta = bundle.beta;
  cfg.seed = derive_seed(bundle.seed, 900);
  return cfg;
}

void refresh_certificates(InstanceBundle& bundle) {
  bundle.certificates = run_condition_checks(bundle.true_policy, bundle.fp,
                                             check_config_for(bundle));
}

void write_text_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("save_bundle: cannot open " + path.string());
  out << contents;
}

json policy_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd policy_from_json(const json& j, const char* who) {
  if (!j.is_array() || j.empty()) throw InvalidInputError(std::string(who) + ": expected matrix");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k)
      m(i, k) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
  return m;
}

}  // namespace

InstanceBundle generate_instance(const InstanceSizes& sizes, double beta, std::uint64_t seed) {
  validate_sizes(sizes);
  if (!(beta > 0.0)) throw InvalidInputError("generate_instance: beta must be positive");

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    InstanceBundle bundle;
    bundle.sizes = sizes;
    bundle.beta = beta;
    bundle.seed = seed;
    bundle.note = "planted";

    const int nx = sizes.num_prompts;
    const int ny = sizes.num_responses;
    const int n = sizes.latent_dim;
    const int d1 = sizes.simplex_dim + 1;
    const int classes = sizes.level_sets;

    // Class assignment: a shuffled prompt order dealt round-robin, so class
    // sizes are as even as possible.  Balanced classes keep every planted
    // level set equally anchored by data; a lone-prompt class would be
    // estimated from a fraction of the samples its siblings get and would
    // dominate the worst-case recovery error for no structural reason.
    Rng part_rng(derive_seed(seed, 1, static_cast<std::uint64_t>(attempt)));
    std::vector<int> order(static_cast<std::size_t>(nx));
    for (int x = 0; x < nx; ++x) order[static_cast<std::size_t>(x)] = x;
    part_rng.shuffle(order);
    std::vector<int> class_of(static_cast<std::size_t>(nx));
    for (int i = 0; i < nx; ++i)
      class_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % classes;

    // Planted encodings: one separated simplex point per class.
    Rng rep_rng(derive_seed(seed, 2, static_cast<std::uint64_t>(attempt)));
    const MatrixXd reps = draw_separated_points(rep_rng, classes, d1, kMaxAttempts, kRepGap, kRepInterior);
    bundle.fp.tau.resize(nx, d1);
    for (int x = 0; x < nx; ++x) bundle.fp.tau.row(x) = reps.row(class_of[static_cast<std::size_t>(x)]);

    // Latent map: columns in the unit ball, redrawn until well conditioned.
    Rng theta_rng(derive_seed(seed, 3, static_cast<std::uint64_t>(attempt)));
    bool theta_ok = false;
    for (int t = 0; t < kMaxAttempts && !theta_ok; ++t) {
      bundle.fp.theta.resize(n, d1);
      for (int c = 0; c < d1; ++c) {
        VectorXd col(n);
        for (int i = 0; i < n; ++i) col[i] = theta_rng.normal();
        const double radius = std::pow(theta_rng.uniform(), 1.0 / static_cast<double>(n));
        const double len = col.norm();
        bundle.fp.theta.col(c) = len > 0.0 ? VectorXd(col * (radius / len)) : VectorXd::Zero(n);
      }
      theta_ok = smallest_singular_value(bundle.fp.theta) >= kThetaSigmaMin;
    }
    if (!theta_ok) continue;

    // Decoder: centered weight full rank, then rescaled so the largest
    // per-class logit spread equals kRewardSpread.  Pinning the implicit
    // reward spread keeps every pairwise win probability well inside (0,1),
    // where Bradley-Terry comparisons stay informative at desk-scale sample
    // counts; an unscaled draw can bury a response pair at near-certain
    // preference and make its reward practically unidentifiable.
    Rng dec_rng(derive_seed(seed, 4, static_cast<std::uint64_t>(attempt)));
    const double weight_scale = 1.0 / std::sqrt(static_cast<double>(n));
    bool dec_ok = false;
    for (int t = 0; t < kMaxAttempts && !dec_ok; ++t) {
      bundle.fp.decoder.weight.resize(ny, n);
      for (int i = 0; i < ny; ++i)
        for (int k = 0; k < n; ++k) bundle.fp.decoder.weight(i, k) = weight_scale * dec_rng.normal();
      bundle.fp.decoder.bias.resize(ny);
      for (int i = 0; i < ny; ++i) bundle.fp.decoder.bias[i] = dec_rng.uniform(-kBiasRange, kBiasRange);
      double spread = 0.0;
      for (int c = 0; c < classes; ++c) {
        const VectorXd logits =
            bundle.fp.decoder.weight * (bundle.fp.theta * reps.row(c).transpose()) +
            bundle.fp.decoder.bias;
        spread = std::max(spread, logits.maxCoeff() - logits.minCoeff());
      }
      if (spread < 1e-6) continue;
      const double gamma = kRewardSpread / spread;
      bundle.fp.decoder.weight *= gamma;
      bundle.fp.decoder.bias *= gamma;
      const InjectivityCertificate cert = decoder_injectivity(bundle.fp.decoder);
      dec_ok = cert.injective && cert.sigma_min >= kDecoderSigmaMin;
    }
    if (!dec_ok) continue;

    // Planted adapter: separated target encodings per class, drawn strictly
    // inside the convex hull of the planted encodings.  Any factorization
    // whose image covers the proxy rows then also covers the true rows, so
    // the two-stage recovery target stays expressible after a fresh Stage-1
    // fit rather than only under the planted components.
    Rng adapter_rng(derive_seed(seed, 5, static_cast<std::uint64_t>(attempt)));
    const MatrixXd adapted =
        draw_separated_hull_points(adapter_rng, reps, classes, kMaxAttempts);
    bundle.planted_adapter = AdapterMap{AdapterTable{reps, adapted, 1e-9}};

    bundle.prompt_dist = VectorXd::Constant(nx, 1.0 / static_cast<double>(nx));
    bundle.pi_ref =
        TabularPolicy{MatrixXd::Constant(nx, ny, 1.0 / static_cast<double>(ny))};
    bundle.proxy_policy = evaluate_policy(bundle.fp);
    bundle.true_policy = evaluate_policy_with_adapter(bundle.fp, bundle.planted_adapter);
    bundle.proxy_reward = implicit_reward(bundle.proxy_policy, bundle.pi_ref, beta);
    bundle.true_reward = implicit_reward(bundle.true_policy, bundle.pi_ref, beta);

    refresh_certificates(bundle);
    const bool margin_ok = bundle.certificates.lipschitz_diff.estimate <=
                           bundle.certificates.lipschitz_diff.threshold * kLipschitzMargin;
    if (bundle.certificates.overall && margin_ok) return bundle;
  }
  throw GenerationFailedError("generate_instance: no certified instance after " +
                              std::to_string(kMaxAttempts) + " attempts");
}

InstanceBundle break_condition(const InstanceBundle& bundle, int which, std::uint64_t seed) {
  if (which != 1 && which != 2 && which != 4)
    throw InvalidInputError("break_condition: `which` must be 1, 2 or 4");
  if (bundle.certificates.overall == false)
    throw InvalidInputError("break_condition: the source bundle must be certified");
  const LevelSetIndex ls = build_level_sets(bundle.fp);
  if (ls.num_classes() < 2)
    throw InvalidInputError("break_condition: need at least two level sets to perturb");

  Rng rng(derive_seed(seed, 700, static_cast<std::uint64_t>(which)));
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    InstanceBundle fixture = bundle;
    fixture.note = "break-" + std::to_string(which);

    const int a = rng.uniform_int(ls.num_classes());
    int b = rng.uniform_int(ls.num_classes());
    if (b == a) b = (a + 1) % ls.num_classes();

    if (which == 1) {
      // Merge two target level sets that the proxy keeps apart.
      const int src = ls.members[static_cast<std::size_t>(a)].front();
      for (int x : ls.members[static_cast<std::size_t>(b)])
        fixture.true_policy.table.row(x) = bundle.true_policy.table.row(src);
    } else if (which == 2) {
      // Blend one class's target row toward uniform: still a valid
      // distribution, no longer on the decoder's image manifold.
      const double mix = rng.uniform(0.35, 0.65);
      const int ny = bundle.sizes.num_responses;
      for (int x : ls.members[static_cast<std::size_t>(a)]) {
        fixture.true_policy.table.row(x) =
            (1.0 - mix) * bundle.true_policy.table.row(x) +
            mix * Eigen::RowVectorXd::Constant(ny, 1.0 / static_cast<double>(ny));
      }
    } else {
      // Drag class b's encoding almost onto class a's: proxy rows nearly
      // collide while target rows stay apart, blowing up the re-mapping's
      // Lipschitz ratio.  Adapter representatives track the encodings, so
      // the planted target rows are untouched.
      bool done = false;
      for (double delta = 1e-4; delta >= 1e-9 && !done; delta *= 0.1) {
        InstanceBundle candidate = fixture;
        const Eigen::RowVectorXd pa = ls.representatives.row(a);
        const Eigen::RowVectorXd pb = ls.representatives.row(b);
        const Eigen::RowVectorXd moved = pa + delta * (pb - pa);
        for (int x : ls.members[static_cast<std::size_t>(b)]) candidate.fp.tau.row(x) = moved;
        AdapterTable& table = candidate.planted_adapter.table();
        const int rep_row = table.find(pb.transpose());
        if (rep_row < 0)
          throw InternalConsistencyError("break_condition: adapter lost a representative");
        table.reps.row(rep_row) = moved;
        candidate.proxy_policy = evaluate_policy(candidate.fp);
        candidate.proxy_reward =
            implicit_reward(candidate.proxy_policy, candidate.pi_ref, candidate.beta);
        refresh_certificates(candidate);
        const auto& c = candidate.certificates;
        if (c.shared_level_sets.pass && c.image_inclusion.pass && c.encoding.injective &&
            !c.lipschitz_diff.pass &&
            c.lipschitz_diff.estimate > 10.0 * c.lipschitz_diff.threshold) {
          fixture = std::move(candidate);
          done = true;
        }
      }
      if (!done) continue;
      return fixture;
    }

    fixture.true_reward = implicit_reward(fixture.true_policy, fixture.pi_ref, fixture.beta);
    refresh_certificates(fixture);
    const auto& c = fixture.certificates;
    const bool target_failed = which == 1 ? !c.shared_level_sets.pass : !c.image_inclusion.pass;
    const bool others_pass = (which == 1 ? c.image_inclusion.pass : c.shared_level_sets.pass) &&
                             c.encoding.injective && c.lipschitz_diff.pass;
    if (target_failed && others_pass) return fixture;
  }
  throw FixtureInvalidError("break_condition: no clean single-condition fixture after " +
                            std::to_string(kMaxAttempts) + " attempts");
}

DataProcess proxy_process(const InstanceBundle& bundle) {
  return DataProcess::checked(bundle.prompt_dist, bundle.pi_ref, bundle.proxy_reward);
}

DataProcess true_process(const InstanceBundle& bundle) {
  return DataProcess::checked(bundle.prompt_dist, bundle.pi_ref, bundle.true_reward);
}

void save_bundle(const InstanceBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path base(dir);

  json manifest = {{"version", 1},
                   {"note", bundle.note},
                   {"seed", bundle.seed},
                   {"beta", bundle.beta},
                   {"sizes",
                    {{"num_prompts", bundle.sizes.num_prompts},
                     {"num_responses", bundle.sizes.num_responses},
                     {"latent_dim", bundle.sizes.latent_dim},
                     {"simplex_dim", bundle.sizes.simplex_dim},
                     {"level_sets", bundle.sizes.level_sets}}}};
  write_text_file(base / "manifest.json", manifest.dump(2) + "\n");

  save_checkpoint(bundle.fp, (base / "checkpoint.json").string());
  save_adapter(bundle.planted_adapter, (base / "adapter.json").string());

  json policies = {{"pi_ref", policy_to_json(bundle.pi_ref.table)},
                   {"proxy_policy", policy_to_json(bundle.proxy_policy.table)},
                   {"true_policy", policy_to_json(bundle.true_policy.table)},
                   {"prompt_dist", policy_to_json(bundle.prompt_dist.transpose())}};
  write_text_file(base / "policies.json", policies.dump(2) + "\n");

  std::ostringstream rewards;
  rewards << "x,y,proxy_reward,true_reward\n" << std::setprecision(17);
  for (int x = 0; x < bundle.proxy_reward.values.rows(); ++x)
    for (int y = 0; y < bundle.proxy_reward.values.cols(); ++y)
      rewards << x << "," << y << "," << bundle.proxy_reward.values(x, y) << ","
              << bundle.true_reward.values(x, y) << "\n";
  write_text_file(base / "rewards.csv", rewards.str());

  write_text_file(base / "certificates.json", report_to_json(bundle.certificates).dump(2) + "\n");
}

InstanceBundle load_bundle(const std::string& dir) {
  const fs::path base(dir);
  auto read_json = [](const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("load_bundle: cannot open " + path.string());
    try {
      return json::parse(in);
    } catch (const json::exception& e) {
      throw InvalidInputError("load_bundle: malformed " + path.string() + ": " + e.what());
    }
  };

  InstanceBundle bundle;
  const json manifest = read_json(base / "manifest.json");
  try {
    if (manifest.at("version").get<int>() != 1)
      throw InvalidInputError("load_bundle: unsupported manifest version");
    bundle.note = manifest.at("note").get<std::string>();
    bundle.seed = manifest.at("seed").get<std::uint64_t>();
    bundle.beta = manifest.at("beta").get<double>();
    const auto& s = manifest.at("sizes");
    bundle.sizes.num_prompts = s.at("num_prompts").get<int>();
    bundle.sizes.num_responses = s.at("num_responses").get<int>();
    bundle.sizes.latent_dim = s.at("latent_dim").get<int>();
    bundle.sizes.simplex_dim = s.at("simplex_dim").get<int>();
    bundle.sizes.level_sets = s.at("level_sets").get<int>();
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("load_bundle: malformed manifest: ") + e.what());
  }

  bundle.fp = load_checkpoint((base / "checkpoint.json").string());
  bundle.planted_adapter = load_adapter((base / "adapter.json").string());

  const json policies = read_json(base / "policies.json");
  bundle.pi_ref = TabularPolicy::checked(policy_from_json(policies.at("pi_ref"), "load_bundle"));
  bundle.proxy_policy =
      TabularPolicy::checked(policy_from_json(policies.at("proxy_policy"), "load_bundle"));
  bundle.true_policy =
      TabularPolicy::checked(policy_from_json(policies.at("true_policy"), "load_bundle"));
  const MatrixXd pd = policy_from_json(policies.at("prompt_dist"), "load_bundle");
  bundle.prompt_dist = pd.row(0).transpose();

  // Rewards: simple CSV with a fixed header.
  std::ifstream rewards(base / "rewards.csv");
  if (!rewards) throw InvalidInputError("load_bundle: cannot open rewards.csv");
  std::string line;
  if (!std::getline(rewards, line) || line != "x,y,proxy_reward,true_reward")
    throw InvalidInputError("load_bundle: unexpected rewards.csv header");
  MatrixXd proxy_values(bundle.sizes.num_prompts, bundle.sizes.num_responses);
  MatrixXd true_values(bundle.sizes.num_prompts, bundle.sizes.num_responses);
  proxy_values.setConstant(std::nan(""));
  true_values.setConstant(std::nan(""));
  while (std::getline(rewards, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    int x = 0, y = 0;
    double pr = 0.0, tr = 0.0;
    try {
      std::getline(row, field, ',');
      x = std::stoi(field);
      std::getline(row, field, ',');
      y = std::stoi(field);
      std::getline(row, field, ',');
      pr = std::stod(field);
      std::getline(row, field, ',');
      tr = std::stod(field);
    } catch (const std::exception&) {
      throw InvalidInputError("load_bundle: malformed rewards.csv row: " + line);
    }
    if (x < 0 || x >= proxy_values.rows() || y < 0 || y >= proxy_values.cols())
      throw InvalidInputError("load_bundle: rewards.csv index out of range");
    proxy_values(x, y) = pr;
    true_values(x, y) = tr;
  }
  if (!proxy_values.allFinite() || !true_values.allFinite())
    throw InvalidInputError("load_bundle: rewards.csv does not cover the full table");
  bundle.proxy_reward = RewardTable::checked(proxy_values, bundle.beta);
  bundle.true_reward = RewardTable::checked(true_values, bundle.beta);

  bundle.certificates = report_from_json(read_json(base / "certificates.json"));
  return bundle;
}

}  // namespace preflab

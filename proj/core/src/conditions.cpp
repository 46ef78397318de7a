#include "preflab/conditions.hpp"

#include <algorithm>
#include <cmath>

#include "preflab/rng.hpp"

namespace preflab {

using nlohmann::json;

SharedLevelSetReport check_shared_level_sets(const TabularPolicy& p1, const TabularPolicy& p2,
                                             double tol) {
  if (p1.num_prompts() != p2.num_prompts() || p1.num_responses() != p2.num_responses())
    throw InvalidInputError("check_shared_level_sets: policy shape mismatch");
  SharedLevelSetReport report;
  report.pass = true;
  for (int a = 0; a < p1.num_prompts(); ++a) {
    for (int b = a + 1; b < p1.num_prompts(); ++b) {
      const double gap1 = (p1.table.row(a) - p1.table.row(b)).cwiseAbs().maxCoeff();
      const double gap2 = (p2.table.row(a) - p2.table.row(b)).cwiseAbs().maxCoeff();
      const bool same1 = gap1 <= tol;
      const bool same2 = gap2 <= tol;
      if (same1 == same2) continue;
      report.pass = false;
      // The "violation" is how strongly the splitting policy separates a
      // pair the other policy merges; keep the worst one.
      const double separation = same1 ? gap2 : gap1;
      if (separation > report.worst_violation) {
        report.worst_violation = separation;
        report.x1 = a;
        report.x2 = b;
        report.direction = same1 ? "p1" : "p2";
      }
    }
  }
  return report;
}

ImageInclusionReport check_image_inclusion(const TabularPolicy& target, const FactorizedPolicy& fp,
                                           double tol) {
  validate_factorized(fp);
  if (target.num_prompts() != fp.num_prompts() || target.num_responses() != fp.num_responses())
    throw InvalidInputError("check_image_inclusion: policy shape mismatch");
  ImageInclusionReport report;
  report.all_latents_in_image = true;
  for (int x = 0; x < target.num_prompts(); ++x) {
    const DecoderInversion inv = invert_decoder(fp.decoder, target.row(x));
    if (inv.residual > report.worst_residual) {
      report.worst_residual = inv.residual;
      report.worst_prompt = x;
    }
    if (!latent_in_image(fp.theta, inv.v, tol)) report.all_latents_in_image = false;
  }
  report.pass = report.worst_residual <= tol && report.all_latents_in_image;

  const TabularPolicy proxy = evaluate_policy(fp);
  report.exact_row_inclusion = true;
  for (int x = 0; x < target.num_prompts(); ++x) {
    bool matched = false;
    for (int z = 0; z < proxy.num_prompts() && !matched; ++z)
      matched = (target.table.row(x) - proxy.table.row(z)).cwiseAbs().maxCoeff() <= tol;
    if (!matched) {
      report.exact_row_inclusion = false;
      break;
    }
  }
  return report;
}

namespace {

constexpr double kLipschitzClamp = 1e300;  // keeps the estimate JSON-representable

// Ratio estimate over level-set class pairs using each class's first member;
// does not require the target to be constant on classes.
double lipschitz_over_classes(const TabularPolicy& target, const TabularPolicy& proxy,
                              const LevelSetIndex& ls) {
  double estimate = 0.0;
  for (int i = 0; i < ls.num_classes(); ++i) {
    for (int j = i + 1; j < ls.num_classes(); ++j) {
      const int xi = ls.members[static_cast<std::size_t>(i)].front();
      const int xj = ls.members[static_cast<std::size_t>(j)].front();
      const double num = d_py(target.row(xi), target.row(xj), 1.0);
      const double den = d_py(proxy.row(xi), proxy.row(xj), 1.0);
      if (num == 0.0) continue;
      estimate = std::max(estimate, den > 0.0 ? std::min(num / den, kLipschitzClamp)
                                              : kLipschitzClamp);
    }
  }
  return estimate;
}

}  // namespace

double estimate_lipschitz_diff(const TabularPolicy& target, const FactorizedPolicy& fp,
                               const LevelSetIndex& ls, double tol) {
  validate_factorized(fp);
  if (target.num_prompts() != fp.num_prompts())
    throw InvalidInputError("estimate_lipschitz_diff: policy shape mismatch");
  if (ls.class_of.size() != static_cast<std::size_t>(fp.num_prompts()))
    throw InvalidInputError("estimate_lipschitz_diff: level-set index does not cover prompts");
  for (const auto& members : ls.members) {
    const int first = members.front();
    for (int x : members) {
      if ((target.table.row(x) - target.table.row(first)).cwiseAbs().maxCoeff() > tol)
        throw IllDefinedMapError(
            "estimate_lipschitz_diff: target is not constant on a level set (prompts " +
            std::to_string(first) + ", " + std::to_string(x) + ")");
    }
  }
  return lipschitz_over_classes(target, evaluate_policy(fp), ls);
}

ConditionReport run_condition_checks(const TabularPolicy& target, const FactorizedPolicy& fp,
                                     const ConditionCheckConfig& cfg) {
  validate_factorized(fp);
  if (!(cfg.beta > 0.0)) throw InvalidInputError("run_condition_checks: beta must be positive");
  ConditionReport report;
  const TabularPolicy proxy = evaluate_policy(fp);
  report.shared_level_sets = check_shared_level_sets(proxy, target, cfg.level_set_tol);
  report.image_inclusion = check_image_inclusion(target, fp, cfg.inclusion_tol);

  const InjectivityCertificate cert = decoder_injectivity(fp.decoder);
  const LipschitzEstimate est =
      decoder_lipschitz_estimate(fp.decoder, fp.theta, cfg.beta, cfg.lphi_samples, cfg.seed);
  report.encoding.simplex_dim = fp.simplex_dim();
  report.encoding.injective = cert.injective;
  report.encoding.sigma_min = cert.sigma_min;
  report.encoding.l_phi = est.l_phi;
  report.encoding.l_phi_inv = est.l_phi_inv;
  Eigen::JacobiSVD<MatrixXd> svd(fp.theta);
  report.encoding.theta_opnorm = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;

  const LevelSetIndex ls = build_level_sets(fp, cfg.level_set_tol);
  report.lipschitz_diff.estimate = lipschitz_over_classes(target, proxy, ls);
  report.lipschitz_diff.threshold = cfg.lipschitz_threshold;
  report.lipschitz_diff.pass = report.lipschitz_diff.estimate <= cfg.lipschitz_threshold;

  report.overall = report.shared_level_sets.pass && report.image_inclusion.pass &&
                   report.encoding.injective && report.lipschitz_diff.pass;
  return report;
}

json report_to_json(const ConditionReport& r) {
  return json{
      {"shared_level_sets",
       {{"pass", r.shared_level_sets.pass},
        {"worst_violation", r.shared_level_sets.worst_violation},
        {"x1", r.shared_level_sets.x1},
        {"x2", r.shared_level_sets.x2},
        {"direction", r.shared_level_sets.direction}}},
      {"image_inclusion",
       {{"pass", r.image_inclusion.pass},
        {"worst_residual", r.image_inclusion.worst_residual},
        {"worst_prompt", r.image_inclusion.worst_prompt},
        {"all_latents_in_image", r.image_inclusion.all_latents_in_image},
        {"exact_row_inclusion", r.image_inclusion.exact_row_inclusion}}},
      {"encoding",
       {{"simplex_dim", r.encoding.simplex_dim},
        {"injective", r.encoding.injective},
        {"sigma_min", r.encoding.sigma_min},
        {"l_phi", r.encoding.l_phi},
        {"l_phi_inv", r.encoding.l_phi_inv},
        {"theta_opnorm", r.encoding.theta_opnorm}}},
      {"lipschitz_diff",
       {{"estimate", r.lipschitz_diff.estimate},
        {"threshold", r.lipschitz_diff.threshold},
        {"pass", r.lipschitz_diff.pass}}},
      {"overall", r.overall}};
}

ConditionReport report_from_json(const json& j) {
  ConditionReport r;
  try {
    const auto& s = j.at("shared_level_sets");
    r.shared_level_sets.pass = s.at("pass").get<bool>();
    r.shared_level_sets.worst_violation = s.at("worst_violation").get<double>();
    r.shared_level_sets.x1 = s.at("x1").get<int>();
    r.shared_level_sets.x2 = s.at("x2").get<int>();
    r.shared_level_sets.direction = s.at("direction").get<std::string>();
    const auto& i = j.at("image_inclusion");
    r.image_inclusion.pass = i.at("pass").get<bool>();
    r.image_inclusion.worst_residual = i.at("worst_residual").get<double>();
    r.image_inclusion.worst_prompt = i.at("worst_prompt").get<int>();
    r.image_inclusion.all_latents_in_image = i.at("all_latents_in_image").get<bool>();
    r.image_inclusion.exact_row_inclusion = i.at("exact_row_inclusion").get<bool>();
    const auto& e = j.at("encoding");
    r.encoding.simplex_dim = e.at("simplex_dim").get<int>();
    r.encoding.injective = e.at("injective").get<bool>();
    r.encoding.sigma_min = e.at("sigma_min").get<double>();
    r.encoding.l_phi = e.at("l_phi").get<double>();
    r.encoding.l_phi_inv = e.at("l_phi_inv").get<double>();
    r.encoding.theta_opnorm = e.at("theta_opnorm").get<double>();
    const auto& l = j.at("lipschitz_diff");
    r.lipschitz_diff.estimate = l.at("estimate").get<double>();
    r.lipschitz_diff.threshold = l.at("threshold").get<double>();
    r.lipschitz_diff.pass = l.at("pass").get<bool>();
    r.overall = j.at("overall").get<bool>();
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("report_from_json: malformed report: ") + e.what());
  }
  return r;
}

}  // namespace preflab

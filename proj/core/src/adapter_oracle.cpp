#include "preflab/adapter_oracle.hpp"

#include <cmath>
#include <string>

namespace preflab {

LevelSetIndex build_level_sets(const FactorizedPolicy& fp, double tol) {
  validate_factorized(fp);
  if (!(tol >= 0.0)) throw InvalidInputError("build_level_sets: tolerance must be >= 0");
  LevelSetIndex ls;
  ls.tol = tol;
  ls.class_of.assign(static_cast<std::size_t>(fp.num_prompts()), -1);
  std::vector<int> rep_prompt;
  for (int x = 0; x < fp.num_prompts(); ++x) {
    int found = -1;
    for (std::size_t c = 0; c < rep_prompt.size(); ++c) {
      if ((fp.tau.row(x) - fp.tau.row(rep_prompt[c])).cwiseAbs().maxCoeff() <= tol) {
        found = static_cast<int>(c);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(rep_prompt.size());
      rep_prompt.push_back(x);
      ls.members.emplace_back();
    }
    ls.class_of[static_cast<std::size_t>(x)] = found;
    ls.members[static_cast<std::size_t>(found)].push_back(x);
  }
  ls.representatives.resize(static_cast<int>(rep_prompt.size()), fp.tau.cols());
  for (std::size_t c = 0; c < rep_prompt.size(); ++c)
    ls.representatives.row(static_cast<int>(c)) = fp.tau.row(rep_prompt[c]);
  return ls;
}

int PsiMap::find(const VectorXd& p) const {
  for (int i = 0; i < reps.rows(); ++i)
    if ((reps.row(i).transpose() - p).cwiseAbs().maxCoeff() <= match_tol) return i;
  return -1;
}

PsiMap build_psi(const TabularPolicy& target, const FactorizedPolicy& fp, const LevelSetIndex& ls,
                 double tol) {
  validate_factorized(fp);
  if (target.num_prompts() != fp.num_prompts() || target.num_responses() != fp.num_responses())
    throw InvalidInputError("build_psi: target policy shape mismatch");
  if (ls.class_of.size() != static_cast<std::size_t>(fp.num_prompts()))
    throw InvalidInputError("build_psi: level-set index does not cover the prompt space");

  PsiMap psi;
  psi.reps = ls.representatives;
  psi.match_tol = ls.tol;
  psi.latents.resize(ls.num_classes(), fp.latent_dim());
  for (int c = 0; c < ls.num_classes(); ++c) {
    const auto& members = ls.members[static_cast<std::size_t>(c)];
    const int first = members.front();
    // The target must be constant on the class, otherwise no single latent
    // can represent it and the level-set map is ill-defined.
    for (int x : members) {
      const double gap = (target.table.row(x) - target.table.row(first)).cwiseAbs().maxCoeff();
      if (gap > tol)
        throw Condition1Violation("build_psi: target policy differs on prompts " +
                                  std::to_string(first) + " and " + std::to_string(x) +
                                  " of the same level set (gap " + std::to_string(gap) + ")");
    }
    const DecoderInversion inv = invert_decoder(fp.decoder, target.row(first));
    if (inv.residual > tol)
      throw Condition2Violation("build_psi: target row for prompt " + std::to_string(first) +
                                " is outside the decoder image (residual " +
                                std::to_string(inv.residual) + ")");
    if (!latent_in_image(fp.theta, inv.v, tol))
      throw Condition2Violation("build_psi: inverted latent for prompt " + std::to_string(first) +
                                " falls outside the encoded simplex image");
    psi.latents.row(c) = inv.v.transpose();
  }
  return psi;
}

geometry::SimplexPoint centroid_adapter_point(const MatrixXd& theta, const VectorXd& v) {
  if (v.size() != theta.rows()) throw InvalidInputError("centroid_adapter_point: size mismatch");
  // Consistency guard: v must lie in the column span of theta, or the slice
  // right-hand side is unattainable.
  const VectorXd projected = theta * (geometry::pseudoinverse(theta) * v);
  if ((projected - v).cwiseAbs().maxCoeff() > 1e-6)
    throw InternalConsistencyError("centroid_adapter_point: latent target outside theta's span");
  const geometry::PolytopeSlice slice = geometry::enumerate_slice_vertices_rhs(theta, v);
  return geometry::SimplexPoint::checked(geometry::polytope_centroid(slice), 1e-8);
}

geometry::SimplexPoint adapter_at(const VectorXd& p, const PsiMap& psi, const MatrixXd& theta) {
  if (theta.cols() != p.size()) throw InvalidInputError("adapter_at: theta/point size mismatch");
  const int c = psi.find(p);
  if (c < 0)
    throw UndefinedRepresentativeError("adapter_at: point matches no stored representative");
  return centroid_adapter_point(theta, psi.latents.row(c).transpose());
}

AdapterMap build_centroid_adapter(const PsiMap& psi, const MatrixXd& theta) {
  AdapterTable table;
  table.reps = psi.reps;
  table.match_tol = psi.match_tol;
  table.values.resize(psi.size(), psi.reps.cols());
  for (int c = 0; c < psi.size(); ++c)
    table.values.row(c) =
        centroid_adapter_point(theta, psi.latents.row(c).transpose()).coords.transpose();
  return AdapterMap{std::move(table)};
}

double verify_reconstruction(const TabularPolicy& target, const FactorizedPolicy& fp,
                             const AdapterMap& adapter, double beta) {
  if (target.num_prompts() != fp.num_prompts() || target.num_responses() != fp.num_responses())
    throw InvalidInputError("verify_reconstruction: target policy shape mismatch");
  double worst = 0.0;
  for (int x = 0; x < fp.num_prompts(); ++x)
    worst = std::max(worst, d_py(target.row(x), evaluate_with_adapter(fp, adapter, x), beta));
  return worst;
}

}  // namespace preflab

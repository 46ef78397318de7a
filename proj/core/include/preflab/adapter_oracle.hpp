#pragma once

// The constructive adapter: group prompts into level sets of the factorized
// policy's encodings, lift the target policy's rows back through the decoder
// to latent targets (psi), and map each representative encoding to the
// centroid of the simplex slice that solves theta * s = psi.

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "preflab/factorized.hpp"

namespace preflab {

// Partition of prompts by equal tau rows (infinity norm at `tol`), classes
// ordered by first occurrence, lowest-index member as representative.
struct LevelSetIndex {
  std::vector<std::vector<int>> members;  // class -> ascending prompt ids
  std::vector<int> class_of;              // prompt -> class
  MatrixXd representatives;               // class -> tau row
  double tol = 1e-9;

  int num_classes() const { return static_cast<int>(members.size()); }
};

LevelSetIndex build_level_sets(const FactorizedPolicy& fp, double tol = 1e-9);

// Latent target per level-set class: the decoder inversion of the target
// policy's (class-constant) row.  Construction verifies that the target is
// constant on each class (else Condition1Violation) and that every inverted
// latent decodes back within tolerance and lies in the image of the simplex
// under theta (else Condition2Violation).
struct PsiMap {
  MatrixXd reps;     // class -> representative encoding (simplex point)
  MatrixXd latents;  // class -> psi value in latent space
  double match_tol = 1e-9;

  int size() const { return static_cast<int>(reps.rows()); }
  // Index of the representative matching p, or -1.
  int find(const VectorXd& p) const;
};

PsiMap build_psi(const TabularPolicy& target, const FactorizedPolicy& fp, const LevelSetIndex& ls,
                 double tol = 1e-6);

// Centroid of {s in simplex : theta * s = v}.  Throws
// InternalConsistencyError when v is not (numerically) reachable.
geometry::SimplexPoint centroid_adapter_point(const MatrixXd& theta, const VectorXd& v);

// The adapter value at a stored representative p: centroid of the slice
// determined by psi's latent target for p's class.
geometry::SimplexPoint adapter_at(const VectorXd& p, const PsiMap& psi, const MatrixXd& theta);

// Table adapter holding adapter_at for every representative.
AdapterMap build_centroid_adapter(const PsiMap& psi, const MatrixXd& theta);

// max_x of the log-ratio metric between target(.|x) and the adapted
// factorized policy at x.
double verify_reconstruction(const TabularPolicy& target, const FactorizedPolicy& fp,
                             const AdapterMap& adapter, double beta);

}  // namespace preflab

#pragma once

// Simplex and polytope geometry: SVD-backed pseudoinverse and kernel bases,
// vertex enumeration for slices of the standard simplex cut by linear
// equality constraints, simplex volumes in the intrinsic dimension of the
// affine hull, and volume-weighted centroids of convex vertex sets.

#include <Eigen/Dense>
#include <vector>

#include "preflab/errors.hpp"

namespace preflab::geometry {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRankTol = 1e-10;       // relative to the largest singular value
inline constexpr double kFeasibilityTol = 1e-9; // constraint satisfaction for vertices
inline constexpr double kDedupTol = 1e-9;       // infinity-norm vertex deduplication

// A point of the standard simplex {s >= 0, sum s = 1}.  Construction
// validates the sum to `tol` and clamps coordinates in [-tol, 0) to zero.
struct SimplexPoint {
  VectorXd coords;

  static SimplexPoint checked(VectorXd v, double tol = 1e-12);
  int dim() const { return static_cast<int>(coords.size()) - 1; }  // ambient R^{dim+1}
};

// Vertex set of {s in simplex : constraint * s = constraint * anchor}.
struct PolytopeSlice {
  std::vector<VectorXd> vertices;  // canonically (lexicographically) sorted, deduplicated
  MatrixXd constraint;             // the equality map defining the slice
  VectorXd rhs;                    // right-hand side the vertices satisfy
  int intrinsic_dim = 0;           // affine-hull dimension of the vertex set
};

// Moore-Penrose pseudoinverse with singular values below rank_tol * sigma_max
// treated as zero.  Throws InvalidInputError on non-finite entries.
MatrixXd pseudoinverse(const MatrixXd& m, double rank_tol = kRankTol);

// Numerical rank under the same thresholding rule.
int numerical_rank(const MatrixXd& m, double rank_tol = kRankTol);

// Orthonormal basis of the null space, returned as columns (n x kernel_dim;
// zero columns matrix when the kernel is trivial).
MatrixXd kernel_basis(const MatrixXd& m, double rank_tol = kRankTol);

// All vertices of {s in simplex : constraint * s = rhs}.  The right-hand side
// is given directly; throws InternalConsistencyError when the polytope is
// empty or collapses to nothing representable.
PolytopeSlice enumerate_slice_vertices_rhs(const MatrixXd& constraint, const VectorXd& rhs,
                                           double rank_tol = kRankTol);

// Convenience wrapper: the slice through a feasible anchor point, i.e.
// rhs = constraint * anchor.  The anchor itself need not be a vertex.
PolytopeSlice enumerate_slice_vertices(const SimplexPoint& anchor, const MatrixXd& constraint,
                                       double rank_tol = kRankTol);

// Non-throwing feasibility probe: does {s in simplex : constraint * s = rhs}
// contain a point, at the given constraint-satisfaction tolerance?  Scans
// the same basic solutions as the vertex enumeration but stops at the first
// feasible one.
bool slice_nonempty(const MatrixXd& constraint, const VectorXd& rhs, double feas_tol,
                    double rank_tol = kRankTol);

// J-dimensional volume of the simplex spanned by J+1 vertices, measured in
// the intrinsic coordinates of their affine hull: |det of the projected edge
// matrix| / J!.  A single vertex has volume 1 by convention; degenerate
// inputs give 0.
double simplex_volume(const std::vector<VectorXd>& vertices);

// Volume-weighted centroid of a convex polytope given by its vertices:
// fan triangulation from a base vertex over brute-force-enumerated facets,
// then the volume-weighted average of the simplex centroids.  0- and
// 1-dimensional slices short-circuit to the point / segment midpoint.
VectorXd polytope_centroid(const PolytopeSlice& slice);

// Euclidean projection onto the standard simplex (sort-based).
VectorXd project_to_simplex(const VectorXd& v);

}  // namespace preflab::geometry

#include "preflab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace preflab::geometry {
namespace {

void require_finite(const MatrixXd& m, const char* who) {
  if (!m.allFinite()) throw InvalidInputError(std::string(who) + ": non-finite entries");
}

// Rank threshold: relative to sigma_max, but never below an absolute floor
// when one is given (used for affine-hull dimensions, where vertices are
// only pinned down to the feasibility tolerance).
int rank_from_singular_values(const VectorXd& sigma, double rank_tol, double abs_floor = 0.0) {
  if (sigma.size() == 0) return 0;
  const double cut = std::max(rank_tol * sigma[0], abs_floor);
  int r = 0;
  for (int i = 0; i < sigma.size(); ++i)
    if (sigma[i] > cut) ++r;
  return r;
}

bool lex_less(const VectorXd& a, const VectorXd& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

// Affine-hull dimension of a point set, with an absolute singular-value
// floor of 1e-8 so that feasibility-tolerance noise cannot add dimensions.
int affine_rank(const std::vector<VectorXd>& pts, MatrixXd* basis_out = nullptr) {
  if (pts.size() <= 1) {
    if (basis_out) *basis_out = MatrixXd::Zero(pts.empty() ? 0 : pts[0].size(), 0);
    return 0;
  }
  const int n = static_cast<int>(pts[0].size());
  VectorXd mean = VectorXd::Zero(n);
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  MatrixXd centered(n, static_cast<int>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) centered.col(static_cast<int>(i)) = pts[i] - mean;
  Eigen::JacobiSVD<MatrixXd> svd(centered, Eigen::ComputeFullU);
  const int r = rank_from_singular_values(svd.singularValues(), kRankTol, 1e-8);
  if (basis_out) *basis_out = svd.matrixU().leftCols(r);
  return r;
}

}  // namespace

SimplexPoint SimplexPoint::checked(VectorXd v, double tol) {
  if (v.size() == 0) throw InvalidInputError("SimplexPoint: empty vector");
  if (!v.allFinite()) throw InvalidInputError("SimplexPoint: non-finite entries");
  if (std::abs(v.sum() - 1.0) > tol)
    throw InvalidInputError("SimplexPoint: coordinates sum to " + std::to_string(v.sum()) +
                            ", outside tolerance");
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] < -tol)
      throw InvalidInputError("SimplexPoint: coordinate " + std::to_string(i) + " is negative");
    if (v[i] < 0.0) v[i] = 0.0;
  }
  return SimplexPoint{std::move(v)};
}

MatrixXd pseudoinverse(const MatrixXd& m, double rank_tol) {
  require_finite(m, "pseudoinverse");
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& sigma = svd.singularValues();
  const int r = rank_from_singular_values(sigma, rank_tol);
  VectorXd inv = VectorXd::Zero(sigma.size());
  for (int i = 0; i < r; ++i) inv[i] = 1.0 / sigma[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

int numerical_rank(const MatrixXd& m, double rank_tol) {
  require_finite(m, "numerical_rank");
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  return rank_from_singular_values(svd.singularValues(), rank_tol);
}

MatrixXd kernel_basis(const MatrixXd& m, double rank_tol) {
  require_finite(m, "kernel_basis");
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeFullV);
  const int r = rank_from_singular_values(svd.singularValues(), rank_tol);
  return svd.matrixV().rightCols(m.cols() - r);
}

PolytopeSlice enumerate_slice_vertices_rhs(const MatrixXd& constraint, const VectorXd& rhs,
                                           double rank_tol) {
  require_finite(constraint, "enumerate_slice_vertices");
  if (constraint.cols() == 0) throw InvalidInputError("enumerate_slice_vertices: empty constraint");
  if (rhs.size() != constraint.rows())
    throw InvalidInputError("enumerate_slice_vertices: rhs size mismatch");
  const int d = static_cast<int>(constraint.cols());
  if (d > 24)
    throw InvalidInputError("enumerate_slice_vertices: ambient dimension too large for "
                            "exhaustive support enumeration");

  // Stack the simplex's own equality (coordinates sum to one) under the
  // user constraint; a vertex is a basic feasible solution of the system.
  MatrixXd a(constraint.rows() + 1, d);
  a.topRows(constraint.rows()) = constraint;
  a.bottomRows(1).setOnes();
  VectorXd b(rhs.size() + 1);
  b.head(rhs.size()) = rhs;
  b[rhs.size()] = 1.0;

  std::vector<VectorXd> vertices;
  const std::uint32_t limit = 1u << d;
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    std::vector<int> support;
    for (int i = 0; i < d; ++i)
      if (mask & (1u << i)) support.push_back(i);

    MatrixXd sub(a.rows(), static_cast<int>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) sub.col(static_cast<int>(j)) = a.col(support[j]);

    Eigen::JacobiSVD<MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    // A unique solution on this support requires full column rank; rank-
    // deficient supports are skipped (their vertices appear under smaller
    // supports).
    if (rank_from_singular_values(svd.singularValues(), rank_tol) <
        static_cast<int>(support.size()))
      continue;
    VectorXd x = svd.solve(b);
    if ((sub * x - b).cwiseAbs().maxCoeff() > kFeasibilityTol) continue;
    if (x.minCoeff() < -kFeasibilityTol) continue;

    VectorXd full = VectorXd::Zero(d);
    for (std::size_t j = 0; j < support.size(); ++j)
      full[support[j]] = std::max(x[static_cast<int>(j)], 0.0);

    bool duplicate = false;
    for (const auto& v : vertices) {
      if ((v - full).cwiseAbs().maxCoeff() <= kDedupTol) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) vertices.push_back(std::move(full));
  }

  if (vertices.empty())
    throw InternalConsistencyError("enumerate_slice_vertices: no vertex found; the slice is "
                                   "empty or the right-hand side is inconsistent");

  std::sort(vertices.begin(), vertices.end(), lex_less);
  PolytopeSlice slice;
  slice.vertices = std::move(vertices);
  slice.constraint = constraint;
  slice.rhs = rhs;
  slice.intrinsic_dim = affine_rank(slice.vertices);
  return slice;
}

PolytopeSlice enumerate_slice_vertices(const SimplexPoint& anchor, const MatrixXd& constraint,
                                       double rank_tol) {
  if (constraint.cols() != anchor.coords.size())
    throw InvalidInputError("enumerate_slice_vertices: constraint/anchor size mismatch");
  return enumerate_slice_vertices_rhs(constraint, constraint * anchor.coords, rank_tol);
}

bool slice_nonempty(const MatrixXd& constraint, const VectorXd& rhs, double feas_tol,
                    double rank_tol) {
  require_finite(constraint, "slice_nonempty");
  if (rhs.size() != constraint.rows()) throw InvalidInputError("slice_nonempty: rhs size mismatch");
  const int d = static_cast<int>(constraint.cols());
  if (d == 0 || d > 24) throw InvalidInputError("slice_nonempty: unsupported ambient dimension");

  MatrixXd a(constraint.rows() + 1, d);
  a.topRows(constraint.rows()) = constraint;
  a.bottomRows(1).setOnes();
  VectorXd b(rhs.size() + 1);
  b.head(rhs.size()) = rhs;
  b[rhs.size()] = 1.0;

  const std::uint32_t limit = 1u << d;
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    std::vector<int> support;
    for (int i = 0; i < d; ++i)
      if (mask & (1u << i)) support.push_back(i);
    MatrixXd sub(a.rows(), static_cast<int>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) sub.col(static_cast<int>(j)) = a.col(support[j]);
    Eigen::JacobiSVD<MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (rank_from_singular_values(svd.singularValues(), rank_tol) <
        static_cast<int>(support.size()))
      continue;
    VectorXd x = svd.solve(b);
    if ((sub * x - b).cwiseAbs().maxCoeff() > feas_tol) continue;
    if (x.minCoeff() < -feas_tol) continue;
    return true;
  }
  return false;
}

double simplex_volume(const std::vector<VectorXd>& vertices) {
  if (vertices.empty()) throw InvalidInputError("simplex_volume: no vertices");
  const int j = static_cast<int>(vertices.size()) - 1;
  if (j == 0) return 1.0;
  const int n = static_cast<int>(vertices[0].size());
  for (const auto& v : vertices) {
    if (v.size() != n) throw InvalidInputError("simplex_volume: inconsistent dimensions");
    if (!v.allFinite()) throw InvalidInputError("simplex_volume: non-finite vertex");
  }
  if (j > n) return 0.0;  // more edges than ambient dimensions: necessarily degenerate

  MatrixXd edges(n, j);
  for (int k = 0; k < j; ++k) edges.col(k) = vertices[static_cast<std::size_t>(k + 1)] - vertices[0];
  // |det| of the edge matrix expressed in an orthonormal basis of its span
  // is the product of the R diagonal of a QR factorization.
  Eigen::HouseholderQR<MatrixXd> qr(edges);
  double det = 1.0;
  MatrixXd r = qr.matrixQR().topRows(j).triangularView<Eigen::Upper>();
  for (int k = 0; k < j; ++k) det *= r(k, k);
  double factorial = 1.0;
  for (int k = 2; k <= j; ++k) factorial *= static_cast<double>(k);
  return std::abs(det) / factorial;
}

namespace {

constexpr double kFacetTol = 1e-9;

// All facets of a full-dimensional convex polytope in R^J, as sorted vertex
// index lists: brute force over J-subsets that span a supporting hyperplane.
std::vector<std::vector<int>> enumerate_facets(const std::vector<VectorXd>& pts, int dim) {
  const int m = static_cast<int>(pts.size());
  std::vector<std::vector<int>> facets;
  std::vector<int> subset(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) subset[static_cast<std::size_t>(i)] = i;

  auto consider = [&](const std::vector<int>& s) {
    MatrixXd span(dim - 1, dim);
    for (int k = 1; k < dim; ++k)
      span.row(k - 1) = (pts[static_cast<std::size_t>(s[static_cast<std::size_t>(k)])] -
                         pts[static_cast<std::size_t>(s[0])])
                            .transpose();
    MatrixXd normal_space = kernel_basis(span);
    if (normal_space.cols() != 1) return;  // affinely dependent subset
    VectorXd normal = normal_space.col(0);
    const double offset = normal.dot(pts[static_cast<std::size_t>(s[0])]);
    double lo = 0.0, hi = 0.0;
    for (const auto& p : pts) {
      const double side = normal.dot(p) - offset;
      lo = std::min(lo, side);
      hi = std::max(hi, side);
    }
    if (lo < -kFacetTol && hi > kFacetTol) return;  // cuts through the interior
    std::vector<int> members;
    for (int i = 0; i < m; ++i)
      if (std::abs(normal.dot(pts[static_cast<std::size_t>(i)]) - offset) <= kFacetTol)
        members.push_back(i);
    std::sort(members.begin(), members.end());
    if (std::find(facets.begin(), facets.end(), members) == facets.end())
      facets.push_back(std::move(members));
  };

  // Iterate over all dim-subsets of the m points.
  while (true) {
    consider(subset);
    int k = dim - 1;
    while (k >= 0 && subset[static_cast<std::size_t>(k)] == m - dim + k) --k;
    if (k < 0) break;
    ++subset[static_cast<std::size_t>(k)];
    for (int i = k + 1; i < dim; ++i)
      subset[static_cast<std::size_t>(i)] = subset[static_cast<std::size_t>(i - 1)] + 1;
  }
  return facets;
}

// Triangulates a convex polytope (vertex list in R^dim, affine rank == dim)
// into dim-simplices by fanning from the lexicographically smallest vertex
// over its facets; facets recurse in their own intrinsic coordinates.
// Returns index lists into `pts`.
std::vector<std::vector<int>> triangulate(const std::vector<VectorXd>& pts, int dim) {
  const int m = static_cast<int>(pts.size());
  if (dim <= 0 || m <= 1) return {};
  if (dim == 1) {
    int lo = 0, hi = 0;
    for (int i = 1; i < m; ++i) {
      if (pts[static_cast<std::size_t>(i)][0] < pts[static_cast<std::size_t>(lo)][0]) lo = i;
      if (pts[static_cast<std::size_t>(i)][0] > pts[static_cast<std::size_t>(hi)][0]) hi = i;
    }
    return {{lo, hi}};
  }

  int base = 0;
  for (int i = 1; i < m; ++i)
    if (lex_less(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(base)])) base = i;

  std::vector<std::vector<int>> simplices;
  for (const auto& facet : enumerate_facets(pts, dim)) {
    if (std::find(facet.begin(), facet.end(), base) != facet.end()) continue;
    // Express the facet in intrinsic coordinates of its own hyperplane.
    std::vector<VectorXd> fpts;
    fpts.reserve(facet.size());
    for (int idx : facet) fpts.push_back(pts[static_cast<std::size_t>(idx)]);
    MatrixXd basis;
    const int frank = affine_rank(fpts, &basis);
    if (frank != dim - 1) continue;  // numerically degenerate facet: zero volume anyway
    std::vector<VectorXd> projected;
    projected.reserve(fpts.size());
    for (const auto& p : fpts) projected.push_back(basis.transpose() * (p - fpts[0]));
    for (const auto& sub : triangulate(projected, dim - 1)) {
      std::vector<int> simplex{base};
      for (int local : sub) simplex.push_back(facet[static_cast<std::size_t>(local)]);
      simplices.push_back(std::move(simplex));
    }
  }
  return simplices;
}

}  // namespace

VectorXd polytope_centroid(const PolytopeSlice& slice) {
  if (slice.vertices.empty()) throw InvalidInputError("polytope_centroid: no vertices");
  if (slice.vertices.size() == 1) return slice.vertices[0];
  if (slice.vertices.size() == 2) return 0.5 * (slice.vertices[0] + slice.vertices[1]);

  MatrixXd basis;
  const int dim = affine_rank(slice.vertices, &basis);
  if (dim == 0) return slice.vertices[0];
  if (dim == 1) {
    // Collinear vertex list: centroid of the extreme segment.
    int lo = 0, hi = 0;
    VectorXd coord(slice.vertices.size());
    for (std::size_t i = 0; i < slice.vertices.size(); ++i) {
      coord[static_cast<int>(i)] = basis.col(0).dot(slice.vertices[i] - slice.vertices[0]);
      if (coord[static_cast<int>(i)] < coord[lo]) lo = static_cast<int>(i);
      if (coord[static_cast<int>(i)] > coord[hi]) hi = static_cast<int>(i);
    }
    return 0.5 * (slice.vertices[static_cast<std::size_t>(lo)] +
                  slice.vertices[static_cast<std::size_t>(hi)]);
  }

  std::vector<VectorXd> intrinsic;
  intrinsic.reserve(slice.vertices.size());
  for (const auto& v : slice.vertices) intrinsic.push_back(basis.transpose() * (v - slice.vertices[0]));

  double total_volume = 0.0;
  VectorXd weighted = VectorXd::Zero(slice.vertices[0].size());
  for (const auto& simplex : triangulate(intrinsic, dim)) {
    std::vector<VectorXd> corners;
    corners.reserve(simplex.size());
    for (int idx : simplex) corners.push_back(slice.vertices[static_cast<std::size_t>(idx)]);
    const double vol = simplex_volume(corners);
    VectorXd center = VectorXd::Zero(weighted.size());
    for (const auto& c : corners) center += c;
    center /= static_cast<double>(corners.size());
    total_volume += vol;
    weighted += vol * center;
  }
  if (total_volume <= 0.0)
    throw InternalConsistencyError("polytope_centroid: triangulation produced no volume");
  return weighted / total_volume;
}

VectorXd project_to_simplex(const VectorXd& v) {
  if (v.size() == 0) throw InvalidInputError("project_to_simplex: empty vector");
  if (!v.allFinite()) throw InvalidInputError("project_to_simplex: non-finite entries");
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<double>());
  double running = 0.0, shift = 0.0;
  int support = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    running += u[i];
    const double candidate = (1.0 - running) / static_cast<double>(i + 1);
    if (u[i] + candidate > 0.0) {
      support = static_cast<int>(i + 1);
      shift = candidate;
    }
  }
  VectorXd out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = std::max(v[i] + shift, 0.0);
  // Guard: renormalize away the last-bit drift so rows remain valid inputs
  // for SimplexPoint::checked at its default tolerance.
  out /= out.sum();
  if (support == 0) throw InternalConsistencyError("project_to_simplex: empty support");
  return out;
}

}  // namespace preflab::geometry

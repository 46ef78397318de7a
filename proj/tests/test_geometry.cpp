#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "preflab/geometry.hpp"
#include "preflab/rng.hpp"

using namespace preflab;
using namespace preflab::geometry;

namespace {

// Independent brute-force vertex oracle: a vertex of {s >= 0, A s = b,
// sum s = 1} is a feasible point whose support indexes linearly independent
// columns of the stacked equality system.  Enumerate every coordinate
// subset as a candidate support, solve the restricted system, and keep
// unique, feasible solutions.
std::vector<VectorXd> brute_force_vertices(const MatrixXd& constraint, const VectorXd& rhs) {
  const int n = static_cast<int>(constraint.cols());
  MatrixXd stacked(constraint.rows() + 1, n);
  stacked.topRows(constraint.rows()) = constraint;
  stacked.bottomRows(1).setOnes();
  VectorXd q(rhs.size() + 1);
  q.head(rhs.size()) = rhs;
  q[rhs.size()] = 1.0;

  std::vector<VectorXd> found;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> support;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) support.push_back(i);
    MatrixXd sub(stacked.rows(), support.size());
    for (std::size_t k = 0; k < support.size(); ++k) sub.col(k) = stacked.col(support[k]);
    Eigen::JacobiSVD<MatrixXd> svd(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.rank() < static_cast<int>(support.size())) continue;  // not a basic solution
    VectorXd coeff = svd.solve(q);
    if ((sub * coeff - q).cwiseAbs().maxCoeff() > 1e-9) continue;  // inconsistent support
    VectorXd s = VectorXd::Zero(n);
    for (std::size_t k = 0; k < support.size(); ++k) s[support[k]] = coeff[k];
    if (s.minCoeff() < -1e-9) continue;
    s = s.cwiseMax(0.0);
    bool dup = false;
    for (const auto& v : found)
      if ((v - s).cwiseAbs().maxCoeff() < 1e-8) dup = true;
    if (!dup) found.push_back(s);
  }
  std::sort(found.begin(), found.end(), [](const VectorXd& a, const VectorXd& b) {
    for (int i = 0; i < a.size(); ++i) {
      if (a[i] < b[i] - 1e-12) return true;
      if (a[i] > b[i] + 1e-12) return false;
    }
    return false;
  });
  return found;
}

}  // namespace

TEST_CASE("pseudoinverse satisfies the Moore-Penrose identities") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const int r = 2 + rng.uniform_int(3), c = 2 + rng.uniform_int(3);
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    MatrixXd p = pseudoinverse(m);
    CHECK((m * p * m - m).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((p * m * p - p).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m * p - (m * p).transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((p * m - (p * m).transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("pseudoinverse rejects non-finite input") {
  MatrixXd m = MatrixXd::Zero(2, 2);
  m(0, 0) = std::nan("");
  CHECK_THROWS_AS(pseudoinverse(m), InvalidInputError);
}

TEST_CASE("numerical_rank sees through constructed rank deficiency") {
  Rng rng(11);
  VectorXd a(4), b(4);
  for (int i = 0; i < 4; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  MatrixXd m = a * b.transpose();  // rank one
  CHECK(numerical_rank(m) == 1);
  m += VectorXd::Ones(4) * b.transpose() * 0.5;  // still spanned by b
  CHECK(numerical_rank(m) == 1);
  m(3, 3) += 1.0;
  CHECK(numerical_rank(m) == 2);
}

TEST_CASE("kernel_basis columns are orthonormal null vectors") {
  Rng rng(13);
  MatrixXd m(2, 5);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 5; ++j) m(i, j) = rng.normal();
  MatrixXd k = kernel_basis(m);
  REQUIRE(k.cols() == 3);
  CHECK((m * k).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((k.transpose() * k - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  // full column rank: trivial kernel
  MatrixXd tall(5, 2);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) tall(i, j) = rng.normal();
  CHECK(kernel_basis(tall).cols() == 0);
}

TEST_CASE("SimplexPoint::checked clamps tiny negatives and validates the sum") {
  VectorXd v(3);
  v << 0.5, 0.5 + 1e-13, -1e-13;
  SimplexPoint p = SimplexPoint::checked(v);
  CHECK(p.coords[2] == 0.0);
  CHECK(p.dim() == 2);
  v << 0.6, 0.3, 0.2;  // sums to 1.1
  CHECK_THROWS_AS(SimplexPoint::checked(v), InvalidInputError);
  v << 0.7, 0.5, -0.2;  // genuinely negative coordinate
  CHECK_THROWS_AS(SimplexPoint::checked(v), InvalidInputError);
}

TEST_CASE("vertex enumeration: a one-dimensional slice with a known segment") {
  // {s in simplex of R^3 : s1 + s2 = 2/3, s3 = 1/3} through (1/3, 1/3, 1/3)
  // is the segment between (2/3, 0, 1/3) and (0, 2/3, 1/3).
  MatrixXd constraint(2, 3);
  constraint << 1, 1, 0, 0, 0, 1;
  VectorXd anchor(3);
  anchor << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  PolytopeSlice slice = enumerate_slice_vertices(SimplexPoint::checked(anchor), constraint);
  REQUIRE(slice.vertices.size() == 2);
  CHECK(slice.intrinsic_dim == 1);
  VectorXd v0(3), v1(3);
  v0 << 0.0, 2.0 / 3, 1.0 / 3;
  v1 << 2.0 / 3, 0.0, 1.0 / 3;
  CHECK((slice.vertices[0] - v0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((slice.vertices[1] - v1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vertex enumeration: asymmetric single constraint") {
  // {s1 + 2 s2 = 1} cuts the triangle in the segment (1,0,0) -- (0,1/2,1/2).
  MatrixXd constraint(1, 3);
  constraint << 1, 2, 0;
  VectorXd rhs(1);
  rhs << 1.0;
  PolytopeSlice slice = enumerate_slice_vertices_rhs(constraint, rhs);
  REQUIRE(slice.vertices.size() == 2);
  VectorXd a(3), b(3);
  a << 0.0, 0.5, 0.5;
  b << 1.0, 0.0, 0.0;
  CHECK((slice.vertices[0] - a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((slice.vertices[1] - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vertex enumeration matches the exhaustive coordinate-subset oracle") {
  Rng rng(101);
  for (int t = 0; t < 60; ++t) {
    const int dim = 2 + rng.uniform_int(4);           // simplex dimension D in 2..5
    const int rows = 1 + rng.uniform_int(dim - 1);    // strictly fewer rows than D
    MatrixXd constraint(rows, dim + 1);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j <= dim; ++j) constraint(i, j) = rng.normal();
    VectorXd anchor = rng.simplex_uniform(dim + 1);
    PolytopeSlice slice =
        enumerate_slice_vertices(SimplexPoint::checked(anchor, 1e-9), constraint);
    std::vector<VectorXd> oracle = brute_force_vertices(constraint, constraint * anchor);
    REQUIRE(slice.vertices.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i)
      CHECK((slice.vertices[i] - oracle[i]).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("empty slices are rejected, feasibility probe agrees") {
  MatrixXd constraint(1, 3);
  constraint << 1, 1, 1;
  VectorXd rhs(1);
  rhs << 2.0;  // rows sum to one, so this is unreachable
  CHECK_THROWS_AS(enumerate_slice_vertices_rhs(constraint, rhs), InternalConsistencyError);
  CHECK_FALSE(slice_nonempty(constraint, rhs, 1e-9));
  rhs << 1.0;
  CHECK(slice_nonempty(constraint, rhs, 1e-9));
}

TEST_CASE("simplex_volume reproduces the closed-form standard-simplex volumes") {
  // The d-dimensional standard simplex spanned by e_1..e_{d+1} has intrinsic
  // volume sqrt(d+1)/d!.
  std::vector<VectorXd> verts;
  for (int d : {1, 2, 3}) {
    verts.clear();
    for (int i = 0; i <= d; ++i) {
      VectorXd e = VectorXd::Zero(d + 1);
      e[i] = 1.0;
      verts.push_back(e);
    }
    const double expect = std::sqrt(static_cast<double>(d + 1)) /
                          (d == 1 ? 1.0 : (d == 2 ? 2.0 : 6.0));
    CHECK(simplex_volume(verts) == doctest::Approx(expect).epsilon(1e-12));
  }
  // single vertex: 1 by convention; repeated vertices: degenerate, 0
  VectorXd one = VectorXd::Ones(3) / 3.0;
  CHECK(simplex_volume({one}) == 1.0);
  CHECK(simplex_volume({one, one}) == 0.0);
}

TEST_CASE("polytope_centroid on closed-form slices") {
  // Full triangle: barycenter.
  MatrixXd none(0, 3);
  VectorXd anchor(3);
  anchor << 0.2, 0.3, 0.5;
  PolytopeSlice tri = enumerate_slice_vertices(SimplexPoint::checked(anchor), none);
  REQUIRE(tri.vertices.size() == 3);
  VectorXd c = polytope_centroid(tri);
  CHECK((c - VectorXd::Constant(3, 1.0 / 3)).cwiseAbs().maxCoeff() < 1e-12);

  // Segment {s1 = 0.4}: midpoint (0.4, 0.3, 0.3).
  MatrixXd cut(1, 3);
  cut << 1, 0, 0;
  VectorXd rhs(1);
  rhs << 0.4;
  PolytopeSlice seg = enumerate_slice_vertices_rhs(cut, rhs);
  c = polytope_centroid(seg);
  VectorXd expect(3);
  expect << 0.4, 0.3, 0.3;
  CHECK((c - expect).cwiseAbs().maxCoeff() < 1e-12);

  // 2-d slice of the 3-simplex {s4 = 1/4}: a scaled triangle, centroid
  // (1/4, 1/4, 1/4, 1/4).
  MatrixXd cut4(1, 4);
  cut4 << 0, 0, 0, 1;
  VectorXd rhs4(1);
  rhs4 << 0.25;
  PolytopeSlice tri4 = enumerate_slice_vertices_rhs(cut4, rhs4);
  REQUIRE(tri4.vertices.size() == 3);
  c = polytope_centroid(tri4);
  CHECK((c - VectorXd::Constant(4, 0.25)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("polytope_centroid of an asymmetric quadrilateral slice") {
  // {s in simplex of R^4 : s1 + s2 = 1/2} is a quadrilateral with vertices
  // (1/2,0,*,*) x (0,1/2,*,*).  By the product symmetry the centroid puts
  // 1/4 on each group, split evenly inside each pair.
  MatrixXd cut(1, 4);
  cut << 1, 1, 0, 0;
  VectorXd rhs(1);
  rhs << 0.5;
  PolytopeSlice quad = enumerate_slice_vertices_rhs(cut, rhs);
  REQUIRE(quad.vertices.size() == 4);
  VectorXd c = polytope_centroid(quad);
  CHECK((c - VectorXd::Constant(4, 0.25)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("project_to_simplex satisfies the KKT characterization") {
  // Hand cases first.
  VectorXd v(2);
  v << 2.0, 0.0;
  VectorXd p = project_to_simplex(v);
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(0.0));
  v << 0.6, 0.6;
  p = project_to_simplex(v);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  // Random: the projection is feasible and every positive coordinate shares
  // one common shift v_i - t while zeroed coordinates have v_i <= t.
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    VectorXd x(4);
    for (int i = 0; i < 4; ++i) x[i] = 3.0 * rng.normal();
    VectorXd q = project_to_simplex(x);
    CHECK(q.minCoeff() >= 0.0);
    CHECK(q.sum() == doctest::Approx(1.0).epsilon(1e-12));
    double shift = 0.0;
    int support = 0;
    for (int i = 0; i < 4; ++i)
      if (q[i] > 1e-12) {
        shift += x[i] - q[i];
        ++support;
      }
    shift /= support;
    for (int i = 0; i < 4; ++i) {
      if (q[i] > 1e-12)
        CHECK(std::abs(x[i] - q[i] - shift) < 1e-9);
      else
        CHECK(x[i] <= shift + 1e-9);
    }
  }
}

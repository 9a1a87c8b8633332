#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "quadfield/quadrature.hpp"
#include "quadfield/reftriangle.hpp"
#include "quadfield/trimesh.hpp"

using namespace quadfield;

namespace {

DomainSpec square() {
  return parse_domain(R"({"name":"sq","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[0,0],"p1":[2,0]},{"kind":"line","p0":[2,0],"p1":[2,1]},
    {"kind":"line","p0":[2,1],"p1":[0,1]},{"kind":"line","p0":[0,1],"p1":[0,0]}]}]})");
}

DomainSpec half_disc() {
  return parse_domain(R"({"name":"hd","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[-1,0],"p1":[1,0]},
    {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})");
}

}  // namespace

TEST(Quadrature, GaussLegendreExactness) {
  for (int n = 1; n <= 8; ++n) {
    const auto& g = gauss_legendre(n);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += g.weights[i] * std::pow(g.points[i], k);
      const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
      EXPECT_NEAR(s, exact, 1e-13) << "n=" << n << " k=" << k;
    }
  }
}

TEST(Quadrature, LobattoEndpoints) {
  const auto& g = gauss_lobatto(5);
  EXPECT_DOUBLE_EQ(g.points.front(), -1.0);
  EXPECT_DOUBLE_EQ(g.points.back(), 1.0);
  double s = 0.0;
  for (double w : g.weights) s += w;
  EXPECT_NEAR(s, 2.0, 1e-14);
}

TEST(RefTriangle, NodalBasisIsLagrange) {
  for (int p = 1; p <= 6; ++p) {
    const RefTriangle& r = RefTriangle::get(p);
    EXPECT_EQ(r.num_nodes(), (p + 1) * (p + 2) / 2);
    for (int i = 0; i < r.num_nodes(); ++i) {
      const auto phi = r.basis(r.nodes()[i]);
      for (int j = 0; j < r.num_nodes(); ++j) EXPECT_NEAR(phi[j], i == j ? 1.0 : 0.0, 1e-10);
    }
  }
}

TEST(RefTriangle, QuadratureIntegratesMonomials) {
  // Over {r, s >= -1, r + s <= 0}: substitute a = (r + 1) / 2, b = (s + 1) / 2 on the unit
  // triangle, where the integral of a^i b^j is i! j! / (i + j + 2)!.
  auto fact = [](int n) { return std::tgamma(n + 1.0); };
  const RefTriangle& r = RefTriangle::get(4);
  for (int i = 0; i <= 4; ++i) {
    for (int j = 0; i + j <= 8; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < r.quad_points().size(); ++q) {
        const Vec2 x = r.quad_points()[q];
        s += r.quad_weights()[q] * std::pow((x.x + 1) / 2, i) * std::pow((x.y + 1) / 2, j);
      }
      EXPECT_NEAR(s, 4.0 * fact(i) * fact(j) / fact(i + j + 2), 1e-13) << i << " " << j;
    }
  }
}

TEST(RefTriangle, EdgeNodesRunBetweenVertices) {
  const RefTriangle& r = RefTriangle::get(3);
  for (int k = 0; k < 3; ++k) {
    const auto& e = r.edge_nodes(k);
    ASSERT_EQ(e.size(), 4u);
    EXPECT_EQ(e.front(), r.vertex_node(k));
    EXPECT_EQ(e.back(), r.vertex_node((k + 1) % 3));
  }
}

TEST(TriMesh, StraightMeshCoversSquare) {
  const DomainSpec d = square();
  const TriMesh m = generate_background_mesh(d, 0.3);
  EXPECT_NEAR(mesh_area(m), 2.0, 1e-12);
  for (int e = 0; e < m.num_elements(); ++e) EXPECT_GT(min_jacobian(m, e), 0.0);
  // Euler characteristic of a triangulated disc.
  EXPECT_EQ(static_cast<int>(m.vertices.size()) - m.num_edges() + m.num_elements(), 1);
}

TEST(TriMesh, AffineJacobianIsConstant) {
  const DomainSpec d = square();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.5), 3, d);
  for (int e = 0; e < m.num_elements(); ++e) {
    const double j0 = jacobian(m, e, {-1, -1}).determinant();
    EXPECT_NEAR(jacobian(m, e, {-0.2, -0.5}).determinant(), j0, 1e-12);
    EXPECT_NEAR(jacobian(m, e, {0.0, -1.0}).determinant(), j0, 1e-12);
  }
}

TEST(TriMesh, CurvedBoundaryNodesLieOnArc) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 4, d);
  const RefTriangle& r = m.ref();
  int checked = 0;
  for (const auto& el : m.elements) {
    for (int k = 0; k < 3; ++k) {
      if (!el.edges[k].boundary || el.edges[k].segment.index != 1) continue;
      for (int n : r.edge_nodes(k)) {
        EXPECT_NEAR(norm(el.nodes[n]), 1.0, 1e-12);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 0);
  // Curved elements recover the disc area far better than the chords do.
  EXPECT_NEAR(mesh_area(m), kPi / 2, 1e-6);
}

TEST(TriMesh, InverseMap) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  for (int e = 0; e < m.num_elements(); e += 3) {
    const Vec2 xi{-0.4, -0.3};
    const auto back = invert_map(m, e, map_to_physical(m, e, xi));
    ASSERT_TRUE(back.has_value());
    EXPECT_NEAR(distance(*back, xi), 0.0, 1e-10);
  }
  EXPECT_FALSE(invert_map(m, 0, {10.0, 10.0}).has_value());
}

TEST(TriMesh, JsonRoundTripIsExact) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  const std::string text = mesh_to_json(m);
  const TriMesh back = mesh_from_json(text);
  EXPECT_EQ(mesh_to_json(back), text);
  ASSERT_EQ(back.num_elements(), m.num_elements());
  EXPECT_EQ(back.elements[0].nodes[4], m.elements[0].nodes[4]);
}

TEST(TriMesh, MshRoundTrip) {
  const DomainSpec d = square();
  const TriMesh m = generate_background_mesh(d, 0.4);
  std::stringstream s;
  write_msh(m, s);
  EXPECT_EQ(s.str().rfind("$MeshFormat\n2.2 0 8\n$EndMeshFormat", 0), 0u);
  const TriMesh back = parse_msh(s, d);
  EXPECT_EQ(back.num_elements(), m.num_elements());
  EXPECT_EQ(back.vertices.size(), m.vertices.size());
  EXPECT_NEAR(mesh_area(back), 2.0, 1e-12);
  int tagged = 0;
  for (const auto& el : back.elements)
    for (const auto& t : el.edges) tagged += t.boundary;
  int expected = 0;
  for (const auto& el : m.elements)
    for (const auto& t : el.edges) expected += t.boundary;
  EXPECT_EQ(tagged, expected);
}

TEST(TriMesh, GmshOrderings) {
  const auto tri = gmsh_triangle_ordering(2);
  ASSERT_EQ(tri.size(), 6u);
  EXPECT_EQ(tri[0], (std::array<int, 2>{0, 0}));
  EXPECT_EQ(tri[1], (std::array<int, 2>{2, 0}));
  EXPECT_EQ(tri[2], (std::array<int, 2>{0, 2}));
  EXPECT_EQ(gmsh_quad_ordering(3).size(), 16u);
}

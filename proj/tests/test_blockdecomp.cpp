#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "quadfield/blockdecomp.hpp"
#include "quadfield/error.hpp"

using namespace quadfield;

namespace {

const char* kHalfDisc = R"({"name":"hd","loops":[{"orientation":"outer","segments":[
  {"kind":"line","p0":[-1,0],"p1":[1,0]},
  {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})";

struct Pipeline {
  DomainSpec d;
  TriMesh m;
  FieldSolution s;
  std::unique_ptr<FieldProbe> probe;
  Topology topo;
  TraceResult trace;
};

std::unique_ptr<Pipeline> run(const char* json, double h) {
  auto p = std::make_unique<Pipeline>();
  p->d = parse_domain(json);
  p->m = elevate_and_curve(generate_background_mesh(p->d, h), 3, p->d);
  p->s = solve_laplace(p->m, p->d, guiding_field_bc(p->d), choose_discretization(p->d));
  p->probe = std::make_unique<FieldProbe>(p->m, p->s);
  p->topo = analyze_topology(*p->probe, p->d);
  p->trace = trace_all(p->topo, p->d, *p->probe);
  return p;
}

const Pipeline& half_disc() {
  static const auto p = run(kHalfDisc, 0.5);
  return *p;
}

const BlockDecomposition& half_disc_blocks() {
  static const BlockDecomposition d = decompose(half_disc().d, half_disc().topo, half_disc().trace, *half_disc().probe);
  return d;
}

}  // namespace

TEST(Spline, CatmullRomInterpolates) {
  const std::vector<Vec2> pts = {{0, 0}, {1, 0.2}, {2, 0.1}, {3, 0.5}};
  const auto s = catmull_rom(pts, 4);
  ASSERT_EQ(s.size(), 13u);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(distance(s[4 * i], pts[i]), 0.0, 1e-14);
}

TEST(Split, GradedPoints) {
  const auto u = graded_points(4, 1.0);
  ASSERT_EQ(u.size(), 5u);
  for (int i = 0; i <= 4; ++i) EXPECT_NEAR(u[i], i / 4.0, 1e-15);
  const auto g = graded_points(5, 3.0);
  EXPECT_DOUBLE_EQ(g.front(), 0.0);
  EXPECT_DOUBLE_EQ(g.back(), 1.0);
  EXPECT_NEAR((g[5] - g[4]) / (g[1] - g[0]), 3.0, 1e-12);
  for (int i = 0; i < 5; ++i) EXPECT_LT(g[i], g[i + 1]);
}

TEST(Subdivision, HalfDiscEuler) {
  const Pipeline& p = half_disc();
  const PlanarSubdivision sub = build_subdivision(p.d, p.topo, p.trace.separatrices);
  EXPECT_EQ(sub.euler_characteristic(), 2);
  const FaceClassification fc = classify_faces(sub);
  EXPECT_EQ(fc.quads.size(), sub.faces.size());
  EXPECT_TRUE(fc.triangles.empty());
  double area = 0.0;
  for (const auto& f : sub.faces) area += f.area;
  EXPECT_NEAR(area, p.d.area(), 1e-3);
}

TEST(Blocks, HalfDiscStructure) {
  const BlockDecomposition& d = half_disc_blocks();
  ASSERT_EQ(d.blocks.size(), 4u);
  EXPECT_EQ(d.interior_irregular_nodes(), 2);
  double area = 0.0;
  for (int b = 0; b < 4; ++b) {
    area += d.area(b);
    // Corners of the Coons map are the block corners.
    EXPECT_NEAR(distance(d.map(b, 0, 0), d.blocks[b].corners[0]), 0.0, 1e-9);
    EXPECT_NEAR(distance(d.map(b, 1, 1), d.blocks[b].corners[2]), 0.0, 1e-9);
    for (double s : {0.0, 0.25, 0.5, 1.0})
      for (double t : {0.0, 0.5, 1.0}) EXPECT_GT(d.jacobian(b, s, t), 0.0);
  }
  EXPECT_NEAR(area, kPi / 2, 1e-3);
}

TEST(Blocks, BoundarySidesFollowTheCurve) {
  const BlockDecomposition& d = half_disc_blocks();
  const DomainSpec& dom = half_disc().d;
  for (const auto& side : d.sides) {
    bool on_boundary = !side.pieces.empty();
    for (const auto& piece : side.pieces) on_boundary = on_boundary && piece.on_segment;
    if (!on_boundary) continue;
    for (double u = 0.0; u <= 1.0; u += 0.05) EXPECT_LT(dom.closest_point(side.eval(u)).distance, 1e-10);
  }
}

TEST(Blocks, JsonRoundTrip) {
  const BlockDecomposition& d = half_disc_blocks();
  const std::string text = decomposition_to_json(d);
  const BlockDecomposition back = decomposition_from_json(text, half_disc().d);
  EXPECT_EQ(decomposition_to_json(back), text);
  EXPECT_EQ(back.map(1, 0.3, 0.7), d.map(1, 0.3, 0.7));
}

TEST(Split, UniformSplitIsConforming) {
  const BlockDecomposition& d = half_disc_blocks();
  SplitSpec spec;
  spec.n = 3;
  const QuadMesh m = isoparametric_split(d, spec);
  EXPECT_EQ(m.quads.size(), 9 * d.blocks.size());
  EXPECT_TRUE(mesh_is_conforming(m, half_disc().d));
  EXPECT_EQ(m.euler_characteristic(), 2);  // counts the unbounded face
  QuadMesh broken = m;
  broken.quads.erase(broken.quads.begin() + 4);
  EXPECT_FALSE(mesh_is_conforming(broken, half_disc().d));
}

TEST(Split, HighOrderNodesLieOnTheMap) {
  const BlockDecomposition& d = half_disc_blocks();
  SplitSpec spec;
  spec.n = 2;
  const QuadMesh m = isoparametric_split(d, spec, 3);
  ASSERT_EQ(m.high_order.size(), m.quads.size());
  for (std::size_t q = 0; q < m.quads.size(); ++q) {
    ASSERT_EQ(m.high_order[q].size(), 16u);
    const auto& p = m.param[q];
    EXPECT_NEAR(distance(m.high_order[q][0], d.map(m.block[q], p[0], p[2])), 0.0, 1e-12);
    EXPECT_NEAR(distance(m.high_order[q][15], d.map(m.block[q], p[1], p[3])), 0.0, 1e-12);
  }
}

TEST(Split, GradingMustMatchAcrossSharedSides) {
  const BlockDecomposition& d = half_disc_blocks();
  SplitSpec spec;
  spec.n = 2;
  spec.per_block[0] = {5, 5, 2.0, 2.0};
  try {
    isoparametric_split(d, spec);
    FAIL() << "accepted a non-conforming request";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Decomposition);
  }
}

TEST(Split, MshOutput) {
  const BlockDecomposition& d = half_disc_blocks();
  SplitSpec spec;
  spec.n = 2;
  const QuadMesh m = isoparametric_split(d, spec);
  std::ostringstream o;
  write_quad_msh(m, o);
  std::istringstream in(o.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "$MeshFormat");
  std::getline(in, line);
  EXPECT_EQ(line, "2.2 0 8");
  const auto pos = o.str().find("$Elements\n");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_EQ(std::stoul(o.str().substr(pos + 10)), m.quads.size());
}

TEST(Split, ScaledJacobianOfSquareBlock) {
  const char* square = R"({"name":"sq","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[0,0],"p1":[1,0]},{"kind":"line","p0":[1,0],"p1":[1,1]},
    {"kind":"line","p0":[1,1],"p1":[0,1]},{"kind":"line","p0":[0,1],"p1":[0,0]}]}]})";
  const auto p = run(square, 0.3);
  // A square has no critical points and four V1 corners: the block is the square itself.
  const BlockDecomposition d = decompose(p->d, p->topo, p->trace, *p->probe);
  ASSERT_EQ(d.blocks.size(), 1u);
  EXPECT_NEAR(scaled_jacobian(d, 0, 0, 1, 0, 1), 1.0, 1e-6);
  EXPECT_NEAR(d.area(0), 1.0, 1e-9);  // finite-difference derivatives
}

TEST(Decompose, AnnulusWithoutNodesFails) {
  // Concentric circles with the cross aligned to both: no critical points, no
  // separatrices, so nothing can cut the ring into discs.
  const DomainSpec ring = parse_domain(R"({"name":"ring","loops":[
    {"orientation":"outer","segments":[{"kind":"arc","center":[0,0],"radius":2,"a0":0,"a1":6.283185307179586}]},
    {"orientation":"hole","segments":[{"kind":"arc","center":[0,0],"radius":1,"a0":6.283185307179586,"a1":0}]}]})");
  const AnalyticField f(
      [](Vec2 p) {
        const double a = 4.0 * std::atan2(p.y, p.x);
        return std::array<double, 2>{std::cos(a), std::sin(a)};
      },
      [&](Vec2 p) { return ring.contains(p); });
  Topology topo;
  const TraceResult tr = trace_all(topo, ring, f, 0.05, TraceOptions{});
  EXPECT_TRUE(tr.separatrices.empty());
  try {
    decompose(ring, topo, tr, f);
    FAIL() << "decomposed a ring without cuts";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Decomposition);
  }
}

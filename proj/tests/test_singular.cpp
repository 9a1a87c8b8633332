#include <gtest/gtest.h>

#include <cmath>

#include "quadfield/singular.hpp"

using namespace quadfield;

namespace {

const char* kHalfDisc = R"({"name":"hd","loops":[{"orientation":"outer","segments":[
  {"kind":"line","p0":[-1,0],"p1":[1,0]},
  {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})";

struct Solved {
  DomainSpec d;
  TriMesh m;
  FieldSolution s;
};

Solved solve(const char* json, double h, int p = 3) {
  Solved r;
  r.d = parse_domain(json);
  r.m = elevate_and_curve(generate_background_mesh(r.d, h), p, r.d);
  r.s = solve_laplace(r.m, r.d, guiding_field_bc(r.d), choose_discretization(r.d, p));
  return r;
}

// Nodal interpolant of an analytic field on a mesh.
FieldSolution interpolate(const TriMesh& m, const std::function<std::array<double, 2>(Vec2)>& f) {
  FieldSolution s;
  s.order = m.order;
  for (const auto& el : m.elements) {
    std::vector<double> u, v;
    for (auto x : el.nodes) {
      u.push_back(f(x)[0]);
      v.push_back(f(x)[1]);
    }
    s.u.push_back(u);
    s.v.push_back(v);
  }
  return s;
}

}  // namespace

TEST(Index, OffCentreNodes) {
  const Vec2 c{0.3, -0.2};
  const AnalyticField source([&](Vec2 p) { return std::array<double, 2>{p.x - c.x, p.y - c.y}; });
  const AnalyticField saddle([&](Vec2 p) { return std::array<double, 2>{p.x - c.x, c.y - p.y}; });
  EXPECT_EQ(interior_valence(source, c, 0.05).valence, 3);
  EXPECT_EQ(interior_valence(saddle, c, 0.05).valence, 5);
  // A contour that misses the zero sees a regular point.
  EXPECT_EQ(interior_valence(source, {1.0, 1.0}, 0.05).index, 0);
}

TEST(Index, RotatedSourceKeepsIndex) {
  // Any rotation of (x, y) has index +1.
  const double a = 0.9;
  const AnalyticField f([&](Vec2 p) {
    return std::array<double, 2>{std::cos(a) * p.x - std::sin(a) * p.y, std::sin(a) * p.x + std::cos(a) * p.y};
  });
  const auto r = interior_valence(f, {0, 0}, 0.2);
  EXPECT_EQ(r.index, 1);
  EXPECT_EQ(r.valence, 3);
}

TEST(Flagging, ConstantFieldFlagsNothing) {
  const Solved s = solve(kHalfDisc, 0.4);
  const FieldSolution c = interpolate(s.m, [](Vec2) { return std::array<double, 2>{1.0, 0.0}; });
  const FieldProbe probe(s.m, c);
  EXPECT_TRUE(flag_candidate_elements(probe).empty());
}

TEST(Newton, FindsShiftedZero) {
  const Solved s = solve(kHalfDisc, 0.4, 2);
  const Vec2 z{0.21, 0.37};
  const FieldSolution c = interpolate(s.m, [&](Vec2 p) { return std::array<double, 2>{p.x - z.x, z.y - p.y}; });
  const FieldProbe probe(s.m, c);
  const auto flagged = flag_candidate_elements(probe);
  ASSERT_FALSE(flagged.empty());
  bool found = false;
  for (int e : flagged) {
    const auto cp = newton_locate(probe, e);
    if (cp && distance(cp->position, z) < 1e-9) found = true;
  }
  EXPECT_TRUE(found);
}

TEST(Topology, HalfDiscIndexSum) {
  const Solved s = solve(kHalfDisc, 0.4);
  const FieldProbe probe(s.m, s.s);
  const Topology t = analyze_topology(probe, s.d);
  ASSERT_EQ(t.critical_points.size(), 2u);
  for (const auto& cp : t.critical_points) {
    EXPECT_EQ(cp.valence, 3);
    EXPECT_LT(cp.residual, 1e-8);
  }
  // Sum of (4 - V) at nodes and (2 - V) at corners equals 4 chi; a disc has chi = 1.
  int sum = 0;
  for (const auto& cp : t.critical_points) sum += 4 - cp.valence;
  for (const auto& c : t.corners) sum += 2 - c.valence;
  EXPECT_EQ(sum, 4);
  EXPECT_EQ(index_sum(t), 4);
}

TEST(Topology, CornerValenceFromAngle) {
  // With continuous data a corner's valence is its angle in quarter turns.
  const Solved s = solve(R"({"name":"L","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[0,0],"p1":[2,0]},{"kind":"line","p0":[2,0],"p1":[2,1]},
    {"kind":"line","p0":[2,1],"p1":[1,1]},{"kind":"line","p0":[1,1],"p1":[1,2]},
    {"kind":"line","p0":[1,2],"p1":[0,2]},{"kind":"line","p0":[0,2],"p1":[0,0]}]}]})",
                         0.4);
  const FieldProbe probe(s.m, s.s);
  const Topology t = analyze_topology(probe, s.d);
  ASSERT_EQ(t.corners.size(), 6u);
  for (const auto& c : t.corners) {
    const int expected = static_cast<int>(std::lround(c.corner.interior_angle / (kPi / 2)));
    EXPECT_EQ(c.valence, expected);
  }
  EXPECT_TRUE(t.critical_points.empty());
}

TEST(Topology, JsonRoundTrip) {
  const Solved s = solve(kHalfDisc, 0.5);
  const FieldProbe probe(s.m, s.s);
  const Topology t = analyze_topology(probe, s.d);
  const std::string text = topology_to_json(t);
  const Topology back = topology_from_json(text);
  EXPECT_EQ(topology_to_json(back), text);
  ASSERT_EQ(back.critical_points.size(), t.critical_points.size());
  EXPECT_EQ(back.critical_points[0].position, t.critical_points[0].position);
}

TEST(Topology, ThreadCountDoesNotChangeResult) {
  const Solved s = solve(kHalfDisc, 0.3);
  const FieldProbe probe(s.m, s.s);
  EXPECT_EQ(topology_to_json(analyze_topology(probe, s.d, {}, 1)),
            topology_to_json(analyze_topology(probe, s.d, {}, 4)));
}

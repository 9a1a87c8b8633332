#include <gtest/gtest.h>

#include <cmath>

#include "quadfield/error.hpp"
#include "quadfield/tracer.hpp"

using namespace quadfield;

namespace {

const char* kHalfDisc = R"({"name":"hd","loops":[{"orientation":"outer","segments":[
  {"kind":"line","p0":[-1,0],"p1":[1,0]},
  {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})";

Anchor node_anchor(int id, Vec2 p) {
  Anchor a;
  a.kind = Anchor::Kind::Node;
  a.id = id;
  a.position = p;
  return a;
}

}  // namespace

TEST(Integrator, UniformFieldIsExact) {
  const AnalyticField f([](Vec2) { return std::array<double, 2>{1.0, 0.0}; });
  const double h = 0.01;
  Streamline s = launch(f, {0.0, 0.0}, 0.0, h, node_anchor(0, {0, 0}), 0);
  const int n = 200;
  while (static_cast<int>(s.points.size()) <= n) ASSERT_TRUE(advance(s, f, h));
  EXPECT_NEAR(s.points[n].x, n * h, 1e-12);
  EXPECT_NEAR(s.points[n].y, 0.0, 1e-12);
}

TEST(Integrator, StepOutsideLeavesStreamlineUnchanged) {
  const AnalyticField f([](Vec2) { return std::array<double, 2>{1.0, 0.0}; }, [](Vec2 p) { return p.x < 0.05; });
  Streamline s = launch(f, {0.0, 0.0}, 0.0, 0.01, node_anchor(0, {0, 0}), 0);
  while (advance(s, f, 0.01)) {
  }
  const auto n = s.points.size();
  EXPECT_FALSE(advance(s, f, 0.01));
  EXPECT_EQ(s.points.size(), n);
  EXPECT_LT(s.points.back().x, 0.05);
}

TEST(Integrator, VelocityFollowsPreviousBranch) {
  const AnalyticField f([](Vec2) { return std::array<double, 2>{1.0, 0.0}; });  // psi = 0
  const auto d = streamline_velocity(f, {0, 0}, kPi / 2 + 0.1);
  ASSERT_TRUE(d.has_value());
  EXPECT_NEAR(d->alpha, kPi / 2, 1e-14);
  EXPECT_NEAR(distance(d->velocity, {0.0, 1.0}), 0.0, 1e-14);
}

TEST(Merge, WeightsPartitionUnity) {
  for (double x = 0.0; x <= 1.0; x += 0.125) EXPECT_NEAR(merge_weight0(x) + merge_weight1(x), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(merge_weight0(0.0), 1.0);
  EXPECT_DOUBLE_EQ(merge_weight1(1.0), 1.0);
  EXPECT_NEAR(merge_weight0(0.5), 0.5, 1e-15);
}

TEST(Merge, ParallelFrontsDoNotMeet) {
  Streamline a, b;
  a.points = {{0, 0}, {0.1, 0}};
  a.alpha = {0.0, 0.0};
  b.points = {{0, 0.01}, {0.1, 0.01}};
  b.alpha = {0.0, 0.0};
  EXPECT_FALSE(detect_meeting(a, b, 0.1));
  b.alpha = {kPi, kPi};
  EXPECT_TRUE(detect_meeting(a, b, 0.1));
  EXPECT_FALSE(detect_meeting(a, b, 0.005));
}

TEST(Directions, SourceAndSaddleBranchCounts) {
  const AnalyticField source([](Vec2 p) { return std::array<double, 2>{p.x, p.y}; });
  const AnalyticField saddle([](Vec2 p) { return std::array<double, 2>{p.x, -p.y}; });
  CriticalPoint s3, s5;
  s3.index = 1;
  s3.valence = 3;
  s3.radius = 0.1;
  s5.index = -1;
  s5.valence = 5;
  s5.radius = 0.1;
  const auto d3 = initial_directions(source, s3);
  const auto d5 = initial_directions(saddle, s5);
  ASSERT_EQ(d3.size(), 3u);
  ASSERT_EQ(d5.size(), 5u);
  // Along a separatrix the cross holds the radial direction: psi(p0 + c e^{i alpha}) = alpha (mod pi/2).
  for (double a : d3) {
    const double psi = source.eval_psi(0.1 * unit_vector(a));
    EXPECT_NEAR(std::abs(std::remainder(psi - a, kPi / 2)), 0.0, 1e-8);
  }
  // Source separatrices sit at 2 pi / 3 spacing.
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(std::abs(wrap_angle(d3[(k + 1) % 3] - d3[k])), 2 * kPi / 3, 1e-6);
}

TEST(Trace, HalfDiscSeparatricesStayInside) {
  const DomainSpec d = parse_domain(kHalfDisc);
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d));
  const FieldProbe probe(m, sol);
  const Topology topo = analyze_topology(probe, d);
  const TraceResult r = trace_all(topo, d, probe);
  ASSERT_FALSE(r.separatrices.empty());
  for (const auto& s : r.separatrices) {
    for (auto p : s.points) EXPECT_TRUE(d.contains(p) || d.closest_point(p).distance < 1e-9);
    if (s.end.kind == Anchor::Kind::Boundary) {
      EXPECT_LT(d.closest_point(s.points.back()).distance, 1e-9);
    }
  }
  for (const auto& sl : r.streamlines) {
    EXPECT_NE(sl.status, Streamline::Status::Active);
    EXPECT_NE(sl.status, Streamline::Status::Aborted);
  }
  // Each V3 node emits three streamlines.
  int from_nodes = 0;
  for (const auto& sl : r.streamlines) from_nodes += sl.origin.kind == Anchor::Kind::Node;
  EXPECT_EQ(from_nodes, 6);
}

TEST(Trace, StepCapIsTracingError) {
  const DomainSpec d = parse_domain(kHalfDisc);
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d));
  const FieldProbe probe(m, sol);
  const Topology topo = analyze_topology(probe, d);
  TraceOptions o;
  o.max_steps = 2;
  try {
    trace_all(topo, d, probe, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Tracing);
  }
}

TEST(Trace, JsonRoundTrip) {
  const DomainSpec d = parse_domain(kHalfDisc);
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.5), 3, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d));
  const FieldProbe probe(m, sol);
  const TraceResult r = trace_all(analyze_topology(probe, d), d, probe);
  const std::string text = separatrices_to_json(r);
  const TraceResult back = separatrices_from_json(text);
  ASSERT_EQ(back.separatrices.size(), r.separatrices.size());
  EXPECT_EQ(back.step, r.step);
  EXPECT_EQ(back.separatrices[0].points, r.separatrices[0].points);
}

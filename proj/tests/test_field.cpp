#include <gtest/gtest.h>

#include <cmath>

#include "quadfield/error.hpp"
#include "quadfield/field.hpp"

using namespace quadfield;

TEST(Phase, PrincipalRange) {
  for (double a = -3.1; a < 3.1; a += 0.37) {
    const double psi = principal_phase(std::cos(a), std::sin(a));
    EXPECT_GE(psi, -kPi / 4 - 1e-15);
    EXPECT_LE(psi, kPi / 4 + 1e-15);
    EXPECT_NEAR(psi, a / 4, 1e-14);
  }
}

TEST(Phase, ZeroFieldIsTopologyError) {
  try {
    principal_phase(0.0, 1e-14);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Topology);
  }
}

TEST(Phase, AdjustBranchPicksNearestQuarterTurn) {
  EXPECT_NEAR(adjust_branch(0.1, 0.0), 0.1, 1e-15);
  EXPECT_NEAR(adjust_branch(0.1, kPi / 2), 0.1 + kPi / 2, 1e-14);
  EXPECT_NEAR(std::abs(wrap_angle(adjust_branch(0.1, kPi) - (0.1 + kPi))), 0.0, 1e-14);
  EXPECT_NEAR(adjust_branch(-0.7, -1.2), -0.7, 1e-14);
}

TEST(Phase, CrossVectorsAreAQuarterTurnApart) {
  const auto c = cross_vectors(0.3);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(norm(c[k]), 1.0, 1e-15);
    EXPECT_NEAR(dot(c[k], c[(k + 1) % 4]), 0.0, 1e-15);
    EXPECT_NEAR(cross(c[k], c[(k + 1) % 4]), 1.0, 1e-15);
  }
  EXPECT_NEAR(std::atan2(c[0].y, c[0].x), 0.3, 1e-15);
}

TEST(Probe, MatchesElementEvaluation) {
  const DomainSpec d = parse_domain(R"({"name":"hd","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[-1,0],"p1":[1,0]},
    {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})");
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d));
  const FieldProbe probe(m, sol);
  for (int e = 0; e < m.num_elements(); e += 2) {
    const Vec2 xi{-0.5, -0.5};
    const Vec2 x = map_to_physical(m, e, xi);
    const auto loc = probe.locate(x);
    ASSERT_TRUE(loc.has_value());
    const auto a = probe.eval_at(*loc);
    const auto b = evaluate(m, sol, e, xi);
    EXPECT_NEAR(a[0], b[0], 1e-10);
    EXPECT_NEAR(a[1], b[1], 1e-10);
  }
  EXPECT_FALSE(probe.sample({0.0, -0.5}).has_value());
  EXPECT_THROW(probe.eval_v({2.0, 2.0}), OutsideDomain);
  // The cross follows the straight side: psi = 0 on y = 0.
  EXPECT_NEAR(probe.eval_psi({0.0, 1e-6}), 0.0, 1e-3);
}

TEST(Analytic, InsideTest) {
  const AnalyticField f([](Vec2 p) { return std::array<double, 2>{p.x, p.y}; },
                        [](Vec2 p) { return norm(p) < 1.0; });
  EXPECT_TRUE(f.contains({0.5, 0.0}));
  EXPECT_FALSE(f.contains({1.5, 0.0}));
  EXPECT_NEAR(f.eval_psi({0.0, 0.5}), kPi / 8, 1e-15);
}

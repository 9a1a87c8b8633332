#include <gtest/gtest.h>

#include <cmath>

#include "quadfield/error.hpp"
#include "quadfield/solver.hpp"

using namespace quadfield;

namespace {

DomainSpec half_disc() {
  return parse_domain(R"({"name":"hd","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[-1,0],"p1":[1,0]},
    {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})");
}

DomainSpec wedge() {  // 45 degree corners: discontinuous boundary data
  return parse_domain(R"({"name":"wedge","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[0,0],"p1":[1,0]},{"kind":"line","p0":[1,0],"p1":[0,1]},
    {"kind":"line","p0":[0,1],"p1":[0,0]}]}]})");
}

double max_error(const TriMesh& m, const FieldSolution& s, const std::function<double(Vec2)>& f) {
  double e = 0.0;
  for (int k = 0; k < m.num_elements(); ++k)
    for (Vec2 xi : {Vec2{-1, -1}, Vec2{-0.3, -0.4}, Vec2{0.5, -0.9}, Vec2{-0.9, 0.6}})
      e = std::max(e, std::abs(evaluate(m, s, k, xi)[0] - f(map_to_physical(m, k, xi))));
  return e;
}

}  // namespace

TEST(Discretization, ChoiceFollowsCorners) {
  EXPECT_EQ(choose_discretization(half_disc()).scheme, Scheme::CG);
  EXPECT_EQ(choose_discretization(wedge()).scheme, Scheme::DG);
  EXPECT_EQ(choose_discretization(half_disc()).order, 3);
}

TEST(Discretization, ForcedCgIsRefused) {
  EXPECT_NO_THROW(validate_scheme(half_disc(), Scheme::CG));
  EXPECT_NO_THROW(validate_scheme(wedge(), Scheme::DG));
  try {
    validate_scheme(wedge(), Scheme::CG);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
    EXPECT_NE(std::string(e.what()).find("CG requires continuous BCs"), std::string::npos);
  }
}

TEST(Solver, ConstantDataGivesConstantSolution) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  const BoundaryFunction bc = [](const BoundarySample&) { return std::array<double, 2>{0.7, -0.2}; };
  for (Scheme s : {Scheme::CG, Scheme::DG}) {
    DiscretizationChoice c;
    c.scheme = s;
    const FieldSolution sol = solve_laplace(m, d, bc, c);
    EXPECT_LT(max_error(m, sol, [](Vec2) { return 0.7; }), 1e-10) << to_string(s);
    const FieldRange r = field_range(m, sol);
    EXPECT_NEAR(r.vmin, -0.2, 1e-10);
    EXPECT_NEAR(r.vmax, -0.2, 1e-10);
  }
}

TEST(Solver, ReproducesHarmonicPolynomialInSpace) {
  // x^3 - 3 x y^2 is harmonic and lies in P3, so straight elements reproduce it exactly.
  const DomainSpec d = parse_domain(R"({"name":"sq","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[-1,-1],"p1":[1,-1]},{"kind":"line","p0":[1,-1],"p1":[1,1]},
    {"kind":"line","p0":[1,1],"p1":[-1,1]},{"kind":"line","p0":[-1,1],"p1":[-1,-1]}]}]})");
  auto f = [](Vec2 p) { return p.x * p.x * p.x - 3 * p.x * p.y * p.y; };
  const BoundaryFunction bc = [&](const BoundarySample& s) { return std::array<double, 2>{f(s.x), 0.0}; };
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.6), 3, d);
  for (Scheme s : {Scheme::CG, Scheme::DG}) {
    DiscretizationChoice c;
    c.scheme = s;
    EXPECT_LT(max_error(m, solve_laplace(m, d, bc, c), f), 1e-10) << to_string(s);
  }
}

TEST(Solver, CgHasNoInterElementJumps) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.4), 3, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d));
  EXPECT_LT(jump_norm(m, sol).max, 1e-12);
}

TEST(Solver, DgJumpsShrinkWithOrder) {
  const DomainSpec d = wedge();
  const TriMesh linear = generate_background_mesh(d, 0.25);
  double prev = 1e300;
  for (int p : {2, 4}) {
    const TriMesh m = elevate_and_curve(linear, p, d);
    const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d, p));
    const double mean = jump_norm(m, sol).mean;
    EXPECT_LT(mean, prev);
    prev = mean;
  }
}

TEST(Solver, GuidingFieldObeysMaximumPrinciple) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.3), 4, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d, 4));
  const FieldRange r = field_range(m, sol);
  EXPECT_GE(r.umin, -1.0 - 1e-2);
  EXPECT_LE(r.umax, 1.0 + 1e-2);
  EXPECT_GE(r.vmin, -1.0 - 1e-2);
  EXPECT_LE(r.vmax, 1.0 + 1e-2);
  EXPECT_LT(sol.residual, 1e-10);
}

TEST(Solver, DirichletDataIsOneSidedAtCorners) {
  const DomainSpec d = wedge();
  const TriMesh m = generate_background_mesh(d, 0.5);
  const auto values = assemble_dirichlet_bc(m, d, guiding_field_bc(d));
  ASSERT_FALSE(values.empty());
  // Every boundary edge carries the constant data of its own straight side.
  for (const auto& ev : values) {
    for (std::size_t k = 1; k < ev.values.size(); ++k) {
      EXPECT_NEAR(ev.values[k][0], ev.values[0][0], 1e-12);
      EXPECT_NEAR(ev.values[k][1], ev.values[0][1], 1e-12);
    }
  }
}

TEST(Solver, SolutionJsonRoundTrip) {
  const DomainSpec d = half_disc();
  const TriMesh m = elevate_and_curve(generate_background_mesh(d, 0.5), 3, d);
  const FieldSolution sol = solve_laplace(m, d, guiding_field_bc(d), choose_discretization(d));
  const std::string text = solution_to_json(sol);
  const FieldSolution back = solution_from_json(text);
  EXPECT_EQ(solution_to_json(back), text);
  EXPECT_EQ(back.u[3][2], sol.u[3][2]);
}

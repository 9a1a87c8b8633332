#include <gtest/gtest.h>

#include <cmath>

#include "quadfield/error.hpp"
#include "quadfield/geometry.hpp"

using namespace quadfield;

namespace {

const char* kHalfDisc = R"({"name":"hd","loops":[{"orientation":"outer","segments":[
  {"kind":"line","p0":[-1,0],"p1":[1,0]},
  {"kind":"arc","center":[0,0],"radius":1,"a0":0,"a1":3.141592653589793}]}]})";

const char* kLShape = R"({"name":"L","loops":[{"orientation":"outer","segments":[
  {"kind":"line","p0":[0,0],"p1":[2,0]},{"kind":"line","p0":[2,0],"p1":[2,1]},
  {"kind":"line","p0":[2,1],"p1":[1,1]},{"kind":"line","p0":[1,1],"p1":[1,2]},
  {"kind":"line","p0":[1,2],"p1":[0,2]},{"kind":"line","p0":[0,2],"p1":[0,0]}]}]})";

}  // namespace

TEST(Curve, LineAndArcBasics) {
  const auto l = CurveSegment::line({0, 0}, {3, 4});
  EXPECT_NEAR(l.length(), 5.0, 1e-12);
  EXPECT_NEAR(distance(l.point(0.5), {1.5, 2.0}), 0.0, 1e-14);

  const auto a = CurveSegment::arc({1, 2}, 2.0, 0.0, kPi / 2);
  EXPECT_NEAR(a.length(), kPi, 1e-9);
  EXPECT_NEAR(distance(a.point(1.0), {1.0, 4.0}), 0.0, 1e-12);
  // Tangent of a counter-clockwise arc leads the radius by 90 degrees.
  EXPECT_NEAR(tangent_angle(a, 0.0), kPi / 2, 1e-12);
}

TEST(Curve, ArclengthInverse) {
  const auto s = CurveSegment::spline({{0, 0}, {1, 0.5}, {2, -0.3}, {3, 0.2}});
  for (double f : {0.0, 0.1, 0.37, 0.8, 1.0}) {
    const double t = s.param_at_fraction(f);
    EXPECT_NEAR(s.arclength_at(t) / s.length(), f, 1e-8);
  }
}

TEST(Curve, ReversedSwapsEnds) {
  const auto a = CurveSegment::arc({0, 0}, 1.0, 0.0, 1.0);
  const auto r = a.reversed();
  EXPECT_NEAR(distance(r.point(0.0), a.point(1.0)), 0.0, 1e-14);
  EXPECT_NEAR(distance(r.point(1.0), a.point(0.0)), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(wrap_angle(tangent_angle(r, 0.3) - tangent_angle(a, 0.7) - kPi)), 0.0, 1e-9);
}

TEST(Domain, HalfDiscAreaAndCorners) {
  const DomainSpec d = parse_domain(kHalfDisc);
  EXPECT_NEAR(d.area(), kPi / 2, 1e-9);
  const auto corners = d.corners();
  ASSERT_EQ(corners.size(), 2u);
  for (const auto& c : corners) {
    EXPECT_NEAR(c.interior_angle, kPi / 2, 1e-9);
    EXPECT_TRUE(c.bc_continuous);
  }
  EXPECT_EQ(d.hole_count(), 0);
}

TEST(Domain, ReflexCornerOfLShape) {
  const DomainSpec d = parse_domain(kLShape);
  EXPECT_NEAR(d.area(), 3.0, 1e-12);
  int reflex = 0;
  for (const auto& c : d.corners()) reflex += std::abs(c.interior_angle - 1.5 * kPi) < 1e-9;
  EXPECT_EQ(d.corners().size(), 6u);
  EXPECT_EQ(reflex, 1);
}

TEST(Domain, OddCornerIsDiscontinuous) {
  const DomainSpec d = parse_domain(R"({"name":"tri","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[0,0],"p1":[1,0]},{"kind":"line","p0":[1,0],"p1":[0,1]},
    {"kind":"line","p0":[0,1],"p1":[0,0]}]}]})");
  int discontinuous = 0;
  for (const auto& c : d.corners()) discontinuous += !c.bc_continuous;
  EXPECT_EQ(discontinuous, 2);  // the two 45 degree corners
}

TEST(Domain, ClosestPointOnArc) {
  const DomainSpec d = parse_domain(kHalfDisc);
  const auto loc = d.closest_point({0.3, 0.4});
  EXPECT_NEAR(loc.distance, 0.4, 1e-9);  // the chord y = 0 is nearer than the arc (1 - 0.5)
  const auto arc = d.closest_point({0.0, 0.9});
  EXPECT_NEAR(arc.distance, 0.1, 1e-9);
  EXPECT_NEAR(norm(arc.point), 1.0, 1e-9);
}

TEST(Domain, Contains) {
  const DomainSpec d = parse_domain(kLShape);
  EXPECT_TRUE(d.contains({0.5, 0.5}));
  EXPECT_TRUE(d.contains({0.5, 1.5}));
  EXPECT_FALSE(d.contains({1.5, 1.5}));
  EXPECT_FALSE(d.contains({-0.1, 0.5}));
}

TEST(Domain, JsonRoundTrip) {
  const DomainSpec d = parse_domain(kHalfDisc);
  const DomainSpec e = parse_domain(domain_to_json(d));
  EXPECT_EQ(domain_to_json(d), domain_to_json(e));
  EXPECT_DOUBLE_EQ(d.area(), e.area());
}

TEST(Domain, OpenLoopIsConfigError) {
  try {
    parse_domain(R"({"name":"open","loops":[{"orientation":"outer","segments":[
      {"kind":"line","p0":[0,0],"p1":[1,0]},{"kind":"line","p0":[1,0],"p1":[0,1]}]}]})");
    FAIL() << "accepted an open loop";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(BoundaryField, FourfoldAngle) {
  for (double th : {0.0, 0.3, kPi / 4, 2.0}) {
    const auto v = boundary_field(th);
    EXPECT_NEAR(v[0], std::cos(4 * th), 1e-15);
    EXPECT_NEAR(v[1], std::sin(4 * th), 1e-15);
  }
  // Rotating the tangent by a quarter turn leaves the cross unchanged.
  const auto a = boundary_field(0.7), b = boundary_field(0.7 + kPi / 2);
  EXPECT_NEAR(a[0], b[0], 1e-12);
  EXPECT_NEAR(a[1], b[1], 1e-12);
}

TEST(BoundaryField, ZeroCountNeedsSmoothLoop) {
  const DomainSpec d = parse_domain(R"({"name":"sq","loops":[{"orientation":"outer","segments":[
    {"kind":"line","p0":[0,0],"p1":[1,0]},{"kind":"line","p0":[1,0],"p1":[1,1]},
    {"kind":"line","p0":[1,1],"p1":[0,1]},{"kind":"line","p0":[0,1],"p1":[0,0]}]}]})");
  EXPECT_THROW(boundary_zero_count(d.loop(0), FieldComponent::U), Error);
  // An ellipse turns its tangent once, like the circle: eight zeros per component.
  const DomainSpec e = parse_domain(R"({"name":"ell","loops":[{"orientation":"outer","segments":[
    {"kind":"spline","points":[[2,0],[1.4142,0.7071],[0,1],[-1.4142,0.7071],[-2,0],[-1.4142,-0.7071],[0,-1],
     [1.4142,-0.7071],[2,0]]}]}]})");
  EXPECT_EQ(boundary_zero_count(e.loop(0), FieldComponent::U), 8);
  EXPECT_EQ(boundary_zero_count(e.loop(0), FieldComponent::V), 8);
}

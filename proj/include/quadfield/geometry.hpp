#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "quadfield/error.hpp"

namespace quadfield {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 unit_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline Vec2 lerp(Vec2 a, Vec2 b, double s) { return a + s * (b - a); }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  return w;
}

/// Axis-aligned bounding box.
struct BBox {
  Vec2 lo{1e300, 1e300};
  Vec2 hi{-1e300, -1e300};

  void expand(Vec2 p) {
    lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y);
  }
  double diagonal() const { return norm(hi - lo); }
  bool contains(Vec2 p, double pad = 0.0) const {
    return p.x >= lo.x - pad && p.x <= hi.x + pad && p.y >= lo.y - pad && p.y <= hi.y + pad;
  }
};

enum class CurveKind { Line, Arc, Spline, Naca4 };

/// One parametric piece of a boundary loop, t in [0,1].
///
/// Splines interpolate their points with a chord-length parametrized cubic
/// (periodic when the first and last points coincide, natural otherwise).
/// NACA 4-digit sections use the closed trailing-edge thickness polynomial and
/// run trailing edge -> lower surface -> leading edge -> upper surface -> trailing
/// edge, i.e. clockwise, which is the hole orientation.
class CurveSegment {
 public:
  static CurveSegment line(Vec2 p0, Vec2 p1);
  static CurveSegment arc(Vec2 center, double radius, double a0, double a1);
  static CurveSegment spline(std::vector<Vec2> points);
  static CurveSegment naca4(const std::string& code, double chord, Vec2 origin);

  CurveKind kind() const { return kind_; }
  bool is_reversed() const { return reversed_; }
  CurveSegment reversed() const;

  Vec2 point(double t) const;
  Vec2 derivative(double t) const;

  double length() const;
  /// Arclength from t=0 to t.
  double arclength_at(double t) const;
  /// Parameter at a given arclength fraction in [0,1].
  double param_at_fraction(double fraction) const;

  // Raw data, used for serialization.
  Vec2 p0() const { return p0_; }
  Vec2 p1() const { return p1_; }
  Vec2 center() const { return p0_; }
  double radius() const { return radius_; }
  double a0() const { return a0_; }
  double a1() const { return a1_; }
  const std::vector<Vec2>& spline_points() const { return spline_pts_; }
  const std::string& naca_code() const { return naca_code_; }
  double chord() const { return radius_; }
  Vec2 origin() const { return p0_; }

 private:
  Vec2 raw_point(double u) const;
  Vec2 raw_derivative(double u) const;
  void build_arclength_table();
  void build_spline();

  CurveKind kind_ = CurveKind::Line;
  bool reversed_ = false;
  Vec2 p0_, p1_;
  double radius_ = 0.0;
  double a0_ = 0.0, a1_ = 0.0;
  std::vector<Vec2> spline_pts_;
  std::vector<double> knots_;
  std::vector<Vec2> second_;  // spline second derivatives at knots
  bool periodic_ = false;
  std::string naca_code_;
  double camber_ = 0.0, camber_pos_ = 0.0, thickness_ = 0.0;
  std::vector<double> arc_table_;  // cumulative arclength at uniform t
};

/// Signed area enclosed by a sequence of segments (Green's theorem).
double signed_area(const std::vector<CurveSegment>& segments);

enum class LoopOrientation { Outer, Hole };

/// Junction between two consecutive segments where the tangent jumps.
struct CornerSpec {
  Vec2 position;
  int loop = 0;
  int incoming = 0;  ///< segment index (within loop) ending at the corner
  int outgoing = 0;  ///< segment index (within loop) starting at the corner
  double theta_in = 0.0;   ///< tangent angle of the incoming segment at its end
  double theta_out = 0.0;  ///< tangent angle of the outgoing segment at its start
  double interior_angle = 0.0;  ///< swept from theta_0 to theta_f through the interior
  bool bc_continuous = false;

  /// Start of the interior sweep: the outgoing tangent.
  double theta0() const { return theta_out; }
  /// End of the interior sweep: the reversed incoming tangent.
  double thetaf() const { return theta_out + interior_angle; }
};

struct BoundaryLoop {
  LoopOrientation orientation = LoopOrientation::Outer;
  std::vector<CurveSegment> segments;
  std::vector<CornerSpec> corners;
};

struct SegmentRef {
  int loop = 0;
  int index = 0;
  friend bool operator==(SegmentRef, SegmentRef) = default;
};

/// Point on the boundary addressed by segment and parameter.
struct BoundaryLocation {
  SegmentRef segment;
  double t = 0.0;
  double distance = 0.0;
  Vec2 point;
};

struct GeometryTolerances {
  double corner_angle = 1e-3;
  int zero_count_samples = 4096;
};

class DomainSpec {
 public:
  DomainSpec() = default;
  /// Validates closure, winding (reorienting loops as needed), nesting, and
  /// builds the corner inventory.
  DomainSpec(std::string name, std::vector<BoundaryLoop> loops, GeometryTolerances tol = {});

  const std::string& name() const { return name_; }
  const std::vector<BoundaryLoop>& loops() const { return loops_; }
  const BoundaryLoop& loop(int i) const { return loops_.at(i); }
  const CurveSegment& segment(SegmentRef ref) const { return loops_.at(ref.loop).segments.at(ref.index); }
  int hole_count() const { return static_cast<int>(loops_.size()) - 1; }
  const GeometryTolerances& tolerances() const { return tol_; }

  BBox bbox() const { return bbox_; }
  double area() const;

  /// All corners of all loops in loop order.
  std::vector<CornerSpec> corners() const;

  /// Closest boundary point to x over every segment.
  BoundaryLocation closest_point(Vec2 x) const;

  /// Dense polyline of one loop, for inside tests and drawing.
  std::vector<Vec2> sample_loop(int loop, int per_segment = 64) const;
  bool contains(Vec2 x) const;

 private:
  std::string name_;
  std::vector<BoundaryLoop> loops_;
  GeometryTolerances tol_;
  BBox bbox_;
  std::vector<std::vector<Vec2>> polylines_;
};

/// Parameter of the point on a segment closest to x.
double closest_parameter(const CurveSegment& segment, Vec2 x);

/// Tangent angle atan2(y'(t), x'(t)) of the oriented curve.
double tangent_angle(const CurveSegment& segment, double t);

/// Boundary guiding-field value (cos 4 theta, sin 4 theta).
std::array<double, 2> boundary_field(double theta);

enum class FieldComponent { U, V };

/// Sign changes of one component of the boundary field around a smooth loop.
int boundary_zero_count(const BoundaryLoop& loop, FieldComponent component, int samples = 4096);

/// Arclength fractions where a component of the boundary field changes sign.
std::vector<double> boundary_zero_positions(const BoundaryLoop& loop, FieldComponent component,
                                            int samples = 4096);

/// Lists every tangent discontinuity of every loop.
std::vector<CornerSpec> corner_inventory(const DomainSpec& domain);

/// Corners of one loop (used during construction).
std::vector<CornerSpec> find_corners(const BoundaryLoop& loop, int loop_index, double angle_tol);

/// Loads a domain from its JSON description.
DomainSpec load_domain(const std::string& path);
DomainSpec parse_domain(const std::string& json_text);
std::string domain_to_json(const DomainSpec& domain);

}  // namespace quadfield

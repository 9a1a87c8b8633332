#include "quadfield/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "quadfield/quadrature.hpp"

namespace quadfield {

namespace {

constexpr int kArcTableIntervals = 256;

Vec2 naca_camber_offset(double xc, double m, double p, double* dyc, double* d2yc) {
  if (m == 0.0 || p == 0.0) {
    *dyc = 0.0;
    *d2yc = 0.0;
    return {xc, 0.0};
  }
  if (xc < p) {
    *dyc = 2.0 * m / (p * p) * (p - xc);
    *d2yc = -2.0 * m / (p * p);
    return {xc, m / (p * p) * (2.0 * p * xc - xc * xc)};
  }
  const double q = (1.0 - p) * (1.0 - p);
  *dyc = 2.0 * m / q * (p - xc);
  *d2yc = -2.0 * m / q;
  return {xc, m / q * ((1.0 - 2.0 * p) + 2.0 * p * xc - xc * xc)};
}

// Signed half-thickness g(s) with s in [-1,1], x/c = s^2; C^1 through the leading edge.
double naca_signed_thickness(double t, double s) {
  const double a = std::abs(s);
  const double s2 = s * s;
  return 5.0 * t *
         (0.2969 * s - 0.1260 * s * a - 0.3516 * s2 * s * a + 0.2843 * s2 * s2 * s * a -
          0.1036 * s2 * s2 * s2 * s * a);
}

double naca_signed_thickness_ds(double t, double s) {
  const double a = std::abs(s);
  const double s2 = s * s;
  return 5.0 * t *
         (0.2969 - 0.2520 * a - 1.4064 * s2 * a + 1.7058 * s2 * s2 * a - 0.8288 * s2 * s2 * s2 * a);
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 x) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if ((a.y > x.y) != (b.y > x.y)) {
      const double xi = (b.x - a.x) * (x.y - a.y) / (b.y - a.y) + a.x;
      if (x.x < xi) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

// ---------------------------------------------------------------------------
// CurveSegment

CurveSegment CurveSegment::line(Vec2 p0, Vec2 p1) {
  CurveSegment c;
  c.kind_ = CurveKind::Line;
  c.p0_ = p0;
  c.p1_ = p1;
  c.build_arclength_table();
  return c;
}

CurveSegment CurveSegment::arc(Vec2 center, double radius, double a0, double a1) {
  if (!(radius > 0.0)) throw Error(ErrorKind::Config, "arc radius must be positive");
  CurveSegment c;
  c.kind_ = CurveKind::Arc;
  c.p0_ = center;
  c.radius_ = radius;
  c.a0_ = a0;
  c.a1_ = a1;
  c.build_arclength_table();
  return c;
}

CurveSegment CurveSegment::spline(std::vector<Vec2> points) {
  if (points.size() < 2) throw Error(ErrorKind::Config, "spline needs at least two points");
  CurveSegment c;
  c.kind_ = CurveKind::Spline;
  c.spline_pts_ = std::move(points);
  c.build_spline();
  c.build_arclength_table();
  return c;
}

CurveSegment CurveSegment::naca4(const std::string& code, double chord, Vec2 origin) {
  if (code.size() != 4 || !std::all_of(code.begin(), code.end(), ::isdigit)) {
    throw Error(ErrorKind::Config, "naca4 code must have four digits: '" + code + "'");
  }
  if (!(chord > 0.0)) throw Error(ErrorKind::Config, "naca4 chord must be positive");
  CurveSegment c;
  c.kind_ = CurveKind::Naca4;
  c.naca_code_ = code;
  c.radius_ = chord;
  c.p0_ = origin;
  c.camber_ = (code[0] - '0') / 100.0;
  c.camber_pos_ = (code[1] - '0') / 10.0;
  c.thickness_ = std::stoi(code.substr(2)) / 100.0;
  if (!(c.thickness_ > 0.0)) throw Error(ErrorKind::Config, "naca4 thickness must be positive");
  c.build_arclength_table();
  return c;
}

CurveSegment CurveSegment::reversed() const {
  CurveSegment c = *this;
  c.reversed_ = !reversed_;
  std::vector<double> table(arc_table_.size());
  const double total = arc_table_.back();
  for (std::size_t i = 0; i < table.size(); ++i) {
    table[i] = total - arc_table_[arc_table_.size() - 1 - i];
  }
  c.arc_table_ = std::move(table);
  return c;
}

void CurveSegment::build_spline() {
  const auto& P = spline_pts_;
  const int n = static_cast<int>(P.size());
  periodic_ = n >= 4 && distance(P.front(), P.back()) == 0.0;
  knots_.assign(n, 0.0);
  for (int i = 1; i < n; ++i) {
    const double h = distance(P[i], P[i - 1]);
    if (h == 0.0) throw Error(ErrorKind::Config, "spline has repeated consecutive points");
    knots_[i] = knots_[i - 1] + h;
  }
  const double total = knots_.back();
  for (double& k : knots_) k /= total;
  second_.assign(n, Vec2{});
  if (n == 2) return;

  auto h = [&](int i) { return knots_[i + 1] - knots_[i]; };
  if (!periodic_) {
    const int m = n - 2;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd rhs(m, 2);
    for (int r = 0; r < m; ++r) {
      const int i = r + 1;
      if (r > 0) A(r, r - 1) = h(i - 1);
      A(r, r) = 2.0 * (h(i - 1) + h(i));
      if (r < m - 1) A(r, r + 1) = h(i);
      const Vec2 g = 6.0 * ((P[i + 1] - P[i]) / h(i) - (P[i] - P[i - 1]) / h(i - 1));
      rhs(r, 0) = g.x;
      rhs(r, 1) = g.y;
    }
    const Eigen::MatrixXd M = A.partialPivLu().solve(rhs);
    for (int r = 0; r < m; ++r) second_[r + 1] = {M(r, 0), M(r, 1)};
  } else {
    const int m = n - 1;  // unknowns M_0..M_{n-2}, M_{n-1} = M_0
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd rhs(m, 2);
    for (int i = 0; i < m; ++i) {
      const int ip = (i + 1) % m;
      const int im = (i - 1 + m) % m;
      const double hp = h(i);
      const double hm = h((i - 1 + m) % m);
      A(i, im) += hm;
      A(i, i) += 2.0 * (hm + hp);
      A(i, ip) += hp;
      const Vec2 g = 6.0 * ((P[i + 1] - P[i]) / hp - (P[i] - P[im]) / hm);
      rhs(i, 0) = g.x;
      rhs(i, 1) = g.y;
    }
    const Eigen::MatrixXd M = A.partialPivLu().solve(rhs);
    for (int i = 0; i < m; ++i) second_[i] = {M(i, 0), M(i, 1)};
    second_[m] = second_[0];
  }
}

Vec2 CurveSegment::raw_point(double u) const {
  switch (kind_) {
    case CurveKind::Line:
      return lerp(p0_, p1_, u);
    case CurveKind::Arc: {
      const double a = a0_ + u * (a1_ - a0_);
      return p0_ + radius_ * Vec2{std::cos(a), std::sin(a)};
    }
    case CurveKind::Spline: {
      const int n = static_cast<int>(spline_pts_.size());
      u = std::clamp(u, 0.0, 1.0);
      int i = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), u) - knots_.begin()) - 1;
      i = std::clamp(i, 0, n - 2);
      const double h = knots_[i + 1] - knots_[i];
      const double a = (knots_[i + 1] - u) / h;
      const double b = (u - knots_[i]) / h;
      return a * spline_pts_[i] + b * spline_pts_[i + 1] +
             (h * h / 6.0) * ((a * a * a - a) * second_[i] + (b * b * b - b) * second_[i + 1]);
    }
    case CurveKind::Naca4: {
      const double s = -1.0 + 2.0 * u;
      double dyc = 0.0, d2yc = 0.0;
      const Vec2 mean = naca_camber_offset(s * s, camber_, camber_pos_, &dyc, &d2yc);
      const double th = std::atan(dyc);
      const double g = naca_signed_thickness(thickness_, s);
      const Vec2 local{mean.x - g * std::sin(th), mean.y + g * std::cos(th)};
      return p0_ + radius_ * local;
    }
  }
  return {};
}

Vec2 CurveSegment::raw_derivative(double u) const {
  switch (kind_) {
    case CurveKind::Line:
      return p1_ - p0_;
    case CurveKind::Arc: {
      const double a = a0_ + u * (a1_ - a0_);
      return radius_ * (a1_ - a0_) * Vec2{-std::sin(a), std::cos(a)};
    }
    case CurveKind::Spline: {
      const int n = static_cast<int>(spline_pts_.size());
      u = std::clamp(u, 0.0, 1.0);
      int i = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), u) - knots_.begin()) - 1;
      i = std::clamp(i, 0, n - 2);
      const double h = knots_[i + 1] - knots_[i];
      const double a = (knots_[i + 1] - u) / h;
      const double b = (u - knots_[i]) / h;
      return (spline_pts_[i + 1] - spline_pts_[i]) / h -
             ((3.0 * a * a - 1.0) * h / 6.0) * second_[i] +
             ((3.0 * b * b - 1.0) * h / 6.0) * second_[i + 1];
    }
    case CurveKind::Naca4: {
      const double s = -1.0 + 2.0 * u;
      double dyc = 0.0, d2yc = 0.0;
      naca_camber_offset(s * s, camber_, camber_pos_, &dyc, &d2yc);
      const double th = std::atan(dyc);
      const double dth_dx = d2yc / (1.0 + dyc * dyc);
      const double g = naca_signed_thickness(thickness_, s);
      const double dg = naca_signed_thickness_ds(thickness_, s);
      const double dxc = 2.0 * s;  // d(x/c)/ds
      const Vec2 d{dxc - dg * std::sin(th) - g * std::cos(th) * dth_dx * dxc,
                   dyc * dxc + dg * std::cos(th) - g * std::sin(th) * dth_dx * dxc};
      return 2.0 * radius_ * d;
    }
  }
  return {};
}

Vec2 CurveSegment::point(double t) const { return raw_point(reversed_ ? 1.0 - t : t); }

Vec2 CurveSegment::derivative(double t) const {
  return reversed_ ? -raw_derivative(1.0 - t) : raw_derivative(t);
}

void CurveSegment::build_arclength_table() {
  const auto& gl = gauss_legendre(8);
  arc_table_.assign(kArcTableIntervals + 1, 0.0);
  for (int i = 0; i < kArcTableIntervals; ++i) {
    const double a = static_cast<double>(i) / kArcTableIntervals;
    const double b = static_cast<double>(i + 1) / kArcTableIntervals;
    double sum = 0.0;
    for (std::size_t q = 0; q < gl.points.size(); ++q) {
      const double u = 0.5 * (a + b) + 0.5 * (b - a) * gl.points[q];
      sum += gl.weights[q] * norm(raw_derivative(u));
    }
    arc_table_[i + 1] = arc_table_[i] + 0.5 * (b - a) * sum;
  }
}

double CurveSegment::length() const { return arc_table_.back(); }

double CurveSegment::arclength_at(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * kArcTableIntervals;
  const int i = std::min(static_cast<int>(pos), kArcTableIntervals - 1);
  const double a = static_cast<double>(i) / kArcTableIntervals;
  const auto& gl = gauss_legendre(8);
  double sum = 0.0;
  for (std::size_t q = 0; q < gl.points.size(); ++q) {
    const double u = 0.5 * (a + t) + 0.5 * (t - a) * gl.points[q];
    sum += gl.weights[q] * norm(derivative(u));
  }
  return arc_table_[i] + 0.5 * (t - a) * sum;
}

double CurveSegment::param_at_fraction(double fraction) const {
  fraction = std::clamp(fraction, 0.0, 1.0);
  if (fraction == 0.0) return 0.0;
  if (fraction == 1.0) return 1.0;
  const double target = fraction * length();
  const auto it = std::upper_bound(arc_table_.begin(), arc_table_.end(), target);
  int i = static_cast<int>(it - arc_table_.begin()) - 1;
  i = std::clamp(i, 0, kArcTableIntervals - 1);
  const double seg = arc_table_[i + 1] - arc_table_[i];
  double t = (i + (seg > 0.0 ? (target - arc_table_[i]) / seg : 0.0)) / kArcTableIntervals;
  for (int iter = 0; iter < 20; ++iter) {
    const double speed = norm(derivative(t));
    if (speed == 0.0) break;
    const double dt = (arclength_at(t) - target) / speed;
    t = std::clamp(t - dt, 0.0, 1.0);
    if (std::abs(dt) < 1e-15) break;
  }
  return t;
}

double signed_area(const std::vector<CurveSegment>& segments) {
  const auto& gl = gauss_legendre(8);
  double area = 0.0;
  for (const auto& seg : segments) {
    constexpr int kPieces = 64;
    for (int i = 0; i < kPieces; ++i) {
      const double a = static_cast<double>(i) / kPieces;
      const double b = static_cast<double>(i + 1) / kPieces;
      for (std::size_t q = 0; q < gl.points.size(); ++q) {
        const double t = 0.5 * (a + b) + 0.5 * (b - a) * gl.points[q];
        const Vec2 p = seg.point(t);
        const Vec2 d = seg.derivative(t);
        area += 0.5 * (b - a) * gl.weights[q] * 0.5 * cross(p, d);
      }
    }
  }
  return area;
}

// ---------------------------------------------------------------------------
// Boundary field operations

double tangent_angle(const CurveSegment& segment, double t) {
  const Vec2 d = segment.derivative(t);
  const double speed = norm(d);
  if (!(speed > 1e-14 * std::max(1.0, segment.length()))) {
    throw Error(ErrorKind::Config, "singular parametrization");
  }
  return std::atan2(d.y, d.x);
}

std::array<double, 2> boundary_field(double theta) {
  return {std::cos(4.0 * theta), std::sin(4.0 * theta)};
}

std::vector<CornerSpec> find_corners(const BoundaryLoop& loop, int loop_index, double angle_tol) {
  std::vector<CornerSpec> out;
  const int n = static_cast<int>(loop.segments.size());
  for (int i = 0; i < n; ++i) {
    const int next = (i + 1) % n;
    const double th_in = tangent_angle(loop.segments[i], 1.0);
    const double th_out = tangent_angle(loop.segments[next], 0.0);
    const double turn = wrap_angle(th_out - th_in);
    if (std::abs(turn) <= angle_tol) continue;
    CornerSpec c;
    c.position = loop.segments[next].point(0.0);
    c.loop = loop_index;
    c.incoming = i;
    c.outgoing = next;
    c.theta_in = th_in;
    c.theta_out = th_out;
    c.interior_angle = kPi - turn;
    c.bc_continuous = std::abs(std::remainder(c.interior_angle, kHalfPi)) <= angle_tol;
    out.push_back(c);
  }
  // Report corners starting from the junction that closes the loop so the
  // listing order does not depend on where the segment list begins.
  std::sort(out.begin(), out.end(), [](const CornerSpec& a, const CornerSpec& b) {
    return a.outgoing < b.outgoing;
  });
  return out;
}

namespace {

struct LoopSampler {
  const BoundaryLoop& loop;
  std::vector<double> cumulative;

  explicit LoopSampler(const BoundaryLoop& l) : loop(l) {
    cumulative.push_back(0.0);
    for (const auto& s : loop.segments) cumulative.push_back(cumulative.back() + s.length());
  }
  double total() const { return cumulative.back(); }
  std::pair<int, double> locate(double s) const {
    const int n = static_cast<int>(loop.segments.size());
    int i = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), s) -
                             cumulative.begin()) - 1;
    i = std::clamp(i, 0, n - 1);
    const double len = loop.segments[i].length();
    const double frac = len > 0.0 ? (s - cumulative[i]) / len : 0.0;
    return {i, loop.segments[i].param_at_fraction(frac)};
  }
};

}  // namespace

std::vector<double> boundary_zero_positions(const BoundaryLoop& loop, FieldComponent component,
                                            int samples) {
  if (!loop.corners.empty()) throw Error(ErrorKind::Config, "smooth loop required");
  const LoopSampler sampler(loop);
  std::vector<double> values(samples);
  for (int k = 0; k < samples; ++k) {
    const auto [seg, t] = sampler.locate(sampler.total() * k / samples);
    const auto f = boundary_field(tangent_angle(loop.segments[seg], t));
    values[k] = component == FieldComponent::U ? f[0] : f[1];
  }
  constexpr double kZero = 1e-12;
  auto sign_of = [&](double v) { return v > kZero ? 1 : (v < -kZero ? -1 : 0); };
  int start = -1;
  for (int k = 0; k < samples; ++k) {
    if (sign_of(values[k]) != 0) { start = k; break; }
  }
  std::vector<double> zeros;
  if (start < 0) return zeros;
  int last = sign_of(values[start]);
  for (int step = 1; step <= samples; ++step) {
    const int k = (start + step) % samples;
    const int s = sign_of(values[k]);
    if (s == 0) continue;
    if (s != last) zeros.push_back(static_cast<double>(k) / samples);
    last = s;
  }
  std::sort(zeros.begin(), zeros.end());
  return zeros;
}

int boundary_zero_count(const BoundaryLoop& loop, FieldComponent component, int samples) {
  return static_cast<int>(boundary_zero_positions(loop, component, samples).size());
}

std::vector<CornerSpec> corner_inventory(const DomainSpec& domain) { return domain.corners(); }

// ---------------------------------------------------------------------------
// DomainSpec

DomainSpec::DomainSpec(std::string name, std::vector<BoundaryLoop> loops, GeometryTolerances tol)
    : name_(std::move(name)), tol_(tol) {
  if (loops.empty()) throw Error(ErrorKind::Config, "domain has no loops");
  const int outer_count = static_cast<int>(std::count_if(
      loops.begin(), loops.end(), [](const BoundaryLoop& l) { return l.orientation == LoopOrientation::Outer; }));
  if (outer_count != 1) throw Error(ErrorKind::Config, "domain needs exactly one outer loop");
  std::stable_partition(loops.begin(), loops.end(), [](const BoundaryLoop& l) {
    return l.orientation == LoopOrientation::Outer;
  });

  for (const auto& loop : loops) {
    if (loop.segments.empty()) throw Error(ErrorKind::Config, "empty boundary loop");
    for (const auto& s : loop.segments) {
      for (int k = 0; k <= 16; ++k) bbox_.expand(s.point(k / 16.0));
    }
  }
  const double diag = bbox_.diagonal();
  if (!(diag > 0.0)) throw Error(ErrorKind::Config, "degenerate domain: zero extent");

  for (auto& loop : loops) {
    const int n = static_cast<int>(loop.segments.size());
    for (int i = 0; i < n; ++i) {
      const Vec2 end = loop.segments[i].point(1.0);
      const Vec2 start = loop.segments[(i + 1) % n].point(0.0);
      if (distance(end, start) > 1e-12 * diag) {
        std::ostringstream msg;
        msg << "boundary loop is not closed: gap " << distance(end, start) << " after segment " << i;
        throw Error(ErrorKind::Config, msg.str());
      }
    }
    const double area = signed_area(loop.segments);
    if (std::abs(area) < 1e-12 * diag * diag) throw Error(ErrorKind::Config, "degenerate domain: zero-area loop");
    const bool want_ccw = loop.orientation == LoopOrientation::Outer;
    if ((area > 0.0) != want_ccw) {
      std::vector<CurveSegment> rev;
      for (auto it = loop.segments.rbegin(); it != loop.segments.rend(); ++it) rev.push_back(it->reversed());
      loop.segments = std::move(rev);
    }
  }
  loops_ = std::move(loops);
  for (int i = 0; i < static_cast<int>(loops_.size()); ++i) {
    loops_[i].corners = find_corners(loops_[i], i, tol_.corner_angle);
    polylines_.push_back(sample_loop(i));
  }

  // Nesting and disjointness.
  for (int i = 1; i < static_cast<int>(loops_.size()); ++i) {
    if (!point_in_polygon(polylines_[0], polylines_[i].front())) {
      throw Error(ErrorKind::Config, "hole loop is not inside the outer loop");
    }
  }
  for (std::size_t a = 0; a < polylines_.size(); ++a) {
    for (std::size_t b = a + 1; b < polylines_.size(); ++b) {
      const auto& pa = polylines_[a];
      const auto& pb = polylines_[b];
      for (std::size_t i = 0; i + 1 < pa.size(); i += 1) {
        for (std::size_t j = 0; j + 1 < pb.size(); j += 1) {
          if (segments_intersect(pa[i], pa[i + 1], pb[j], pb[j + 1])) {
            throw Error(ErrorKind::Config, "boundary loops intersect");
          }
        }
      }
    }
  }
  for (const auto& poly : polylines_) {
    const std::size_t n = poly.size() - 1;  // closed: last == first
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        if (segments_intersect(poly[i], poly[i + 1], poly[j], poly[j + 1])) {
          throw Error(ErrorKind::Config, "boundary loop self-intersects");
        }
      }
    }
  }
}

double DomainSpec::area() const {
  double a = 0.0;
  for (const auto& loop : loops_) a += signed_area(loop.segments);
  return a;
}

std::vector<CornerSpec> DomainSpec::corners() const {
  std::vector<CornerSpec> out;
  for (const auto& loop : loops_) out.insert(out.end(), loop.corners.begin(), loop.corners.end());
  return out;
}

std::vector<Vec2> DomainSpec::sample_loop(int loop, int per_segment) const {
  std::vector<Vec2> pts;
  for (const auto& s : loops_.at(loop).segments) {
    for (int k = 0; k < per_segment; ++k) pts.push_back(s.point(static_cast<double>(k) / per_segment));
  }
  pts.push_back(pts.front());
  return pts;
}

bool DomainSpec::contains(Vec2 x) const {
  if (!point_in_polygon(polylines_[0], x)) return false;
  for (std::size_t i = 1; i < polylines_.size(); ++i) {
    if (point_in_polygon(polylines_[i], x)) return false;
  }
  return true;
}

double closest_parameter(const CurveSegment& seg, Vec2 x) {
  constexpr int kSamples = 64;
  double bt = 0.0, bd = 1e300;
  for (int k = 0; k <= kSamples; ++k) {
    const double t = static_cast<double>(k) / kSamples;
    const double d = distance(seg.point(t), x);
    if (d < bd) { bd = d; bt = t; }
  }
  // Golden-section refinement in the bracketing interval.
  double lo = std::max(0.0, bt - 1.0 / kSamples);
  double hi = std::min(1.0, bt + 1.0 / kSamples);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = distance(seg.point(c), x), fd = distance(seg.point(d), x);
  for (int it = 0; it < 80 && hi - lo > 1e-15; ++it) {
    if (fc < fd) { hi = d; d = c; fd = fc; c = hi - gr * (hi - lo); fc = distance(seg.point(c), x); }
    else { lo = c; c = d; fc = fd; d = lo + gr * (hi - lo); fd = distance(seg.point(d), x); }
  }
  double t = 0.5 * (lo + hi);
  double dist = distance(seg.point(t), x);
  for (double cand : {0.0, 1.0, bt}) {
    const double dc = distance(seg.point(cand), x);
    if (dc < dist) { dist = dc; t = cand; }
  }
  return t;
}

BoundaryLocation DomainSpec::closest_point(Vec2 x) const {
  BoundaryLocation best;
  best.distance = 1e300;
  for (int l = 0; l < static_cast<int>(loops_.size()); ++l) {
    const auto& segs = loops_[l].segments;
    for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
      const auto& seg = segs[s];
      const double t = closest_parameter(seg, x);
      const double dist = distance(seg.point(t), x);
      if (dist < best.distance) {
        best.distance = dist;
        best.segment = {l, s};
        best.t = t;
        best.point = seg.point(t);
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Vec2 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::Config, "expected [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

nlohmann::json vec_to_json(Vec2 v) { return nlohmann::json::array({v.x, v.y}); }

CurveSegment segment_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  CurveSegment seg;
  if (kind == "line") {
    seg = CurveSegment::line(vec_from_json(j.at("p0")), vec_from_json(j.at("p1")));
  } else if (kind == "arc") {
    seg = CurveSegment::arc(vec_from_json(j.at("center")), j.at("radius").get<double>(),
                            j.at("a0").get<double>(), j.at("a1").get<double>());
  } else if (kind == "spline") {
    std::vector<Vec2> pts;
    for (const auto& p : j.at("points")) pts.push_back(vec_from_json(p));
    seg = CurveSegment::spline(std::move(pts));
  } else if (kind == "naca4") {
    const Vec2 origin = j.contains("origin") ? vec_from_json(j.at("origin")) : Vec2{};
    seg = CurveSegment::naca4(j.at("code").get<std::string>(), j.at("chord").get<double>(), origin);
  } else {
    throw Error(ErrorKind::Config, "unknown segment kind '" + kind + "'");
  }
  if (j.value("reversed", false)) seg = seg.reversed();
  return seg;
}

nlohmann::json segment_to_json(const CurveSegment& s) {
  nlohmann::json j;
  switch (s.kind()) {
    case CurveKind::Line:
      j = {{"kind", "line"}, {"p0", vec_to_json(s.p0())}, {"p1", vec_to_json(s.p1())}};
      break;
    case CurveKind::Arc:
      j = {{"kind", "arc"}, {"center", vec_to_json(s.center())}, {"radius", s.radius()},
           {"a0", s.a0()}, {"a1", s.a1()}};
      break;
    case CurveKind::Spline: {
      nlohmann::json pts = nlohmann::json::array();
      for (auto p : s.spline_points()) pts.push_back(vec_to_json(p));
      j = {{"kind", "spline"}, {"points", pts}};
      break;
    }
    case CurveKind::Naca4:
      j = {{"kind", "naca4"}, {"code", s.naca_code()}, {"chord", s.chord()}, {"origin", vec_to_json(s.origin())}};
      break;
  }
  if (s.is_reversed()) j["reversed"] = true;
  return j;
}

}  // namespace

DomainSpec parse_domain(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("domain JSON: ") + e.what());
  }
  try {
    std::vector<BoundaryLoop> loops;
    for (const auto& jl : j.at("loops")) {
      BoundaryLoop loop;
      const std::string orient = jl.value("orientation", "outer");
      if (orient == "outer") loop.orientation = LoopOrientation::Outer;
      else if (orient == "hole") loop.orientation = LoopOrientation::Hole;
      else throw Error(ErrorKind::Config, "unknown loop orientation '" + orient + "'");
      for (const auto& js : jl.at("segments")) loop.segments.push_back(segment_from_json(js));
      loops.push_back(std::move(loop));
    }
    return DomainSpec(j.value("name", std::string("domain")), std::move(loops));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("domain JSON: ") + e.what());
  }
}

DomainSpec load_domain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open domain file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_domain(ss.str());
}

std::string domain_to_json(const DomainSpec& domain) {
  nlohmann::json j;
  j["name"] = domain.name();
  j["loops"] = nlohmann::json::array();
  for (const auto& loop : domain.loops()) {
    nlohmann::json jl;
    jl["orientation"] = loop.orientation == LoopOrientation::Outer ? "outer" : "hole";
    jl["segments"] = nlohmann::json::array();
    for (const auto& s : loop.segments) jl["segments"].push_back(segment_to_json(s));
    j["loops"].push_back(jl);
  }
  return j.dump(2);
}

}  // namespace quadfield

#include "quadfield/blockdecomp.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "quadfield/error.hpp"
#include "quadfield/quadrature.hpp"

namespace quadfield {

const char* to_string(VertexKind k) {
  switch (k) {
    case VertexKind::Node: return "node";
    case VertexKind::Corner: return "corner";
    case VertexKind::BoundaryPoint: return "boundary";
    case VertexKind::Crossing: return "crossing";
    case VertexKind::Artificial: return "artificial";
    case VertexKind::Joint: return "joint";
  }
  return "unknown";
}

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::Decomposition, what); }

int priority(VertexKind k) {
  switch (k) {
    case VertexKind::Node: return 5;
    case VertexKind::Artificial: return 4;
    case VertexKind::Corner: return 3;
    case VertexKind::BoundaryPoint: return 2;
    case VertexKind::Joint: return 1;
    case VertexKind::Crossing: return 0;
  }
  return 0;
}

std::vector<double> cumulative_length(const std::vector<Vec2>& p) {
  std::vector<double> c(p.size(), 0.0);
  for (std::size_t i = 1; i < p.size(); ++i) c[i] = c[i - 1] + distance(p[i - 1], p[i]);
  return c;
}

Vec2 polyline_at(const std::vector<Vec2>& p, const std::vector<double>& cum, double arclength) {
  if (arclength <= 0.0) return p.front();
  if (arclength >= cum.back()) return p.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), arclength);
  const std::size_t i = static_cast<std::size_t>(it - cum.begin());
  const double span = cum[i] - cum[i - 1];
  return span > 0.0 ? lerp(p[i - 1], p[i], (arclength - cum[i - 1]) / span) : p[i];
}

struct Hit {
  double u = 0.0, v = 0.0;
  Vec2 point;
};

std::optional<Hit> segment_hit(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
  const Vec2 r = p1 - p0, s = q1 - q0;
  const double den = cross(r, s);
  if (std::abs(den) <= 1e-300) return std::nullopt;
  const double u = cross(q0 - p0, s) / den;
  const double v = cross(q0 - p0, r) / den;
  const double eps = 1e-12;
  if (u < -eps || u > 1.0 + eps || v < -eps || v > 1.0 + eps) return std::nullopt;
  return Hit{std::clamp(u, 0.0, 1.0), std::clamp(v, 0.0, 1.0), p0 + std::clamp(u, 0.0, 1.0) * r};
}

/// Closest point of a polyline: (parameter = segment + fraction, distance).
std::pair<double, double> closest_on_polyline(const std::vector<Vec2>& p, Vec2 x) {
  double best = 1e300, param = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const Vec2 d = p[i + 1] - p[i];
    const double dd = dot(d, d);
    const double f = dd > 0.0 ? std::clamp(dot(x - p[i], d) / dd, 0.0, 1.0) : 0.0;
    const double dist = distance(p[i] + f * d, x);
    if (dist < best) {
      best = dist;
      param = static_cast<double>(i) + f;
    }
  }
  return {param, best};
}

Vec2 polyline_param_point(const std::vector<Vec2>& p, double param) {
  const std::size_t i = std::min(static_cast<std::size_t>(param), p.size() - 2);
  return lerp(p[i], p[i + 1], param - static_cast<double>(i));
}

/// Sub-polyline between two parameters (a < b).
std::vector<Vec2> polyline_between(const std::vector<Vec2>& p, double a, double b) {
  std::vector<Vec2> out{polyline_param_point(p, a)};
  for (std::size_t i = static_cast<std::size_t>(std::floor(a)) + 1; static_cast<double>(i) < b && i < p.size(); ++i) {
    if (static_cast<double>(i) > a) out.push_back(p[i]);
  }
  out.push_back(polyline_param_point(p, b));
  return out;
}

struct Chunk {
  BBox box;
  std::size_t first = 0, last = 0;  // segment range [first, last)
};

std::vector<Chunk> chunks_of(const std::vector<Vec2>& p, double pad) {
  std::vector<Chunk> out;
  const std::size_t nseg = p.size() < 2 ? 0 : p.size() - 1;
  for (std::size_t s = 0; s < nseg; s += 16) {
    Chunk c;
    c.first = s;
    c.last = std::min(nseg, s + 16);
    for (std::size_t i = c.first; i <= c.last; ++i) c.box.expand(p[i]);
    c.box.lo = c.box.lo - Vec2{pad, pad};
    c.box.hi = c.box.hi + Vec2{pad, pad};
    out.push_back(c);
  }
  return out;
}

bool boxes_overlap(const BBox& a, const BBox& b) {
  return a.lo.x <= b.hi.x && b.lo.x <= a.hi.x && a.lo.y <= b.hi.y && b.lo.y <= a.hi.y;
}

struct CurveHit {
  double pa = 0.0, pb = 0.0;  // polyline parameters
  Vec2 point;
  double cos_angle = 0.0;
};

std::vector<CurveHit> polyline_hits(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double pad) {
  std::vector<CurveHit> hits;
  const auto ca = chunks_of(a, pad), cb = chunks_of(b, pad);
  for (const auto& x : ca) {
    for (const auto& y : cb) {
      if (!boxes_overlap(x.box, y.box)) continue;
      for (std::size_t i = x.first; i < x.last; ++i) {
        for (std::size_t j = y.first; j < y.last; ++j) {
          const auto h = segment_hit(a[i], a[i + 1], b[j], b[j + 1]);
          if (!h) continue;
          const Vec2 da = a[i + 1] - a[i], db = b[j + 1] - b[j];
          const double c = std::abs(dot(da, db)) / std::max(norm(da) * norm(db), 1e-300);
          hits.push_back({static_cast<double>(i) + h->u, static_cast<double>(j) + h->v, h->point, c});
        }
      }
    }
  }
  return hits;
}

double direction_angle(const std::vector<Vec2>& pts, double tol) {
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec2 d = pts[i] - pts[0];
    if (norm(d) > tol) return std::atan2(d.y, d.x);
  }
  const Vec2 d = pts.back() - pts.front();
  return std::atan2(d.y, d.x);
}

std::vector<Vec2> reversed(std::vector<Vec2> p) {
  std::reverse(p.begin(), p.end());
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Curves

std::vector<Vec2> catmull_rom(const std::vector<Vec2>& input, int samples) {
  std::vector<Vec2> p;
  for (auto x : input) {
    if (p.empty() || distance(p.back(), x) > 0.0) p.push_back(x);
  }
  if (p.size() < 3 || samples <= 1) return p;
  const std::size_t n = p.size();
  auto at = [&](long i) {
    if (i < 0) return 2.0 * p[0] - p[1];
    if (i >= static_cast<long>(n)) return 2.0 * p[n - 1] - p[n - 2];
    return p[static_cast<std::size_t>(i)];
  };
  std::vector<Vec2> out{p[0]};
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 P0 = at(static_cast<long>(i) - 1), P1 = p[i], P2 = p[i + 1], P3 = at(static_cast<long>(i) + 2);
    const double t0 = 0.0;
    const double t1 = t0 + std::sqrt(distance(P0, P1));
    const double t2 = t1 + std::sqrt(distance(P1, P2));
    const double t3 = t2 + std::sqrt(distance(P2, P3));
    for (int k = 1; k < samples; ++k) {
      const double t = t1 + (t2 - t1) * k / samples;
      // Barry-Goldman pyramid.
      const Vec2 A1 = (t1 - t) / (t1 - t0) * P0 + (t - t0) / (t1 - t0) * P1;
      const Vec2 A2 = (t2 - t) / (t2 - t1) * P1 + (t - t1) / (t2 - t1) * P2;
      const Vec2 A3 = (t3 - t) / (t3 - t2) * P2 + (t - t2) / (t3 - t2) * P3;
      const Vec2 B1 = (t2 - t) / (t2 - t0) * A1 + (t - t0) / (t2 - t0) * A2;
      const Vec2 B2 = (t3 - t) / (t3 - t1) * A2 + (t - t1) / (t3 - t1) * A3;
      out.push_back((t2 - t) / (t2 - t1) * B1 + (t - t1) / (t2 - t1) * B2);
    }
    out.push_back(P2);
  }
  return out;
}

std::vector<CutCurve> separatrix_curves(const std::vector<Separatrix>& seps, const Topology& topo,
                                        const SubdivisionOptions& opt) {
  auto end_of = [&](const Anchor& a) {
    CurveEnd e;
    e.position = a.position;
    switch (a.kind) {
      case Anchor::Kind::Node:
        e.kind = CurveEnd::Kind::Node;
        e.id = a.id;
        if (a.id >= 0 && a.id < static_cast<int>(topo.critical_points.size())) {
          e.position = topo.critical_points[a.id].position;
        }
        break;
      case Anchor::Kind::Corner:
        e.kind = CurveEnd::Kind::Corner;
        e.id = a.id;
        if (a.id >= 0 && a.id < static_cast<int>(topo.corners.size())) e.position = topo.corners[a.id].corner.position;
        break;
      case Anchor::Kind::Boundary:
        e.kind = CurveEnd::Kind::Boundary;
        e.segment = a.segment;
        e.t = a.t;
        break;
    }
    return e;
  };
  std::vector<CutCurve> out;
  for (std::size_t i = 0; i < seps.size(); ++i) {
    CutCurve c;
    c.points = catmull_rom(seps[i].points, opt.spline_samples);
    if (c.points.size() < 2) continue;
    c.start = end_of(seps[i].start);
    c.end = end_of(seps[i].end);
    c.points.front() = c.start.position;
    c.points.back() = c.end.position;
    c.source = static_cast<int>(i);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subdivision

std::vector<int> PlanarSubdivision::face_cycle(int face) const {
  std::vector<int> out;
  const int h0 = faces.at(face).half_edge;
  int h = h0;
  do {
    out.push_back(h);
    h = half_edges[h].next;
    if (out.size() > half_edges.size()) fail("face walk does not close");
  } while (h != h0);
  return out;
}

std::vector<Vec2> PlanarSubdivision::half_edge_points(int h) const {
  const auto& he = half_edges[h];
  return he.forward ? edges[he.edge].points : reversed(edges[he.edge].points);
}

int PlanarSubdivision::half_edge_target(int h) const { return half_edges[half_edges[h].twin].origin; }

int PlanarSubdivision::euler_characteristic() const {
  return static_cast<int>(vertices.size()) - static_cast<int>(edges.size()) + static_cast<int>(faces.size()) + 1;
}

PlanarSubdivision build_subdivision(const DomainSpec& domain, const Topology& topo, const std::vector<CutCurve>& input,
                                    const SubdivisionOptions& opt) {
  PlanarSubdivision sub;
  sub.curves = input;
  sub.holes = domain.hole_count();
  auto& curves = sub.curves;
  const double ext = domain.bbox().diagonal();
  const double tol = 1e-9 * ext;
  auto& V = sub.vertices;

  auto add_vertex = [&](Vec2 p, VertexKind kind, int id, int valence, bool on_boundary) {
    for (std::size_t i = 0; i < V.size(); ++i) {
      if (distance(V[i].position, p) < tol) {
        if (priority(kind) > priority(V[i].kind)) {
          V[i].kind = kind;
          V[i].id = id;
          V[i].valence = valence;
        }
        V[i].on_boundary = V[i].on_boundary || on_boundary;
        return static_cast<int>(i);
      }
    }
    V.push_back({p, kind, id, valence, on_boundary});
    return static_cast<int>(V.size()) - 1;
  };

  // Boundary vertices: segment joints and corners, keyed by (segment, t).
  const auto corners = domain.corners();
  std::vector<std::vector<std::vector<std::pair<double, int>>>> on_segment(domain.loops().size());
  std::vector<int> corner_vertex(corners.size(), -1);
  for (std::size_t l = 0; l < domain.loops().size(); ++l) {
    const auto& loop = domain.loops()[l];
    on_segment[l].resize(loop.segments.size());
    for (std::size_t i = 0; i < loop.segments.size(); ++i) {
      int corner = -1;
      for (std::size_t c = 0; c < corners.size(); ++c) {
        if (corners[c].loop == static_cast<int>(l) && corners[c].outgoing == static_cast<int>(i)) corner = static_cast<int>(c);
      }
      const int valence = corner >= 0 && corner < static_cast<int>(topo.corners.size()) ? topo.corners[corner].valence : -1;
      const Vec2 p = corner >= 0 ? corners[corner].position : loop.segments[i].point(0.0);
      const int v = add_vertex(p, corner >= 0 ? VertexKind::Corner : VertexKind::Joint, corner, valence, true);
      if (corner >= 0) corner_vertex[corner] = v;
      on_segment[l][i].push_back({0.0, v});
      const std::size_t prev = (i + loop.segments.size() - 1) % loop.segments.size();
      on_segment[l][prev].push_back({1.0, v});
    }
  }

  // Curve ends.
  std::vector<std::pair<int, int>> ends(curves.size());
  auto end_vertex = [&](CurveEnd& e) {
    switch (e.kind) {
      case CurveEnd::Kind::Node:
        return add_vertex(e.position, VertexKind::Node, e.id, -1, false);
      case CurveEnd::Kind::Corner:
        if (e.id < 0 || e.id >= static_cast<int>(corner_vertex.size())) fail("curve ends at an unknown corner");
        e.position = V[corner_vertex[e.id]].position;
        return corner_vertex[e.id];
      case CurveEnd::Kind::Boundary: {
        const int v = add_vertex(e.position, VertexKind::BoundaryPoint, -1, -1, true);
        if (e.segment.loop < 0 || e.segment.loop >= static_cast<int>(on_segment.size()) || e.segment.index < 0 ||
            e.segment.index >= static_cast<int>(on_segment[e.segment.loop].size())) {
          fail("curve ends on an unknown boundary segment");
        }
        on_segment[e.segment.loop][e.segment.index].push_back({e.t, v});
        return v;
      }
      case CurveEnd::Kind::Artificial:
        return add_vertex(e.position, VertexKind::Artificial, e.id, -1, false);
      case CurveEnd::Kind::Interior:
        return add_vertex(e.position, VertexKind::Crossing, -1, -1, false);
    }
    return -1;
  };
  for (std::size_t c = 0; c < curves.size(); ++c) {
    if (curves[c].points.size() < 2) fail("cutting curve has fewer than two points");
    ends[c] = {end_vertex(curves[c].start), end_vertex(curves[c].end)};
    curves[c].points.front() = V[ends[c].first].position;
    curves[c].points.back() = V[ends[c].second].position;
  }

  // Crossings between curves.
  std::vector<std::vector<std::pair<double, int>>> splits(curves.size());
  for (std::size_t c = 0; c < curves.size(); ++c) {
    splits[c].push_back({0.0, ends[c].first});
    splits[c].push_back({static_cast<double>(curves[c].points.size() - 1), ends[c].second});
  }
  for (std::size_t a = 0; a < curves.size(); ++a) {
    for (std::size_t b = a + 1; b < curves.size(); ++b) {
      std::vector<int> shared;
      for (int va : {ends[a].first, ends[a].second}) {
        for (int vb : {ends[b].first, ends[b].second}) {
          if (va == vb) shared.push_back(va);
        }
      }
      for (const auto& h : polyline_hits(curves[a].points, curves[b].points, tol)) {
        bool near_shared = false;
        for (int v : shared) near_shared = near_shared || distance(h.point, V[v].position) < std::max(opt.snap, tol);
        if (near_shared) continue;
        bool near_end = false;
        for (int v : {ends[a].first, ends[a].second, ends[b].first, ends[b].second}) {
          near_end = near_end || distance(h.point, V[v].position) < 1e3 * tol;
        }
        if (near_end) continue;  // touching ends are handled below
        if (h.cos_angle > std::cos(opt.min_crossing_angle)) {
          std::ostringstream s;
          s << "invalid separatrix graph: curves " << a << " and " << b << " cross at (" << h.point.x << ", "
            << h.point.y << ") at " << std::acos(std::min(1.0, h.cos_angle)) * 180.0 / kPi << " degrees";
          fail(s.str());
        }
        const int v = add_vertex(h.point, VertexKind::Crossing, -1, -1, false);
        splits[a].push_back({h.pa, v});
        splits[b].push_back({h.pb, v});
      }
    }
  }
  // Vertices lying inside another curve (T-junctions).
  for (std::size_t c = 0; c < curves.size(); ++c) {
    for (std::size_t v = 0; v < V.size(); ++v) {
      bool known = false;
      for (const auto& s : splits[c]) known = known || s.second == static_cast<int>(v);
      if (known) continue;
      const auto [param, dist] = closest_on_polyline(curves[c].points, V[v].position);
      if (dist < 1e3 * tol) splits[c].push_back({param, static_cast<int>(v)});
    }
  }

  // Interior edges.
  for (std::size_t c = 0; c < curves.size(); ++c) {
    auto& sp = splits[c];
    std::sort(sp.begin(), sp.end());
    const auto& pts = curves[c].points;
    for (std::size_t k = 0; k + 1 < sp.size(); ++k) {
      const int v0 = sp[k].second, v1 = sp[k + 1].second;
      if (v0 == v1) continue;
      SubEdge e;
      e.v0 = v0;
      e.v1 = v1;
      e.points = polyline_between(pts, sp[k].first, sp[k + 1].first);
      e.points.front() = V[v0].position;
      e.points.back() = V[v1].position;
      e.source = static_cast<int>(c);
      sub.edges.push_back(std::move(e));
    }
  }

  // Boundary edges.
  const double ds = ext / 400.0;
  for (std::size_t l = 0; l < on_segment.size(); ++l) {
    for (std::size_t i = 0; i < on_segment[l].size(); ++i) {
      auto list = on_segment[l][i];
      std::sort(list.begin(), list.end());
      const auto& seg = domain.loops()[l].segments[i];
      for (std::size_t k = 0; k + 1 < list.size(); ++k) {
        const int v0 = list[k].second, v1 = list[k + 1].second;
        if (v0 == v1) continue;
        SubEdge e;
        e.v0 = v0;
        e.v1 = v1;
        e.boundary = true;
        e.segment = {static_cast<int>(l), static_cast<int>(i)};
        e.t0 = list[k].first;
        e.t1 = list[k + 1].first;
        const double len = seg.arclength_at(e.t1) - seg.arclength_at(e.t0);
        const int n = seg.kind() == CurveKind::Line ? 1 : std::max(8, static_cast<int>(std::ceil(len / ds)));
        e.points.push_back(V[v0].position);
        for (int q = 1; q < n; ++q) e.points.push_back(seg.point(e.t0 + (e.t1 - e.t0) * q / n));
        e.points.push_back(V[v1].position);
        sub.edges.push_back(std::move(e));
      }
    }
  }

  // Half-edges: 2e runs v0 -> v1, 2e+1 runs back.
  const int ne = static_cast<int>(sub.edges.size());
  sub.half_edges.resize(2 * ne);
  std::vector<std::vector<std::pair<double, int>>> around(V.size());
  for (int e = 0; e < ne; ++e) {
    const auto& ed = sub.edges[e];
    sub.half_edges[2 * e] = {e, true, ed.v0, 2 * e + 1, -1, -1};
    sub.half_edges[2 * e + 1] = {e, false, ed.v1, 2 * e, -1, -1};
    around[ed.v0].push_back({direction_angle(ed.points, tol), 2 * e});
    around[ed.v1].push_back({direction_angle(reversed(ed.points), tol), 2 * e + 1});
  }
  for (auto& a : around) std::sort(a.begin(), a.end());
  for (int h = 0; h < 2 * ne; ++h) {
    const int t = sub.half_edges[h].twin;
    const auto& list = around[sub.half_edges[t].origin];
    const auto it = std::find_if(list.begin(), list.end(), [&](const auto& p) { return p.second == t; });
    const std::size_t k = static_cast<std::size_t>(it - list.begin());
    sub.half_edges[h].next = list[(k + list.size() - 1) % list.size()].second;
  }

  // Faces: cycles of half-edges with the domain on their left.
  auto exterior = [&](int h) { return sub.edges[sub.half_edges[h].edge].boundary && !sub.half_edges[h].forward; };
  std::vector<char> seen(2 * ne, 0);
  int bad_cycles = 0;
  for (int h0 = 0; h0 < 2 * ne; ++h0) {
    if (seen[h0] || exterior(h0)) continue;
    std::vector<int> cycle;
    bool outside = false;
    int h = h0;
    while (!seen[h]) {
      seen[h] = 1;
      cycle.push_back(h);
      outside = outside || exterior(h);
      h = sub.half_edges[h].next;
    }
    if (h != h0 || outside) {
      ++bad_cycles;
      continue;
    }
    double area = 0.0;
    for (int x : cycle) {
      const auto pts = sub.half_edge_points(x);
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) area += 0.5 * cross(pts[i], pts[i + 1]);
    }
    if (area <= 0.0) {
      ++bad_cycles;
      continue;
    }
    const int f = static_cast<int>(sub.faces.size());
    sub.faces.push_back({h0, area});
    for (int x : cycle) sub.half_edges[x].face = f;
  }

  const int chi = sub.euler_characteristic();
  if (bad_cycles > 0 || chi != 2 - sub.holes) {
    std::ostringstream s;
    s << "Euler check failed: V - E + F = " << chi << ", expected " << 2 - sub.holes;
    if (bad_cycles > 0) s << " (" << bad_cycles << " face(s) are not simply connected)";
    fail(s.str());
  }
  return sub;
}

PlanarSubdivision build_subdivision(const DomainSpec& domain, const Topology& topo, const std::vector<Separatrix>& seps,
                                    const SubdivisionOptions& opt) {
  return build_subdivision(domain, topo, separatrix_curves(seps, topo, opt), opt);
}

// ---------------------------------------------------------------------------
// Classification

namespace {

/// Interior angle of face f at the origin of half-edge h (prev -> h).
double interior_angle(const PlanarSubdivision& sub, int prev, int h, double tol) {
  const double out = direction_angle(sub.half_edge_points(h), tol);
  const double back = direction_angle(sub.half_edge_points(sub.half_edges[prev].twin), tol);
  double a = back - out;
  while (a <= 0.0) a += kTwoPi;
  while (a > kTwoPi) a -= kTwoPi;
  return a;
}

}  // namespace

FaceClassification classify_faces(const PlanarSubdivision& sub, const SubdivisionOptions& opt) {
  FaceClassification out;
  double ext = 0.0;
  {
    BBox b;
    for (const auto& v : sub.vertices) b.expand(v.position);
    ext = b.diagonal();
  }
  const double tol = 1e-9 * std::max(ext, 1e-300);
  for (int f = 0; f < static_cast<int>(sub.faces.size()); ++f) {
    const auto cycle = sub.face_cycle(f);
    FaceInfo info;
    for (std::size_t k = 0; k < cycle.size(); ++k) {
      const int h = cycle[k];
      const int prev = cycle[(k + cycle.size() - 1) % cycle.size()];
      const int v = sub.half_edges[h].origin;
      const auto& vx = sub.vertices[v];
      bool corner = false;
      switch (vx.kind) {
        case VertexKind::Node:
        case VertexKind::Artificial:
        case VertexKind::BoundaryPoint:
        case VertexKind::Corner:
          corner = true;
          break;
        case VertexKind::Crossing:
          corner = std::abs(kPi - interior_angle(sub, prev, h, tol)) > opt.corner_turn;
          break;
        case VertexKind::Joint:
          break;
      }
      if (!corner) continue;
      info.corners.push_back(v);
      if (vx.kind == VertexKind::Corner && vx.valence == 0) info.degenerate_corner = v;
    }
    const int n = static_cast<int>(info.corners.size());
    if (n == 4) {
      out.quads.push_back(f);
    } else if (n == 3) {
      out.triangles.push_back(f);
    } else {
      std::ostringstream s;
      s << "non-quadrilateral face " << f << " with " << n << " block corners";
      fail(s.str());
    }
    out.faces.push_back(std::move(info));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Midpoint division

namespace {

struct FaceSide {
  std::vector<Vec2> points;
  std::vector<int> half_edges;
  std::vector<std::size_t> starts;  // index in points where each half-edge begins
};

std::vector<FaceSide> face_sides(const PlanarSubdivision& sub, int face, const std::vector<int>& corners) {
  const auto cycle = sub.face_cycle(face);
  std::size_t k0 = 0;
  while (k0 < cycle.size() && sub.half_edges[cycle[k0]].origin != corners[0]) ++k0;
  if (k0 == cycle.size()) fail("face corner not on its boundary");
  std::vector<FaceSide> sides;
  std::set<int> corner_set(corners.begin(), corners.end());
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const int h = cycle[(k0 + i) % cycle.size()];
    if (corner_set.count(sub.half_edges[h].origin)) sides.emplace_back();
    auto pts = sub.half_edge_points(h);
    auto& s = sides.back();
    if (!s.points.empty()) s.points.pop_back();
    s.starts.push_back(s.points.size());
    s.half_edges.push_back(h);
    s.points.insert(s.points.end(), pts.begin(), pts.end());
  }
  return sides;
}

CurveEnd end_on_side(const DomainSpec& domain, const PlanarSubdivision& sub, const FaceSide& side, double param,
                     Vec2 p) {
  CurveEnd e;
  e.position = p;
  std::size_t k = 0;
  while (k + 1 < side.starts.size() && static_cast<double>(side.starts[k + 1]) <= param) ++k;
  const auto& edge = sub.edges[sub.half_edges[side.half_edges[k]].edge];
  if (edge.boundary) {
    const auto& seg = domain.segment(edge.segment);
    e.kind = CurveEnd::Kind::Boundary;
    e.segment = edge.segment;
    e.t = std::clamp(closest_parameter(seg, p), std::min(edge.t0, edge.t1), std::max(edge.t0, edge.t1));
    e.position = seg.point(e.t);
  } else {
    e.kind = CurveEnd::Kind::Interior;
  }
  return e;
}

CurveEnd end_at_vertex(const SubVertex& v) {
  CurveEnd e;
  e.position = v.position;
  switch (v.kind) {
    case VertexKind::Node: e.kind = CurveEnd::Kind::Node; e.id = v.id; break;
    case VertexKind::Corner: e.kind = CurveEnd::Kind::Corner; e.id = v.id; break;
    case VertexKind::Artificial: e.kind = CurveEnd::Kind::Artificial; e.id = v.id; break;
    default: e.kind = CurveEnd::Kind::Interior; break;
  }
  return e;
}

bool crosses_except_ends(const std::vector<Vec2>& curve, const std::vector<Vec2>& other, double tol) {
  for (const auto& h : polyline_hits(curve, other, tol)) {
    if (distance(h.point, curve.front()) > 1e-6 && distance(h.point, curve.back()) > 1e-6) return true;
  }
  return false;
}

bool inside_polygon(const std::vector<Vec2>& poly, Vec2 x) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if ((poly[i].y > x.y) != (poly[j].y > x.y) &&
        x.x < (poly[j].x - poly[i].x) * (x.y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x) {
      in = !in;
    }
  }
  return in;
}

}  // namespace

MidpointDivision midpoint_division(const DomainSpec& domain, const PlanarSubdivision& sub, const FaceInfo& info,
                                   int artificial_id, const VectorField* field, double step,
                                   const std::vector<Vec2>* converging) {
  if (info.corners.size() != 3) fail("midpoint division needs a triangular face");
  int face = -1;
  for (int f = 0; f < static_cast<int>(sub.faces.size()) && face < 0; ++f) {
    for (int h : sub.face_cycle(f)) {
      if (sub.half_edges[h].origin == info.corners[0]) {
        // The corner list was taken from this face if the other corners follow on its cycle.
        std::set<int> on;
        for (int x : sub.face_cycle(f)) on.insert(sub.half_edges[x].origin);
        if (on.count(info.corners[1]) && on.count(info.corners[2])) face = f;
        break;
      }
    }
  }
  if (face < 0) fail("triangular face not found");
  const double tol = 1e-9 * domain.bbox().diagonal();

  // Put the degenerate corner first, keeping the walking order.
  std::vector<int> corners = info.corners;
  int d = info.degenerate_corner;
  if (d < 0) {
    // No valence-0 corner: use the sharpest corner.
    const auto sides = face_sides(sub, face, corners);
    double best = 1e300;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& in = sides[(k + 2) % 3].points;
      const auto& out = sides[k].points;
      const double a = std::abs(wrap_angle(direction_angle(reversed(in), tol) - direction_angle(out, tol)));
      if (a < best) {
        best = a;
        d = corners[k];
      }
    }
  }
  while (corners[0] != d) std::rotate(corners.begin(), corners.begin() + 1, corners.end());
  const auto sides = face_sides(sub, face, corners);  // D->c1, c1->c2, c2->D
  const Vec2 D = sub.vertices[corners[0]].position;
  const Vec2 G = (D + sub.vertices[corners[1]].position + sub.vertices[corners[2]].position) / 3.0;

  MidpointDivision md;
  CurveEnd a_end;
  a_end.kind = CurveEnd::Kind::Artificial;
  a_end.id = artificial_id;

  CutCurve phys;
  if (converging && converging->size() >= 2) {
    // The node sits on the separatrix that ran into the corner; its physical
    // branch is that streamline followed back out of the triangle.
    const auto [param, dist] = closest_on_polyline(*converging, G);
    (void)dist;
    md.node = polyline_param_point(*converging, param);
    phys.points = reversed(polyline_between(*converging, 0.0, param));
    const Vec2 x = converging->front();
    int vx = -1;
    for (std::size_t v = 0; v < sub.vertices.size(); ++v) {
      if (distance(sub.vertices[v].position, x) < 1e3 * tol) vx = static_cast<int>(v);
    }
    phys.end = vx >= 0 ? end_at_vertex(sub.vertices[vx]) : CurveEnd{CurveEnd::Kind::Interior, -1, {}, 0.0, x};
  } else {
    if (!field) fail("midpoint division needs a field to trace its physical branch");
    std::vector<Vec2> poly;
    for (const auto& s : sides) poly.insert(poly.end(), s.points.begin(), s.points.end() - 1);
    md.node = G;
    if (!inside_polygon(poly, G)) fail("artificial node falls outside its triangular face");
    const auto uv = field->eval_v(G);
    const double psi = principal_phase(uv[0], uv[1]);
    const double away = std::atan2(G.y - D.y, G.x - D.x);
    const double alpha = adjust_branch(psi, away);
    const double h = step > 0.0 ? step : 1e-2 * domain.bbox().diagonal();
    Anchor origin{Anchor::Kind::Node, artificial_id, {}, 0.0, G};
    Streamline s = launch(*field, G, alpha, h, origin, 0);
    bool done = false;
    for (int it = 0; it < 100000 && !done; ++it) {
      const std::size_t before = s.points.size();
      const bool moved = advance(s, *field, h);
      Vec2 p0 = s.points[before - 1];
      Vec2 p1 = moved ? s.points.back() : p0 + 2.0 * h * s.history.back();
      for (int k : {0, 2}) {
        if (!polyline_hits({p0, p1}, sides[k].points, tol).empty()) fail("midpoint branch fails to reach its side");
      }
      const auto hits = polyline_hits({p0, p1}, sides[1].points, tol);
      if (!hits.empty()) {
        const auto& hit = hits.front();
        if (moved) s.points.pop_back();
        phys.points = s.points;
        phys.points.push_back(hit.point);
        phys.end = end_on_side(domain, sub, sides[1], hit.pb, hit.point);
        phys.points.back() = phys.end.position;
        done = true;
      } else if (!moved) {
        fail("midpoint branch fails to reach its side");
      }
    }
    if (!done) fail("midpoint branch fails to reach its side");
  }
  phys.points.front() = md.node;
  a_end.position = md.node;
  phys.start = a_end;

  // Straight branches at +-2pi/3 from the physical one, bent onto the side midpoints.
  const double theta = direction_angle(phys.points, tol);
  auto midpoint_of = [&](const FaceSide& side) {
    const auto cum = cumulative_length(side.points);
    const Vec2 m = polyline_at(side.points, cum, 0.5 * cum.back());
    const auto [param, dist] = closest_on_polyline(side.points, m);
    (void)dist;
    return end_on_side(domain, sub, side, param, m);
  };
  const CurveEnd m1 = midpoint_of(sides[0]);
  const CurveEnd m2 = midpoint_of(sides[2]);
  const double d1 = std::atan2(m1.position.y - md.node.y, m1.position.x - md.node.x);
  const double d2 = std::atan2(m2.position.y - md.node.y, m2.position.x - md.node.x);
  const double plus = theta + 2.0 * kPi / 3.0, minus = theta - 2.0 * kPi / 3.0;
  const bool straight = std::abs(wrap_angle(plus - d1)) + std::abs(wrap_angle(minus - d2)) <=
                        std::abs(wrap_angle(minus - d1)) + std::abs(wrap_angle(plus - d2));
  auto branch = [&](double angle, const CurveEnd& target) {
    CutCurve c;
    c.start = a_end;
    c.end = target;
    const Vec2 p2 = target.position;
    const Vec2 p1 = md.node + 0.5 * distance(p2, md.node) * unit_vector(angle);
    const int n = 32;
    for (int k = 0; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      c.points.push_back((1 - t) * (1 - t) * md.node + 2 * (1 - t) * t * p1 + t * t * p2);
    }
    c.points.back() = p2;
    return c;
  };
  CutCurve b1 = branch(straight ? plus : minus, m1);
  CutCurve b2 = branch(straight ? minus : plus, m2);
  for (const auto* c : {&b1, &b2}) {
    for (const auto& s : sides) {
      if (crosses_except_ends(c->points, s.points, tol)) fail("midpoint branch fails to reach its side");
    }
  }
  if (crosses_except_ends(b1.points, b2.points, tol) || crosses_except_ends(b1.points, phys.points, tol) ||
      crosses_except_ends(b2.points, phys.points, tol)) {
    fail("midpoint branches intersect");
  }
  md.branches = {phys, b1, b2};
  return md;
}

// ---------------------------------------------------------------------------
// Blocks

Vec2 SidePiece::eval(double f) const {
  if (on_segment) {
    if (f <= 0.0) return segment.point(t0);
    if (f >= 1.0) return segment.point(t1);
    const double a = a0 + f * (a1 - a0);
    return segment.point(segment.param_at_fraction(a / segment.length()));
  }
  return polyline_at(points, cumulative, f * length);
}

Vec2 BlockSide::eval(double u) const {
  const double target = std::clamp(u, 0.0, 1.0) * length;
  std::size_t k = 0;
  while (k + 1 < pieces.size() && offsets[k + 1] <= target) ++k;
  const auto& p = pieces[k];
  const double f = p.length > 0.0 ? (target - offsets[k]) / p.length : 0.0;
  return p.eval(std::clamp(f, 0.0, 1.0));
}

namespace {

SidePiece make_piece(const PlanarSubdivision& sub, const DomainSpec& domain, int h) {
  SidePiece p;
  const auto& he = sub.half_edges[h];
  const auto& e = sub.edges[he.edge];
  if (e.boundary) {
    p.on_segment = true;
    p.ref = e.segment;
    p.segment = domain.segment(e.segment);
    p.t0 = he.forward ? e.t0 : e.t1;
    p.t1 = he.forward ? e.t1 : e.t0;
    p.a0 = p.segment.arclength_at(p.t0);
    p.a1 = p.segment.arclength_at(p.t1);
    p.length = std::abs(p.a1 - p.a0);
  } else {
    p.points = sub.half_edge_points(h);
    p.cumulative = cumulative_length(p.points);
    p.length = p.cumulative.back();
  }
  return p;
}

void finish_side(BlockSide& s) {
  s.offsets.assign(s.pieces.size() + 1, 0.0);
  for (std::size_t k = 0; k < s.pieces.size(); ++k) s.offsets[k + 1] = s.offsets[k] + s.pieces[k].length;
  s.length = s.offsets.back();
}

}  // namespace

Vec2 BlockDecomposition::side_point(const QuadBlock& b, int side, double p) const {
  if (p <= 0.0) {
    static constexpr int first[4] = {0, 1, 3, 0};
    return b.corners[first[side]];
  }
  if (p >= 1.0) {
    static constexpr int last[4] = {1, 2, 2, 3};
    return b.corners[last[side]];
  }
  return sides[b.sides[side]].eval(b.reversed[side] ? 1.0 - p : p);
}

Vec2 BlockDecomposition::map(int bi, double s, double t) const {
  const auto& b = blocks[bi];
  const Vec2 B = side_point(b, 0, s), R = side_point(b, 1, t), T = side_point(b, 2, s), L = side_point(b, 3, t);
  const auto& c = b.corners;
  return (1 - t) * B + t * T + (1 - s) * L + s * R -
         ((1 - s) * (1 - t) * c[0] + s * (1 - t) * c[1] + s * t * c[2] + (1 - s) * t * c[3]);
}

std::array<Vec2, 2> BlockDecomposition::derivatives(int b, double s, double t) const {
  const double h = 1e-6;
  const double s0 = std::max(0.0, s - h), s1 = std::min(1.0, s + h);
  const double t0 = std::max(0.0, t - h), t1 = std::min(1.0, t + h);
  return {(map(b, s1, t) - map(b, s0, t)) / (s1 - s0), (map(b, s, t1) - map(b, s, t0)) / (t1 - t0)};
}

double BlockDecomposition::jacobian(int b, double s, double t) const {
  const auto d = derivatives(b, s, t);
  return cross(d[0], d[1]);
}

double BlockDecomposition::area(int b) const {
  const auto& g = gauss_legendre(8);
  const int cells = 8;
  double a = 0.0;
  for (int i = 0; i < cells; ++i) {
    for (int j = 0; j < cells; ++j) {
      for (std::size_t p = 0; p < g.points.size(); ++p) {
        for (std::size_t q = 0; q < g.points.size(); ++q) {
          const double s = (i + 0.5 * (g.points[p] + 1.0)) / cells;
          const double t = (j + 0.5 * (g.points[q] + 1.0)) / cells;
          a += g.weights[p] * g.weights[q] * 0.25 * jacobian(b, s, t) / (cells * cells);
        }
      }
    }
  }
  return a;
}

int BlockDecomposition::interior_irregular_nodes() const {
  int n = 0;
  for (const auto& v : vertices) {
    if (!v.on_boundary && v.blocks > 0 && v.blocks != 4) ++n;
  }
  return n;
}

BlockDecomposition build_blocks(const PlanarSubdivision& sub, const DomainSpec& domain, int threads) {
  const auto cls = classify_faces(sub);
  if (!cls.triangles.empty()) fail("build_blocks needs an all-quad subdivision");
  BlockDecomposition d;
  d.holes = sub.holes;
  for (const auto& v : sub.vertices) d.vertices.push_back({v.position, v.kind, v.on_boundary, 0});
  std::map<std::vector<int>, int> side_of;
  std::vector<int> edge_side(sub.edges.size(), -1);

  for (int f = 0; f < static_cast<int>(sub.faces.size()); ++f) {
    auto corners = cls.faces[f].corners;
    // Start at the lowest vertex id for a stable block orientation.
    std::rotate(corners.begin(), std::min_element(corners.begin(), corners.end()), corners.end());
    const auto fs = face_sides(sub, f, corners);
    QuadBlock b;
    b.face = f;
    for (int k = 0; k < 4; ++k) {
      b.corner_ids[k] = corners[k];
      b.corners[k] = sub.vertices[corners[k]].position;
      ++d.vertices[corners[k]].blocks;
    }
    for (int k = 0; k < 4; ++k) {
      std::vector<int> edges;
      for (int h : fs[k].half_edges) edges.push_back(sub.half_edges[h].edge);
      auto key = edges;
      std::sort(key.begin(), key.end());
      auto it = side_of.find(key);
      bool walk_is_canonical = false;
      if (it == side_of.end()) {
        BlockSide side;
        side.id = static_cast<int>(d.sides.size());
        side.edges = edges;
        for (int h : fs[k].half_edges) side.pieces.push_back(make_piece(sub, domain, h));
        finish_side(side);
        for (int e : edges) {
          if (edge_side[e] >= 0) {
            std::ostringstream s;
            s << "block sides do not match along edge " << e << " (hanging block corner)";
            fail(s.str());
          }
          edge_side[e] = side.id;
        }
        it = side_of.emplace(key, side.id).first;
        d.sides.push_back(std::move(side));
        walk_is_canonical = true;
      }
      b.sides[k] = it->second;
      // Bottom and right follow the walk; top and left run against it.
      b.reversed[k] = walk_is_canonical ? (k >= 2) : (k < 2);
    }
    d.blocks.push_back(b);
  }

  std::vector<double> worst(d.blocks.size(), 1e300);
  detail::parallel_for(static_cast<int>(d.blocks.size()), threads, [&](int b) {
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) worst[b] = std::min(worst[b], d.jacobian(b, (i + 0.5) / 10.0, (j + 0.5) / 10.0));
    }
  });
  for (std::size_t b = 0; b < worst.size(); ++b) {
    if (!(worst[b] > 0.0)) {
      std::ostringstream s;
      s << "block " << b << " has a non-positive Jacobian (" << worst[b] << ")";
      fail(s.str());
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Full cut stage

BlockDecomposition decompose(const DomainSpec& domain, const Topology& topo, const TraceResult& trace,
                             const VectorField& field, const CutOptions& opt) {
  SubdivisionOptions so = opt.subdivision;
  if (so.snap <= 0.0) so.snap = trace.step;
  auto curves = separatrix_curves(trace.separatrices, topo, so);
  const double tol = 1e-9 * domain.bbox().diagonal();

  // Separatrices that run into a valence-0 corner are cut back to their last
  // crossing, so the corner sits in one triangular face.
  std::map<int, std::vector<Vec2>> converging;
  auto is_v0 = [&](const CurveEnd& e) {
    return e.kind == CurveEnd::Kind::Corner && e.id >= 0 && e.id < static_cast<int>(topo.corners.size()) &&
           topo.corners[e.id].valence == 0;
  };
  std::vector<CutCurve> kept;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    CutCurve cur = curves[c];
    if (is_v0(cur.start)) {
      std::swap(cur.start, cur.end);
      std::reverse(cur.points.begin(), cur.points.end());
    }
    if (!is_v0(cur.end)) {
      kept.push_back(cur);
      continue;
    }
    if (converging.count(cur.end.id)) fail("several separatrices run into one valence-0 corner");
    double last = 0.0;
    for (std::size_t o = 0; o < curves.size(); ++o) {
      if (o == c) continue;
      for (const auto& h : polyline_hits(cur.points, curves[o].points, tol)) {
        if (distance(h.point, cur.end.position) < so.snap) continue;
        last = std::max(last, h.pa);
      }
    }
    const double n = static_cast<double>(cur.points.size() - 1);
    converging[cur.end.id] = polyline_between(cur.points, last, n);
    if (last > 0.0) {
      CutCurve head = cur;
      head.points = polyline_between(cur.points, 0.0, last);
      head.end = {CurveEnd::Kind::Interior, -1, {}, 0.0, head.points.back()};
      kept.push_back(std::move(head));
    }
  }
  curves = std::move(kept);

  auto sub = build_subdivision(domain, topo, curves, so);
  auto cls = classify_faces(sub, so);
  std::vector<Vec2> artificial;
  if (!cls.triangles.empty()) {
    for (int f : cls.triangles) {
      const auto& info = cls.faces[f];
      if (info.degenerate_corner < 0) {
        std::ostringstream s;
        s << "triangular face " << f << " has no valence-0 corner";
        fail(s.str());
      }
      const int corner = sub.vertices[info.degenerate_corner].id;
      const auto it = converging.find(corner);
      const auto md = midpoint_division(domain, sub, info, static_cast<int>(artificial.size()), &field, trace.step,
                                        it != converging.end() ? &it->second : nullptr);
      artificial.push_back(md.node);
      for (const auto& b : md.branches) curves.push_back(b);
    }
    const int degenerate = static_cast<int>(cls.triangles.size());
    sub = build_subdivision(domain, topo, curves, so);
    cls = classify_faces(sub, so);
    if (!cls.triangles.empty()) fail("midpoint division left a triangular face");
    auto d = build_blocks(sub, domain, opt.threads);
    d.artificial_nodes = artificial;
    d.degenerate_faces = degenerate;
    return d;
  }
  return build_blocks(sub, domain, opt.threads);
}

// ---------------------------------------------------------------------------
// Splitting

double scaled_jacobian(const BlockDecomposition& d, int block, double s0, double s1, double t0, double t1,
                       int samples) {
  double worst = 1e300;
  for (int i = 0; i < samples; ++i) {
    for (int j = 0; j < samples; ++j) {
      const double s = s0 + (s1 - s0) * i / (samples - 1);
      const double t = t0 + (t1 - t0) * j / (samples - 1);
      const auto g = d.derivatives(block, s, t);
      worst = std::min(worst, cross(g[0], g[1]) / (norm(g[0]) * norm(g[1])));
    }
  }
  return worst;
}

BlockSplit SplitSpec::for_block(int b) const {
  const auto it = per_block.find(b);
  if (it != per_block.end()) return it->second;
  return {n, n, 1.0, 1.0};
}

std::vector<double> graded_points(int n, double ratio) {
  if (n < 1) throw Error(ErrorKind::Config, "split count must be positive");
  if (!(ratio > 0.0)) throw Error(ErrorKind::Config, "grading ratio must be positive");
  std::vector<double> x(n + 1, 0.0);
  const double q = n > 1 ? std::pow(ratio, 1.0 / (n - 1)) : 1.0;
  double w = 1.0, total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += w;
    x[i + 1] = total;
    w *= q;
  }
  for (int i = 1; i < n; ++i) x[i] /= total;
  x[n] = 1.0;
  return x;
}

int QuadMesh::euler_characteristic() const {
  std::set<std::pair<int, int>> edges;
  for (const auto& q : quads) {
    for (int k = 0; k < 4; ++k) edges.insert(std::minmax(q[k], q[(k + 1) % 4]));
  }
  return static_cast<int>(nodes.size()) - static_cast<int>(edges.size()) + static_cast<int>(quads.size()) + 1;
}

QuadMesh isoparametric_split(const BlockDecomposition& d, const SplitSpec& spec, int order, int threads) {
  QuadMesh m;
  m.order = std::max(1, order);
  const int nb = static_cast<int>(d.blocks.size());
  std::vector<std::vector<double>> S(nb), T(nb);
  for (int b = 0; b < nb; ++b) {
    const auto bs = spec.for_block(b);
    S[b] = graded_points(bs.ns, bs.ratio_s);
    T[b] = graded_points(bs.nt, bs.ratio_t);
  }
  // Shared sides must receive the same points from both blocks.
  std::vector<std::vector<double>> side_params(d.sides.size());
  for (int b = 0; b < nb; ++b) {
    const auto& blk = d.blocks[b];
    for (int k = 0; k < 4; ++k) {
      std::vector<double> p = (k % 2 == 0) ? S[b] : T[b];
      if (blk.reversed[k]) {
        std::reverse(p.begin(), p.end());
        for (auto& x : p) x = 1.0 - x;
      }
      auto& known = side_params[blk.sides[k]];
      if (known.empty()) {
        known = p;
        continue;
      }
      bool same = known.size() == p.size();
      for (std::size_t i = 0; same && i < p.size(); ++i) same = std::abs(known[i] - p[i]) <= 1e-10;
      if (!same) {
        std::ostringstream s;
        s << "non-conforming split request: block " << b << " side " << k << " disagrees with its neighbour";
        throw Error(ErrorKind::Decomposition, s.str());
      }
    }
  }

  std::map<int, int> corner_node;
  std::map<std::pair<int, int>, int> side_node;
  auto add = [&](Vec2 p) {
    m.nodes.push_back(p);
    return static_cast<int>(m.nodes.size()) - 1;
  };
  for (int b = 0; b < nb; ++b) {
    const auto& blk = d.blocks[b];
    const int ns = static_cast<int>(S[b].size()) - 1, nt = static_cast<int>(T[b].size()) - 1;
    std::vector<int> grid(static_cast<std::size_t>(ns + 1) * (nt + 1), -1);
    auto at = [&](int i, int j) -> int& { return grid[static_cast<std::size_t>(j) * (ns + 1) + i]; };
    const std::array<std::array<int, 2>, 4> corner_ij{{{0, 0}, {ns, 0}, {ns, nt}, {0, nt}}};
    for (int k = 0; k < 4; ++k) {
      auto it = corner_node.find(blk.corner_ids[k]);
      if (it == corner_node.end()) it = corner_node.emplace(blk.corner_ids[k], add(blk.corners[k])).first;
      at(corner_ij[k][0], corner_ij[k][1]) = it->second;
    }
    for (int k = 0; k < 4; ++k) {
      const int n = (k % 2 == 0) ? ns : nt;
      const int side = blk.sides[k];
      for (int i = 1; i < n; ++i) {
        const int canon = blk.reversed[k] ? n - i : i;
        auto it = side_node.find({side, canon});
        if (it == side_node.end()) {
          it = side_node.emplace(std::make_pair(side, canon), add(d.sides[side].eval(side_params[side][canon]))).first;
        }
        const int ii = k == 0 || k == 2 ? i : (k == 1 ? ns : 0);
        const int jj = k == 1 || k == 3 ? i : (k == 0 ? 0 : nt);
        at(ii, jj) = it->second;
      }
    }
    const std::size_t first = m.nodes.size();
    for (int j = 1; j < nt; ++j) {
      for (int i = 1; i < ns; ++i) at(i, j) = add({});
    }
    detail::parallel_for(nt > 1 ? nt - 1 : 0, threads, [&](int jm) {
      const int j = jm + 1;
      for (int i = 1; i < ns; ++i) {
        m.nodes[first + static_cast<std::size_t>(jm) * (ns - 1) + (i - 1)] = d.map(b, S[b][i], T[b][j]);
      }
    });
    for (int j = 0; j < nt; ++j) {
      for (int i = 0; i < ns; ++i) {
        m.quads.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
        m.block.push_back(b);
        m.param.push_back({S[b][i], S[b][i + 1], T[b][j], T[b][j + 1]});
      }
    }
  }

  if (m.order > 1) {
    const auto& gll = gauss_lobatto(m.order + 1);
    m.high_order.resize(m.quads.size());
    detail::parallel_for(static_cast<int>(m.quads.size()), threads, [&](int q) {
      const auto& pr = m.param[q];
      auto& out = m.high_order[q];
      for (int j = 0; j <= m.order; ++j) {
        for (int i = 0; i <= m.order; ++i) {
          const double s = pr[0] + 0.5 * (gll.points[i] + 1.0) * (pr[1] - pr[0]);
          const double t = pr[2] + 0.5 * (gll.points[j] + 1.0) * (pr[3] - pr[2]);
          out.push_back(d.map(m.block[q], s, t));
        }
      }
    });
  }
  return m;
}

bool mesh_is_conforming(const QuadMesh& m, const DomainSpec& domain) {
  std::map<std::pair<int, int>, int> count;
  for (const auto& q : m.quads) {
    for (int k = 0; k < 4; ++k) ++count[std::minmax(q[k], q[(k + 1) % 4])];
  }
  const double tol = 1e-8 * domain.bbox().diagonal();
  for (const auto& [e, c] : count) {
    if (c > 2) return false;
    if (c == 1) {
      for (int v : {e.first, e.second}) {
        if (domain.closest_point(m.nodes[v]).distance > tol) return false;
      }
    }
  }
  for (const auto& q : m.quads) {
    double a = 0.0;
    for (int k = 0; k < 4; ++k) a += cross(m.nodes[q[k]], m.nodes[q[(k + 1) % 4]]);
    if (!(a > 0.0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Serialization and output

namespace {

nlohmann::json vec_json(Vec2 p) { return nlohmann::json::array({p.x, p.y}); }
Vec2 vec_from(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

VertexKind kind_from(const std::string& s) {
  for (auto k : {VertexKind::Node, VertexKind::Corner, VertexKind::BoundaryPoint, VertexKind::Crossing,
                 VertexKind::Artificial, VertexKind::Joint}) {
    if (s == to_string(k)) return k;
  }
  throw Error(ErrorKind::Config, "unknown vertex kind '" + s + "'");
}

}  // namespace

std::string decomposition_to_json(const BlockDecomposition& d) {
  nlohmann::json j;
  j["holes"] = d.holes;
  j["degenerate_faces"] = d.degenerate_faces;
  j["interior_irregular_nodes"] = d.interior_irregular_nodes();
  auto& verts = j["vertices"] = nlohmann::json::array();
  for (const auto& v : d.vertices) {
    verts.push_back({{"position", vec_json(v.position)},
                     {"kind", to_string(v.kind)},
                     {"on_boundary", v.on_boundary},
                     {"blocks", v.blocks}});
  }
  auto& art = j["artificial_nodes"] = nlohmann::json::array();
  for (auto p : d.artificial_nodes) art.push_back(vec_json(p));
  auto& sides = j["sides"] = nlohmann::json::array();
  for (const auto& s : d.sides) {
    nlohmann::json js{{"edges", s.edges}};
    auto& pieces = js["pieces"] = nlohmann::json::array();
    for (const auto& p : s.pieces) {
      if (p.on_segment) {
        pieces.push_back({{"segment", {p.ref.loop, p.ref.index}}, {"t0", p.t0}, {"t1", p.t1}});
      } else {
        nlohmann::json pts = nlohmann::json::array();
        for (auto x : p.points) pts.push_back(vec_json(x));
        pieces.push_back({{"points", pts}});
      }
    }
    sides.push_back(std::move(js));
  }
  auto& blocks = j["blocks"] = nlohmann::json::array();
  for (const auto& b : d.blocks) {
    nlohmann::json corners = nlohmann::json::array();
    for (auto p : b.corners) corners.push_back(vec_json(p));
    blocks.push_back({{"face", b.face},
                      {"corner_ids", b.corner_ids},
                      {"corners", corners},
                      {"sides", b.sides},
                      {"reversed", b.reversed}});
  }
  return j.dump(1);
}

BlockDecomposition decomposition_from_json(const std::string& text, const DomainSpec& domain) {
  BlockDecomposition d;
  try {
    const auto j = nlohmann::json::parse(text);
    d.holes = j.at("holes").get<int>();
    d.degenerate_faces = j.at("degenerate_faces").get<int>();
    for (const auto& v : j.at("vertices")) {
      d.vertices.push_back({vec_from(v.at("position")), kind_from(v.at("kind").get<std::string>()),
                            v.at("on_boundary").get<bool>(), v.at("blocks").get<int>()});
    }
    for (const auto& p : j.at("artificial_nodes")) d.artificial_nodes.push_back(vec_from(p));
    for (const auto& js : j.at("sides")) {
      BlockSide s;
      s.id = static_cast<int>(d.sides.size());
      s.edges = js.at("edges").get<std::vector<int>>();
      for (const auto& jp : js.at("pieces")) {
        SidePiece p;
        if (jp.contains("segment")) {
          p.on_segment = true;
          p.ref = {jp.at("segment").at(0).get<int>(), jp.at("segment").at(1).get<int>()};
          p.segment = domain.segment(p.ref);
          p.t0 = jp.at("t0").get<double>();
          p.t1 = jp.at("t1").get<double>();
          p.a0 = p.segment.arclength_at(p.t0);
          p.a1 = p.segment.arclength_at(p.t1);
          p.length = std::abs(p.a1 - p.a0);
        } else {
          for (const auto& x : jp.at("points")) p.points.push_back(vec_from(x));
          p.cumulative = cumulative_length(p.points);
          p.length = p.cumulative.back();
        }
        s.pieces.push_back(std::move(p));
      }
      finish_side(s);
      d.sides.push_back(std::move(s));
    }
    for (const auto& jb : j.at("blocks")) {
      QuadBlock b;
      b.face = jb.at("face").get<int>();
      b.corner_ids = jb.at("corner_ids").get<std::array<int, 4>>();
      for (int k = 0; k < 4; ++k) b.corners[k] = vec_from(jb.at("corners").at(k));
      b.sides = jb.at("sides").get<std::array<int, 4>>();
      b.reversed = jb.at("reversed").get<std::array<bool, 4>>();
      for (int s : b.sides) {
        if (s < 0 || s >= static_cast<int>(d.sides.size())) throw Error(ErrorKind::Config, "block side out of range");
      }
      d.blocks.push_back(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("invalid blocks file: ") + e.what());
  }
  return d;
}

void write_quad_msh(const QuadMesh& m, std::ostream& out, bool high_order) {
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  const bool ho = high_order && m.order > 1 && m.high_order.size() == m.quads.size();
  std::vector<Vec2> nodes = m.nodes;
  std::vector<std::array<int, 4>> quads;
  std::vector<int> block;
  if (!ho) {
    quads = m.quads;
    block = m.block;
  } else {
    // Each child becomes order x order linear quads through its tensor nodes.
    std::map<std::pair<double, double>, int> index;
    nodes.clear();
    auto node = [&](Vec2 p) {
      const auto key = std::make_pair(p.x, p.y);
      auto it = index.find(key);
      if (it != index.end()) return it->second;
      nodes.push_back(p);
      return index[key] = static_cast<int>(nodes.size()) - 1;
    };
    const int n = m.order + 1;
    for (std::size_t q = 0; q < m.quads.size(); ++q) {
      const auto& h = m.high_order[q];
      for (int j = 0; j < m.order; ++j) {
        for (int i = 0; i < m.order; ++i) {
          quads.push_back({node(h[j * n + i]), node(h[j * n + i + 1]), node(h[(j + 1) * n + i + 1]),
                           node(h[(j + 1) * n + i])});
          block.push_back(m.block[q]);
        }
      }
    }
  }
  out << "$Nodes\n" << nodes.size() << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < nodes.size(); ++i) out << i + 1 << " " << nodes[i].x << " " << nodes[i].y << " 0\n";
  out << "$EndNodes\n$Elements\n" << quads.size() << "\n";
  for (std::size_t q = 0; q < quads.size(); ++q) {
    out << q + 1 << " 3 2 1 " << block[q] + 1;
    for (int v : quads[q]) out << " " << v + 1;
    out << "\n";
  }
  out << "$EndElements\n";
}

void write_quad_vtk(const QuadMesh& m, std::ostream& out) {
  out.precision(17);
  out << "# vtk DataFile Version 3.0\nquadfield quad mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << m.nodes.size() << " double\n";
  for (auto p : m.nodes) out << p.x << " " << p.y << " 0\n";
  out << "CELLS " << m.quads.size() << " " << 5 * m.quads.size() << "\n";
  for (const auto& q : m.quads) out << "4 " << q[0] << " " << q[1] << " " << q[2] << " " << q[3] << "\n";
  out << "CELL_TYPES " << m.quads.size() << "\n";
  for (std::size_t q = 0; q < m.quads.size(); ++q) out << "9\n";
  out << "CELL_DATA " << m.quads.size() << "\nSCALARS block int 1\nLOOKUP_TABLE default\n";
  for (int b : m.block) out << b << "\n";
}

void write_blocks_svg(const DomainSpec& domain, const BlockDecomposition& d, const QuadMesh* mesh, std::ostream& out) {
  const BBox b = domain.bbox();
  const double w = b.hi.x - b.lo.x, hgt = b.hi.y - b.lo.y;
  const double scale = 800.0 / std::max(w, hgt);
  auto X = [&](Vec2 p) { return (p.x - b.lo.x) * scale + 10.0; };
  auto Y = [&](Vec2 p) { return (b.hi.y - p.y) * scale + 10.0; };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * scale + 20 << "\" height=\"" << hgt * scale + 20
      << "\">\n";
  for (int k = 0; k < static_cast<int>(d.blocks.size()); ++k) {
    const int hue = static_cast<int>(std::fmod(k * 137.508, 360.0));
    out << "<polygon fill=\"hsl(" << hue << ",55%,78%)\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    const int n = 24;
    for (int i = 0; i < n; ++i) out << X(d.map(k, double(i) / n, 0)) << "," << Y(d.map(k, double(i) / n, 0)) << " ";
    for (int i = 0; i < n; ++i) out << X(d.map(k, 1, double(i) / n)) << "," << Y(d.map(k, 1, double(i) / n)) << " ";
    for (int i = n; i > 0; --i) out << X(d.map(k, double(i) / n, 1)) << "," << Y(d.map(k, double(i) / n, 1)) << " ";
    for (int i = n; i > 0; --i) out << X(d.map(k, 0, double(i) / n)) << "," << Y(d.map(k, 0, double(i) / n)) << " ";
    out << "\"/>\n";
  }
  if (mesh) {
    for (const auto& q : mesh->quads) {
      out << "<polygon fill=\"none\" stroke=\"#444\" stroke-width=\"0.4\" points=\"";
      for (int v : q) out << X(mesh->nodes[v]) << "," << Y(mesh->nodes[v]) << " ";
      out << "\"/>\n";
    }
  }
  for (const auto& v : d.vertices) {
    if (v.on_boundary || v.blocks == 0 || v.blocks == 4) continue;
    out << "<circle cx=\"" << X(v.position) << "\" cy=\"" << Y(v.position)
        << "\" r=\"7\" fill=\"none\" stroke=\"#c00\" stroke-width=\"2\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace quadfield

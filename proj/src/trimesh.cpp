#include "quadfield/trimesh.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace quadfield {

namespace {

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

// Incremental Bowyer-Watson triangulation with a directed-edge owner map.
class Delaunay {
 public:
  std::vector<Vec2> pts;
  std::vector<std::array<int, 3>> tris;
  std::vector<char> alive;
  std::unordered_map<std::uint64_t, int> owner;

  void add_tri(int a, int b, int c) {
    const int id = static_cast<int>(tris.size());
    tris.push_back({a, b, c});
    alive.push_back(1);
    owner[edge_key(a, b)] = id;
    owner[edge_key(b, c)] = id;
    owner[edge_key(c, a)] = id;
  }

  void kill(int t) {
    alive[t] = 0;
    const auto& T = tris[t];
    for (int k = 0; k < 3; ++k) {
      auto it = owner.find(edge_key(T[k], T[(k + 1) % 3]));
      if (it != owner.end() && it->second == t) owner.erase(it);
    }
  }

  int neighbor(int a, int b) const {
    auto it = owner.find(edge_key(b, a));
    return it == owner.end() ? -1 : it->second;
  }

  bool has_edge(int a, int b) const {
    return owner.count(edge_key(a, b)) > 0 || owner.count(edge_key(b, a)) > 0;
  }

  int insert(Vec2 p) {
    int start = -1;
    double best = -1e300;
    for (int t = 0; t < static_cast<int>(tris.size()); ++t) {
      if (!alive[t]) continue;
      const auto& T = tris[t];
      const double m = std::min({orient(pts[T[0]], pts[T[1]], p), orient(pts[T[1]], pts[T[2]], p),
                                 orient(pts[T[2]], pts[T[0]], p)});
      if (m > best) { best = m; start = t; }
      if (m >= 0.0) break;
    }
    if (start < 0) throw Error(ErrorKind::Solver, "mesher: point location failed");
    const int pid = static_cast<int>(pts.size());
    pts.push_back(p);

    std::vector<int> cavity{start};
    std::unordered_set<int> in_cavity{start};
    for (std::size_t i = 0; i < cavity.size(); ++i) {
      const auto T = tris[cavity[i]];
      for (int k = 0; k < 3; ++k) {
        const int nb = neighbor(T[k], T[(k + 1) % 3]);
        if (nb < 0 || in_cavity.count(nb)) continue;
        const auto& N = tris[nb];
        if (incircle(pts[N[0]], pts[N[1]], pts[N[2]], p) > 0.0) {
          in_cavity.insert(nb);
          cavity.push_back(nb);
        }
      }
    }
    std::vector<std::array<int, 2>> rim;
    for (int t : cavity) {
      const auto& T = tris[t];
      for (int k = 0; k < 3; ++k) {
        const int a = T[k], b = T[(k + 1) % 3];
        const int nb = neighbor(a, b);
        if (nb < 0 || !in_cavity.count(nb)) rim.push_back({a, b});
      }
    }
    for (int t : cavity) kill(t);
    for (const auto& e : rim) add_tri(e[0], e[1], pid);
    return pid;
  }
};

struct BoundaryEdge {
  int a, b;
  SegmentRef seg;
  double ta, tb;
};

double turning(const CurveSegment& seg, double ta, double tb) {
  constexpr int kSub = 8;
  double total = 0.0;
  double prev = tangent_angle(seg, ta);
  for (int k = 1; k <= kSub; ++k) {
    const double th = tangent_angle(seg, ta + (tb - ta) * k / kSub);
    total += std::abs(wrap_angle(th - prev));
    prev = th;
  }
  return total;
}

double arclength_midpoint(const CurveSegment& seg, double ta, double tb) {
  const double L = seg.length();
  if (L <= 0.0) return 0.5 * (ta + tb);
  const double s = 0.5 * (seg.arclength_at(ta) + seg.arclength_at(tb));
  return seg.param_at_fraction(s / L);
}

// Parameters splitting a segment into pieces of length <= h turning at most pi/3.
std::vector<double> discretize_segment(const CurveSegment& seg, double h) {
  const int n = std::max(1, static_cast<int>(std::ceil(seg.length() / h - 1e-9)));
  std::vector<double> ts;
  for (int i = 0; i <= n; ++i) ts.push_back(seg.param_at_fraction(static_cast<double>(i) / n));
  for (int depth = 0; depth < 10; ++depth) {
    std::vector<double> refined{ts.front()};
    bool changed = false;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      if (turning(seg, ts[i], ts[i + 1]) > kPi / 3.0) {
        refined.push_back(arclength_midpoint(seg, ts[i], ts[i + 1]));
        changed = true;
      }
      refined.push_back(ts[i + 1]);
    }
    ts = std::move(refined);
    if (!changed) break;
  }
  return ts;
}

double polyline_distance(const std::vector<std::vector<Vec2>>& lines, Vec2 p) {
  double best = 1e300;
  for (const auto& line : lines) {
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      const Vec2 a = line[i], b = line[i + 1];
      const Vec2 d = b - a;
      const double len2 = dot(d, d);
      const double s = len2 > 0.0 ? std::clamp(dot(p - a, d) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, distance(a + s * d, p));
    }
  }
  return best;
}

std::string suggest_h(double h) {
  std::ostringstream s;
  s << "; try target_h <= " << 0.5 * h;
  return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// TriMesh

void TriMesh::build_adjacency() {
  adjacency.assign(elements.size(), {});
  std::unordered_map<std::uint64_t, std::pair<int, int>> owners;
  for (int e = 0; e < num_elements(); ++e) {
    const auto& v = elements[e].v;
    for (int k = 0; k < 3; ++k) {
      const int a = v[k], b = v[(k + 1) % 3];
      if (owners.count(edge_key(a, b))) throw Error(ErrorKind::Solver, "non-manifold mesh edge");
      owners[edge_key(a, b)] = {e, k};
    }
  }
  for (int e = 0; e < num_elements(); ++e) {
    const auto& v = elements[e].v;
    for (int k = 0; k < 3; ++k) {
      auto it = owners.find(edge_key(v[(k + 1) % 3], v[k]));
      if (it != owners.end()) adjacency[e][k] = {it->second.first, it->second.second};
    }
  }
  bbox_extent = std::max(bbox().diagonal(), 1e-300);
}

BBox TriMesh::bbox() const {
  BBox b;
  for (const auto& el : elements) {
    for (auto p : el.nodes) b.expand(p);
  }
  for (auto p : vertices) b.expand(p);
  return b;
}

double TriMesh::min_edge_length() const {
  double m = 1e300;
  for (const auto& el : elements) {
    for (int k = 0; k < 3; ++k) m = std::min(m, distance(vertices[el.v[k]], vertices[el.v[(k + 1) % 3]]));
  }
  return m;
}

int TriMesh::num_edges() const {
  int interior = 0, boundary = 0;
  for (int e = 0; e < num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      if (adjacency[e][k].element < 0) ++boundary;
      else ++interior;
    }
  }
  return boundary + interior / 2;
}

// ---------------------------------------------------------------------------
// Background mesher

TriMesh generate_background_mesh(const DomainSpec& domain, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::Config, "target_h must be positive");
  const double diag = domain.bbox().diagonal();
  if (h >= diag) throw Error(ErrorKind::Config, "target_h must be smaller than the domain bounding-box diagonal");

  Delaunay dt;
  const BBox bb = domain.bbox();
  const Vec2 center = 0.5 * (bb.lo + bb.hi);
  const double R = 20.0 * diag;
  for (int k = 0; k < 3; ++k) {
    const double a = kHalfPi + k * 2.0 * kPi / 3.0;
    dt.pts.push_back(center + R * unit_vector(a));
  }
  dt.add_tri(0, 1, 2);

  // Boundary sampling.
  std::vector<BoundaryEdge> bedges;
  std::vector<std::vector<int>> loop_vertices;
  for (int l = 0; l < static_cast<int>(domain.loops().size()); ++l) {
    const auto& loop = domain.loop(l);
    std::vector<std::pair<int, double>> verts;
    for (int s = 0; s < static_cast<int>(loop.segments.size()); ++s) {
      const auto ts = discretize_segment(loop.segments[s], h);
      for (std::size_t i = 0; i + 1 < ts.size(); ++i) verts.emplace_back(s, ts[i]);
    }
    if (verts.size() < 3) throw Error(ErrorKind::Solver, "boundary loop too coarse for target_h" + suggest_h(h));
    std::vector<int> ids;
    for (const auto& [s, t] : verts) ids.push_back(dt.insert(loop.segments[s].point(t)));
    const int n = static_cast<int>(verts.size());
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      const int s = verts[i].first;
      const double tb = (j != 0 && verts[j].first == s) ? verts[j].second : 1.0;
      bedges.push_back({ids[i], ids[j], {l, s}, verts[i].second, tb});
    }
    loop_vertices.push_back(ids);
  }

  // Feature-size check: boundary points far apart along their loop (or on
  // different loops) must not nearly touch.
  {
    struct Tagged { Vec2 p; int loop; double s; double perimeter; };
    std::vector<Tagged> all;
    for (int l = 0; l < static_cast<int>(loop_vertices.size()); ++l) {
      const auto& ids = loop_vertices[l];
      const int n = static_cast<int>(ids.size());
      std::vector<double> arc(n + 1, 0.0);
      for (int i = 0; i < n; ++i) arc[i + 1] = arc[i] + distance(dt.pts[ids[i]], dt.pts[ids[(i + 1) % n]]);
      for (int i = 0; i < n; ++i) all.push_back({dt.pts[ids[i]], l, arc[i], arc[n]});
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        const double d = distance(all[i].p, all[j].p);
        if (d >= 0.1 * h) continue;
        double along = 1e300;
        if (all[i].loop == all[j].loop) {
          const double ds = std::abs(all[i].s - all[j].s);
          along = std::min(ds, all[i].perimeter - ds);
        }
        if (d < 0.25 * along) throw Error(ErrorKind::Solver, "target_h exceeds the local feature size" + suggest_h(h));
      }
    }
  }

  std::unordered_set<int> boundary_points;
  for (const auto& ids : loop_vertices) boundary_points.insert(ids.begin(), ids.end());

  // Interior lattice.
  std::vector<std::vector<Vec2>> polylines;
  for (int l = 0; l < static_cast<int>(domain.loops().size()); ++l) polylines.push_back(domain.sample_loop(l, 32));
  const double dy = h * std::sqrt(3.0) / 2.0;
  int row = 0;
  for (double y = bb.lo.y + 0.5 * dy; y < bb.hi.y; y += dy, ++row) {
    const double x0 = bb.lo.x + ((row % 2) ? 0.5 * h : 0.0) + 0.25 * h;
    for (double x = x0; x < bb.hi.x; x += h) {
      const Vec2 p{x, y};
      if (!domain.contains(p)) continue;
      if (polyline_distance(polylines, p) < 0.7 * h) continue;
      dt.insert(p);
    }
  }

  // Boundary edge recovery by curve-midpoint splitting.
  for (int round = 0;; ++round) {
    std::vector<BoundaryEdge> next;
    bool missing = false;
    for (const auto& e : bedges) {
      if (dt.has_edge(e.a, e.b)) { next.push_back(e); continue; }
      missing = true;
      const auto& seg = domain.segment(e.seg);
      const double tm = arclength_midpoint(seg, e.ta, e.tb);
      const int m = dt.insert(seg.point(tm));
      boundary_points.insert(m);
      next.push_back({e.a, m, e.seg, e.ta, tm});
      next.push_back({m, e.b, e.seg, tm, e.tb});
    }
    bedges = std::move(next);
    if (!missing) break;
    if (round > 30) throw Error(ErrorKind::Solver, "boundary recovery failed" + suggest_h(h));
  }

  // Inside/outside by flooding across constrained edges (0-1 BFS on parity).
  std::unordered_set<std::uint64_t> constrained;
  for (const auto& e : bedges) {
    constrained.insert(edge_key(e.a, e.b));
    constrained.insert(edge_key(e.b, e.a));
  }
  std::vector<int> level(dt.tris.size(), -1);
  std::deque<int> queue;
  for (int t = 0; t < static_cast<int>(dt.tris.size()); ++t) {
    if (!dt.alive[t]) continue;
    const auto& T = dt.tris[t];
    if (T[0] < 3 || T[1] < 3 || T[2] < 3) { level[t] = 0; queue.push_back(t); }
  }
  while (!queue.empty()) {
    const int t = queue.front();
    queue.pop_front();
    const auto T = dt.tris[t];
    for (int k = 0; k < 3; ++k) {
      const int a = T[k], b = T[(k + 1) % 3];
      const int nb = dt.neighbor(a, b);
      if (nb < 0) continue;
      const int w = constrained.count(edge_key(a, b)) ? 1 : 0;
      if (level[nb] < 0 || level[nb] > level[t] + w) {
        level[nb] = level[t] + w;
        if (w == 0) queue.push_front(nb);
        else queue.push_back(nb);
      }
    }
  }

  TriMesh mesh;
  std::vector<int> remap(dt.pts.size(), -1);
  std::vector<std::array<int, 3>> kept;
  for (int t = 0; t < static_cast<int>(dt.tris.size()); ++t) {
    if (!dt.alive[t] || level[t] < 0 || level[t] % 2 == 0) continue;
    kept.push_back(dt.tris[t]);
  }
  std::vector<char> is_boundary;
  for (auto& T : kept) {
    for (int& v : T) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(dt.pts[v]);
        is_boundary.push_back(boundary_points.count(v) ? 1 : 0);
      }
      v = remap[v];
    }
  }
  if (kept.empty()) throw Error(ErrorKind::Solver, "mesher produced no triangles" + suggest_h(h));

  // Laplacian smoothing of interior vertices, rejecting inverting moves.
  std::vector<std::vector<int>> vtris(mesh.vertices.size());
  std::vector<std::set<int>> nbrs(mesh.vertices.size());
  for (int t = 0; t < static_cast<int>(kept.size()); ++t) {
    for (int k = 0; k < 3; ++k) {
      vtris[kept[t][k]].push_back(t);
      nbrs[kept[t][k]].insert(kept[t][(k + 1) % 3]);
      nbrs[kept[t][k]].insert(kept[t][(k + 2) % 3]);
    }
  }
  for (int pass = 0; pass < 3; ++pass) {
    for (int v = 0; v < static_cast<int>(mesh.vertices.size()); ++v) {
      if (is_boundary[v] || nbrs[v].empty()) continue;
      Vec2 avg{};
      for (int n : nbrs[v]) avg += mesh.vertices[n];
      avg = avg / static_cast<double>(nbrs[v].size());
      const Vec2 old = mesh.vertices[v];
      mesh.vertices[v] = avg;
      for (int t : vtris[v]) {
        const auto& T = kept[t];
        if (orient(mesh.vertices[T[0]], mesh.vertices[T[1]], mesh.vertices[T[2]]) <= 0.0) {
          mesh.vertices[v] = old;
          break;
        }
      }
    }
  }

  std::unordered_map<std::uint64_t, const BoundaryEdge*> btag;
  for (const auto& e : bedges) btag[edge_key(remap[e.a], remap[e.b])] = &e;
  mesh.order = 1;
  for (const auto& T : kept) {
    CurvedTriangle el;
    el.v = T;
    for (int k = 0; k < 3; ++k) {
      el.nodes.push_back(mesh.vertices[T[k]]);
      auto it = btag.find(edge_key(T[k], T[(k + 1) % 3]));
      if (it != btag.end()) el.edges[k] = {true, it->second->seg, it->second->ta, it->second->tb};
    }
    mesh.elements.push_back(std::move(el));
  }
  mesh.build_adjacency();

  int tagged = 0, open = 0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      if (mesh.elements[e].edges[k].boundary) ++tagged;
      if (mesh.adjacency[e][k].element < 0) ++open;
    }
  }
  if (tagged != static_cast<int>(bedges.size()) || open != tagged) {
    throw Error(ErrorKind::Solver, "mesher produced a non-conforming boundary" + suggest_h(h));
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// Curving and element maps

double edge_curve_parameter(const DomainSpec& domain, const EdgeTag& tag, double sigma) {
  if (sigma <= -1.0) return tag.t0;
  if (sigma >= 1.0) return tag.t1;
  const auto& seg = domain.segment(tag.segment);
  const double L = seg.length();
  const double s0 = seg.arclength_at(tag.t0);
  const double s1 = seg.arclength_at(tag.t1);
  const double s = s0 + 0.5 * (sigma + 1.0) * (s1 - s0);
  return seg.param_at_fraction(L > 0.0 ? s / L : 0.0);
}

namespace {

Vec2 curve_at_sigma(const DomainSpec& domain, const EdgeTag& tag, double sigma) {
  return domain.segment(tag.segment).point(edge_curve_parameter(domain, tag, sigma));
}

}  // namespace

TriMesh elevate_and_curve(const TriMesh& linear, int order, const DomainSpec& domain) {
  if (linear.order != 1) throw Error(ErrorKind::Solver, "elevate_and_curve expects a linear mesh");
  TriMesh out = linear;
  out.order = order;
  const RefTriangle& R = RefTriangle::get(order);
  for (auto& el : out.elements) {
    const std::array<Vec2, 3> X{linear.vertices[el.v[0]], linear.vertices[el.v[1]], linear.vertices[el.v[2]]};
    el.nodes.assign(R.num_nodes(), Vec2{});
    for (int n = 0; n < R.num_nodes(); ++n) {
      const auto lam = RefTriangle::barycentric(R.nodes()[n]);
      Vec2 x = lam[0] * X[0] + lam[1] * X[1] + lam[2] * X[2];
      for (int k = 0; k < 3; ++k) {
        if (!el.edges[k].boundary) continue;
        const int i = k, j = (k + 1) % 3;
        const double sigma = lam[j] - lam[i];
        const double denom = 1.0 - sigma * sigma;
        if (denom < 1e-14 || lam[i] * lam[j] <= 0.0) continue;
        const Vec2 chord = lerp(X[i], X[j], 0.5 * (sigma + 1.0));
        const Vec2 d = curve_at_sigma(domain, el.edges[k], sigma) - chord;
        x += (4.0 * lam[i] * lam[j] / denom) * d;
      }
      el.nodes[n] = x;
    }
    // Vertex nodes keep their exact positions.
    for (int k = 0; k < 3; ++k) el.nodes[R.vertex_node(k)] = X[k];
  }
  std::vector<int> bad;
  for (int e = 0; e < out.num_elements(); ++e) {
    if (!(min_jacobian(out, e) > 0.0)) bad.push_back(e);
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "negative Jacobian after curving in element(s)";
    for (int e : bad) msg << ' ' << e;
    throw Error(ErrorKind::Solver, msg.str());
  }
  return out;
}

Vec2 map_to_physical(const TriMesh& mesh, int elem, Vec2 xi) {
  const auto phi = mesh.ref().basis(xi);
  const auto& nodes = mesh.elements[elem].nodes;
  Vec2 x{};
  for (int n = 0; n < phi.size(); ++n) x += phi[n] * nodes[n];
  return x;
}

Eigen::Matrix2d jacobian(const TriMesh& mesh, int elem, Vec2 xi) {
  Eigen::VectorXd dr, ds;
  mesh.ref().basis_grad(xi, dr, ds);
  const auto& nodes = mesh.elements[elem].nodes;
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  for (int n = 0; n < dr.size(); ++n) {
    J(0, 0) += nodes[n].x * dr[n];
    J(0, 1) += nodes[n].x * ds[n];
    J(1, 0) += nodes[n].y * dr[n];
    J(1, 1) += nodes[n].y * ds[n];
  }
  return J;
}

std::optional<Vec2> invert_map(const TriMesh& mesh, int elem, Vec2 x) {
  const auto& nodes = mesh.elements[elem].nodes;
  BBox eb;
  for (auto p : nodes) eb.expand(p);
  const double size = eb.diagonal();
  if (!eb.contains(x, 0.25 * size)) return std::nullopt;
  const double tol = 1e-12 * std::max(mesh.bbox_extent, size);
  Vec2 xi{-1.0 / 3.0, -1.0 / 3.0};
  for (int it = 0; it < 50; ++it) {
    const Vec2 r = map_to_physical(mesh, elem, xi) - x;
    if (norm(r) < tol) {
      if (RefTriangle::inside(xi, 1e-8)) return xi;
      return std::nullopt;
    }
    const Eigen::Matrix2d J = jacobian(mesh, elem, xi);
    const double det = J.determinant();
    if (!(std::abs(det) > 0.0)) return std::nullopt;
    const Eigen::Vector2d d = J.inverse() * Eigen::Vector2d(r.x, r.y);
    xi = xi - Vec2{d[0], d[1]};
    if (std::abs(xi.x) > 10.0 || std::abs(xi.y) > 10.0) return std::nullopt;
  }
  return std::nullopt;
}

double element_area(const TriMesh& mesh, int elem) {
  const auto& R = mesh.ref();
  double a = 0.0;
  for (std::size_t q = 0; q < R.quad_points().size(); ++q) {
    a += R.quad_weights()[q] * jacobian(mesh, elem, R.quad_points()[q]).determinant();
  }
  return a;
}

double mesh_area(const TriMesh& mesh) {
  double a = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) a += element_area(mesh, e);
  return a;
}

double min_jacobian(const TriMesh& mesh, int elem) {
  const auto& R = mesh.ref();
  double m = 1e300;
  for (auto xi : R.quad_points()) m = std::min(m, jacobian(mesh, elem, xi).determinant());
  for (auto xi : R.nodes()) m = std::min(m, jacobian(mesh, elem, xi).determinant());
  return m;
}

// ---------------------------------------------------------------------------
// Gmsh

std::vector<std::array<int, 2>> gmsh_triangle_ordering(int p) {
  std::vector<std::array<int, 2>> out;
  int off = 0;
  while (p >= 0) {
    if (p == 0) { out.push_back({off, off}); break; }
    out.push_back({off, off});
    out.push_back({off + p, off});
    out.push_back({off, off + p});
    for (int i = 1; i < p; ++i) out.push_back({off + i, off});
    for (int i = 1; i < p; ++i) out.push_back({off + p - i, off + i});
    for (int i = 1; i < p; ++i) out.push_back({off, off + p - i});
    p -= 3;
    off += 1;
  }
  return out;
}

std::vector<std::array<int, 2>> gmsh_quad_ordering(int p) {
  std::vector<std::array<int, 2>> out;
  int off = 0;
  while (p >= 0) {
    if (p == 0) { out.push_back({off, off}); break; }
    out.push_back({off, off});
    out.push_back({off + p, off});
    out.push_back({off + p, off + p});
    out.push_back({off, off + p});
    for (int i = 1; i < p; ++i) out.push_back({off + i, off});
    for (int i = 1; i < p; ++i) out.push_back({off + p, off + i});
    for (int i = 1; i < p; ++i) out.push_back({off + p - i, off + p});
    for (int i = 1; i < p; ++i) out.push_back({off, off + p - i});
    p -= 2;
    off += 1;
  }
  return out;
}

namespace {

int gmsh_triangle_type(int p) {
  static constexpr int types[] = {0, 2, 9, 21, 23, 25, 42, 43, 44, 45, 46};
  if (p < 1 || p > 10) throw Error(ErrorKind::Config, "unsupported MSH triangle order");
  return types[p];
}

int gmsh_line_type(int p) {
  static constexpr int types[] = {0, 1, 8, 26, 27, 28, 62, 63, 64, 65, 66};
  if (p < 1 || p > 10) throw Error(ErrorKind::Config, "unsupported MSH line order");
  return types[p];
}

struct Candidate {
  SegmentRef seg;
  double t;
};

std::vector<Candidate> boundary_candidates(const DomainSpec& domain, Vec2 p, double tol) {
  std::vector<Candidate> out;
  for (int l = 0; l < static_cast<int>(domain.loops().size()); ++l) {
    const auto& segs = domain.loop(l).segments;
    for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
      const auto& seg = segs[s];
      const double t = closest_parameter(seg, p);
      if (distance(seg.point(t), p) > tol) continue;
      out.push_back({{l, s}, t});
      // A vertex at the closing point of a single closed segment has two parameters.
      if (distance(seg.point(0.0), seg.point(1.0)) <= tol) {
        if (distance(seg.point(0.0), p) <= tol) { out.push_back({{l, s}, 0.0}); out.push_back({{l, s}, 1.0}); }
      }
      if (distance(seg.point(0.0), p) <= tol && t != 0.0) out.push_back({{l, s}, 0.0});
      if (distance(seg.point(1.0), p) <= tol && t != 1.0) out.push_back({{l, s}, 1.0});
    }
  }
  return out;
}

}  // namespace

TriMesh parse_msh(std::istream& in, const DomainSpec& domain) {
  std::string line;
  std::map<long, Vec2> nodes;
  std::vector<std::array<long, 3>> tris;
  bool have_format = false;
  while (in >> line) {
    if (line == "$MeshFormat") {
      double version = 0.0;
      int filetype = 0, dsize = 0;
      in >> version >> filetype >> dsize;
      if (version < 2.0 || version >= 3.0 || filetype != 0) throw Error(ErrorKind::Config, "only MSH 2.2 ASCII is supported");
      have_format = true;
      in >> line;
    } else if (line == "$Nodes") {
      long n = 0;
      in >> n;
      for (long i = 0; i < n; ++i) {
        long id = 0;
        double x = 0, y = 0, z = 0;
        in >> id >> x >> y >> z;
        nodes[id] = {x, y};
      }
      in >> line;
    } else if (line == "$Elements") {
      long n = 0;
      in >> n;
      for (long i = 0; i < n; ++i) {
        long id = 0;
        int type = 0, ntags = 0;
        in >> id >> type >> ntags;
        for (int t = 0; t < ntags; ++t) { long tag; in >> tag; }
        int nn = 0;
        if (type == 2) nn = 3;
        else if (type == 1) nn = 2;
        else if (type == 15) nn = 1;
        else throw Error(ErrorKind::Config, "unsupported MSH element type " + std::to_string(type));
        std::array<long, 3> ids{};
        for (int k = 0; k < nn; ++k) in >> ids[k];
        if (type == 2) tris.push_back(ids);
      }
      in >> line;
    } else if (!line.empty() && line[0] == '$') {
      // Skip unknown sections.
      const std::string end = "$End" + line.substr(1);
      while (in >> line && line != end) {}
    }
    if (!in) break;
  }
  if (!have_format) throw Error(ErrorKind::Config, "missing $MeshFormat");
  if (tris.empty()) throw Error(ErrorKind::Config, "MSH file contains no triangles");

  TriMesh mesh;
  std::map<long, int> index;
  for (auto& T : tris) {
    std::array<int, 3> v{};
    for (int k = 0; k < 3; ++k) {
      auto it = nodes.find(T[k]);
      if (it == nodes.end()) throw Error(ErrorKind::Config, "MSH element references unknown node");
      auto [pos, inserted] = index.emplace(T[k], static_cast<int>(mesh.vertices.size()));
      if (inserted) mesh.vertices.push_back(it->second);
      v[k] = pos->second;
    }
    if (orient(mesh.vertices[v[0]], mesh.vertices[v[1]], mesh.vertices[v[2]]) < 0.0) std::swap(v[1], v[2]);
    CurvedTriangle el;
    el.v = v;
    for (int k = 0; k < 3; ++k) el.nodes.push_back(mesh.vertices[v[k]]);
    mesh.elements.push_back(std::move(el));
  }
  mesh.order = 1;
  mesh.build_adjacency();

  const double tol = 1e-6 * domain.bbox().diagonal();
  std::unordered_map<int, std::vector<Candidate>> cands;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    auto& el = mesh.elements[e];
    for (int k = 0; k < 3; ++k) {
      if (mesh.adjacency[e][k].element >= 0) continue;
      const int a = el.v[k], b = el.v[(k + 1) % 3];
      for (int v : {a, b}) {
        if (!cands.count(v)) {
          cands[v] = boundary_candidates(domain, mesh.vertices[v], tol);
          if (cands[v].empty()) throw Error(ErrorKind::Config, "mesh/geometry mismatch: boundary vertex off the domain curves");
        }
      }
      const Vec2 mid = 0.5 * (mesh.vertices[a] + mesh.vertices[b]);
      double best = 1e300;
      EdgeTag tag;
      for (const auto& ca : cands[a]) {
        for (const auto& cb : cands[b]) {
          if (!(ca.seg == cb.seg) || ca.t == cb.t) continue;
          const auto& seg = domain.segment(ca.seg);
          const double dev = distance(seg.point(0.5 * (ca.t + cb.t)), mid);
          if (dev < best) { best = dev; tag = {true, ca.seg, ca.t, cb.t}; }
        }
      }
      if (!tag.boundary) throw Error(ErrorKind::Config, "mesh/geometry mismatch: boundary edge spans two segments");
      el.edges[k] = tag;
    }
  }
  return mesh;
}

TriMesh import_msh(const std::string& path, const DomainSpec& domain) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open mesh file '" + path + "'");
  return parse_msh(in, domain);
}

void write_msh(const TriMesh& mesh, std::ostream& out) {
  const int p = mesh.order;
  const auto order = gmsh_triangle_ordering(p);
  std::vector<Vec2> points(mesh.vertices);
  std::map<std::pair<int, int>, std::vector<int>> edge_nodes;  // keyed (lo, hi), ordered lo -> hi
  std::vector<std::vector<int>> conn(mesh.elements.size());
  auto lattice_xi = [p](int i, int j) {
    return Vec2{-1.0 + 2.0 * i / p, -1.0 + 2.0 * j / p};
  };
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (const auto& ij : order) {
      const int i = ij[0], j = ij[1];
      if (i == 0 && j == 0) { conn[e].push_back(el.v[0]); continue; }
      if (i == p && j == 0) { conn[e].push_back(el.v[1]); continue; }
      if (i == 0 && j == p) { conn[e].push_back(el.v[2]); continue; }
      int k = -1, pos = 0;
      if (j == 0) { k = 0; pos = i; }
      else if (i + j == p) { k = 1; pos = j; }
      else if (i == 0) { k = 2; pos = p - j; }
      if (k < 0) {
        conn[e].push_back(static_cast<int>(points.size()));
        points.push_back(map_to_physical(mesh, e, lattice_xi(i, j)));
        continue;
      }
      const int a = el.v[k], b = el.v[(k + 1) % 3];
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto& ids = edge_nodes[key];
      if (ids.empty()) {
        for (int m = 1; m < p; ++m) {
          const int mm = a < b ? m : p - m;  // position measured from lo
          const Vec2 xi = RefTriangle::edge_point(k, -1.0 + 2.0 * mm / p);
          ids.push_back(static_cast<int>(points.size()));
          points.push_back(map_to_physical(mesh, e, xi));
        }
      }
      conn[e].push_back(a < b ? ids[pos - 1] : ids[p - pos - 1]);
    }
  }

  std::ostringstream body;
  body.precision(17);
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << points.size() << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < points.size(); ++i) out << i + 1 << ' ' << points[i].x << ' ' << points[i].y << " 0\n";
  out << "$EndNodes\n";
  int count = mesh.num_elements();
  for (const auto& el : mesh.elements) {
    for (const auto& t : el.edges) count += t.boundary ? 1 : 0;
  }
  out << "$Elements\n" << count << "\n";
  int id = 1;
  const int ttype = gmsh_triangle_type(p);
  const int ltype = gmsh_line_type(p);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int k = 0; k < 3; ++k) {
      if (!el.edges[k].boundary) continue;
      // Line nodes: ends first, then interior, taken from the element connectivity.
      const int tag = el.edges[k].segment.loop * 1000 + el.edges[k].segment.index + 1;
      out << id++ << ' ' << ltype << " 2 " << tag << ' ' << tag << ' ' << conn[e][k] + 1 << ' '
          << conn[e][(k + 1) % 3] + 1;
      for (int m = 1; m < p; ++m) out << ' ' << conn[e][3 + k * (p - 1) + (m - 1)] + 1;
      out << '\n';
    }
  }
  for (int e = 0; e < mesh.num_elements(); ++e) {
    out << id++ << ' ' << ttype << " 2 1 1";
    for (int n : conn[e]) out << ' ' << n + 1;
    out << '\n';
  }
  out << "$EndElements\n";
}

// ---------------------------------------------------------------------------
// VTK

void write_vtk(const TriMesh& mesh, std::ostream& out, const std::vector<NodalField>& fields, int m) {
  const auto& R = mesh.ref();
  std::vector<Vec2> lattice;
  std::vector<std::array<int, 3>> local;
  std::map<std::pair<int, int>, int> idx;
  for (int j = 0; j <= m; ++j) {
    for (int i = 0; i + j <= m; ++i) {
      idx[{i, j}] = static_cast<int>(lattice.size());
      lattice.push_back({-1.0 + 2.0 * i / m, -1.0 + 2.0 * j / m});
    }
  }
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i + j < m; ++i) {
      local.push_back({idx[{i, j}], idx[{i + 1, j}], idx[{i, j + 1}]});
      if (i + j + 1 < m) local.push_back({idx[{i + 1, j}], idx[{i + 1, j + 1}], idx[{i, j + 1}]});
    }
  }
  std::vector<Eigen::VectorXd> phis;
  for (auto xi : lattice) phis.push_back(R.basis(xi));
  const int npe = static_cast<int>(lattice.size());
  const int ne = mesh.num_elements();
  out.precision(12);
  out << "# vtk DataFile Version 3.0\nquadfield mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << npe * ne << " double\n";
  for (int e = 0; e < ne; ++e) {
    for (auto xi : lattice) {
      const Vec2 p = map_to_physical(mesh, e, xi);
      out << p.x << ' ' << p.y << " 0\n";
    }
  }
  const int nc = static_cast<int>(local.size()) * ne;
  out << "CELLS " << nc << ' ' << nc * 4 << '\n';
  for (int e = 0; e < ne; ++e) {
    for (const auto& t : local) out << "3 " << e * npe + t[0] << ' ' << e * npe + t[1] << ' ' << e * npe + t[2] << '\n';
  }
  out << "CELL_TYPES " << nc << '\n';
  for (int c = 0; c < nc; ++c) out << "5\n";
  if (!fields.empty()) {
    out << "POINT_DATA " << npe * ne << '\n';
    for (const auto& f : fields) {
      out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (int e = 0; e < ne; ++e) {
        const auto& vals = (*f.values)[e];
        for (int p = 0; p < npe; ++p) {
          double s = 0.0;
          for (int n = 0; n < phis[p].size(); ++n) s += phis[p][n] * vals[n];
          out << s << '\n';
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

std::string mesh_to_json(const TriMesh& mesh) {
  nlohmann::json j;
  j["order"] = mesh.order;
  auto& verts = j["vertices"] = nlohmann::json::array();
  for (auto p : mesh.vertices) verts.push_back({p.x, p.y});
  auto& els = j["elements"] = nlohmann::json::array();
  for (const auto& el : mesh.elements) {
    nlohmann::json je;
    je["v"] = el.v;
    auto& nodes = je["nodes"] = nlohmann::json::array();
    for (auto p : el.nodes) nodes.push_back({p.x, p.y});
    auto& edges = je["edges"] = nlohmann::json::array();
    for (const auto& t : el.edges) {
      if (!t.boundary) edges.push_back(nullptr);
      else edges.push_back({{"loop", t.segment.loop}, {"segment", t.segment.index}, {"t0", t.t0}, {"t1", t.t1}});
    }
    els.push_back(std::move(je));
  }
  return j.dump();
}

TriMesh mesh_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TriMesh mesh;
    mesh.order = j.at("order").get<int>();
    for (const auto& p : j.at("vertices")) mesh.vertices.push_back({p[0].get<double>(), p[1].get<double>()});
    for (const auto& je : j.at("elements")) {
      CurvedTriangle el;
      el.v = je.at("v").get<std::array<int, 3>>();
      for (const auto& p : je.at("nodes")) el.nodes.push_back({p[0].get<double>(), p[1].get<double>()});
      for (int k = 0; k < 3; ++k) {
        const auto& t = je.at("edges").at(k);
        if (t.is_null()) continue;
        el.edges[k] = {true, {t.at("loop").get<int>(), t.at("segment").get<int>()}, t.at("t0").get<double>(),
                       t.at("t1").get<double>()};
      }
      mesh.elements.push_back(std::move(el));
    }
    mesh.build_adjacency();
    return mesh;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("mesh artifact: ") + e.what());
  }
}

}  // namespace quadfield

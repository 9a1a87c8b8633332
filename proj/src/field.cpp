#include "quadfield/field.hpp"

#include <cmath>
#include <sstream>

#include "quadfield/error.hpp"

namespace quadfield {

namespace {

std::string outside_message(Vec2 x) {
  std::ostringstream s;
  s << "point (" << x.x << ", " << x.y << ") is outside the domain";
  return s.str();
}

double triangle_circumradius(Vec2 a, Vec2 b, Vec2 c) {
  const double la = norm(b - c), lb = norm(c - a), lc = norm(a - b);
  const double area2 = std::abs(cross(b - a, c - a));
  return area2 > 0.0 ? la * lb * lc / (2.0 * area2) : std::max({la, lb, lc});
}

}  // namespace

OutsideDomain::OutsideDomain(Vec2 x) : std::runtime_error(outside_message(x)), point(x) {}

std::array<double, 2> VectorField::eval_v(Vec2 x) const {
  const auto s = sample(x);
  if (!s) throw OutsideDomain(x);
  return *s;
}

double VectorField::eval_psi(Vec2 x) const {
  const auto uv = eval_v(x);
  return principal_phase(uv[0], uv[1]);
}

std::optional<std::array<double, 2>> AnalyticField::sample(Vec2 x) const {
  if (inside_ && !inside_(x)) return std::nullopt;
  return fn_(x);
}

FieldProbe::FieldProbe(const TriMesh& mesh, const FieldSolution& sol) : mesh_(mesh), sol_(sol) {
  if (static_cast<int>(sol.u.size()) != mesh.num_elements() || sol.order != mesh.order) {
    throw Error(ErrorKind::Solver, "field solution does not match the mesh");
  }
  const int ne = mesh.num_elements();
  std::vector<BBox> boxes(ne);
  double mean_r = 0.0;
  circumradius_.resize(ne);
  for (int e = 0; e < ne; ++e) {
    const auto& el = mesh.elements[e];
    for (auto p : el.nodes) boxes[e].expand(p);
    const double pad = 0.1 * boxes[e].diagonal();
    boxes[e].lo = boxes[e].lo - Vec2{pad, pad};
    boxes[e].hi = boxes[e].hi + Vec2{pad, pad};
    box_.expand(boxes[e].lo);
    box_.expand(boxes[e].hi);
    circumradius_[e] = triangle_circumradius(mesh.vertices[el.v[0]], mesh.vertices[el.v[1]], mesh.vertices[el.v[2]]);
    mean_r += circumradius_[e];
  }
  if (ne == 0) return;
  cell_ = mean_r / ne;
  const Vec2 ext = box_.hi - box_.lo;
  // Keep the grid bounded for pathological size ratios.
  while ((ext.x / cell_ + 1.0) * (ext.y / cell_ + 1.0) > 4e6) cell_ *= 2.0;
  nx_ = std::max(1, static_cast<int>(std::ceil(ext.x / cell_)));
  ny_ = std::max(1, static_cast<int>(std::ceil(ext.y / cell_)));
  cells_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  for (int e = 0; e < ne; ++e) {
    const int i0 = std::clamp(static_cast<int>((boxes[e].lo.x - box_.lo.x) / cell_), 0, nx_ - 1);
    const int i1 = std::clamp(static_cast<int>((boxes[e].hi.x - box_.lo.x) / cell_), 0, nx_ - 1);
    const int j0 = std::clamp(static_cast<int>((boxes[e].lo.y - box_.lo.y) / cell_), 0, ny_ - 1);
    const int j1 = std::clamp(static_cast<int>((boxes[e].hi.y - box_.lo.y) / cell_), 0, ny_ - 1);
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) cells_[static_cast<std::size_t>(j) * nx_ + i].push_back(e);
    }
  }
}

std::optional<Location> FieldProbe::locate(Vec2 x) const {
  if (!std::isfinite(x.x) || !std::isfinite(x.y)) return std::nullopt;
  if (x.x < box_.lo.x || x.y < box_.lo.y || x.x > box_.hi.x || x.y > box_.hi.y) return std::nullopt;
  const int i = std::clamp(static_cast<int>((x.x - box_.lo.x) / cell_), 0, nx_ - 1);
  const int j = std::clamp(static_cast<int>((x.y - box_.lo.y) / cell_), 0, ny_ - 1);
  // Cell lists are filled in increasing element order, so the first hit is the lowest id.
  for (int e : cells_[static_cast<std::size_t>(j) * nx_ + i]) {
    if (auto xi = invert_map(mesh_, e, x)) return Location{e, *xi};
  }
  return std::nullopt;
}

std::array<double, 2> FieldProbe::eval_at(const Location& loc) const { return evaluate(mesh_, sol_, loc.element, loc.xi); }

std::optional<std::array<double, 2>> FieldProbe::sample(Vec2 x) const {
  const auto loc = locate(x);
  if (!loc) return std::nullopt;
  return eval_at(*loc);
}

double principal_phase(double u, double v) {
  if (std::hypot(u, v) < 1e-12) throw Error(ErrorKind::Topology, "critical point: psi undefined");
  return 0.25 * std::atan2(v, u);
}

double adjust_branch(double psi, double alpha_prev) {
  double best = psi;
  double best_d = 1e300;
  for (int k = 0; k < 4; ++k) {
    const double cand = psi + k * kPi / 2.0;
    const double d = std::abs(wrap_angle(cand - alpha_prev));
    if (d < best_d) {
      best_d = d;
      best = cand;
    }
  }
  // Keep the result on the same sheet as alpha_prev so angles stay continuous.
  return alpha_prev + wrap_angle(best - alpha_prev);
}

std::array<Vec2, 4> cross_vectors(double psi) {
  std::array<Vec2, 4> c;
  for (int k = 0; k < 4; ++k) {
    const double a = psi + k * kPi / 2.0;
    c[k] = {std::cos(a), std::sin(a)};
  }
  return c;
}

}  // namespace quadfield

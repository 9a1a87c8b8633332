#include "quadfield/singular.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "parallel.hpp"
#include "quadfield/error.hpp"

namespace quadfield {

namespace {

// Nearest representative of d modulo pi/2.
double wrap_quarter(double d) { return std::remainder(d, kPi / 2.0); }

struct FieldJet {
  double u = 0, v = 0;
  Eigen::Matrix2d J;  // d(u,v)/d(r,s)
};

FieldJet field_jet(const FieldProbe& field, int e, Vec2 xi) {
  const auto& R = field.mesh().ref();
  const Eigen::VectorXd phi = R.basis(xi);
  Eigen::VectorXd dr, ds;
  R.basis_grad(xi, dr, ds);
  const auto& su = field.solution().u[e];
  const auto& sv = field.solution().v[e];
  FieldJet j;
  j.J.setZero();
  for (int n = 0; n < phi.size(); ++n) {
    j.u += phi[n] * su[n];
    j.v += phi[n] * sv[n];
    j.J(0, 0) += dr[n] * su[n];
    j.J(0, 1) += ds[n] * su[n];
    j.J(1, 0) += dr[n] * sv[n];
    j.J(1, 1) += ds[n] * sv[n];
  }
  return j;
}

std::optional<Vec2> newton_from(const FieldProbe& field, int e, Vec2 xi, const TopologyOptions& opt) {
  for (int it = 0; it < opt.newton_iterations; ++it) {
    const FieldJet j = field_jet(field, e, xi);
    if (std::hypot(j.u, j.v) < opt.newton_tol) {
      if (RefTriangle::inside(xi, 1e-6)) return xi;
      return std::nullopt;
    }
    if (!(std::abs(j.J.determinant()) > 0.0)) return std::nullopt;
    const Eigen::Vector2d d = j.J.inverse() * Eigen::Vector2d(j.u, j.v);
    xi = xi - Vec2{d[0], d[1]};
    if (!std::isfinite(xi.x) || std::abs(xi.x) > 5.0 || std::abs(xi.y) > 5.0) return std::nullopt;
  }
  const FieldJet j = field_jet(field, e, xi);
  if (std::hypot(j.u, j.v) < opt.newton_tol && RefTriangle::inside(xi, 1e-6)) return xi;
  return std::nullopt;
}

// Parameter where the segment first leaves the disc of radius c around p,
// walking from its start (or from its end when from_end is set).
std::optional<double> circle_hit(const CurveSegment& seg, Vec2 p, double c, bool from_end) {
  auto at = [&](double s) { return from_end ? 1.0 - s : s; };
  auto dist = [&](double s) { return norm(seg.point(at(s)) - p); };
  constexpr int n = 256;
  double lo = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double hi = static_cast<double>(i) / n;
    if (dist(hi) >= c) {
      double a = lo, b = hi;
      for (int k = 0; k < 60; ++k) {
        const double m = 0.5 * (a + b);
        (dist(m) >= c ? b : a) = m;
      }
      return at(0.5 * (a + b));
    }
    lo = hi;
  }
  return std::nullopt;
}

}  // namespace

std::vector<int> flag_candidate_elements(const FieldProbe& field) {
  const auto& mesh = field.mesh();
  const auto& R = mesh.ref();
  const auto& sol = field.solution();
  std::vector<int> out;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    bool un = false, up = false, vn = false, vp = false;
    auto check = [&](double u, double v) {
      un |= u <= 0.0;
      up |= u >= 0.0;
      vn |= v <= 0.0;
      vp |= v >= 0.0;
    };
    for (int n = 0; n < R.num_nodes(); ++n) check(sol.u[e][n], sol.v[e][n]);
    for (int q = 0; q < R.phi_q().rows(); ++q) {
      double u = 0.0, v = 0.0;
      for (int n = 0; n < R.num_nodes(); ++n) {
        u += R.phi_q()(q, n) * sol.u[e][n];
        v += R.phi_q()(q, n) * sol.v[e][n];
      }
      check(u, v);
    }
    if (un && up && vn && vp) out.push_back(e);
  }
  return out;
}

std::optional<CriticalPoint> newton_locate(const FieldProbe& field, int element, const TopologyOptions& opt) {
  const std::array<Vec2, 4> starts{Vec2{-1.0 / 3.0, -1.0 / 3.0}, Vec2{-0.8, -0.8}, Vec2{0.6, -0.8}, Vec2{-0.8, 0.6}};
  for (Vec2 s : starts) {
    if (auto xi = newton_from(field, element, s, opt)) {
      CriticalPoint cp;
      cp.element = element;
      cp.position = map_to_physical(field.mesh(), element, *xi);
      const auto uv = evaluate(field.mesh(), field.solution(), element, *xi);
      cp.residual = std::hypot(uv[0], uv[1]);
      return cp;
    }
  }
  return std::nullopt;
}

IndexResult interior_valence(const VectorField& field, Vec2 p, double c, const TopologyOptions& opt) {
  const int M = opt.samples;
  for (int attempt = 0; attempt <= 4; ++attempt, c *= 0.5) {
    std::vector<std::array<double, 2>> s(M);
    bool inside = true;
    for (int i = 0; i < M && inside; ++i) {
      const double a = 2.0 * kPi * i / M;
      const auto uv = field.sample(p + Vec2{c * std::cos(a), c * std::sin(a)});
      if (!uv) inside = false;
      else s[i] = *uv;
    }
    if (!inside) continue;
    int positive = 0, negative = 0;
    for (int i = 0; i < M; ++i) {
      const auto& a = s[i];
      const auto& b = s[(i + 1) % M];
      if (a[0] < 0.0 && b[0] < 0.0 && ((a[1] < 0.0) != (b[1] < 0.0))) {
        if (b[1] > a[1]) ++positive;
        else ++negative;
      }
    }
    const int I = negative - positive;
    if (std::abs(I) > 1) throw Error(ErrorKind::Topology, "coalesced or spurious critical point - refine resolution");
    return {I, 4 - I, c};
  }
  std::ostringstream msg;
  msg << "index contour around (" << p.x << ", " << p.y << ") leaves the domain";
  throw Error(ErrorKind::Topology, msg.str());
}

CornerNode corner_valence(const CornerSpec& corner, const DomainSpec& domain, const VectorField& field, double c,
                          const TopologyOptions& opt) {
  const double d = opt.corner_delta;
  const CurveSegment& out = domain.segment({corner.loop, corner.outgoing});
  const CurveSegment& in = domain.segment({corner.loop, corner.incoming});
  for (int attempt = 0; attempt <= 4; ++attempt, c *= 0.5) {
    const auto t_out = circle_hit(out, corner.position, c, false);
    const auto t_in = circle_hit(in, corner.position, c, true);
    if (!t_out || !t_in) continue;
    const double th0 = std::atan2(out.point(*t_out).y - corner.position.y, out.point(*t_out).x - corner.position.x);
    // Sweep counter-clockwise from th0 by roughly the interior angle.
    const Vec2 pin = in.point(*t_in) - corner.position;
    double thf = th0 + wrap_angle(std::atan2(pin.y, pin.x) - (th0 + corner.interior_angle)) + corner.interior_angle;
    if (!(thf - th0 > 2.0 * d)) continue;
    std::vector<double> psi;
    psi.push_back(principal_phase(boundary_field(corner.theta_out)[0], boundary_field(corner.theta_out)[1]));
    bool inside = true;
    const int n = opt.corner_samples;
    for (int i = 0; i < n && inside; ++i) {
      const double a = th0 + d + (thf - th0 - 2.0 * d) * i / (n - 1);
      const auto uv = field.sample(corner.position + Vec2{c * std::cos(a), c * std::sin(a)});
      if (!uv) inside = false;
      else psi.push_back(principal_phase((*uv)[0], (*uv)[1]));
    }
    if (!inside) continue;
    psi.push_back(principal_phase(boundary_field(corner.theta_in)[0], boundary_field(corner.theta_in)[1]));
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < psi.size(); ++i) total += wrap_quarter(psi[i + 1] - psi[i]);
    CornerNode node;
    node.corner = corner;
    node.delta_psi = total;
    node.index = total / (kPi / 2.0);
    const double raw = corner.interior_angle / (kPi / 2.0) - node.index;
    node.valence = static_cast<int>(std::lround(raw));
    node.rounding_residual = std::abs(raw - node.valence);
    node.radius = c;
    if (node.rounding_residual > 0.2 || node.valence < 0) {
      std::ostringstream msg;
      msg << "ambiguous corner valence - refine (corner at (" << corner.position.x << ", " << corner.position.y
          << "), raw value " << raw << ")";
      throw Error(ErrorKind::Topology, msg.str());
    }
    return node;
  }
  std::ostringstream msg;
  msg << "corner arc at (" << corner.position.x << ", " << corner.position.y << ") leaves the domain";
  throw Error(ErrorKind::Topology, msg.str());
}

Topology analyze_topology(const FieldProbe& field, const DomainSpec& domain, const TopologyOptions& opt, int threads) {
  const auto& mesh = field.mesh();
  const std::vector<int> flagged = flag_candidate_elements(field);
  std::vector<char> search(mesh.num_elements(), 0);
  for (int e : flagged) {
    search[e] = 1;
    for (const auto& nb : mesh.adjacency[e]) {
      if (nb.element >= 0) search[nb.element] = 1;
    }
  }
  std::vector<int> elems;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    if (search[e]) elems.push_back(e);
  }
  std::vector<std::optional<CriticalPoint>> found(elems.size());
  detail::parallel_for(static_cast<int>(elems.size()), threads,
                       [&](int i) { found[i] = newton_locate(field, elems[i], opt); });

  Topology topo;
  // Roots found from several elements coincide to Newton accuracy; cluster those
  // deterministically in element order and keep the smallest |v|.
  const double same = 1e-6 * mesh.bbox_extent;
  for (const auto& f : found) {
    if (!f) continue;
    bool merged = false;
    for (auto& kept : topo.critical_points) {
      if (norm(kept.position - f->position) <= same) {
        if (f->residual < kept.residual) kept = *f;
        merged = true;
        break;
      }
    }
    if (!merged) topo.critical_points.push_back(*f);
  }
  for (auto& cp : topo.critical_points) {
    // Contours must not enclose a neighbouring root.
    double c = opt.radius_factor * field.circumradius(cp.element);
    for (const auto& other : topo.critical_points) {
      if (&other != &cp) c = std::min(c, 0.4 * norm(other.position - cp.position));
    }
    const IndexResult r = interior_valence(field, cp.position, c, opt);
    cp.index = r.index;
    cp.valence = r.valence;
    cp.radius = r.radius;
  }
  // Index 0 zeros are regular points (valence four) and do not enter the decomposition.
  std::erase_if(topo.critical_points, [](const CriticalPoint& cp) { return cp.index == 0; });

  for (const auto& corner : domain.corners()) {
    const double bis = corner.theta0() + 0.5 * corner.interior_angle;
    double c = 0.0;
    for (double f = 1e-3; f < 1.0 && c == 0.0; f *= 4.0) {
      const Vec2 probe = corner.position + f * mesh.bbox_extent * Vec2{std::cos(bis), std::sin(bis)};
      if (auto loc = field.locate(probe)) c = opt.radius_factor * field.circumradius(loc->element);
    }
    if (c == 0.0) throw Error(ErrorKind::Topology, "no element found at a corner");
    topo.corners.push_back(corner_valence(corner, domain, field, c, opt));
  }
  return topo;
}

int index_sum(const Topology& topo) {
  int s = 0;
  for (const auto& cp : topo.critical_points) s += 4 - cp.valence;
  for (const auto& c : topo.corners) s += 2 - c.valence;
  return s;
}

namespace {

nlohmann::json corner_json(const CornerSpec& c) {
  return {{"position", {c.position.x, c.position.y}},
          {"loop", c.loop},
          {"incoming", c.incoming},
          {"outgoing", c.outgoing},
          {"theta_in", c.theta_in},
          {"theta_out", c.theta_out},
          {"interior_angle", c.interior_angle},
          {"bc_continuous", c.bc_continuous}};
}

CornerSpec corner_from(const nlohmann::json& j) {
  CornerSpec c;
  c.position = {j.at("position")[0].get<double>(), j.at("position")[1].get<double>()};
  c.loop = j.at("loop").get<int>();
  c.incoming = j.at("incoming").get<int>();
  c.outgoing = j.at("outgoing").get<int>();
  c.theta_in = j.at("theta_in").get<double>();
  c.theta_out = j.at("theta_out").get<double>();
  c.interior_angle = j.at("interior_angle").get<double>();
  c.bc_continuous = j.at("bc_continuous").get<bool>();
  return c;
}

}  // namespace

std::string topology_to_json(const Topology& topo) {
  nlohmann::json j;
  j["critical_points"] = nlohmann::json::array();
  for (const auto& cp : topo.critical_points) {
    j["critical_points"].push_back({{"position", {cp.position.x, cp.position.y}},
                                    {"element", cp.element},
                                    {"index", cp.index},
                                    {"valence", cp.valence},
                                    {"residual", cp.residual},
                                    {"radius", cp.radius}});
  }
  j["corners"] = nlohmann::json::array();
  for (const auto& c : topo.corners) {
    j["corners"].push_back({{"corner", corner_json(c.corner)},
                            {"valence", c.valence},
                            {"index", c.index},
                            {"delta_psi", c.delta_psi},
                            {"rounding_residual", c.rounding_residual},
                            {"radius", c.radius}});
  }
  j["index_sum"] = index_sum(topo);
  return j.dump(2);
}

Topology topology_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Topology t;
    for (const auto& c : j.at("critical_points")) {
      CriticalPoint cp;
      cp.position = {c.at("position")[0].get<double>(), c.at("position")[1].get<double>()};
      cp.element = c.at("element").get<int>();
      cp.index = c.at("index").get<int>();
      cp.valence = c.at("valence").get<int>();
      cp.residual = c.at("residual").get<double>();
      cp.radius = c.at("radius").get<double>();
      t.critical_points.push_back(cp);
    }
    for (const auto& c : j.at("corners")) {
      CornerNode n;
      n.corner = corner_from(c.at("corner"));
      n.valence = c.at("valence").get<int>();
      n.index = c.at("index").get<double>();
      n.delta_psi = c.at("delta_psi").get<double>();
      n.rounding_residual = c.at("rounding_residual").get<double>();
      n.radius = c.at("radius").get<double>();
      t.corners.push_back(n);
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("topology artifact: ") + e.what());
  }
}

}  // namespace quadfield

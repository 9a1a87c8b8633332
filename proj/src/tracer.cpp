#include "quadfield/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <tuple>

#include "quadfield/error.hpp"

namespace quadfield {

const char* to_string(MergeMode m) { return m == MergeMode::Normal ? "normal" : "aggressive"; }

namespace {

Vec2 unit(double a) { return {std::cos(a), std::sin(a)}; }

std::string describe(const Anchor& a) {
  std::ostringstream s;
  switch (a.kind) {
    case Anchor::Kind::Node: s << "critical point " << a.id; break;
    case Anchor::Kind::Corner: s << "corner " << a.id; break;
    case Anchor::Kind::Boundary: s << "boundary point"; break;
  }
  s << " at (" << a.position.x << ", " << a.position.y << ")";
  return s.str();
}

}  // namespace

double refine_direction(const VectorField& field, Vec2 p0, double c, double alpha0, double tol, int max_iterations) {
  double alpha = alpha0;
  double relax = 1.0;
  double prev = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    const auto uv = field.sample(p0 + c * unit(alpha));
    if (!uv) {
      std::ostringstream msg;
      msg << "direction probe at (" << p0.x << ", " << p0.y << ") left the domain";
      throw Error(ErrorKind::Tracing, msg.str());
    }
    const double delta = adjust_branch(principal_phase((*uv)[0], (*uv)[1]), alpha) - alpha;
    if (std::abs(delta) <= tol) return alpha + delta;
    // Steep psi (near discontinuous corners) makes the plain update oscillate;
    // damp it whenever the correction changes sign.
    if (it > 0 && delta * prev < 0.0) relax = std::max(relax * 0.5, 1.0 / 64.0);
    alpha += relax * delta;
    prev = delta;
  }
  std::ostringstream msg;
  msg << "initial direction did not converge at (" << p0.x << ", " << p0.y << ")";
  throw Error(ErrorKind::Tracing, msg.str());
}

namespace {

void check_distinct(const std::vector<double>& dirs, Vec2 p) {
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (std::size_t j = i + 1; j < dirs.size(); ++j) {
      if (std::abs(wrap_angle(dirs[i] - dirs[j])) < 1e-6) {
        std::ostringstream msg;
        msg << "branch collapse at (" << p.x << ", " << p.y << ")";
        throw Error(ErrorKind::Tracing, msg.str());
      }
    }
  }
}

}  // namespace

std::vector<double> initial_directions(const VectorField& field, const CriticalPoint& cp, const TraceOptions& opt) {
  std::vector<double> dirs;
  const double first = refine_direction(field, cp.position, cp.radius, 0.0, opt.direction_tol, opt.direction_iterations);
  dirs.push_back(first);
  for (int k = 1; k < cp.valence; ++k) {
    dirs.push_back(refine_direction(field, cp.position, cp.radius, first + 2.0 * kPi * k / cp.valence,
                                    opt.direction_tol, opt.direction_iterations));
  }
  check_distinct(dirs, cp.position);
  return dirs;
}

std::vector<double> corner_directions(const VectorField& field, const CornerNode& node, const TraceOptions& opt) {
  std::vector<double> dirs;
  const auto& c = node.corner;
  for (int k = 1; k < node.valence; ++k) {
    const double guess = c.theta0() + c.interior_angle * k / node.valence;
    const double a = refine_direction(field, c.position, node.radius, guess, opt.direction_tol, opt.direction_iterations);
    if (std::abs(wrap_angle(a - c.theta0())) < 1e-3 || std::abs(wrap_angle(a - c.thetaf())) < 1e-3) continue;
    dirs.push_back(a);
  }
  check_distinct(dirs, c.position);
  return dirs;
}

std::optional<Direction> streamline_velocity(const VectorField& field, Vec2 x, double alpha_prev) {
  const auto uv = field.sample(x);
  if (!uv) return std::nullopt;
  // At an exact zero psi is undefined; keep the current heading.
  if (std::hypot((*uv)[0], (*uv)[1]) < 1e-12) return Direction{unit(alpha_prev), alpha_prev};
  const double a = adjust_branch(principal_phase((*uv)[0], (*uv)[1]), alpha_prev);
  return Direction{unit(a), a};
}

Streamline launch(const VectorField& field, Vec2 from, double alpha, double c, Anchor origin, int branch) {
  Streamline s;
  s.origin = origin;
  s.branch = branch;
  s.points = {from, from + c * unit(alpha)};
  const auto d = streamline_velocity(field, s.points[1], alpha);
  if (!d) throw Error(ErrorKind::Tracing, "launch point outside the domain near " + describe(origin));
  s.alpha = {alpha, d->alpha};
  s.history = {d->velocity};
  return s;
}

bool advance(Streamline& s, const VectorField& field, double h, StartMode start) {
  const Vec2 x = s.points.back();
  const double a = s.alpha.back();
  const auto& f = s.history;
  const std::size_t n = f.size();
  Vec2 next;
  if (n >= 4) {
    next = x + (h / 24.0) * (55.0 * f[n - 1] - 59.0 * f[n - 2] + 37.0 * f[n - 3] - 9.0 * f[n - 4]);
  } else if (start == StartMode::RK4) {
    const Vec2 k1 = f[n - 1];
    const auto k2 = streamline_velocity(field, x + 0.5 * h * k1, a);
    if (!k2) return false;
    const auto k3 = streamline_velocity(field, x + 0.5 * h * k2->velocity, a);
    if (!k3) return false;
    const auto k4 = streamline_velocity(field, x + h * k3->velocity, a);
    if (!k4) return false;
    next = x + (h / 6.0) * (k1 + 2.0 * k2->velocity + 2.0 * k3->velocity + k4->velocity);
  } else if (n == 1) {
    next = x + h * f[0];
  } else if (n == 2) {
    next = x + (h / 2.0) * (3.0 * f[1] - f[0]);
  } else {
    next = x + (h / 12.0) * (23.0 * f[2] - 16.0 * f[1] + 5.0 * f[0]);
  }
  const auto d = streamline_velocity(field, next, a);
  if (!d) return false;
  s.points.push_back(next);
  s.alpha.push_back(d->alpha);
  s.history.push_back(d->velocity);
  if (s.history.size() > 4) s.history.erase(s.history.begin());
  ++s.steps;
  return true;
}

bool detect_meeting(const Streamline& a, const Streamline& b, double threshold) {
  if (norm(a.points.back() - b.points.back()) >= threshold) return false;
  const double d = std::fmod(std::abs(a.alpha.back() - b.alpha.back()), 2.0 * kPi);
  return std::lround(d / (kPi / 2.0)) == 2;
}

double merge_weight0(double x) {
  const double c = std::cos(0.5 * kPi * x);
  return c * c;
}

double merge_weight1(double x) {
  const double s = std::sin(0.5 * kPi * x);
  return s * s;
}

Separatrix merge(const Streamline& a, const Streamline& b) {
  // Each streamline is continued along the other's path (shifted to close the
  // gap between fronts) back to the other's origin, so both have the same count.
  const Vec2 d = a.points.back() - b.points.back();
  std::vector<Vec2> pa(a.points.begin(), a.points.end());
  for (int i = static_cast<int>(b.points.size()) - 2; i >= 0; --i) pa.push_back(b.points[i] + d);
  std::vector<Vec2> pb(b.points.begin(), b.points.end());
  for (int i = static_cast<int>(a.points.size()) - 2; i >= 0; --i) pb.push_back(a.points[i] - d);
  if (pa.size() != pb.size()) throw Error(ErrorKind::Tracing, "merge: point-count mismatch");
  const std::size_t n = pa.size();
  Separatrix s;
  s.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n - 1);
    s.points[i] = merge_weight0(x) * pa[i] + merge_weight1(x) * pb[n - 1 - i];
  }
  s.points.front() = a.points.front();
  s.points.back() = b.points.front();
  s.start = a.origin;
  s.end = b.origin;
  return s;
}

namespace {

struct Tracer {
  const Topology& topo;
  const DomainSpec& domain;
  const VectorField& field;
  double h;
  TraceOptions opt;
  std::vector<Streamline> lines;

  // Terminates s at the boundary between its front and the failed step.
  void hit_boundary(Streamline& s) {
    const Vec2 x = s.points.back();
    Vec2 out = x + h * s.history.back();
    if (field.contains(out)) {
      // Only an intermediate stage left the domain; take a plain Euler step.
      s.points.push_back(out);
      const auto d = streamline_velocity(field, out, s.alpha.back());
      s.alpha.push_back(d->alpha);
      s.history.push_back(d->velocity);
      if (s.history.size() > 4) s.history.erase(s.history.begin());
      ++s.steps;
      return;
    }
    Vec2 lo = x, hi = out;
    const double tol = 1e-10 * std::max(1.0, domain.bbox().diagonal());
    while (norm(hi - lo) > tol) {
      const Vec2 m = 0.5 * (lo + hi);
      (field.contains(m) ? lo : hi) = m;
    }
    const BoundaryLocation loc = domain.closest_point(0.5 * (lo + hi));
    Anchor end;
    end.kind = Anchor::Kind::Boundary;
    end.segment = loc.segment;
    end.t = loc.t;
    end.position = loc.point;
    // Snap to corners, then to earlier boundary endpoints.
    double best = h;
    const auto corners = domain.corners();
    for (std::size_t i = 0; i < corners.size(); ++i) {
      const double dist = norm(corners[i].position - loc.point);
      if (dist < best) {
        best = dist;
        end.kind = Anchor::Kind::Corner;
        end.id = static_cast<int>(i);
        end.position = corners[i].position;
      }
    }
    if (end.kind == Anchor::Kind::Boundary) {
      for (const auto& other : lines) {
        if (&other == &s || other.status != Streamline::Status::HitBoundary) continue;
        const double dist = norm(other.end.position - loc.point);
        if (dist < best) {
          best = dist;
          end = other.end;
        }
      }
    }
    // Drop a front point that would make a sliver against the boundary.
    if (s.points.size() > 2 && norm(s.points.back() - end.position) < 0.25 * h) {
      s.points.pop_back();
      s.alpha.pop_back();
    }
    s.points.push_back(end.position);
    s.alpha.push_back(s.alpha.back());
    s.end = end;
    s.status = Streamline::Status::HitBoundary;
  }

  void launch_all() {
    for (std::size_t i = 0; i < topo.critical_points.size(); ++i) {
      const auto& cp = topo.critical_points[i];
      const auto dirs = initial_directions(field, cp, opt);
      Anchor o{Anchor::Kind::Node, static_cast<int>(i), {}, 0.0, cp.position};
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        lines.push_back(launch(field, cp.position, dirs[k], cp.radius, o, static_cast<int>(k)));
      }
    }
    // Corner indices follow domain.corners(), the order analyze_topology uses.
    for (std::size_t i = 0; i < topo.corners.size(); ++i) {
      const auto& cn = topo.corners[i];
      const auto dirs = corner_directions(field, cn, opt);
      Anchor o{Anchor::Kind::Corner, static_cast<int>(i), {}, 0.0, cn.corner.position};
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        lines.push_back(launch(field, cn.corner.position, dirs[k], cn.radius, o, static_cast<int>(k)));
      }
    }
  }

  TraceResult run() {
    launch_all();
    const double threshold = opt.mode == MergeMode::Aggressive ? opt.kappa * h : h;
    TraceResult result;
    result.step = h;
    std::vector<Separatrix> merged;
    auto any_active = [&] {
      return std::any_of(lines.begin(), lines.end(),
                         [](const Streamline& s) { return s.status == Streamline::Status::Active; });
    };
    while (any_active()) {
      ++result.rounds;
      for (auto& s : lines) {
        if (s.status != Streamline::Status::Active) continue;
        if (s.steps >= opt.max_steps) {
          s.status = Streamline::Status::Aborted;
          continue;
        }
        if (!advance(s, field, h, opt.start)) hit_boundary(s);
      }
      struct Pair {
        double dist;
        int i, j;
      };
      std::vector<Pair> pairs;
      for (int i = 0; i < static_cast<int>(lines.size()); ++i) {
        if (lines[i].status != Streamline::Status::Active) continue;
        for (int j = i + 1; j < static_cast<int>(lines.size()); ++j) {
          if (lines[j].status != Streamline::Status::Active) continue;
          if (detect_meeting(lines[i], lines[j], threshold)) {
            pairs.push_back({norm(lines[i].points.back() - lines[j].points.back()), i, j});
          }
        }
      }
      std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        return std::tie(a.dist, a.i, a.j) < std::tie(b.dist, b.i, b.j);
      });
      for (const auto& p : pairs) {
        auto& a = lines[p.i];
        auto& b = lines[p.j];
        if (a.status != Streamline::Status::Active || b.status != Streamline::Status::Active) continue;
        a.status = b.status = Streamline::Status::Merged;
        a.merged_with = p.j;
        b.merged_with = p.i;
        Separatrix sep = merge(a, b);
        sep.source_a = p.i;
        sep.source_b = p.j;
        merged.push_back(std::move(sep));
      }
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].status == Streamline::Status::Aborted) {
        throw Error(ErrorKind::Tracing, "limit cycle: streamline " + std::to_string(lines[i].branch) + " from " +
                                            describe(lines[i].origin) + " did not terminate after " +
                                            std::to_string(opt.max_steps) + " steps");
      }
    }
    // Separatrices in streamline order: merged pairs at their first member.
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto& s = lines[i];
      if (s.status == Streamline::Status::HitBoundary) {
        Separatrix sep;
        sep.points = s.points;
        sep.start = s.origin;
        sep.end = s.end;
        sep.source_a = static_cast<int>(i);
        result.separatrices.push_back(std::move(sep));
      } else if (s.status == Streamline::Status::Merged && static_cast<int>(i) < s.merged_with) {
        for (auto& m : merged) {
          if (m.source_a == static_cast<int>(i)) result.separatrices.push_back(m);
        }
      }
    }
    result.streamlines = std::move(lines);
    return result;
  }
};

}  // namespace

TraceResult trace_all(const Topology& topo, const DomainSpec& domain, const VectorField& field, double step,
                      const TraceOptions& opt) {
  if (!(step > 0.0)) throw Error(ErrorKind::Config, "streamline step must be positive");
  Tracer t{topo, domain, field, step, opt, {}};
  return t.run();
}

TraceResult trace_all(const Topology& topo, const DomainSpec& domain, const FieldProbe& field, const TraceOptions& opt) {
  const double h = opt.step > 0.0 ? opt.step : 0.25 * field.mesh().min_edge_length();
  return trace_all(topo, domain, static_cast<const VectorField&>(field), h, opt);
}

namespace {

nlohmann::json anchor_json(const Anchor& a) {
  const char* kind = a.kind == Anchor::Kind::Node ? "node" : a.kind == Anchor::Kind::Corner ? "corner" : "boundary";
  return {{"kind", kind},
          {"id", a.id},
          {"loop", a.segment.loop},
          {"segment", a.segment.index},
          {"t", a.t},
          {"position", {a.position.x, a.position.y}}};
}

Anchor anchor_from(const nlohmann::json& j) {
  Anchor a;
  const std::string kind = j.at("kind").get<std::string>();
  a.kind = kind == "node" ? Anchor::Kind::Node : kind == "corner" ? Anchor::Kind::Corner : Anchor::Kind::Boundary;
  a.id = j.at("id").get<int>();
  a.segment = {j.at("loop").get<int>(), j.at("segment").get<int>()};
  a.t = j.at("t").get<double>();
  a.position = {j.at("position")[0].get<double>(), j.at("position")[1].get<double>()};
  return a;
}

}  // namespace

std::string separatrices_to_json(const TraceResult& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["rounds"] = r.rounds;
  j["streamlines"] = r.streamlines.size();
  j["separatrices"] = nlohmann::json::array();
  for (const auto& s : r.separatrices) {
    nlohmann::json pts = nlohmann::json::array();
    for (auto p : s.points) pts.push_back({p.x, p.y});
    j["separatrices"].push_back({{"start", anchor_json(s.start)},
                                 {"end", anchor_json(s.end)},
                                 {"source_a", s.source_a},
                                 {"source_b", s.source_b},
                                 {"points", pts}});
  }
  return j.dump();
}

TraceResult separatrices_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    TraceResult r;
    r.step = j.at("step").get<double>();
    r.rounds = j.at("rounds").get<int>();
    for (const auto& s : j.at("separatrices")) {
      Separatrix sep;
      sep.start = anchor_from(s.at("start"));
      sep.end = anchor_from(s.at("end"));
      sep.source_a = s.at("source_a").get<int>();
      sep.source_b = s.at("source_b").get<int>();
      for (const auto& p : s.at("points")) sep.points.push_back({p[0].get<double>(), p[1].get<double>()});
      r.separatrices.push_back(std::move(sep));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("separatrix artifact: ") + e.what());
  }
}

void write_trace_svg(const DomainSpec& domain, const VectorField& field, const Topology& topo, const TraceResult& r,
                     std::ostream& out, int grid) {
  const BBox b = domain.bbox();
  const double w = b.hi.x - b.lo.x, hgt = b.hi.y - b.lo.y;
  const double scale = 800.0 / std::max(w, hgt);
  auto X = [&](Vec2 p) { return (p.x - b.lo.x) * scale + 10.0; };
  auto Y = [&](Vec2 p) { return (b.hi.y - p.y) * scale + 10.0; };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * scale + 20 << "\" height=\"" << hgt * scale + 20
      << "\">\n";
  // psi background: hue from psi in [-pi/4, pi/4].
  const double cell = std::max(w, hgt) / grid;
  for (double y = b.lo.y; y < b.hi.y; y += cell) {
    for (double x = b.lo.x; x < b.hi.x; x += cell) {
      const Vec2 c{x + 0.5 * cell, y + 0.5 * cell};
      const auto uv = field.sample(c);
      if (!uv || std::hypot((*uv)[0], (*uv)[1]) < 1e-12) continue;
      const double psi = principal_phase((*uv)[0], (*uv)[1]);
      const int hue = static_cast<int>(std::lround((psi / (kPi / 2.0) + 0.5) * 300.0));
      out << "<rect x=\"" << X({x, y + cell}) << "\" y=\"" << Y({x, y + cell}) << "\" width=\"" << cell * scale + 0.5
          << "\" height=\"" << cell * scale + 0.5 << "\" fill=\"hsl(" << hue << ",60%,75%)\"/>\n";
    }
  }
  for (int l = 0; l < static_cast<int>(domain.loops().size()); ++l) {
    const auto pts = domain.sample_loop(l);
    out << "<polygon fill=\"none\" stroke=\"black\" stroke-width=\"2\" points=\"";
    for (auto p : pts) out << X(p) << "," << Y(p) << " ";
    out << "\"/>\n";
  }
  for (const auto& s : r.separatrices) {
    out << "<polyline fill=\"none\" stroke=\"#b00\" stroke-width=\"1.5\" points=\"";
    for (auto p : s.points) out << X(p) << "," << Y(p) << " ";
    out << "\"/>\n";
  }
  for (const auto& cp : topo.critical_points) {
    out << "<circle cx=\"" << X(cp.position) << "\" cy=\"" << Y(cp.position) << "\" r=\"5\" fill=\""
        << (cp.valence == 3 ? "#00a" : "#0a0") << "\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace quadfield

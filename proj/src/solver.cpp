#include "quadfield/solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "parallel.hpp"
#include "quadfield/quadrature.hpp"

namespace quadfield {

const char* to_string(Scheme s) { return s == Scheme::CG ? "cg" : "dg"; }

DiscretizationChoice choose_discretization(const DomainSpec& domain, int order) {
  DiscretizationChoice c;
  c.order = order;
  c.scheme = Scheme::CG;
  for (const auto& corner : domain.corners()) {
    if (!corner.bc_continuous) c.scheme = Scheme::DG;
  }
  return c;
}

void validate_scheme(const DomainSpec& domain, Scheme scheme) {
  if (scheme == Scheme::CG && choose_discretization(domain).scheme == Scheme::DG) {
    throw Error(ErrorKind::Config, "CG requires continuous BCs: domain has corners that are not multiples of pi/2");
  }
}

BoundaryFunction guiding_field_bc(const DomainSpec& domain) {
  return [&domain](const BoundarySample& s) {
    return boundary_field(tangent_angle(domain.segment(s.segment), s.t));
  };
}

namespace {

// Geometric factors of one element at its volume quadrature points.
struct ElementGeometry {
  Eigen::VectorXd wdet;     // weight * det J
  Eigen::MatrixXd gx, gy;   // physical basis gradients (nq x np)
  double area = 0.0;
};

ElementGeometry element_geometry(const TriMesh& mesh, int e) {
  const auto& R = mesh.ref();
  const int nq = static_cast<int>(R.quad_points().size());
  const int np = R.num_nodes();
  const auto& nodes = mesh.elements[e].nodes;
  ElementGeometry g;
  g.wdet.resize(nq);
  g.gx.resize(nq, np);
  g.gy.resize(nq, np);
  for (int q = 0; q < nq; ++q) {
    double xr = 0, xs = 0, yr = 0, ys = 0;
    for (int n = 0; n < np; ++n) {
      xr += nodes[n].x * R.dr_q()(q, n);
      xs += nodes[n].x * R.ds_q()(q, n);
      yr += nodes[n].y * R.dr_q()(q, n);
      ys += nodes[n].y * R.ds_q()(q, n);
    }
    const double det = xr * ys - xs * yr;
    if (!(det > 0.0)) throw Error(ErrorKind::Solver, "non-positive Jacobian in element " + std::to_string(e));
    const double rx = ys / det, ry = -xs / det, sx = -yr / det, sy = xr / det;
    g.wdet[q] = R.quad_weights()[q] * det;
    g.area += g.wdet[q];
    g.gx.row(q) = rx * R.dr_q().row(q) + sx * R.ds_q().row(q);
    g.gy.row(q) = ry * R.dr_q().row(q) + sy * R.ds_q().row(q);
  }
  return g;
}

// Basis values and physical gradients at a point of element e.
struct PointBasis {
  Eigen::VectorXd phi, gx, gy;
};

PointBasis point_basis(const TriMesh& mesh, int e, Vec2 xi, Eigen::Matrix2d* Jout = nullptr) {
  const auto& R = mesh.ref();
  PointBasis b;
  b.phi = R.basis(xi);
  Eigen::VectorXd dr, ds;
  R.basis_grad(xi, dr, ds);
  const Eigen::Matrix2d J = jacobian(mesh, e, xi);
  const Eigen::Matrix2d Jinv = J.inverse();
  // grad_x = J^{-T} grad_xi
  b.gx = Jinv(0, 0) * dr + Jinv(1, 0) * ds;
  b.gy = Jinv(0, 1) * dr + Jinv(1, 1) * ds;
  if (Jout) *Jout = J;
  return b;
}

struct FaceQuadrature {
  std::vector<double> sigma;
  std::vector<double> weight;  // includes |dx/dsigma|
  std::vector<Vec2> normal;    // outward from the element owning the face
  std::vector<Vec2> x;
  double length = 0.0;
};

FaceQuadrature face_quadrature(const TriMesh& mesh, int e, int k, int npts) {
  const auto& gl = gauss_legendre(npts);
  FaceQuadrature f;
  for (int q = 0; q < npts; ++q) {
    const double s = gl.points[q];
    const Vec2 xi = RefTriangle::edge_point(k, s);
    const Eigen::Matrix2d J = jacobian(mesh, e, xi);
    const Vec2 dt = RefTriangle::edge_tangent(k);
    const Vec2 t{J(0, 0) * dt.x + J(0, 1) * dt.y, J(1, 0) * dt.x + J(1, 1) * dt.y};
    const double len = norm(t);
    f.sigma.push_back(s);
    f.weight.push_back(gl.weights[q] * len);
    f.normal.push_back(Vec2{t.y, -t.x} / len);
    f.x.push_back(map_to_physical(mesh, e, xi));
    f.length += gl.weights[q] * len;
  }
  return f;
}

struct CgNumbering {
  int ndof = 0;
  std::vector<std::vector<int>> l2g;
  std::vector<char> boundary;
  std::vector<BoundarySample> sample;
};

CgNumbering cg_numbering(const TriMesh& mesh, const DomainSpec& domain) {
  const auto& R = mesh.ref();
  const int P = mesh.order;
  CgNumbering num;
  num.ndof = static_cast<int>(mesh.vertices.size());
  std::map<std::pair<int, int>, int> edge_base;
  num.l2g.assign(mesh.elements.size(), std::vector<int>(R.num_nodes(), -1));
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    auto& map = num.l2g[e];
    for (int k = 0; k < 3; ++k) map[R.vertex_node(k)] = el.v[k];
    for (int k = 0; k < 3; ++k) {
      const int a = el.v[k], b = el.v[(k + 1) % 3];
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto [it, inserted] = edge_base.emplace(key, num.ndof);
      if (inserted) num.ndof += P - 1;
      const auto& en = R.edge_nodes(k);
      for (int m = 1; m < P; ++m) {
        map[en[m]] = it->second + (a < b ? m - 1 : P - 1 - m);
      }
    }
    for (int n : R.interior_nodes()) map[n] = num.ndof++;
  }
  num.boundary.assign(num.ndof, 0);
  num.sample.assign(num.ndof, {});
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int k = 0; k < 3; ++k) {
      if (!el.edges[k].boundary) continue;
      const auto& en = R.edge_nodes(k);
      for (int m = 0; m <= P; ++m) {
        const int g = num.l2g[e][en[m]];
        if (num.boundary[g]) continue;
        num.boundary[g] = 1;
        // Warped nodes are not equispaced, so recover sigma from the node itself.
        const Vec2 xi = R.nodes()[en[m]];
        const double s = dot(xi - RefTriangle::edge_point(k, -1.0), RefTriangle::edge_tangent(k)) /
                             dot(RefTriangle::edge_tangent(k), RefTriangle::edge_tangent(k)) - 1.0;
        num.sample[g] = {el.nodes[en[m]], el.edges[k].segment, edge_curve_parameter(domain, el.edges[k], s)};
      }
    }
  }
  return num;
}

Eigen::MatrixXd stiffness(const ElementGeometry& g) {
  return g.gx.transpose() * g.wdet.asDiagonal() * g.gx + g.gy.transpose() * g.wdet.asDiagonal() * g.gy;
}

struct FaceBlock {
  int e1 = -1, e2 = -1;
  Eigen::MatrixXd A11, A12, A21, A22;
  Eigen::MatrixXd rhs1;  // boundary faces only (np x 2)
};

}  // namespace

std::vector<EdgeBoundaryValues> assemble_dirichlet_bc(const TriMesh& mesh, const DomainSpec& domain,
                                                      const BoundaryFunction& bc) {
  const auto& R = mesh.ref();
  std::vector<EdgeBoundaryValues> out;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int k = 0; k < 3; ++k) {
      if (!el.edges[k].boundary) continue;
      EdgeBoundaryValues ev;
      ev.element = e;
      ev.edge = k;
      const Vec2 tk = RefTriangle::edge_tangent(k);
      for (int n : R.edge_nodes(k)) {
        const Vec2 xi = R.nodes()[n];
        const double s = dot(xi - RefTriangle::edge_point(k, -1.0), tk) / dot(tk, tk) - 1.0;
        const BoundarySample bs{el.nodes[n], el.edges[k].segment, edge_curve_parameter(domain, el.edges[k], s)};
        ev.points.push_back(bs.x);
        ev.values.push_back(bc(bs));
      }
      out.push_back(std::move(ev));
    }
  }
  return out;
}

LinearSystem assemble_system(const TriMesh& mesh, const DomainSpec& domain, const BoundaryFunction& bc,
                             const DiscretizationChoice& choice, int threads) {
  if (mesh.order != choice.order) throw Error(ErrorKind::Solver, "mesh order does not match the discretization order");
  const auto& R = mesh.ref();
  const int np = R.num_nodes();
  const int ne = mesh.num_elements();
  std::vector<ElementGeometry> geo(ne);
  std::vector<Eigen::MatrixXd> Ke(ne);
  detail::parallel_for(ne, threads, [&](int e) {
    geo[e] = element_geometry(mesh, e);
    Ke[e] = stiffness(geo[e]);
  });

  LinearSystem sys;
  if (choice.scheme == Scheme::CG) {
    const CgNumbering num = cg_numbering(mesh, domain);
    sys.num_dofs = num.ndof;
    sys.l2g = num.l2g;
    sys.free_index.assign(num.ndof, -1);
    sys.dirichlet.assign(num.ndof, {0.0, 0.0});
    int nfree = 0;
    for (int g = 0; g < num.ndof; ++g) {
      if (num.boundary[g]) sys.dirichlet[g] = bc(num.sample[g]);
      else sys.free_index[g] = nfree++;
    }
    if (nfree == num.ndof) throw Error(ErrorKind::Solver, "singular system: empty Dirichlet set");
    std::vector<Eigen::Triplet<double>> trip;
    sys.rhs = Eigen::MatrixXd::Zero(nfree, 2);
    for (int e = 0; e < ne; ++e) {
      for (int i = 0; i < np; ++i) {
        const int gi = sys.free_index[num.l2g[e][i]];
        if (gi < 0) continue;
        for (int j = 0; j < np; ++j) {
          const int gj_global = num.l2g[e][j];
          const int gj = sys.free_index[gj_global];
          if (gj >= 0) {
            trip.emplace_back(gi, gj, Ke[e](i, j));
          } else {
            sys.rhs(gi, 0) -= Ke[e](i, j) * sys.dirichlet[gj_global][0];
            sys.rhs(gi, 1) -= Ke[e](i, j) * sys.dirichlet[gj_global][1];
          }
        }
      }
    }
    sys.A.resize(nfree, nfree);
    sys.A.setFromTriplets(trip.begin(), trip.end());
    return sys;
  }

  // SIPG.
  const int P = choice.order;
  const int nfq = P + 2;
  struct FaceRef { int e, k; };
  std::vector<FaceRef> faces;
  for (int e = 0; e < ne; ++e) {
    for (int k = 0; k < 3; ++k) {
      const auto nb = mesh.adjacency[e][k];
      if (nb.element < 0 || e < nb.element) faces.push_back({e, k});
    }
  }
  std::vector<FaceBlock> blocks(faces.size());
  detail::parallel_for(static_cast<int>(faces.size()), threads, [&](int fi) {
    const int e = faces[fi].e, k = faces[fi].k;
    const auto nb = mesh.adjacency[e][k];
    const FaceQuadrature fq = face_quadrature(mesh, e, k, nfq);
    FaceBlock& B = blocks[fi];
    B.e1 = e;
    B.A11 = Eigen::MatrixXd::Zero(np, np);
    if (nb.element < 0) {
      const double hF = geo[e].area / fq.length;
      const double mu = choice.penalty * (P + 1.0) * (P + 1.0) / hF;
      B.rhs1 = Eigen::MatrixXd::Zero(np, 2);
      const auto& tag = mesh.elements[e].edges[k];
      if (!tag.boundary) throw Error(ErrorKind::Solver, "untagged boundary edge in element " + std::to_string(e));
      for (std::size_t q = 0; q < fq.sigma.size(); ++q) {
        const PointBasis b = point_basis(mesh, e, RefTriangle::edge_point(k, fq.sigma[q]));
        const Eigen::VectorXd dn = fq.normal[q].x * b.gx + fq.normal[q].y * b.gy;
        const double w = fq.weight[q];
        B.A11 += w * (-(b.phi * dn.transpose()) - dn * b.phi.transpose() + mu * b.phi * b.phi.transpose());
        const BoundarySample bs{fq.x[q], tag.segment, edge_curve_parameter(domain, tag, fq.sigma[q])};
        const auto g = bc(bs);
        for (int c = 0; c < 2; ++c) B.rhs1.col(c) += w * g[c] * (mu * b.phi - dn);
      }
      return;
    }
    const int f = nb.element, kk = nb.edge;
    B.e2 = f;
    const double hF = std::min(geo[e].area, geo[f].area) / fq.length;
    const double mu = choice.penalty * (P + 1.0) * (P + 1.0) / hF;
    B.A12 = Eigen::MatrixXd::Zero(np, np);
    B.A21 = Eigen::MatrixXd::Zero(np, np);
    B.A22 = Eigen::MatrixXd::Zero(np, np);
    for (std::size_t q = 0; q < fq.sigma.size(); ++q) {
      const PointBasis b1 = point_basis(mesh, e, RefTriangle::edge_point(k, fq.sigma[q]));
      const PointBasis b2 = point_basis(mesh, f, RefTriangle::edge_point(kk, -fq.sigma[q]));
      const Vec2 n = fq.normal[q];
      const Eigen::VectorXd d1 = n.x * b1.gx + n.y * b1.gy;
      const Eigen::VectorXd d2 = n.x * b2.gx + n.y * b2.gy;
      const double w = fq.weight[q];
      // Rows: test function side; columns: trial side. [w] = w1 - w2, {dn u} = (d1 u1 + d2 u2)/2.
      B.A11 += w * (-0.5 * b1.phi * d1.transpose() - 0.5 * d1 * b1.phi.transpose() + mu * b1.phi * b1.phi.transpose());
      B.A12 += w * (-0.5 * b1.phi * d2.transpose() + 0.5 * d1 * b2.phi.transpose() - mu * b1.phi * b2.phi.transpose());
      B.A21 += w * (0.5 * b2.phi * d1.transpose() - 0.5 * d2 * b1.phi.transpose() - mu * b2.phi * b1.phi.transpose());
      B.A22 += w * (0.5 * b2.phi * d2.transpose() + 0.5 * d2 * b2.phi.transpose() + mu * b2.phi * b2.phi.transpose());
    }
  });

  const int n = ne * np;
  sys.num_dofs = n;
  sys.rhs = Eigen::MatrixXd::Zero(n, 2);
  std::vector<Eigen::Triplet<double>> trip;
  auto add_block = [&](int ea, int eb, const Eigen::MatrixXd& M) {
    for (int i = 0; i < np; ++i) {
      for (int j = 0; j < np; ++j) trip.emplace_back(ea * np + i, eb * np + j, M(i, j));
    }
  };
  for (int e = 0; e < ne; ++e) add_block(e, e, Ke[e]);
  for (const auto& B : blocks) {
    add_block(B.e1, B.e1, B.A11);
    if (B.e2 >= 0) {
      add_block(B.e1, B.e2, B.A12);
      add_block(B.e2, B.e1, B.A21);
      add_block(B.e2, B.e2, B.A22);
    } else {
      sys.rhs.block(B.e1 * np, 0, np, 2) += B.rhs1;
    }
  }
  sys.A.resize(n, n);
  sys.A.setFromTriplets(trip.begin(), trip.end());
  return sys;
}

namespace {

Eigen::MatrixXd solve_sparse(const Eigen::SparseMatrix<double>& A, const Eigen::MatrixXd& b, double tol) {
  Eigen::MatrixXd x;
  if (A.rows() < 200000) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      x = ldlt.solve(b);
      ok = ldlt.info() == Eigen::Success && x.allFinite();
    }
    if (!ok) {
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.analyzePattern(A);
      lu.factorize(A);
      if (lu.info() != Eigen::Success) throw Error(ErrorKind::Solver, "singular system: factorization failed");
      x = lu.solve(b);
    }
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg(A);
    cg.setTolerance(tol);
    cg.setMaxIterations(20 * static_cast<int>(A.rows()));
    x.resize(A.rows(), b.cols());
    for (int c = 0; c < b.cols(); ++c) x.col(c) = cg.solve(b.col(c));
  }
  return x;
}

double relative_residual(const Eigen::SparseMatrix<double>& A, const Eigen::MatrixXd& x, const Eigen::MatrixXd& b) {
  const double bn = b.norm();
  const double rn = (A * x - b).norm();
  return bn > 0.0 ? rn / bn : rn;
}

}  // namespace

FieldSolution solve_laplace(const TriMesh& mesh, const DomainSpec& domain, const BoundaryFunction& bc,
                            const DiscretizationChoice& choice, int threads) {
  const LinearSystem sys = assemble_system(mesh, domain, bc, choice, threads);
  Eigen::MatrixXd x = solve_sparse(sys.A, sys.rhs, choice.tolerance);
  double res = relative_residual(sys.A, x, sys.rhs);
  if (res > choice.tolerance) {
    // One step of iterative refinement before giving up.
    x += solve_sparse(sys.A, sys.rhs - sys.A * x, choice.tolerance);
    res = relative_residual(sys.A, x, sys.rhs);
  }
  if (!(res <= choice.tolerance)) {
    std::ostringstream msg;
    msg << "linear solve did not converge: relative residual " << res;
    throw Error(ErrorKind::Solver, msg.str());
  }

  const int np = mesh.ref().num_nodes();
  FieldSolution sol;
  sol.scheme = choice.scheme;
  sol.order = choice.order;
  sol.residual = res;
  sol.u.assign(mesh.elements.size(), std::vector<double>(np));
  sol.v.assign(mesh.elements.size(), std::vector<double>(np));
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int n = 0; n < np; ++n) {
      if (choice.scheme == Scheme::CG) {
        const int g = sys.l2g[e][n];
        const int r = sys.free_index[g];
        sol.u[e][n] = r >= 0 ? x(r, 0) : sys.dirichlet[g][0];
        sol.v[e][n] = r >= 0 ? x(r, 1) : sys.dirichlet[g][1];
      } else {
        sol.u[e][n] = x(e * np + n, 0);
        sol.v[e][n] = x(e * np + n, 1);
      }
    }
  }
  return sol;
}

std::array<double, 2> evaluate(const TriMesh& mesh, const FieldSolution& sol, int e, Vec2 xi) {
  const Eigen::VectorXd phi = mesh.ref().basis(xi);
  double u = 0.0, v = 0.0;
  for (int n = 0; n < phi.size(); ++n) {
    u += phi[n] * sol.u[e][n];
    v += phi[n] * sol.v[e][n];
  }
  return {u, v};
}

JumpReport jump_norm(const TriMesh& mesh, const FieldSolution& sol) {
  JumpReport rep;
  const int nfq = mesh.order + 2;
  double sum = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      const auto nb = mesh.adjacency[e][k];
      if (nb.element < 0 || nb.element < e) continue;
      const FaceQuadrature fq = face_quadrature(mesh, e, k, nfq);
      double ju = 0.0, jv = 0.0;
      for (std::size_t q = 0; q < fq.sigma.size(); ++q) {
        const auto a = evaluate(mesh, sol, e, RefTriangle::edge_point(k, fq.sigma[q]));
        const auto b = evaluate(mesh, sol, nb.element, RefTriangle::edge_point(nb.edge, -fq.sigma[q]));
        ju += fq.weight[q] * (a[0] - b[0]) * (a[0] - b[0]);
        jv += fq.weight[q] * (a[1] - b[1]) * (a[1] - b[1]);
      }
      EdgeJump j{e, k, nb.element, nb.edge, std::sqrt(ju), std::sqrt(jv)};
      const double mag = std::hypot(j.ju, j.jv);
      rep.max = std::max(rep.max, mag);
      sum += mag;
      rep.edges.push_back(j);
    }
  }
  rep.mean = rep.edges.empty() ? 0.0 : sum / static_cast<double>(rep.edges.size());
  return rep;
}

FieldRange field_range(const TriMesh& mesh, const FieldSolution& sol) {
  FieldRange r{1e300, -1e300, 1e300, -1e300};
  const auto& R = mesh.ref();
  for (int e = 0; e < mesh.num_elements(); ++e) {
    for (int q = 0; q < R.phi_q().rows(); ++q) {
      double u = 0.0, v = 0.0;
      for (int n = 0; n < R.num_nodes(); ++n) {
        u += R.phi_q()(q, n) * sol.u[e][n];
        v += R.phi_q()(q, n) * sol.v[e][n];
      }
      r.umin = std::min(r.umin, u);
      r.umax = std::max(r.umax, u);
      r.vmin = std::min(r.vmin, v);
      r.vmax = std::max(r.vmax, v);
    }
  }
  return r;
}

std::string solution_to_json(const FieldSolution& sol) {
  nlohmann::json j;
  j["scheme"] = to_string(sol.scheme);
  j["order"] = sol.order;
  j["residual"] = sol.residual;
  j["u"] = sol.u;
  j["v"] = sol.v;
  return j.dump();
}

FieldSolution solution_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FieldSolution s;
    const std::string scheme = j.at("scheme").get<std::string>();
    if (scheme != "cg" && scheme != "dg") throw Error(ErrorKind::Config, "field artifact: unknown scheme");
    s.scheme = scheme == "cg" ? Scheme::CG : Scheme::DG;
    s.order = j.at("order").get<int>();
    s.residual = j.at("residual").get<double>();
    s.u = j.at("u").get<std::vector<std::vector<double>>>();
    s.v = j.at("v").get<std::vector<std::vector<double>>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Config, std::string("field artifact: ") + e.what());
  }
}

}  // namespace quadfield

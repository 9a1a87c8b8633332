#include "quadfield/reftriangle.hpp"

#include <algorithm>
#include <memory>
#include <mutex>

#include "quadfield/quadrature.hpp"

namespace quadfield {

namespace {

constexpr int kMaxOrder = 10;

void rs_to_ab(Vec2 rs, double* a, double* b) {
  *a = (rs.y != 1.0) ? 2.0 * (1.0 + rs.x) / (1.0 - rs.y) - 1.0 : -1.0;
  *b = rs.y;
}

// Warp function of the 1D Lobatto points against equispaced points, divided
// by the blend's zero at the edge ends.
double warpfactor(int n, double rout) {
  const auto& lgl = gauss_lobatto(n + 1).points;
  // Lagrange interpolation on equispaced nodes of (lgl - req).
  double warp = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double ri = -1.0 + 2.0 * i / n;
    double li = 1.0;
    for (int j = 0; j <= n; ++j) {
      if (j == i) continue;
      const double rj = -1.0 + 2.0 * j / n;
      li *= (rout - rj) / (ri - rj);
    }
    warp += li * (lgl[i] - ri);
  }
  if (std::abs(rout) < 1.0 - 1e-10) {
    warp /= 1.0 - rout * rout;
  }
  return warp;
}

}  // namespace

std::vector<Vec2> warp_blend_nodes(int n) {
  static constexpr double alpopt[] = {0.0000, 0.0000, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832,
                                      1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258};
  const double alpha = n < 16 ? alpopt[n - 1] : 5.0 / 3.0;
  std::vector<Vec2> out;
  if (n == 1) return {{-1, -1}, {1, -1}, {-1, 1}};
  const double sq3 = std::sqrt(3.0);
  for (int i = 1; i <= n + 1; ++i) {
    for (int j = 1; j <= n + 2 - i; ++j) {
      const double L1 = (i - 1.0) / n;
      const double L3 = (j - 1.0) / n;
      const double L2 = 1.0 - L1 - L3;
      double x = -L2 + L3;
      double y = (-L2 - L3 + 2.0 * L1) / sq3;
      const double b1 = 4.0 * L2 * L3, b2 = 4.0 * L1 * L3, b3 = 4.0 * L1 * L2;
      const double w1 = b1 * warpfactor(n, L3 - L2) * (1.0 + (alpha * L1) * (alpha * L1));
      const double w2 = b2 * warpfactor(n, L1 - L3) * (1.0 + (alpha * L2) * (alpha * L2));
      const double w3 = b3 * warpfactor(n, L2 - L1) * (1.0 + (alpha * L3) * (alpha * L3));
      x += w1 + std::cos(2.0 * kPi / 3.0) * w2 + std::cos(4.0 * kPi / 3.0) * w3;
      y += std::sin(2.0 * kPi / 3.0) * w2 + std::sin(4.0 * kPi / 3.0) * w3;
      // Equilateral -> right reference triangle.
      const double l1 = (sq3 * y + 1.0) / 3.0;
      const double l2 = (-3.0 * x - sq3 * y + 2.0) / 6.0;
      const double l3 = (3.0 * x - sq3 * y + 2.0) / 6.0;
      out.push_back({-l2 + l3 - l1, -l2 - l3 + l1});
    }
  }
  return out;
}

double dubiner(Vec2 rs, int i, int j) {
  double a = 0.0, b = 0.0;
  rs_to_ab(rs, &a, &b);
  return std::sqrt(2.0) * jacobi_p(a, 0, 0, i) * jacobi_p(b, 2 * i + 1, 0, j) * std::pow(1.0 - b, i);
}

void dubiner_grad(Vec2 rs, int id, int jd, double* dr, double* ds) {
  double a = 0.0, b = 0.0;
  rs_to_ab(rs, &a, &b);
  const double fa = jacobi_p(a, 0, 0, id);
  const double dfa = jacobi_p_grad(a, 0, 0, id);
  const double gb = jacobi_p(b, 2 * id + 1, 0, jd);
  const double dgb = jacobi_p_grad(b, 2 * id + 1, 0, jd);
  double r = dfa * gb;
  if (id > 0) r *= std::pow(0.5 * (1.0 - b), id - 1);
  double s = dfa * (gb * (0.5 * (1.0 + a)));
  if (id > 0) s *= std::pow(0.5 * (1.0 - b), id - 1);
  double tmp = dgb * std::pow(0.5 * (1.0 - b), id);
  if (id > 0) tmp -= 0.5 * id * gb * std::pow(0.5 * (1.0 - b), id - 1);
  s += fa * tmp;
  const double scale = std::pow(2.0, id + 0.5);
  *dr = r * scale;
  *ds = s * scale;
}

RefTriangle::RefTriangle(int order) : order_(order) {
  if (order < 1 || order > kMaxOrder) throw std::out_of_range("RefTriangle: unsupported order");
  nodes_ = warp_blend_nodes(order);
  const int np = num_nodes();

  const std::array<Vec2, 3> verts{{{-1, -1}, {1, -1}, {-1, 1}}};
  for (int k = 0; k < 3; ++k) {
    for (int n = 0; n < np; ++n) {
      if (distance(nodes_[n], verts[k]) < 1e-10) vertex_nodes_[k] = n;
    }
  }
  constexpr double tol = 1e-10;
  for (int n = 0; n < np; ++n) {
    const Vec2 p = nodes_[n];
    bool on_edge = false;
    if (std::abs(p.y + 1.0) < tol) { edge_nodes_[0].push_back(n); on_edge = true; }
    if (std::abs(p.x + p.y) < tol) { edge_nodes_[1].push_back(n); on_edge = true; }
    if (std::abs(p.x + 1.0) < tol) { edge_nodes_[2].push_back(n); on_edge = true; }
    if (!on_edge) interior_nodes_.push_back(n);
  }
  auto by = [&](auto key) { return [&, key](int a, int b) { return key(nodes_[a]) < key(nodes_[b]); }; };
  std::sort(edge_nodes_[0].begin(), edge_nodes_[0].end(), by([](Vec2 p) { return p.x; }));
  std::sort(edge_nodes_[1].begin(), edge_nodes_[1].end(), by([](Vec2 p) { return p.y; }));
  std::sort(edge_nodes_[2].begin(), edge_nodes_[2].end(), by([](Vec2 p) { return -p.y; }));

  Eigen::MatrixXd V(np, np);
  for (int n = 0; n < np; ++n) V.row(n) = modal(nodes_[n]).transpose();
  invV_ = V.inverse();

  const auto& gl = gauss_legendre(order + 3);
  for (std::size_t i = 0; i < gl.points.size(); ++i) {
    for (std::size_t j = 0; j < gl.points.size(); ++j) {
      const double a = gl.points[i], b = gl.points[j];
      qpts_.push_back({0.5 * (1.0 + a) * (1.0 - b) - 1.0, b});
      qwts_.push_back(gl.weights[i] * gl.weights[j] * 0.5 * (1.0 - b));
    }
  }
  const int nq = static_cast<int>(qpts_.size());
  phi_q_.resize(nq, np);
  dr_q_.resize(nq, np);
  ds_q_.resize(nq, np);
  Eigen::VectorXd dr, ds;
  for (int q = 0; q < nq; ++q) {
    phi_q_.row(q) = basis(qpts_[q]).transpose();
    basis_grad(qpts_[q], dr, ds);
    dr_q_.row(q) = dr.transpose();
    ds_q_.row(q) = ds.transpose();
  }
}

const RefTriangle& RefTriangle::get(int order) {
  static std::array<std::unique_ptr<RefTriangle>, kMaxOrder + 1> cache;
  static std::once_flag flags[kMaxOrder + 1];
  if (order < 1 || order > kMaxOrder) throw std::out_of_range("RefTriangle: unsupported order");
  std::call_once(flags[order], [order] { cache[order] = std::make_unique<RefTriangle>(order); });
  return *cache[order];
}

Eigen::VectorXd RefTriangle::modal(Vec2 rs) const {
  Eigen::VectorXd m(num_nodes());
  int k = 0;
  for (int i = 0; i <= order_; ++i) {
    for (int j = 0; j <= order_ - i; ++j) m[k++] = dubiner(rs, i, j);
  }
  return m;
}

void RefTriangle::modal_grad(Vec2 rs, Eigen::VectorXd& dr, Eigen::VectorXd& ds) const {
  dr.resize(num_nodes());
  ds.resize(num_nodes());
  int k = 0;
  for (int i = 0; i <= order_; ++i) {
    for (int j = 0; j <= order_ - i; ++j) {
      dubiner_grad(rs, i, j, &dr[k], &ds[k]);
      ++k;
    }
  }
}

Eigen::VectorXd RefTriangle::basis(Vec2 rs) const { return invV_.transpose() * modal(rs); }

void RefTriangle::basis_grad(Vec2 rs, Eigen::VectorXd& dr, Eigen::VectorXd& ds) const {
  Eigen::VectorXd mr, ms;
  modal_grad(rs, mr, ms);
  dr = invV_.transpose() * mr;
  ds = invV_.transpose() * ms;
}

Vec2 RefTriangle::edge_point(int k, double sigma) {
  static constexpr std::array<Vec2, 3> v{{{-1, -1}, {1, -1}, {-1, 1}}};
  const Vec2 a = v[k], b = v[(k + 1) % 3];
  return 0.5 * (1.0 - sigma) * a + 0.5 * (1.0 + sigma) * b;
}

Vec2 RefTriangle::edge_tangent(int k) {
  static constexpr std::array<Vec2, 3> v{{{-1, -1}, {1, -1}, {-1, 1}}};
  return 0.5 * (v[(k + 1) % 3] - v[k]);
}

std::array<double, 3> RefTriangle::barycentric(Vec2 rs) {
  return {-(rs.x + rs.y) / 2.0, (1.0 + rs.x) / 2.0, (1.0 + rs.y) / 2.0};
}

bool RefTriangle::inside(Vec2 rs, double tol) {
  return rs.x >= -1.0 - tol && rs.y >= -1.0 - tol && rs.x + rs.y <= tol;
}

}  // namespace quadfield

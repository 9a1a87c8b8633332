#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "quadfield/geometry.hpp"

namespace quadfield {

/// Reference triangle {r, s >= -1, r + s <= 0} with vertices v0 = (-1,-1),
/// v1 = (1,-1), v2 = (-1,1). Local edge k runs from vertex k to vertex k+1.
///
/// Nodes are warp-and-blend points; the nodal (Lagrange) basis is expressed
/// through the orthonormal Dubiner basis and the inverse Vandermonde matrix.
class RefTriangle {
 public:
  explicit RefTriangle(int order);

  /// Shared immutable instance for an order in [1, 10].
  static const RefTriangle& get(int order);

  int order() const { return order_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Vec2>& nodes() const { return nodes_; }
  int vertex_node(int k) const { return vertex_nodes_[k]; }
  /// Nodes on edge k ordered from its start vertex to its end vertex (inclusive).
  const std::vector<int>& edge_nodes(int k) const { return edge_nodes_[k]; }
  const std::vector<int>& interior_nodes() const { return interior_nodes_; }

  /// Volume quadrature (collapsed Gauss rule, exact to degree 2P+2).
  const std::vector<Vec2>& quad_points() const { return qpts_; }
  const std::vector<double>& quad_weights() const { return qwts_; }
  /// Nodal basis values / reference gradients at the quadrature points (nq x np).
  const Eigen::MatrixXd& phi_q() const { return phi_q_; }
  const Eigen::MatrixXd& dr_q() const { return dr_q_; }
  const Eigen::MatrixXd& ds_q() const { return ds_q_; }

  /// Nodal basis values at an arbitrary reference point.
  Eigen::VectorXd basis(Vec2 rs) const;
  /// Reference gradients of the nodal basis.
  void basis_grad(Vec2 rs, Eigen::VectorXd& dr, Eigen::VectorXd& ds) const;

  /// Point on edge k at sigma in [-1, 1] (sigma=-1 at the start vertex).
  static Vec2 edge_point(int k, double sigma);
  /// Tangent d(xi)/d(sigma) of edge k.
  static Vec2 edge_tangent(int k);
  static std::array<double, 3> barycentric(Vec2 rs);
  static bool inside(Vec2 rs, double tol = 0.0);

 private:
  Eigen::VectorXd modal(Vec2 rs) const;
  void modal_grad(Vec2 rs, Eigen::VectorXd& dr, Eigen::VectorXd& ds) const;

  int order_;
  std::vector<Vec2> nodes_;
  std::array<int, 3> vertex_nodes_{};
  std::array<std::vector<int>, 3> edge_nodes_;
  std::vector<int> interior_nodes_;
  Eigen::MatrixXd invV_;
  std::vector<Vec2> qpts_;
  std::vector<double> qwts_;
  Eigen::MatrixXd phi_q_, dr_q_, ds_q_;
};

/// Warp-and-blend nodes of order P in the reference triangle.
std::vector<Vec2> warp_blend_nodes(int order);

/// Orthonormal Dubiner mode (i, j) and its reference gradient.
double dubiner(Vec2 rs, int i, int j);
void dubiner_grad(Vec2 rs, int i, int j, double* dr, double* ds);

}  // namespace quadfield

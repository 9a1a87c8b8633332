#pragma once

#include <Eigen/Sparse>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "quadfield/geometry.hpp"
#include "quadfield/trimesh.hpp"

namespace quadfield {

enum class Scheme { CG, DG };

const char* to_string(Scheme s);

struct DiscretizationChoice {
  Scheme scheme = Scheme::CG;
  int order = 3;
  double penalty = 10.0;     // SIPG constant C_pen
  double tolerance = 1e-10;  // relative linear-solve residual
};

/// CG when every corner carries continuous boundary data, DG otherwise.
DiscretizationChoice choose_discretization(const DomainSpec& domain, int order = 3);

/// Throws a config error when CG is forced on a domain with discontinuous data.
void validate_scheme(const DomainSpec& domain, Scheme scheme);

/// Where Dirichlet data is sampled: the physical point and its curve address.
struct BoundarySample {
  Vec2 x;
  SegmentRef segment;
  double t = 0.0;
};
using BoundaryFunction = std::function<std::array<double, 2>(const BoundarySample&)>;

/// (cos 4 theta_b, sin 4 theta_b) from the tangent of the addressed segment.
BoundaryFunction guiding_field_bc(const DomainSpec& domain);

/// Dirichlet values at the nodes of one boundary edge of one element.
/// Discontinuous corners keep the one-sided value of each incident edge.
struct EdgeBoundaryValues {
  int element = 0;
  int edge = 0;
  std::vector<Vec2> points;
  std::vector<std::array<double, 2>> values;
};
std::vector<EdgeBoundaryValues> assemble_dirichlet_bc(const TriMesh& mesh, const DomainSpec& domain,
                                                      const BoundaryFunction& bc);

/// Per-element nodal coefficients of (u, v) in the RefTriangle node order.
struct FieldSolution {
  Scheme scheme = Scheme::CG;
  int order = 3;
  std::vector<std::vector<double>> u;
  std::vector<std::vector<double>> v;
  double residual = 0.0;
};

/// Global linear system before solving; exposed for property checks.
struct LinearSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::MatrixXd rhs;  // two columns: u, v
  // CG only: free-dof map and Dirichlet values for reconstruction.
  std::vector<std::vector<int>> l2g;
  std::vector<int> free_index;  // global dof -> row, or -1 if Dirichlet
  std::vector<std::array<double, 2>> dirichlet;
  int num_dofs = 0;
};

LinearSystem assemble_system(const TriMesh& mesh, const DomainSpec& domain, const BoundaryFunction& bc,
                             const DiscretizationChoice& choice, int threads = 1);

FieldSolution solve_laplace(const TriMesh& mesh, const DomainSpec& domain, const BoundaryFunction& bc,
                            const DiscretizationChoice& choice, int threads = 1);

struct EdgeJump {
  int element = 0, edge = 0, neighbor = 0, neighbor_edge = 0;
  double ju = 0.0, jv = 0.0;  // L2 norms of [[u]], [[v]] along the edge
};
struct JumpReport {
  std::vector<EdgeJump> edges;
  double max = 0.0;
  double mean = 0.0;
};
JumpReport jump_norm(const TriMesh& mesh, const FieldSolution& sol);

struct FieldRange {
  double umin = 0, umax = 0, vmin = 0, vmax = 0;
};
/// Extremes of u and v over all element quadrature points.
FieldRange field_range(const TriMesh& mesh, const FieldSolution& sol);

/// Evaluates (u, v) inside element e at reference point xi.
std::array<double, 2> evaluate(const TriMesh& mesh, const FieldSolution& sol, int e, Vec2 xi);

std::string solution_to_json(const FieldSolution& sol);
FieldSolution solution_from_json(const std::string& text);

}  // namespace quadfield

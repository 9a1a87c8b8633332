#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "quadfield/geometry.hpp"
#include "quadfield/reftriangle.hpp"

namespace quadfield {

/// Boundary address of an element edge: the curve segment it lies on and the
/// curve parameters at the edge's start and end vertices.
struct EdgeTag {
  bool boundary = false;
  SegmentRef segment;
  double t0 = 0.0;
  double t1 = 0.0;
};

struct CurvedTriangle {
  std::array<int, 3> v{};             // counter-clockwise vertex ids
  std::vector<Vec2> nodes;            // geometry nodes, RefTriangle node order
  std::array<EdgeTag, 3> edges;       // edge k joins v[k] -> v[k+1]
};

struct Neighbor {
  int element = -1;
  int edge = -1;
};

class TriMesh {
 public:
  int order = 1;
  std::vector<Vec2> vertices;
  std::vector<CurvedTriangle> elements;
  std::vector<std::array<Neighbor, 3>> adjacency;
  double bbox_extent = 1.0;  // bounding-box diagonal, refreshed by build_adjacency

  const RefTriangle& ref() const { return RefTriangle::get(order); }
  int num_elements() const { return static_cast<int>(elements.size()); }

  /// Rebuilds element adjacency. Throws on non-manifold edges.
  void build_adjacency();

  BBox bbox() const;
  /// Shortest straight vertex-to-vertex edge.
  double min_edge_length() const;
  /// Number of distinct edges (interior + boundary).
  int num_edges() const;
};

/// Conforming linear triangulation of the domain with boundary edges tagged.
TriMesh generate_background_mesh(const DomainSpec& domain, double target_h);

/// Curve parameter at edge coordinate sigma in [-1, 1] of a boundary edge,
/// interpolated by arclength between the edge's end parameters.
double edge_curve_parameter(const DomainSpec& domain, const EdgeTag& tag, double sigma);

/// Elevates a linear mesh to order P, projecting boundary-edge nodes onto
/// their curve segments and blending the displacement into the interior.
TriMesh elevate_and_curve(const TriMesh& linear, int order, const DomainSpec& domain);

Vec2 map_to_physical(const TriMesh& mesh, int elem, Vec2 xi);
Eigen::Matrix2d jacobian(const TriMesh& mesh, int elem, Vec2 xi);
/// Newton inversion of the element map; nullopt when x is not in the element.
std::optional<Vec2> invert_map(const TriMesh& mesh, int elem, Vec2 x);

/// Element area (integral of det J).
double element_area(const TriMesh& mesh, int elem);
double mesh_area(const TriMesh& mesh);
/// Minimum det J over quadrature points and nodes of an element.
double min_jacobian(const TriMesh& mesh, int elem);

/// Gmsh MSH 2.2 ASCII. Linear triangles (+ boundary lines) are read; boundary
/// edges are re-associated with the domain curves by closest-point projection.
TriMesh import_msh(const std::string& path, const DomainSpec& domain);
TriMesh parse_msh(std::istream& in, const DomainSpec& domain);
/// Writes the mesh at its own order (equispaced high-order nodes for P > 1).
void write_msh(const TriMesh& mesh, std::ostream& out);

/// Legacy VTK with each element subdivided into linear triangles. Optional
/// per-element nodal fields (name, values per element node).
struct NodalField {
  std::string name;
  const std::vector<std::vector<double>>* values;
};
void write_vtk(const TriMesh& mesh, std::ostream& out, const std::vector<NodalField>& fields = {},
               int subdivisions = 4);

/// JSON round trip (shortest round-trip doubles).
std::string mesh_to_json(const TriMesh& mesh);
TriMesh mesh_from_json(const std::string& text);

/// Equispaced (i, j) lattice index pairs of a triangle of order p in Gmsh's
/// recursive ordering (vertices, edges, interior).
std::vector<std::array<int, 2>> gmsh_triangle_ordering(int p);
/// Same for quadrilaterals.
std::vector<std::array<int, 2>> gmsh_quad_ordering(int p);

}  // namespace quadfield

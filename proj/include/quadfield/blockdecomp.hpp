#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quadfield/field.hpp"
#include "quadfield/geometry.hpp"
#include "quadfield/singular.hpp"
#include "quadfield/tracer.hpp"

namespace quadfield {

/// Where an interior curve ends.
struct CurveEnd {
  enum class Kind { Node, Corner, Boundary, Artificial, Interior };
  Kind kind = Kind::Interior;
  int id = -1;  // node, corner or artificial node index
  SegmentRef segment;
  double t = 0.0;
  Vec2 position;
};

/// Curve cutting the domain: a separatrix or a midpoint-division branch.
struct CutCurve {
  std::vector<Vec2> points;
  CurveEnd start, end;
  int source = -1;  // separatrix index, -1 for artificial branches
};

enum class VertexKind { Node, Corner, BoundaryPoint, Crossing, Artificial, Joint };

const char* to_string(VertexKind k);

struct SubVertex {
  Vec2 position;
  VertexKind kind = VertexKind::Crossing;
  int id = -1;        // node / corner / artificial index
  int valence = -1;   // corner valence
  bool on_boundary = false;
};

struct SubEdge {
  int v0 = -1, v1 = -1;
  std::vector<Vec2> points;  // v0 -> v1
  bool boundary = false;
  SegmentRef segment;  // boundary edges lie on one segment, t0 -> t1 along the loop
  double t0 = 0.0, t1 = 0.0;
  int source = -1;  // curve index for interior edges
};

struct HalfEdge {
  int edge = -1;
  bool forward = true;
  int origin = -1;
  int twin = -1;
  int next = -1;
  int face = -1;  // -1 on the exterior side of the boundary
};

struct SubFace {
  int half_edge = -1;
  double area = 0.0;
};

/// Vertices, edges and faces cut out of the domain by boundary arcs and curves.
struct PlanarSubdivision {
  std::vector<SubVertex> vertices;
  std::vector<SubEdge> edges;
  std::vector<HalfEdge> half_edges;  // 2 e and 2 e + 1 are the two sides of edge e
  std::vector<SubFace> faces;        // bounded faces inside the domain
  std::vector<CutCurve> curves;
  int holes = 0;

  /// Half-edges of a face in walking order.
  std::vector<int> face_cycle(int face) const;
  /// Points of a half-edge from its origin.
  std::vector<Vec2> half_edge_points(int h) const;
  int half_edge_target(int h) const;
  int euler_characteristic() const;  // V - E + F with the unbounded face
};

struct SubdivisionOptions {
  double snap = 0.0;       // crossings this close to a shared endpoint are ignored
  int spline_samples = 4;  // Catmull-Rom samples per traced interval
  double min_crossing_angle = kPi / 3.0;
  double corner_turn = kPi / 4.0;  // crossings turning more than this are face corners
};

/// Centripetal Catmull-Rom resampling of a traced polyline.
std::vector<Vec2> catmull_rom(const std::vector<Vec2>& points, int samples);

/// Cutting curves from traced separatrices.
std::vector<CutCurve> separatrix_curves(const std::vector<Separatrix>& seps, const Topology& topo,
                                        const SubdivisionOptions& opt = {});

PlanarSubdivision build_subdivision(const DomainSpec& domain, const Topology& topo, const std::vector<CutCurve>& curves,
                                    const SubdivisionOptions& opt = {});

PlanarSubdivision build_subdivision(const DomainSpec& domain, const Topology& topo, const std::vector<Separatrix>& seps,
                                    const SubdivisionOptions& opt = {});

struct FaceInfo {
  std::vector<int> corners;  // vertex ids in walking order
  int degenerate_corner = -1;  // valence-0 corner of a triangle
};

struct FaceClassification {
  std::vector<FaceInfo> faces;
  std::vector<int> quads;
  std::vector<int> triangles;
};

/// Labels faces by block corner count; throws on anything but 3 or 4.
FaceClassification classify_faces(const PlanarSubdivision& sub, const SubdivisionOptions& opt = {});

struct MidpointDivision {
  Vec2 node;
  std::array<CutCurve, 3> branches;  // physical branch first
};

/// Splits a triangular face by an artificial 3-valent node. `converging` is the
/// removed separatrix piece running into the degenerate corner (front to corner),
/// when there is one; otherwise the physical branch is traced through `field`.
MidpointDivision midpoint_division(const DomainSpec& domain, const PlanarSubdivision& sub, const FaceInfo& face,
                                   int artificial_id, const VectorField* field, double step,
                                   const std::vector<Vec2>* converging = nullptr);

/// Piece of a block side: an exact boundary range or a polyline.
struct SidePiece {
  bool on_segment = false;
  CurveSegment segment;
  SegmentRef ref;
  double t0 = 0.0, t1 = 0.0;
  double a0 = 0.0, a1 = 0.0;  // arclength of t0, t1 along the segment
  std::vector<Vec2> points;
  std::vector<double> cumulative;
  double length = 0.0;

  Vec2 eval(double fraction) const;
};

struct BlockSide {
  int id = -1;
  std::vector<int> edges;
  std::vector<SidePiece> pieces;
  std::vector<double> offsets;  // cumulative piece lengths
  double length = 0.0;

  /// Point at a normalized arclength in [0, 1].
  Vec2 eval(double u) const;
};

/// Curved block: sides bottom (c0 c1), right (c1 c2), top (c3 c2), left (c0 c3).
struct QuadBlock {
  int face = -1;
  std::array<int, 4> corner_ids{};
  std::array<Vec2, 4> corners;
  std::array<int, 4> sides{};       // index into BlockDecomposition::sides
  std::array<bool, 4> reversed{};   // side geometry runs against the block direction
};

struct DecompositionVertex {
  Vec2 position;
  VertexKind kind = VertexKind::Crossing;
  bool on_boundary = false;
  int blocks = 0;  // blocks with a corner here
};

struct BlockDecomposition {
  std::vector<BlockSide> sides;
  std::vector<QuadBlock> blocks;
  std::vector<DecompositionVertex> vertices;
  std::vector<Vec2> artificial_nodes;
  int holes = 0;
  int degenerate_faces = 0;  // before midpoint division

  Vec2 side_point(const QuadBlock& b, int side, double p) const;
  /// Transfinite map of block b.
  Vec2 map(int b, double s, double t) const;
  std::array<Vec2, 2> derivatives(int b, double s, double t) const;
  double jacobian(int b, double s, double t) const;
  double area(int b) const;
  /// Interior block corners where the number of blocks differs from 4.
  int interior_irregular_nodes() const;
};

/// Coons blocks of an all-quad subdivision with a 10 x 10 Jacobian check.
BlockDecomposition build_blocks(const PlanarSubdivision& sub, const DomainSpec& domain, int threads = 1);

struct CutOptions {
  SubdivisionOptions subdivision;
  int threads = 1;
};

/// Full cut stage: subdivision, repair of degenerate triangles, blocks.
BlockDecomposition decompose(const DomainSpec& domain, const Topology& topo, const TraceResult& trace,
                             const VectorField& field, const CutOptions& opt = {});

/// Minimum of det J / (|Q_s| |Q_t|) on a samples x samples grid of the parameter rectangle.
double scaled_jacobian(const BlockDecomposition& d, int block, double s0, double s1, double t0, double t1,
                       int samples = 5);

struct BlockSplit {
  int ns = 1, nt = 1;
  double ratio_s = 1.0, ratio_t = 1.0;  // geometric grading, last interval / first
};

struct SplitSpec {
  int n = 1;
  std::map<int, BlockSplit> per_block;

  BlockSplit for_block(int b) const;
};

/// Graded parameter points 0 = x_0 < ... < x_n = 1.
std::vector<double> graded_points(int n, double ratio);

struct QuadMesh {
  int order = 1;
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 4>> quads;
  std::vector<int> block;
  std::vector<std::array<double, 4>> param;  // s0 s1 t0 t1 of each child in its block
  std::vector<std::vector<Vec2>> high_order;  // (order+1)^2 tensor nodes per quad, row-major in t

  int euler_characteristic() const;  // V - E + F with the unbounded face
};

/// Splits every block along its parameter lines.
QuadMesh isoparametric_split(const BlockDecomposition& d, const SplitSpec& spec, int order = 1, int threads = 1);

/// Every edge used once (on the boundary) or twice (inside).
bool mesh_is_conforming(const QuadMesh& m, const DomainSpec& domain);

std::string decomposition_to_json(const BlockDecomposition& d);
BlockDecomposition decomposition_from_json(const std::string& text, const DomainSpec& domain);

void write_quad_msh(const QuadMesh& m, std::ostream& out, bool high_order = false);
void write_quad_vtk(const QuadMesh& m, std::ostream& out);
void write_blocks_svg(const DomainSpec& domain, const BlockDecomposition& d, const QuadMesh* mesh, std::ostream& out);

}  // namespace quadfield

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "quadfield/field.hpp"
#include "quadfield/geometry.hpp"

namespace quadfield {

/// Interior zero of the guiding field.
struct CriticalPoint {
  Vec2 position;
  int element = -1;
  int index = 0;    // I_c in {+1, -1}
  int valence = 4;  // 4 - I_c
  double residual = 0.0;  // |v| at position
  double radius = 0.0;    // contour radius used for the index
};

/// Boundary corner with its block valence.
struct CornerNode {
  CornerSpec corner;
  int valence = 0;
  double index = 0.0;        // I(theta_0, theta_f)
  double delta_psi = 0.0;    // total continuous change of psi along the arc
  double rounding_residual = 0.0;
  double radius = 0.0;
};

struct IndexResult {
  int index = 0;
  int valence = 4;
  double radius = 0.0;
};

struct TopologyOptions {
  double radius_factor = 0.25;  // contour radius / host circumradius
  int samples = 64;             // interior contour samples
  int corner_samples = 32;
  double corner_delta = 1e-3;   // rad, keeps corner arcs off the boundary
  double newton_tol = 1e-10;
  int newton_iterations = 30;
};

/// Elements whose node and quadrature values show u <= 0, u >= 0, v <= 0, v >= 0.
std::vector<int> flag_candidate_elements(const FieldProbe& field);

/// Newton on v(X_e(xi)) = 0. Starts at the barycenter, then near each vertex.
std::optional<CriticalPoint> newton_locate(const FieldProbe& field, int element,
                                           const TopologyOptions& opt = {});

/// Jump count of psi along a circle of radius c around p. The radius is halved
/// (up to four times) when the circle leaves the domain.
IndexResult interior_valence(const VectorField& field, Vec2 p, double c, const TopologyOptions& opt = {});

/// Valence of a boundary corner from an arc of radius c inside the domain.
/// The arc runs between the points where the circle meets the two segments.
CornerNode corner_valence(const CornerSpec& corner, const DomainSpec& domain, const VectorField& field, double c,
                          const TopologyOptions& opt = {});

struct Topology {
  std::vector<CriticalPoint> critical_points;
  std::vector<CornerNode> corners;
};

/// Full topology stage: flag, Newton, deduplicate, classify, and evaluate corners.
Topology analyze_topology(const FieldProbe& field, const DomainSpec& domain, const TopologyOptions& opt = {},
                          int threads = 1);

/// Sum of 4 - V over critical points plus 2 - V over corners; equals 4 chi for a closed decomposition.
int index_sum(const Topology& topo);

std::string topology_to_json(const Topology& topo);
Topology topology_from_json(const std::string& text);

}  // namespace quadfield

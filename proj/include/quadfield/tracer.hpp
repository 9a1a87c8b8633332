#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "quadfield/field.hpp"
#include "quadfield/geometry.hpp"
#include "quadfield/singular.hpp"

namespace quadfield {

enum class MergeMode { Normal, Aggressive };
enum class StartMode { RK4, Ramp };  // how the first three multistep values are produced

const char* to_string(MergeMode m);

struct TraceOptions {
  double step = 0.0;  // h_s; 0 means 0.25 x shortest background edge
  int max_steps = 100000;
  MergeMode mode = MergeMode::Normal;
  double kappa = 5.0;  // aggressive threshold in steps
  StartMode start = StartMode::RK4;
  double direction_tol = 1e-9;
  int direction_iterations = 100;
};

/// What a separatrix end is attached to.
struct Anchor {
  enum class Kind { Node, Corner, Boundary };
  Kind kind = Kind::Boundary;
  int id = -1;             // critical point or corner index
  SegmentRef segment;      // boundary anchors
  double t = 0.0;
  Vec2 position;
};

struct Streamline {
  enum class Status { Active, Merged, HitBoundary, Aborted };
  Anchor origin;
  int branch = 0;
  std::vector<Vec2> points;
  std::vector<double> alpha;  // direction at each point (alpha[0] is the launch direction)
  Status status = Status::Active;
  int merged_with = -1;
  Anchor end;

  // Multistep history (unit velocities at the most recent points).
  std::vector<Vec2> history;
  int steps = 0;
};

struct Separatrix {
  std::vector<Vec2> points;
  Anchor start, end;
  int source_a = -1, source_b = -1;  // streamline ids
};

struct TraceResult {
  std::vector<Streamline> streamlines;
  std::vector<Separatrix> separatrices;
  double step = 0.0;
  int rounds = 0;
};

/// Refines a direction guess at p0 by iterating psi at distance c (fixed point of adjust_branch).
double refine_direction(const VectorField& field, Vec2 p0, double c, double alpha0, double tol = 1e-9,
                        int max_iterations = 100);

/// V refined directions for an interior node, starting from guesses 2 pi k / V.
std::vector<double> initial_directions(const VectorField& field, const CriticalPoint& cp, const TraceOptions& opt = {});

/// Directions of interior separatrices at a corner: guesses theta_0 + k dtheta / V, k = 1..V-1,
/// with branches along the boundary tangents dropped.
std::vector<double> corner_directions(const VectorField& field, const CornerNode& corner, const TraceOptions& opt = {});

/// Velocity of the streamline ODE: unit vector along the branch nearest alpha_prev.
/// Returns nullopt outside the domain.
struct Direction {
  Vec2 velocity;
  double alpha = 0.0;
};
std::optional<Direction> streamline_velocity(const VectorField& field, Vec2 x, double alpha_prev);

/// Advances one streamline by one step. Returns false (and leaves it unchanged)
/// when the step leaves the field's domain.
bool advance(Streamline& s, const VectorField& field, double h, StartMode start = StartMode::RK4);

/// Starts a streamline at `from` with direction alpha, first point at `from`, second at distance c.
Streamline launch(const VectorField& field, Vec2 from, double alpha, double c, Anchor origin, int branch);

/// |front_a - front_b| < threshold and the latest directions are opposite.
bool detect_meeting(const Streamline& a, const Streamline& b, double threshold);

/// Trigonometric blend of two meeting streamlines into one separatrix from a's
/// origin to b's origin.
Separatrix merge(const Streamline& a, const Streamline& b);

/// cos^2(pi x / 2) and sin^2(pi x / 2).
double merge_weight0(double x);
double merge_weight1(double x);

/// Integrates every separatrix of the topology. Throws a tracing error when a
/// streamline fails to terminate.
TraceResult trace_all(const Topology& topo, const DomainSpec& domain, const FieldProbe& field,
                      const TraceOptions& opt = {});

/// Same on any field (used with analytic fields); `step` is h_s.
TraceResult trace_all(const Topology& topo, const DomainSpec& domain, const VectorField& field, double step,
                      const TraceOptions& opt);

std::string separatrices_to_json(const TraceResult& r);
TraceResult separatrices_from_json(const std::string& text);

/// SVG of separatrices over a psi-colored background sampled on a grid.
void write_trace_svg(const DomainSpec& domain, const VectorField& field, const Topology& topo,
                     const TraceResult& r, std::ostream& out, int grid = 120);

}  // namespace quadfield

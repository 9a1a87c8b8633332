#pragma once

#include <array>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "quadfield/solver.hpp"
#include "quadfield/trimesh.hpp"

namespace quadfield {

/// Raised by evaluation when x lies in no element.
class OutsideDomain : public std::runtime_error {
 public:
  explicit OutsideDomain(Vec2 x);
  Vec2 point;
};

/// Anything that can be sampled as a guiding field. Topology and tracing code
/// works against this so analytic fields can stand in for solved ones.
class VectorField {
 public:
  virtual ~VectorField() = default;
  /// (u, v) at x, or nullopt outside the domain.
  virtual std::optional<std::array<double, 2>> sample(Vec2 x) const = 0;
  bool contains(Vec2 x) const { return sample(x).has_value(); }
  /// Throws OutsideDomain.
  std::array<double, 2> eval_v(Vec2 x) const;
  /// Principal phase at x; throws on |v| < 1e-12.
  double eval_psi(Vec2 x) const;
};

/// Analytic field with an optional membership test (default: whole plane).
class AnalyticField : public VectorField {
 public:
  using Fn = std::function<std::array<double, 2>(Vec2)>;
  using Inside = std::function<bool(Vec2)>;
  explicit AnalyticField(Fn fn, Inside inside = {}) : fn_(std::move(fn)), inside_(std::move(inside)) {}
  std::optional<std::array<double, 2>> sample(Vec2 x) const override;

 private:
  Fn fn_;
  Inside inside_;
};

struct Location {
  int element = -1;
  Vec2 xi;
};

/// Solved field on a curved mesh with a uniform-grid point locator.
class FieldProbe : public VectorField {
 public:
  FieldProbe(const TriMesh& mesh, const FieldSolution& sol);

  /// Lowest-id element containing x, with its reference coordinates.
  std::optional<Location> locate(Vec2 x) const;
  std::array<double, 2> eval_at(const Location& loc) const;
  std::optional<std::array<double, 2>> sample(Vec2 x) const override;

  const TriMesh& mesh() const { return mesh_; }
  const FieldSolution& solution() const { return sol_; }
  double cell_size() const { return cell_; }
  /// Circumradius of the straight triangle through an element's vertices.
  double circumradius(int e) const { return circumradius_[e]; }

 private:
  const TriMesh& mesh_;
  const FieldSolution& sol_;
  BBox box_;
  double cell_ = 1.0;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> cells_;
  std::vector<double> circumradius_;
};

/// psi = atan2(v, u) / 4 in [-pi/4, pi/4]. Throws a topology error at |v| < 1e-12.
double principal_phase(double u, double v);

/// psi + k pi/2 (k = 0..3) closest to alpha_prev in circular distance.
double adjust_branch(double psi, double alpha_prev);

/// The four unit vectors of the cross with phase psi.
std::array<Vec2, 4> cross_vectors(double psi);

}  // namespace quadfield

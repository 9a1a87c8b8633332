#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace quadfield {

/// Every tunable of a pipeline run. Keys of the JSON form and CLI flags share these names.
struct PipelineConfig {
  std::string domain;
  std::string background_mesh;  // optional MSH 2.2 triangulation replacing the built-in mesher
  int order = 3;
  std::string scheme = "auto";  // auto | cg | dg
  double target_h = 0.0;        // 0: sqrt(area) / 4
  double step_factor = 0.25;    // h_s / shortest background edge
  std::string merge = "normal";  // normal | aggressive
  double kappa = 5.0;
  int split = 4;
  std::vector<std::string> split_blocks;  // "block:ns:nt[:ratio_s[:ratio_t]]"
  std::string output = "quadfield_out";
  std::vector<std::string> formats{"msh", "vtk", "svg"};
  bool high_order_msh = false;
  int threads = 0;  // 0: hardware concurrency

  double corner_angle = 1e-3;
  double penalty = 10.0;
  double linear_tol = 1e-10;
  double radius_factor = 0.25;
  int contour_samples = 64;
  int corner_samples = 32;
  double corner_delta = 1e-3;
  double newton_tol = 1e-10;
  int newton_iterations = 30;
  int max_steps = 100000;
  double direction_tol = 1e-9;
  int direction_iterations = 100;
  double snap = 0.0;  // 0: h_s
  int spline_samples = 4;
  double min_crossing_angle = 1.0471975511965976;
  double corner_turn = 0.7853981633974483;
};

/// Calls f(name, field, help) for every config field.
template <class Config, class F>
void visit_config(Config& c, F&& f) {
  f("domain", c.domain, "domain JSON file");
  f("background_mesh", c.background_mesh, "MSH 2.2 background triangulation (optional)");
  f("order", c.order, "polynomial order P");
  f("scheme", c.scheme, "auto, cg or dg");
  f("target_h", c.target_h, "background mesh size (0: sqrt(area)/4)");
  f("step_factor", c.step_factor, "tracing step / shortest background edge");
  f("merge", c.merge, "normal or aggressive");
  f("kappa", c.kappa, "aggressive merge distance in steps");
  f("split", c.split, "uniform splits per block side");
  f("split_blocks", c.split_blocks, "per-block splits block:ns:nt[:ratio_s[:ratio_t]]");
  f("output", c.output, "output directory");
  f("formats", c.formats, "extra views: msh, vtk, svg");
  f("high_order_msh", c.high_order_msh, "sample order-P nodes of each quad into quads.msh");
  f("threads", c.threads, "worker cap (0: all cores)");
  f("corner_angle", c.corner_angle, "tangent jump that makes a corner (rad)");
  f("penalty", c.penalty, "SIPG penalty constant");
  f("linear_tol", c.linear_tol, "relative linear-solve residual");
  f("radius_factor", c.radius_factor, "index contour radius / element circumradius");
  f("contour_samples", c.contour_samples, "samples on interior index contours");
  f("corner_samples", c.corner_samples, "samples on corner arcs");
  f("corner_delta", c.corner_delta, "corner arc inset from the boundary (rad)");
  f("newton_tol", c.newton_tol, "critical point Newton tolerance");
  f("newton_iterations", c.newton_iterations, "critical point Newton iterations");
  f("max_steps", c.max_steps, "streamline step cap (limit cycle guard)");
  f("direction_tol", c.direction_tol, "separatrix launch direction tolerance");
  f("direction_iterations", c.direction_iterations, "separatrix launch direction iterations");
  f("snap", c.snap, "crossing snap distance (0: tracing step)");
  f("spline_samples", c.spline_samples, "spline samples per traced interval");
  f("min_crossing_angle", c.min_crossing_angle, "smallest accepted separatrix crossing angle (rad)");
  f("corner_turn", c.corner_turn, "turn that makes a crossing a block corner (rad)");
}

/// Parses a config object. Unknown keys and wrong types are config errors.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);
/// Range checks. Throws a config error.
void validate_config(const PipelineConfig& c);

enum class Stage { Mesh = 0, Solve, Topology, Trace, Cut, Split };

const char* to_string(Stage s);

struct ArtifactRecord {
  std::string stage;
  std::string file;
  std::string fnv1a64;
};

struct PipelineResult {
  int exit_code = 0;
  std::string failed_stage;
  std::string message;
  std::vector<ArtifactRecord> artifacts;  // stage products, one per stage
  std::vector<ArtifactRecord> views;      // VTK / SVG / MSH renderings
};

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a64(const std::string& bytes);

/// Runs stages first..last. Stages before `first` are loaded from the output
/// directory. Writes manifest.json and never throws.
PipelineResult run_pipeline(const PipelineConfig& config, Stage first, Stage last, std::ostream* log = nullptr);

}  // namespace quadfield

#include "quadfield/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "quadfield/blockdecomp.hpp"
#include "quadfield/error.hpp"
#include "quadfield/field.hpp"
#include "quadfield/geometry.hpp"
#include "quadfield/singular.hpp"
#include "quadfield/solver.hpp"
#include "quadfield/tracer.hpp"
#include "quadfield/trimesh.hpp"

namespace fs = std::filesystem;

namespace quadfield {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

const char* kArtifact[] = {"mesh.json", "field.json", "topology.json", "separatrices.json", "blocks.json", "quads.msh"};

ErrorKind stage_kind(Stage s) {
  switch (s) {
    case Stage::Mesh:
    case Stage::Solve: return ErrorKind::Solver;
    case Stage::Topology: return ErrorKind::Topology;
    case Stage::Trace: return ErrorKind::Tracing;
    case Stage::Cut:
    case Stage::Split: return ErrorKind::Decomposition;
  }
  return ErrorKind::Config;
}

BlockSplit parse_block_split(const std::string& text, int& block) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() < 3 || parts.size() > 5) config_error("split_blocks entry '" + text + "': expected block:ns:nt[:ratio_s[:ratio_t]]");
  BlockSplit s;
  try {
    std::size_t used = 0;
    auto integer = [&](const std::string& p) {
      const int v = std::stoi(p, &used);
      if (used != p.size()) throw std::invalid_argument(p);
      return v;
    };
    auto real = [&](const std::string& p) {
      const double v = std::stod(p, &used);
      if (used != p.size()) throw std::invalid_argument(p);
      return v;
    };
    block = integer(parts[0]);
    s.ns = integer(parts[1]);
    s.nt = integer(parts[2]);
    if (parts.size() > 3) s.ratio_s = real(parts[3]);
    if (parts.size() > 4) s.ratio_t = real(parts[4]);
  } catch (const std::exception&) {
    config_error("split_blocks entry '" + text + "': not a number");
  }
  if (block < 0 || s.ns < 1 || s.nt < 1 || !(s.ratio_s > 0.0) || !(s.ratio_t > 0.0))
    config_error("split_blocks entry '" + text + "': out of range");
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) config_error("missing upstream artifact " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  Run(const PipelineConfig& c, std::ostream* l) : cfg(c), log(l), dir(c.output) {}

  const PipelineConfig& cfg;
  std::ostream* log;
  fs::path dir;
  PipelineResult result;
  int threads = 1;

  DomainSpec domain;
  std::optional<TriMesh> mesh;
  std::optional<FieldSolution> solution;
  std::optional<FieldProbe> probe;
  std::optional<Topology> topo;
  std::optional<TraceResult> trace;
  std::optional<BlockDecomposition> blocks;

  bool wants(const char* format) const {
    for (const auto& f : cfg.formats)
      if (f == format) return true;
    return false;
  }

  void say(const std::string& stage, const std::string& msg) const {
    if (log) *log << "[" << stage << "] " << msg << "\n";
  }

  void write(Stage stage, const std::string& file, const std::string& bytes, bool primary) {
    std::ofstream out(dir / file, std::ios::binary);
    out << bytes;
    if (!out) throw Error(ErrorKind::Config, "cannot write " + (dir / file).string());
    (primary ? result.artifacts : result.views).push_back({to_string(stage), file, fnv1a64(bytes)});
  }

  std::string load(Stage stage) const { return read_file(dir / kArtifact[static_cast<int>(stage)]); }

  const FieldProbe& field() {
    if (!probe) probe.emplace(*mesh, *solution);
    return *probe;
  }

  double step() const { return cfg.step_factor * mesh->min_edge_length(); }

  // Each stage hands its product on through the same text that lands on disk,
  // so staged and single-shot runs see identical inputs.
  void mesh_stage() {
    TriMesh linear;
    if (!cfg.background_mesh.empty()) {
      linear = import_msh(cfg.background_mesh, domain);
    } else {
      const double h = cfg.target_h > 0.0 ? cfg.target_h : std::sqrt(domain.area()) / 4.0;
      linear = generate_background_mesh(domain, h);
    }
    const TriMesh curved = elevate_and_curve(linear, cfg.order, domain);
    const std::string text = mesh_to_json(curved);
    write(Stage::Mesh, kArtifact[0], text, true);
    mesh = mesh_from_json(text);
    if (wants("msh")) {
      std::ostringstream o;
      write_msh(*mesh, o);
      write(Stage::Mesh, "mesh.msh", o.str(), false);
    }
    if (wants("vtk")) {
      std::ostringstream o;
      write_vtk(*mesh, o);
      write(Stage::Mesh, "mesh.vtk", o.str(), false);
    }
    say("mesh", std::to_string(mesh->num_elements()) + " elements, order " + std::to_string(mesh->order));
  }

  void solve_stage() {
    if (mesh->order != cfg.order)
      config_error("mesh artifact has order " + std::to_string(mesh->order) + ", config asks for " +
                   std::to_string(cfg.order));
    DiscretizationChoice choice = choose_discretization(domain, cfg.order);
    if (cfg.scheme == "cg") choice.scheme = Scheme::CG;
    if (cfg.scheme == "dg") choice.scheme = Scheme::DG;
    choice.penalty = cfg.penalty;
    choice.tolerance = cfg.linear_tol;
    const FieldSolution sol = solve_laplace(*mesh, domain, guiding_field_bc(domain), choice, threads);
    const std::string text = solution_to_json(sol);
    write(Stage::Solve, kArtifact[1], text, true);
    solution = solution_from_json(text);
    if (wants("vtk")) {
      std::ostringstream o;
      write_vtk(*mesh, o, {{"u", &solution->u}, {"v", &solution->v}});
      write(Stage::Solve, "field.vtk", o.str(), false);
    }
    std::ostringstream msg;
    msg << to_string(solution->scheme) << " P=" << solution->order << ", residual " << solution->residual;
    say("solve", msg.str());
  }

  void topology_stage() {
    TopologyOptions opt;
    opt.radius_factor = cfg.radius_factor;
    opt.samples = cfg.contour_samples;
    opt.corner_samples = cfg.corner_samples;
    opt.corner_delta = cfg.corner_delta;
    opt.newton_tol = cfg.newton_tol;
    opt.newton_iterations = cfg.newton_iterations;
    const Topology t = analyze_topology(field(), domain, opt, threads);
    const std::string text = topology_to_json(t);
    write(Stage::Topology, kArtifact[2], text, true);
    topo = topology_from_json(text);
    std::ostringstream msg;
    msg << topo->critical_points.size() << " critical points";
    for (const auto& cp : topo->critical_points) msg << " V" << cp.valence;
    msg << ", " << topo->corners.size() << " corners";
    for (const auto& c : topo->corners) msg << " V" << c.valence;
    say("topology", msg.str());
    if (topo->critical_points.empty())
      say("topology", domain.hole_count() > 0
                          ? "warning: no critical points / limit cycle risk: no interior node can tie the holes in"
                          : "warning: no critical points in the domain");
  }

  void trace_stage() {
    TraceOptions opt;
    opt.step = step();
    opt.max_steps = cfg.max_steps;
    opt.mode = cfg.merge == "aggressive" ? MergeMode::Aggressive : MergeMode::Normal;
    opt.kappa = cfg.kappa;
    opt.direction_tol = cfg.direction_tol;
    opt.direction_iterations = cfg.direction_iterations;
    const TraceResult r = trace_all(*topo, domain, field(), opt);
    const std::string text = separatrices_to_json(r);
    write(Stage::Trace, kArtifact[3], text, true);
    trace = separatrices_from_json(text);
    if (wants("svg")) {
      std::ostringstream o;
      write_trace_svg(domain, field(), *topo, *trace, o);
      write(Stage::Trace, "separatrices.svg", o.str(), false);
    }
    std::ostringstream msg;
    msg << trace->separatrices.size() << " separatrices (" << to_string(opt.mode) << " merge), h_s " << trace->step;
    say("trace", msg.str());
  }

  void cut_stage() {
    CutOptions opt;
    opt.threads = threads;
    opt.subdivision.snap = cfg.snap;
    opt.subdivision.spline_samples = cfg.spline_samples;
    opt.subdivision.min_crossing_angle = cfg.min_crossing_angle;
    opt.subdivision.corner_turn = cfg.corner_turn;
    const BlockDecomposition d = decompose(domain, *topo, *trace, field(), opt);
    const std::string text = decomposition_to_json(d);
    write(Stage::Cut, kArtifact[4], text, true);
    blocks = decomposition_from_json(text, domain);
    if (wants("svg")) {
      std::ostringstream o;
      write_blocks_svg(domain, *blocks, nullptr, o);
      write(Stage::Cut, "blocks.svg", o.str(), false);
    }
    say("cut", std::to_string(blocks->blocks.size()) + " blocks, " + std::to_string(blocks->degenerate_faces) +
                   " degenerate faces, " + std::to_string(blocks->interior_irregular_nodes()) +
                   " interior irregular nodes");
  }

  void split_stage() {
    SplitSpec spec;
    spec.n = cfg.split;
    for (const auto& entry : cfg.split_blocks) {
      int b = -1;
      const BlockSplit s = parse_block_split(entry, b);
      if (b >= static_cast<int>(blocks->blocks.size()))
        config_error("split_blocks entry '" + entry + "': no block " + std::to_string(b));
      spec.per_block[b] = s;
    }
    const QuadMesh m = isoparametric_split(*blocks, spec, cfg.order, threads);
    if (!mesh_is_conforming(m, domain)) throw Error(ErrorKind::Decomposition, "split mesh is not conforming");
    std::ostringstream msh;
    write_quad_msh(m, msh, cfg.high_order_msh);
    write(Stage::Split, kArtifact[5], msh.str(), true);
    if (wants("vtk")) {
      std::ostringstream o;
      write_quad_vtk(m, o);
      write(Stage::Split, "quads.vtk", o.str(), false);
    }
    if (wants("svg")) {
      std::ostringstream o;
      write_blocks_svg(domain, *blocks, &m, o);
      write(Stage::Split, "quads.svg", o.str(), false);
    }
    say("split", std::to_string(m.quads.size()) + " quads, " + std::to_string(m.nodes.size()) + " nodes");
  }

  void load_upstream(Stage first) {
    const int f = static_cast<int>(first);
    if (f > 0) mesh = mesh_from_json(load(Stage::Mesh));
    if (f > 1) solution = solution_from_json(load(Stage::Solve));
    if (f > 2) topo = topology_from_json(load(Stage::Topology));
    if (f > 3) trace = separatrices_from_json(load(Stage::Trace));
    if (f > 4) blocks = decomposition_from_json(load(Stage::Cut), domain);
  }

  void run_stage(Stage s) {
    switch (s) {
      case Stage::Mesh: mesh_stage(); break;
      case Stage::Solve: solve_stage(); break;
      case Stage::Topology: topology_stage(); break;
      case Stage::Trace: trace_stage(); break;
      case Stage::Cut: cut_stage(); break;
      case Stage::Split: split_stage(); break;
    }
  }
};

DomainSpec load_configured_domain(const PipelineConfig& cfg) {
  DomainSpec d = load_domain(cfg.domain);
  if (cfg.corner_angle == GeometryTolerances{}.corner_angle) return d;
  GeometryTolerances tol;
  tol.corner_angle = cfg.corner_angle;
  return DomainSpec(d.name(), d.loops(), tol);
}

nlohmann::json records_json(const std::vector<ArtifactRecord>& records) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : records) a.push_back({{"stage", r.stage}, {"file", r.file}, {"fnv1a64", r.fnv1a64}});
  return a;
}

// Earlier stages' records survive a staged run; everything downstream is replaced.
void keep_upstream_records(const fs::path& manifest, Stage first, PipelineResult& r) {
  std::ifstream in(manifest);
  if (!in) return;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return;
  }
  auto keep = [&](const char* key, std::vector<ArtifactRecord>& out) {
    if (!j.contains(key) || !j[key].is_array()) return;
    std::vector<ArtifactRecord> kept;
    for (const auto& e : j[key]) {
      const std::string stage = e.value("stage", "");
      for (int s = 0; s < static_cast<int>(first); ++s)
        if (stage == to_string(static_cast<Stage>(s)))
          kept.push_back({stage, e.value("file", ""), e.value("fnv1a64", "")});
    }
    out.insert(out.begin(), kept.begin(), kept.end());
  };
  keep("artifacts", r.artifacts);
  keep("views", r.views);
}

}  // namespace

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Mesh: return "mesh";
    case Stage::Solve: return "solve";
    case Stage::Topology: return "topology";
    case Stage::Trace: return "trace";
    case Stage::Cut: return "cut";
    case Stage::Split: return "split";
  }
  return "unknown";
}

std::string fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

PipelineConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  PipelineConfig c;
  std::set<std::string> known;
  visit_config(c, [&](const char* name, auto&, const char*) { known.insert(name); });
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) config_error("unknown config key '" + key + "'");
  visit_config(c, [&](const char* name, auto& field, const char*) {
    if (!j.contains(name)) return;
    try {
      j.at(name).get_to(field);
    } catch (const nlohmann::json::exception&) {
      config_error(std::string("config key '") + name + "' has the wrong type");
    }
  });
  return c;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  visit_config(c, [&](const char* name, const auto& field, const char*) { j[name] = field; });
  return j;
}

void validate_config(const PipelineConfig& c) {
  if (c.domain.empty()) config_error("no domain file given");
  if (c.order < 1 || c.order > 10) config_error("order must be in 1..10");
  if (c.scheme != "auto" && c.scheme != "cg" && c.scheme != "dg") config_error("scheme must be auto, cg or dg");
  if (c.merge != "normal" && c.merge != "aggressive") config_error("merge must be normal or aggressive");
  if (!(c.target_h >= 0.0)) config_error("target_h must be >= 0");
  if (!(c.step_factor > 0.0)) config_error("step_factor must be > 0");
  if (!(c.kappa >= 1.0)) config_error("kappa must be >= 1");
  if (c.split < 1) config_error("split must be >= 1");
  if (c.threads < 0) config_error("threads must be >= 0");
  if (c.output.empty()) config_error("output directory is empty");
  for (const auto& f : c.formats)
    if (f != "msh" && f != "vtk" && f != "svg") config_error("unknown format '" + f + "'");
  for (const auto& e : c.split_blocks) {
    int b = -1;
    parse_block_split(e, b);
  }
  const bool positive = c.corner_angle > 0.0 && c.penalty > 0.0 && c.linear_tol > 0.0 && c.radius_factor > 0.0 &&
                        c.corner_delta > 0.0 && c.newton_tol > 0.0 && c.direction_tol > 0.0 &&
                        c.min_crossing_angle > 0.0 && c.corner_turn > 0.0 && c.snap >= 0.0;
  if (!positive) config_error("tolerances must be positive");
  if (c.contour_samples < 8 || c.corner_samples < 4 || c.newton_iterations < 1 || c.max_steps < 1 ||
      c.direction_iterations < 1 || c.spline_samples < 1)
    config_error("sample and iteration counts out of range");
}

PipelineResult run_pipeline(const PipelineConfig& config, Stage first, Stage last, std::ostream* log) {
  Run run(config, log);
  Stage current = first;
  bool started = false;
  try {
    validate_config(config);
    run.threads = config.threads > 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    run.domain = load_configured_domain(config);
    if (config.scheme == "cg") validate_scheme(run.domain, Scheme::CG);
    fs::create_directories(run.dir);
    run.load_upstream(first);
    for (int s = static_cast<int>(first); s <= static_cast<int>(last); ++s) {
      current = static_cast<Stage>(s);
      started = true;
      run.run_stage(current);
    }
  } catch (const Error& e) {
    run.result.exit_code = e.exit_code();
    run.result.failed_stage = started ? to_string(current) : "config";
    run.result.message = e.what();
  } catch (const std::exception& e) {
    run.result.exit_code = static_cast<int>(started ? stage_kind(current) : ErrorKind::Config);
    run.result.failed_stage = started ? to_string(current) : "config";
    run.result.message = e.what();
  }
  PipelineResult& r = run.result;
  if (r.exit_code != 0 && log) *log << "error [" << r.failed_stage << "]: " << r.message << "\n";

  std::error_code ec;
  if (fs::is_directory(run.dir, ec)) {
    keep_upstream_records(run.dir / "manifest.json", first, r);
    nlohmann::json m;
    m["domain"] = config.domain;
    m["config"] = config_to_json(config);
    m["artifacts"] = records_json(r.artifacts);
    m["views"] = records_json(r.views);
    m["status"] = {{"exit_code", r.exit_code}};
    if (r.exit_code != 0) {
      m["status"]["stage"] = r.failed_stage;
      m["status"]["message"] = r.message;
    }
    std::ofstream out(run.dir / "manifest.json");
    out << m.dump(2) << "\n";
  }
  return r;
}

}  // namespace quadfield

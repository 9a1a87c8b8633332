// quadfield command line: run the whole pipeline or one stage at a time.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <type_traits>

#include "quadfield/error.hpp"
#include "quadfield/pipeline.hpp"

using quadfield::PipelineConfig;
using quadfield::Stage;

namespace {

struct Command {
  CLI::App* app = nullptr;
  Stage first = Stage::Mesh;
  Stage last = Stage::Split;
  bool resume = false;
  std::string config_file;
  bool quiet = false;
  PipelineConfig flags;
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

void add_config_flags(Command& cmd) {
  quadfield::visit_config(cmd.flags, [&](const char* name, auto& field, const char* help) {
    using T = std::decay_t<decltype(field)>;
    std::string key = name;
    std::string dashed = key;
    for (auto& ch : dashed)
      if (ch == '_') ch = '-';
    CLI::Option* opt = nullptr;
    if (key == "domain") {
      opt = cmd.app->add_option("domain", field, help);
    } else {
      std::string names = "--" + key;
      if (dashed != key) names += ",--" + dashed;
      if constexpr (std::is_same_v<T, bool>)
        opt = cmd.app->add_flag(names, field, help);
      else if constexpr (std::is_same_v<T, std::vector<std::string>>)
        opt = cmd.app->add_option(names, field, help)->delimiter(',');
      else
        opt = cmd.app->add_option(names, field, help);
    }
    cmd.options.emplace_back(key, opt);
  });
  cmd.app->add_option("--config", cmd.config_file, "JSON config; flags override its keys");
  cmd.app->add_flag("-q,--quiet", cmd.quiet, "no progress log");
}

// Config file first, then every flag that was actually given.
PipelineConfig resolve(const Command& cmd) {
  nlohmann::json j = nlohmann::json::object();
  if (!cmd.config_file.empty()) {
    std::ifstream in(cmd.config_file);
    if (!in) throw quadfield::Error(quadfield::ErrorKind::Config, "cannot read config " + cmd.config_file);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw quadfield::Error(quadfield::ErrorKind::Config, std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw quadfield::Error(quadfield::ErrorKind::Config, "config must be a JSON object");
  }
  const nlohmann::json given = quadfield::config_to_json(cmd.flags);
  for (const auto& [key, opt] : cmd.options)
    if (opt->count() > 0) j[key] = given[key];
  return quadfield::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curved quadrilateral block decomposition from a guiding cross field"};
  app.require_subcommand(1);

  struct Spec {
    const char* name;
    const char* help;
    Stage stage;
  };
  const Spec specs[] = {
      {"mesh", "background mesh -> mesh.json", Stage::Mesh},
      {"solve", "guiding field -> field.json", Stage::Solve},
      {"topology", "critical points and corner valences -> topology.json", Stage::Topology},
      {"trace", "separatrices -> separatrices.json", Stage::Trace},
      {"cut", "block decomposition -> blocks.json", Stage::Cut},
      {"split", "conforming quad mesh -> quads.msh", Stage::Split},
  };

  std::vector<Command> commands(7);
  commands[0].app = app.add_subcommand("run", "all stages");
  add_config_flags(commands[0]);
  for (int i = 0; i < 6; ++i) {
    Command& c = commands[i + 1];
    c.app = app.add_subcommand(specs[i].name, specs[i].help);
    c.last = specs[i].stage;
    add_config_flags(c);
    c.app->add_flag("--resume", c.resume, "load upstream artifacts from the output directory");
  }

  CLI11_PARSE(app, argc, argv);

  for (Command& c : commands) {
    if (!c.app->parsed()) continue;
    PipelineConfig cfg;
    try {
      cfg = resolve(c);
    } catch (const quadfield::Error& e) {
      std::cerr << "error [config]: " << e.what() << "\n";
      return e.exit_code();
    }
    const Stage first = c.resume ? c.last : Stage::Mesh;
    const auto result = quadfield::run_pipeline(cfg, first, c.last, c.quiet ? nullptr : &std::cerr);
    if (result.exit_code == 0 && !c.quiet)
      std::cerr << "wrote " << result.artifacts.size() << " artifacts to " << cfg.output << "\n";
    return result.exit_code;
  }
  return 2;
}

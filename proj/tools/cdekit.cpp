// cdekit: batch driver for the conditional density estimation experiments.
//
// Exit codes: 0 success, 1 other failure, 2 invalid config or arguments,
// 3 numeric or runtime failure inside an experiment.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cdekit/config.hpp"
#include "cdekit/error.hpp"
#include "cdekit/models.hpp"
#include "cdekit/runner.hpp"

using namespace cdekit;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  std::optional<std::size_t> workers;
  std::vector<std::size_t> n_grid;
  std::optional<std::string> id;
  std::string out_dir;
  bool quiet = false;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Override the config seed");
  cmd->add_option("--replications", o.replications, "Override the replication count");
  cmd->add_option("--workers", o.workers, "Worker threads (0: available parallelism)");
  cmd->add_option("--n-grid", o.n_grid, "Override the sample-size grid")->delimiter(',');
  cmd->add_option("--id", o.id, "Override the experiment id");
  cmd->add_option("--out-dir", o.out_dir, "Output directory (default: $CDEKIT_OUTPUT_DIR, then cwd)");
  cmd->add_flag("-q,--quiet", o.quiet, "No progress on stderr");
}

void apply(Json& doc, const Overrides& o) {
  if (!doc.is_object()) return;
  if (o.seed) doc["seed"] = *o.seed;
  if (o.replications) doc["replications"] = *o.replications;
  if (o.workers) doc["workers"] = *o.workers;
  if (!o.n_grid.empty()) doc["n_grid"] = o.n_grid;
  if (o.id) doc["id"] = *o.id;
}

int run(const std::string& path, const std::optional<ExperimentKind>& expected, const Overrides& o) {
  Json doc = load_document(path);
  if (expected && doc.is_object()) {
    if (!doc.contains("experiment")) doc["experiment"] = experiment_kind_name(*expected);
    if (doc["experiment"] != experiment_kind_name(*expected))
      throw ConfigurationError(fmt::format("experiment: config is '{}', subcommand is '{}'",
                                           doc["experiment"].dump(), experiment_kind_name(*expected)));
  }
  apply(doc, o);
  ExperimentConfig cfg = parse_config(doc);
  RunOptions opt;
  opt.out_dir = resolve_output_dir(o.out_dir);
  opt.progress = !o.quiet;
  const std::string id = cfg.id;
  try {
    const RunResult res = run_experiment(std::move(cfg), opt);
    if (!o.quiet) {
      for (const auto& f : res.files) std::fprintf(stderr, "%s: wrote %s\n", id.c_str(), f.string().c_str());
      std::fprintf(stderr, "%s: %.2f s\n", id.c_str(), res.wall_seconds);
    }
  } catch (const ConfigurationError&) {
    throw;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: experiment %s: %s\n", id.c_str(), e.what());
    return kExitRuntime;
  }
  return 0;
}

int validate(const std::vector<std::string>& paths) {
  int status = 0;
  for (const auto& path : paths) {
    std::vector<std::string> diags;
    try {
      diags = validate_config(load_document(path));
    } catch (const ConfigurationError& e) {
      diags = {e.what()};
    }
    for (const auto& d : diags) std::printf("%s: %s\n", path.c_str(), d.c_str());
    if (diags.empty())
      std::printf("%s: ok\n", path.c_str());
    else
      status = kExitConfig;
  }
  return status;
}

int list(bool as_json) {
  const auto classes = list_classes();
  if (as_json) {
    Json a = Json::array();
    for (const auto& c : classes) a.push_back({{"name", c.name}, {"summary", c.summary}, {"parameters", c.parameters}});
    std::cout << a.dump(2) << "\n";
    return 0;
  }
  for (const auto& c : classes) std::printf("%-20s %s\n    %s\n", c.name.c_str(), c.summary.c_str(), c.parameters.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional density estimation experiments"};
  app.require_subcommand(1);

  Overrides overrides;
  std::string config_path;
  std::vector<std::string> validate_paths;
  bool as_json = false;
  std::function<int()> action;

  auto* run_cmd = app.add_subcommand("run", "Run the experiment a config describes");
  run_cmd->add_option("config", config_path, "Config file (.toml or .json)")->required()->check(CLI::ExistingFile);
  add_overrides(run_cmd, overrides);
  run_cmd->callback([&] { action = [&] { return run(config_path, std::nullopt, overrides); }; });

  for (ExperimentKind kind : experiment_kinds()) {
    const std::string name = experiment_kind_name(kind);
    auto* cmd = app.add_subcommand(name, fmt::format("Run a config of kind {}", name));
    cmd->add_option("config", config_path, "Config file (.toml or .json)")->required()->check(CLI::ExistingFile);
    add_overrides(cmd, overrides);
    cmd->callback([&, kind] { action = [&, kind] { return run(config_path, kind, overrides); }; });
  }

  auto* val_cmd = app.add_subcommand("validate", "Check configs without running them");
  val_cmd->add_option("configs", validate_paths, "Config files")->required();
  val_cmd->callback([&] { action = [&] { return validate(validate_paths); }; });

  auto* list_cmd = app.add_subcommand("list-classes", "List the model classes");
  list_cmd->add_flag("--json", as_json, "JSON output");
  list_cmd->callback([&] { action = [&] { return list(as_json); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    return action();
  } catch (const ConfigurationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitOther;
  }
}

// gwardar command-line front end. Talks to the engine exclusively through
// the C API in gwardar/gwardar.h; the shared library owns all state.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "gwardar/gwardar.h"
#include "json.hpp"

namespace {

using nlohmann::json;

std::string default_out_dir() {
  if (const char* env = std::getenv("GWARDAR_OUT")) return env;
  return "gwardar-out";
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(2);
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    std::cerr << "error: " << path << " is not valid JSON\n";
    std::exit(2);
  }
  return j;
}

struct SessionGuard {
  gw_session* s = nullptr;
  ~SessionGuard() { gw_session_destroy(s); }
};

gw_session* open_state(const std::string& state_path) {
  char err[512] = {0};
  gw_session* s = gw_session_load(state_path.c_str(), err, sizeof(err));
  if (!s) {
    std::cerr << "error: " << err << "\n";
    std::exit(1);
  }
  return s;
}

void print_and_free(char* out, const char* err) {
  if (!out) {
    std::cerr << "error: " << err << "\n";
    std::exit(1);
  }
  std::cout << json::parse(out).dump(2) << "\n";
  gw_free(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gwardar: SDN simulator with a trajectory-based intrusion protection engine"};
  app.require_subcommand(1);

  // run
  std::string config_path, topology, scenario_path, out_dir = default_out_dir();
  std::uint64_t seed = 0;
  bool have_seed = false;
  auto* run = app.add_subcommand("run", "run an experiment (honest unless --scenario is given)");
  run->add_option("--config", config_path, "simulation config JSON file");
  run->add_option("--topology", topology, "gen:line:N | gen:ring:N | gen:random:N:DEG | file:PATH");
  run->add_option("--scenario", scenario_path, "scenario spec JSON file (S1,S2,S3,S4,S6)");
  run->add_option("--seed", seed, "master seed")->each([&](const std::string&) { have_seed = true; });
  run->add_option("--out", out_dir, "output directory (default $GWARDAR_OUT or ./gwardar-out)");
  std::string models_in, models_out;
  run->add_option("--models-in", models_in, "preload normal models from JSON");
  run->add_option("--models-out", models_out, "write learned normal models to JSON");

  // verify-replica / restore / release-takeover
  std::string state_path;
  auto* verify = app.add_subcommand("verify-replica", "compare the virtual replica to live tables");
  verify->add_option("--state", state_path, "state file from a previous run")->required();
  auto* restore = app.add_subcommand("restore", "restore from the latest trusted snapshot");
  bool force = false;
  restore->add_option("--state", state_path, "state file from a previous run")->required();
  restore->add_flag("--force", force, "apply the restoration (dry run otherwise)");
  auto* release = app.add_subcommand("release-takeover", "allow controller updates again");
  release->add_option("--state", state_path, "state file from a previous run")->required();

  CLI11_PARSE(app, argc, argv);
  char err[512] = {0};

  if (run->parsed()) {
    json config = config_path.empty() ? json::object() : load_json_file(config_path);
    if (!topology.empty()) config["topology"] = topology;
    if (have_seed) config["seed"] = seed;
    if (!models_in.empty()) config["preload_models"] = models_in;

    SessionGuard guard;
    guard.s = gw_session_create(config.dump().c_str(), err, sizeof(err));
    if (!guard.s) {
      std::cerr << "error: " << err << "\n";
      return 1;
    }
    std::string scenario;
    if (!scenario_path.empty()) scenario = load_json_file(scenario_path).dump();

    std::filesystem::create_directories(out_dir);
    gw_status rc = gw_run_experiment(guard.s, scenario.empty() ? nullptr : scenario.c_str(),
                                     out_dir.c_str(), err, sizeof(err));
    if (rc != GW_OK) {
      std::cerr << "error (" << gw_status_name(rc) << "): " << err << "\n";
      return 1;
    }
    std::string state_file = (std::filesystem::path(out_dir) / "state.json").string();
    rc = gw_session_save(guard.s, state_file.c_str(), err, sizeof(err));
    if (rc != GW_OK) {
      std::cerr << "error saving state: " << err << "\n";
      return 1;
    }
    char* rep = gw_report(guard.s, err, sizeof(err));
    if (!rep) {
      std::cerr << "error: " << err << "\n";
      return 1;
    }
    json report = json::parse(rep);
    gw_free(rep);
    if (!models_out.empty()) {
      std::ofstream mo(models_out);
      mo << report.value("models", json::object()).dump(2) << "\n";
    }
    json metrics = report.value("metrics", json::object());
    std::cout << "run complete at t=" << report.value("clock", 0) << "\n"
              << "  outputs: " << out_dir << " (attacks.csv, fpr_timeline.csv, restore.csv, "
              << "report.json, state.json)\n";
    if (metrics.contains("attacks")) {
      for (const auto& a : metrics["attacks"]) {
        std::cout << "  attack " << a.value("scenario", "?") << ": verdict="
                  << a.value("verdict", "") << " correct="
                  << (a.value("correct", false) ? "true" : "false") << "\n";
      }
    }
    return 0;
  }

  if (verify->parsed()) {
    SessionGuard guard;
    guard.s = open_state(state_path);
    print_and_free(gw_verify_replica(guard.s, err, sizeof(err)), err);
    return 0;
  }

  if (restore->parsed()) {
    SessionGuard guard;
    guard.s = open_state(state_path);
    print_and_free(gw_restore(guard.s, force ? 1 : 0, err, sizeof(err)), err);
    gw_status rc = gw_session_save(guard.s, state_path.c_str(), err, sizeof(err));
    if (rc != GW_OK) {
      std::cerr << "error saving state: " << err << "\n";
      return 1;
    }
    return 0;
  }

  if (release->parsed()) {
    SessionGuard guard;
    guard.s = open_state(state_path);
    print_and_free(gw_release_takeover(guard.s, err, sizeof(err)), err);
    gw_status rc = gw_session_save(guard.s, state_path.c_str(), err, sizeof(err));
    if (rc != GW_OK) {
      std::cerr << "error saving state: " << err << "\n";
      return 1;
    }
    return 0;
  }
  return 0;
}

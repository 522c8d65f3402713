#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "harness.hpp"

// A session is everything the CLI and C API operate on: one wired simulation
// plus its report, saved to and loaded from a state file so subcommands like
// verify-replica or release-takeover can act on a finished run.

namespace gwardar::session {

using namespace gwardar::netmodel;
using harness::ExperimentMetrics;
using harness::ScenarioSpec;
using harness::SimConfig;
using harness::TestBed;

class Session {
 public:
  explicit Session(const SimConfig& config);

  // One experiment per session. "honest" runs no implant.
  ExperimentMetrics run(const std::optional<ScenarioSpec>& scenario,
                        const std::filesystem::path& out_dir);

  json verify_replica() const;       // replica vs live tables, bit-level
  json restore(bool force);          // full restore from latest trusted snapshot
  json release_takeover();
  json report() const;

  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<Session> load(const std::filesystem::path& path);

  TestBed& bed() { return *bed_; }
  const SimConfig& config() const { return config_; }

 private:
  SimConfig config_;
  std::unique_ptr<TestBed> bed_;
  std::optional<ExperimentMetrics> metrics_;
  bool ran_ = false;
};

}  // namespace gwardar::session

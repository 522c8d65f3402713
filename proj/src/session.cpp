#include "session.hpp"

#include <fstream>

namespace gwardar::session {

Session::Session(const SimConfig& config) : config_(config) {
  bed_ = std::make_unique<TestBed>(config_);
}

ExperimentMetrics Session::run(const std::optional<ScenarioSpec>& scenario,
                               const std::filesystem::path& out_dir) {
  if (ran_) fail(Err::BadState, "session already ran an experiment");
  ran_ = true;
  ExperimentMetrics m = scenario ? harness::run_experiment_on(*bed_, *scenario)
                                 : harness::run_honest_on(*bed_, config_.post_attack_duration);
  metrics_ = m;
  if (!out_dir.empty()) {
    harness::emit_metrics(m, out_dir);
    std::ofstream rep(out_dir / "report.json");
    if (!rep) fail(Err::Io, "cannot write report.json");
    rep << report().dump(2) << '\n';
  }
  return m;
}

json Session::verify_replica() const {
  auto live = bed_->dataplane().snapshot_tables();
  const auto& replica = bed_->interceptor().replica().tables;
  json diffs = json::array();
  for (const auto& [d, table] : live) {
    auto it = replica.find(d);
    bool equal = it != replica.end() && it->second == table;
    if (!equal) {
      diffs.push_back(json{{"device", d},
                           {"live_rules", table.size()},
                           {"replica_rules", it == replica.end() ? 0 : it->second.size()}});
    }
  }
  return json{{"match", diffs.empty()}, {"devices", live.size()}, {"diffs", diffs}};
}

json Session::restore(bool force) {
  auto snap = bed_->interceptor().latest_trusted_snapshot();
  if (!snap) fail(Err::NoTrustedSnapshot, "no trusted snapshot to restore from");
  json plan = json{{"snapshot_taken_at", snap->taken_at},
                   {"devices", snap->replica.topology.device_count()}};
  if (!force) {
    plan["applied"] = false;
    plan["note"] = "dry run; pass force to apply";
    return plan;
  }
  auto report = bed_->protection().restore_from_snapshot(*snap, protection::RestoreScope{});
  plan["applied"] = true;
  plan["report"] = report.to_json();
  return plan;
}

json Session::release_takeover() {
  bool was_active = bed_->protection().takeover().active;
  bed_->protection().release_takeover();
  return json{{"was_active", was_active}, {"active", false}};
}

json Session::report() const {
  json events = json::array();
  for (const auto& e : bed_->engine().events()) events.push_back(e.to_json());
  json j{{"config", config_.to_json()},
         {"clock", bed_->clock().now},
         {"takeover_active", bed_->protection().takeover().active},
         {"models", bed_->engine().models().to_json()},
         {"events", events}};
  if (metrics_) j["metrics"] = metrics_->to_json();
  return j;
}

void Session::save(const std::filesystem::path& path) const {
  json snaps = json::array();
  for (const auto& s : bed_->interceptor().snapshots()) {
    snaps.push_back(bed_->interceptor().snapshot_to_json(s));
  }
  json j{{"config", config_.to_json()},
         {"clock", bed_->clock().now},
         {"warmup_end", bed_->warmup_end()},
         {"stabilized", bed_->stabilized()},
         {"ran", ran_},
         {"topology", bed_->topology().to_json()},
         {"live_tables", tables_to_json(bed_->dataplane().snapshot_tables())},
         {"replica_tables", tables_to_json(bed_->interceptor().replica().tables)},
         {"replica_last_update", bed_->interceptor().replica().last_update},
         {"snapshots", snaps},
         {"takeover",
          json{{"active", bed_->protection().takeover().active},
               {"since", bed_->protection().takeover().since},
               {"snapshot_taken_at", bed_->protection().takeover().snapshot_taken_at}}}};
  if (metrics_) j["metrics"] = metrics_->to_json();

  std::ofstream out(path);
  if (!out) fail(Err::Io, "cannot write state file: " + path.string());
  out << j.dump(2) << '\n';
}

std::unique_ptr<Session> Session::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Err::Io, "cannot open state file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(Err::ParseError, "malformed state file");

  auto session = std::make_unique<Session>(SimConfig::from_json(j.at("config")));
  TestBed& bed = *session->bed_;
  bed.dataplane().load_tables(tables_from_json(j.at("live_tables")));
  bed.interceptor().load_replica(tables_from_json(j.at("replica_tables")),
                                 j.at("replica_last_update").get<SimTime>());
  std::vector<interceptor::ReplicaSnapshot> snaps;
  for (const auto& sj : j.at("snapshots")) {
    snaps.push_back(interceptor::Interceptor::snapshot_from_json(sj));
  }
  bed.interceptor().restore_snapshots(snaps);
  bed.load_clock(j.at("clock").get<SimTime>());
  bed.load_warmup(j.at("warmup_end").get<SimTime>(), j.at("stabilized").get<bool>());
  protection::TakeoverState t;
  t.active = j.at("takeover").at("active").get<bool>();
  t.since = j.at("takeover").at("since").get<SimTime>();
  t.snapshot_taken_at = j.at("takeover").at("snapshot_taken_at").get<SimTime>();
  bed.protection().force_takeover_state(t);
  session->ran_ = j.at("ran").get<bool>();
  return session;
}

}  // namespace gwardar::session

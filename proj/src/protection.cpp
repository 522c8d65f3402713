#include "protection.hpp"

#include <algorithm>
#include <sstream>

namespace gwardar::protection {

bool ResponsePolicy::Trigger::matches(const Verdict& v) const {
  if (kinds && !kinds->count(detection::verdict_kind_name(v.kind))) return false;
  if (targets) {
    bool any = std::any_of(v.targets.begin(), v.targets.end(),
                           [&](DeviceId d) { return targets->count(d) != 0; });
    if (!any) return false;
  }
  if (classes && !classes->count(v.class_key)) return false;
  return true;
}

json ResponsePolicy::to_json() const {
  json t = json::object();
  if (trigger.kinds) t["kinds"] = *trigger.kinds;
  if (trigger.targets) t["targets"] = *trigger.targets;
  if (trigger.classes) t["classes"] = *trigger.classes;
  json j{{"trigger", t}};
  switch (action) {
    case ResponseActionKind::InstallRules: {
      j["action"] = "install_rules";
      json rs = json::array();
      for (const auto& [d, r] : rules) {
        json rj = rule_to_json(r);
        rj["device"] = d;
        rs.push_back(std::move(rj));
      }
      j["rules"] = rs;
      break;
    }
    case ResponseActionKind::RestoreSnapshot:
      j["action"] = "restore";
      j["scope"] = scope.full ? json("full") : json(scope.devices);
      break;
    case ResponseActionKind::Takeover: j["action"] = "takeover"; break;
  }
  return j;
}

ResponsePolicy ResponsePolicy::from_json(const json& j) {
  ResponsePolicy p;
  if (j.contains("trigger")) {
    const json& t = j.at("trigger");
    if (t.contains("kinds")) {
      p.trigger.kinds = std::set<std::string>();
      for (const auto& k : t.at("kinds")) p.trigger.kinds->insert(k.get<std::string>());
    }
    if (t.contains("targets")) {
      p.trigger.targets = std::set<DeviceId>();
      for (const auto& d : t.at("targets")) p.trigger.targets->insert(d.get<DeviceId>());
    }
    if (t.contains("classes")) {
      p.trigger.classes = std::set<std::string>();
      for (const auto& c : t.at("classes")) p.trigger.classes->insert(c.get<std::string>());
    }
  }
  const std::string action = j.at("action").get<std::string>();
  if (action == "install_rules") {
    p.action = ResponseActionKind::InstallRules;
    for (const auto& rj : j.at("rules")) {
      p.rules.emplace_back(rj.at("device").get<DeviceId>(), rule_from_json(rj));
    }
  } else if (action == "restore") {
    p.action = ResponseActionKind::RestoreSnapshot;
    if (j.contains("scope") && j.at("scope").is_array()) {
      p.scope.full = false;
      for (const auto& d : j.at("scope")) p.scope.devices.insert(d.get<DeviceId>());
    }
  } else if (action == "takeover") {
    p.action = ResponseActionKind::Takeover;
  } else {
    fail(Err::ParseError, "unknown policy action: " + action);
  }
  return p;
}

std::vector<ResponsePolicy> policies_from_json(const json& j) {
  std::vector<ResponsePolicy> out;
  for (const auto& pj : j) out.push_back(ResponsePolicy::from_json(pj));
  return out;
}

json RestoreReport::to_json() const {
  json per = json::object();
  for (const auto& [d, n] : rules_per_device) per[std::to_string(d)] = n;
  return json{{"attempted", attempted},
              {"rules_per_device", per},
              {"tables_match", tables_match},
              {"failed_devices", failed_devices}};
}

json ActionReport::to_json() const {
  return json{{"action", action},
              {"policy_index", policy_index},
              {"restore", restore.to_json()},
              {"detail", detail}};
}

json ConsistencyFinding::to_json() const {
  return json{{"kind", kind == Kind::BlackHole ? "black_hole" : "grey_hole"},
              {"ingress", ingress},
              {"prefix", prefix.to_string()}};
}

std::vector<ConsistencyFinding> routing_consistency_check(
    const std::map<DeviceId, FlowTable>& tables, const Topology& topology,
    const std::map<Prefix, DeviceId>& prefixes) {
  interceptor::VirtualReplica replica;
  replica.topology = topology;
  replica.tables = tables;
  for (DeviceId d : topology.devices()) replica.tables[d];  // ensure table per device

  std::vector<ConsistencyFinding> findings;
  for (DeviceId ingress : topology.devices()) {
    for (const auto& [prefix, attach] : prefixes) {
      PacketHeader h;
      h.dst_addr = prefix.addr;
      h.proto = trajectory::kDefaultProbeProto;
      auto [dev, port] = trajectory::source_ingress(topology, ingress);
      auto t = trajectory::expected_trajectory(replica, h, dev, port);
      if (t.terminal == dataplane::Terminal::Delivered && !t.hops.empty() &&
          t.hops.back().device == attach) {
        continue;
      }
      ConsistencyFinding f;
      f.kind = t.terminal == dataplane::Terminal::Looped ? ConsistencyFinding::Kind::GreyHole
                                                         : ConsistencyFinding::Kind::BlackHole;
      f.ingress = ingress;
      f.prefix = prefix;
      findings.push_back(std::move(f));
    }
  }
  return findings;
}

ProtectionEngine::ProtectionEngine(interceptor::Interceptor& interceptor,
                                   dataplane::SouthboundChannel& channel, SimClock& clock)
    : interceptor_(interceptor), channel_(channel), clock_(clock) {}

void ProtectionEngine::send_direct(const FlowMod& mod) {
  channel_.send(dataplane::Origin::Gwardar, mod, clock_.now);
}

RestoreReport ProtectionEngine::restore_from_snapshot(const ReplicaSnapshot& snapshot,
                                                      const RestoreScope& scope) {
  RestoreReport report;
  report.attempted = true;

  std::vector<DeviceId> targets;
  if (scope.full) {
    targets = snapshot.replica.topology.devices();
  } else {
    targets.assign(scope.devices.begin(), scope.devices.end());
  }
  std::sort(targets.begin(), targets.end());

  const Topology& live_topo = interceptor_.replica().topology;
  for (DeviceId d : targets) {
    if (!live_topo.has_device(d) || !snapshot.replica.tables.count(d)) {
      report.failed_devices.push_back(d);
      continue;
    }
    send_direct(FlowMod::del_all(d));
    const FlowTable& want = snapshot.replica.tables.at(d);
    for (const auto& r : want.rules()) {
      FlowMod add = FlowMod::add(d, r);
      add.install_time = r.install_time;  // faithful reproduction of the snapshot
      send_direct(add);
    }
    report.rules_per_device[d] = want.size();
  }

  for (DeviceId d : targets) {
    if (std::find(report.failed_devices.begin(), report.failed_devices.end(), d) !=
        report.failed_devices.end()) {
      continue;
    }
    if (!(interceptor_.replica().table(d) == snapshot.replica.tables.at(d))) {
      report.tables_match = false;
    }
  }

  if (!report.failed_devices.empty()) {
    std::ostringstream os;
    os << "restore incomplete, unacknowledged devices:";
    for (DeviceId d : report.failed_devices) os << ' ' << d;
    fail(Err::PartialRestore, os.str());
  }
  return report;
}

TakeoverState ProtectionEngine::engage_takeover(const ReplicaSnapshot& snapshot) {
  restore_from_snapshot(snapshot, RestoreScope{});
  channel_.set_controller_blocked(true);
  takeover_.active = true;
  takeover_.since = clock_.now;
  takeover_.snapshot_taken_at = snapshot.taken_at;
  return takeover_;
}

void ProtectionEngine::release_takeover() {
  channel_.set_controller_blocked(false);
  takeover_.active = false;
}

void ProtectionEngine::force_takeover_state(const TakeoverState& s) {
  takeover_ = s;
  channel_.set_controller_blocked(s.active);
}

ActionReport ProtectionEngine::respond(const Verdict& verdict) {
  if (verdict.kind == VerdictKind::FalsePositive) {
    fail(Err::InvalidArgument, "no response for a false positive");
  }
  ActionReport report;
  const ResponsePolicy* chosen = nullptr;
  for (std::size_t i = 0; i < policies_.size(); ++i) {
    if (policies_[i].trigger.matches(verdict)) {
      chosen = &policies_[i];
      report.policy_index = static_cast<int>(i);
      break;
    }
  }

  ResponseActionKind action = chosen ? chosen->action : ResponseActionKind::RestoreSnapshot;
  RestoreScope scope = chosen ? chosen->scope : RestoreScope{};

  switch (action) {
    case ResponseActionKind::InstallRules: {
      report.action = "install_rules";
      std::size_t installed = 0;
      for (const auto& [d, r] : chosen->rules) {
        FlowMod add = FlowMod::add(d, r);
        if (add.cookie == 0) add.cookie = kCookieGwardarBase | (0x100000ull + ++restore_seq_);
        send_direct(add);
        installed++;
      }
      report.detail = json{{"installed", installed}};
      break;
    }
    case ResponseActionKind::RestoreSnapshot: {
      auto snap = interceptor_.latest_trusted_snapshot();
      if (!snap) fail(Err::NoTrustedSnapshot, "restoration requested with no trusted snapshot");
      report.action = scope.full ? "restore_full" : "restore_partial";
      report.restore = restore_from_snapshot(*snap, scope);
      break;
    }
    case ResponseActionKind::Takeover: {
      auto snap = interceptor_.latest_trusted_snapshot();
      if (!snap) fail(Err::NoTrustedSnapshot, "takeover requested with no trusted snapshot");
      report.action = "takeover";
      engage_takeover(*snap);
      report.detail = json{{"snapshot_taken_at", snap->taken_at}};
      break;
    }
  }
  return report;
}

}  // namespace gwardar::protection

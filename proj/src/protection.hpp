#pragma once

#include <optional>
#include <set>
#include <vector>

#include "detection.hpp"

// Protection engine: administrator-defined protective policies on verdicts,
// snapshot restoration (direct to the data plane, bypassing the NOS), and
// network takeover.

namespace gwardar::protection {

using namespace gwardar::netmodel;
using detection::Verdict;
using detection::VerdictKind;
using interceptor::ReplicaSnapshot;
using trajectory::HeaderClass;

enum class ResponseActionKind : std::uint8_t { InstallRules, RestoreSnapshot, Takeover };

struct RestoreScope {
  bool full = true;
  std::set<DeviceId> devices;  // when !full
};

struct ResponsePolicy {
  struct Trigger {
    std::optional<std::set<std::string>> kinds;     // verdict kind names
    std::optional<std::set<DeviceId>> targets;      // fires if any verdict target is in here
    std::optional<std::set<std::string>> classes;   // anomaly class keys (reserved)
    bool matches(const Verdict& v) const;
  };
  Trigger trigger;
  ResponseActionKind action = ResponseActionKind::RestoreSnapshot;
  std::vector<std::pair<DeviceId, FlowRule>> rules;  // InstallRules
  RestoreScope scope;                                // RestoreSnapshot

  json to_json() const;
  static ResponsePolicy from_json(const json& j);
};

std::vector<ResponsePolicy> policies_from_json(const json& j);

struct TakeoverState {
  bool active = false;
  SimTime since = 0;
  SimTime snapshot_taken_at = 0;
};

struct RestoreReport {
  bool attempted = false;
  std::map<DeviceId, std::size_t> rules_per_device;
  bool tables_match = true;  // replica equals snapshot afterwards
  std::vector<DeviceId> failed_devices;

  json to_json() const;
};

struct ActionReport {
  std::string action;  // "install_rules" | "restore_full" | "restore_partial" | "takeover" | "none"
  int policy_index = -1;  // -1: default policy
  RestoreReport restore;
  json detail;

  json to_json() const;
};

struct ConsistencyFinding {
  enum class Kind : std::uint8_t { BlackHole, GreyHole } kind = Kind::BlackHole;
  DeviceId ingress = 0;
  Prefix prefix;

  json to_json() const;
};

// For every (ingress device, prefix): expected propagation either delivers
// to the prefix's attachment (ok), dies (black hole), or loops (grey hole).
std::vector<ConsistencyFinding> routing_consistency_check(
    const std::map<DeviceId, FlowTable>& tables, const Topology& topology,
    const std::map<Prefix, DeviceId>& prefixes);

class ProtectionEngine {
 public:
  ProtectionEngine(interceptor::Interceptor& interceptor, dataplane::SouthboundChannel& channel,
                   SimClock& clock);

  void set_policies(std::vector<ResponsePolicy> policies) { policies_ = std::move(policies); }
  const std::vector<ResponsePolicy>& policies() const { return policies_; }

  // First matching policy fires; default action is a full restore from the
  // latest trusted snapshot.
  ActionReport respond(const Verdict& verdict);

  RestoreReport restore_from_snapshot(const ReplicaSnapshot& snapshot, const RestoreScope& scope);
  TakeoverState engage_takeover(const ReplicaSnapshot& snapshot);
  void release_takeover();
  const TakeoverState& takeover() const { return takeover_; }
  void force_takeover_state(const TakeoverState& s);

 private:
  void send_direct(const FlowMod& mod);

  interceptor::Interceptor& interceptor_;
  dataplane::SouthboundChannel& channel_;
  SimClock& clock_;
  std::vector<ResponsePolicy> policies_;
  TakeoverState takeover_;
  Cookie restore_seq_ = 0;
};

}  // namespace gwardar::protection

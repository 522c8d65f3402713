#pragma once

#include <deque>
#include <map>
#include <optional>
#include <vector>

#include "dataplane.hpp"

// Gwardar's tap on the southbound channel: the virtual replica of the data
// plane, rebuilt exclusively from intercepted FlowMods, plus a bounded ring
// of trusted snapshots used for inspection and restoration.

namespace gwardar::interceptor {

using namespace gwardar::netmodel;
using dataplane::FlowModRecord;

struct VirtualReplica {
  Topology topology;
  std::map<DeviceId, FlowTable> tables;
  SimTime last_update = 0;

  const FlowTable& table(DeviceId d) const;
};

struct ReplicaSnapshot {
  VirtualReplica replica;
  SimTime taken_at = 0;
  bool trusted = false;
};

class Interceptor {
 public:
  Interceptor(const Topology& topo, std::size_t snapshot_ring_capacity);

  // Identical table semantics to the live data plane's FlowMod application.
  void on_flow_mod(const FlowModRecord& rec);

  const ReplicaSnapshot& take_snapshot(bool trusted, SimTime now);
  std::optional<ReplicaSnapshot> latest_trusted_snapshot() const;

  const VirtualReplica& replica() const { return replica_; }
  const std::deque<ReplicaSnapshot>& snapshots() const { return history_; }
  const std::vector<FlowModRecord>& intercepted() const { return intercepted_; }

  // Most recent intercepted mods, newest last, starting at log index `from`.
  std::vector<FlowModRecord> intercepted_since(std::size_t from) const;
  std::size_t log_size() const { return intercepted_.size(); }

  json snapshot_to_json(const ReplicaSnapshot& s) const;
  static ReplicaSnapshot snapshot_from_json(const json& j);
  void restore_snapshots(const std::vector<ReplicaSnapshot>& snaps) {
    history_.assign(snaps.begin(), snaps.end());
  }
  void load_replica(std::map<DeviceId, FlowTable> tables, SimTime last_update) {
    replica_.tables = std::move(tables);
    replica_.last_update = last_update;
  }

 private:
  VirtualReplica replica_;
  std::deque<ReplicaSnapshot> history_;
  std::size_t ring_capacity_;
  std::vector<FlowModRecord> intercepted_;
};

}  // namespace gwardar::interceptor

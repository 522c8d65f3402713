#include "interceptor.hpp"

namespace gwardar::interceptor {

const FlowTable& VirtualReplica::table(DeviceId d) const {
  auto it = tables.find(d);
  if (it == tables.end()) fail(Err::UnknownDevice, "replica has no such device");
  return it->second;
}

Interceptor::Interceptor(const Topology& topo, std::size_t snapshot_ring_capacity)
    : ring_capacity_(snapshot_ring_capacity) {
  replica_.topology = topo;
  for (DeviceId d : topo.devices()) replica_.tables[d];
}

void Interceptor::on_flow_mod(const FlowModRecord& rec) {
  auto it = replica_.tables.find(rec.mod.device);
  if (it == replica_.tables.end()) return;  // unknown device: nothing to shadow
  it->second.apply(rec.mod, rec.time);
  replica_.last_update = rec.time;
  intercepted_.push_back(rec);
}

const ReplicaSnapshot& Interceptor::take_snapshot(bool trusted, SimTime now) {
  ReplicaSnapshot s;
  s.replica = replica_;
  s.taken_at = now;
  s.trusted = trusted;
  history_.push_back(std::move(s));
  while (history_.size() > ring_capacity_) history_.pop_front();
  return history_.back();
}

std::optional<ReplicaSnapshot> Interceptor::latest_trusted_snapshot() const {
  for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
    if (it->trusted) return *it;
  }
  return std::nullopt;
}

std::vector<FlowModRecord> Interceptor::intercepted_since(std::size_t from) const {
  if (from >= intercepted_.size()) return {};
  return {intercepted_.begin() + static_cast<std::ptrdiff_t>(from), intercepted_.end()};
}

json Interceptor::snapshot_to_json(const ReplicaSnapshot& s) const {
  return json{{"taken_at", s.taken_at},
              {"trusted", s.trusted},
              {"topology", s.replica.topology.to_json()},
              {"tables", tables_to_json(s.replica.tables)},
              {"last_update", s.replica.last_update}};
}

ReplicaSnapshot Interceptor::snapshot_from_json(const json& j) {
  ReplicaSnapshot s;
  s.taken_at = j.at("taken_at").get<SimTime>();
  s.trusted = j.at("trusted").get<bool>();
  s.replica.topology = Topology::from_json(j.at("topology"));
  s.replica.tables = tables_from_json(j.at("tables"));
  s.replica.last_update = j.at("last_update").get<SimTime>();
  return s;
}

}  // namespace gwardar::interceptor

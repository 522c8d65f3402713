#include "trajectory.hpp"

#include <algorithm>
#include <sstream>

namespace gwardar::trajectory {

HeaderClass HeaderClass::parse(const std::string& key) {
  auto bar = key.find('|');
  if (bar == std::string::npos) fail(Err::ParseError, "bad class key: " + key);
  HeaderClass c;
  c.dst_prefix = Prefix::parse(key.substr(0, bar));
  c.proto = static_cast<std::uint8_t>(std::stoul(key.substr(bar + 1)));
  return c;
}

HeaderClassifier::HeaderClassifier(const Topology& topo) {
  for (const auto& h : topo.hosts()) prefixes_.push_back(h.prefix);
  std::sort(prefixes_.begin(), prefixes_.end(), [](const Prefix& a, const Prefix& b) {
    if (a.len != b.len) return a.len > b.len;  // longest match first
    return a.addr < b.addr;
  });
}

HeaderClass HeaderClassifier::classify(const PacketHeader& h) const {
  for (const auto& p : prefixes_) {
    if (p.contains(h.dst_addr)) return {p, h.proto};
  }
  return {Prefix{h.dst_addr, 32}, h.proto};
}

RecordResult TrajectoryStore::record_actual(const Trajectory& t) {
  if (t.terminal == Terminal::InFlight) fail(Err::InvalidArgument, "trajectory not complete");
  if (t.hops.empty()) fail(Err::InvalidArgument, "trajectory has no hops");
  auto it = by_packet_.find(t.packet_id);
  if (it != by_packet_.end()) {
    replay_evidence_.push_back({t.packet_id, it->second, t});
    return {false, true};
  }
  HeaderClass c = classifier_.classify(t.hops.front().observed_header);
  by_packet_[t.packet_id] = t;
  by_class_[c].push_back(t.packet_id);
  order_.push_back(t.packet_id);
  return {true, false};
}

const Trajectory* TrajectoryStore::find(PacketId id) const {
  auto it = by_packet_.find(id);
  return it == by_packet_.end() ? nullptr : &it->second;
}

const std::vector<PacketId>& TrajectoryStore::of_class(const HeaderClass& c) const {
  static const std::vector<PacketId> kEmpty;
  auto it = by_class_.find(c);
  return it == by_class_.end() ? kEmpty : it->second;
}

std::vector<HeaderClass> TrajectoryStore::classes() const {
  std::vector<HeaderClass> out;
  out.reserve(by_class_.size());
  for (const auto& [c, _] : by_class_) out.push_back(c);
  return out;
}

std::vector<HeaderClass> TrajectoryStore::classes_crossing(DeviceId d) const {
  std::vector<HeaderClass> out;
  for (const auto& [c, ids] : by_class_) {
    for (PacketId id : ids) {
      if (by_packet_.at(id).crosses(d)) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

HeaderClass TrajectoryStore::class_of(const Trajectory& t) const {
  if (t.hops.empty()) fail(Err::InvalidArgument, "empty trajectory");
  return classifier_.classify(t.hops.front().observed_header);
}

std::vector<ReplayEvidence> TrajectoryStore::drain_replay_evidence() {
  std::vector<ReplayEvidence> out;
  out.swap(replay_evidence_);
  return out;
}

std::string TrajectoryStore::to_ndjson() const {
  std::ostringstream os;
  for (PacketId id : order_) {
    const Trajectory& t = by_packet_.at(id);
    os << dataplane::trajectory_to_json(t, class_of(t).key()).dump() << '\n';
  }
  return os.str();
}

TrajectoryStore TrajectoryStore::from_ndjson(StoreRole role, HeaderClassifier classifier,
                                             const std::string& text) {
  TrajectoryStore store(role, std::move(classifier));
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(Err::ParseError, "bad trajectory line");
    store.record_actual(dataplane::trajectory_from_json(j));
  }
  return store;
}

ExpectedWalk expected_walk(const VirtualReplica& replica, const PacketHeader& header,
                           DeviceId ingress_device, PortId ingress_port) {
  const Topology& topo = replica.topology;
  if (!topo.has_device(ingress_device) || ingress_port >= topo.port_count(ingress_device)) {
    fail(Err::UnknownIngress, "ingress not in replica topology");
  }
  ExpectedWalk out;
  out.trajectory.packet_id = header.packet_id;
  PacketHeader h = header;
  DeviceId device = ingress_device;
  PortId in_port = ingress_port;
  SimTime time = 0;
  const std::size_t budget = 2 * topo.device_count();

  while (true) {
    if (out.trajectory.hops.size() >= budget) {
      out.trajectory.terminal = Terminal::Looped;
      return out;
    }
    TrajectoryHop hop{device, in_port, std::nullopt, h, time};
    const FlowRule* rule = replica.table(device).lookup(h);
    if (!rule) {
      out.trajectory.hops.push_back(hop);
      out.detail.push_back({hop, nullptr});
      out.trajectory.terminal = Terminal::Dropped;
      return out;
    }

    PacketHeader next = h;
    std::optional<PortId> fwd;
    bool drop = rule->actions.empty();
    for (const auto& a : rule->actions) {
      switch (a.kind) {
        case ActionKind::Rewrite:
          switch (a.field) {
            case Field::SrcAddr: next.src_addr = static_cast<std::uint32_t>(a.value); break;
            case Field::DstAddr: next.dst_addr = static_cast<std::uint32_t>(a.value); break;
            case Field::SrcPort: next.src_port = static_cast<std::uint16_t>(a.value); break;
            case Field::DstPort: next.dst_port = static_cast<std::uint16_t>(a.value); break;
            case Field::Proto: next.proto = static_cast<std::uint8_t>(a.value); break;
            case Field::PayloadTag: next.payload_tag = a.value; break;
          }
          break;
        case ActionKind::Forward: fwd = a.port; break;
        case ActionKind::Drop: drop = true; break;
      }
    }

    if (drop || !fwd) {
      out.trajectory.hops.push_back(hop);
      out.detail.push_back({hop, rule});
      out.trajectory.terminal = Terminal::Dropped;
      return out;
    }

    hop.out_port = *fwd;
    out.trajectory.hops.push_back(hop);
    out.detail.push_back({hop, rule});

    if (auto host = topo.host_at(device, *fwd)) {
      out.trajectory.terminal =
          host->prefix.contains(next.dst_addr) ? Terminal::Delivered : Terminal::Dropped;
      return out;
    }
    auto peer = topo.peer(device, *fwd);
    if (!peer) {
      out.trajectory.terminal = Terminal::Dropped;
      return out;
    }
    h = next;
    device = peer->first;
    in_port = peer->second;
    time += 1;
  }
}

Trajectory expected_trajectory(const VirtualReplica& replica, const PacketHeader& header,
                               DeviceId ingress_device, PortId ingress_port) {
  return expected_walk(replica, header, ingress_device, ingress_port).trajectory;
}

std::pair<DeviceId, PortId> source_ingress(const Topology& topo, DeviceId source) {
  auto hosts = topo.hosts_of(source);
  if (!hosts.empty()) return {source, hosts.front().port};
  return {source, 0};
}

std::optional<PacketHeader> find_packet(const VirtualReplica& replica, DeviceId source,
                                        DeviceId destination) {
  const Topology& topo = replica.topology;
  if (!topo.has_device(source) || !topo.has_device(destination)) return std::nullopt;
  auto [ing_dev, ing_port] = source_ingress(topo, source);
  auto src_hosts = topo.hosts_of(source);

  for (const auto& h : topo.hosts_of(destination)) {
    PacketHeader pck;
    pck.src_addr = src_hosts.empty() ? 0 : src_hosts.front().prefix.addr;
    pck.dst_addr = h.prefix.addr;  // lowest-address representative
    pck.proto = kDefaultProbeProto;
    Trajectory t = expected_trajectory(replica, pck, ing_dev, ing_port);
    if (t.terminal == Terminal::Delivered && !t.hops.empty() &&
        t.hops.back().device == destination) {
      return pck;
    }
  }
  return std::nullopt;
}

}  // namespace gwardar::trajectory

#include "dataplane.hpp"

#include <algorithm>
#include <sstream>

namespace gwardar::dataplane {

const char* behavior_name(BehaviorKind k) {
  switch (k) {
    case BehaviorKind::Drop: return "drop";
    case BehaviorKind::Replay: return "replay";
    case BehaviorKind::Misroute: return "misroute";
    case BehaviorKind::Modify: return "modify";
  }
  return "drop";
}

const char* terminal_name(Terminal t) {
  switch (t) {
    case Terminal::Delivered: return "delivered";
    case Terminal::Dropped: return "dropped";
    case Terminal::Looped: return "looped";
    case Terminal::InFlight: return "in_flight";
  }
  return "in_flight";
}

Terminal terminal_from_name(const std::string& s) {
  if (s == "delivered") return Terminal::Delivered;
  if (s == "dropped") return Terminal::Dropped;
  if (s == "looped") return Terminal::Looped;
  if (s == "in_flight") return Terminal::InFlight;
  fail(Err::ParseError, "unknown terminal: " + s);
}

std::vector<DeviceId> Trajectory::device_path() const {
  std::vector<DeviceId> out;
  out.reserve(hops.size());
  for (const auto& h : hops) out.push_back(h.device);
  return out;
}

bool Trajectory::crosses(DeviceId d) const {
  return std::any_of(hops.begin(), hops.end(),
                     [d](const TrajectoryHop& h) { return h.device == d; });
}

json trajectory_to_json(const Trajectory& t, const std::string& class_key) {
  json hops = json::array();
  for (const auto& h : t.hops) {
    json hj{{"device", h.device},
            {"in_port", h.in_port},
            {"header", header_to_json(h.observed_header)},
            {"time", h.time}};
    if (h.out_port) {
      hj["out_port"] = *h.out_port;
    } else {
      hj["out_port"] = nullptr;
    }
    hops.push_back(std::move(hj));
  }
  json out{{"packet_id", t.packet_id}, {"hops", hops}, {"terminal", terminal_name(t.terminal)}};
  if (!class_key.empty()) out["class_key"] = class_key;
  return out;
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.packet_id = j.at("packet_id").get<PacketId>();
  t.terminal = terminal_from_name(j.at("terminal").get<std::string>());
  for (const auto& hj : j.at("hops")) {
    TrajectoryHop h;
    h.device = hj.at("device").get<DeviceId>();
    h.in_port = hj.at("in_port").get<PortId>();
    if (!hj.at("out_port").is_null()) h.out_port = hj.at("out_port").get<PortId>();
    h.observed_header = header_from_json(hj.at("header"));
    h.time = hj.at("time").get<SimTime>();
    t.hops.push_back(std::move(h));
  }
  return t;
}

bool SouthboundChannel::send(Origin origin, const FlowMod& mod, SimTime now) {
  FlowModRecord rec{now, origin, mod};
  if (controller_blocked_ && origin == Origin::Controller) {
    blocked_.push_back(std::move(rec));
    return false;
  }
  log_.push_back(rec);
  for (const auto& l : listeners_) l(rec);
  return true;
}

void SouthboundChannel::record_packet_in(DeviceId device, const PacketHeader& h, SimTime now) {
  packet_ins_.push_back({now, device, h});
}

std::string SouthboundChannel::log_to_ndjson() const {
  std::ostringstream os;
  for (const auto& rec : log_) {
    json j = flow_mod_to_json(rec.mod);
    j["time"] = rec.time;
    j["origin"] = rec.origin == Origin::Controller ? "controller" : "gwardar";
    os << j.dump() << '\n';
  }
  return os.str();
}

std::vector<FlowModRecord> SouthboundChannel::log_from_ndjson(const std::string& text) {
  std::vector<FlowModRecord> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(Err::ParseError, "bad flowmod log line");
    FlowModRecord rec;
    rec.time = j.at("time").get<SimTime>();
    rec.origin = j.at("origin").get<std::string>() == "gwardar" ? Origin::Gwardar
                                                                : Origin::Controller;
    rec.mod = flow_mod_from_json(j);
    out.push_back(std::move(rec));
  }
  return out;
}

DataPlane::DataPlane(const Topology& topo, SouthboundChannel& channel, std::uint64_t seed)
    : topo_(topo), channel_(channel), rng_(seed) {
  for (DeviceId d : topo.devices()) devices_[d] = Device{};
}

Ack DataPlane::apply_flow_mod(const FlowMod& mod, SimTime now) {
  auto it = devices_.find(mod.device);
  if (it == devices_.end()) fail(Err::UnknownDevice, "flow_mod for unknown device");
  it->second.table.apply(mod, now);
  return {mod.device, it->second.table.size()};
}

void DataPlane::implant_behavior(DeviceId device, const MaliciousBehavior& behavior) {
  auto it = devices_.find(device);
  if (it == devices_.end()) fail(Err::UnknownDevice, "implant on unknown device");
  it->second.compromise = behavior;
}

void DataPlane::clear_behavior(DeviceId device) {
  auto it = devices_.find(device);
  if (it == devices_.end()) fail(Err::UnknownDevice, "clear on unknown device");
  it->second.compromise.reset();
}

std::map<DeviceId, FlowTable> DataPlane::snapshot_tables() const {
  std::map<DeviceId, FlowTable> out;
  for (const auto& [d, dev] : devices_) out[d] = dev.table;
  return out;
}

void DataPlane::load_tables(const std::map<DeviceId, FlowTable>& tables) {
  for (const auto& [d, t] : tables) {
    auto it = devices_.find(d);
    if (it == devices_.end()) fail(Err::UnknownDevice, "load for unknown device");
    it->second.table = t;
  }
}

const FlowTable& DataPlane::table(DeviceId d) const {
  auto it = devices_.find(d);
  if (it == devices_.end()) fail(Err::UnknownDevice, "unknown device");
  return it->second.table;
}

InjectResult DataPlane::inject_packet(const PacketHeader& header, DeviceId ingress_device,
                                      PortId ingress_port, SimTime now) {
  if (!topo_.has_device(ingress_device) || ingress_port >= topo_.port_count(ingress_device)) {
    fail(Err::UnknownIngress, "ingress not in topology");
  }
  InjectResult res;
  res.primary.packet_id = header.packet_id;
  propagate(res.primary, res.clones, header, ingress_device, ingress_port, now,
            2 * topo_.device_count(), false);
  return res;
}

void DataPlane::propagate(Trajectory& out, std::vector<Trajectory>& clones, PacketHeader header,
                          DeviceId device, PortId in_port, SimTime time, std::size_t hop_budget,
                          bool is_clone) {
  while (true) {
    if (out.hops.size() >= hop_budget) {
      out.terminal = Terminal::Looped;
      return;
    }
    TrajectoryHop hop{device, in_port, std::nullopt, header, time};
    Device& dev = devices_.at(device);

    // stand-in for congestion loss; same trajectory signature as a drop
    if (loss_probability_ > 0.0 && rng_.chance(loss_probability_)) {
      out.hops.push_back(hop);
      out.terminal = Terminal::Dropped;
      return;
    }

    bool behaved = false;
    if (dev.compromise && dev.compromise->applies(header) &&
        rng_.chance(dev.compromise->probability)) {
      const MaliciousBehavior& b = *dev.compromise;
      switch (b.kind) {
        case BehaviorKind::Drop:
          out.hops.push_back(hop);
          out.terminal = Terminal::Dropped;
          return;
        case BehaviorKind::Misroute: {
          hop.out_port = b.wrong_port;
          out.hops.push_back(hop);
          auto peer = topo_.peer(device, b.wrong_port);
          if (!peer) {
            out.terminal = Terminal::Dropped;  // forwarded into the void
            return;
          }
          device = peer->first;
          in_port = peer->second;
          time += 1;
          continue;
        }
        case BehaviorKind::Modify:
        case BehaviorKind::Replay:
          behaved = true;  // forwards per the table, then mutates/duplicates
          break;
      }
    }

    const FlowRule* rule = dev.table.lookup(header);
    if (!rule) {
      channel_.record_packet_in(device, header, time);
      out.hops.push_back(hop);
      out.terminal = Terminal::Dropped;
      return;
    }

    PacketHeader next_header = header;
    std::optional<PortId> fwd;
    bool drop = rule->actions.empty();
    for (const auto& a : rule->actions) {
      switch (a.kind) {
        case ActionKind::Rewrite:
          switch (a.field) {
            case Field::SrcAddr: next_header.src_addr = static_cast<std::uint32_t>(a.value); break;
            case Field::DstAddr: next_header.dst_addr = static_cast<std::uint32_t>(a.value); break;
            case Field::SrcPort: next_header.src_port = static_cast<std::uint16_t>(a.value); break;
            case Field::DstPort: next_header.dst_port = static_cast<std::uint16_t>(a.value); break;
            case Field::Proto: next_header.proto = static_cast<std::uint8_t>(a.value); break;
            case Field::PayloadTag: next_header.payload_tag = a.value; break;
          }
          break;
        case ActionKind::Forward: fwd = a.port; break;
        case ActionKind::Drop: drop = true; break;
      }
    }

    if (behaved && dev.compromise->kind == BehaviorKind::Modify) {
      const MaliciousBehavior& b = *dev.compromise;
      switch (b.field) {
        case Field::SrcAddr: next_header.src_addr = static_cast<std::uint32_t>(b.value); break;
        case Field::DstAddr: next_header.dst_addr = static_cast<std::uint32_t>(b.value); break;
        case Field::SrcPort: next_header.src_port = static_cast<std::uint16_t>(b.value); break;
        case Field::DstPort: next_header.dst_port = static_cast<std::uint16_t>(b.value); break;
        case Field::Proto: next_header.proto = static_cast<std::uint8_t>(b.value); break;
        case Field::PayloadTag: next_header.payload_tag = b.value; break;
      }
    }

    if (drop || !fwd) {
      out.hops.push_back(hop);
      out.terminal = Terminal::Dropped;
      return;
    }

    hop.out_port = *fwd;
    out.hops.push_back(hop);

    if (auto host = topo_.host_at(device, *fwd)) {
      out.terminal =
          host->prefix.contains(next_header.dst_addr) ? Terminal::Delivered : Terminal::Dropped;
      return;
    }
    auto peer = topo_.peer(device, *fwd);
    if (!peer) {
      out.terminal = Terminal::Dropped;
      return;
    }

    if (behaved && dev.compromise->kind == BehaviorKind::Replay && !is_clone) {
      // duplicate copy re-emitted on the same link, one tick behind
      Trajectory clone;
      clone.packet_id = out.packet_id;
      propagate(clone, clones, next_header, peer->first, peer->second, time + 2,
                hop_budget, true);
      clones.push_back(std::move(clone));
    }

    header = next_header;
    device = peer->first;
    in_port = peer->second;
    time += 1;
  }
}

}  // namespace gwardar::dataplane

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netmodel.hpp"

// Simulated data plane: flow-table-driven forwarding with per-hop trajectory
// recording, implantable malicious device behaviors, and the in-process
// southbound channel (FlowMod / PacketIn) the controller and Gwardar share.

namespace gwardar::dataplane {

using namespace gwardar::netmodel;

enum class BehaviorKind : std::uint8_t { Drop, Replay, Misroute, Modify };

const char* behavior_name(BehaviorKind k);

struct MaliciousBehavior {
  BehaviorKind kind = BehaviorKind::Drop;
  std::optional<HeaderSpace> selector;  // nullopt = universal
  double probability = 1.0;
  PortId wrong_port = 0;           // Misroute
  Field field = Field::DstAddr;    // Modify
  std::uint64_t value = 0;         // Modify

  bool applies(const PacketHeader& h) const {
    return !selector || selector->contains(h);
  }
};

enum class Terminal : std::uint8_t { Delivered, Dropped, Looped, InFlight };

const char* terminal_name(Terminal t);
Terminal terminal_from_name(const std::string& s);

struct TrajectoryHop {
  DeviceId device = 0;
  PortId in_port = 0;
  std::optional<PortId> out_port;  // none when dropped or delivered off-network
  PacketHeader observed_header;    // as seen on arrival at `device`
  SimTime time = 0;
};

struct Trajectory {
  PacketId packet_id = 0;
  std::vector<TrajectoryHop> hops;
  Terminal terminal = Terminal::InFlight;

  std::vector<DeviceId> device_path() const;
  bool crosses(DeviceId d) const;
};

json trajectory_to_json(const Trajectory& t, const std::string& class_key = "");
Trajectory trajectory_from_json(const json& j);

enum class Origin : std::uint8_t { Controller, Gwardar };

struct FlowModRecord {
  SimTime time = 0;
  Origin origin = Origin::Controller;
  FlowMod mod;
};

struct PacketInRecord {
  SimTime time = 0;
  DeviceId device = 0;
  PacketHeader header;
};

// Ordered in-process message stream between control and data plane. Gwardar's
// interceptor subscribes; the takeover gate drops controller-originated mods
// before they reach anything.
class SouthboundChannel {
 public:
  using ModListener = std::function<void(const FlowModRecord&)>;

  void subscribe(ModListener l) { listeners_.push_back(std::move(l)); }

  // Returns false when the takeover gate blocked the message.
  bool send(Origin origin, const FlowMod& mod, SimTime now);
  void record_packet_in(DeviceId device, const PacketHeader& h, SimTime now);

  void set_controller_blocked(bool blocked) { controller_blocked_ = blocked; }
  bool controller_blocked() const { return controller_blocked_; }

  const std::vector<FlowModRecord>& log() const { return log_; }
  const std::vector<FlowModRecord>& blocked_log() const { return blocked_; }
  const std::vector<PacketInRecord>& packet_ins() const { return packet_ins_; }

  std::string log_to_ndjson() const;
  static std::vector<FlowModRecord> log_from_ndjson(const std::string& text);

 private:
  std::vector<ModListener> listeners_;
  std::vector<FlowModRecord> log_;
  std::vector<FlowModRecord> blocked_;
  std::vector<PacketInRecord> packet_ins_;
  bool controller_blocked_ = false;
};

struct Ack {
  DeviceId device = 0;
  std::size_t table_size = 0;
};

struct InjectResult {
  Trajectory primary;
  std::vector<Trajectory> clones;  // replay duplicates, same packet_id
};

class DataPlane {
 public:
  DataPlane(const Topology& topo, SouthboundChannel& channel, std::uint64_t seed);

  // Propagates a packet hop by hop from `ingress`, recording each hop with
  // the header observed there. Honest action comes from the highest-priority
  // matching rule; an implanted behavior overrides it when its selector
  // matches and the probability draw succeeds.
  InjectResult inject_packet(const PacketHeader& header, DeviceId ingress_device,
                             PortId ingress_port, SimTime now);

  Ack apply_flow_mod(const FlowMod& mod, SimTime now);
  void implant_behavior(DeviceId device, const MaliciousBehavior& behavior);
  void clear_behavior(DeviceId device);

  std::map<DeviceId, FlowTable> snapshot_tables() const;
  void load_tables(const std::map<DeviceId, FlowTable>& tables);
  const FlowTable& table(DeviceId d) const;
  const Topology& topology() const { return topo_; }

  void set_loss_probability(double p) { loss_probability_ = p; }
  double loss_probability() const { return loss_probability_; }

 private:
  struct Device {
    FlowTable table;
    std::optional<MaliciousBehavior> compromise;
  };

  void propagate(Trajectory& out, std::vector<Trajectory>& clones, PacketHeader header,
                 DeviceId device, PortId in_port, SimTime time, std::size_t hop_budget,
                 bool is_clone);

  const Topology& topo_;
  SouthboundChannel& channel_;
  std::map<DeviceId, Device> devices_;
  double loss_probability_ = 0.0;
  Rng rng_;
};

}  // namespace gwardar::dataplane

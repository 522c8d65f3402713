#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <map>
#include <vector>

#include "controller.hpp"
#include "harness.hpp"

namespace helpers {

using namespace gwardar;
using namespace gwardar::netmodel;

// a.b.0.0/16
inline Prefix pfx(unsigned a, unsigned b) {
  return Prefix{(static_cast<std::uint32_t>(a) << 24) | (static_cast<std::uint32_t>(b) << 16), 16};
}

// Line topology 0-1-...-n-1 with one /16 host prefix (10.i.0.0/16) per
// device on its last port.
inline Topology line_with_hosts(std::size_t n) {
  Topology t;
  for (DeviceId i = 0; i < n; ++i) {
    PortId degree = (i == 0 || i + 1 == n) ? 1 : 2;
    t.add_device(i, static_cast<PortId>(degree + 1));
  }
  for (DeviceId i = 0; i + 1 < n; ++i) {
    PortId left = (i == 0) ? 0 : 1;
    t.add_link(i, left, i + 1, 0);
  }
  for (DeviceId i = 0; i < n; ++i) {
    PortId host_port = static_cast<PortId>(t.port_count(i) - 1);
    t.attach_host(pfx(10, i), i, host_port);
  }
  return t;
}

inline std::map<Prefix, DeviceId> prefix_map(const Topology& t) {
  std::map<Prefix, DeviceId> out;
  for (const auto& h : t.hosts()) out[h.prefix] = h.device;
  return out;
}

inline PacketHeader header_to(std::uint32_t dst, std::uint32_t src = 0,
                              std::uint8_t proto = gwardar::trajectory::kDefaultProbeProto,
                              PacketId id = 1) {
  PacketHeader h;
  h.src_addr = src;
  h.dst_addr = dst;
  h.proto = proto;
  h.packet_id = id;
  h.payload_tag = 0xabcd;
  return h;
}

// Applies compiled tables straight to a data plane (no controller involved).
inline void program(dataplane::DataPlane& dp,
                    const std::map<DeviceId, std::vector<FlowRule>>& tables, SimTime now = 0) {
  for (const auto& [dev, rules] : tables) {
    for (const auto& r : rules) dp.apply_flow_mod(FlowMod::add(dev, r), now);
  }
}

inline interceptor::VirtualReplica replica_of(const Topology& topo,
                                              const std::map<DeviceId, FlowTable>& tables) {
  interceptor::VirtualReplica r;
  r.topology = topo;
  r.tables = tables;
  for (DeviceId d : topo.devices()) r.tables[d];
  return r;
}

// Small fast experiment configuration for tests.
inline harness::SimConfig small_config(const std::string& topo, std::uint64_t seed) {
  harness::SimConfig c;
  c.seed = seed;
  c.topology = topo;
  c.prefixes_per_device = 2;
  c.traffic_rate = 4.0;
  c.max_warmup = 1500;
  c.post_attack_duration = 400;
  c.gwardar.cycle_interval = 20;
  c.gwardar.fpr_window = 50;
  return c;
}

// Random but valid FlowMod stream for replay/fidelity tests.
inline std::vector<FlowMod> random_mods(const Topology& topo, std::size_t count, Rng& rng) {
  std::vector<FlowMod> out;
  auto devices = topo.devices();
  const auto& hosts = topo.hosts();
  for (std::size_t i = 0; i < count; ++i) {
    FlowMod m;
    m.device = devices[rng.uniform(devices.size())];
    const auto& target = hosts[rng.uniform(hosts.size())];
    unsigned len = 8 + static_cast<unsigned>(rng.uniform(25));
    m.match = HeaderSpace::dst_prefix(Prefix{target.prefix.addr, static_cast<std::uint8_t>(len)});
    m.priority = static_cast<std::uint32_t>(rng.uniform(64));
    m.cookie = kCookieControllerBase | rng.uniform(1 << 20);
    switch (rng.uniform(4)) {
      case 0:
      case 1: {
        m.op = FlowModOp::Add;
        if (rng.chance(0.5)) {
          m.actions = {Action::forward(static_cast<PortId>(
              rng.uniform(topo.port_count(m.device))))};
        } else {
          m.actions = {Action::drop()};
        }
        break;
      }
      case 2: {
        m.op = FlowModOp::Modify;
        m.actions = {Action::forward(static_cast<PortId>(rng.uniform(topo.port_count(m.device))))};
        break;
      }
      default: {
        m.op = FlowModOp::Delete;
        m.strict = rng.chance(0.5);
        break;
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace helpers

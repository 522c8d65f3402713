#include "oracles.hpp"

#include <algorithm>
#include <deque>

namespace oracles {

namespace {

bool field_ok(const TernaryField& f, std::uint64_t v) { return ((v ^ f.value) & f.mask) == 0; }

bool space_ok(const HeaderSpace& s, const PacketHeader& h) {
  return field_ok(s.src_addr, h.src_addr) && field_ok(s.dst_addr, h.dst_addr) &&
         field_ok(s.src_port, h.src_port) && field_ok(s.dst_port, h.dst_port) &&
         field_ok(s.proto, h.proto);
}

PacketHeader rewrite(PacketHeader h, Field f, std::uint64_t v) {
  switch (f) {
    case Field::SrcAddr: h.src_addr = static_cast<std::uint32_t>(v); break;
    case Field::DstAddr: h.dst_addr = static_cast<std::uint32_t>(v); break;
    case Field::SrcPort: h.src_port = static_cast<std::uint16_t>(v); break;
    case Field::DstPort: h.dst_port = static_cast<std::uint16_t>(v); break;
    case Field::Proto: h.proto = static_cast<std::uint8_t>(v); break;
    case Field::PayloadTag: h.payload_tag = v; break;
  }
  return h;
}

bool prefix_has(const Prefix& p, std::uint32_t addr) {
  if (p.len == 0) return true;
  std::uint32_t mask = p.len >= 32 ? 0xffffffffu : ~((1u << (32 - p.len)) - 1);
  return (addr & mask) == (p.addr & mask);
}

}  // namespace

const FlowRule* best_rule(const std::vector<FlowRule>& rules, const PacketHeader& h) {
  const FlowRule* best = nullptr;
  for (const auto& r : rules) {
    if (!space_ok(r.match, h)) continue;
    if (!best) {
      best = &r;
      continue;
    }
    if (r.priority != best->priority) {
      if (r.priority > best->priority) best = &r;
    } else if (r.cookie != best->cookie) {
      if (r.cookie > best->cookie) best = &r;
    } else if (r.install_time > best->install_time) {
      best = &r;
    }
  }
  return best;
}

OracleTrajectory propagate(const std::map<DeviceId, std::vector<FlowRule>>& tables,
                           const Topology& topo, PacketHeader header, DeviceId device,
                           PortId in_port) {
  OracleTrajectory out;
  std::size_t limit = 2 * topo.device_count();
  while (true) {
    if (out.hops.size() >= limit) {
      out.terminal = Terminal::Looped;
      return out;
    }
    OracleHop hop{device, in_port, std::nullopt, header};
    auto it = tables.find(device);
    const FlowRule* rule = it == tables.end() ? nullptr : best_rule(it->second, header);
    if (!rule) {
      out.hops.push_back(hop);
      out.terminal = Terminal::Dropped;
      return out;
    }
    PacketHeader next = header;
    std::optional<PortId> fwd;
    bool drop = rule->actions.empty();
    for (const auto& a : rule->actions) {
      if (a.kind == ActionKind::Rewrite) next = rewrite(next, a.field, a.value);
      if (a.kind == ActionKind::Forward) fwd = a.port;
      if (a.kind == ActionKind::Drop) drop = true;
    }
    if (drop || !fwd) {
      out.hops.push_back(hop);
      out.terminal = Terminal::Dropped;
      return out;
    }
    hop.out_port = fwd;
    out.hops.push_back(hop);
    if (auto host = topo.host_at(device, *fwd)) {
      out.terminal = prefix_has(host->prefix, next.dst_addr) ? Terminal::Delivered
                                                             : Terminal::Dropped;
      return out;
    }
    auto peer = topo.peer(device, *fwd);
    if (!peer) {
      out.terminal = Terminal::Dropped;
      return out;
    }
    header = next;
    device = peer->first;
    in_port = peer->second;
  }
}

void TableReplay::apply(const FlowMod& mod, SimTime now) {
  switch (mod.op) {
    case FlowModOp::Add: {
      FlowRule r;
      r.match = mod.match;
      r.priority = mod.priority;
      r.actions = mod.actions;
      r.cookie = mod.cookie;
      r.install_time = mod.install_time.value_or(now);
      rules_[{mod.match, mod.priority}] = r;
      break;
    }
    case FlowModOp::Modify: {
      auto it = rules_.find({mod.match, mod.priority});
      if (it != rules_.end()) {
        it->second.actions = mod.actions;
        it->second.cookie = mod.cookie;
      }
      break;
    }
    case FlowModOp::Delete: {
      if (mod.strict) {
        rules_.erase({mod.match, mod.priority});
      } else {
        for (auto it = rules_.begin(); it != rules_.end();) {
          if (it->second.match.subset_of(mod.match)) {
            it = rules_.erase(it);
          } else {
            ++it;
          }
        }
      }
      break;
    }
  }
}

std::vector<FlowRule> TableReplay::rules() const {
  std::vector<FlowRule> out;
  for (const auto& [_, r] : rules_) out.push_back(r);
  return out;
}

bool same_rules(const std::vector<FlowRule>& a, const std::vector<FlowRule>& b) {
  if (a.size() != b.size()) return false;
  auto key = [](const FlowRule& r) {
    return std::make_tuple(r.match, r.priority, r.cookie, r.install_time, r.actions.size());
  };
  auto sa = a;
  auto sb = b;
  std::sort(sa.begin(), sa.end(), [&](const FlowRule& x, const FlowRule& y) { return key(x) < key(y); });
  std::sort(sb.begin(), sb.end(), [&](const FlowRule& x, const FlowRule& y) { return key(x) < key(y); });
  return sa == sb;
}

std::map<DeviceId, unsigned> bfs_distances(const Topology& topo, DeviceId from) {
  std::map<DeviceId, std::set<DeviceId>> adj;
  for (DeviceId d : topo.devices()) {
    for (const auto& [n, _] : topo.neighbors(d)) adj[d].insert(n);
  }
  std::map<DeviceId, unsigned> dist;
  std::deque<DeviceId> q{from};
  dist[from] = 0;
  while (!q.empty()) {
    DeviceId d = q.front();
    q.pop_front();
    for (DeviceId n : adj[d]) {
      if (!dist.count(n)) {
        dist[n] = dist[d] + 1;
        q.push_back(n);
      }
    }
  }
  return dist;
}

namespace {

std::map<DeviceId, std::vector<FlowRule>> flatten(const std::map<DeviceId, FlowTable>& tables) {
  std::map<DeviceId, std::vector<FlowRule>> out;
  for (const auto& [d, t] : tables) out[d] = t.rules();
  return out;
}

// own longest-prefix classifier
gwardar::trajectory::HeaderClass classify(const Topology& topo, const PacketHeader& h) {
  const gwardar::netmodel::HostAttachment* best = nullptr;
  for (const auto& host : topo.hosts()) {
    if (!prefix_has(host.prefix, h.dst_addr)) continue;
    if (!best || host.prefix.len > best->prefix.len) best = &host;
  }
  if (best) return {best->prefix, h.proto};
  return {Prefix{h.dst_addr, 32}, h.proto};
}

std::optional<PacketHeader> find_packet_naive(const gwardar::interceptor::VirtualReplica& replica,
                                              DeviceId x, DeviceId y) {
  const Topology& topo = replica.topology;
  auto tables = flatten(replica.tables);
  auto x_hosts = topo.hosts_of(x);
  DeviceId ing_dev = x;
  PortId ing_port = x_hosts.empty() ? 0 : x_hosts.front().port;
  for (const auto& host : topo.hosts_of(y)) {
    PacketHeader pck;
    pck.src_addr = x_hosts.empty() ? 0 : x_hosts.front().prefix.addr;
    pck.dst_addr = host.prefix.addr;
    pck.proto = gwardar::trajectory::kDefaultProbeProto;
    auto t = propagate(tables, topo, pck, ing_dev, ing_port);
    if (t.terminal == Terminal::Delivered && !t.hops.empty() && t.hops.back().device == y) {
      return pck;
    }
  }
  return std::nullopt;
}

}  // namespace

std::set<DeviceId> normal_extractor(const Trajectory& t,
                                    const gwardar::trajectory::TrajectoryStore& store,
                                    const gwardar::interceptor::VirtualReplica& replica,
                                    const gwardar::normal::TimeWindow& window) {
  const Topology& topo = replica.topology;
  std::set<DeviceId> normal;
  for (const auto& hop : t.hops) normal.insert(hop.device);

  for (const auto& hop : t.hops) {
    DeviceId x = hop.device;
    auto dist = bfs_distances(topo, x);
    std::vector<DeviceId> far;
    for (DeviceId y : topo.devices()) {
      auto it = dist.find(y);
      if (it == dist.end() || it->second >= 2) far.push_back(y);
    }
    for (DeviceId y : far) {
      auto pck = find_packet_naive(replica, x, y);
      if (!pck) continue;
      auto pcls = classify(topo, *pck);
      for (PacketId id : store.record_order()) {
        const Trajectory* t2 = store.find(id);
        if (!t2 || t2->hops.empty()) continue;
        if (classify(topo, t2->hops.front().observed_header) != pcls) continue;
        if (t2->hops.front().device != x) continue;
        for (const auto& h2 : t2->hops) {
          if (h2.time >= window.start && h2.time < window.start + window.length) {
            normal.insert(h2.device);
          }
        }
      }
    }
  }
  return normal;
}

std::map<gwardar::trajectory::HeaderClass, std::set<DeviceId>> normal_model(
    const gwardar::normal::ScanningRegion& region,
    const gwardar::trajectory::TrajectoryStore& store,
    const gwardar::interceptor::VirtualReplica& replica,
    const gwardar::normal::TimeWindow& window) {
  std::map<gwardar::trajectory::HeaderClass, std::set<DeviceId>> out;
  for (PacketId id : region.member_trajectories) {
    const Trajectory* t = store.find(id);
    if (!t || t->hops.empty()) continue;
    auto cls = classify(replica.topology, t->hops.front().observed_header);
    auto normal = normal_extractor(*t, store, replica, window);
    out[cls].insert(normal.begin(), normal.end());
  }
  return out;
}

std::vector<std::set<DeviceId>> regions_exhaustive(
    const gwardar::trajectory::TrajectoryStore& store, const Topology& topo, double threshold) {
  std::map<DeviceId, std::size_t> freq;
  for (PacketId id : store.record_order()) {
    const Trajectory* t = store.find(id);
    std::set<DeviceId> uniq;
    for (const auto& h : t->hops) uniq.insert(h.device);
    for (DeviceId d : uniq) freq[d]++;
  }
  std::size_t max_freq = 0;
  for (const auto& [_, f] : freq) max_freq = std::max(max_freq, f);
  std::set<DeviceId> kept;
  for (const auto& [d, f] : freq) {
    if (static_cast<double>(f) >= threshold * static_cast<double>(max_freq)) kept.insert(d);
  }
  std::vector<std::set<DeviceId>> regions;
  std::set<DeviceId> seen;
  for (DeviceId s : kept) {
    if (seen.count(s)) continue;
    std::set<DeviceId> comp;
    std::deque<DeviceId> q{s};
    seen.insert(s);
    while (!q.empty()) {
      DeviceId d = q.front();
      q.pop_front();
      comp.insert(d);
      for (const auto& [n, _] : topo.neighbors(d)) {
        if (kept.count(n) && !seen.count(n)) {
          seen.insert(n);
          q.push_back(n);
        }
      }
    }
    regions.push_back(std::move(comp));
  }
  std::sort(regions.begin(), regions.end());
  return regions;
}

std::vector<std::tuple<DeviceId, Prefix, bool>> consistency_findings(
    const std::map<DeviceId, FlowTable>& tables, const Topology& topo,
    const std::map<Prefix, DeviceId>& prefixes) {
  auto flat = flatten(tables);
  std::vector<std::tuple<DeviceId, Prefix, bool>> findings;
  for (DeviceId ingress : topo.devices()) {
    for (const auto& [prefix, attach] : prefixes) {
      PacketHeader h;
      h.dst_addr = prefix.addr;
      h.proto = gwardar::trajectory::kDefaultProbeProto;
      auto hosts = topo.hosts_of(ingress);
      PortId port = hosts.empty() ? 0 : hosts.front().port;
      auto t = propagate(flat, topo, h, ingress, port);
      if (t.terminal == Terminal::Delivered && !t.hops.empty() && t.hops.back().device == attach) {
        continue;
      }
      findings.emplace_back(ingress, prefix, t.terminal == Terminal::Looped);
    }
  }
  return findings;
}

bool same_trajectory(const Trajectory& a, const OracleTrajectory& b) {
  if (a.hops.size() != b.hops.size()) return false;
  if (a.terminal != b.terminal) return false;
  for (std::size_t i = 0; i < a.hops.size(); ++i) {
    if (a.hops[i].device != b.hops[i].device) return false;
    if (a.hops[i].in_port != b.hops[i].in_port) return false;
    if (a.hops[i].out_port != b.hops[i].out_port) return false;
    if (!(a.hops[i].observed_header == b.hops[i].header)) return false;
  }
  return true;
}

}  // namespace oracles

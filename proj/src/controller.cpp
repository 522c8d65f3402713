#include "controller.hpp"

#include <algorithm>

namespace gwardar::controller {

std::map<DeviceId, std::vector<FlowRule>> compile_shortest_paths(
    const Topology& topology, const std::map<Prefix, DeviceId>& prefixes) {
  std::map<DeviceId, std::vector<FlowRule>> out;
  for (DeviceId d : topology.devices()) out[d];

  std::map<DeviceId, std::map<DeviceId, std::uint32_t>> dist_from;  // attachment -> distances
  for (const auto& [prefix, attach] : prefixes) {
    if (!topology.has_device(attach)) fail(Err::UnknownDevice, "prefix attached to unknown device");
    if (!dist_from.count(attach)) {
      auto d = topology.hop_distances(attach);
      if (d.size() != topology.device_count()) {
        fail(Err::DisconnectedTopology, "attachment unreachable from some device");
      }
      dist_from[attach] = std::move(d);
    }
  }

  for (const auto& [prefix, attach] : prefixes) {
    // host port for the delivery rule at the attachment device
    std::optional<PortId> host_port;
    for (const auto& h : topology.hosts()) {
      if (h.prefix == prefix && h.device == attach) host_port = h.port;
    }
    if (!host_port) fail(Err::InvalidArgument, "prefix has no host attachment: " + prefix.to_string());

    const auto& dist = dist_from.at(attach);
    for (DeviceId d : topology.devices()) {
      FlowRule r;
      r.match = HeaderSpace::dst_prefix(prefix);
      r.priority = prefix.len;
      if (d == attach) {
        r.actions = {Action::forward(*host_port)};
      } else {
        std::optional<std::pair<DeviceId, PortId>> best;  // (next hop, local port)
        for (const auto& [n, local_port] : topology.neighbors(d)) {
          if (dist.at(n) + 1 != dist.at(d)) continue;
          if (!best || n < best->first || (n == best->first && local_port < best->second)) {
            best = {n, local_port};
          }
        }
        if (!best) fail(Err::DisconnectedTopology, "no shortest-path next hop");
        r.actions = {Action::forward(best->second)};
      }
      out[d].push_back(std::move(r));
    }
  }
  return out;
}

Controller::Controller(const Topology& topo, SouthboundChannel& channel)
    : topo_(topo), channel_(channel) {
  view_.topology = topo;
  for (DeviceId d : topo.devices()) view_.tables[d];
}

Cookie Controller::next_cookie(Origin origin) {
  if (origin == Origin::Gwardar) return kCookieGwardarBase | ++gwardar_seq_;
  return kCookieControllerBase | ++controller_seq_;
}

void Controller::set_compromise(const CompromiseMode& mode) { mode_ = mode; }

bool Controller::suppresses(const FlowMod& mod) const {
  if (mode_.kind != CompromiseKind::MaliciousRules) return false;
  if (!mode_.targets.count(mod.device)) return false;
  for (const auto& [dev, planted] : mode_.rules) {
    if (dev != mod.device) continue;
    if (mod.op == FlowModOp::Delete) {
      bool hits = mod.strict ? (mod.match == planted.match && mod.priority == planted.priority)
                             : planted.match.subset_of(mod.match);
      if (hits) return true;
    } else if (mod.priority >= planted.priority &&
               HeaderSpace::intersect(mod.match, planted.match)) {
      return true;
    }
  }
  return false;
}

void Controller::apply_to_view(const FlowMod& mod, SimTime now) {
  if (mode_.kind == CompromiseKind::MaliciousRulesConcealed && mode_.targets.count(mod.device)) {
    return;  // view frozen at pre-attack state for concealed targets
  }
  view_.tables[mod.device].apply(mod, now);
}

void Controller::submit_policy(const std::vector<std::pair<DeviceId, FlowRule>>& rules,
                               PriorityClass priority_class, SimTime now) {
  (void)priority_class;  // composition precedence is structural: only the
                         // Gwardar app path submits at kGwardarHighPriority
  for (const auto& [dev, rule] : rules) {
    FlowMod mod = FlowMod::add(dev, rule);
    if (mod.cookie == 0) mod.cookie = next_cookie(Origin::Controller);
    if (!suppresses(mod)) channel_.send(Origin::Controller, mod, now);
    apply_to_view(mod, now);
  }
  view_.version++;
}

void Controller::submit_retraction(const std::vector<std::pair<DeviceId, FlowRule>>& rules,
                                   SimTime now) {
  for (const auto& [dev, rule] : rules) {
    FlowMod mod = FlowMod::del_strict(dev, rule.match, rule.priority, rule.cookie);
    if (!suppresses(mod)) channel_.send(Origin::Controller, mod, now);
    apply_to_view(mod, now);
  }
  view_.version++;
}

void Controller::inject_compromise_rules(SimTime now) {
  if (mode_.kind == CompromiseKind::Honest) return;
  for (const auto& [dev, rule] : mode_.rules) {
    FlowMod mod = FlowMod::add(dev, rule);
    channel_.send(Origin::Controller, mod, now);
    if (mode_.kind == CompromiseKind::MaliciousRules) {
      view_.tables[dev].apply(mod, now);  // a non-concealing NOS reports them
    }
  }
  if (mode_.kind == CompromiseKind::MaliciousRules) view_.version++;
}

}  // namespace gwardar::controller

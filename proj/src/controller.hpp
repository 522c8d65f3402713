#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "dataplane.hpp"

// Simulated NOS: compiles routing policy into flow rules, keeps the global
// network view served northbound, and models compromise including view
// concealment. Misbehavior is silent by design; the northbound surface never
// reports errors.

namespace gwardar::controller {

using namespace gwardar::netmodel;
using dataplane::Origin;
using dataplane::SouthboundChannel;

struct NetworkView {
  Topology topology;
  std::map<DeviceId, FlowTable> tables;
  std::uint64_t version = 0;
};

enum class CompromiseKind : std::uint8_t { Honest, MaliciousRules, MaliciousRulesConcealed };

struct CompromiseMode {
  CompromiseKind kind = CompromiseKind::Honest;
  std::set<DeviceId> targets;
  std::vector<std::pair<DeviceId, FlowRule>> rules;
};

enum class PriorityClass : std::uint8_t { Normal, GwardarHigh };

// Shortest-path forwarding tables: one rule per (device, prefix), forwarding
// toward the attachment along a shortest path, equal-length ties broken by
// lowest next-hop device id. Priority encodes prefix length so longest
// prefix wins.
std::map<DeviceId, std::vector<FlowRule>> compile_shortest_paths(
    const Topology& topology, const std::map<Prefix, DeviceId>& prefixes);

class Controller {
 public:
  Controller(const Topology& topo, SouthboundChannel& channel);

  void submit_policy(const std::vector<std::pair<DeviceId, FlowRule>>& rules,
                     PriorityClass priority_class, SimTime now);
  // Gwardar app retracting its own rules; translated to strict deletes.
  void submit_retraction(const std::vector<std::pair<DeviceId, FlowRule>>& rules, SimTime now);

  NetworkView query_view() const { return view_; }

  // Harness-facing: switch the compromise mode. Entering a concealed mode
  // captures the pre-attack view for the targets.
  void set_compromise(const CompromiseMode& mode);
  const CompromiseMode& compromise() const { return mode_; }

  // The compromised NOS plants its malicious rules southbound. Concealed
  // mode leaves the view untouched; plain MaliciousRules reports them.
  void inject_compromise_rules(SimTime now);

  Cookie next_cookie(Origin origin);

 private:
  bool suppresses(const FlowMod& mod) const;
  void apply_to_view(const FlowMod& mod, SimTime now);

  const Topology& topo_;
  SouthboundChannel& channel_;
  NetworkView view_;
  CompromiseMode mode_;
  std::map<DeviceId, FlowTable> concealed_view_;  // frozen pre-attack tables for targets
  std::uint64_t controller_seq_ = 0;
  std::uint64_t gwardar_seq_ = 0;
};

}  // namespace gwardar::controller

#pragma once

// Independent oracles for the test suite. Everything here re-derives results
// with its own logic (naive scans, literal transcriptions); none of it calls
// the code paths it is used to check.

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "dataplane.hpp"
#include "normal.hpp"
#include "trajectory.hpp"

namespace oracles {

using namespace gwardar;
using namespace gwardar::netmodel;
using gwardar::dataplane::Terminal;
using gwardar::dataplane::Trajectory;

struct OracleHop {
  DeviceId device;
  PortId in_port;
  std::optional<PortId> out_port;
  PacketHeader header;  // on arrival
};

struct OracleTrajectory {
  std::vector<OracleHop> hops;
  Terminal terminal = Terminal::InFlight;
};

// Naive per-hop interpreter: re-evaluates every rule with its own ternary
// arithmetic, no table ordering assumptions.
OracleTrajectory propagate(const std::map<DeviceId, std::vector<FlowRule>>& tables,
                           const Topology& topo, PacketHeader header, DeviceId device,
                           PortId in_port);

// Linear scan keeping the (priority, cookie, install_time)-max matching rule.
const FlowRule* best_rule(const std::vector<FlowRule>& rules, const PacketHeader& h);

// Reference FlowMod replay on a plain map keyed by (match, priority).
class TableReplay {
 public:
  void apply(const FlowMod& mod, SimTime now);
  // rules as an unordered multiset-comparable canonical vector
  std::vector<FlowRule> rules() const;

 private:
  std::map<std::pair<HeaderSpace, std::uint32_t>, FlowRule> rules_;
};

bool same_rules(const std::vector<FlowRule>& a, const std::vector<FlowRule>& b);

// BFS distances with an adjacency list built from scratch.
std::map<DeviceId, unsigned> bfs_distances(const Topology& topo, DeviceId from);

// Literal transcription of the normal-extractor pseudocode for one member
// trajectory, plus the per-class aggregate over a region.
std::set<DeviceId> normal_extractor(const Trajectory& t,
                                    const gwardar::trajectory::TrajectoryStore& store,
                                    const gwardar::interceptor::VirtualReplica& replica,
                                    const gwardar::normal::TimeWindow& window);
std::map<gwardar::trajectory::HeaderClass, std::set<DeviceId>> normal_model(
    const gwardar::normal::ScanningRegion& region,
    const gwardar::trajectory::TrajectoryStore& store,
    const gwardar::interceptor::VirtualReplica& replica,
    const gwardar::normal::TimeWindow& window);

// Exhaustive (sample_rate = 1) region identification.
std::vector<std::set<DeviceId>> regions_exhaustive(
    const gwardar::trajectory::TrajectoryStore& store, const Topology& topo, double threshold);

// Exhaustive per-(ingress, prefix) reachability findings: (ingress, prefix,
// grey) tuples; absent means delivered to the right attachment.
std::vector<std::tuple<DeviceId, Prefix, bool>> consistency_findings(
    const std::map<DeviceId, FlowTable>& tables, const Topology& topo,
    const std::map<Prefix, DeviceId>& prefixes);

bool same_trajectory(const Trajectory& a, const OracleTrajectory& b);

}  // namespace oracles

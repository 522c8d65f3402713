#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "trajectory.hpp"

// Phase-I learning: scanning-region identification from trajectory density
// and the time-dependent normal model per trajectory class, built from both
// the actual store (Normal-A) and the replica's expected trajectories
// (Normal-E).

namespace gwardar::normal {

using namespace gwardar::netmodel;
using dataplane::Terminal;
using dataplane::Trajectory;
using interceptor::VirtualReplica;
using trajectory::HeaderClass;
using trajectory::TrajectoryStore;

struct TimeWindow {
  SimTime start = 0;
  SimTime length = 0;

  bool contains(SimTime t) const { return t >= start && t < start + length; }
};

struct ScanningRegion {
  std::uint32_t id = 0;
  std::set<DeviceId> devices;
  std::vector<PacketId> member_trajectories;  // sampled trajectories intersecting the region
  std::set<HeaderClass> member_classes;
  // observed ingress points per member class; lets the expected-side
  // extractor mirror the actual one without store access
  std::map<HeaderClass, std::set<std::pair<DeviceId, PortId>>> class_ingresses;
  double density_score = 0.0;

  bool covers_any(const std::vector<DeviceId>& path) const;
};

// How a class's trajectories normally end: terminal kind plus final device.
struct TerminalSig {
  Terminal terminal = Terminal::Delivered;
  DeviceId final_device = 0;

  auto operator<=>(const TerminalSig&) const = default;
};

struct ClassNormal {
  std::set<DeviceId> devices;       // the Normal set
  std::set<TerminalSig> terminals;  // learned dispositions
  bool header_stable = true;        // no in-flight header mutation observed

  void merge(const ClassNormal& other);
};

struct NormalModel {
  std::uint32_t region_id = 0;
  std::map<HeaderClass, ClassNormal> per_class;
  TimeWindow window;
  SimTime built_at = 0;

  json to_json() const;
  static NormalModel from_json(const json& j);
};

// Samples trajectories at `sample_rate` (seeded), counts per-device traversal
// frequency, and forms one region per connected component of the topology
// induced on devices whose frequency reaches threshold * max_frequency.
std::vector<ScanningRegion> identify_scanning_regions(const TrajectoryStore& store,
                                                      const Topology& topology, double threshold,
                                                      double sample_rate, Rng& rng);

// Normal-A extractor for one region. For every device FD(x) on a member
// trajectory, every device FD(y) at topology distance >= 2 contributes the
// forwarding devices of the stored actual trajectories that carry the
// find_packet(x, y) class from x, restricted to hops inside the window.
// The Normal set always includes the member trajectory's own devices.
NormalModel build_normal_model(const ScanningRegion& region, const TrajectoryStore& store,
                               const VirtualReplica& replica, const TimeWindow& window);

// Normal-E counterpart: sub-trajectories come from expected propagation over
// the replica instead of the actual store.
NormalModel build_expected_normal(const ScanningRegion& region, const VirtualReplica& replica,
                                  const TimeWindow& window);

bool is_normal(const NormalModel& model, const HeaderClass& cls, DeviceId device,
               bool unknown_class_verdict = false);

}  // namespace gwardar::normal

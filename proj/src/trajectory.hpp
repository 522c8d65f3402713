#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dataplane.hpp"
#include "interceptor.hpp"

// Phase-I/II trajectory machinery: the actual/expected trajectory stores and
// header-space reachability over the virtual replica. Header-space analysis
// is realized as concrete-representative propagation per header class: with
// single-table devices and prefix matches one representative per class takes
// the same rule sequence as every other member.

namespace gwardar::trajectory {

using namespace gwardar::netmodel;
using dataplane::Terminal;
using dataplane::Trajectory;
using dataplane::TrajectoryHop;
using interceptor::VirtualReplica;

// Proto used for probe packets and find_packet representatives; the traffic
// generator emits the same value by default so probe classes line up with
// observed ones.
inline constexpr std::uint8_t kDefaultProbeProto = 6;

// Trajectory class key: (destination prefix, proto). Two headers in the same
// class traverse identical rule sequences as long as rules never match finer
// than the host prefixes.
struct HeaderClass {
  Prefix dst_prefix;
  std::uint8_t proto = 0;

  std::string key() const { return dst_prefix.to_string() + "|" + std::to_string(proto); }
  HeaderSpace space() const { return HeaderSpace::dst_prefix(dst_prefix, proto); }
  static HeaderClass parse(const std::string& key);

  auto operator<=>(const HeaderClass&) const = default;
};

// Maps concrete headers to classes via longest-prefix match over the host
// prefixes; unattached destinations fall back to their /32.
class HeaderClassifier {
 public:
  HeaderClassifier() = default;
  explicit HeaderClassifier(const Topology& topo);

  HeaderClass classify(const PacketHeader& h) const;
  const std::vector<Prefix>& prefixes() const { return prefixes_; }

 private:
  std::vector<Prefix> prefixes_;  // sorted by (len desc, addr)
};

enum class StoreRole : std::uint8_t { ActualDB, ExpectedDB };

struct ReplayEvidence {
  PacketId packet_id = 0;
  Trajectory original;
  Trajectory duplicate;
};

struct RecordResult {
  bool accepted = false;
  bool duplicate = false;
};

class TrajectoryStore {
 public:
  TrajectoryStore(StoreRole role, HeaderClassifier classifier)
      : role_(role), classifier_(std::move(classifier)) {}

  // Indexes a complete trajectory by packet id and class. A duplicate packet
  // id is rejected and queued as replay evidence for the detection engine.
  RecordResult record_actual(const Trajectory& t);

  const Trajectory* find(PacketId id) const;
  const std::vector<PacketId>& of_class(const HeaderClass& c) const;
  std::vector<HeaderClass> classes() const;
  std::vector<HeaderClass> classes_crossing(DeviceId d) const;
  const std::map<HeaderClass, std::vector<PacketId>>& by_class() const { return by_class_; }

  HeaderClass class_of(const Trajectory& t) const;
  const HeaderClassifier& classifier() const { return classifier_; }

  std::size_t size() const { return by_packet_.size(); }
  bool empty() const { return by_packet_.empty(); }
  StoreRole role() const { return role_; }

  std::vector<ReplayEvidence> drain_replay_evidence();

  // Ordered iteration in record order.
  const std::vector<PacketId>& record_order() const { return order_; }

  std::string to_ndjson() const;
  static TrajectoryStore from_ndjson(StoreRole role, HeaderClassifier classifier,
                                     const std::string& text);

 private:
  StoreRole role_;
  HeaderClassifier classifier_;
  std::map<PacketId, Trajectory> by_packet_;
  std::map<HeaderClass, std::vector<PacketId>> by_class_;
  std::vector<PacketId> order_;
  std::vector<ReplayEvidence> replay_evidence_;
};

// One hop of a symbolic walk, with the rule that decided it.
struct ExpectedHop {
  TrajectoryHop hop;
  const FlowRule* rule = nullptr;  // null on table miss
};

struct ExpectedWalk {
  Trajectory trajectory;
  std::vector<ExpectedHop> detail;
};

// Deterministic propagation of a header through the replica tables with the
// same lookup semantics as the live data plane.
Trajectory expected_trajectory(const VirtualReplica& replica, const PacketHeader& header,
                               DeviceId ingress_device, PortId ingress_port);
ExpectedWalk expected_walk(const VirtualReplica& replica, const PacketHeader& header,
                           DeviceId ingress_device, PortId ingress_port);

// A concrete header that the current replica delivers from a host port at
// `source` to a host prefix at `destination`; lowest-address representative
// of the first prefix that works. The ingress chosen for the walk is the
// source's first host port (or port 0 when the source has none).
std::optional<PacketHeader> find_packet(const VirtualReplica& replica, DeviceId source,
                                        DeviceId destination);

// Ingress used by find_packet and probe construction for packets sourced at
// a device.
std::pair<DeviceId, PortId> source_ingress(const Topology& topo, DeviceId source);

}  // namespace gwardar::trajectory

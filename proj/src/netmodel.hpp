#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "util.hpp"

// Core domain types shared by every other module: headers, header spaces,
// flow rules and tables, FlowMod messages, and the physical topology.

namespace gwardar::netmodel {

using nlohmann::json;

using DeviceId = std::uint32_t;
using PortId = std::uint16_t;
using Cookie = std::uint64_t;
using PacketId = std::uint64_t;

// Cookie namespaces. The top nibble identifies the control-plane family;
// Gwardar treats everything in it as "installed by the NOS". The attacker
// sub-range exists only so the harness can keep ground truth.
inline constexpr Cookie kCookieControllerBase = 0x1000'0000'0000'0000ull;
inline constexpr Cookie kCookieAttackerBase = 0x1A00'0000'0000'0000ull;
inline constexpr Cookie kCookieGwardarBase = 0x2000'0000'0000'0000ull;

inline bool cookie_is_control_plane(Cookie c) { return (c >> 60) == 0x1; }
inline bool cookie_is_gwardar(Cookie c) { return (c >> 60) == 0x2; }

// Priority class used by Gwardar's inspection and protective rules; policy
// composition never displaces rules at or above it.
inline constexpr std::uint32_t kGwardarHighPriority = 0x4000'0000u;

struct PacketHeader {
  std::uint32_t src_addr = 0;
  std::uint32_t dst_addr = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t proto = 0;
  std::uint64_t payload_tag = 0;  // immutable under honest forwarding
  PacketId packet_id = 0;         // unique per injected packet

  bool operator==(const PacketHeader&) const = default;
};

// Matchable field content of a header (everything except packet_id). Used
// when deciding whether a device rewrote a packet in flight.
inline bool same_content(const PacketHeader& a, const PacketHeader& b) {
  return a.src_addr == b.src_addr && a.dst_addr == b.dst_addr && a.src_port == b.src_port &&
         a.dst_port == b.dst_port && a.proto == b.proto && a.payload_tag == b.payload_tag;
}

enum class Field : std::uint8_t { SrcAddr, DstAddr, SrcPort, DstPort, Proto, PayloadTag };

const char* field_name(Field f);
Field field_from_name(const std::string& name);

// One ternary match field: bits where mask=1 must equal value, the rest are
// wildcarded. Prefixes and exact values are special cases.
struct TernaryField {
  std::uint64_t value = 0;
  std::uint64_t mask = 0;

  static TernaryField wildcard() { return {}; }
  static TernaryField exact(std::uint64_t v, unsigned width);
  static TernaryField prefix_match(std::uint32_t addr, unsigned len);

  bool contains(std::uint64_t v) const { return ((v ^ value) & mask) == 0; }
  bool is_wildcard() const { return mask == 0; }
  // True if every value matched by this field is matched by `other`.
  bool subset_of(const TernaryField& other) const {
    return (mask & other.mask) == other.mask && ((value ^ other.value) & other.mask) == 0;
  }
  static std::optional<TernaryField> intersect(const TernaryField& a, const TernaryField& b);

  auto operator<=>(const TernaryField&) const = default;
};

struct Prefix {
  std::uint32_t addr = 0;
  std::uint8_t len = 0;

  bool contains(std::uint32_t a) const;
  std::string to_string() const;
  static Prefix parse(const std::string& s);

  auto operator<=>(const Prefix&) const = default;
};

// Wildcard-capable match space over the 5-tuple. payload_tag and packet_id
// are never matched by rules.
struct HeaderSpace {
  TernaryField src_addr;
  TernaryField dst_addr;
  TernaryField src_port;
  TernaryField dst_port;
  TernaryField proto;

  static HeaderSpace wildcard() { return {}; }
  static HeaderSpace dst_prefix(const Prefix& p, std::optional<std::uint8_t> proto = {});

  bool contains(const PacketHeader& h) const;
  bool subset_of(const HeaderSpace& other) const;
  static std::optional<HeaderSpace> intersect(const HeaderSpace& a, const HeaderSpace& b);
  // Exact difference a \ b as a set of disjoint header spaces.
  static std::vector<HeaderSpace> subtract(const HeaderSpace& a, const HeaderSpace& b);

  auto operator<=>(const HeaderSpace&) const = default;
};

enum class ActionKind : std::uint8_t { Forward, Drop, Rewrite };

struct Action {
  ActionKind kind = ActionKind::Drop;
  PortId port = 0;            // Forward
  Field field = Field::DstAddr;  // Rewrite
  std::uint64_t value = 0;       // Rewrite

  static Action forward(PortId p) { return {ActionKind::Forward, p, Field::DstAddr, 0}; }
  static Action drop() { return {ActionKind::Drop, 0, Field::DstAddr, 0}; }
  static Action rewrite(Field f, std::uint64_t v) { return {ActionKind::Rewrite, 0, f, v}; }

  bool operator==(const Action&) const = default;
};

// Valid shapes: empty (drop), or zero or more Rewrites followed by exactly
// one Forward or Drop.
bool valid_action_list(std::span<const Action> actions);

struct FlowRule {
  HeaderSpace match;
  std::uint32_t priority = 0;
  std::vector<Action> actions;
  Cookie cookie = 0;
  SimTime install_time = 0;

  bool operator==(const FlowRule&) const = default;
};

enum class FlowModOp : std::uint8_t { Add, Modify, Delete };

struct FlowMod {
  DeviceId device = 0;
  FlowModOp op = FlowModOp::Add;
  HeaderSpace match;
  std::uint32_t priority = 0;
  bool strict = false;  // Delete only: exact (match, priority)
  std::vector<Action> actions;
  Cookie cookie = 0;
  // Set by restoration so a replayed snapshot reproduces rule timestamps
  // bit for bit; normal adds leave it empty and stamp the message time.
  std::optional<SimTime> install_time;

  static FlowMod add(DeviceId d, FlowRule r);
  static FlowMod del_all(DeviceId d);
  static FlowMod del_strict(DeviceId d, HeaderSpace match, std::uint32_t priority, Cookie c);

  bool operator==(const FlowMod&) const = default;
};

// Per-device prioritized match->action state. Kept in canonical order
// (priority desc, cookie desc, install_time desc, match) so equality is
// bit-level and lookup order realizes the lexicographic-max contract.
class FlowTable {
 public:
  void apply(const FlowMod& mod, SimTime now);
  const FlowRule* lookup(const PacketHeader& h) const;
  const std::vector<FlowRule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  void clear() { rules_.clear(); }

  bool operator==(const FlowTable&) const = default;

 private:
  std::vector<FlowRule> rules_;
};

struct HostAttachment {
  Prefix prefix;
  DeviceId device = 0;
  PortId port = 0;

  bool operator==(const HostAttachment&) const = default;
};

class Topology {
 public:
  void add_device(DeviceId id, PortId port_count);
  void add_link(DeviceId a, PortId ap, DeviceId b, PortId bp);
  void attach_host(const Prefix& p, DeviceId d, PortId port);

  bool has_device(DeviceId id) const { return ports_.count(id) != 0; }
  PortId port_count(DeviceId id) const;
  std::vector<DeviceId> devices() const;
  std::size_t device_count() const { return ports_.size(); }

  std::optional<std::pair<DeviceId, PortId>> peer(DeviceId d, PortId p) const;
  std::vector<std::pair<DeviceId, PortId>> neighbors(DeviceId d) const;  // (peer, local port)
  const std::vector<HostAttachment>& hosts() const { return hosts_; }
  std::optional<HostAttachment> host_at(DeviceId d, PortId p) const;
  std::vector<HostAttachment> hosts_of(DeviceId d) const;

  // BFS hop distances from `from`; unreachable devices are absent.
  std::map<DeviceId, std::uint32_t> hop_distances(DeviceId from) const;
  bool connected() const;

  json to_json() const;
  static Topology from_json(const json& j);

  bool operator==(const Topology&) const = default;

 private:
  std::map<DeviceId, PortId> ports_;
  std::map<std::pair<DeviceId, PortId>, std::pair<DeviceId, PortId>> link_end_;
  std::vector<HostAttachment> hosts_;
};

// True iff every field of `header` lies inside the corresponding mask.
bool header_matches(const HeaderSpace& rule_match, const PacketHeader& header);

// Matching rule with maximal (priority, cookie, install_time); null if none.
const FlowRule* highest_priority_rule(std::span<const FlowRule> table, const PacketHeader& header);

// JSON forms shared by the topology file, FlowMod log, and snapshots.
json header_to_json(const PacketHeader& h);
PacketHeader header_from_json(const json& j);
json space_to_json(const HeaderSpace& s);
HeaderSpace space_from_json(const json& j);
json action_to_json(const Action& a);
Action action_from_json(const json& j);
json rule_to_json(const FlowRule& r);
FlowRule rule_from_json(const json& j);
json flow_mod_to_json(const FlowMod& m);
FlowMod flow_mod_from_json(const json& j);
json tables_to_json(const std::map<DeviceId, FlowTable>& tables);
std::map<DeviceId, FlowTable> tables_from_json(const json& j);

}  // namespace gwardar::netmodel

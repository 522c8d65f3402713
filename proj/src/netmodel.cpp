#include "netmodel.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace gwardar::netmodel {

namespace {

constexpr unsigned kFieldWidth[5] = {32, 32, 16, 16, 8};

std::uint64_t width_mask(unsigned width) {
  return width >= 64 ? ~0ull : ((1ull << width) - 1);
}

const TernaryField& field_of(const HeaderSpace& s, int i) {
  switch (i) {
    case 0: return s.src_addr;
    case 1: return s.dst_addr;
    case 2: return s.src_port;
    case 3: return s.dst_port;
    default: return s.proto;
  }
}

TernaryField& field_of(HeaderSpace& s, int i) {
  switch (i) {
    case 0: return s.src_addr;
    case 1: return s.dst_addr;
    case 2: return s.src_port;
    case 3: return s.dst_port;
    default: return s.proto;
  }
}

std::uint64_t header_field(const PacketHeader& h, int i) {
  switch (i) {
    case 0: return h.src_addr;
    case 1: return h.dst_addr;
    case 2: return h.src_port;
    case 3: return h.dst_port;
    default: return h.proto;
  }
}

}  // namespace

const char* field_name(Field f) {
  switch (f) {
    case Field::SrcAddr: return "src_addr";
    case Field::DstAddr: return "dst_addr";
    case Field::SrcPort: return "src_port";
    case Field::DstPort: return "dst_port";
    case Field::Proto: return "proto";
    case Field::PayloadTag: return "payload_tag";
  }
  return "dst_addr";
}

Field field_from_name(const std::string& name) {
  for (auto f : {Field::SrcAddr, Field::DstAddr, Field::SrcPort, Field::DstPort, Field::Proto,
                 Field::PayloadTag}) {
    if (name == field_name(f)) return f;
  }
  fail(Err::ParseError, "unknown field name: " + name);
}

TernaryField TernaryField::exact(std::uint64_t v, unsigned width) {
  return {v & width_mask(width), width_mask(width)};
}

TernaryField TernaryField::prefix_match(std::uint32_t addr, unsigned len) {
  if (len > 32) fail(Err::InvalidArgument, "prefix length > 32");
  std::uint64_t m = len == 0 ? 0 : (width_mask(len) << (32 - len)) & width_mask(32);
  return {addr & m, m};
}

std::optional<TernaryField> TernaryField::intersect(const TernaryField& a, const TernaryField& b) {
  if (((a.value ^ b.value) & a.mask & b.mask) != 0) return std::nullopt;
  TernaryField r;
  r.mask = a.mask | b.mask;
  r.value = (a.value & a.mask) | (b.value & b.mask);
  return r;
}

bool Prefix::contains(std::uint32_t a) const {
  return TernaryField::prefix_match(addr, len).contains(a);
}

std::string Prefix::to_string() const {
  std::ostringstream os;
  os << ((addr >> 24) & 0xff) << '.' << ((addr >> 16) & 0xff) << '.' << ((addr >> 8) & 0xff) << '.'
     << (addr & 0xff) << '/' << int(len);
  return os.str();
}

Prefix Prefix::parse(const std::string& s) {
  unsigned a = 0, b = 0, c = 0, d = 0, len = 0;
  char dot1, dot2, dot3, slash;
  std::istringstream is(s);
  if (!(is >> a >> dot1 >> b >> dot2 >> c >> dot3 >> d >> slash >> len) || dot1 != '.' ||
      dot2 != '.' || dot3 != '.' || slash != '/' || a > 255 || b > 255 || c > 255 || d > 255 ||
      len > 32) {
    fail(Err::ParseError, "bad prefix: " + s);
  }
  std::uint32_t addr = (a << 24) | (b << 16) | (c << 8) | d;
  Prefix p{addr, static_cast<std::uint8_t>(len)};
  // normalize host bits
  p.addr = TernaryField::prefix_match(addr, len).value & 0xffffffffu;
  return p;
}

HeaderSpace HeaderSpace::dst_prefix(const Prefix& p, std::optional<std::uint8_t> proto) {
  HeaderSpace s;
  s.dst_addr = TernaryField::prefix_match(p.addr, p.len);
  if (proto) s.proto = TernaryField::exact(*proto, 8);
  return s;
}

bool HeaderSpace::contains(const PacketHeader& h) const {
  for (int i = 0; i < 5; ++i) {
    if (!field_of(*this, i).contains(header_field(h, i))) return false;
  }
  return true;
}

bool HeaderSpace::subset_of(const HeaderSpace& other) const {
  for (int i = 0; i < 5; ++i) {
    if (!field_of(*this, i).subset_of(field_of(other, i))) return false;
  }
  return true;
}

std::optional<HeaderSpace> HeaderSpace::intersect(const HeaderSpace& a, const HeaderSpace& b) {
  HeaderSpace r;
  for (int i = 0; i < 5; ++i) {
    auto f = TernaryField::intersect(field_of(a, i), field_of(b, i));
    if (!f) return std::nullopt;
    field_of(r, i) = *f;
  }
  return r;
}

std::vector<HeaderSpace> HeaderSpace::subtract(const HeaderSpace& a, const HeaderSpace& b) {
  auto common = intersect(a, b);
  if (!common) return {a};
  std::vector<HeaderSpace> out;
  // Peel the intersection off one constrained bit at a time: for each bit b
  // fixes inside a's wildcard area, emit the piece of `a` where that bit
  // differs and all previously peeled bits agree.
  HeaderSpace pinned = a;
  for (int i = 0; i < 5; ++i) {
    const TernaryField& bf = field_of(b, i);
    const TernaryField& af = field_of(a, i);
    std::uint64_t extra = bf.mask & ~af.mask & width_mask(kFieldWidth[i]);
    for (unsigned bit = kFieldWidth[i]; bit-- > 0;) {
      std::uint64_t bitmask = 1ull << bit;
      if (!(extra & bitmask)) continue;
      HeaderSpace piece = pinned;
      TernaryField& pf = field_of(piece, i);
      pf.mask |= bitmask;
      pf.value = (pf.value & ~bitmask) | (~bf.value & bitmask);
      out.push_back(piece);
      TernaryField& pn = field_of(pinned, i);
      pn.mask |= bitmask;
      pn.value = (pn.value & ~bitmask) | (bf.value & bitmask);
    }
  }
  return out;
}

bool valid_action_list(std::span<const Action> actions) {
  if (actions.empty()) return true;  // empty list means drop
  for (std::size_t i = 0; i + 1 < actions.size(); ++i) {
    if (actions[i].kind != ActionKind::Rewrite) return false;
  }
  auto last = actions.back().kind;
  return last == ActionKind::Forward || last == ActionKind::Drop;
}

FlowMod FlowMod::add(DeviceId d, FlowRule r) {
  FlowMod m;
  m.device = d;
  m.op = FlowModOp::Add;
  m.match = r.match;
  m.priority = r.priority;
  m.actions = std::move(r.actions);
  m.cookie = r.cookie;
  return m;
}

FlowMod FlowMod::del_all(DeviceId d) {
  FlowMod m;
  m.device = d;
  m.op = FlowModOp::Delete;
  m.match = HeaderSpace::wildcard();
  return m;
}

FlowMod FlowMod::del_strict(DeviceId d, HeaderSpace match, std::uint32_t priority, Cookie c) {
  FlowMod m;
  m.device = d;
  m.op = FlowModOp::Delete;
  m.match = std::move(match);
  m.priority = priority;
  m.strict = true;
  m.cookie = c;
  return m;
}

namespace {

// Canonical table order. Lookup takes the first match, which realizes the
// maximal (priority, cookie, install_time) contract.
bool rule_order(const FlowRule& a, const FlowRule& b) {
  auto key = [](const FlowRule& r) {
    return std::make_tuple(r.priority, r.cookie, r.install_time);
  };
  if (key(a) != key(b)) return key(a) > key(b);
  return a.match < b.match;
}

}  // namespace

void FlowTable::apply(const FlowMod& mod, SimTime now) {
  switch (mod.op) {
    case FlowModOp::Add: {
      if (!valid_action_list(mod.actions)) fail(Err::InvalidArgument, "malformed action list");
      // duplicate-free on (match, priority): add replaces
      std::erase_if(rules_, [&](const FlowRule& r) {
        return r.match == mod.match && r.priority == mod.priority;
      });
      FlowRule r;
      r.match = mod.match;
      r.priority = mod.priority;
      r.actions = mod.actions;
      r.cookie = mod.cookie;
      r.install_time = mod.install_time.value_or(now);
      rules_.insert(std::upper_bound(rules_.begin(), rules_.end(), r, rule_order), std::move(r));
      break;
    }
    case FlowModOp::Modify: {
      if (!valid_action_list(mod.actions)) fail(Err::InvalidArgument, "malformed action list");
      bool changed = false;
      for (auto& r : rules_) {
        if (r.match == mod.match && r.priority == mod.priority) {
          r.actions = mod.actions;
          r.cookie = mod.cookie;
          changed = true;
        }
      }
      if (changed) std::sort(rules_.begin(), rules_.end(), rule_order);
      break;
    }
    case FlowModOp::Delete: {
      if (mod.strict) {
        std::erase_if(rules_, [&](const FlowRule& r) {
          return r.match == mod.match && r.priority == mod.priority;
        });
      } else {
        std::erase_if(rules_, [&](const FlowRule& r) { return r.match.subset_of(mod.match); });
      }
      break;
    }
  }
}

const FlowRule* FlowTable::lookup(const PacketHeader& h) const {
  for (const auto& r : rules_) {
    if (r.match.contains(h)) return &r;
  }
  return nullptr;
}

void Topology::add_device(DeviceId id, PortId port_count) {
  if (ports_.count(id)) fail(Err::InvalidArgument, "duplicate device id");
  ports_[id] = port_count;
}

PortId Topology::port_count(DeviceId id) const {
  auto it = ports_.find(id);
  if (it == ports_.end()) fail(Err::UnknownDevice, "unknown device");
  return it->second;
}

std::vector<DeviceId> Topology::devices() const {
  std::vector<DeviceId> out;
  out.reserve(ports_.size());
  for (const auto& [id, _] : ports_) out.push_back(id);
  return out;
}

void Topology::add_link(DeviceId a, PortId ap, DeviceId b, PortId bp) {
  if (!has_device(a) || !has_device(b)) fail(Err::UnknownDevice, "link endpoint unknown");
  if (link_end_.count({a, ap}) || link_end_.count({b, bp}))
    fail(Err::InvalidArgument, "port already linked");
  if (host_at(a, ap) || host_at(b, bp)) fail(Err::InvalidArgument, "port hosts a prefix");
  link_end_[{a, ap}] = {b, bp};
  link_end_[{b, bp}] = {a, ap};
}

void Topology::attach_host(const Prefix& p, DeviceId d, PortId port) {
  if (!has_device(d)) fail(Err::UnknownDevice, "host device unknown");
  if (link_end_.count({d, port})) fail(Err::InvalidArgument, "host port already linked");
  for (const auto& h : hosts_) {
    if (h.prefix == p) fail(Err::InvalidArgument, "prefix attached twice: " + p.to_string());
    if (h.device == d && h.port == port)
      fail(Err::InvalidArgument, "host port already attached");
  }
  hosts_.push_back({p, d, port});
}

std::optional<std::pair<DeviceId, PortId>> Topology::peer(DeviceId d, PortId p) const {
  auto it = link_end_.find({d, p});
  if (it == link_end_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<DeviceId, PortId>> Topology::neighbors(DeviceId d) const {
  std::vector<std::pair<DeviceId, PortId>> out;
  for (const auto& [from, to] : link_end_) {
    if (from.first == d) out.emplace_back(to.first, from.second);
  }
  return out;
}

std::optional<HostAttachment> Topology::host_at(DeviceId d, PortId p) const {
  for (const auto& h : hosts_) {
    if (h.device == d && h.port == p) return h;
  }
  return std::nullopt;
}

std::vector<HostAttachment> Topology::hosts_of(DeviceId d) const {
  std::vector<HostAttachment> out;
  for (const auto& h : hosts_) {
    if (h.device == d) out.push_back(h);
  }
  std::sort(out.begin(), out.end(),
            [](const HostAttachment& a, const HostAttachment& b) { return a.prefix < b.prefix; });
  return out;
}

std::map<DeviceId, std::uint32_t> Topology::hop_distances(DeviceId from) const {
  std::map<DeviceId, std::uint32_t> dist;
  if (!has_device(from)) return dist;
  std::deque<DeviceId> q{from};
  dist[from] = 0;
  while (!q.empty()) {
    DeviceId d = q.front();
    q.pop_front();
    for (const auto& [n, _] : neighbors(d)) {
      if (!dist.count(n)) {
        dist[n] = dist[d] + 1;
        q.push_back(n);
      }
    }
  }
  return dist;
}

bool Topology::connected() const {
  if (ports_.empty()) return true;
  return hop_distances(ports_.begin()->first).size() == ports_.size();
}

bool header_matches(const HeaderSpace& rule_match, const PacketHeader& header) {
  return rule_match.contains(header);
}

const FlowRule* highest_priority_rule(std::span<const FlowRule> table, const PacketHeader& header) {
  const FlowRule* best = nullptr;
  auto key = [](const FlowRule& r) {
    return std::make_tuple(r.priority, r.cookie, r.install_time);
  };
  for (const auto& r : table) {
    if (!r.match.contains(header)) continue;
    if (!best || key(r) > key(*best)) best = &r;
  }
  return best;
}

// ---- JSON ----

namespace {

json ternary_to_json(const TernaryField& f) {
  return json{{"value", f.value}, {"mask", f.mask}};
}

TernaryField ternary_from_json(const json& j) {
  return {j.at("value").get<std::uint64_t>(), j.at("mask").get<std::uint64_t>()};
}

}  // namespace

json header_to_json(const PacketHeader& h) {
  return json{{"src_addr", h.src_addr}, {"dst_addr", h.dst_addr}, {"src_port", h.src_port},
              {"dst_port", h.dst_port}, {"proto", h.proto},       {"payload_tag", h.payload_tag},
              {"packet_id", h.packet_id}};
}

PacketHeader header_from_json(const json& j) {
  PacketHeader h;
  h.src_addr = j.at("src_addr").get<std::uint32_t>();
  h.dst_addr = j.at("dst_addr").get<std::uint32_t>();
  h.src_port = j.at("src_port").get<std::uint16_t>();
  h.dst_port = j.at("dst_port").get<std::uint16_t>();
  h.proto = j.at("proto").get<std::uint8_t>();
  h.payload_tag = j.at("payload_tag").get<std::uint64_t>();
  h.packet_id = j.at("packet_id").get<PacketId>();
  return h;
}

json space_to_json(const HeaderSpace& s) {
  return json{{"src_addr", ternary_to_json(s.src_addr)},
              {"dst_addr", ternary_to_json(s.dst_addr)},
              {"src_port", ternary_to_json(s.src_port)},
              {"dst_port", ternary_to_json(s.dst_port)},
              {"proto", ternary_to_json(s.proto)}};
}

HeaderSpace space_from_json(const json& j) {
  HeaderSpace s;
  s.src_addr = ternary_from_json(j.at("src_addr"));
  s.dst_addr = ternary_from_json(j.at("dst_addr"));
  s.src_port = ternary_from_json(j.at("src_port"));
  s.dst_port = ternary_from_json(j.at("dst_port"));
  s.proto = ternary_from_json(j.at("proto"));
  return s;
}

json action_to_json(const Action& a) {
  switch (a.kind) {
    case ActionKind::Forward: return json{{"type", "forward"}, {"port", a.port}};
    case ActionKind::Drop: return json{{"type", "drop"}};
    case ActionKind::Rewrite:
      return json{{"type", "rewrite"}, {"field", field_name(a.field)}, {"value", a.value}};
  }
  return json{{"type", "drop"}};
}

Action action_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "forward") return Action::forward(j.at("port").get<PortId>());
  if (type == "drop") return Action::drop();
  if (type == "rewrite")
    return Action::rewrite(field_from_name(j.at("field").get<std::string>()),
                           j.at("value").get<std::uint64_t>());
  fail(Err::ParseError, "unknown action type: " + type);
}

json rule_to_json(const FlowRule& r) {
  json actions = json::array();
  for (const auto& a : r.actions) actions.push_back(action_to_json(a));
  return json{{"match", space_to_json(r.match)},
              {"priority", r.priority},
              {"actions", actions},
              {"cookie", r.cookie},
              {"install_time", r.install_time}};
}

FlowRule rule_from_json(const json& j) {
  FlowRule r;
  r.match = space_from_json(j.at("match"));
  r.priority = j.at("priority").get<std::uint32_t>();
  for (const auto& a : j.at("actions")) r.actions.push_back(action_from_json(a));
  r.cookie = j.at("cookie").get<Cookie>();
  r.install_time = j.at("install_time").get<SimTime>();
  return r;
}

json flow_mod_to_json(const FlowMod& m) {
  const char* op = m.op == FlowModOp::Add ? "add" : m.op == FlowModOp::Modify ? "modify" : "delete";
  json actions = json::array();
  for (const auto& a : m.actions) actions.push_back(action_to_json(a));
  json j{{"device", m.device}, {"op", op},
         {"match", space_to_json(m.match)}, {"priority", m.priority},
         {"strict", m.strict}, {"actions", actions}, {"cookie", m.cookie}};
  if (m.install_time) j["install_time"] = *m.install_time;
  return j;
}

FlowMod flow_mod_from_json(const json& j) {
  FlowMod m;
  m.device = j.at("device").get<DeviceId>();
  const std::string op = j.at("op").get<std::string>();
  m.op = op == "add" ? FlowModOp::Add : op == "modify" ? FlowModOp::Modify : FlowModOp::Delete;
  m.match = space_from_json(j.at("match"));
  m.priority = j.at("priority").get<std::uint32_t>();
  m.strict = j.at("strict").get<bool>();
  for (const auto& a : j.at("actions")) m.actions.push_back(action_from_json(a));
  m.cookie = j.at("cookie").get<Cookie>();
  if (j.contains("install_time")) m.install_time = j.at("install_time").get<SimTime>();
  return m;
}

json tables_to_json(const std::map<DeviceId, FlowTable>& tables) {
  json out = json::object();
  for (const auto& [d, t] : tables) {
    json rules = json::array();
    for (const auto& r : t.rules()) rules.push_back(rule_to_json(r));
    out[std::to_string(d)] = rules;
  }
  return out;
}

std::map<DeviceId, FlowTable> tables_from_json(const json& j) {
  std::map<DeviceId, FlowTable> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    FlowTable t;
    for (const auto& rj : it.value()) {
      FlowRule r = rule_from_json(rj);
      FlowMod add = FlowMod::add(std::stoul(it.key()), r);
      t.apply(add, r.install_time);
    }
    out[std::stoul(it.key())] = std::move(t);
  }
  return out;
}

json Topology::to_json() const {
  json devices = json::array();
  for (const auto& [id, pc] : ports_) devices.push_back(json{{"id", id}, {"port_count", pc}});
  json links = json::array();
  std::set<std::pair<std::pair<DeviceId, PortId>, std::pair<DeviceId, PortId>>> seen;
  for (const auto& [from, to] : link_end_) {
    auto a = std::min(from, to);
    auto b = std::max(from, to);
    if (seen.insert({a, b}).second) {
      links.push_back(json::array(
          {json::array({a.first, a.second}), json::array({b.first, b.second})}));
    }
  }
  json hosts = json::array();
  for (const auto& h : hosts_) {
    hosts.push_back(json{{"prefix", h.prefix.to_string()}, {"device", h.device}, {"port", h.port}});
  }
  return json{{"devices", devices}, {"links", links}, {"hosts", hosts}};
}

Topology Topology::from_json(const json& j) {
  Topology t;
  try {
    for (const auto& d : j.at("devices")) {
      t.add_device(d.at("id").get<DeviceId>(), d.at("port_count").get<PortId>());
    }
    for (const auto& l : j.at("links")) {
      t.add_link(l.at(0).at(0).get<DeviceId>(), l.at(0).at(1).get<PortId>(),
                 l.at(1).at(0).get<DeviceId>(), l.at(1).at(1).get<PortId>());
    }
    for (const auto& h : j.at("hosts")) {
      t.attach_host(Prefix::parse(h.at("prefix").get<std::string>()),
                    h.at("device").get<DeviceId>(), h.at("port").get<PortId>());
    }
  } catch (const json::exception& e) {
    fail(Err::ParseError, std::string("bad topology json: ") + e.what());
  }
  return t;
}

}  // namespace gwardar::netmodel

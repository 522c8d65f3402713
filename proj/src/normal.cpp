#include "normal.hpp"

#include <algorithm>
#include <deque>

namespace gwardar::normal {

bool ScanningRegion::covers_any(const std::vector<DeviceId>& path) const {
  return std::any_of(path.begin(), path.end(),
                     [this](DeviceId d) { return devices.count(d) != 0; });
}

void ClassNormal::merge(const ClassNormal& other) {
  devices.insert(other.devices.begin(), other.devices.end());
  terminals.insert(other.terminals.begin(), other.terminals.end());
  header_stable = header_stable && other.header_stable;
}

std::vector<ScanningRegion> identify_scanning_regions(const TrajectoryStore& store,
                                                      const Topology& topology, double threshold,
                                                      double sample_rate, Rng& rng) {
  if (store.empty()) fail(Err::EmptyStore, "no trajectories to scan");
  if (threshold <= 0.0) fail(Err::InvalidArgument, "threshold must be > 0");
  if (sample_rate <= 0.0 || sample_rate > 1.0) fail(Err::InvalidArgument, "bad sample rate");

  std::vector<PacketId> sample;
  for (PacketId id : store.record_order()) {
    if (rng.chance(sample_rate)) sample.push_back(id);
  }
  if (sample.empty()) sample.assign(store.record_order().begin(), store.record_order().end());

  std::map<DeviceId, std::size_t> freq;
  for (PacketId id : sample) {
    const Trajectory* t = store.find(id);
    std::set<DeviceId> uniq(t->device_path().begin(), t->device_path().end());
    for (DeviceId d : uniq) freq[d]++;
  }
  std::size_t max_freq = 0;
  for (const auto& [_, f] : freq) max_freq = std::max(max_freq, f);

  std::set<DeviceId> kept;
  for (const auto& [d, f] : freq) {
    if (static_cast<double>(f) >= threshold * static_cast<double>(max_freq)) kept.insert(d);
  }

  // connected components of the topology induced on the kept devices
  std::vector<ScanningRegion> regions;
  std::set<DeviceId> visited;
  for (DeviceId seed : kept) {
    if (visited.count(seed)) continue;
    ScanningRegion r;
    std::deque<DeviceId> q{seed};
    visited.insert(seed);
    while (!q.empty()) {
      DeviceId d = q.front();
      q.pop_front();
      r.devices.insert(d);
      for (const auto& [n, _] : topology.neighbors(d)) {
        if (kept.count(n) && !visited.count(n)) {
          visited.insert(n);
          q.push_back(n);
        }
      }
    }
    double sum = 0.0;
    for (DeviceId d : r.devices) sum += static_cast<double>(freq[d]);
    r.density_score = sum / static_cast<double>(r.devices.size());
    regions.push_back(std::move(r));
  }
  std::sort(regions.begin(), regions.end(), [](const ScanningRegion& a, const ScanningRegion& b) {
    return *a.devices.begin() < *b.devices.begin();
  });

  std::uint32_t next_id = 0;
  for (auto& r : regions) {
    r.id = next_id++;
    for (PacketId id : sample) {
      const Trajectory* t = store.find(id);
      if (r.covers_any(t->device_path())) {
        r.member_trajectories.push_back(id);
        HeaderClass c = store.class_of(*t);
        r.member_classes.insert(c);
        r.class_ingresses[c].insert({t->hops.front().device, t->hops.front().in_port});
      }
    }
  }
  return regions;
}

namespace {

// Devices at topology distance >= 2 from x (unreachable counts as far).
std::vector<DeviceId> far_devices(const Topology& topo, DeviceId x,
                                  const std::map<DeviceId, std::uint32_t>& dist) {
  std::vector<DeviceId> out;
  for (DeviceId y : topo.devices()) {
    auto it = dist.find(y);
    if (it == dist.end() || it->second >= 2) out.push_back(y);
  }
  return out;
}

PacketHeader class_representative(const Topology& topo, const HeaderClass& cls, DeviceId source) {
  PacketHeader h;
  auto hosts = topo.hosts_of(source);
  h.src_addr = hosts.empty() ? 0 : hosts.front().prefix.addr;
  h.dst_addr = cls.dst_prefix.addr;
  h.proto = cls.proto;
  return h;
}

void learn_own(ClassNormal& cn, const Trajectory& t) {
  for (const auto& hop : t.hops) cn.devices.insert(hop.device);
  if (!t.hops.empty()) cn.terminals.insert({t.terminal, t.hops.back().device});
  for (const auto& hop : t.hops) {
    if (!same_content(hop.observed_header, t.hops.front().observed_header)) {
      cn.header_stable = false;
      break;
    }
  }
}

}  // namespace

NormalModel build_normal_model(const ScanningRegion& region, const TrajectoryStore& store,
                               const VirtualReplica& replica, const TimeWindow& window) {
  NormalModel m;
  m.region_id = region.id;
  m.window = window;
  m.built_at = window.start + window.length;

  const Topology& topo = replica.topology;
  std::map<DeviceId, std::map<DeviceId, std::uint32_t>> dist_cache;
  // probe contribution per (x, y): devices on windowed hops of stored
  // trajectories carrying find_packet(x, y)'s class from x
  std::map<std::pair<DeviceId, DeviceId>, std::set<DeviceId>> probe_cache;

  // Members with identical (class, path, terminal, stability) contribute the
  // same union; skipping exact repeats is lossless and keeps rebuilds cheap.
  std::set<std::tuple<HeaderClass, std::vector<DeviceId>, Terminal, bool>> seen;

  for (PacketId pid : region.member_trajectories) {
    const Trajectory* t = store.find(pid);
    if (!t) continue;
    HeaderClass cls = store.class_of(*t);
    bool stable = true;
    for (const auto& hop : t->hops) {
      if (!same_content(hop.observed_header, t->hops.front().observed_header)) {
        stable = false;
        break;
      }
    }
    if (!seen.insert({cls, t->device_path(), t->terminal, stable}).second) continue;
    ClassNormal& cn = m.per_class[cls];
    learn_own(cn, *t);

    std::set<DeviceId> own(t->device_path().begin(), t->device_path().end());
    for (DeviceId x : own) {
      if (!topo.has_device(x)) continue;
      auto& dist = dist_cache[x];
      if (dist.empty()) dist = topo.hop_distances(x);
      for (DeviceId y : far_devices(topo, x, dist)) {
        auto key = std::make_pair(x, y);
        auto cached = probe_cache.find(key);
        if (cached == probe_cache.end()) {
          std::set<DeviceId> contrib;
          if (auto pck = trajectory::find_packet(replica, x, y)) {
            HeaderClass pcls = store.classifier().classify(*pck);
            for (PacketId pid2 : store.of_class(pcls)) {
              const Trajectory* t2 = store.find(pid2);
              if (t2->hops.front().device != x) continue;
              for (const auto& hop : t2->hops) {
                if (window.contains(hop.time)) contrib.insert(hop.device);
              }
            }
          }
          cached = probe_cache.emplace(key, std::move(contrib)).first;
        }
        cn.devices.insert(cached->second.begin(), cached->second.end());
      }
    }
  }
  return m;
}

NormalModel build_expected_normal(const ScanningRegion& region, const VirtualReplica& replica,
                                  const TimeWindow& window) {
  NormalModel m;
  m.region_id = region.id;
  m.window = window;
  m.built_at = window.start + window.length;

  const Topology& topo = replica.topology;
  std::map<DeviceId, std::map<DeviceId, std::uint32_t>> dist_cache;
  std::map<std::pair<DeviceId, DeviceId>, std::set<DeviceId>> probe_cache;

  for (const auto& [cls, ingresses] : region.class_ingresses) {
    ClassNormal& cn = m.per_class[cls];
    for (const auto& [ing_dev, ing_port] : ingresses) {
      if (!topo.has_device(ing_dev) || ing_port >= topo.port_count(ing_dev)) continue;
      Trajectory te = trajectory::expected_trajectory(
          replica, class_representative(topo, cls, ing_dev), ing_dev, ing_port);
      if (te.hops.empty()) continue;
      learn_own(cn, te);

      std::set<DeviceId> own(te.device_path().begin(), te.device_path().end());
      for (DeviceId x : own) {
        auto& dist = dist_cache[x];
        if (dist.empty()) dist = topo.hop_distances(x);
        for (DeviceId y : far_devices(topo, x, dist)) {
          auto key = std::make_pair(x, y);
          auto cached = probe_cache.find(key);
          if (cached == probe_cache.end()) {
            std::set<DeviceId> contrib;
            if (auto pck = trajectory::find_packet(replica, x, y)) {
              auto [sdev, sport] = trajectory::source_ingress(topo, x);
              Trajectory t2 = trajectory::expected_trajectory(replica, *pck, sdev, sport);
              for (const auto& hop : t2.hops) contrib.insert(hop.device);
            }
            cached = probe_cache.emplace(key, std::move(contrib)).first;
          }
          cn.devices.insert(cached->second.begin(), cached->second.end());
        }
      }
    }
  }
  return m;
}

bool is_normal(const NormalModel& model, const HeaderClass& cls, DeviceId device,
               bool unknown_class_verdict) {
  auto it = model.per_class.find(cls);
  if (it == model.per_class.end()) return unknown_class_verdict;
  return it->second.devices.count(device) != 0;
}

json NormalModel::to_json() const {
  json classes = json::object();
  for (const auto& [cls, cn] : per_class) {
    json terms = json::array();
    for (const auto& sig : cn.terminals) {
      terms.push_back(json{{"terminal", dataplane::terminal_name(sig.terminal)},
                           {"device", sig.final_device}});
    }
    classes[cls.key()] = json{{"devices", cn.devices},
                              {"terminals", terms},
                              {"header_stable", cn.header_stable}};
  }
  return json{{"region", region_id},
              {"window", json{{"start", window.start}, {"length", window.length}}},
              {"built_at", built_at},
              {"per_class", classes}};
}

NormalModel NormalModel::from_json(const json& j) {
  NormalModel m;
  m.region_id = j.at("region").get<std::uint32_t>();
  m.window.start = j.at("window").at("start").get<SimTime>();
  m.window.length = j.at("window").at("length").get<SimTime>();
  m.built_at = j.at("built_at").get<SimTime>();
  for (auto it = j.at("per_class").begin(); it != j.at("per_class").end(); ++it) {
    ClassNormal cn;
    for (const auto& d : it.value().at("devices")) cn.devices.insert(d.get<DeviceId>());
    for (const auto& tj : it.value().at("terminals")) {
      cn.terminals.insert({dataplane::terminal_from_name(tj.at("terminal").get<std::string>()),
                           tj.at("device").get<DeviceId>()});
    }
    cn.header_stable = it.value().at("header_stable").get<bool>();
    m.per_class[HeaderClass::parse(it.key())] = std::move(cn);
  }
  return m;
}

}  // namespace gwardar::normal

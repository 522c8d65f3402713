#include "harness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace gwardar::harness {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string part;
  while (std::getline(is, part, sep)) out.push_back(part);
  return out;
}

Topology build_from_edges(std::size_t n, const std::vector<std::pair<DeviceId, DeviceId>>& edges,
                          PortId host_ports) {
  std::vector<PortId> degree(n, 0);
  for (const auto& [a, b] : edges) {
    degree[a]++;
    degree[b]++;
  }
  Topology topo;
  for (DeviceId d = 0; d < n; ++d) {
    topo.add_device(d, static_cast<PortId>(degree[d] + host_ports));
  }
  std::vector<PortId> next_port(n, 0);
  for (const auto& [a, b] : edges) {
    topo.add_link(a, next_port[a]++, b, next_port[b]++);
  }
  return topo;
}

}  // namespace

Topology generate_topology(const std::string& spec, std::uint64_t seed, PortId host_ports) {
  auto parts = split(spec, ':');
  if (parts.size() >= 2 && parts[0] == "file") {
    std::ifstream in(spec.substr(5));
    if (!in) fail(Err::Io, "cannot open topology file: " + spec.substr(5));
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(Err::ParseError, "malformed topology file");
    return Topology::from_json(j);
  }
  if (parts.size() < 3 || parts[0] != "gen") {
    fail(Err::ParseError, "bad topology spec: " + spec);
  }
  const std::string& kind = parts[1];
  std::size_t n = std::stoul(parts[2]);
  if (n < 2) fail(Err::InvalidArgument, "topology needs at least 2 devices");

  std::vector<std::pair<DeviceId, DeviceId>> edges;
  if (kind == "line") {
    for (DeviceId i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  } else if (kind == "ring") {
    for (DeviceId i = 0; i < n; ++i) edges.push_back({i, static_cast<DeviceId>((i + 1) % n)});
  } else if (kind == "random") {
    if (parts.size() < 4) fail(Err::ParseError, "gen:random needs a degree: " + spec);
    std::size_t degree = std::stoul(parts[3]);
    Rng rng(seed);
    std::set<std::pair<DeviceId, DeviceId>> have;
    for (DeviceId i = 1; i < n; ++i) {  // random spanning tree keeps it connected
      DeviceId parent = static_cast<DeviceId>(rng.uniform(i));
      edges.push_back({parent, i});
      have.insert({std::min(parent, i), std::max(parent, i)});
    }
    std::size_t want = std::max<std::size_t>(n - 1, n * degree / 2);
    std::size_t attempts = 0;
    while (have.size() < want && attempts < 40 * n) {
      attempts++;
      DeviceId a = static_cast<DeviceId>(rng.uniform(n));
      DeviceId b = static_cast<DeviceId>(rng.uniform(n));
      if (a == b) continue;
      auto key = std::make_pair(std::min(a, b), std::max(a, b));
      if (!have.insert(key).second) continue;
      edges.push_back({key.first, key.second});
    }
  } else {
    fail(Err::ParseError, "unknown topology kind: " + kind);
  }
  return build_from_edges(n, edges, host_ports);
}

std::vector<Prefix> load_prefix_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Err::Io, "cannot open prefix list: " + path);
  std::vector<Prefix> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    out.push_back(Prefix::parse(line));
  }
  return out;
}

std::map<Prefix, DeviceId> generate_prefixes(Topology& topo, std::size_t per_device,
                                             std::uint64_t seed,
                                             const std::vector<Prefix>& pool) {
  auto devices = topo.devices();
  std::size_t want = devices.size() * per_device;
  std::vector<Prefix> prefixes = pool;
  if (prefixes.empty()) {
    for (std::size_t k = 0; k < want; ++k) {
      std::uint32_t addr = (10u << 24) | (static_cast<std::uint32_t>(k >> 8) << 16) |
                           (static_cast<std::uint32_t>(k & 0xff) << 8);
      prefixes.push_back({addr, 24});
    }
  }

  // uniform random spread: device slots shuffled, one prefix per slot
  std::vector<DeviceId> slots;
  for (std::size_t r = 0; r * devices.size() < prefixes.size(); ++r) {
    slots.insert(slots.end(), devices.begin(), devices.end());
  }
  Rng rng(seed ^ 0x70726566ull);
  for (std::size_t i = slots.size(); i > 1; --i) {
    std::swap(slots[i - 1], slots[rng.uniform(i)]);
  }

  std::map<Prefix, DeviceId> out;
  std::map<DeviceId, PortId> used;
  for (DeviceId d : devices) {
    used[d] = 0;
    for (PortId p = 0; p < topo.port_count(d); ++p) {
      if (topo.peer(d, p) || topo.host_at(d, p)) used[d] = static_cast<PortId>(p + 1);
    }
  }
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    DeviceId d = slots[i];
    PortId port = used[d]++;
    if (port >= topo.port_count(d)) fail(Err::InvalidArgument, "no free host port on device");
    topo.attach_host(prefixes[i], d, port);
    out[prefixes[i]] = d;
  }
  return out;
}

TrafficGen::TrafficGen(const Topology& topo, double rate, std::uint64_t seed, std::uint8_t proto,
                       bool shuffled_cycle)
    : topo_(topo), hosts_(topo.hosts()), rate_(rate), proto_(proto), shuffled_(shuffled_cycle),
      rng_(seed ^ 0x7472616666696371ull) {
  if (rate_ <= 0.0) fail(Err::InvalidArgument, "traffic rate must be > 0");
  if (hosts_.empty()) fail(Err::InvalidArgument, "no host prefixes to draw traffic from");
}

TrafficItem TrafficGen::make_item(SimTime t) {
  std::size_t n = hosts_.size();
  std::size_t src_idx, dst_idx;
  if (shuffled_) {
    // (src, dst) pairs visited once per epoch: stationary with full coverage
    if (epoch_pos_ >= epoch_.size()) {
      if (epoch_.empty()) {
        for (std::size_t s = 0; s < n; ++s) {
          for (std::size_t d = 0; d < n; ++d) {
            if (hosts_[s].device != hosts_[d].device) epoch_.push_back(s * n + d);
          }
        }
      }
      for (std::size_t i = epoch_.size(); i > 1; --i) {
        std::swap(epoch_[i - 1], epoch_[rng_.uniform(i)]);
      }
      epoch_pos_ = 0;
    }
    std::size_t pair = epoch_[epoch_pos_++];
    src_idx = pair / n;
    dst_idx = pair % n;
  } else {
    dst_idx = rng_.uniform(n);
    src_idx = rng_.uniform(n);
    if (hosts_[src_idx].device == hosts_[dst_idx].device) {
      src_idx = (dst_idx + 1 + rng_.uniform(n - 1)) % n;
    }
  }

  const auto& src = hosts_[src_idx];
  const auto& dst = hosts_[dst_idx];
  TrafficItem item;
  item.header.src_addr = src.prefix.addr | static_cast<std::uint32_t>(
                             rng_.uniform(1ull << ( 32 - src.prefix.len)));
  item.header.dst_addr = dst.prefix.addr | static_cast<std::uint32_t>(
                             rng_.uniform(1ull << (32 - dst.prefix.len)));
  item.header.src_port = static_cast<std::uint16_t>(1024 + rng_.uniform(60000));
  item.header.dst_port = static_cast<std::uint16_t>(1024 + rng_.uniform(60000));
  item.header.proto = proto_;
  item.header.payload_tag = rng_.next();
  item.header.packet_id = next_id_++;
  item.device = src.device;
  item.port = src.port;
  item.time = t;
  return item;
}

std::vector<TrafficItem> TrafficGen::until(SimTime end) {
  std::vector<TrafficItem> out;
  while (cursor_ < static_cast<double>(end)) {
    out.push_back(make_item(static_cast<SimTime>(cursor_)));
    cursor_ += 1.0 / rate_;
  }
  return out;
}

std::vector<TrafficItem> generate_traffic(const Topology& topo, double rate, SimTime duration,
                                          std::uint64_t seed, std::uint8_t proto,
                                          bool shuffled_cycle) {
  TrafficGen gen(topo, rate, seed, proto, shuffled_cycle);
  return gen.until(duration);
}

json SimConfig::to_json() const {
  return json{{"seed", seed},
              {"topology", topology},
              {"prefixes_per_device", prefixes_per_device},
              {"prefix_file", prefix_file},
              {"traffic_rate", traffic_rate},
              {"proto", proto},
              {"shuffled_cycle", shuffled_cycle},
              {"loss_probability", loss_probability},
              {"max_warmup", max_warmup},
              {"stabilize_k", stabilize_k},
              {"stabilize_eps", stabilize_eps},
              {"post_attack_duration", post_attack_duration},
              {"preload_models", preload_models},
              {"gwardar", gwardar.to_json()}};
}

SimConfig SimConfig::from_json(const json& j) {
  SimConfig c;
  json merged = SimConfig{}.to_json();
  merged.update(j);
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.topology = merged.at("topology").get<std::string>();
  c.prefixes_per_device = merged.at("prefixes_per_device").get<std::size_t>();
  c.prefix_file = merged.at("prefix_file").get<std::string>();
  c.traffic_rate = merged.at("traffic_rate").get<double>();
  c.proto = merged.at("proto").get<std::uint8_t>();
  c.shuffled_cycle = merged.at("shuffled_cycle").get<bool>();
  c.loss_probability = merged.at("loss_probability").get<double>();
  c.max_warmup = merged.at("max_warmup").get<SimTime>();
  c.stabilize_k = merged.at("stabilize_k").get<std::uint32_t>();
  c.stabilize_eps = merged.at("stabilize_eps").get<double>();
  c.post_attack_duration = merged.at("post_attack_duration").get<SimTime>();
  c.preload_models = merged.at("preload_models").get<std::string>();
  c.gwardar = GwardarConfig::from_json(merged.at("gwardar"));
  return c;
}

ScenarioSpec::Id ScenarioSpec::parse_id(const std::string& s) {
  if (s == "S1") return Id::S1;
  if (s == "S2") return Id::S2;
  if (s == "S3") return Id::S3;
  if (s == "S4") return Id::S4;
  if (s == "S6") return Id::S6;
  fail(Err::ParseError, "unknown scenario id: " + s + " (S1, S2, S3, S4, S6)");
}

const char* ScenarioSpec::id_name(Id id) {
  switch (id) {
    case Id::S1: return "S1";
    case Id::S2: return "S2";
    case Id::S3: return "S3";
    case Id::S4: return "S4";
    case Id::S6: return "S6";
  }
  return "S6";
}

json ScenarioSpec::to_json() const {
  return json{{"id", id_name(id)},
              {"target_count", target_count},
              {"targets", targets},
              {"behavior", dataplane::behavior_name(behavior)},
              {"probability", probability},
              {"start_offset", start_offset},
              {"seed", seed}};
}

ScenarioSpec ScenarioSpec::from_json(const json& j) {
  ScenarioSpec s;
  s.id = parse_id(j.at("id").get<std::string>());
  if (j.contains("target_count")) s.target_count = j.at("target_count").get<std::size_t>();
  if (j.contains("targets")) {
    for (const auto& d : j.at("targets")) s.targets.push_back(d.get<DeviceId>());
  }
  if (j.contains("behavior")) {
    const std::string b = j.at("behavior").get<std::string>();
    if (b == "drop") s.behavior = BehaviorKind::Drop;
    else if (b == "replay") s.behavior = BehaviorKind::Replay;
    else if (b == "misroute") s.behavior = BehaviorKind::Misroute;
    else if (b == "modify") s.behavior = BehaviorKind::Modify;
    else fail(Err::ParseError, "unknown behavior: " + b);
  }
  if (j.contains("probability")) s.probability = j.at("probability").get<double>();
  if (j.contains("start_offset")) s.start_offset = j.at("start_offset").get<SimTime>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

json ExperimentMetrics::to_json() const {
  json attacks_j = json::array();
  for (const auto& a : attacks) {
    attacks_j.push_back(json{{"scenario", a.scenario},
                             {"implanted_at", a.implanted_at},
                             {"detected_at", a.detected_at ? json(*a.detected_at) : json(nullptr)},
                             {"verdict", a.verdict},
                             {"correct", a.correct}});
  }
  json fpr_j = json::array();
  for (const auto& w : fpr_timeline) {
    fpr_j.push_back(json{{"start", w.start}, {"total", w.total}, {"anomalous", w.anomalous},
                         {"rate", w.rate()}});
  }
  json restore_j = json::array();
  for (const auto& r : restore_checks) {
    restore_j.push_back(json{{"tables_match", r.tables_match},
                             {"consistency_ok", r.consistency_ok}});
  }
  json verdicts_j = json::array();
  for (const auto& v : verdicts) verdicts_j.push_back(v.to_json());
  return json{{"attacks", attacks_j},     {"fpr_timeline", fpr_j},
              {"restore_checks", restore_j}, {"verdicts", verdicts_j},
              {"warmup_end", warmup_end}, {"stabilized", stabilized}};
}

void emit_metrics(const ExperimentMetrics& metrics, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  {
    std::ofstream f(dir / "attacks.csv");
    if (!f) fail(Err::Io, "cannot write attacks.csv");
    f << "scenario,implanted_at,detected_at,latency,verdict,correct\n";
    for (const auto& a : metrics.attacks) {
      f << a.scenario << ',' << a.implanted_at << ',';
      if (a.detected_at) {
        f << *a.detected_at << ',' << (*a.detected_at - a.implanted_at) << ',';
      } else {
        f << ",,";
      }
      f << a.verdict << ',' << (a.correct ? "true" : "false") << '\n';
    }
  }
  {
    std::ofstream f(dir / "fpr_timeline.csv");
    if (!f) fail(Err::Io, "cannot write fpr_timeline.csv");
    f << "window_start,trajectories,anomalous,fpr\n";
    char buf[32];
    for (const auto& w : metrics.fpr_timeline) {
      std::snprintf(buf, sizeof(buf), "%.6f", w.rate());
      f << w.start << ',' << w.total << ',' << w.anomalous << ',' << buf << '\n';
    }
  }
  {
    std::ofstream f(dir / "restore.csv");
    if (!f) fail(Err::Io, "cannot write restore.csv");
    f << "index,tables_match,consistency_ok\n";
    for (std::size_t i = 0; i < metrics.restore_checks.size(); ++i) {
      const auto& r = metrics.restore_checks[i];
      f << i << ',' << (r.tables_match ? "true" : "false") << ','
        << (r.consistency_ok ? "true" : "false") << '\n';
    }
  }
}

TestBed::TestBed(const SimConfig& config) : config_(config) {
  Rng root(config.seed);
  topo_ = generate_topology(config.topology, root.fork(1).next(),
                            static_cast<PortId>(config.prefixes_per_device + 2));
  std::vector<Prefix> pool;
  if (!config.prefix_file.empty()) pool = load_prefix_list(config.prefix_file);
  prefixes_ = generate_prefixes(topo_, config.prefixes_per_device, root.fork(2).next(), pool);

  dataplane_ = std::make_unique<DataPlane>(topo_, channel_, root.fork(3).next());
  dataplane_->set_loss_probability(config.loss_probability);
  interceptor_ = std::make_unique<interceptor::Interceptor>(topo_, config.gwardar.snapshot_ring);
  controller_ = std::make_unique<controller::Controller>(topo_, channel_);
  channel_.subscribe([this](const dataplane::FlowModRecord& rec) {
    interceptor_->on_flow_mod(rec);
  });
  channel_.subscribe([this](const dataplane::FlowModRecord& rec) {
    dataplane_->apply_flow_mod(rec.mod, rec.time);
  });

  store_ = std::make_unique<TrajectoryStore>(trajectory::StoreRole::ActualDB,
                                             HeaderClassifier(topo_));

  GwardarConfig g = config.gwardar;
  g.seed ^= config.seed * 0x9e3779b97f4a7c15ull;
  engine_ = std::make_unique<DetectionEngine>(
      g, *interceptor_, *store_, *controller_, clock_,
      [this](const PacketHeader& h, DeviceId d, PortId p) { return inject(h, d, p); },
      [this](const FlowMod& m) { channel_.send(dataplane::Origin::Gwardar, m, clock_.now); });
  protection_ = std::make_unique<ProtectionEngine>(*interceptor_, channel_, clock_);

  // program the network through the NOS so view and replica see it
  auto tables = controller::compile_shortest_paths(topo_, prefixes_);
  std::vector<std::pair<DeviceId, FlowRule>> policy;
  for (const auto& [dev, rules] : tables) {
    for (const auto& r : rules) policy.emplace_back(dev, r);
  }
  controller_->submit_policy(policy, controller::PriorityClass::Normal, clock_.now);

  traffic_ = std::make_unique<TrafficGen>(topo_, config.traffic_rate, root.fork(4).next(),
                                          config.proto, config.shuffled_cycle);

  if (!config.preload_models.empty()) {
    std::ifstream in(config.preload_models);
    if (!in) fail(Err::Io, "cannot open models file: " + config.preload_models);
    json mj = json::parse(in, nullptr, false);
    if (mj.is_discarded()) fail(Err::ParseError, "malformed models file");
    engine_->models().load_json(mj);
  }
}

std::vector<Trajectory> TestBed::inject(const PacketHeader& h, DeviceId dev, PortId port) {
  auto res = dataplane_->inject_packet(h, dev, port, clock_.now);
  std::vector<Trajectory> out;
  store_->record_actual(res.primary);
  out.push_back(std::move(res.primary));
  for (auto& c : res.clones) {
    if (!c.hops.empty()) {
      store_->record_actual(c);
      out.push_back(std::move(c));
    }
  }
  return out;
}

void TestBed::drive_traffic(SimTime end) {
  for (const auto& item : traffic_->until(end)) {
    clock_.at_least(item.time);
    inject(item.header, item.device, item.port);
  }
}

void TestBed::run_until(SimTime end) {
  const SimTime interval = config_.gwardar.cycle_interval;
  while (clock_.now < end) {
    SimTime next_cycle = last_cycle_ + interval;
    SimTime target = std::min(end, next_cycle);
    drive_traffic(target);
    clock_.at_least(target);
    if (clock_.now >= next_cycle) {
      auto verdicts = engine_->run_detection_cycle();
      last_cycle_ = next_cycle;
      for (const auto& v : verdicts) {
        verdicts_.push_back(v);
        if (respond_ && v.kind != detection::VerdictKind::FalsePositive) {
          protection_->respond(v);
        }
      }
    }
  }
}

namespace {

bool fpr_stabilized(const std::vector<FprWindow>& fpr, SimTime now, SimTime window_len,
                    std::uint32_t k, double eps) {
  std::vector<double> rates;
  for (const auto& w : fpr) {
    if (w.start + window_len <= now && w.total > 0) rates.push_back(w.rate());
  }
  if (rates.size() < k) return false;
  for (std::size_t i = rates.size() - k + 1; i < rates.size(); ++i) {
    if (std::abs(rates[i] - rates[i - 1]) >= eps) return false;
  }
  return true;
}

}  // namespace

void TestBed::warm_up() {
  const SimTime step = config_.gwardar.cycle_interval;
  while (clock_.now < config_.max_warmup) {
    run_until(clock_.now + step);
    if (engine_->monitoring_active() &&
        fpr_stabilized(engine_->fpr_timeline(), clock_.now, config_.gwardar.fpr_window,
                       config_.stabilize_k, config_.stabilize_eps)) {
      stabilized_ = true;
      break;
    }
  }
  engine_->set_learning(false);
  interceptor_->take_snapshot(!engine_->any_open_anomaly(), clock_.now);
  warmup_end_ = clock_.now;
}

GroundTruth TestBed::implant(const ScenarioSpec& spec) {
  Rng rng(spec.seed ^ (config_.seed * 0xa24baed4963ee407ull));

  struct Candidate {
    trajectory::HeaderClass cls;
    PacketHeader header;
    DeviceId ingress_dev = 0;
    PortId ingress_port = 0;
    std::vector<DeviceId> path;
  };
  std::vector<Candidate> candidates;
  for (const auto& cls : store_->classes()) {
    const Trajectory* sample = nullptr;
    for (PacketId id : store_->of_class(cls)) {
      const Trajectory* t = store_->find(id);
      if (t && t->terminal == dataplane::Terminal::Delivered) {
        sample = t;
        break;
      }
    }
    if (!sample) continue;
    Candidate c;
    c.cls = cls;
    c.header = sample->hops.front().observed_header;
    c.ingress_dev = sample->hops.front().device;
    c.ingress_port = sample->hops.front().in_port;
    auto walk = trajectory::expected_trajectory(interceptor_->replica(), c.header, c.ingress_dev,
                                                c.ingress_port);
    if (walk.terminal != dataplane::Terminal::Delivered || walk.hops.size() < 2) continue;
    for (const auto& hop : walk.hops) c.path.push_back(hop.device);
    bool covered = std::any_of(engine_->regions().begin(), engine_->regions().end(),
                               [&](const normal::ScanningRegion& r) { return r.covers_any(c.path); });
    if (!covered) continue;
    candidates.push_back(std::move(c));
  }
  if (candidates.empty()) fail(Err::BadState, "no attackable traffic classes observed");

  GroundTruth gt;
  gt.scenario = ScenarioSpec::id_name(spec.id);
  gt.implanted_at = clock_.now;
  gt.action = spec.behavior;
  gt.nos_attack = spec.id != ScenarioSpec::Id::S6;
  gt.concealed = spec.id == ScenarioSpec::Id::S3 || spec.id == ScenarioSpec::Id::S4;

  // Ground-truth scratch plane: same semantics, isolated state.
  auto simulate = [&](const Candidate& c, std::optional<dataplane::MaliciousBehavior> behavior,
                      DeviceId behavior_dev,
                      const std::vector<std::pair<DeviceId, FlowRule>>& extra_rules) {
    SouthboundChannel scratch_channel;
    DataPlane scratch(topo_, scratch_channel, 0x73637261746368ull);
    for (const auto& [dev, table] : dataplane_->snapshot_tables()) {
      for (const auto& r : table.rules()) {
        FlowMod add = FlowMod::add(dev, r);
        add.install_time = r.install_time;
        scratch.apply_flow_mod(add, r.install_time);
      }
    }
    for (const auto& [dev, r] : extra_rules) scratch.apply_flow_mod(FlowMod::add(dev, r), 0);
    if (behavior) scratch.implant_behavior(behavior_dev, *behavior);
    PacketHeader h = c.header;
    h.packet_id = 0xffff'0000'0000'0000ull;
    return scratch.inject_packet(h, c.ingress_dev, c.ingress_port, 0);
  };

  const std::size_t want_targets = spec.targets.empty() ? std::max<std::size_t>(1, spec.target_count)
                                                        : spec.targets.size();

  if (spec.id == ScenarioSpec::Id::S6) {
    // one victim class per malicious device; implants validated effective
    std::set<DeviceId> used;
    std::size_t attempts = 0;
    while (gt.targets.size() < want_targets && attempts < 400) {
      attempts++;
      const Candidate& c = candidates[rng.uniform(candidates.size())];
      std::vector<DeviceId> options;
      for (std::size_t i = 0; i < c.path.size(); ++i) {
        bool need_downstream = spec.behavior == BehaviorKind::Replay ||
                               spec.behavior == BehaviorKind::Modify;
        if (need_downstream && i + 1 >= c.path.size()) continue;
        if (used.count(c.path[i])) continue;
        if (!spec.targets.empty() &&
            std::find(spec.targets.begin(), spec.targets.end(), c.path[i]) == spec.targets.end()) {
          continue;
        }
        options.push_back(c.path[i]);
      }
      if (options.empty()) continue;
      DeviceId target = options[rng.uniform(options.size())];

      dataplane::MaliciousBehavior b;
      b.kind = spec.behavior;
      b.selector = c.cls.space();
      b.probability = spec.probability;
      if (spec.behavior == BehaviorKind::Modify) {
        b.field = Field::PayloadTag;
        b.value = rng.next() | 1;
      }
      if (spec.behavior == BehaviorKind::Misroute) {
        // wrong port: any linked port other than the expected egress
        auto pre = simulate(c, std::nullopt, 0, {});
        std::optional<PortId> expected_out;
        for (const auto& hop : pre.primary.hops) {
          if (hop.device == target) expected_out = hop.out_port;
        }
        bool found = false;
        for (const auto& [peer, local_port] : topo_.neighbors(target)) {
          if (expected_out && local_port == *expected_out) continue;
          b.wrong_port = local_port;
          auto post = simulate(c, b, target, {});
          bool changed = post.primary.terminal != pre.primary.terminal ||
                         (!post.primary.hops.empty() && !pre.primary.hops.empty() &&
                          post.primary.hops.back().device != pre.primary.hops.back().device);
          if (changed) {
            found = true;
            break;
          }
        }
        if (!found) continue;
      } else {
        auto pre = simulate(c, std::nullopt, 0, {});
        auto post = simulate(c, b, target, {});
        bool effective = false;
        switch (spec.behavior) {
          case BehaviorKind::Drop:
            effective = post.primary.terminal != dataplane::Terminal::Delivered;
            break;
          case BehaviorKind::Replay: effective = !post.clones.empty(); break;
          case BehaviorKind::Modify: {
            for (const auto& hop : post.primary.hops) {
              if (!same_content(hop.observed_header, post.primary.hops.front().observed_header)) {
                effective = true;
                break;
              }
            }
            break;
          }
          default: break;
        }
        (void)pre;
        if (!effective) continue;
      }

      dataplane_->implant_behavior(target, b);
      used.insert(target);
      gt.targets.insert(target);
      if (gt.class_key.empty()) gt.class_key = c.cls.key();
    }
    if (gt.targets.size() < want_targets) fail(Err::BadState, "could not place effective implants");
    return gt;
  }

  // S1-S4: malicious rules through the compromised NOS, all planted on one
  // victim class's normal path so a single inspection exposes every target.
  std::size_t attempts = 0;
  while (attempts < 400) {
    attempts++;
    const Candidate& c = candidates[rng.uniform(candidates.size())];
    if (c.path.size() < want_targets) continue;

    std::vector<DeviceId> targets(c.path.begin(), c.path.begin() + want_targets);
    std::vector<std::pair<DeviceId, FlowRule>> rules;
    BehaviorKind primary_action = spec.behavior;
    if (primary_action == BehaviorKind::Replay) primary_action = BehaviorKind::Drop;

    auto make_rule = [&](std::uint32_t idx, const std::vector<Action>& actions) {
      FlowRule r;
      r.match = c.cls.space();
      r.priority = 100;
      r.actions = actions;
      r.cookie = kCookieAttackerBase | (rng.next() & 0xffffull) | (std::uint64_t(idx) << 16);
      return r;
    };

    bool ok = true;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      std::vector<Action> actions;
      if (i == 0 && primary_action == BehaviorKind::Misroute) {
        auto pre = simulate(c, std::nullopt, 0, {});
        std::optional<PortId> expected_out;
        for (const auto& hop : pre.primary.hops) {
          if (hop.device == targets[i]) expected_out = hop.out_port;
        }
        bool found = false;
        for (const auto& [peer, local_port] : topo_.neighbors(targets[i])) {
          if (expected_out && local_port == *expected_out) continue;
          std::vector<std::pair<DeviceId, FlowRule>> candidate_rules{
              {targets[i], make_rule(static_cast<std::uint32_t>(i), {Action::forward(local_port)})}};
          auto post = simulate(c, std::nullopt, 0, candidate_rules);
          bool changed = post.primary.terminal != pre.primary.terminal ||
                         (!post.primary.hops.empty() && !pre.primary.hops.empty() &&
                          post.primary.hops.back().device != pre.primary.hops.back().device);
          if (changed) {
            rules.push_back(candidate_rules.front());
            found = true;
            break;
          }
        }
        if (!found) {
          ok = false;
          break;
        }
      } else if (i == 0 && primary_action == BehaviorKind::Modify) {
        // rewrite the destination into another prefix, then forward as before
        auto pre = simulate(c, std::nullopt, 0, {});
        std::optional<PortId> out;
        for (const auto& hop : pre.primary.hops) {
          if (hop.device == targets[i]) out = hop.out_port;
        }
        if (!out) {
          ok = false;
          break;
        }
        const auto& hosts = topo_.hosts();
        const auto& other = hosts[rng.uniform(hosts.size())];
        actions = {Action::rewrite(Field::DstAddr, other.prefix.addr), Action::forward(*out)};
        auto post = simulate(c, std::nullopt, 0, {{targets[i], make_rule(0, actions)}});
        bool changed = post.primary.terminal != pre.primary.terminal ||
                       post.primary.device_path() != pre.primary.device_path();
        for (const auto& hop : post.primary.hops) {
          if (!same_content(hop.observed_header, post.primary.hops.front().observed_header)) {
            changed = true;
            break;
          }
        }
        if (!changed) {
          ok = false;
          break;
        }
        rules.push_back({targets[i], make_rule(0, actions)});
      } else {
        rules.push_back({targets[i], make_rule(static_cast<std::uint32_t>(i), {Action::drop()})});
      }
    }
    if (!ok) continue;

    controller::CompromiseMode mode;
    mode.kind = gt.concealed ? controller::CompromiseKind::MaliciousRulesConcealed
                             : controller::CompromiseKind::MaliciousRules;
    mode.targets.insert(targets.begin(), targets.end());
    mode.rules = rules;
    controller_->set_compromise(mode);
    controller_->inject_compromise_rules(clock_.now);

    gt.targets.insert(targets.begin(), targets.end());
    gt.class_key = c.cls.key();
    gt.action = primary_action;
    return gt;
  }
  fail(Err::BadState, "could not construct an effective NOS attack");
}

bool verdicts_match_ground_truth(const std::vector<Verdict>& verdicts, const GroundTruth& gt) {
  std::vector<const Verdict*> relevant;
  for (const auto& v : verdicts) {
    if (v.kind == detection::VerdictKind::FalsePositive) continue;
    if (v.issued_at < gt.implanted_at) return false;  // pre-attack accusation
    relevant.push_back(&v);
  }
  if (relevant.empty()) return false;

  if (gt.nos_attack) {
    auto expected_mode = gt.concealed ? detection::NosMismatch::ViewMismatch
                                      : detection::NosMismatch::RuleMismatch;
    std::set<DeviceId> covered;
    for (const auto* v : relevant) {
      if (v->kind != detection::VerdictKind::CompromisedNos) return false;
      if (v->mode != expected_mode) return false;
      covered.insert(v->targets.begin(), v->targets.end());
    }
    return covered == gt.targets;
  }

  std::set<DeviceId> covered;
  for (const auto* v : relevant) {
    if (v->kind != detection::VerdictKind::MaliciousDevice) return false;
    if (!gt.targets.count(v->device) || v->action != gt.action) return false;
    covered.insert(v->device);
  }
  return covered == gt.targets;
}

namespace {

std::vector<FprWindow> completed_windows(const std::vector<FprWindow>& fpr, SimTime now,
                                         SimTime window_len) {
  std::vector<FprWindow> out;
  for (const auto& w : fpr) {
    if (w.start + window_len <= now) out.push_back(w);
  }
  while (!out.empty() && out.front().total == 0) out.erase(out.begin());
  return out;
}

}  // namespace

ExperimentMetrics run_experiment(const ScenarioSpec& spec, const SimConfig& config) {
  TestBed bed(config);
  return run_experiment_on(bed, spec);
}

ExperimentMetrics run_experiment_on(TestBed& bed, const ScenarioSpec& spec) {
  const SimConfig& config = bed.config();
  bed.warm_up();
  bed.run_until(bed.clock().now + spec.start_offset);

  auto baseline = bed.interceptor().latest_trusted_snapshot();
  GroundTruth gt = bed.implant(spec);

  const SimTime deadline = bed.clock().now + config.post_attack_duration;
  std::size_t verdict_mark = bed.all_verdicts().size();
  bool matched = false;
  while (bed.clock().now < deadline) {
    bed.run_until(std::min(deadline, bed.clock().now + config.gwardar.cycle_interval));
    std::vector<Verdict> since(bed.all_verdicts().begin() + verdict_mark,
                               bed.all_verdicts().end());
    if (verdicts_match_ground_truth(since, gt)) {
      matched = true;
      break;
    }
  }

  ExperimentMetrics metrics;
  metrics.warmup_end = bed.warmup_end();
  metrics.stabilized = bed.stabilized();
  metrics.verdicts = bed.all_verdicts();
  metrics.fpr_timeline = completed_windows(bed.engine().fpr_timeline(), bed.clock().now,
                                           config.gwardar.fpr_window);

  AttackRecord rec;
  rec.scenario = gt.scenario;
  rec.implanted_at = gt.implanted_at;
  rec.correct = matched;
  std::ostringstream desc;
  for (std::size_t i = verdict_mark; i < bed.all_verdicts().size(); ++i) {
    const auto& v = bed.all_verdicts()[i];
    if (v.kind == detection::VerdictKind::FalsePositive) continue;
    if (!rec.detected_at || v.issued_at > *rec.detected_at) rec.detected_at = v.issued_at;
    if (desc.tellp() > 0) desc << ';';
    desc << detection::verdict_kind_name(v.kind);
    if (v.kind == detection::VerdictKind::MaliciousDevice) {
      desc << ':' << v.device << ':' << dataplane::behavior_name(v.action);
    } else if (v.kind == detection::VerdictKind::CompromisedNos) {
      desc << ':' << detection::nos_mismatch_name(v.mode);
    }
  }
  rec.verdict = desc.str();
  metrics.attacks.push_back(rec);

  if (baseline) {
    RestoreCheck check;
    auto live = bed.dataplane().snapshot_tables();
    check.tables_match = live == baseline->replica.tables;
    check.consistency_ok =
        protection::routing_consistency_check(live, bed.topology(), bed.prefixes()).empty();
    metrics.restore_checks.push_back(check);
  }
  return metrics;
}

ExperimentMetrics run_honest(const SimConfig& config, SimTime duration_after_warmup) {
  TestBed bed(config);
  return run_honest_on(bed, duration_after_warmup);
}

ExperimentMetrics run_honest_on(TestBed& bed, SimTime duration_after_warmup) {
  const SimConfig& config = bed.config();
  bed.warm_up();
  bed.run_until(bed.warmup_end() + duration_after_warmup);

  ExperimentMetrics metrics;
  metrics.warmup_end = bed.warmup_end();
  metrics.stabilized = bed.stabilized();
  metrics.verdicts = bed.all_verdicts();
  metrics.fpr_timeline = completed_windows(bed.engine().fpr_timeline(), bed.clock().now,
                                           config.gwardar.fpr_window);
  return metrics;
}

}  // namespace gwardar::harness

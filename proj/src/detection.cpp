#include "detection.hpp"

#include <algorithm>

namespace gwardar::detection {

namespace {

json cfg_defaults() { return GwardarConfig{}.to_json(); }

std::set<DeviceId> offending_devices(const ClassNormal* cn, const Trajectory& t,
                                     bool unknown_class_is_normal, bool& unknown_out) {
  std::set<DeviceId> offending;
  unknown_out = cn == nullptr;
  if (!cn) {
    if (!unknown_class_is_normal) {
      for (const auto& hop : t.hops) offending.insert(hop.device);
    }
    return offending;
  }
  for (const auto& hop : t.hops) {
    if (!cn->devices.count(hop.device)) offending.insert(hop.device);
  }
  if (cn->header_stable) {
    for (std::size_t i = 1; i < t.hops.size(); ++i) {
      if (!same_content(t.hops[i].observed_header, t.hops[i - 1].observed_header)) {
        offending.insert(t.hops[i - 1].device);  // the mutator
        break;
      }
    }
  }
  if (!t.hops.empty()) {
    normal::TerminalSig sig{t.terminal, t.hops.back().device};
    if (!cn->terminals.count(sig)) offending.insert(t.hops.back().device);
  }
  return offending;
}

bool same_rule_shape(const FlowRule& a, const FlowRule& b) {
  return a.match == b.match && a.priority == b.priority && a.actions == b.actions &&
         a.cookie == b.cookie;
}

// Hop-for-hop equivalence ignoring timestamps.
bool trajectory_equiv(const Trajectory& a, const Trajectory& b) {
  if (a.terminal != b.terminal || a.hops.size() != b.hops.size()) return false;
  for (std::size_t i = 0; i < a.hops.size(); ++i) {
    const auto& x = a.hops[i];
    const auto& y = b.hops[i];
    if (x.device != y.device || x.in_port != y.in_port || x.out_port != y.out_port ||
        !same_content(x.observed_header, y.observed_header)) {
      return false;
    }
  }
  return true;
}

json hop_json(const dataplane::TrajectoryHop& h) {
  json j{{"device", h.device}, {"in_port", h.in_port}, {"time", h.time}};
  j["out_port"] = h.out_port ? json(*h.out_port) : json(nullptr);
  return j;
}

}  // namespace

const char* verdict_kind_name(VerdictKind k) {
  switch (k) {
    case VerdictKind::MaliciousDevice: return "malicious_device";
    case VerdictKind::CompromisedNos: return "compromised_nos";
    case VerdictKind::FalsePositive: return "false_positive";
  }
  return "false_positive";
}

const char* nos_mismatch_name(NosMismatch m) {
  switch (m) {
    case NosMismatch::RuleMismatch: return "rule_mismatch";
    case NosMismatch::ViewMismatch: return "view_mismatch";
    case NosMismatch::Both: return "both";
  }
  return "rule_mismatch";
}

json Verdict::to_json() const {
  json j{{"kind", verdict_kind_name(kind)},
         {"targets", targets},
         {"class", class_key},
         {"evidence", evidence},
         {"issued_at", issued_at},
         {"anomaly", anomaly_id}};
  if (kind == VerdictKind::MaliciousDevice) {
    j["device"] = device;
    j["action"] = dataplane::behavior_name(action);
  } else if (kind == VerdictKind::CompromisedNos) {
    j["mode"] = nos_mismatch_name(mode);
  }
  return j;
}

json GwardarConfig::to_json() const {
  return json{{"window_length", window_length},
              {"region_threshold", region_threshold},
              {"sample_rate", sample_rate},
              {"unknown_class_is_normal", unknown_class_is_normal},
              {"cycle_interval", cycle_interval},
              {"snapshot_interval", snapshot_interval},
              {"snapshot_ring", snapshot_ring},
              {"fpr_window", fpr_window},
              {"recurrence_threshold", recurrence_threshold},
              {"inspection_deadline", inspection_deadline},
              {"probe_count", probe_count},
              {"probe_other_classes", probe_other_classes},
              {"drop_min_evidence", drop_min_evidence},
              {"loss_tolerance", loss_tolerance},
              {"anomaly_ttl_cycles", anomaly_ttl_cycles},
              {"inspect_all_devices", inspect_all_devices},
              {"seed", seed}};
}

GwardarConfig GwardarConfig::from_json(const json& j) {
  GwardarConfig c;
  json merged = cfg_defaults();
  merged.update(j);
  c.window_length = merged.at("window_length").get<SimTime>();
  c.region_threshold = merged.at("region_threshold").get<double>();
  c.sample_rate = merged.at("sample_rate").get<double>();
  c.unknown_class_is_normal = merged.at("unknown_class_is_normal").get<bool>();
  c.cycle_interval = merged.at("cycle_interval").get<SimTime>();
  c.snapshot_interval = merged.at("snapshot_interval").get<SimTime>();
  c.snapshot_ring = merged.at("snapshot_ring").get<std::size_t>();
  c.fpr_window = merged.at("fpr_window").get<SimTime>();
  c.recurrence_threshold = merged.at("recurrence_threshold").get<std::uint32_t>();
  c.inspection_deadline = merged.at("inspection_deadline").get<SimTime>();
  c.probe_count = merged.at("probe_count").get<std::size_t>();
  c.probe_other_classes = merged.at("probe_other_classes").get<std::size_t>();
  c.drop_min_evidence = merged.at("drop_min_evidence").get<std::size_t>();
  c.loss_tolerance = merged.at("loss_tolerance").get<double>();
  c.anomaly_ttl_cycles = merged.at("anomaly_ttl_cycles").get<std::uint32_t>();
  c.inspect_all_devices = merged.at("inspect_all_devices").get<bool>();
  c.seed = merged.at("seed").get<std::uint64_t>();
  return c;
}

std::optional<Anomaly> detect_anomaly(const NormalModel& model, const HeaderClass& cls,
                                      const Trajectory& trajectory, bool unknown_class_is_normal) {
  auto it = model.per_class.find(cls);
  const ClassNormal* cn = it == model.per_class.end() ? nullptr : &it->second;
  bool unknown = false;
  auto offending = offending_devices(cn, trajectory, unknown_class_is_normal, unknown);
  if (offending.empty()) return std::nullopt;
  Anomaly a;
  a.cls = cls;
  a.trajectory = trajectory;
  a.offending = std::move(offending);
  a.unknown_class = unknown;
  if (!trajectory.hops.empty()) a.detected_at = trajectory.hops.back().time;
  return a;
}

void ModelRegistry::absorb(const NormalModel& m) {
  for (const auto& [cls, cn] : m.per_class) merged_[cls].merge(cn);
}

void ModelRegistry::learn(const HeaderClass& cls, const Trajectory& t) {
  ClassNormal& cn = merged_[cls];
  for (const auto& hop : t.hops) cn.devices.insert(hop.device);
  if (!t.hops.empty()) cn.terminals.insert({t.terminal, t.hops.back().device});
  for (std::size_t i = 1; i < t.hops.size(); ++i) {
    if (!same_content(t.hops[i].observed_header, t.hops[0].observed_header)) {
      cn.header_stable = false;
      break;
    }
  }
}

const ClassNormal* ModelRegistry::lookup(const HeaderClass& cls) const {
  auto it = merged_.find(cls);
  return it == merged_.end() ? nullptr : &it->second;
}

json ModelRegistry::to_json() const {
  NormalModel m;
  m.per_class = merged_;
  return m.to_json();
}

void ModelRegistry::load_json(const json& j) {
  NormalModel m = NormalModel::from_json(j);
  absorb(m);
}

DetectionEngine::DetectionEngine(GwardarConfig config, Interceptor& interceptor,
                                 TrajectoryStore& actual, Controller& nos, SimClock& clock,
                                 ProbeInjector probe_injector, DirectSender direct_sender)
    : config_(std::move(config)),
      interceptor_(interceptor),
      store_(actual),
      nos_(nos),
      clock_(clock),
      probe_(std::move(probe_injector)),
      direct_(std::move(direct_sender)),
      rng_(config_.seed ^ 0x6777617264617221ull) {}

void DetectionEngine::note_event(const std::string& kind, json data) {
  events_.push_back({clock_.now, kind, std::move(data)});
}

bool DetectionEngine::any_open_anomaly() const {
  return std::any_of(anomalies_.begin(), anomalies_.end(),
                     [](const Anomaly& a) { return a.open; });
}

void DetectionEngine::account_fpr(const Trajectory& t, bool anomalous) {
  if (!monitoring_active_ || t.hops.empty()) return;
  std::size_t idx = t.hops.front().time / config_.fpr_window;
  while (fpr_.size() <= idx) {
    fpr_.push_back({fpr_.size() * config_.fpr_window, 0, 0});
  }
  fpr_[idx].total++;
  if (anomalous) fpr_[idx].anomalous++;
}

Anomaly* DetectionEngine::open_or_merge(const HeaderClass& cls, const Trajectory& t,
                                        std::set<DeviceId> offending, bool unknown) {
  for (auto& a : anomalies_) {
    if (a.open && a.cls == cls && a.offending == offending && a.replay == false) {
      a.recurrence++;
      a.trajectory = t;  // freshest instance drives inspection
      note_event("anomaly_recurred", json{{"anomaly", a.id}, {"recurrence", a.recurrence}});
      return &a;
    }
  }
  Anomaly a;
  a.id = next_anomaly_id_++;
  a.cls = cls;
  a.trajectory = t;
  a.offending = std::move(offending);
  a.detected_at = clock_.now;
  a.unknown_class = unknown;
  anomalies_.push_back(std::move(a));
  note_event("anomaly_opened",
             json{{"anomaly", anomalies_.back().id},
                  {"class", cls.key()},
                  {"offending", anomalies_.back().offending},
                  {"unknown_class", unknown},
                  {"packet", t.packet_id}});
  return &anomalies_.back();
}

void DetectionEngine::close_anomaly(Anomaly& a, const char* reason) {
  a.open = false;
  note_event("anomaly_closed", json{{"anomaly", a.id}, {"reason", reason}});
}

PacketHeader DetectionEngine::fresh_probe_header(const PacketHeader& base) {
  PacketHeader h = base;
  h.packet_id = next_probe_id_++;
  h.payload_tag = rng_.next();
  probe_ids_.insert(h.packet_id);
  return h;
}

void DetectionEngine::rebuild_models() {
  if (store_.empty()) return;
  Rng sample_rng = rng_.fork(0x5245474eull);
  regions_ = normal::identify_scanning_regions(store_, interceptor_.replica().topology,
                                               config_.region_threshold, config_.sample_rate,
                                               sample_rng);
  TimeWindow window;
  window.length = config_.window_length;
  window.start = clock_.now > config_.window_length ? clock_.now - config_.window_length : 0;
  for (const auto& region : regions_) {
    NormalModel m = normal::build_normal_model(region, store_, interceptor_.replica(), window);
    registry_.absorb(m);
  }
  monitoring_active_ = !registry_.empty();
  note_event("models_rebuilt", json{{"regions", regions_.size()},
                                    {"classes", registry_.class_count()},
                                    {"window_start", window.start}});
}

std::vector<Verdict> DetectionEngine::run_detection_cycle() {
  std::vector<Verdict> verdicts;

  // Snapshot cadence first: trust reflects the state the cycle starts from.
  if (!took_first_snapshot_ || clock_.now - last_snapshot_ >= config_.snapshot_interval) {
    bool trusted = !any_open_anomaly();
    interceptor_.take_snapshot(trusted, clock_.now);
    last_snapshot_ = clock_.now;
    took_first_snapshot_ = true;
    note_event("snapshot_taken", json{{"trusted", trusted}});
  }

  // Replay evidence: duplicate packet ids surfaced by the store.
  for (const auto& ev : store_.drain_replay_evidence()) {
    if (probe_ids_.count(ev.packet_id)) continue;  // probe dups are handled in-line
    if (ev.duplicate.hops.empty()) continue;
    const auto& first = ev.duplicate.hops.front();
    DeviceId origin = first.device;
    if (auto peer = interceptor_.replica().topology.peer(first.device, first.in_port)) {
      origin = peer->first;
    }
    HeaderClass cls = store_.classifier().classify(first.observed_header);
    Anomaly* a = open_or_merge(cls, ev.duplicate, {origin}, false);
    a->replay = true;
    a->replay_origin = origin;
  }

  // Phase III over trajectories recorded since the last cycle, evaluated
  // against the models as they were (learning runs after detection).
  const auto& order = store_.record_order();
  for (std::size_t i = store_watermark_; i < order.size(); ++i) {
    const Trajectory* t = store_.find(order[i]);
    if (!t || probe_ids_.count(t->packet_id)) continue;
    bool anomalous = false;
    if (monitoring_active_) {
      bool covered = std::any_of(regions_.begin(), regions_.end(), [&](const ScanningRegion& r) {
        return r.covers_any(t->device_path());
      });
      if (covered) {
        HeaderClass cls = store_.class_of(*t);
        bool unknown = false;
        auto offending = offending_devices(registry_.lookup(cls), *t,
                                           config_.unknown_class_is_normal, unknown);
        if (!offending.empty()) {
          anomalous = true;
          open_or_merge(cls, *t, std::move(offending), unknown);
        }
      }
    }
    account_fpr(*t, anomalous);
  }
  store_watermark_ = order.size();

  // Phases IV/V per open anomaly.
  for (auto& a : anomalies_) {
    if (!a.open) continue;
    auto out = handle_anomaly(a);
    verdicts.insert(verdicts.end(), out.begin(), out.end());
  }

  // Expire inconclusive anomalies that neither recurred nor yielded a
  // culprit; transient noise must not pin snapshot trust down forever.
  for (auto& a : anomalies_) {
    if (!a.open) continue;
    a.cycles_open++;
    if (a.cycles_open > config_.anomaly_ttl_cycles) {
      a.open = false;
      note_event("anomaly_expired", json{{"anomaly", a.id}});
    }
  }

  if (learning_) rebuild_models();

  for (const auto& v : verdicts) note_event("verdict", v.to_json());
  return verdicts;
}

std::vector<Verdict> DetectionEngine::handle_anomaly(Anomaly& a) {
  InspectOutcome out = inspect_data_plane(a);
  const char* result = out.kind == InspectOutcome::Kind::Verdicts     ? "verdicts"
                       : out.kind == InspectOutcome::Kind::Escalate   ? "escalate"
                                                                      : "inconclusive";
  note_event("data_plane_inspected",
             json{{"anomaly", a.id}, {"result", result}, {"evidence", out.evidence}});

  if (out.kind == InspectOutcome::Kind::Verdicts) {
    close_anomaly(a, "verdict");
    return out.verdicts;
  }

  const char* trigger = nullptr;
  if (out.kind == InspectOutcome::Kind::Escalate) {
    trigger = "escalate";
  } else if (a.recurrence >= config_.recurrence_threshold) {
    trigger = "recurrence";
  }
  if (!trigger) return {};

  if (!interceptor_.latest_trusted_snapshot()) {
    note_event("nos_inspection_skipped",
               json{{"anomaly", a.id}, {"reason", "no trusted snapshot"}});
    return {};
  }
  Verdict v = inspect_nos(a, trigger);
  if (v.kind == VerdictKind::FalsePositive) {
    registry_.learn(a.cls, a.trajectory);
    note_event("class_learned", json{{"class", a.cls.key()}, {"anomaly", a.id}});
  }
  close_anomaly(a, verdict_kind_name(v.kind));
  return {v};
}

std::optional<DetectionEngine::Divergence> DetectionEngine::compare_trajectories(
    const Trajectory& actual, const Trajectory& expected) const {
  const std::size_t n = std::min(actual.hops.size(), expected.hops.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ah = actual.hops[i];
    const auto& eh = expected.hops[i];
    if (ah.device != eh.device) {
      DeviceId culprit = i > 0 ? actual.hops[i - 1].device : ah.device;
      return Divergence{culprit, BehaviorKind::Misroute,
                        json{{"at_hop", i}, {"actual", hop_json(ah)}, {"expected", hop_json(eh)}}};
    }
    if (!same_content(ah.observed_header, eh.observed_header)) {
      DeviceId culprit = i > 0 ? actual.hops[i - 1].device : ah.device;
      return Divergence{culprit, BehaviorKind::Modify,
                        json{{"at_hop", i},
                             {"actual_header", header_to_json(ah.observed_header)},
                             {"expected_header", header_to_json(eh.observed_header)}}};
    }
    if (ah.out_port != eh.out_port) {
      if (!ah.out_port && eh.out_port) {
        return Divergence{ah.device, BehaviorKind::Drop,
                          json{{"at_hop", i}, {"expected_out", *eh.out_port}}};
      }
      return Divergence{ah.device, BehaviorKind::Misroute,
                        json{{"at_hop", i}, {"actual", hop_json(ah)}, {"expected", hop_json(eh)}}};
    }
  }
  if (actual.hops.size() < expected.hops.size()) {
    return Divergence{expected.hops[actual.hops.size()].device, BehaviorKind::Drop,
                      json{{"at_hop", actual.hops.size()}, {"silent", true}}};
  }
  if (actual.hops.size() > expected.hops.size() && !expected.hops.empty()) {
    return Divergence{expected.hops.back().device, BehaviorKind::Misroute,
                      json{{"at_hop", expected.hops.size()}, {"past_expected_end", true}}};
  }
  return std::nullopt;
}

InspectOutcome DetectionEngine::inspect_data_plane(Anomaly& a) {
  InspectOutcome out;
  if (a.replay && a.replay_origin) {
    Verdict v;
    v.kind = VerdictKind::MaliciousDevice;
    v.device = *a.replay_origin;
    v.action = BehaviorKind::Replay;
    v.targets = {*a.replay_origin};
    v.class_key = a.cls.key();
    v.evidence = json{{"packet_id", a.trajectory.packet_id},
                      {"duplicate_hops", a.trajectory.hops.size()}};
    v.issued_at = clock_.now;
    v.anomaly_id = a.id;
    out.kind = InspectOutcome::Kind::Verdicts;
    out.verdicts.push_back(std::move(v));
    return out;
  }
  if (a.trajectory.hops.empty()) return out;

  const VirtualReplica& replica = interceptor_.replica();

  // Suspect set: the anomalous trajectory's devices, or every region device
  // when configured for full inspection.
  std::vector<DeviceId> suspects;
  for (const auto& hop : a.trajectory.hops) {
    if (std::find(suspects.begin(), suspects.end(), hop.device) == suspects.end()) {
      suspects.push_back(hop.device);
    }
  }
  if (config_.inspect_all_devices) {
    for (const auto& r : regions_) {
      for (DeviceId d : r.devices) {
        if (std::find(suspects.begin(), suspects.end(), d) == suspects.end()) {
          suspects.push_back(d);
        }
      }
    }
  }

  // Probe plan: the anomalous class, plus a few other classes crossing each
  // suspect so misbehavior against unrelated traffic is visible too.
  struct Probe {
    PacketHeader header;
    DeviceId device;
    PortId port;
    HeaderClass cls;
  };
  std::vector<Probe> plan;
  const auto& base = a.trajectory.hops.front();
  for (std::size_t i = 0; i < config_.probe_count; ++i) {
    plan.push_back({fresh_probe_header(base.observed_header), base.device, base.in_port, a.cls});
  }
  std::set<HeaderClass> planned{a.cls};
  for (DeviceId d : suspects) {
    std::size_t added = 0;
    for (const auto& cls : store_.classes_crossing(d)) {
      if (added >= config_.probe_other_classes) break;
      if (planned.count(cls)) continue;
      const auto& ids = store_.of_class(cls);
      if (ids.empty()) continue;
      const Trajectory* sample = store_.find(ids.front());
      if (!sample || sample->hops.empty()) continue;
      const auto& h0 = sample->hops.front();
      plan.push_back({fresh_probe_header(h0.observed_header), h0.device, h0.in_port, cls});
      planned.insert(cls);
      added++;
    }
  }

  std::map<DeviceId, std::map<BehaviorKind, std::size_t>> counts;
  std::map<DeviceId, json> first_evidence;
  std::map<HeaderClass, std::size_t> class_probes;
  std::map<DeviceId, std::map<HeaderClass, std::size_t>> truncations;
  std::size_t divergent = 0;

  for (const auto& p : plan) {
    auto results = probe_(p.header, p.device, p.port);
    if (results.empty()) continue;
    class_probes[p.cls]++;
    for (std::size_t i = 1; i < results.size(); ++i) {
      // duplicate of the probe: replay evidence, attributed to the device
      // feeding the clone's first link
      const auto& dup = results[i];
      if (dup.hops.empty()) continue;
      DeviceId origin = dup.hops.front().device;
      if (auto peer = replica.topology.peer(dup.hops.front().device, dup.hops.front().in_port)) {
        origin = peer->first;
      }
      counts[origin][BehaviorKind::Replay]++;
      first_evidence.try_emplace(origin, json{{"duplicate_of", p.header.packet_id}});
      divergent++;
    }
    Trajectory expected = trajectory::expected_trajectory(replica, p.header, p.device, p.port);
    auto div = compare_trajectories(results.front(), expected);
    if (!div) continue;
    divergent++;
    if (div->kind == BehaviorKind::Drop) {
      truncations[div->device][p.cls]++;
    }
    counts[div->device][div->kind]++;
    first_evidence.try_emplace(div->device, div->detail);
  }

  // Verdict assembly, trajectory order first.
  std::vector<DeviceId> ordered = suspects;
  for (const auto& [d, _] : counts) {
    if (std::find(ordered.begin(), ordered.end(), d) == ordered.end()) ordered.push_back(d);
  }
  std::vector<Verdict> verdicts;
  for (DeviceId d : ordered) {
    auto it = counts.find(d);
    if (it == counts.end()) continue;
    std::optional<BehaviorKind> accuse;
    for (BehaviorKind k : {BehaviorKind::Modify, BehaviorKind::Misroute, BehaviorKind::Replay}) {
      if (it->second.count(k) && it->second[k] > 0) {
        accuse = k;
        break;
      }
    }
    json drop_detail;
    if (!accuse) {
      auto tr = truncations.find(d);
      if (tr != truncations.end()) {
        for (const auto& [cls, cnt] : tr->second) {
          double freq = class_probes[cls] ? static_cast<double>(cnt) / class_probes[cls] : 0.0;
          if (cnt >= config_.drop_min_evidence && freq > config_.loss_tolerance) {
            accuse = BehaviorKind::Drop;
            drop_detail = json{{"class", cls.key()},
                               {"truncated", cnt},
                               {"probes", class_probes[cls]},
                               {"tolerance", config_.loss_tolerance}};
            break;
          }
        }
      }
    }
    if (!accuse) continue;
    Verdict v;
    v.kind = VerdictKind::MaliciousDevice;
    v.device = d;
    v.action = *accuse;
    v.targets = {d};
    v.class_key = a.cls.key();
    v.evidence = json{{"counts", json::object()}, {"example", first_evidence[d]}};
    for (const auto& [k, c] : it->second) v.evidence["counts"][dataplane::behavior_name(k)] = c;
    if (!drop_detail.is_null()) v.evidence["drop"] = drop_detail;
    v.issued_at = clock_.now;
    v.anomaly_id = a.id;
    verdicts.push_back(std::move(v));
  }

  if (!verdicts.empty()) {
    out.kind = InspectOutcome::Kind::Verdicts;
    out.verdicts = std::move(verdicts);
    return out;
  }

  if (divergent == 0) {
    // No device deviates from the replica: whatever the anomaly is, it is
    // what the installed rules dictate. Check the anomalous trajectory is
    // itself explained, then escalate with rule provenance.
    auto walk = trajectory::expected_walk(replica, base.observed_header, base.device, base.in_port);
    if (trajectory_equiv(a.trajectory, walk.trajectory)) {
      json provenance = json::array();
      for (const auto& d : walk.detail) {
        if (!a.offending.count(d.hop.device)) continue;
        json entry{{"device", d.hop.device}};
        if (d.rule) {
          entry["cookie"] = d.rule->cookie;
          entry["control_plane"] = cookie_is_control_plane(d.rule->cookie);
        } else {
          entry["cookie"] = nullptr;  // table miss: the absence is NOS state too
        }
        provenance.push_back(std::move(entry));
      }
      out.kind = InspectOutcome::Kind::Escalate;
      out.evidence = json{{"provenance", provenance}};
      return out;
    }
  }
  out.kind = InspectOutcome::Kind::Inconclusive;
  out.evidence = json{{"divergent_probes", divergent}, {"probes", plan.size()}};
  return out;
}

Verdict DetectionEngine::inspect_nos(Anomaly& a, const char* trigger) {
  note_event("nos_inspection_started",
             json{{"anomaly", a.id}, {"trigger", trigger}, {"recurrence", a.recurrence}});

  auto trusted = interceptor_.latest_trusted_snapshot();
  const auto& base = a.trajectory.hops.front();

  // (a) inspection rules pinning the class to its trusted-snapshot path
  auto walk = trajectory::expected_walk(trusted->replica, base.observed_header, base.device,
                                        base.in_port);
  std::vector<InspectionRule> rules;
  std::set<DeviceId> covered;
  for (const auto& d : walk.detail) {
    if (!d.hop.out_port || covered.count(d.hop.device)) continue;
    covered.insert(d.hop.device);
    InspectionRule ir;
    ir.rule.match = a.cls.space();
    ir.rule.priority = kGwardarHighPriority;
    ir.rule.actions = {Action::forward(*d.hop.out_port)};
    ir.rule.cookie = nos_.next_cookie(dataplane::Origin::Gwardar);
    ir.device = d.hop.device;
    ir.target_class = a.cls;
    ir.ttl = config_.inspection_deadline;
    rules.push_back(std::move(ir));
  }

  std::vector<std::pair<DeviceId, FlowRule>> submission;
  for (const auto& ir : rules) submission.emplace_back(ir.device, ir.rule);

  std::map<DeviceId, FlowTable> pre;
  for (const auto& ir : rules) pre[ir.device] = interceptor_.replica().table(ir.device);

  // (b) submit through the Gwardar app path
  std::size_t mark = interceptor_.log_size();
  nos_.submit_policy(submission, PriorityClass::GwardarHigh, clock_.now);

  // (c) NOS verifier: every submitted rule must appear southbound, verbatim
  std::set<DeviceId> rule_mismatch;
  auto seen = interceptor_.intercepted_since(mark);
  for (const auto& [dev, rule] : submission) {
    bool found = std::any_of(seen.begin(), seen.end(), [&](const dataplane::FlowModRecord& r) {
      return r.mod.op == FlowModOp::Add && r.mod.device == dev && r.mod.match == rule.match &&
             r.mod.priority == rule.priority && r.mod.actions == rule.actions &&
             r.mod.cookie == rule.cookie;
    });
    if (!found) rule_mismatch.insert(dev);
  }
  bool timed_out = !rule_mismatch.empty();
  if (timed_out) clock_.advance(config_.inspection_deadline);  // waited the deadline out

  // (d) network view verifier
  std::set<DeviceId> view_mismatch;
  auto view = nos_.query_view();
  for (const auto& [dev, rule] : submission) {
    const auto& vt = view.tables[dev];
    bool found = std::any_of(vt.rules().begin(), vt.rules().end(),
                             [&](const FlowRule& r) { return same_rule_shape(r, rule); });
    if (!found) view_mismatch.insert(dev);
  }

  // (e) remove the inspection rules and restore pre-inspection conditions
  nos_.submit_retraction(submission, clock_.now);
  for (const auto& [dev, table] : pre) {
    const FlowTable& cur = interceptor_.replica().table(dev);
    if (cur == table) continue;
    for (const auto& r : cur.rules()) {
      bool keep = std::any_of(table.rules().begin(), table.rules().end(),
                              [&](const FlowRule& p) { return same_rule_shape(p, r); });
      if (!keep) direct_(FlowMod::del_strict(dev, r.match, r.priority, r.cookie));
    }
    for (const auto& p : table.rules()) {
      bool present = std::any_of(
          interceptor_.replica().table(dev).rules().begin(),
          interceptor_.replica().table(dev).rules().end(),
          [&](const FlowRule& r) { return same_rule_shape(p, r); });
      if (!present) direct_(FlowMod::add(dev, p));
    }
  }

  note_event("nos_inspection_completed",
             json{{"anomaly", a.id},
                  {"rules", rules.size()},
                  {"rule_mismatch", rule_mismatch},
                  {"view_mismatch", view_mismatch},
                  {"timed_out", timed_out}});

  Verdict v;
  v.issued_at = clock_.now;
  v.anomaly_id = a.id;
  v.class_key = a.cls.key();
  v.evidence = json{{"submitted", rules.size()},
                    {"rule_mismatch", rule_mismatch},
                    {"view_mismatch", view_mismatch},
                    {"timed_out", timed_out},
                    {"trigger", trigger}};
  if (!rule_mismatch.empty() || !view_mismatch.empty()) {
    v.kind = VerdictKind::CompromisedNos;
    v.mode = !rule_mismatch.empty() && !view_mismatch.empty() ? NosMismatch::Both
             : !rule_mismatch.empty()                         ? NosMismatch::RuleMismatch
                                                              : NosMismatch::ViewMismatch;
    v.targets = rule_mismatch;
    v.targets.insert(view_mismatch.begin(), view_mismatch.end());
  } else {
    v.kind = VerdictKind::FalsePositive;
  }
  return v;
}

}  // namespace gwardar::detection

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "controller.hpp"
#include "normal.hpp"

// Phases III-V: anomaly detection against the normal model, data-plane
// inspection with attack classification, and NOS inspection (fix-rule
// injection, FlowMod verification, network-view verification).

namespace gwardar::detection {

using namespace gwardar::netmodel;
using controller::Controller;
using controller::PriorityClass;
using dataplane::BehaviorKind;
using dataplane::Terminal;
using dataplane::Trajectory;
using interceptor::Interceptor;
using interceptor::VirtualReplica;
using normal::ClassNormal;
using normal::NormalModel;
using normal::ScanningRegion;
using normal::TimeWindow;
using trajectory::HeaderClass;
using trajectory::TrajectoryStore;

struct GwardarConfig {
  // learning
  SimTime window_length = 100;
  double region_threshold = 0.5;
  double sample_rate = 0.25;
  bool unknown_class_is_normal = false;  // fail closed: unseen classes trigger inspection
  // cadence
  SimTime cycle_interval = 20;
  SimTime snapshot_interval = 60;
  std::size_t snapshot_ring = 32;
  SimTime fpr_window = 50;
  // inspection
  std::uint32_t recurrence_threshold = 2;
  SimTime inspection_deadline = 10;
  std::size_t probe_count = 10;          // probes carrying the anomalous class
  std::size_t probe_other_classes = 3;   // extra classes probed per suspect device
  std::size_t drop_min_evidence = 5;     // N: truncated probes needed to accuse Drop
  double loss_tolerance = 0.05;
  std::uint32_t anomaly_ttl_cycles = 3;  // inconclusive anomalies expire after this
  bool inspect_all_devices = false;      // false: suspect set = trajectory devices
  std::uint64_t seed = 1;

  json to_json() const;
  static GwardarConfig from_json(const json& j);
};

struct Anomaly {
  std::uint64_t id = 0;
  HeaderClass cls;
  Trajectory trajectory;
  std::set<DeviceId> offending;
  SimTime detected_at = 0;
  std::uint32_t recurrence = 1;
  bool unknown_class = false;
  bool replay = false;
  std::optional<DeviceId> replay_origin;
  std::uint32_t cycles_open = 0;
  bool open = true;
};

enum class VerdictKind : std::uint8_t { MaliciousDevice, CompromisedNos, FalsePositive };
enum class NosMismatch : std::uint8_t { RuleMismatch, ViewMismatch, Both };

const char* verdict_kind_name(VerdictKind k);
const char* nos_mismatch_name(NosMismatch m);

struct Verdict {
  VerdictKind kind = VerdictKind::FalsePositive;
  DeviceId device = 0;                            // MaliciousDevice
  BehaviorKind action = BehaviorKind::Drop;       // MaliciousDevice
  NosMismatch mode = NosMismatch::RuleMismatch;   // CompromisedNos
  std::set<DeviceId> targets;
  std::string class_key;  // anomalous trajectory class
  json evidence;
  SimTime issued_at = 0;
  std::uint64_t anomaly_id = 0;

  json to_json() const;
};

struct InspectionRule {
  FlowRule rule;
  DeviceId device = 0;
  HeaderClass target_class;
  SimTime ttl = 0;
};

struct InspectOutcome {
  enum class Kind : std::uint8_t { Verdicts, Escalate, Inconclusive } kind = Kind::Inconclusive;
  std::vector<Verdict> verdicts;
  json evidence;
};

struct Event {
  SimTime time = 0;
  std::string kind;
  json data;

  json to_json() const { return json{{"time", time}, {"kind", kind}, {"data", data}}; }
};

// Evaluates one trajectory against one model; the spec-shaped Phase-III
// entry point. Offending devices: hops outside the Normal set, the mutator
// when a learned header-stable class changed in flight, and the final device
// when the terminal disposition was never learned.
std::optional<Anomaly> detect_anomaly(const NormalModel& model, const HeaderClass& cls,
                                      const Trajectory& trajectory,
                                      bool unknown_class_is_normal = false);

// Accumulated per-class normal knowledge across window rebuilds.
class ModelRegistry {
 public:
  void absorb(const NormalModel& m);
  void learn(const HeaderClass& cls, const Trajectory& t);
  const ClassNormal* lookup(const HeaderClass& cls) const;
  bool empty() const { return merged_.empty(); }
  std::size_t class_count() const { return merged_.size(); }

  json to_json() const;
  void load_json(const json& j);

 private:
  std::map<HeaderClass, ClassNormal> merged_;
};

struct FprWindow {
  SimTime start = 0;
  std::size_t total = 0;
  std::size_t anomalous = 0;

  double rate() const { return total ? static_cast<double>(anomalous) / total : 0.0; }
};

// Injects a probe packet and returns every resulting trajectory (primary
// plus replay clones), already recorded into the actual store.
using ProbeInjector =
    std::function<std::vector<Trajectory>(const PacketHeader&, DeviceId, PortId)>;
// Sends a FlowMod directly to the data plane, bypassing the NOS.
using DirectSender = std::function<void(const FlowMod&)>;

class DetectionEngine {
 public:
  DetectionEngine(GwardarConfig config, Interceptor& interceptor, TrajectoryStore& actual,
                  Controller& nos, SimClock& clock, ProbeInjector probe_injector,
                  DirectSender direct_sender);

  void set_learning(bool on) { learning_ = on; }
  bool learning() const { return learning_; }

  // One Phase III->IV->V pass: drains new trajectories, detects anomalies,
  // inspects, and returns the verdicts issued this cycle. Responses are the
  // protection engine's job.
  std::vector<Verdict> run_detection_cycle();

  InspectOutcome inspect_data_plane(Anomaly& anomaly);
  Verdict inspect_nos(Anomaly& anomaly, const char* trigger);

  bool any_open_anomaly() const;
  const std::vector<Event>& events() const { return events_; }
  const std::vector<FprWindow>& fpr_timeline() const { return fpr_; }
  const std::vector<ScanningRegion>& regions() const { return regions_; }
  const ModelRegistry& models() const { return registry_; }
  ModelRegistry& models() { return registry_; }
  const GwardarConfig& config() const { return config_; }
  bool monitoring_active() const { return monitoring_active_; }

  // Force a learning pass outside the normal cadence (used at warm-up end).
  void rebuild_models();

 private:
  struct Divergence {
    DeviceId device = 0;
    BehaviorKind kind = BehaviorKind::Drop;
    json detail;
  };

  std::optional<Divergence> compare_trajectories(const Trajectory& actual,
                                                 const Trajectory& expected) const;
  Anomaly* open_or_merge(const HeaderClass& cls, const Trajectory& t,
                         std::set<DeviceId> offending, bool unknown);
  void note_event(const std::string& kind, json data);
  void account_fpr(const Trajectory& t, bool anomalous);
  std::vector<Verdict> handle_anomaly(Anomaly& a);
  void close_anomaly(Anomaly& a, const char* reason);
  PacketHeader fresh_probe_header(const PacketHeader& base);

  GwardarConfig config_;
  Interceptor& interceptor_;
  TrajectoryStore& store_;
  Controller& nos_;
  SimClock& clock_;
  ProbeInjector probe_;
  DirectSender direct_;
  Rng rng_;

  ModelRegistry registry_;
  std::vector<ScanningRegion> regions_;
  std::vector<Anomaly> anomalies_;
  std::vector<Event> events_;
  std::vector<FprWindow> fpr_;
  std::set<PacketId> probe_ids_;
  std::size_t store_watermark_ = 0;
  std::uint64_t next_anomaly_id_ = 1;
  PacketId next_probe_id_ = (1ull << 62);
  SimTime last_snapshot_ = 0;
  bool took_first_snapshot_ = false;
  bool learning_ = true;
  bool monitoring_active_ = false;  // set once the first models exist
};

}  // namespace gwardar::detection

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protection.hpp"

// Scenario runner: topology/traffic generation, attack implantation for the
// five implemented scenarios, end-to-end orchestration, and CSV metrics.

namespace gwardar::harness {

using namespace gwardar::netmodel;
using dataplane::BehaviorKind;
using dataplane::DataPlane;
using dataplane::SouthboundChannel;
using dataplane::Trajectory;
using detection::DetectionEngine;
using detection::FprWindow;
using detection::GwardarConfig;
using detection::Verdict;
using protection::ProtectionEngine;
using protection::ResponsePolicy;
using trajectory::HeaderClassifier;
using trajectory::TrajectoryStore;

// ---- generation ----

// Topology specs: "gen:line:N", "gen:ring:N", "gen:random:N:DEG", "file:PATH".
// Generated devices reserve `host_ports` free ports for later attachments.
Topology generate_topology(const std::string& spec, std::uint64_t seed, PortId host_ports = 4);

// Synthetic local prefixes (10.x.y.0/24), `per_device` per device, spread
// uniformly at random; optionally seeded from an explicit prefix list.
std::map<Prefix, DeviceId> generate_prefixes(Topology& topo, std::size_t per_device,
                                             std::uint64_t seed,
                                             const std::vector<Prefix>& pool = {});

std::vector<Prefix> load_prefix_list(const std::string& path);

struct TrafficItem {
  PacketHeader header;
  DeviceId device = 0;
  PortId port = 0;
  SimTime time = 0;
};

// Seeded benign-traffic source. In shuffled-cycle mode every destination
// prefix is visited once per epoch (uniform marginal, full coverage);
// otherwise destinations are drawn i.i.d.
class TrafficGen {
 public:
  TrafficGen(const Topology& topo, double rate, std::uint64_t seed, std::uint8_t proto,
             bool shuffled_cycle);

  std::vector<TrafficItem> until(SimTime end);  // items with time < end
  PacketId next_packet_id() const { return next_id_; }

 private:
  TrafficItem make_item(SimTime t);

  const Topology& topo_;
  std::vector<HostAttachment> hosts_;
  double rate_;
  std::uint8_t proto_;
  bool shuffled_;
  Rng rng_;
  std::vector<std::size_t> epoch_;
  std::size_t epoch_pos_ = 0;
  double cursor_ = 0.0;
  PacketId next_id_ = 1;
};

// One-shot form: the whole stream for [0, duration).
std::vector<TrafficItem> generate_traffic(const Topology& topo, double rate, SimTime duration,
                                          std::uint64_t seed,
                                          std::uint8_t proto = trajectory::kDefaultProbeProto,
                                          bool shuffled_cycle = true);

// ---- configuration ----

struct SimConfig {
  std::uint64_t seed = 1;
  std::string topology = "gen:random:12:3";
  std::size_t prefixes_per_device = 2;
  std::string prefix_file;  // optional
  double traffic_rate = 4.0;
  std::uint8_t proto = trajectory::kDefaultProbeProto;
  bool shuffled_cycle = true;
  double loss_probability = 0.0;
  SimTime max_warmup = 2000;
  std::uint32_t stabilize_k = 5;
  double stabilize_eps = 0.01;
  SimTime post_attack_duration = 600;
  std::string preload_models;  // optional normal-model JSON to seed the registry
  GwardarConfig gwardar;

  json to_json() const;
  static SimConfig from_json(const json& j);
};

// ---- scenarios ----

struct ScenarioSpec {
  enum class Id : std::uint8_t { S1, S2, S3, S4, S6 } id = Id::S6;
  std::size_t target_count = 1;          // used when targets empty
  std::vector<DeviceId> targets;         // optional explicit targets
  BehaviorKind behavior = BehaviorKind::Drop;
  double probability = 1.0;
  SimTime start_offset = 50;             // after warm-up
  std::uint64_t seed = 7;

  static Id parse_id(const std::string& s);
  static const char* id_name(Id id);
  json to_json() const;
  static ScenarioSpec from_json(const json& j);
};

struct GroundTruth {
  std::string scenario;
  std::set<DeviceId> targets;
  BehaviorKind action = BehaviorKind::Drop;
  bool nos_attack = false;
  bool concealed = false;
  std::string class_key;
  SimTime implanted_at = 0;
};

struct AttackRecord {
  std::string scenario;
  SimTime implanted_at = 0;
  std::optional<SimTime> detected_at;
  std::string verdict;
  bool correct = false;
};

struct RestoreCheck {
  bool tables_match = false;
  bool consistency_ok = false;
};

struct ExperimentMetrics {
  std::vector<AttackRecord> attacks;
  std::vector<FprWindow> fpr_timeline;
  std::vector<RestoreCheck> restore_checks;
  std::vector<Verdict> verdicts;
  SimTime warmup_end = 0;
  bool stabilized = false;

  json to_json() const;
};

void emit_metrics(const ExperimentMetrics& metrics, const std::filesystem::path& dir);

// ---- the wired simulation ----

class TestBed {
 public:
  explicit TestBed(const SimConfig& config);

  // Injects scheduled traffic and runs detection cycles until `end`,
  // responding to non-false-positive verdicts through the protection engine.
  void run_until(SimTime end);
  // Warm-up: learn until the FPR timeline stabilizes (K windows within eps)
  // or max_warmup; freezes learning and takes a trusted snapshot.
  void warm_up();

  std::vector<Trajectory> inject(const PacketHeader& h, DeviceId dev, PortId port);
  void drive_traffic(SimTime end);

  const SimConfig& config() const { return config_; }
  SimClock& clock() { return clock_; }
  Topology& topology() { return topo_; }
  const std::map<Prefix, DeviceId>& prefixes() const { return prefixes_; }
  DataPlane& dataplane() { return *dataplane_; }
  SouthboundChannel& channel() { return channel_; }
  controller::Controller& nos() { return *controller_; }
  interceptor::Interceptor& interceptor() { return *interceptor_; }
  TrajectoryStore& store() { return *store_; }
  DetectionEngine& engine() { return *engine_; }
  ProtectionEngine& protection() { return *protection_; }
  TrafficGen& traffic() { return *traffic_; }

  const std::vector<Verdict>& all_verdicts() const { return verdicts_; }
  bool respond_to_verdicts() const { return respond_; }
  void set_respond_to_verdicts(bool on) { respond_ = on; }
  SimTime warmup_end() const { return warmup_end_; }
  bool stabilized() const { return stabilized_; }

  // Scenario implantation at the current time; returns ground truth.
  GroundTruth implant(const ScenarioSpec& spec);

  // state loading (sessions resuming from disk)
  void load_clock(SimTime now) { clock_.now = now; last_cycle_ = now; }
  void load_warmup(SimTime end, bool stabilized) {
    warmup_end_ = end;
    stabilized_ = stabilized;
  }

 private:
  SimConfig config_;
  SimClock clock_;
  Topology topo_;
  std::map<Prefix, DeviceId> prefixes_;
  SouthboundChannel channel_;
  std::unique_ptr<DataPlane> dataplane_;
  std::unique_ptr<controller::Controller> controller_;
  std::unique_ptr<interceptor::Interceptor> interceptor_;
  std::unique_ptr<TrajectoryStore> store_;
  std::unique_ptr<DetectionEngine> engine_;
  std::unique_ptr<ProtectionEngine> protection_;
  std::unique_ptr<TrafficGen> traffic_;
  std::vector<Verdict> verdicts_;
  SimTime last_cycle_ = 0;
  SimTime warmup_end_ = 0;
  bool stabilized_ = false;
  bool respond_ = true;
};

// Warm-up, implant per `spec`, detect, respond, and measure. The experiment
// ends as soon as ground truth is fully matched (or the post-attack budget
// runs out).
ExperimentMetrics run_experiment(const ScenarioSpec& spec, const SimConfig& config);
ExperimentMetrics run_experiment_on(TestBed& bed, const ScenarioSpec& spec);

// Honest baseline: no implant, fixed duration past warm-up.
ExperimentMetrics run_honest(const SimConfig& config, SimTime duration_after_warmup);
ExperimentMetrics run_honest_on(TestBed& bed, SimTime duration_after_warmup);

// Ground-truth correctness: computed from implant parameters only.
bool verdicts_match_ground_truth(const std::vector<Verdict>& verdicts, const GroundTruth& gt);

}  // namespace gwardar::harness

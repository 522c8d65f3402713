#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gwardar;
using namespace gwardar::netmodel;
using namespace gwardar::dataplane;

namespace {

struct Plane {
  Topology topo;
  SouthboundChannel channel;
  DataPlane dp;

  explicit Plane(std::size_t n) : topo(helpers::line_with_hosts(n)), dp(topo, channel, 99) {
    helpers::program(dp, controller::compile_shortest_paths(topo, helpers::prefix_map(topo)));
  }
};

}  // namespace

TEST_CASE("line delivery and drop truncation") {
  Plane p(4);
  // packet to host on device 3, injected at device 0's host port
  auto h = helpers::header_to(helpers::pfx(10, 3).addr | 7);
  auto res = p.dp.inject_packet(h, 0, p.topo.hosts_of(0)[0].port, 0);
  CHECK(res.primary.terminal == Terminal::Delivered);
  CHECK(res.primary.device_path() == std::vector<DeviceId>{0, 1, 2, 3});
  for (std::size_t i = 0; i < res.primary.hops.size(); ++i) {
    CHECK(res.primary.hops[i].time == i);  // one time unit per hop
  }

  MaliciousBehavior drop;
  drop.kind = BehaviorKind::Drop;
  p.dp.implant_behavior(1, drop);
  auto res2 = p.dp.inject_packet(helpers::header_to(helpers::pfx(10, 3).addr | 9, 0, 6, 2), 0,
                                 p.topo.hosts_of(0)[0].port, 0);
  CHECK(res2.primary.terminal == Terminal::Dropped);
  CHECK(res2.primary.device_path() == std::vector<DeviceId>{0, 1});
  CHECK_FALSE(res2.primary.hops.back().out_port.has_value());
}

TEST_CASE("unknown ingress rejected") {
  Plane p(3);
  CHECK_THROWS_AS(p.dp.inject_packet(helpers::header_to(1), 9, 0, 0), Error);
  CHECK_THROWS_AS(p.dp.inject_packet(helpers::header_to(1), 0, 200, 0), Error);
}

TEST_CASE("random topology propagation equals the independent interpreter") {
  for (std::uint64_t seed : {11ull, 23ull, 37ull}) {
    Topology topo = harness::generate_topology("gen:random:10:3", seed);
    harness::generate_prefixes(topo, 2, seed);
    SouthboundChannel ch;
    DataPlane dp(topo, ch, seed);
    helpers::program(dp, controller::compile_shortest_paths(topo, helpers::prefix_map(topo)));

    std::map<DeviceId, std::vector<FlowRule>> flat;
    for (const auto& [d, t] : dp.snapshot_tables()) flat[d] = t.rules();

    Rng rng(seed * 31);
    const auto& hosts = topo.hosts();
    for (int i = 0; i < 100; ++i) {
      const auto& src = hosts[rng.uniform(hosts.size())];
      const auto& dst = hosts[rng.uniform(hosts.size())];
      PacketHeader h;
      h.src_addr = src.prefix.addr | static_cast<std::uint32_t>(rng.uniform(256));
      h.dst_addr = dst.prefix.addr | static_cast<std::uint32_t>(rng.uniform(256));
      h.proto = 6;
      h.packet_id = 1000 + i;
      auto actual = dp.inject_packet(h, src.device, src.port, 0);
      auto expected = oracles::propagate(flat, topo, h, src.device, src.port);
      CHECK(oracles::same_trajectory(actual.primary, expected));
    }
  }
}

TEST_CASE("apply_flow_mod matches the reference replay oracle") {
  Topology topo = harness::generate_topology("gen:random:6:3", 5);
  harness::generate_prefixes(topo, 2, 5);
  SouthboundChannel ch;
  DataPlane dp(topo, ch, 5);
  oracles::TableReplay reference[6];

  Rng rng(17);
  auto mods = helpers::random_mods(topo, 200, rng);
  SimTime now = 0;
  for (const auto& m : mods) {
    dp.apply_flow_mod(m, now);
    reference[m.device].apply(m, now);
    now++;
  }
  for (DeviceId d : topo.devices()) {
    CHECK(oracles::same_rules(dp.table(d).rules(), reference[d].rules()));
  }

  FlowMod bad;
  bad.device = 77;
  CHECK_THROWS_AS(dp.apply_flow_mod(bad, 0), Error);
}

TEST_CASE("snapshot_tables deep copies the replayed state") {
  Topology topo = harness::generate_topology("gen:random:5:2", 9);
  harness::generate_prefixes(topo, 1, 9);
  SouthboundChannel ch;
  DataPlane dp(topo, ch, 9);
  Rng rng(9);
  for (const auto& m : helpers::random_mods(topo, 80, rng)) dp.apply_flow_mod(m, 0);

  auto snap = dp.snapshot_tables();
  // later mutations do not affect the copy
  dp.apply_flow_mod(FlowMod::del_all(0), 1);
  CHECK(snap.at(0).size() > 0);
  CHECK(dp.table(0).size() == 0);
}

TEST_CASE("selective misroute only affects matching packets") {
  Plane p(4);
  MaliciousBehavior mis;
  mis.kind = BehaviorKind::Misroute;
  mis.selector = HeaderSpace::dst_prefix(helpers::pfx(10, 3));
  mis.wrong_port = 0;  // back toward device 0
  p.dp.implant_behavior(1, mis);

  auto hit = p.dp.inject_packet(helpers::header_to(helpers::pfx(10, 3).addr | 1, 0, 6, 10), 0,
                                p.topo.hosts_of(0)[0].port, 0);
  CHECK(hit.primary.hops[1].out_port == PortId{0});  // misrouted back
  CHECK(hit.primary.terminal == Terminal::Looped);   // ping-pongs until the bound cuts it

  auto miss = p.dp.inject_packet(helpers::header_to(helpers::pfx(10, 2).addr | 1, 0, 6, 11), 0,
                                 p.topo.hosts_of(0)[0].port, 0);
  CHECK(miss.primary.terminal == Terminal::Delivered);
  CHECK(miss.primary.device_path() == std::vector<DeviceId>{0, 1, 2});
}

TEST_CASE("replay produces a duplicate trajectory with the same packet id") {
  Plane p(4);
  MaliciousBehavior rep;
  rep.kind = BehaviorKind::Replay;
  p.dp.implant_behavior(2, rep);

  auto res = p.dp.inject_packet(helpers::header_to(helpers::pfx(10, 3).addr | 1, 0, 6, 21), 0,
                                p.topo.hosts_of(0)[0].port, 0);
  CHECK(res.primary.terminal == Terminal::Delivered);
  REQUIRE(res.clones.size() == 1);
  CHECK(res.clones[0].packet_id == res.primary.packet_id);
  CHECK(res.clones[0].hops.front().device == 3);  // downstream of device 2
}

TEST_CASE("modify rewrites the header downstream only") {
  Plane p(4);
  MaliciousBehavior mod;
  mod.kind = BehaviorKind::Modify;
  mod.field = Field::DstAddr;
  mod.value = helpers::pfx(10, 0).addr | 5;
  p.dp.implant_behavior(1, mod);

  auto res = p.dp.inject_packet(helpers::header_to(helpers::pfx(10, 3).addr | 1, 0, 6, 30), 0,
                                p.topo.hosts_of(0)[0].port, 0);
  REQUIRE(res.primary.hops.size() >= 3);
  CHECK(res.primary.hops[0].observed_header.dst_addr == (helpers::pfx(10, 3).addr | 1));
  CHECK(res.primary.hops[1].observed_header.dst_addr == (helpers::pfx(10, 3).addr | 1));
  CHECK(res.primary.hops[2].observed_header.dst_addr == (helpers::pfx(10, 0).addr | 5));
}

TEST_CASE("loop bound cuts and flags") {
  Topology topo = helpers::line_with_hosts(2);
  SouthboundChannel ch;
  DataPlane dp(topo, ch, 1);
  // two devices pointing at each other for everything
  FlowRule r01;
  r01.match = HeaderSpace::wildcard();
  r01.actions = {Action::forward(0)};
  dp.apply_flow_mod(FlowMod::add(0, r01), 0);
  dp.apply_flow_mod(FlowMod::add(1, r01), 0);

  auto res = dp.inject_packet(helpers::header_to(0x01020304), 0, 1, 0);
  CHECK(res.primary.terminal == Terminal::Looped);
  CHECK(res.primary.hops.size() == 2 * topo.device_count());
}

TEST_CASE("behavior locality: upstream hops unchanged") {
  Plane clean(5);
  auto h = helpers::header_to(helpers::pfx(10, 4).addr | 1, 0, 6, 40);
  auto before = clean.dp.inject_packet(h, 0, clean.topo.hosts_of(0)[0].port, 0);

  MaliciousBehavior drop;
  drop.kind = BehaviorKind::Drop;
  clean.dp.implant_behavior(3, drop);
  auto after = clean.dp.inject_packet(h, 0, clean.topo.hosts_of(0)[0].port, 0);

  REQUIRE(after.primary.hops.size() >= 3);
  for (std::size_t i = 0; i < 3; ++i) {  // hops at devices 0..2 are upstream of 3
    CHECK(after.primary.hops[i].device == before.primary.hops[i].device);
    CHECK(after.primary.hops[i].in_port == before.primary.hops[i].in_port);
    CHECK(after.primary.hops[i].out_port == before.primary.hops[i].out_port);
    CHECK(after.primary.hops[i].observed_header == before.primary.hops[i].observed_header);
  }
}

TEST_CASE("no-match emits a packet-in and drops") {
  Topology topo = helpers::line_with_hosts(2);
  SouthboundChannel ch;
  DataPlane dp(topo, ch, 3);
  auto res = dp.inject_packet(helpers::header_to(0x01010101), 0, 1, 7);
  CHECK(res.primary.terminal == Terminal::Dropped);
  REQUIRE(ch.packet_ins().size() == 1);
  CHECK(ch.packet_ins()[0].device == 0);
  CHECK(ch.packet_ins()[0].time == 7);
}

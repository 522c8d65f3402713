#include "doctest.h"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gwardar;
using namespace gwardar::netmodel;

namespace {

HeaderSpace random_space(Rng& rng) {
  HeaderSpace s;
  if (rng.chance(0.7)) {
    s.dst_addr = TernaryField::prefix_match(static_cast<std::uint32_t>(rng.next()),
                                            static_cast<unsigned>(rng.uniform(33)));
  }
  if (rng.chance(0.5)) {
    s.src_addr = TernaryField::prefix_match(static_cast<std::uint32_t>(rng.next()),
                                            static_cast<unsigned>(rng.uniform(33)));
  }
  if (rng.chance(0.3)) s.proto = TernaryField::exact(rng.uniform(4), 8);
  if (rng.chance(0.3)) s.dst_port = TernaryField::exact(rng.uniform(1 << 16), 16);
  return s;
}

PacketHeader random_header(Rng& rng) {
  PacketHeader h;
  h.src_addr = static_cast<std::uint32_t>(rng.next());
  h.dst_addr = static_cast<std::uint32_t>(rng.next());
  h.src_port = static_cast<std::uint16_t>(rng.next());
  h.dst_port = static_cast<std::uint16_t>(rng.next());
  h.proto = static_cast<std::uint8_t>(rng.uniform(4));
  h.packet_id = rng.next();
  return h;
}

}  // namespace

TEST_CASE("header_matches basics") {
  PacketHeader h = helpers::header_to(0x0a010203);  // 10.1.2.3
  CHECK(header_matches(HeaderSpace::wildcard(), h));

  HeaderSpace ten8 = HeaderSpace::dst_prefix(Prefix::parse("10.0.0.0/8"));
  CHECK(header_matches(ten8, h));

  PacketHeader other = helpers::header_to(0x0b000001);  // 11.0.0.1
  CHECK_FALSE(header_matches(ten8, other));
}

TEST_CASE("highest_priority_rule basics and ties") {
  PacketHeader h = helpers::header_to(0x0a000001);
  std::vector<FlowRule> empty;
  CHECK(highest_priority_rule(empty, h) == nullptr);

  FlowRule lo;
  lo.match = HeaderSpace::wildcard();
  lo.priority = 10;
  lo.actions = {Action::forward(1)};
  FlowRule hi = lo;
  hi.priority = 20;
  hi.actions = {Action::forward(2)};
  std::vector<FlowRule> two{lo, hi};
  CHECK(highest_priority_rule(two, h)->priority == 20);

  // priority tie broken by cookie, then install_time
  FlowRule a = lo, b = lo;
  a.cookie = 5;
  b.cookie = 9;
  std::vector<FlowRule> tie{a, b};
  CHECK(highest_priority_rule(tie, h)->cookie == 9);
  b.cookie = 5;
  b.install_time = 7;
  std::vector<FlowRule> tie2{a, b};
  CHECK(highest_priority_rule(tie2, h)->install_time == 7);
}

TEST_CASE("highest_priority_rule equals linear-scan oracle on random tables") {
  Rng rng(42);
  for (int round = 0; round < 20; ++round) {
    std::vector<FlowRule> rules;
    for (int i = 0; i < 50; ++i) {
      FlowRule r;
      r.match = random_space(rng);
      r.priority = static_cast<std::uint32_t>(rng.uniform(16));
      r.cookie = rng.uniform(8);
      r.install_time = rng.uniform(100);
      r.actions = {Action::forward(static_cast<PortId>(rng.uniform(4)))};
      rules.push_back(std::move(r));
    }
    for (int i = 0; i < 50; ++i) {
      PacketHeader h = random_header(rng);
      const FlowRule* got = highest_priority_rule(rules, h);
      const FlowRule* want = oracles::best_rule(rules, h);
      if (!want) {
        CHECK(got == nullptr);
      } else {
        REQUIRE(got != nullptr);
        CHECK(std::make_tuple(got->priority, got->cookie, got->install_time) ==
              std::make_tuple(want->priority, want->cookie, want->install_time));
      }
    }
  }
}

TEST_CASE("intersection membership property") {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    HeaderSpace a = random_space(rng), b = random_space(rng);
    auto both = HeaderSpace::intersect(a, b);
    PacketHeader h = random_header(rng);
    bool in_both = a.contains(h) && b.contains(h);
    if (both) {
      CHECK(both->contains(h) == in_both);
    } else {
      CHECK_FALSE(in_both);
    }
  }
}

TEST_CASE("subtraction is the exact set difference") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    HeaderSpace a = random_space(rng), b = random_space(rng);
    auto diff = HeaderSpace::subtract(a, b);
    for (int k = 0; k < 20; ++k) {
      PacketHeader h = random_header(rng);
      bool want = a.contains(h) && !b.contains(h);
      bool got = false;
      for (const auto& piece : diff) {
        if (piece.contains(h)) {
          got = true;
          break;
        }
      }
      CHECK(got == want);
    }
    // pieces are disjoint and inside a
    for (const auto& piece : diff) CHECK(piece.subset_of(a));
  }
}

TEST_CASE("flow table apply: add, modify, delete semantics") {
  FlowTable t;
  FlowRule r;
  r.match = HeaderSpace::dst_prefix(Prefix::parse("10.1.0.0/16"));
  r.priority = 16;
  r.actions = {Action::forward(2)};
  r.cookie = 1;
  t.apply(FlowMod::add(0, r), 5);
  CHECK(t.size() == 1);

  // add with same (match, priority) replaces
  FlowRule r2 = r;
  r2.actions = {Action::forward(3)};
  r2.cookie = 2;
  t.apply(FlowMod::add(0, r2), 6);
  CHECK(t.size() == 1);
  CHECK(t.rules()[0].cookie == 2);

  // non-strict delete with full wildcard empties the table
  t.apply(FlowMod::del_all(0), 7);
  CHECK(t.size() == 0);

  // strict delete only removes the exact (match, priority)
  t.apply(FlowMod::add(0, r), 8);
  FlowRule narrower = r;
  narrower.priority = 17;
  t.apply(FlowMod::add(0, narrower), 8);
  t.apply(FlowMod::del_strict(0, r.match, 17, 0), 9);
  CHECK(t.size() == 1);
  CHECK(t.rules()[0].priority == 16);
}

TEST_CASE("malformed action lists rejected") {
  FlowTable t;
  FlowMod m;
  m.device = 0;
  m.op = FlowModOp::Add;
  m.match = HeaderSpace::wildcard();
  m.actions = {Action::forward(1), Action::forward(2)};  // double forward
  CHECK_THROWS_AS(t.apply(m, 0), Error);
  m.actions = {Action::forward(1), Action::rewrite(Field::DstAddr, 5)};  // rewrite after forward
  CHECK_THROWS_AS(t.apply(m, 0), Error);
  m.actions = {Action::rewrite(Field::DstAddr, 5), Action::forward(1)};
  CHECK_NOTHROW(t.apply(m, 0));
}

TEST_CASE("topology invariants and json round trip") {
  Topology t = helpers::line_with_hosts(4);
  // link symmetry
  for (DeviceId d : t.devices()) {
    for (const auto& [peer, local] : t.neighbors(d)) {
      auto back = t.peer(peer, t.peer(d, local)->second);
      REQUIRE(back.has_value());
      CHECK(back->first == d);
      CHECK(back->second == local);
    }
  }
  CHECK(t.connected());
  CHECK(t.hop_distances(0).at(3) == 3);

  Topology round = Topology::from_json(t.to_json());
  CHECK(round == t);

  // port exclusivity
  Topology bad = helpers::line_with_hosts(3);
  CHECK_THROWS_AS(bad.add_link(0, 0, 2, 0), Error);
}

TEST_CASE("prefix parsing") {
  Prefix p = Prefix::parse("10.2.0.0/16");
  CHECK(p.to_string() == "10.2.0.0/16");
  CHECK(p.contains(0x0a020304));
  CHECK_FALSE(p.contains(0x0a030304));
  CHECK_THROWS_AS(Prefix::parse("10.2.0.0/40"), Error);
  CHECK_THROWS_AS(Prefix::parse("nonsense"), Error);
}

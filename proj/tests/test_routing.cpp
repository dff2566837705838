#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "podsim/routing.hpp"
#include "support.hpp"

using namespace podsim;
using test::make_peer;

namespace {

RoutingTable make_table(const NodeId& owner, int buckets = kIdBits,
                        int k = 20) {
  return RoutingTable(owner, TableKind::iDHT, 0, buckets, k);
}

}  // namespace

TEST_CASE("bucket_for clamps far prefixes into the last bucket") {
  const NodeId owner{0, 0};
  RoutingTable full = make_table(owner);
  CHECK(full.bucket_for(NodeId{0, 0b100000}) == 5);  // distance in [2^5, 2^6)

  RoutingTable xdht(owner, TableKind::xDHT, 3, 2, 20);
  CHECK(xdht.bucket_for(NodeId{1ULL << 36, 0}) == 1);  // 2^100
  CHECK(xdht.bucket_for(NodeId{0, 1}) == 0);           // distance 1
  CHECK_THROWS_AS(xdht.bucket_for(owner), std::invalid_argument);
}

TEST_CASE("observe_peer inserts, refreshes, and pings when full") {
  const NodeId owner{0, 0};
  const int k = 20;
  RoutingTable t = make_table(owner, kIdBits, k);

  // Insert into an empty bucket.
  auto a = t.observe_peer(make_peer(NodeId{1, 1}, 1), 10);
  CHECK(a.kind == MaintenanceAction::None);
  CHECK(t.size() == 1);

  // Re-observe moves the peer to the most-recent end.
  RoutingTable lru = make_table(owner, kIdBits, 3);
  // All three in the same bucket (distance MSB = bit 68).
  const NodeId p1{0b10000, 1};
  const NodeId p2{0b10000, 2};
  const NodeId p3{0b10000, 3};
  lru.observe_peer(make_peer(p1, 1), 1);
  lru.observe_peer(make_peer(p2, 2), 2);
  lru.observe_peer(make_peer(p3, 3), 3);
  CHECK(lru.size() == 3);
  lru.observe_peer(make_peer(p1, 1), 4);  // refresh p1
  const int b = lru.bucket_for(p1);
  const auto& entries = lru.bucket(static_cast<size_t>(b)).entries;
  REQUIRE(entries.size() == 3);
  CHECK(entries.front().id == p2);  // least recently seen now p2
  CHECK(entries.back().id == p1);

  // Full bucket: ping the least recent, hold the newcomer.
  const NodeId p4{0b10000, 4};
  auto action = lru.observe_peer(make_peer(p4, 4), 5);
  CHECK(action.kind == MaintenanceAction::PingLeastRecent);
  CHECK(action.candidate.id == p2);
  CHECK(action.pending.id == p4);
  CHECK(lru.size() == 3);  // unchanged until the ping resolves
  CHECK_FALSE(lru.contains(p4));
}

TEST_CASE("resolve_ping keeps a live candidate or replaces a dead one") {
  const NodeId owner{0, 0};
  RoutingTable t = make_table(owner, kIdBits, 2);
  const NodeId p1{0b1000, 1};
  const NodeId p2{0b1000, 2};
  const NodeId p3{0b1000, 3};
  t.observe_peer(make_peer(p1, 1), 1);
  t.observe_peer(make_peer(p2, 2), 2);

  SUBCASE("pong arrives: candidate rotates to most recent, pending dropped") {
    auto action = t.observe_peer(make_peer(p3, 3), 3);
    REQUIRE(action.kind == MaintenanceAction::PingLeastRecent);
    CHECK(t.resolve_ping(true, action.candidate.id, action.pending.id, 4));
    CHECK(t.contains(p1));
    CHECK_FALSE(t.contains(p3));
    const auto& entries = t.bucket(static_cast<size_t>(t.bucket_for(p1))).entries;
    CHECK(entries.back().id == p1);  // rotated
    // Double resolve is rejected.
    CHECK_FALSE(t.resolve_ping(true, action.candidate.id, action.pending.id, 5));
  }

  SUBCASE("no pong: candidate evicted, pending admitted most-recent") {
    auto action = t.observe_peer(make_peer(p3, 3), 3);
    REQUIRE(action.kind == MaintenanceAction::PingLeastRecent);
    CHECK(t.resolve_ping(false, action.candidate.id, action.pending.id, 4));
    CHECK_FALSE(t.contains(p1));
    CHECK(t.contains(p3));
    CHECK_FALSE(t.resolve_ping(false, action.candidate.id, action.pending.id, 5));
  }
}

TEST_CASE("closest: trivial cases") {
  const NodeId owner{0, 0};
  RoutingTable t = make_table(owner);
  const NodeId target{5, 5};
  CHECK(t.closest(target, 10).empty());

  t.observe_peer(make_peer(target, 9), 1);
  t.observe_peer(make_peer(NodeId{7, 7}, 2), 1);
  auto res = t.closest(target, 2);
  REQUIRE_FALSE(res.empty());
  CHECK(res.front().id == target);  // distance 0 first
}

TEST_CASE("closest matches the brute-force oracle") {
  Rng rng(11);
  const auto ids = generate_ids(201, rng);
  const NodeId owner = ids[0];

  SUBCASE("full-width table, 200 peers, count 20") {
    RoutingTable t = make_table(owner, kIdBits, 20);
    std::vector<PeerInfo> inserted;
    for (size_t i = 1; i < ids.size(); ++i) {
      PeerInfo p = make_peer(ids[i], static_cast<NodeIndex>(i));
      auto action = t.observe_peer(p, static_cast<Timestamp>(i));
      if (action.kind == MaintenanceAction::None) {
        // might have been an insert or an already-present refresh
      }
    }
    inserted = t.all_entries();
    Rng trng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const NodeId target{trng.next_u64(), trng.next_u64()};
      const auto expect = test::brute_force_closest(inserted, target, 20);
      const auto got = t.closest(target, 20);
      REQUIRE(got.size() == expect.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == expect[i].id);
      }
    }
  }

  SUBCASE("clamped 2-bucket table agrees too") {
    RoutingTable t(owner, TableKind::xDHT, 1, 2, 20);
    for (size_t i = 1; i < 40; ++i) {
      t.observe_peer(make_peer(ids[i], static_cast<NodeIndex>(i)),
                     static_cast<Timestamp>(i));
    }
    const auto inserted = t.all_entries();
    Rng trng(13);
    for (int trial = 0; trial < 20; ++trial) {
      const NodeId target{trng.next_u64(), trng.next_u64()};
      const auto expect =
          test::brute_force_closest(inserted, target, inserted.size());
      const auto got = t.closest(target, inserted.size());
      REQUIRE(got.size() == expect.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == expect[i].id);
      }
    }
  }
}

TEST_CASE("remove_peer") {
  const NodeId owner{0, 0};
  RoutingTable t = make_table(owner);
  const NodeId p{3, 3};
  CHECK_FALSE(t.remove_peer(p));
  t.observe_peer(make_peer(p, 1), 1);
  CHECK(t.size() == 1);
  CHECK(t.remove_peer(p));
  CHECK(t.size() == 0);
  for (const auto& e : t.closest(p, 5)) {
    CHECK_FALSE(e.id == p);
  }
}

TEST_CASE("property: bucket membership and sizes hold under random ops") {
  Rng rng(21);
  const auto ids = generate_ids(400, rng);
  const NodeId owner = ids[0];
  const int k = 8;
  RoutingTable t = make_table(owner, kIdBits, k);

  for (int step = 0; step < 5000; ++step) {
    const NodeId pid = ids[1 + rng.below(ids.size() - 1)];
    const int op = static_cast<int>(rng.below(10));
    if (op < 7) {
      auto action = t.observe_peer(
          make_peer(pid, static_cast<NodeIndex>(rng.below(1000))),
          static_cast<Timestamp>(step));
      if (action.kind == MaintenanceAction::PingLeastRecent) {
        t.resolve_ping(rng.chance(0.5), action.candidate.id, action.pending.id,
                       static_cast<Timestamp>(step));
      }
    } else {
      t.remove_peer(pid);
    }
  }
  size_t total = 0;
  for (int b = 0; b < t.bucket_count(); ++b) {
    const auto& bucket = t.bucket(static_cast<size_t>(b));
    CHECK(bucket.entries.size() <= static_cast<size_t>(k));
    Timestamp prev = 0;
    for (const auto& e : bucket.entries) {
      CHECK(t.bucket_for(e.id) == b);
      CHECK(e.last_seen >= prev);  // LRU order: oldest first
      prev = e.last_seen;
      ++total;
    }
  }
  CHECK(total == t.size());
}

TEST_CASE("property: closest is a prefix of the brute-force sort") {
  Rng rng(31);
  const auto ids = generate_ids(2001, rng);
  const NodeId owner = ids[0];
  RoutingTable t = make_table(owner, kIdBits, 20);
  for (size_t i = 1; i < ids.size(); ++i) {
    t.observe_peer(make_peer(ids[i], static_cast<NodeIndex>(i)),
                   static_cast<Timestamp>(i));
  }
  const auto all = t.all_entries();
  Rng trng(32);
  for (int trial = 0; trial < 25; ++trial) {
    const NodeId target{trng.next_u64(), trng.next_u64()};
    const size_t count = 1 + trng.below(40);
    const auto expect = test::brute_force_closest(all, target, count);
    const auto got = t.closest(target, count);
    REQUIRE(got.size() == expect.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].id == expect[i].id);
    }
  }
}

TEST_CASE("rebuild keeps most recent entries and respects new bucket count") {
  Rng rng(41);
  const auto ids = generate_ids(300, rng);
  const NodeId owner = ids[0];
  RoutingTable t = make_table(owner, kIdBits, 10);
  for (size_t i = 1; i < ids.size(); ++i) {
    t.observe_peer(make_peer(ids[i], static_cast<NodeIndex>(i)),
                   static_cast<Timestamp>(i));
  }
  const size_t before = t.size();
  RoutingTable shrunk = t.reshaped(TableKind::xDHT, 5, 2);
  CHECK(shrunk.bucket_count() == 2);
  CHECK(shrunk.size() <= 20);  // 2 buckets x k=10
  CHECK(shrunk.size() <= before);
  // Every retained entry was in the original table.
  for (const auto& e : shrunk.all_entries()) {
    CHECK(t.contains(e.id));
  }
  // Buckets stay least-recent-first after the rebuild.
  for (int b = 0; b < shrunk.bucket_count(); ++b) {
    Timestamp prev = 0;
    for (const auto& e : shrunk.bucket(static_cast<size_t>(b)).entries) {
      CHECK(e.last_seen >= prev);
      prev = e.last_seen;
    }
  }
}

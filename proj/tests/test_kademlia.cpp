#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "doctest.h"
#include "podsim/sim.hpp"
#include "support.hpp"

using namespace podsim;
using test::small_config;

namespace {

// Drains everything currently scheduled (bounded by the deadline horizon).
void settle(Engine& e) {
  e.run_until(e.now() + 120'000);
}

const LookupRecord* find_record(const Engine& e, uint64_t id) {
  for (const auto& r : e.records()) {
    if (r.lookup_id == id) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("target already in the source table: success with 0 hops") {
  Engine e(small_config(Protocol::Kademlia, 50, 1));
  e.bootstrap();
  Node& src = e.node(0);
  // Pick any peer from the source's own table.
  const auto entries = src.idht.at(0).all_entries();
  REQUIRE_FALSE(entries.empty());
  const uint64_t id = e.start_lookup(0, entries.front().id, 0);
  const auto* r = find_record(e, id);
  REQUIRE(r != nullptr);
  CHECK(r->success);
  CHECK(r->hops == 0);
  CHECK(r->messages == 0);
}

TEST_CASE("one relay hop when only a relayer knows the target") {
  Engine e(small_config(Protocol::Kademlia, 80, 1));
  e.bootstrap();
  // Find a (source, target) pair where the target is not in the source's
  // table: the lookup then needs at least one relayer.
  Node& src = e.node(0);
  const RoutingTable& table = src.idht.at(0);
  NodeIndex target = UINT32_MAX;
  for (NodeIndex i = 1; i < e.node_count(); ++i) {
    if (!table.contains(e.node(i).id)) {
      target = i;
      break;
    }
  }
  REQUIRE(target != UINT32_MAX);
  const uint64_t id = e.start_lookup(0, e.node(target).id, 0);
  settle(e);
  const auto* r = find_record(e, id);
  REQUIRE(r != nullptr);
  CHECK(r->success);
  CHECK(r->hops >= 1);
  CHECK(r->messages > 0);
}

TEST_CASE("start emits alpha requests to the closest table entries") {
  auto cfg = small_config(Protocol::Kademlia, 60, 1);
  Engine e(cfg);
  e.bootstrap();
  Node& src = e.node(0);
  const RoutingTable& table = src.idht.at(0);
  NodeIndex target = UINT32_MAX;
  for (NodeIndex i = 1; i < e.node_count(); ++i) {
    if (!table.contains(e.node(i).id)) {
      target = i;
      break;
    }
  }
  REQUIRE(target != UINT32_MAX);
  const NodeId target_id = e.node(target).id;
  const auto closest3 = table.closest(target_id, 3);
  e.start_lookup(0, target_id, 0);
  auto pend = e.pending_messages();
  std::vector<Message> requests;
  for (const auto& m : pend) {
    if (m.kind == MsgKind::Request && m.sender == 0) requests.push_back(m);
  }
  REQUIRE(requests.size() == 3);  // alpha
  for (const auto& m : requests) {
    const bool expected =
        std::any_of(closest3.begin(), closest3.end(),
                    [&m](const PeerInfo& p) { return p.address == m.receiver; });
    CHECK(expected);
    CHECK(m.depth == 1);
  }
}

TEST_CASE("empty routing table fails immediately") {
  auto cfg = small_config(Protocol::Kademlia, 30, 1);
  Engine e(cfg);
  e.bootstrap();
  Node& src = e.node(3);
  // Drain the table.
  for (const auto& p : src.idht.at(0).all_entries()) {
    src.idht.at(0).remove_peer(p.id);
  }
  const uint64_t id = e.start_lookup(3, e.node(7).id, 0);
  const auto* r = find_record(e, id);
  REQUIRE(r != nullptr);
  CHECK_FALSE(r->success);
}

TEST_CASE("responses carry target contact or XOR-sorted closest peers") {
  Engine e(small_config(Protocol::Kademlia, 120, 1));
  e.bootstrap();
  Node& responder = e.node(5);
  const auto all = responder.idht.at(0).all_entries();
  REQUIRE(all.size() >= 6);

  SUBCASE("known target: exactly the target contact") {
    Message req;
    req.kind = MsgKind::Request;
    req.lookup_id = 4242;
    req.sender = 1;
  req.sender_id = e.node(1).id;
    req.sender_id = e.node(1).id;
    req.receiver = 5;
    req.target = all[2].id;
    req.depth = 1;
    e.kademlia_handle_request(responder, req);
    auto pend = e.pending_messages();
    const Message* resp = nullptr;
    for (const auto& m : pend) {
      if (m.kind == MsgKind::Response && m.sender == 5) resp = &m;
    }
    REQUIRE(resp != nullptr);
    CHECK(resp->carries_target);
    REQUIRE(resp->peers.size() == 1);
    CHECK(resp->peers.front().id == all[2].id);
  }

  SUBCASE("unknown target: beta closest, matching the brute-force oracle") {
    Rng rng(77);
    NodeId target{rng.next_u64(), rng.next_u64()};
    while (responder.idht.at(0).contains(target)) {
      target = NodeId{rng.next_u64(), rng.next_u64()};
    }
    Message req;
    req.kind = MsgKind::Request;
    req.lookup_id = 4243;
    req.sender = 1;
  req.sender_id = e.node(1).id;
    req.sender_id = e.node(1).id;
    req.receiver = 5;
    req.target = target;
    req.depth = 1;
    e.kademlia_handle_request(responder, req);
    auto pend = e.pending_messages();
    const Message* resp = nullptr;
    for (const auto& m : pend) {
      if (m.kind == MsgKind::Response && m.sender == 5 &&
          m.lookup_id == 4243) {
        resp = &m;
      }
    }
    REQUIRE(resp != nullptr);
    CHECK_FALSE(resp->carries_target);
    // The responder may have observed the requester meanwhile; compare
    // against the oracle over the requester-free entry set.
    auto entries = responder.idht.at(0).all_entries();
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [&e](const PeerInfo& p) {
                                   return p.id == e.node(1).id;
                                 }),
                  entries.end());
    const auto expect = test::brute_force_closest(entries, target, 20);
    REQUIRE(resp->peers.size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) {
      CHECK(resp->peers[i].id == expect[i].id);
    }
  }
}

TEST_CASE("truncation: a small table answers with everything it has") {
  Engine e(small_config(Protocol::Kademlia, 30, 1));
  e.bootstrap();
  Node& responder = e.node(2);
  auto& table = responder.idht.at(0);
  while (table.size() > 5) {
    table.remove_peer(table.all_entries().front().id);
  }
  Rng rng(88);
  NodeId target{rng.next_u64(), rng.next_u64()};
  Message req;
  req.kind = MsgKind::Request;
  req.lookup_id = 999;
  req.sender = 1;
  req.sender_id = e.node(1).id;
  req.receiver = 2;
  req.target = target;
  req.depth = 1;
  e.kademlia_handle_request(responder, req);
  const Message* resp = nullptr;
  auto pend = e.pending_messages();
  for (const auto& m : pend) {
    if (m.kind == MsgKind::Response && m.sender == 2) resp = &m;
  }
  REQUIRE(resp != nullptr);
  CHECK(resp->peers.size() <= 6);  // 5 entries + possibly the observed sender
  CHECK(resp->peers.size() >= 5);
}

TEST_CASE("converged overlay: every sampled pair resolves") {
  Engine e(small_config(Protocol::Kademlia, 300, 1, 99));
  e.bootstrap();
  Rng pick(123);
  std::vector<uint64_t> ids;
  for (int trial = 0; trial < 200; ++trial) {
    const NodeIndex a = static_cast<NodeIndex>(pick.below(300));
    NodeIndex b = static_cast<NodeIndex>(pick.below(300));
    while (b == a) b = static_cast<NodeIndex>(pick.below(300));
    ids.push_back(e.start_lookup(a, e.node(b).id, 0));
  }
  settle(e);
  for (uint64_t id : ids) {
    const auto* r = find_record(e, id);
    REQUIRE(r != nullptr);
    CHECK(r->success);
  }
  // Honest-path liveness: nothing timed out.
  CHECK(e.counters().effective_request_timeouts == 0);
}

TEST_CASE("offline candidates time out, the lookup retries and succeeds") {
  Engine e(small_config(Protocol::Kademlia, 200, 1, 5));
  e.bootstrap();
  Node& src = e.node(0);
  const RoutingTable& table = src.idht.at(0);
  NodeIndex target = UINT32_MAX;
  for (NodeIndex i = 1; i < e.node_count(); ++i) {
    if (!table.contains(e.node(i).id)) {
      target = i;
      break;
    }
  }
  REQUIRE(target != UINT32_MAX);
  const NodeId target_id = e.node(target).id;
  // Kill the three closest candidates the source would contact first.
  for (const auto& p : table.closest(target_id, 3)) {
    if (p.address != target) e.node(p.address).online = false;
  }
  const uint64_t id = e.start_lookup(0, target_id, 0);
  settle(e);
  const auto* r = find_record(e, id);
  REQUIRE(r != nullptr);
  CHECK(r->success);
  CHECK(e.counters().effective_request_timeouts >= 1);
}

TEST_CASE("exhaustion on an isolated clique fails after 3 attempts") {
  auto cfg = small_config(Protocol::Kademlia, 40, 1);
  Engine e(cfg);
  e.bootstrap();
  // Looking up an id that no node has (a fabricated id) must fail by
  // exhaustion once the k closest known nodes have all been visited.
  Rng rng(9);
  NodeId ghost{rng.next_u64(), rng.next_u64()};
  const uint64_t id = e.start_lookup(4, ghost, 0);
  settle(e);
  const auto* r = find_record(e, id);
  REQUIRE(r != nullptr);
  CHECK_FALSE(r->success);
  CHECK(r->attempts == 3);
}

TEST_CASE("monotone progress: request depths never skip") {
  // Depth d+1 requests can only follow a depth-d response.
  Engine e(small_config(Protocol::Kademlia, 150, 1, 31));
  e.bootstrap();
  Node& src = e.node(0);
  NodeIndex target = UINT32_MAX;
  for (NodeIndex i = 1; i < e.node_count(); ++i) {
    if (!src.idht.at(0).contains(e.node(i).id)) {
      target = i;
      break;
    }
  }
  REQUIRE(target != UINT32_MAX);
  const uint64_t id = e.start_lookup(0, e.node(target).id, 0);
  settle(e);
  const auto* r = find_record(e, id);
  REQUIRE(r != nullptr);
  CHECK(r->success);
  CHECK(r->hops <= 4);  // logarithmic-scale path in a 150-node overlay
}

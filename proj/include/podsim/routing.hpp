#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "podsim/ids.hpp"

namespace podsim {

using Timestamp = uint64_t;  // simulated milliseconds
using DomainId = uint16_t;
using NodeIndex = uint32_t;

// Scope tag for a table that spans the gateway overlay rather than a domain.
inline constexpr DomainId kGatewayScope = 0xffff;

struct PeerInfo {
  NodeId id;
  NodeIndex address = 0;  // simulator node index
  DomainId domain = 0;
  Timestamp last_seen = 0;
};

enum class TableKind { iDHT, xDHT };

// Result of observe_peer. When a bucket is full the caller must ping the
// least recently seen entry and report the outcome via resolve_ping.
struct MaintenanceAction {
  enum Kind { None, PingLeastRecent } kind = None;
  PeerInfo candidate;  // bucket head to ping
  PeerInfo pending;    // the newly observed peer, held until the ping resolves
};

// One k-bucket: entries ordered least-recently-seen first.
struct KBucket {
  std::vector<PeerInfo> entries;

  bool contains(const NodeId& id) const;
  bool touch(const NodeId& id, Timestamp now);  // move to most-recent
  bool remove(const NodeId& id);
};

// Kademlia-style routing table. The bucket count is variable: full iDHTs use
// up to 128 buckets, SovKad xDHTs use exactly 2, and SovKad reallocation can
// rebuild a table with any count in [2, 128]. Peers whose prefix index
// exceeds bucket_count-1 collapse into the last bucket.
class RoutingTable {
 public:
  RoutingTable() = default;
  RoutingTable(NodeId owner, TableKind kind, DomainId scope, int bucket_count,
               int k);

  // Bucket that would hold peer_id: min(bucket_index(owner, peer_id),
  // bucket_count - 1). Throws std::invalid_argument if peer_id == owner.
  int bucket_for(const NodeId& peer_id) const;

  // Standard Kademlia maintenance. Present -> refresh recency. Absent with
  // room -> insert. Absent with a full bucket -> PingLeastRecent, unless a
  // ping is already outstanding for that bucket (then the peer is dropped).
  MaintenanceAction observe_peer(const PeerInfo& peer, Timestamp now);

  // Outcome of an eviction ping. ponged=true keeps the candidate and drops
  // the pending peer; ponged=false replaces the candidate with the pending
  // peer. Returns false (and changes nothing) if no matching ping ticket is
  // outstanding.
  bool resolve_ping(bool ponged, const NodeId& candidate, const NodeId& pending,
                    Timestamp now);

  // Up to `count` peers from the whole table, ascending by XOR distance to
  // target. Deterministic: ids are distinct so the order is total.
  std::vector<PeerInfo> closest(const NodeId& target, size_t count) const;

  bool remove_peer(const NodeId& peer_id);
  bool contains(const NodeId& peer_id) const;
  std::optional<PeerInfo> find(const NodeId& peer_id) const;

  // Redistributes all entries over `new_bucket_count` buckets. Overflowing
  // entries are evicted least-recently-seen first.
  void rebuild(int new_bucket_count);

  // Copy of this table with a new shape (kind, scope, bucket count), keeping
  // the most recently seen entries on overflow.
  RoutingTable reshaped(TableKind kind, DomainId scope, int bucket_count) const;

  // All entries, bucket by bucket. Order is deterministic.
  std::vector<PeerInfo> all_entries() const;

  size_t size() const;
  bool empty() const { return size() == 0; }

  const NodeId& owner() const { return owner_; }
  TableKind kind() const { return kind_; }
  DomainId scope() const { return scope_; }
  int bucket_count() const { return static_cast<int>(buckets_.size()); }
  int k() const { return k_; }
  const KBucket& bucket(size_t i) const { return buckets_[i]; }
  bool ping_pending(int bucket) const;

 private:
  struct PendingPing {
    NodeId candidate;
    PeerInfo pending_peer;
  };

  NodeId owner_;
  TableKind kind_ = TableKind::iDHT;
  DomainId scope_ = 0;
  int k_ = 20;
  std::vector<KBucket> buckets_;
  std::vector<std::optional<PendingPing>> pending_;
};

}  // namespace podsim

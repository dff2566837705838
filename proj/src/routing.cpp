#include "podsim/routing.hpp"

#include <algorithm>
#include <stdexcept>

namespace podsim {

bool KBucket::contains(const NodeId& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return true;
  }
  return false;
}

bool KBucket::touch(const NodeId& id, Timestamp now) {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id == id) {
      PeerInfo e = entries[i];
      e.last_seen = std::max(e.last_seen, now);
      entries.erase(entries.begin() + static_cast<ptrdiff_t>(i));
      entries.push_back(e);
      return true;
    }
  }
  return false;
}

bool KBucket::remove(const NodeId& id) {
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id == id) {
      entries.erase(entries.begin() + static_cast<ptrdiff_t>(i));
      return true;
    }
  }
  return false;
}

RoutingTable::RoutingTable(NodeId owner, TableKind kind, DomainId scope,
                           int bucket_count, int k)
    : owner_(owner), kind_(kind), scope_(scope), k_(k) {
  if (bucket_count < 2 || bucket_count > kIdBits) {
    throw std::invalid_argument("RoutingTable: bucket_count out of [2, 128]");
  }
  buckets_.resize(static_cast<size_t>(bucket_count));
  pending_.resize(static_cast<size_t>(bucket_count));
}

int RoutingTable::bucket_for(const NodeId& peer_id) const {
  const int idx = bucket_index(owner_, peer_id);
  return std::min(idx, bucket_count() - 1);
}

MaintenanceAction RoutingTable::observe_peer(const PeerInfo& peer,
                                             Timestamp now) {
  const int b = bucket_for(peer.id);
  KBucket& bucket = buckets_[static_cast<size_t>(b)];
  if (bucket.touch(peer.id, now)) {
    return {};
  }
  if (bucket.entries.size() < static_cast<size_t>(k_)) {
    PeerInfo e = peer;
    e.last_seen = now;
    bucket.entries.push_back(e);
    return {};
  }
  auto& pending = pending_[static_cast<size_t>(b)];
  if (pending.has_value()) {
    // An eviction ping is already in flight for this bucket; drop the peer.
    return {};
  }
  PeerInfo fresh = peer;
  fresh.last_seen = now;
  pending = PendingPing{bucket.entries.front().id, fresh};
  MaintenanceAction action;
  action.kind = MaintenanceAction::PingLeastRecent;
  action.candidate = bucket.entries.front();
  action.pending = fresh;
  return action;
}

bool RoutingTable::resolve_ping(bool ponged, const NodeId& candidate,
                                const NodeId& pending, Timestamp now) {
  const int b = bucket_for(candidate);
  auto& ticket = pending_[static_cast<size_t>(b)];
  if (!ticket.has_value() || ticket->candidate != candidate ||
      ticket->pending_peer.id != pending) {
    return false;
  }
  KBucket& bucket = buckets_[static_cast<size_t>(b)];
  if (ponged) {
    bucket.touch(candidate, now);
  } else {
    bucket.remove(candidate);
    if (!bucket.touch(pending, now) &&
        bucket.entries.size() < static_cast<size_t>(k_)) {
      PeerInfo e = ticket->pending_peer;
      e.last_seen = now;
      bucket.entries.push_back(e);
    }
  }
  ticket.reset();
  return true;
}

std::vector<PeerInfo> RoutingTable::closest(const NodeId& target,
                                            size_t count) const {
  if (count == 0) return {};

  auto by_distance = [&target](const PeerInfo& a, const PeerInfo& b) {
    return xor_distance(a.id, target) < xor_distance(b.id, target);
  };

  // Fast path for full-width tables: visit buckets in ascending order of the
  // minimum distance they can contain. For a target in bucket j (relative to
  // the owner), bucket j holds distances < 2^j, buckets i < j all hold
  // distances in [2^j, 2^(j+1)), and buckets i > j hold [2^i, 2^(i+1)).
  if (bucket_count() == kIdBits && owner_ != target) {
    const int j = bucket_for(target);
    std::vector<PeerInfo> result;
    auto take_sorted = [&](std::vector<PeerInfo>& pool) {
      std::sort(pool.begin(), pool.end(), by_distance);
      for (const auto& p : pool) {
        if (result.size() >= count) break;
        result.push_back(p);
      }
    };

    std::vector<PeerInfo> pool = buckets_[static_cast<size_t>(j)].entries;
    take_sorted(pool);
    if (result.size() < count) {
      pool.clear();
      for (int i = 0; i < j; ++i) {
        const auto& es = buckets_[static_cast<size_t>(i)].entries;
        pool.insert(pool.end(), es.begin(), es.end());
      }
      take_sorted(pool);
    }
    for (int i = j + 1; i < bucket_count() && result.size() < count; ++i) {
      pool = buckets_[static_cast<size_t>(i)].entries;
      take_sorted(pool);
    }
    return result;
  }

  // General path (clamped tables, or target == owner): sort everything.
  std::vector<PeerInfo> pool = all_entries();
  std::sort(pool.begin(), pool.end(), by_distance);
  if (pool.size() > count) pool.resize(count);
  return pool;
}

bool RoutingTable::remove_peer(const NodeId& peer_id) {
  if (peer_id == owner_) return false;
  const int b = bucket_for(peer_id);
  return buckets_[static_cast<size_t>(b)].remove(peer_id);
}

bool RoutingTable::contains(const NodeId& peer_id) const {
  if (peer_id == owner_) return false;
  const int b = bucket_for(peer_id);
  return buckets_[static_cast<size_t>(b)].contains(peer_id);
}

std::optional<PeerInfo> RoutingTable::find(const NodeId& peer_id) const {
  if (peer_id == owner_) return std::nullopt;
  const int b = bucket_for(peer_id);
  for (const auto& e : buckets_[static_cast<size_t>(b)].entries) {
    if (e.id == peer_id) return e;
  }
  return std::nullopt;
}

void RoutingTable::rebuild(int new_bucket_count) {
  if (new_bucket_count < 2 || new_bucket_count > kIdBits) {
    throw std::invalid_argument("rebuild: bucket_count out of [2, 128]");
  }
  std::vector<PeerInfo> entries = all_entries();
  buckets_.assign(static_cast<size_t>(new_bucket_count), {});
  pending_.assign(static_cast<size_t>(new_bucket_count), std::nullopt);
  // Refill most recently seen first so overflow evicts the oldest entries,
  // then restore least-recent-first order within each bucket.
  std::sort(entries.begin(), entries.end(),
            [](const PeerInfo& a, const PeerInfo& b) {
              return a.last_seen > b.last_seen;
            });
  for (const auto& e : entries) {
    KBucket& bucket = buckets_[static_cast<size_t>(bucket_for(e.id))];
    if (bucket.entries.size() < static_cast<size_t>(k_)) {
      bucket.entries.push_back(e);
    }
  }
  for (auto& bucket : buckets_) {
    std::reverse(bucket.entries.begin(), bucket.entries.end());
  }
}

RoutingTable RoutingTable::reshaped(TableKind kind, DomainId scope,
                                    int bucket_count) const {
  RoutingTable out = *this;
  out.kind_ = kind;
  out.scope_ = scope;
  out.rebuild(bucket_count);
  return out;
}

std::vector<PeerInfo> RoutingTable::all_entries() const {
  std::vector<PeerInfo> out;
  out.reserve(size());
  for (const auto& bucket : buckets_) {
    out.insert(out.end(), bucket.entries.begin(), bucket.entries.end());
  }
  return out;
}

size_t RoutingTable::size() const {
  size_t n = 0;
  for (const auto& bucket : buckets_) n += bucket.entries.size();
  return n;
}

bool RoutingTable::ping_pending(int bucket) const {
  return pending_[static_cast<size_t>(bucket)].has_value();
}

}  // namespace podsim

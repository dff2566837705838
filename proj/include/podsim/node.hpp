#pragma once

#include <map>
#include <vector>

#include "podsim/reputation.hpp"
#include "podsim/routing.hpp"

namespace podsim {

inline constexpr int kBucketBudget = 256;  // total k-buckets per SovKad node
inline constexpr int kXdhtBuckets = 2;
inline constexpr int kMaxDomains = 64;

// Per-iDHT bucket count for a SovKad node joined to `joined` of the
// overlay's `total_domains` domains. The three allocation rules: equal
// bucket counts across iDHTs, 2 buckets per xDHT, and a total of at most
// 256, with 128 as the per-table cap.
// Throws std::invalid_argument outside 1 <= joined <= total_domains <= 64.
int allocate_buckets(int total_domains, int joined);

enum class AdversaryStrategy { Honest, DropAll, IntraOnlyDrop };

// One simulated participant. A single struct covers all three protocols;
// only the tables relevant to the configured protocol are populated.
struct Node {
  NodeIndex index = 0;
  NodeId id;
  bool online = true;
  bool honest = true;
  bool is_gateway = false;           // FedKad gateway role
  DomainId home_domain = 0;          // domain assigned at creation
  std::vector<DomainId> joined;      // all current memberships (SovKad)
  std::vector<DomainId> response_joined;  // joined via attack response

  // kademlia: single whole-network table lives in idht[0].
  // fedkad: idht[home] + xdht[kGatewayScope]; gateways instead hold one
  //   table per domain in gateway_tables.
  // sovkad: idht[d] per joined domain, xdht[d] per foreign domain.
  std::map<DomainId, RoutingTable> idht;
  std::map<DomainId, RoutingTable> xdht;
  std::map<DomainId, RoutingTable> gateway_tables;

  // SovKad reputation per foreign domain, plus the post-join health window
  // used by the leave rule for response deployments.
  std::map<DomainId, DomainReputation> reputation;
  std::map<DomainId, DomainReputation> joined_health;
  std::map<DomainId, size_t> joined_health_streak;
  Timestamp last_response_join = 0;
  bool ever_joined_response = false;

  bool member_of(DomainId d) const {
    for (DomainId j : joined) {
      if (j == d) return true;
    }
    return false;
  }

  bool is_home(DomainId d) const { return d == home_domain; }

  PeerInfo peer_info(Timestamp now) const {
    return PeerInfo{id, index, home_domain, now};
  }
};

}  // namespace podsim

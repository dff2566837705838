#pragma once

#include <algorithm>
#include <vector>

#include "podsim/config.hpp"
#include "podsim/routing.hpp"
#include "podsim/sim.hpp"

namespace podsim::test {

// Independent oracle: XOR-sort all entries by distance to target and take a
// prefix. Deliberately ignorant of bucket structure.
inline std::vector<PeerInfo> brute_force_closest(
    const std::vector<PeerInfo>& entries, const NodeId& target, size_t count) {
  std::vector<PeerInfo> sorted = entries;
  std::sort(sorted.begin(), sorted.end(),
            [&target](const PeerInfo& a, const PeerInfo& b) {
              return xor_distance(a.id, target) < xor_distance(b.id, target);
            });
  if (sorted.size() > count) sorted.resize(count);
  return sorted;
}

// Independent oracle for the bucket index: scan bits from the top.
inline int msb_by_scan(const Distance& d) {
  for (int bit = 127; bit >= 0; --bit) {
    const uint64_t word = bit >= 64 ? d.hi : d.lo;
    const int pos = bit >= 64 ? bit - 64 : bit;
    if ((word >> pos) & 1ULL) return bit;
  }
  return -1;
}

inline PeerInfo make_peer(const NodeId& id, NodeIndex address = 0,
                          DomainId domain = 0, Timestamp seen = 0) {
  return PeerInfo{id, address, domain, seen};
}

inline SimConfig small_config(Protocol protocol, uint32_t nodes,
                              uint16_t domains, uint64_t seed = 7) {
  SimConfig cfg;
  cfg.protocol = protocol;
  cfg.n_nodes = nodes;
  cfg.n_domains = domains;
  cfg.seed = seed;
  cfg.sim_duration_ms = 60'000;
  cfg.scenario_label = "custom";
  return cfg;
}

}  // namespace podsim::test

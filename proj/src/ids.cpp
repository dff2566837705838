#include "podsim/ids.hpp"

#include <cstdio>
#include <stdexcept>
#include <unordered_set>

namespace podsim {

int bucket_index(const NodeId& self_id, const NodeId& other) {
  const Distance d = xor_distance(self_id, other);
  if (d.is_zero()) {
    throw std::invalid_argument("bucket_index: ids are equal");
  }
  return msb(d);
}

std::vector<NodeId> generate_ids(size_t count, Rng& rng) {
  if (count < 1) {
    throw std::invalid_argument("generate_ids: count must be >= 1");
  }
  std::vector<NodeId> ids;
  ids.reserve(count);
  std::unordered_set<NodeId, NodeIdHash> seen;
  seen.reserve(count * 2);
  while (ids.size() < count) {
    NodeId id{rng.next_u64(), rng.next_u64()};
    if (seen.insert(id).second) {
      ids.push_back(id);
    }
    // collision: just draw again
  }
  return ids;
}

std::string to_hex(const NodeId& id) {
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx",
                static_cast<unsigned long long>(id.hi),
                static_cast<unsigned long long>(id.lo));
  return std::string(buf);
}

}  // namespace podsim

#include "podsim/node.hpp"

#include <algorithm>
#include <stdexcept>

namespace podsim {

int allocate_buckets(int total_domains, int joined) {
  if (total_domains > kMaxDomains) {
    throw std::invalid_argument("allocate_buckets: more than 64 domains");
  }
  if (joined < 1 || joined > total_domains) {
    throw std::invalid_argument("allocate_buckets: joined out of range");
  }
  const int xdht_total = kXdhtBuckets * (total_domains - joined);
  const int per = (kBucketBudget - xdht_total) / joined;
  return std::min(kIdBits, per);
}

}  // namespace podsim

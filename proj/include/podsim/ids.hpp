#pragma once

#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "podsim/rng.hpp"

namespace podsim {

inline constexpr int kIdBits = 128;

// 128-bit node identifier. Comparisons are over the full width.
struct NodeId {
  uint64_t hi = 0;
  uint64_t lo = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

// XOR of two NodeIds interpreted as an unsigned 128-bit integer.
struct Distance {
  uint64_t hi = 0;
  uint64_t lo = 0;

  friend auto operator<=>(const Distance&, const Distance&) = default;

  bool is_zero() const { return hi == 0 && lo == 0; }
};

inline Distance xor_distance(const NodeId& a, const NodeId& b) {
  return Distance{a.hi ^ b.hi, a.lo ^ b.lo};
}

inline Distance xor_combine(const Distance& a, const Distance& b) {
  return Distance{a.hi ^ b.hi, a.lo ^ b.lo};
}

// Position of the most significant set bit, in [0, 127].
// Precondition: d is non-zero.
inline int msb(const Distance& d) {
  if (d.hi != 0) return 127 - std::countl_zero(d.hi);
  return 63 - std::countl_zero(d.lo);
}

// Bucket index of `other` relative to `self_id`: the index i such that
// 2^i <= xor_distance(self_id, other) < 2^(i+1).
// Throws std::invalid_argument if the ids are equal (a node never stores
// itself).
int bucket_index(const NodeId& self_id, const NodeId& other);

// Draws `count` distinct ids uniformly from the generator. Deterministic for
// a fixed rng state. Throws std::invalid_argument if count < 1.
std::vector<NodeId> generate_ids(size_t count, Rng& rng);

std::string to_hex(const NodeId& id);

struct NodeIdHash {
  size_t operator()(const NodeId& id) const {
    // splitmix-style mix of the two words
    uint64_t x = id.hi * 0x9e3779b97f4a7c15ULL ^ id.lo;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    return static_cast<size_t>(x);
  }
};

}  // namespace podsim

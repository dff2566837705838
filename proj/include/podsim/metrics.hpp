#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "podsim/routing.hpp"

namespace podsim {

// One terminated lookup. The unit of every metric in the suite.
struct LookupRecord {
  std::string run_id;
  std::string protocol;
  std::string scenario;
  uint32_t n_nodes = 0;
  uint16_t n_domains = 0;
  uint64_t lookup_id = 0;
  std::string kind;  // "intra" | "inter"
  DomainId source_domain = 0;
  DomainId target_domain = 0;
  bool success = false;
  uint32_t hops = 0;
  uint32_t messages = 0;
  uint64_t latency_ms = 0;
  uint32_t attempts = 0;
  // Maintenance PING/PONG traffic attributed to this lookup. Included in
  // `messages`; kept separately so aggregation can exclude it. Not part of
  // the CSV schema.
  uint32_t ping_messages = 0;
};

class RecordStore {
 public:
  // Throws std::invalid_argument on a duplicate lookup_id.
  void add(LookupRecord record);

  const std::vector<LookupRecord>& rows() const { return rows_; }
  size_t size() const { return rows_.size(); }

 private:
  std::vector<LookupRecord> rows_;
  std::unordered_set<uint64_t> seen_;
};

struct AggregateOptions {
  std::optional<DomainId> target_domain_filter;
  std::optional<std::string> kind_filter;  // "intra" | "inter"
  bool include_maintenance = true;  // count attributed PING/PONG in messages
};

struct AggregateStats {
  std::string protocol;
  std::string scenario;
  uint32_t n_nodes = 0;
  uint16_t n_domains = 0;
  double success_rate = 0.0;
  double success_std = 0.0;
  double hops_mean = 0.0;  // successful lookups only
  double hops_std = 0.0;
  double messages_mean = 0.0;  // all lookups, failures included
  double messages_std = 0.0;
  size_t count = 0;          // records contributing to the group
  size_t success_count = 0;  // records contributing to hop stats
};

// Groups records by (protocol, scenario, n_nodes, n_domains) and computes
// means with population standard deviations. Hop statistics cover
// successful lookups only; message statistics cover every lookup. Output is
// sorted by group key; empty groups are omitted. Pure in the record
// multiset: permuting the input does not change the result.
std::vector<AggregateStats> aggregate(const std::vector<LookupRecord>& records,
                                      const AggregateOptions& options = {});

void write_records_csv(const std::vector<LookupRecord>& records,
                       const std::string& path);
void write_aggregates_csv(const std::vector<AggregateStats>& stats,
                          const std::string& path);

// Inverse of write_records_csv, used for round-trip checks and offline
// re-aggregation.
std::vector<LookupRecord> parse_records_csv(const std::string& path);

// One whitespace-delimited table per (metric, n_nodes) with columns
// n_domains, protocol, mean, std. Returns the paths written.
std::vector<std::string> emit_plot_data(const std::vector<AggregateStats>& stats,
                                        const std::string& dir);

}  // namespace podsim

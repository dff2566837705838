#pragma once

#include <cstdint>
#include <unordered_map>
#include <variant>
#include <vector>

#include "podsim/config.hpp"
#include "podsim/metrics.hpp"
#include "podsim/node.hpp"
#include "podsim/protocol.hpp"
#include "podsim/rng.hpp"

namespace podsim {

// Event payloads. Everything the simulator does is one of these, processed
// in strict (fire_at, insertion sequence) order.
struct EvMessage {
  Message msg;
};
struct EvLookupStart {
  NodeIndex node;
};
struct EvChurnLeave {
  NodeIndex node;
};
struct EvChurnJoin {
  NodeIndex node;
};
struct EvRequestTimeout {
  uint64_t lookup_id;
  NodeId peer;
  uint64_t seq;
};
struct EvAttemptTimeout {
  uint64_t lookup_id;
  int attempt;
};
struct EvDeadline {
  uint64_t lookup_id;
};
struct EvPingTimeout {
  NodeIndex owner;
  TableRef table;
  NodeId candidate;
  NodeId pending;
  uint64_t lookup_id;
};
struct EvResponseCheck {
  NodeIndex node;
};
struct EvFlowExpire {
  uint64_t flow_id;
};

using EventPayload =
    std::variant<EvMessage, EvLookupStart, EvChurnLeave, EvChurnJoin,
                 EvRequestTimeout, EvAttemptTimeout, EvDeadline, EvPingTimeout,
                 EvResponseCheck, EvFlowExpire>;

struct Event {
  Timestamp fire_at = 0;
  uint64_t seq = 0;  // breaks ties: total deterministic order
  EventPayload payload;
};

struct RunCounters {
  uint64_t messages_sent = 0;
  uint64_t messages_delivered = 0;
  uint64_t messages_dropped_adversary = 0;
  uint64_t messages_lost_offline = 0;
  uint64_t gateway_leg_messages = 0;
  uint64_t maintenance_pings = 0;
  uint64_t lookups_initiated = 0;
  uint64_t lookups_recorded = 0;
  uint64_t effective_request_timeouts = 0;
  uint64_t response_joins = 0;
  uint64_t response_joins_suppressed = 0;
  uint64_t response_leaves = 0;
};

// Deterministic discrete-event simulation of one (config, seed) cell.
class Engine {
 public:
  explicit Engine(SimConfig config);

  // Creates and seeds the overlay so that the happy path resolves every
  // lookup, then primes workload/churn schedules. Throws
  // std::invalid_argument when the config is invalid.
  void bootstrap();

  // Drains the event queue. New lookups stop at sim_duration; already
  // started lookups are allowed to settle so that every initiated lookup
  // yields exactly one record.
  void run();

  const SimConfig& config() const { return config_; }
  const std::vector<LookupRecord>& records() const { return store_.rows(); }
  const RunCounters& counters() const { return counters_; }
  Timestamp now() const { return now_; }
  size_t node_count() const { return nodes_.size(); }
  Node& node(NodeIndex i) { return nodes_[i]; }
  const Node& node(NodeIndex i) const { return nodes_[i]; }
  const std::vector<NodeIndex>& domain_members(DomainId d) const {
    return members_[d];
  }
  const std::vector<NodeIndex>& gateways() const { return gateways_; }

  // FNV-1a digest over the full post-bootstrap state; equal configs and
  // seeds must produce equal digests.
  uint64_t state_digest() const;

  // Uniform latency sample in [latency_min, latency_max].
  Timestamp sample_latency();

  // --- protocol operations (driven by the event loop; public so tests can
  // exercise the documented contracts directly) ---

  // Starts one workload lookup from `source`. Returns the lookup id.
  uint64_t start_lookup(NodeIndex source, const NodeId& target,
                        DomainId target_domain);

  void kademlia_handle_request(Node& receiver, const Message& msg);
  void fedkad_start_inter_lookup(Node& source, uint64_t lookup_id);
  void fedkad_gateway_handle_request(Node& gateway, const Message& msg);
  void fedkad_handle_gateway_forward(Node& receiver, const Message& msg);
  void fedkad_handle_gateway_response(Node& source, const Message& msg);
  void sovkad_start_inter_lookup(Node& source, uint64_t lookup_id);
  void sovkad_handle_foreign_request(Node& relayer, const Message& msg);
  void sovkad_handle_foreign_response(Node& source, const Message& msg);

  // SovKad membership changes. Return false when refused (constraints,
  // throttle, preconditions).
  bool join_domain(Node& node, DomainId domain, bool response_join);
  bool leave_domain(Node& node, DomainId domain);

  double update_reputation(Node& node, DomainId domain, bool success);

  // Test hook: all MessageDelivery events currently scheduled.
  std::vector<Message> pending_messages() const;

  // Test hook: nodes with a scheduled workload arrival.
  std::vector<NodeIndex> pending_lookup_starts() const;

  // Test hook: process events until the queue is empty or `until` passes.
  void run_until(Timestamp until);

  bool bootstrapped() const { return bootstrapped_; }

 private:
  friend struct EngineTestAccess;

  // -- bootstrap helpers
  void create_nodes();
  void assign_roles_and_domains(const std::vector<NodeId>& ids);
  void seed_tables();
  void seed_node_tables(Node& n);
  void symmetric_neighbor_seed(DomainId domain,
                               const std::vector<NodeIndex>& members);
  void kademlia_symmetric_seed();
  void warmup_self_lookup(Node& n, DomainId scope);
  void bootstrap_observe(Node& owner, const TableRef& table,
                         const PeerInfo& peer);
  void schedule_workload(NodeIndex node, bool first);
  void schedule_churn();
  void setup_joiner(Node& n);

  // -- event processing
  void handle_event(const Event& ev);
  void handle_message(const Message& msg);
  bool adversary_drops(const Node& receiver, const Message& msg) const;
  void handle_lookup_start(NodeIndex idx);
  void handle_churn_leave(NodeIndex idx);
  void handle_churn_join(NodeIndex idx);
  void handle_request_timeout(const EvRequestTimeout& ev);
  void handle_attempt_timeout(const EvAttemptTimeout& ev);
  void handle_deadline(uint64_t lookup_id);
  void handle_ping_timeout(const EvPingTimeout& ev);
  void handle_response_check(NodeIndex idx);

  // -- shared machinery
  void schedule(Timestamp at, EventPayload payload);
  void send(Message msg);
  RoutingTable* table_for(Node& n, const TableRef& ref);
  TableRef observe_target_table(const Node& receiver, const Message& msg) const;
  void observe_sender(Node& receiver, const Message& msg);
  void observe_peer_maintained(Node& owner, const TableRef& table,
                               const PeerInfo& peer, uint64_t lookup_id);
  void send_ping(Node& owner, const TableRef& table,
                 const MaintenanceAction& action, uint64_t lookup_id);

  // -- iterative intra-domain lookup engine
  void iter_start(uint64_t lookup_id, Node& runner, const NodeId& target,
                  DomainId scope);
  void iter_merge_and_continue(IterLookup& it, const Message& msg);
  void iter_handle_timeout(IterLookup& it, const NodeId& peer, uint64_t seq);
  void iter_top_up(IterLookup& it);
  void iter_attempt_exhausted(IterLookup& it);
  void iter_restart(IterLookup& it);
  void iter_seed_from_table(IterLookup& it);
  bool iter_merge_peer(IterLookup& it, const PeerInfo& peer, int depth);
  void iter_send_request(IterLookup& it, IterLookup::Candidate& cand);

  // -- plain request handling (shared by all protocols)
  void respond_closest(Node& receiver, const Message& msg, TableRef table);

  // -- relay flows (FedKad entry nodes, SovKad relayers)
  void flow_start(Node& runner, const Message& request, bool fed_entry);
  void flow_handle_response(Node& runner, RelayFlow& flow, const Message& msg);
  void flow_send_step(RelayFlow& flow, const PeerInfo& next, int depth);
  void flow_reply_found(RelayFlow& flow, const PeerInfo& target_contact,
                        int found_depth);

  // -- lookup lifecycle
  struct LookupJob {
    uint64_t lookup_id = 0;
    NodeIndex source = 0;
    LookupKind kind = LookupKind::Intra;
    DomainId source_domain = 0;
    DomainId target_domain = 0;
    NodeId target;
    Timestamp started_at = 0;
    uint32_t messages = 0;
    uint32_t ping_messages = 0;
    int attempts = 0;
    int max_depth = 0;
    bool live = true;
  };

  LookupJob* job(uint64_t lookup_id);
  void finish_job(LookupJob& j, bool success, int hops);
  void erase_dead_ticket(uint64_t lookup_id);
  void fail_inter_with_reputation(LookupJob& j, InterTicket& ticket);
  void sovkad_reinitiate_or_fail(LookupJob& j, InterTicket& ticket);
  void note_intra_outcome_for_leave_rule(LookupJob& j, bool success);
  void record_health_streak(Node& n, DomainId d, double score);

  DomainId pick_target_domain(Node& source, bool inter);
  NodeIndex pick_online_member(DomainId domain, NodeIndex exclude);

  SimConfig config_;
  Rng rng_;
  std::vector<Node> nodes_;
  std::vector<std::vector<NodeIndex>> members_;  // per-domain member indices
  std::vector<NodeIndex> gateways_;
  std::vector<Event> heap_;  // binary min-heap by (fire_at, seq)
  uint64_t next_event_seq_ = 0;
  uint64_t next_lookup_id_ = 1;
  uint64_t next_flow_id_ = 1;
  Timestamp now_ = 0;
  bool bootstrapped_ = false;
  bool workload_open_ = true;
  uint32_t multi_domain_count_ = 0;  // nodes in >= 2 domains (SovKad)

  std::unordered_map<uint64_t, LookupJob> jobs_;
  std::unordered_map<uint64_t, IterLookup> iters_;
  std::unordered_map<uint64_t, InterTicket> tickets_;
  std::unordered_map<uint64_t, RelayFlow> flows_;
  std::unordered_map<uint64_t, GatewayRelay> gw_relays_;

  RecordStore store_;
  RunCounters counters_;
};

}  // namespace podsim

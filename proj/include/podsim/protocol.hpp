#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "podsim/ids.hpp"
#include "podsim/routing.hpp"

namespace podsim {

// Lookup and maintenance parameters shared by all three protocols.
struct ProtocolParams {
  int alpha = 3;  // lookup fan-out
  int beta = 20;  // peers returned per response
  int k = 20;     // bucket capacity
  int max_attempts_intra = 3;
  int max_attempts_fedkad = 3;
  int max_attempts_sovkad = 9;
  uint64_t request_timeout_ms = 1000;
  uint64_t pong_timeout_ms = 350;  // 2x mean network latency
  uint64_t lookup_deadline_ms = 10'000;
  // Source-side timer before re-initiating an inter-domain attempt:
  // request_timeout x (2 + expected intra hops) for the gateway path,
  // one request_timeout less for SovKad's direct relayers.
  uint64_t fedkad_attempt_timeout_ms = 4000;
  uint64_t sovkad_attempt_timeout_ms = 3000;
};

enum class LookupKind { Intra, Inter };

enum class MsgKind {
  Request,
  Response,
  GatewayRequest,
  GatewayResponse,
  Ping,
  Pong,
};

// Identifies one routing table within a node.
struct TableRef {
  enum class Map { Idht, Xdht, Gateway } map = Map::Idht;
  DomainId scope = 0;
};

// The simulated wire message. Field layout is an internal simulator
// contract, not a byte format.
struct Message {
  MsgKind kind = MsgKind::Request;
  uint64_t lookup_id = 0;  // root lookup for bandwidth attribution; 0 = none
  uint64_t flow_id = 0;    // relay-flow correlation; 0 = none
  NodeIndex sender = 0;
  NodeIndex receiver = 0;
  NodeId sender_id;
  // Domain the sender speaks for in this exchange (kGatewayScope on
  // gateway legs). Receivers use it to pick the table to update.
  DomainId sender_domain = 0;
  NodeId target;
  DomainId target_domain = 0;
  std::vector<PeerInfo> peers;
  bool carries_target = false;
  // Requests: chain depth of the receiver. Responses: chain depth of the
  // node whose table held the target (the lookup's hop count on success).
  int depth = 0;
  bool intra_step = false;  // same-domain lookup step (adversary filter)
  // Eviction-ping correlation (Ping/Pong only).
  TableRef ping_table;
  NodeId ping_candidate;
  NodeId ping_pending;
};

// Source-side iterative lookup (plain Kademlia and the intra-domain engine
// reused by FedKad and SovKad).
struct IterLookup {
  enum class CandState { Unvisited, InFlight, Responded, Dead };

  struct Candidate {
    PeerInfo peer;
    Distance distance;
    int depth = 1;
    CandState state = CandState::Unvisited;
    uint64_t send_seq = 0;  // matches the request-timeout event
  };

  uint64_t lookup_id = 0;
  NodeIndex runner = 0;
  NodeId target;
  DomainId table_scope = 0;  // iDHT scope (domain), or 0 for Kademlia
  std::vector<Candidate> shortlist;  // ascending by distance
  int in_flight = 0;
  uint64_t next_seq = 1;
  bool live = true;
};

// Source-side state of a FedKad or SovKad inter-domain lookup.
struct InterTicket {
  uint64_t lookup_id = 0;
  NodeIndex source = 0;
  NodeId target;
  DomainId target_domain = 0;
  int attempts = 0;
  NodeIndex gateway_used = 0;  // FedKad: last gateway contacted
  std::unordered_set<NodeId, NodeIdHash> relayers_tried;  // SovKad
  bool live = true;
};

// Relayed lookup run inside the target domain on behalf of a remote party:
// the FedKad domain node entered via a gateway, or the SovKad relayer.
// Iteration is single-step: each response either yields the target or one
// further request to an unvisited node from that response.
struct RelayFlow {
  uint64_t flow_id = 0;
  uint64_t lookup_id = 0;  // root lookup, for attribution
  NodeIndex runner = 0;
  NodeId target;
  DomainId domain = 0;
  NodeIndex reply_to = 0;   // FedKad: gateway; SovKad: foreign source
  uint64_t reply_flow = 0;  // FedKad: gateway's relay entry
  bool reply_is_gateway = false;
  int runner_depth = 1;
  std::unordered_set<NodeId, NodeIdHash> visited;
  bool live = true;
};

// A gateway's pass-through entry for one forwarded inter-domain request.
struct GatewayRelay {
  uint64_t flow_id = 0;
  uint64_t lookup_id = 0;
  NodeIndex gateway = 0;
  NodeIndex source = 0;
  DomainId source_domain = 0;
  bool live = true;
};

}  // namespace podsim

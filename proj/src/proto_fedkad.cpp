// FedKad: per-domain Kademlia overlays bridged by a gateway overlay that
// relays inter-domain lookups. Sources retry through fresh random gateways
// up to three times; gateways forward to the single closest node they know
// in the target domain.

#include "podsim/sim.hpp"

namespace podsim {

void Engine::fedkad_start_inter_lookup(Node& source, uint64_t lookup_id) {
  LookupJob* j = job(lookup_id);
  if (j == nullptr || !j->live) return;

  auto [it, created] = tickets_.emplace(lookup_id, InterTicket{});
  InterTicket& ticket = it->second;
  if (created) {
    ticket.lookup_id = lookup_id;
    ticket.source = source.index;
    ticket.target = j->target;
    ticket.target_domain = j->target_domain;
  }

  RoutingTable* xdht = table_for(source, {TableRef::Map::Xdht, kGatewayScope});
  if (xdht == nullptr || xdht->empty()) {
    ticket.live = false;
    tickets_.erase(lookup_id);
    finish_job(*j, false, 0);
    return;
  }

  const auto entries = xdht->all_entries();
  const PeerInfo& gateway = entries[rng_.below(entries.size())];
  ++ticket.attempts;
  ticket.gateway_used = gateway.address;
  j->attempts = ticket.attempts;

  Message m;
  m.kind = MsgKind::GatewayRequest;
  m.lookup_id = lookup_id;
  m.sender = source.index;
  m.receiver = gateway.address;
  m.sender_domain = source.home_domain;
  m.target = j->target;
  m.target_domain = j->target_domain;
  m.depth = 1;  // the gateway is the first link in the relay chain
  send(std::move(m));
  schedule(now_ + config_.params.fedkad_attempt_timeout_ms,
           EvAttemptTimeout{lookup_id, ticket.attempts});
}

void Engine::fedkad_gateway_handle_request(Node& gateway, const Message& msg) {
  observe_sender(gateway, msg);
  if (!gateway.is_gateway) return;

  RoutingTable* t =
      table_for(gateway, {TableRef::Map::Gateway, msg.target_domain});

  Message resp;
  resp.kind = MsgKind::GatewayResponse;
  resp.lookup_id = msg.lookup_id;
  resp.sender = gateway.index;
  resp.receiver = msg.sender;
  resp.sender_domain = kGatewayScope;
  resp.target = msg.target;
  resp.target_domain = msg.target_domain;
  resp.depth = msg.depth;

  if (t != nullptr) {
    if (auto hit = t->find(msg.target)) {
      resp.peers = {*hit};
      resp.carries_target = true;
      send(std::move(resp));
      return;
    }
    if (!t->empty()) {
      // Forward to the single closest node; retries are source-driven.
      const PeerInfo next = t->closest(msg.target, 1).front();
      const uint64_t relay_id = next_flow_id_++;
      GatewayRelay relay;
      relay.flow_id = relay_id;
      relay.lookup_id = msg.lookup_id;
      relay.gateway = gateway.index;
      relay.source = msg.sender;
      relay.source_domain = msg.sender_domain;
      gw_relays_.emplace(relay_id, relay);
      schedule(now_ + config_.params.lookup_deadline_ms,
               EvFlowExpire{relay_id});

      Message fwd;
      fwd.kind = MsgKind::Request;
      fwd.lookup_id = msg.lookup_id;
      fwd.flow_id = relay_id;
      fwd.sender = gateway.index;
      fwd.receiver = next.address;
      fwd.sender_domain = kGatewayScope;
      fwd.target = msg.target;
      fwd.target_domain = msg.target_domain;
      fwd.depth = msg.depth + 1;
      send(std::move(fwd));
      return;
    }
  }
  // Empty target-domain table: an empty response, counted toward failure.
  send(std::move(resp));
}

void Engine::fedkad_handle_gateway_forward(Node& receiver, const Message& msg) {
  observe_sender(receiver, msg);  // the gateway lands in the gateway xDHT

  RoutingTable* t =
      table_for(receiver, {TableRef::Map::Idht, msg.target_domain});
  const bool has_target =
      receiver.id == msg.target || (t != nullptr && t->contains(msg.target));
  if (has_target) {
    PeerInfo contact = receiver.id == msg.target ? receiver.peer_info(now_)
                                                 : *t->find(msg.target);
    Message resp;
    resp.kind = MsgKind::Response;
    resp.lookup_id = msg.lookup_id;
    resp.flow_id = msg.flow_id;  // routes back through the gateway relay
    resp.sender = receiver.index;
    resp.receiver = msg.sender;
    resp.sender_domain = receiver.home_domain;
    resp.target = msg.target;
    resp.target_domain = msg.target_domain;
    resp.peers = {contact};
    resp.carries_target = true;
    resp.depth = msg.depth;
    send(std::move(resp));
    return;
  }
  // Alpha-fan-out relayed lookup on behalf of the gateway.
  flow_start(receiver, msg, /*fed_entry=*/true);
}

void Engine::fedkad_handle_gateway_response(Node& source, const Message& msg) {
  observe_sender(source, msg);

  LookupJob* j = job(msg.lookup_id);
  auto tk = tickets_.find(msg.lookup_id);
  if (j == nullptr || !j->live || tk == tickets_.end() || !tk->second.live) {
    return;
  }
  InterTicket& ticket = tk->second;

  for (const auto& p : msg.peers) {
    if (p.id == ticket.target) {
      ticket.live = false;
      tickets_.erase(tk);
      finish_job(*j, true, msg.depth);
      return;
    }
  }
  if (ticket.attempts < config_.params.max_attempts_fedkad) {
    fedkad_start_inter_lookup(source, msg.lookup_id);
  } else {
    ticket.live = false;
    tickets_.erase(tk);
    finish_job(*j, false, 0);
  }
}

}  // namespace podsim

#include <algorithm>
#include <stdexcept>

#include "podsim/sim.hpp"

namespace podsim {

namespace {

struct EventOrder {
  bool operator()(const Event& a, const Event& b) const {
    // std heap functions build a max-heap; invert for (fire_at, seq) min order.
    if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
    return a.seq > b.seq;
  }
};

uint64_t fnv1a(uint64_t h, uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (i * 8)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Engine::Engine(SimConfig config) : config_(std::move(config)) {
  const auto errors = config_.validate();
  if (!errors.empty()) {
    std::string what = "invalid config:";
    for (const auto& e : errors) what += " " + e + ";";
    throw std::invalid_argument(what);
  }
  rng_.reseed(config_.seed);
}

void Engine::schedule(Timestamp at, EventPayload payload) {
  heap_.push_back(Event{at, next_event_seq_++, std::move(payload)});
  std::push_heap(heap_.begin(), heap_.end(), EventOrder{});
}

Timestamp Engine::sample_latency() {
  return rng_.between(config_.latency_min_ms, config_.latency_max_ms);
}

void Engine::run() {
  if (!bootstrapped_) {
    throw std::logic_error("run() before bootstrap()");
  }
  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), EventOrder{});
    Event ev = std::move(heap_.back());
    heap_.pop_back();
    now_ = ev.fire_at;
    handle_event(ev);
  }
}

void Engine::run_until(Timestamp until) {
  while (!heap_.empty() && heap_.front().fire_at <= until) {
    std::pop_heap(heap_.begin(), heap_.end(), EventOrder{});
    Event ev = std::move(heap_.back());
    heap_.pop_back();
    now_ = ev.fire_at;
    handle_event(ev);
  }
}

void Engine::handle_event(const Event& ev) {
  std::visit(
      [this](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, EvMessage>) {
          handle_message(payload.msg);
        } else if constexpr (std::is_same_v<T, EvLookupStart>) {
          handle_lookup_start(payload.node);
        } else if constexpr (std::is_same_v<T, EvChurnLeave>) {
          handle_churn_leave(payload.node);
        } else if constexpr (std::is_same_v<T, EvChurnJoin>) {
          handle_churn_join(payload.node);
        } else if constexpr (std::is_same_v<T, EvRequestTimeout>) {
          handle_request_timeout(payload);
        } else if constexpr (std::is_same_v<T, EvAttemptTimeout>) {
          handle_attempt_timeout(payload);
        } else if constexpr (std::is_same_v<T, EvDeadline>) {
          handle_deadline(payload.lookup_id);
        } else if constexpr (std::is_same_v<T, EvPingTimeout>) {
          handle_ping_timeout(payload);
        } else if constexpr (std::is_same_v<T, EvResponseCheck>) {
          handle_response_check(payload.node);
        } else if constexpr (std::is_same_v<T, EvFlowExpire>) {
          flows_.erase(payload.flow_id);
          gw_relays_.erase(payload.flow_id);
        }
      },
      ev.payload);
}

void Engine::send(Message msg) {
  msg.sender_id = nodes_[msg.sender].id;
  ++counters_.messages_sent;
  const bool is_ping = msg.kind == MsgKind::Ping || msg.kind == MsgKind::Pong;
  if (is_ping) ++counters_.maintenance_pings;
  if (msg.kind == MsgKind::GatewayRequest ||
      msg.kind == MsgKind::GatewayResponse) {
    ++counters_.gateway_leg_messages;
  }
  if (msg.lookup_id != 0) {
    if (LookupJob* j = job(msg.lookup_id); j != nullptr && j->live) {
      ++j->messages;
      if (is_ping) ++j->ping_messages;
      if (msg.kind == MsgKind::Request || msg.kind == MsgKind::GatewayRequest) {
        j->max_depth = std::max(j->max_depth, msg.depth);
      }
    }
  }
  schedule(now_ + sample_latency(), EvMessage{std::move(msg)});
}

bool Engine::adversary_drops(const Node& receiver, const Message& msg) const {
  switch (config_.strategy) {
    case AdversaryStrategy::Honest:
      return false;
    case AdversaryStrategy::DropAll:
      switch (msg.kind) {
        case MsgKind::Ping:
          return !config_.respond_to_pings;
        case MsgKind::Pong:
          return false;
        default:
          return true;
      }
    case AdversaryStrategy::IntraOnlyDrop:
      switch (msg.kind) {
        case MsgKind::Ping:
          return !config_.respond_to_pings;
        case MsgKind::Pong:
          return false;
        case MsgKind::GatewayRequest:
          return false;  // gateway service is inter-domain traffic
        case MsgKind::GatewayResponse:
          return true;  // colluders never source inter-domain lookups
        case MsgKind::Request:
          return msg.intra_step;
        case MsgKind::Response: {
          // Responses feeding a relay the colluder serves honestly pass;
          // everything else is intra-domain lookup traffic.
          if (msg.flow_id != 0) {
            auto it = flows_.find(msg.flow_id);
            if (it != flows_.end() && it->second.live &&
                it->second.runner == receiver.index) {
              return false;
            }
            auto gw = gw_relays_.find(msg.flow_id);
            if (gw != gw_relays_.end() && gw->second.live &&
                gw->second.gateway == receiver.index) {
              return false;
            }
          }
          return true;
        }
      }
  }
  return false;
}

void Engine::handle_message(const Message& msg) {
  Node& receiver = nodes_[msg.receiver];
  if (!receiver.online) {
    ++counters_.messages_lost_offline;
    return;
  }
  if (!receiver.honest && adversary_drops(receiver, msg)) {
    ++counters_.messages_dropped_adversary;
    return;
  }
  ++counters_.messages_delivered;

  switch (msg.kind) {
    case MsgKind::Ping: {
      Message pong;
      pong.kind = MsgKind::Pong;
      pong.lookup_id = msg.lookup_id;
      pong.sender = receiver.index;
      pong.receiver = msg.sender;
      pong.sender_domain = receiver.home_domain;
      pong.ping_table = msg.ping_table;
      pong.ping_candidate = msg.ping_candidate;
      pong.ping_pending = msg.ping_pending;
      send(std::move(pong));
      return;
    }
    case MsgKind::Pong: {
      if (RoutingTable* t = table_for(receiver, msg.ping_table)) {
        t->resolve_ping(true, msg.ping_candidate, msg.ping_pending, now_);
      }
      return;
    }
    case MsgKind::GatewayRequest:
      fedkad_gateway_handle_request(receiver, msg);
      return;
    case MsgKind::GatewayResponse:
      fedkad_handle_gateway_response(receiver, msg);
      return;
    case MsgKind::Request: {
      if (config_.protocol == Protocol::FedKad &&
          msg.sender_domain == kGatewayScope) {
        fedkad_handle_gateway_forward(receiver, msg);
        return;
      }
      if (config_.protocol == Protocol::SovKad && !msg.intra_step &&
          msg.flow_id == 0) {
        sovkad_handle_foreign_request(receiver, msg);
        return;
      }
      kademlia_handle_request(receiver, msg);
      return;
    }
    case MsgKind::Response: {
      if (msg.flow_id != 0) {
        if (auto it = flows_.find(msg.flow_id);
            it != flows_.end() && it->second.live &&
            it->second.runner == receiver.index) {
          flow_handle_response(receiver, it->second, msg);
          if (!it->second.live) flows_.erase(it);
          return;
        }
        if (auto gw = gw_relays_.find(msg.flow_id);
            gw != gw_relays_.end() && gw->second.live &&
            gw->second.gateway == receiver.index) {
          // Gateway passes the relayed result through to the source.
          observe_sender(receiver, msg);
          GatewayRelay entry = gw->second;
          gw_relays_.erase(gw);
          Message out;
          out.kind = MsgKind::GatewayResponse;
          out.lookup_id = entry.lookup_id;
          out.sender = receiver.index;
          out.receiver = entry.source;
          out.sender_domain = kGatewayScope;
          out.target = msg.target;
          out.target_domain = msg.target_domain;
          out.peers = msg.peers;
          out.carries_target = msg.carries_target;
          out.depth = msg.depth;
          send(std::move(out));
          return;
        }
      } else {
        if (auto tk = tickets_.find(msg.lookup_id);
            tk != tickets_.end() && tk->second.live &&
            tk->second.source == receiver.index) {
          sovkad_handle_foreign_response(receiver, msg);
          return;
        }
        if (auto il = iters_.find(msg.lookup_id);
            il != iters_.end() && il->second.live &&
            il->second.runner == receiver.index) {
          iter_merge_and_continue(il->second, msg);
          if (!il->second.live) iters_.erase(il);
          return;
        }
      }
      // Stale response: the lookup already terminated. The sender still
      // proved liveness.
      observe_sender(receiver, msg);
      return;
    }
  }
}

RoutingTable* Engine::table_for(Node& n, const TableRef& ref) {
  std::map<DomainId, RoutingTable>* m = nullptr;
  switch (ref.map) {
    case TableRef::Map::Idht: m = &n.idht; break;
    case TableRef::Map::Xdht: m = &n.xdht; break;
    case TableRef::Map::Gateway: m = &n.gateway_tables; break;
  }
  auto it = m->find(ref.scope);
  return it == m->end() ? nullptr : &it->second;
}

TableRef Engine::observe_target_table(const Node& receiver,
                                      const Message& msg) const {
  if (config_.protocol == Protocol::Kademlia) {
    return {TableRef::Map::Idht, 0};
  }
  if (receiver.is_gateway) {
    return {TableRef::Map::Gateway, msg.sender_domain};
  }
  if (msg.sender_domain == kGatewayScope) {
    return {TableRef::Map::Xdht, kGatewayScope};
  }
  if (receiver.member_of(msg.sender_domain)) {
    return {TableRef::Map::Idht, msg.sender_domain};
  }
  return {TableRef::Map::Xdht, msg.sender_domain};
}

void Engine::observe_sender(Node& receiver, const Message& msg) {
  if (msg.sender_id == receiver.id) return;
  const Node& sender = nodes_[msg.sender];
  PeerInfo peer{msg.sender_id, msg.sender,
                sender.is_gateway ? kGatewayScope : sender.home_domain, now_};
  observe_peer_maintained(receiver, observe_target_table(receiver, msg), peer,
                          msg.lookup_id);
}

void Engine::observe_peer_maintained(Node& owner, const TableRef& table,
                                     const PeerInfo& peer, uint64_t lookup_id) {
  if (peer.id == owner.id) return;
  RoutingTable* t = table_for(owner, table);
  if (t == nullptr) return;
  const MaintenanceAction action = t->observe_peer(peer, now_);
  if (action.kind == MaintenanceAction::PingLeastRecent) {
    send_ping(owner, table, action, lookup_id);
  }
}

void Engine::send_ping(Node& owner, const TableRef& table,
                       const MaintenanceAction& action, uint64_t lookup_id) {
  Message ping;
  ping.kind = MsgKind::Ping;
  ping.lookup_id = lookup_id;
  ping.sender = owner.index;
  ping.receiver = action.candidate.address;
  ping.sender_domain = owner.home_domain;
  ping.ping_table = table;
  ping.ping_candidate = action.candidate.id;
  ping.ping_pending = action.pending.id;
  send(std::move(ping));
  schedule(now_ + config_.params.pong_timeout_ms,
           EvPingTimeout{owner.index, table, action.candidate.id,
                         action.pending.id, lookup_id});
}

void Engine::handle_ping_timeout(const EvPingTimeout& ev) {
  Node& owner = nodes_[ev.owner];
  if (RoutingTable* t = table_for(owner, ev.table)) {
    // No pong in time: evict the candidate, admit the pending peer. A pong
    // that resolved the ticket earlier makes this a no-op.
    t->resolve_ping(false, ev.candidate, ev.pending, now_);
  }
}

std::vector<Message> Engine::pending_messages() const {
  std::vector<Message> out;
  for (const auto& ev : heap_) {
    if (const auto* m = std::get_if<EvMessage>(&ev.payload)) {
      out.push_back(m->msg);
    }
  }
  return out;
}

std::vector<NodeIndex> Engine::pending_lookup_starts() const {
  std::vector<NodeIndex> out;
  for (const auto& ev : heap_) {
    if (const auto* s = std::get_if<EvLookupStart>(&ev.payload)) {
      out.push_back(s->node);
    }
  }
  return out;
}

uint64_t Engine::state_digest() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto hash_table = [&h](const RoutingTable& t) {
    h = fnv1a(h, static_cast<uint64_t>(t.scope()));
    h = fnv1a(h, static_cast<uint64_t>(t.bucket_count()));
    for (int b = 0; b < t.bucket_count(); ++b) {
      for (const auto& e : t.bucket(static_cast<size_t>(b)).entries) {
        h = fnv1a(h, e.id.hi);
        h = fnv1a(h, e.id.lo);
        h = fnv1a(h, e.address);
        h = fnv1a(h, e.domain);
        h = fnv1a(h, e.last_seen);
      }
    }
  };
  for (const auto& n : nodes_) {
    h = fnv1a(h, n.id.hi);
    h = fnv1a(h, n.id.lo);
    h = fnv1a(h, n.online ? 1 : 0);
    h = fnv1a(h, n.honest ? 1 : 0);
    h = fnv1a(h, n.is_gateway ? 1 : 0);
    h = fnv1a(h, n.home_domain);
    for (DomainId d : n.joined) h = fnv1a(h, d);
    for (const auto& [scope, t] : n.idht) hash_table(t);
    for (const auto& [scope, t] : n.xdht) hash_table(t);
    for (const auto& [scope, t] : n.gateway_tables) hash_table(t);
  }
  return h;
}

}  // namespace podsim

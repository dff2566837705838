#include <algorithm>

#include "podsim/sim.hpp"

namespace podsim {

namespace {
constexpr NodeIndex kInvalidNode = UINT32_MAX;
constexpr size_t kShortlistCap = 96;
}  // namespace

Engine::LookupJob* Engine::job(uint64_t lookup_id) {
  auto it = jobs_.find(lookup_id);
  return it == jobs_.end() ? nullptr : &it->second;
}

void Engine::handle_lookup_start(NodeIndex idx) {
  Node& n = nodes_[idx];
  if (!n.online) return;  // departed: the arrival stream ends here
  if (now_ >= config_.sim_duration_ms) return;

  const double next = rng_.exponential(config_.mean_lookup_interval_ms);
  schedule(now_ + static_cast<Timestamp>(next), EvLookupStart{idx});

  const bool inter = rng_.chance(config_.inter_lookup_probability());
  const DomainId domain = pick_target_domain(n, inter);
  const NodeIndex target = pick_online_member(domain, idx);
  if (target == kInvalidNode) return;
  start_lookup(idx, nodes_[target].id, domain);
}

uint64_t Engine::start_lookup(NodeIndex source, const NodeId& target,
                              DomainId target_domain) {
  Node& src = nodes_[source];
  const uint64_t id = next_lookup_id_++;
  LookupJob j;
  j.lookup_id = id;
  j.source = source;
  j.kind = src.member_of(target_domain) ? LookupKind::Intra : LookupKind::Inter;
  if (config_.protocol == Protocol::Kademlia) {
    j.kind = src.home_domain == target_domain ? LookupKind::Intra
                                              : LookupKind::Inter;
  }
  j.source_domain = src.home_domain;
  j.target_domain = target_domain;
  j.target = target;
  j.started_at = now_;
  jobs_.emplace(id, j);
  ++counters_.lookups_initiated;
  schedule(now_ + config_.params.lookup_deadline_ms, EvDeadline{id});

  switch (config_.protocol) {
    case Protocol::Kademlia:
      iter_start(id, src, target, 0);
      break;
    case Protocol::FedKad:
      if (j.kind == LookupKind::Intra) {
        iter_start(id, src, target, src.home_domain);
      } else {
        fedkad_start_inter_lookup(src, id);
      }
      break;
    case Protocol::SovKad:
      if (j.kind == LookupKind::Intra) {
        iter_start(id, src, target, target_domain);
      } else {
        sovkad_start_inter_lookup(src, id);
        erase_dead_ticket(id);
      }
      break;
  }
  return id;
}

void Engine::finish_job(LookupJob& j, bool success, int hops) {
  if (!j.live) return;
  j.live = false;
  ++counters_.lookups_recorded;

  LookupRecord r;
  r.run_id = config_.run_id;
  r.protocol = to_string(config_.protocol);
  r.scenario = config_.scenario_label;
  r.n_nodes = config_.n_nodes;
  r.n_domains = config_.n_domains;
  r.lookup_id = j.lookup_id;
  r.kind = j.kind == LookupKind::Intra ? "intra" : "inter";
  r.source_domain = j.source_domain;
  r.target_domain = j.target_domain;
  r.success = success;
  r.hops = static_cast<uint32_t>(success ? hops : j.max_depth);
  r.messages = j.messages;
  r.ping_messages = j.ping_messages;
  r.latency_ms = now_ - j.started_at;
  r.attempts = static_cast<uint32_t>(j.attempts);
  store_.add(std::move(r));

  note_intra_outcome_for_leave_rule(j, success);
  jobs_.erase(j.lookup_id);  // j is dangling from here on
}

void Engine::handle_deadline(uint64_t lookup_id) {
  LookupJob* j = job(lookup_id);
  if (j == nullptr || !j->live) return;
  if (auto it = iters_.find(lookup_id); it != iters_.end()) {
    it->second.live = false;
    iters_.erase(it);
  }
  bool had_ticket = false;
  if (auto tk = tickets_.find(lookup_id); tk != tickets_.end()) {
    had_ticket = tk->second.live;
    if (config_.protocol == Protocol::SovKad && had_ticket) {
      InterTicket ticket = tk->second;
      tk->second.live = false;
      tickets_.erase(tk);
      fail_inter_with_reputation(*j, ticket);
      return;
    }
    tickets_.erase(tk);
  }
  finish_job(*j, false, 0);
}

void Engine::handle_request_timeout(const EvRequestTimeout& ev) {
  auto it = iters_.find(ev.lookup_id);
  if (it == iters_.end() || !it->second.live) return;
  iter_handle_timeout(it->second, ev.peer, ev.seq);
  if (!it->second.live) iters_.erase(it);
}

void Engine::handle_attempt_timeout(const EvAttemptTimeout& ev) {
  LookupJob* j = job(ev.lookup_id);
  if (j == nullptr || !j->live) return;
  auto tk = tickets_.find(ev.lookup_id);
  if (tk == tickets_.end() || !tk->second.live) return;
  InterTicket& ticket = tk->second;
  if (ticket.attempts != ev.attempt) return;  // a newer attempt superseded us

  if (config_.protocol == Protocol::FedKad) {
    if (ticket.attempts < config_.params.max_attempts_fedkad) {
      fedkad_start_inter_lookup(nodes_[ticket.source], ev.lookup_id);
    } else {
      ticket.live = false;
      tickets_.erase(tk);
      finish_job(*j, false, 0);
    }
  } else {
    sovkad_reinitiate_or_fail(*j, ticket);
    erase_dead_ticket(ev.lookup_id);
  }
}

void Engine::erase_dead_ticket(uint64_t lookup_id) {
  auto it = tickets_.find(lookup_id);
  if (it != tickets_.end() && !it->second.live) {
    tickets_.erase(it);
  }
}

// ---------------------------------------------------------------------------
// Plain request service: shared by Kademlia and by FedKad/SovKad intra steps.

void Engine::kademlia_handle_request(Node& receiver, const Message& msg) {
  TableRef ref = observe_target_table(receiver, msg);
  observe_sender(receiver, msg);
  respond_closest(receiver, msg, ref);
}

void Engine::respond_closest(Node& receiver, const Message& msg,
                             TableRef table) {
  Message resp;
  resp.kind = MsgKind::Response;
  resp.lookup_id = msg.lookup_id;
  resp.flow_id = msg.flow_id;
  resp.sender = receiver.index;
  resp.receiver = msg.sender;
  resp.sender_domain = msg.sender_domain == kGatewayScope
                           ? receiver.home_domain
                           : msg.sender_domain;
  resp.target = msg.target;
  resp.target_domain = msg.target_domain;
  resp.depth = msg.depth;
  resp.intra_step = msg.intra_step;

  RoutingTable* t = table_for(receiver, table);
  if (receiver.id == msg.target) {
    resp.peers = {receiver.peer_info(now_)};
    resp.carries_target = true;
  } else if (t != nullptr) {
    if (auto hit = t->find(msg.target)) {
      resp.peers = {*hit};
      resp.carries_target = true;
    } else {
      auto closest =
          t->closest(msg.target, static_cast<size_t>(config_.params.beta) + 1);
      for (auto& p : closest) {
        if (p.id == msg.sender_id) continue;
        if (static_cast<int>(resp.peers.size()) >= config_.params.beta) break;
        resp.peers.push_back(p);
      }
    }
  }
  send(std::move(resp));
}

// ---------------------------------------------------------------------------
// Iterative lookup: alpha requests in flight against a merged XOR-sorted
// shortlist, per-request timeouts, and whole-lookup restarts.

void Engine::iter_start(uint64_t lookup_id, Node& runner, const NodeId& target,
                        DomainId scope) {
  LookupJob* j = job(lookup_id);
  if (j == nullptr) return;
  j->attempts = 1;

  RoutingTable* t = table_for(runner, {TableRef::Map::Idht, scope});
  if (t != nullptr && (t->contains(target) || runner.id == target)) {
    finish_job(*j, true, 0);
    return;
  }
  if (t == nullptr || t->empty()) {
    finish_job(*j, false, 0);
    return;
  }

  auto [it, inserted] = iters_.emplace(lookup_id, IterLookup{});
  IterLookup& iter = it->second;
  iter.lookup_id = lookup_id;
  iter.runner = runner.index;
  iter.target = target;
  iter.table_scope = scope;
  iter_seed_from_table(iter);
  iter_top_up(iter);
  if (!iter.live) iters_.erase(lookup_id);
}

void Engine::iter_seed_from_table(IterLookup& it) {
  Node& runner = nodes_[it.runner];
  RoutingTable* t = table_for(runner, {TableRef::Map::Idht, it.table_scope});
  if (t == nullptr) return;
  for (const auto& p :
       t->closest(it.target, static_cast<size_t>(config_.params.k))) {
    iter_merge_peer(it, p, 1);
  }
}

bool Engine::iter_merge_peer(IterLookup& it, const PeerInfo& peer, int depth) {
  if (peer.id == nodes_[it.runner].id) return false;
  const Distance d = xor_distance(peer.id, it.target);
  auto pos = std::lower_bound(
      it.shortlist.begin(), it.shortlist.end(), d,
      [](const IterLookup::Candidate& c, const Distance& dd) {
        return c.distance < dd;
      });
  if (pos != it.shortlist.end() && pos->peer.id == peer.id) return false;
  if (it.shortlist.size() >= kShortlistCap && pos == it.shortlist.end()) {
    return false;
  }
  IterLookup::Candidate c;
  c.peer = peer;
  c.distance = d;
  c.depth = depth;
  it.shortlist.insert(pos, std::move(c));
  if (it.shortlist.size() > kShortlistCap &&
      it.shortlist.back().state == IterLookup::CandState::Unvisited) {
    it.shortlist.pop_back();
  }
  return true;
}

void Engine::iter_send_request(IterLookup& it, IterLookup::Candidate& cand) {
  cand.state = IterLookup::CandState::InFlight;
  cand.send_seq = it.next_seq++;
  ++it.in_flight;

  Node& runner = nodes_[it.runner];
  LookupJob* j = job(it.lookup_id);
  Message m;
  m.kind = MsgKind::Request;
  m.lookup_id = it.lookup_id;
  m.sender = it.runner;
  m.receiver = cand.peer.address;
  m.target = it.target;
  m.target_domain = j != nullptr ? j->target_domain : it.table_scope;
  m.depth = cand.depth;
  if (config_.protocol == Protocol::Kademlia) {
    m.sender_domain = runner.home_domain;
    m.intra_step = runner.home_domain == nodes_[cand.peer.address].home_domain;
  } else {
    m.sender_domain = it.table_scope;
    m.intra_step = true;
  }
  send(std::move(m));
  schedule(now_ + config_.params.request_timeout_ms,
           EvRequestTimeout{it.lookup_id, cand.peer.id, cand.send_seq});
}

void Engine::iter_top_up(IterLookup& it) {
  if (!it.live) return;
  while (it.in_flight < config_.params.alpha) {
    IterLookup::Candidate* next = nullptr;
    int window = 0;
    for (auto& c : it.shortlist) {
      if (c.state == IterLookup::CandState::Dead) continue;
      if (c.state == IterLookup::CandState::Unvisited) {
        next = &c;
        break;
      }
      if (++window >= config_.params.k) break;
    }
    if (next == nullptr) break;
    iter_send_request(it, *next);
  }
  if (it.in_flight == 0) {
    iter_attempt_exhausted(it);
  }
}

void Engine::iter_attempt_exhausted(IterLookup& it) {
  LookupJob* j = job(it.lookup_id);
  if (j == nullptr || !j->live) {
    it.live = false;
    return;
  }
  if (j->attempts < config_.params.max_attempts_intra) {
    iter_restart(it);
  } else {
    it.live = false;
    finish_job(*j, false, 0);
  }
}

void Engine::iter_restart(IterLookup& it) {
  LookupJob* j = job(it.lookup_id);
  if (j == nullptr) return;
  ++j->attempts;
  // Dead peers stay dead; everyone else becomes eligible again. The table
  // may have changed since the last pass, so re-seed from it.
  for (auto& c : it.shortlist) {
    if (c.state != IterLookup::CandState::Dead) {
      c.state = IterLookup::CandState::Unvisited;
    }
  }
  it.in_flight = 0;
  iter_seed_from_table(it);
  iter_top_up(it);
}

void Engine::iter_merge_and_continue(IterLookup& it, const Message& msg) {
  Node& runner = nodes_[it.runner];
  observe_sender(runner, msg);

  for (auto& c : it.shortlist) {
    if (c.peer.id == msg.sender_id) {
      if (c.state == IterLookup::CandState::InFlight) --it.in_flight;
      c.state = IterLookup::CandState::Responded;
      break;
    }
  }

  LookupJob* j = job(it.lookup_id);
  if (j == nullptr || !j->live) {
    it.live = false;
    return;
  }

  for (const auto& p : msg.peers) {
    if (p.id == it.target) {
      it.live = false;
      finish_job(*j, true, msg.depth);
      return;
    }
  }
  for (const auto& p : msg.peers) {
    iter_merge_peer(it, p, msg.depth + 1);
  }
  iter_top_up(it);
}

void Engine::iter_handle_timeout(IterLookup& it, const NodeId& peer,
                                 uint64_t seq) {
  for (auto& c : it.shortlist) {
    if (c.peer.id == peer) {
      if (c.state != IterLookup::CandState::InFlight || c.send_seq != seq) {
        return;  // stale: answered, restarted, or re-sent since
      }
      c.state = IterLookup::CandState::Dead;
      --it.in_flight;
      ++counters_.effective_request_timeouts;
      iter_top_up(it);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Relay flows: the single-step iteration run by FedKad entry nodes and
// SovKad relayers on behalf of a remote source.

void Engine::flow_start(Node& runner, const Message& request, bool fed_entry) {
  RoutingTable* t =
      table_for(runner, {TableRef::Map::Idht, request.target_domain});
  if (t == nullptr || t->empty()) return;  // nothing to relay into

  const uint64_t flow_id = next_flow_id_++;
  RelayFlow flow;
  flow.flow_id = flow_id;
  flow.lookup_id = request.lookup_id;
  flow.runner = runner.index;
  flow.target = request.target;
  flow.domain = request.target_domain;
  flow.reply_to = request.sender;
  flow.reply_flow = request.flow_id;
  flow.reply_is_gateway = fed_entry;
  flow.runner_depth = request.depth;
  flow.visited.insert(runner.id);

  const int fanout = fed_entry ? config_.params.alpha : 1;
  auto candidates = t->closest(flow.target, static_cast<size_t>(fanout) + 1);
  int sent = 0;
  for (const auto& c : candidates) {
    if (sent >= fanout) break;
    if (c.id == request.sender_id) continue;
    flow.visited.insert(c.id);
    ++sent;
    flow_send_step(flow, c, request.depth + 1);
  }
  if (sent == 0) return;
  flows_.emplace(flow_id, std::move(flow));
  schedule(now_ + config_.params.lookup_deadline_ms, EvFlowExpire{flow_id});
}

void Engine::flow_send_step(RelayFlow& flow, const PeerInfo& next, int depth) {
  Message m;
  m.kind = MsgKind::Request;
  m.lookup_id = flow.lookup_id;
  m.flow_id = flow.flow_id;
  m.sender = flow.runner;
  m.receiver = next.address;
  m.sender_domain = flow.domain;
  m.target = flow.target;
  m.target_domain = flow.domain;
  m.depth = depth;
  m.intra_step = true;
  send(std::move(m));
}

void Engine::flow_handle_response(Node& runner, RelayFlow& flow,
                                  const Message& msg) {
  observe_sender(runner, msg);
  for (const auto& p : msg.peers) {
    if (p.id == flow.target) {
      flow_reply_found(flow, p, msg.depth);
      flow.live = false;
      return;
    }
  }
  // One further request to the closest unvisited node from this response.
  const PeerInfo* next = nullptr;
  Distance best{};
  for (const auto& p : msg.peers) {
    if (p.id == runner.id || flow.visited.count(p.id) > 0) continue;
    const Distance d = xor_distance(p.id, flow.target);
    if (next == nullptr || d < best) {
      next = &p;
      best = d;
    }
  }
  if (next == nullptr) {
    flow.live = false;  // search operation terminated; source relies on
    return;             // its own timeout
  }
  flow.visited.insert(next->id);
  flow_send_step(flow, *next, msg.depth + 1);
}

void Engine::flow_reply_found(RelayFlow& flow, const PeerInfo& target_contact,
                              int found_depth) {
  Message m;
  m.kind = MsgKind::Response;
  m.lookup_id = flow.lookup_id;
  m.flow_id = flow.reply_is_gateway ? flow.reply_flow : 0;
  m.sender = flow.runner;
  m.receiver = flow.reply_to;
  m.sender_domain = flow.domain;
  m.target = flow.target;
  m.target_domain = flow.domain;
  m.peers = {target_contact};
  m.carries_target = true;
  m.depth = found_depth;
  send(std::move(m));
}

}  // namespace podsim

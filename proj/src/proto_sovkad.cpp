// SovKad: direct cross-domain links, alpha-fan-out inter-domain lookups
// relayed by target-domain members, sliding-window domain reputation, and
// the active attack response (temporarily joining a misbehaving domain).

#include <algorithm>

#include "podsim/sim.hpp"

namespace podsim {

void Engine::sovkad_start_inter_lookup(Node& source, uint64_t lookup_id) {
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

  RoutingTable* xdht =
      table_for(source, {TableRef::Map::Xdht, ticket.target_domain});
  std::vector<PeerInfo> relayers;
  if (xdht != nullptr) {
    for (const auto& p : xdht->closest(ticket.target, xdht->size())) {
      if (ticket.relayers_tried.count(p.id) > 0) continue;
      relayers.push_back(p);
      if (static_cast<int>(relayers.size()) >= config_.params.alpha) break;
    }
  }
  if (relayers.empty()) {
    // Empty xDHT (or every known relayer already tried): the lookup cannot
    // proceed; counts as a miss against the domain. The caller erases the
    // dead ticket.
    fail_inter_with_reputation(*j, ticket);
    return;
  }

  ++ticket.attempts;
  j->attempts = ticket.attempts;
  for (const auto& r : relayers) {
    ticket.relayers_tried.insert(r.id);
    Message m;
    m.kind = MsgKind::Request;
    m.lookup_id = lookup_id;
    m.sender = source.index;
    m.receiver = r.address;
    m.sender_domain = source.home_domain;
    m.target = ticket.target;
    m.target_domain = ticket.target_domain;
    m.depth = 1;
    m.intra_step = false;
    send(std::move(m));
  }
  schedule(now_ + config_.params.sovkad_attempt_timeout_ms,
           EvAttemptTimeout{lookup_id, ticket.attempts});
}

void Engine::sovkad_handle_foreign_request(Node& relayer, const Message& msg) {
  observe_sender(relayer, msg);

  if (!relayer.member_of(msg.target_domain)) {
    // The source's xDHT entry is stale (we left that domain). An empty
    // response lets the source retry another relayer immediately.
    Message resp;
    resp.kind = MsgKind::Response;
    resp.lookup_id = msg.lookup_id;
    resp.sender = relayer.index;
    resp.receiver = msg.sender;
    resp.sender_domain = msg.target_domain;
    resp.target = msg.target;
    resp.target_domain = msg.target_domain;
    resp.depth = msg.depth;
    send(std::move(resp));
    return;
  }

  RoutingTable* t =
      table_for(relayer, {TableRef::Map::Idht, msg.target_domain});
  const bool has_target =
      relayer.id == msg.target || (t != nullptr && t->contains(msg.target));
  if (has_target) {
    PeerInfo contact = relayer.id == msg.target ? relayer.peer_info(now_)
                                                : *t->find(msg.target);
    Message resp;
    resp.kind = MsgKind::Response;
    resp.lookup_id = msg.lookup_id;
    resp.sender = relayer.index;
    resp.receiver = msg.sender;
    resp.sender_domain = msg.target_domain;
    resp.target = msg.target;
    resp.target_domain = msg.target_domain;
    resp.peers = {contact};
    resp.carries_target = true;
    resp.depth = msg.depth;
    send(std::move(resp));
    return;
  }
  // Relay into the domain: a single forwarded request, then one further
  // step per response.
  flow_start(relayer, msg, /*fed_entry=*/false);
}

void Engine::sovkad_handle_foreign_response(Node& source, const Message& msg) {
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
      const DomainId domain = ticket.target_domain;
      tickets_.erase(tk);
      update_reputation(source, domain, true);
      finish_job(*j, true, msg.depth);
      return;
    }
  }
  sovkad_reinitiate_or_fail(*j, ticket);
  erase_dead_ticket(msg.lookup_id);
}

void Engine::sovkad_reinitiate_or_fail(LookupJob& j, InterTicket& ticket) {
  if (ticket.attempts < config_.params.max_attempts_sovkad) {
    sovkad_start_inter_lookup(nodes_[ticket.source], ticket.lookup_id);
    return;
  }
  ticket.live = false;
  fail_inter_with_reputation(j, ticket);
}

void Engine::fail_inter_with_reputation(LookupJob& j, InterTicket& ticket) {
  ticket.live = false;
  Node& source = nodes_[j.source];
  const DomainId domain = ticket.target_domain;
  const double score = update_reputation(source, domain, false);
  if (config_.response_enabled && score < config_.reputation_threshold) {
    join_domain(source, domain, /*response_join=*/true);
  }
  finish_job(j, false, 0);
}

double Engine::update_reputation(Node& node, DomainId domain, bool success) {
  if (node.member_of(domain)) {
    return 1.0;  // reputation tracks foreign domains only
  }
  auto it = node.reputation.find(domain);
  if (it == node.reputation.end()) {
    it = node.reputation
             .emplace(domain, DomainReputation(config_.reputation_window))
             .first;
  }
  return it->second.add(success);
}

bool Engine::join_domain(Node& node, DomainId domain, bool response_join) {
  if (node.member_of(domain)) return false;
  const int new_count = static_cast<int>(node.joined.size()) + 1;
  if (new_count > config_.effective_max_domains()) {
    if (response_join) ++counters_.response_joins_suppressed;
    return false;
  }
  const bool becomes_multi = node.joined.size() == 1;
  const uint32_t cap = static_cast<uint32_t>(config_.multi_domain_fraction *
                                             config_.n_nodes);
  if (becomes_multi && multi_domain_count_ + 1 > cap) {
    if (response_join) ++counters_.response_joins_suppressed;
    return false;
  }
  if (response_join && node.ever_joined_response &&
      now_ - node.last_response_join < config_.response_throttle_ms) {
    ++counters_.response_joins_suppressed;
    return false;
  }

  node.joined.push_back(domain);
  members_[domain].push_back(node.index);
  if (becomes_multi) ++multi_domain_count_;

  const int per = allocate_buckets(config_.n_domains, new_count);
  for (auto& [scope, table] : node.idht) {
    table.rebuild(per);
  }
  RoutingTable fresh(node.id, TableKind::iDHT, domain, per, config_.params.k);
  node.idht.emplace(domain, std::move(fresh));
  if (auto x = node.xdht.find(domain); x != node.xdht.end()) {
    for (const auto& e : x->second.all_entries()) {
      bootstrap_observe(node, {TableRef::Map::Idht, domain}, e);
    }
    node.xdht.erase(x);
  }
  node.reputation.erase(domain);
  warmup_self_lookup(node, domain);

  if (response_join) {
    node.response_joined.push_back(domain);
    node.last_response_join = now_;
    node.ever_joined_response = true;
    node.joined_health[domain] = DomainReputation(config_.reputation_window);
    node.joined_health_streak[domain] = 0;
    ++counters_.response_joins;
    schedule(now_ + config_.response_check_interval_ms,
             EvResponseCheck{node.index});
  }
  return true;
}

bool Engine::leave_domain(Node& node, DomainId domain) {
  auto rj = std::find(node.response_joined.begin(), node.response_joined.end(),
                      domain);
  if (rj == node.response_joined.end()) {
    return false;  // home domains (and bootstrap memberships) are permanent
  }
  node.response_joined.erase(rj);
  auto jd = std::find(node.joined.begin(), node.joined.end(), domain);
  node.joined.erase(jd);
  auto& members = members_[domain];
  members.erase(std::find(members.begin(), members.end(), node.index));
  if (node.joined.size() == 1) --multi_domain_count_;

  const int per = allocate_buckets(config_.n_domains,
                                   static_cast<int>(node.joined.size()));
  for (auto& [scope, table] : node.idht) {
    if (scope != domain) table.rebuild(per);
  }
  // Demote the domain's table to a 2-bucket xDHT holding the most recently
  // seen entries.
  auto old = node.idht.find(domain);
  if (old != node.idht.end()) {
    node.xdht.emplace(domain, old->second.reshaped(TableKind::xDHT, domain,
                                                   kXdhtBuckets));
    node.idht.erase(old);
  } else {
    node.xdht.emplace(domain, RoutingTable(node.id, TableKind::xDHT, domain,
                                           kXdhtBuckets, config_.params.k));
  }
  node.joined_health.erase(domain);
  node.joined_health_streak.erase(domain);
  ++counters_.response_leaves;
  return true;
}

void Engine::note_intra_outcome_for_leave_rule(LookupJob& j, bool success) {
  if (config_.protocol != Protocol::SovKad) return;
  if (j.kind != LookupKind::Intra) return;
  Node& source = nodes_[j.source];
  if (std::find(source.response_joined.begin(), source.response_joined.end(),
                j.target_domain) == source.response_joined.end()) {
    return;
  }
  auto h = source.joined_health.find(j.target_domain);
  if (h == source.joined_health.end()) return;
  record_health_streak(source, j.target_domain, h->second.add(success));
}

void Engine::record_health_streak(Node& n, DomainId d, double score) {
  auto& streak = n.joined_health_streak[d];
  if (score >= config_.reputation_threshold + config_.leave_margin) {
    ++streak;
  } else {
    streak = 0;
  }
}

void Engine::handle_response_check(NodeIndex idx) {
  Node& n = nodes_[idx];
  if (n.online) {
    std::vector<DomainId> due;
    for (DomainId d : n.response_joined) {
      auto s = n.joined_health_streak.find(d);
      if (s != n.joined_health_streak.end() &&
          s->second >= config_.reputation_window) {
        due.push_back(d);
      }
    }
    for (DomainId d : due) {
      leave_domain(n, d);
    }
  }
  if (!n.response_joined.empty() && now_ < config_.sim_duration_ms) {
    schedule(now_ + config_.response_check_interval_ms,
             EvResponseCheck{idx});
  }
}

}  // namespace podsim

#include <algorithm>
#include <stdexcept>

#include "podsim/sim.hpp"

namespace podsim {

namespace {
constexpr NodeIndex kInvalidNode = UINT32_MAX;
}

void Engine::bootstrap() {
  if (bootstrapped_) {
    throw std::logic_error("bootstrap() called twice");
  }
  create_nodes();
  seed_tables();
  multi_domain_count_ = 0;
  for (const auto& n : nodes_) {
    if (n.joined.size() >= 2) ++multi_domain_count_;
  }
  // Workload arrival streams, one per honest non-gateway participant.
  for (auto& n : nodes_) {
    if (n.online && n.honest && !n.is_gateway) {
      schedule_workload(n.index, true);
    }
  }
  schedule_churn();
  bootstrapped_ = true;
}

void Engine::create_nodes() {
  const uint32_t initial = config_.n_nodes;
  const uint32_t churners =
      static_cast<uint32_t>(initial * config_.churn_rate / 2.0);
  const uint32_t total = initial + churners;

  std::vector<NodeId> ids = generate_ids(total, rng_);
  nodes_.resize(total);
  for (uint32_t i = 0; i < total; ++i) {
    nodes_[i].index = i;
    nodes_[i].id = ids[i];
    nodes_[i].online = i < initial;  // churn joiners start offline
  }
  assign_roles_and_domains(ids);

  members_.assign(config_.n_domains, {});
  for (const auto& n : nodes_) {
    for (DomainId d : n.joined) {
      members_[d].push_back(n.index);
    }
  }

  // Table construction (empty; joiners get seeded when they arrive).
  const int d_count = config_.n_domains;
  const int k = config_.params.k;
  for (auto& n : nodes_) {
    switch (config_.protocol) {
      case Protocol::Kademlia:
        n.idht.emplace(0, RoutingTable(n.id, TableKind::iDHT, 0, kIdBits, k));
        break;
      case Protocol::FedKad:
        if (n.is_gateway) {
          for (DomainId d = 0; d < d_count; ++d) {
            n.gateway_tables.emplace(
                d, RoutingTable(n.id, TableKind::xDHT, d, kIdBits, k));
          }
        } else {
          n.idht.emplace(n.home_domain,
                         RoutingTable(n.id, TableKind::iDHT, n.home_domain,
                                      kIdBits, k));
          n.xdht.emplace(kGatewayScope,
                         RoutingTable(n.id, TableKind::xDHT, kGatewayScope,
                                      kXdhtBuckets, k));
        }
        break;
      case Protocol::SovKad: {
        const int per = allocate_buckets(d_count,
                                         static_cast<int>(n.joined.size()));
        for (DomainId d = 0; d < d_count; ++d) {
          if (n.member_of(d)) {
            n.idht.emplace(d, RoutingTable(n.id, TableKind::iDHT, d, per, k));
          } else {
            n.xdht.emplace(
                d, RoutingTable(n.id, TableKind::xDHT, d, kXdhtBuckets, k));
          }
        }
        break;
      }
    }
  }
}

void Engine::assign_roles_and_domains(const std::vector<NodeId>& ids) {
  const uint32_t initial = config_.n_nodes;
  const uint32_t total = static_cast<uint32_t>(ids.size());
  const uint32_t colluders =
      static_cast<uint32_t>(initial * config_.byzantine_fraction);

  // Colluder set: fixed for the whole run.
  std::vector<NodeIndex> order(initial);
  for (uint32_t i = 0; i < initial; ++i) order[i] = i;
  rng_.shuffle(order);
  for (uint32_t i = 0; i < colluders; ++i) {
    nodes_[order[i]].honest = false;
  }

  // Domain assignment. Congregated placement clusters every colluder in the
  // victim domain; honest nodes spread uniformly either way.
  for (uint32_t i = 0; i < total; ++i) {
    Node& n = nodes_[i];
    if (!n.honest && config_.placement == Placement::Congregated) {
      n.home_domain = config_.victim_domain;
    } else {
      n.home_domain = static_cast<DomainId>(rng_.below(config_.n_domains));
    }
    n.joined = {n.home_domain};
  }

  if (config_.protocol == Protocol::FedKad) {
    // The multi-domain population is realised as the gateway overlay.
    const uint32_t n_gateways =
        static_cast<uint32_t>(initial * config_.multi_domain_fraction);
    std::vector<NodeIndex> pool;
    pool.reserve(initial);
    for (uint32_t i = 0; i < initial; ++i) {
      if (config_.placement == Placement::Congregated && !nodes_[i].honest) {
        continue;  // congregated colluders sit inside the victim domain
      }
      pool.push_back(i);
    }
    rng_.shuffle(pool);
    for (uint32_t i = 0; i < n_gateways && i < pool.size(); ++i) {
      Node& g = nodes_[pool[i]];
      g.is_gateway = true;
      g.joined.clear();  // gateways relay; they are not domain members
      gateways_.push_back(g.index);
    }
    std::sort(gateways_.begin(), gateways_.end());
  } else if (config_.protocol == Protocol::SovKad &&
             config_.sov_multi_bootstrap_fraction > 0.0) {
    const uint32_t n_multi = static_cast<uint32_t>(
        initial * config_.sov_multi_bootstrap_fraction);
    std::vector<NodeIndex> pool(initial);
    for (uint32_t i = 0; i < initial; ++i) pool[i] = i;
    rng_.shuffle(pool);
    for (uint32_t i = 0; i < n_multi; ++i) {
      Node& n = nodes_[pool[i]];
      n.joined.clear();
      for (DomainId d = 0; d < config_.n_domains; ++d) n.joined.push_back(d);
    }
  }
}

void Engine::seed_tables() {
  // Pass 1: k random contacts per table, drawn from the full initial
  // population of the relevant scope.
  for (auto& n : nodes_) {
    if (!n.online) continue;
    seed_node_tables(n);
  }

  // Pass 2: mutual links between XOR-nearest neighbours, so that every
  // node's immediate neighbourhood knows it and the happy path resolves
  // every target.
  if (config_.protocol == Protocol::Kademlia) {
    kademlia_symmetric_seed();
  } else {
    for (DomainId d = 0; d < config_.n_domains; ++d) {
      symmetric_neighbor_seed(d, members_[d]);
    }
  }

  // Pass 3: a warm-up self-lookup per node completes convergence.
  for (auto& n : nodes_) {
    if (!n.online) continue;
    if (config_.protocol == Protocol::Kademlia) {
      warmup_self_lookup(n, 0);
    } else if (!n.is_gateway) {
      for (DomainId d : n.joined) {
        warmup_self_lookup(n, d);
      }
    }
  }
}

void Engine::seed_node_tables(Node& n) {
  const int k = config_.params.k;
  auto draw_members = [this](DomainId d, const Node& self, int count,
                             std::vector<NodeIndex>& out) {
    const auto& list = members_[d];
    if (list.empty()) return;
    for (int i = 0; i < count * 4 && static_cast<int>(out.size()) < count;
         ++i) {
      const NodeIndex cand = list[rng_.below(list.size())];
      if (cand == self.index || !nodes_[cand].online) continue;
      if (std::find(out.begin(), out.end(), cand) != out.end()) continue;
      out.push_back(cand);
    }
  };

  std::vector<NodeIndex> picks;
  switch (config_.protocol) {
    case Protocol::Kademlia: {
      // Single overlay: k random peers from the whole network.
      const uint32_t initial = config_.n_nodes;
      for (int i = 0; i < k * 4 && static_cast<int>(picks.size()) < k; ++i) {
        const NodeIndex cand = static_cast<NodeIndex>(rng_.below(initial));
        if (cand == n.index || !nodes_[cand].online) continue;
        if (std::find(picks.begin(), picks.end(), cand) != picks.end())
          continue;
        picks.push_back(cand);
      }
      for (NodeIndex p : picks) {
        bootstrap_observe(n, {TableRef::Map::Idht, 0},
                          nodes_[p].peer_info(now_));
      }
      break;
    }
    case Protocol::FedKad: {
      if (n.is_gateway) {
        for (DomainId d = 0; d < config_.n_domains; ++d) {
          picks.clear();
          draw_members(d, n, k, picks);
          for (NodeIndex p : picks) {
            bootstrap_observe(n, {TableRef::Map::Gateway, d},
                              nodes_[p].peer_info(now_));
          }
        }
      } else {
        picks.clear();
        draw_members(n.home_domain, n, k, picks);
        for (NodeIndex p : picks) {
          bootstrap_observe(n, {TableRef::Map::Idht, n.home_domain},
                            nodes_[p].peer_info(now_));
        }
        // Gateway contacts fill the 2-bucket xDHT.
        picks.clear();
        if (!gateways_.empty()) {
          for (int i = 0; i < k * 4 && static_cast<int>(picks.size()) < k;
               ++i) {
            const NodeIndex cand = gateways_[rng_.below(gateways_.size())];
            if (!nodes_[cand].online) continue;
            if (std::find(picks.begin(), picks.end(), cand) != picks.end())
              continue;
            picks.push_back(cand);
          }
        }
        for (NodeIndex p : picks) {
          bootstrap_observe(n, {TableRef::Map::Xdht, kGatewayScope},
                            nodes_[p].peer_info(now_));
        }
      }
      break;
    }
    case Protocol::SovKad: {
      for (DomainId d = 0; d < config_.n_domains; ++d) {
        picks.clear();
        draw_members(d, n, k, picks);
        const TableRef ref = n.member_of(d)
                                 ? TableRef{TableRef::Map::Idht, d}
                                 : TableRef{TableRef::Map::Xdht, d};
        for (NodeIndex p : picks) {
          bootstrap_observe(n, ref, nodes_[p].peer_info(now_));
        }
      }
      break;
    }
  }
}

// Seeds every member's table with up to k peers per k-bucket, drawn from
// the bucket's true XOR range. The range of bucket i relative to id n is an
// id-prefix block, hence contiguous in id-sorted order and addressable by
// binary search. With every populated range covered, greedy XOR descent
// always halves the remaining distance and the happy path resolves every
// target.
void Engine::symmetric_neighbor_seed(DomainId domain,
                                     const std::vector<NodeIndex>& members) {
  std::vector<NodeIndex> online;
  online.reserve(members.size());
  for (NodeIndex m : members) {
    if (nodes_[m].online && !nodes_[m].is_gateway) online.push_back(m);
  }
  if (online.size() < 2) return;
  std::vector<NodeId> ids;
  ids.reserve(online.size());
  std::sort(online.begin(), online.end(), [this](NodeIndex a, NodeIndex b) {
    return nodes_[a].id < nodes_[b].id;
  });
  for (NodeIndex m : online) ids.push_back(nodes_[m].id);

  const int k = config_.params.k;
  std::vector<NodeIndex> picks;
  for (size_t i = 0; i < online.size(); ++i) {
    Node& self = nodes_[online[i]];
    const TableRef ref = config_.protocol == Protocol::Kademlia
                             ? TableRef{TableRef::Map::Idht, 0}
                             : TableRef{TableRef::Map::Idht, domain};
    for (int bucket = 0; bucket < kIdBits; ++bucket) {
      // Bucket range: self.id with bit `bucket` flipped and the lower bits
      // free. The block is contiguous in sorted id order.
      NodeId lo = self.id;
      NodeId hi = self.id;
      if (bucket >= 64) {
        const uint64_t flip = 1ULL << (bucket - 64);
        const uint64_t mask = flip - 1;
        lo.hi = (self.id.hi ^ flip) & ~mask;
        hi.hi = (self.id.hi ^ flip) | mask;
        lo.lo = 0;
        hi.lo = ~0ULL;
      } else {
        const uint64_t flip = 1ULL << bucket;
        const uint64_t mask = flip - 1;
        lo.lo = (self.id.lo ^ flip) & ~mask;
        hi.lo = (self.id.lo ^ flip) | mask;
      }
      const auto begin = std::lower_bound(ids.begin(), ids.end(), lo);
      const auto end = std::upper_bound(ids.begin(), ids.end(), hi);
      const size_t block = static_cast<size_t>(end - begin);
      if (block == 0) continue;
      const size_t base = static_cast<size_t>(begin - ids.begin());
      picks.clear();
      if (block <= static_cast<size_t>(k)) {
        for (size_t b = 0; b < block; ++b) {
          picks.push_back(online[base + b]);
        }
      } else {
        for (size_t tries = 0;
             tries < static_cast<size_t>(k) * 4 &&
             picks.size() < static_cast<size_t>(k);
             ++tries) {
          const NodeIndex cand = online[base + rng_.below(block)];
          if (std::find(picks.begin(), picks.end(), cand) != picks.end()) {
            continue;
          }
          picks.push_back(cand);
        }
      }
      for (NodeIndex p : picks) {
        bootstrap_observe(self, ref, nodes_[p].peer_info(now_));
      }
    }
  }
}

void Engine::kademlia_symmetric_seed() {
  std::vector<NodeIndex> everyone;
  everyone.reserve(config_.n_nodes);
  for (uint32_t i = 0; i < config_.n_nodes; ++i) everyone.push_back(i);
  symmetric_neighbor_seed(0, everyone);
}

void Engine::bootstrap_observe(Node& owner, const TableRef& table,
                               const PeerInfo& peer) {
  if (peer.id == owner.id) return;
  RoutingTable* t = table_for(owner, table);
  if (t == nullptr) return;
  const MaintenanceAction action = t->observe_peer(peer, now_);
  if (action.kind == MaintenanceAction::PingLeastRecent) {
    // Bootstrap-time pings resolve instantly: an online candidate answers
    // (everyone cooperates while forming the overlay), an offline one is
    // replaced.
    const bool alive = nodes_[action.candidate.address].online;
    t->resolve_ping(alive, action.candidate.id, action.pending.id, now_);
  }
}

void Engine::warmup_self_lookup(Node& n, DomainId scope) {
  RoutingTable* own = table_for(n, {TableRef::Map::Idht, scope});
  if (own == nullptr) return;

  struct Cand {
    Distance dist;
    PeerInfo peer;
    bool visited = false;
  };
  std::vector<Cand> shortlist;
  auto merge = [&](const PeerInfo& p) {
    if (p.id == n.id) return;
    const Distance d = xor_distance(p.id, n.id);
    auto pos = std::lower_bound(
        shortlist.begin(), shortlist.end(), d,
        [](const Cand& c, const Distance& dd) { return c.dist < dd; });
    if (pos != shortlist.end() && pos->peer.id == p.id) return;
    shortlist.insert(pos, Cand{d, p, false});
  };
  for (const auto& p : own->closest(n.id, config_.params.k)) merge(p);

  const int k = config_.params.k;
  const int beta = config_.params.beta;
  int steps = 0;
  while (steps < 256) {
    Cand* next = nullptr;
    int seen = 0;
    for (auto& c : shortlist) {
      if (!c.visited) {
        next = &c;
        break;
      }
      if (++seen >= k) break;
    }
    if (next == nullptr) break;
    next->visited = true;
    ++steps;
    Node& peer_node = nodes_[next->peer.address];
    if (!peer_node.online) continue;
    RoutingTable* pt = table_for(peer_node, {TableRef::Map::Idht, scope});
    if (pt == nullptr) continue;
    // The contacted node learns about n; n learns the peer's closest
    // entries. No simulated messages: warm-up predates the measured run.
    bootstrap_observe(peer_node, {TableRef::Map::Idht, scope},
                      n.peer_info(now_));
    bootstrap_observe(n, {TableRef::Map::Idht, scope},
                      peer_node.peer_info(now_));
    for (const auto& p : pt->closest(n.id, static_cast<size_t>(beta) + 1)) {
      if (p.id == n.id) continue;
      merge(p);
    }
  }
}

void Engine::schedule_workload(NodeIndex node, bool first) {
  (void)first;
  const double wait = rng_.exponential(config_.mean_lookup_interval_ms);
  schedule(now_ + static_cast<Timestamp>(wait), EvLookupStart{node});
}

void Engine::schedule_churn() {
  if (config_.churn_rate <= 0.0) return;
  const uint32_t initial = config_.n_nodes;
  const uint32_t movers =
      static_cast<uint32_t>(initial * config_.churn_rate / 2.0);
  if (movers == 0) return;

  // Distinct leavers from the initial population, departures spread
  // uniformly over the run.
  std::vector<NodeIndex> pool(initial);
  for (uint32_t i = 0; i < initial; ++i) pool[i] = i;
  rng_.shuffle(pool);
  for (uint32_t i = 0; i < movers; ++i) {
    const Timestamp at = rng_.between(1, config_.sim_duration_ms);
    schedule(at, EvChurnLeave{pool[i]});
  }
  // Joiners were created offline at bootstrap, right after the initial
  // population.
  for (uint32_t i = 0; i < movers; ++i) {
    const Timestamp at = rng_.between(1, config_.sim_duration_ms);
    schedule(at, EvChurnJoin{initial + i});
  }
}

void Engine::handle_churn_leave(NodeIndex idx) {
  Node& n = nodes_[idx];
  if (!n.online) return;
  n.online = false;

  // The departing node abandons its own live lookups.
  std::vector<uint64_t> owned;
  for (const auto& [id, j] : jobs_) {
    if (j.live && j.source == idx) owned.push_back(id);
  }
  std::sort(owned.begin(), owned.end());
  for (uint64_t id : owned) {
    if (auto it = iters_.find(id); it != iters_.end()) {
      it->second.live = false;
      iters_.erase(it);
    }
    if (auto tk = tickets_.find(id); tk != tickets_.end()) {
      tk->second.live = false;
      tickets_.erase(tk);
    }
    if (LookupJob* j = job(id)) {
      finish_job(*j, false, 0);
    }
  }
}

void Engine::handle_churn_join(NodeIndex idx) {
  Node& n = nodes_[idx];
  n.online = true;
  setup_joiner(n);
  if (n.honest && !n.is_gateway) {
    schedule_workload(idx, true);
  }
}

void Engine::setup_joiner(Node& n) {
  seed_node_tables(n);
  if (config_.protocol == Protocol::Kademlia) {
    warmup_self_lookup(n, 0);
  } else {
    for (DomainId d : n.joined) {
      warmup_self_lookup(n, d);
    }
  }
}

DomainId Engine::pick_target_domain(Node& source, bool inter) {
  if (!inter) {
    if (source.joined.size() <= 1) return source.home_domain;
    return source.joined[rng_.below(source.joined.size())];
  }
  std::vector<DomainId> foreign;
  foreign.reserve(config_.n_domains);
  for (DomainId d = 0; d < config_.n_domains; ++d) {
    if (!source.member_of(d)) foreign.push_back(d);
  }
  if (foreign.empty()) return source.home_domain;
  return foreign[rng_.below(foreign.size())];
}

NodeIndex Engine::pick_online_member(DomainId domain, NodeIndex exclude) {
  const auto& list = members_[domain];
  if (list.empty()) return kInvalidNode;
  for (int tries = 0; tries < 64; ++tries) {
    const NodeIndex cand = list[rng_.below(list.size())];
    if (cand != exclude && nodes_[cand].online) return cand;
  }
  const size_t start = rng_.below(list.size());
  for (size_t off = 0; off < list.size(); ++off) {
    const NodeIndex cand = list[(start + off) % list.size()];
    if (cand != exclude && nodes_[cand].online) return cand;
  }
  return kInvalidNode;
}

}  // namespace podsim

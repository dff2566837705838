#include "podsim/driver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <tuple>

#include "json.hpp"

namespace podsim {

namespace {

std::string metadata_json(const RunOutput& out) {
  const SimConfig& c = out.config;
  nlohmann::json j;
  j["run_id"] = c.run_id;
  j["protocol"] = to_string(c.protocol);
  j["scenario"] = c.scenario_label;
  j["n_nodes"] = c.n_nodes;
  j["n_domains"] = c.n_domains;
  j["sim_duration_ms"] = c.sim_duration_ms;
  j["seed"] = c.seed;
  j["churn_rate"] = c.churn_rate;
  j["byzantine_fraction"] = c.byzantine_fraction;
  j["placement"] =
      c.placement == Placement::Uniform ? "uniform" : "congregated";
  j["victim_domain"] = c.victim_domain;
  j["strategy"] = to_string(c.strategy);
  j["respond_to_pings"] = c.respond_to_pings;
  j["multi_domain_fraction"] = c.multi_domain_fraction;
  j["max_domains_per_node"] = c.effective_max_domains();
  j["inter_lookup_probability"] = c.inter_lookup_probability();
  j["latency_ms"] = {c.latency_min_ms, c.latency_max_ms};
  j["params"] = {{"alpha", c.params.alpha},
                 {"beta", c.params.beta},
                 {"k", c.params.k},
                 {"max_attempts_intra", c.params.max_attempts_intra},
                 {"max_attempts_fedkad", c.params.max_attempts_fedkad},
                 {"max_attempts_sovkad", c.params.max_attempts_sovkad},
                 {"request_timeout_ms", c.params.request_timeout_ms},
                 {"pong_timeout_ms", c.params.pong_timeout_ms},
                 {"lookup_deadline_ms", c.params.lookup_deadline_ms},
                 {"fedkad_attempt_timeout_ms",
                  c.params.fedkad_attempt_timeout_ms},
                 {"sovkad_attempt_timeout_ms",
                  c.params.sovkad_attempt_timeout_ms}};
  j["reputation"] = {{"window", out.config.reputation_window},
                     {"threshold", out.config.reputation_threshold},
                     {"response_enabled", out.config.response_enabled}};
  j["counters"] = {
      {"messages_sent", out.counters.messages_sent},
      {"messages_delivered", out.counters.messages_delivered},
      {"messages_dropped_adversary", out.counters.messages_dropped_adversary},
      {"messages_lost_offline", out.counters.messages_lost_offline},
      {"gateway_leg_messages", out.counters.gateway_leg_messages},
      {"maintenance_pings", out.counters.maintenance_pings},
      {"lookups_initiated", out.counters.lookups_initiated},
      {"lookups_recorded", out.counters.lookups_recorded},
      {"effective_request_timeouts",
       out.counters.effective_request_timeouts},
      {"response_joins", out.counters.response_joins},
      {"response_joins_suppressed", out.counters.response_joins_suppressed},
      {"response_leaves", out.counters.response_leaves}};
  j["wall_seconds"] = out.wall_seconds;
  return j.dump(2);
}

}  // namespace

uint64_t cell_seed(uint64_t base_seed, const SimConfig& cell) {
  uint64_t x = base_seed;
  auto mix = [&x](uint64_t v) {
    x ^= v + 0x9e3779b97f4a7c15ULL + (x << 6) + (x >> 2);
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 31;
  };
  mix(static_cast<uint64_t>(cell.protocol));
  mix(cell.n_nodes);
  mix(cell.n_domains);
  for (char ch : cell.scenario_label) mix(static_cast<uint64_t>(ch));
  return x;
}

std::string cell_name(const SimConfig& cell) {
  return to_string(cell.protocol) + "_" + cell.scenario_label + "_v" +
         std::to_string(cell.n_nodes) + "_d" + std::to_string(cell.n_domains) +
         "_s" + std::to_string(cell.seed);
}

RunOutput run_scenario(SimConfig config, ScenarioName scenario,
                       const std::optional<std::string>& out_dir) {
  ScenarioSpec{scenario}.apply(config);
  if (config.run_id == "run") {
    config.run_id = cell_name(config);
  }

  const auto t0 = std::chrono::steady_clock::now();
  Engine engine(config);
  engine.bootstrap();
  engine.run();
  const auto t1 = std::chrono::steady_clock::now();

  RunOutput out;
  out.config = config;
  out.records = engine.records();
  out.aggregates = aggregate(out.records);
  out.counters = engine.counters();
  out.wall_seconds = std::chrono::duration<double>(t1 - t0).count();

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_records_csv(out.records, *out_dir + "/records.csv");
    write_aggregates_csv(out.aggregates, *out_dir + "/aggregates.csv");
    emit_plot_data(out.aggregates, *out_dir + "/plot");
    std::ofstream meta(*out_dir + "/metadata.json", std::ios::binary);
    meta << metadata_json(out) << '\n';
  }
  return out;
}

SweepResult sweep(const SweepGrid& grid,
                  const std::optional<std::string>& out_dir, int parallelism,
                  bool write_cell_outputs) {
  std::vector<std::pair<SimConfig, ScenarioName>> cells;
  for (Protocol p : grid.protocols) {
    for (uint32_t v : grid.sizes) {
      for (uint16_t d : grid.domain_counts) {
        for (ScenarioName s : grid.scenarios) {
          SimConfig c = grid.base;
          c.protocol = p;
          c.n_nodes = v;
          c.n_domains = d;
          ScenarioSpec{s}.apply(c);
          c.seed = cell_seed(grid.base.seed, c);
          c.run_id = cell_name(c);
          cells.emplace_back(std::move(c), s);
        }
      }
    }
  }

  struct CellResult {
    std::vector<AggregateStats> aggregates;
    bool failed = false;
    std::string error;
  };
  std::vector<CellResult> results(cells.size());

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        std::optional<std::string> cell_dir;
        if (out_dir && write_cell_outputs) {
          cell_dir = *out_dir + "/" + cells[i].first.run_id;
        }
        RunOutput out =
            run_scenario(cells[i].first, cells[i].second, cell_dir);
        results[i].aggregates = std::move(out.aggregates);
      } catch (const std::exception& e) {
        results[i].failed = true;
        results[i].error = cells[i].first.run_id + ": " + e.what();
      }
    }
  };

  const int n_threads = std::max(1, parallelism);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (results[i].failed) {
      ++result.cells_failed;
      result.failures.push_back(results[i].error);
      continue;
    }
    ++result.cells_run;
    for (auto& a : results[i].aggregates) {
      result.merged.push_back(std::move(a));
    }
  }
  std::sort(result.merged.begin(), result.merged.end(),
            [](const AggregateStats& a, const AggregateStats& b) {
              return std::tie(a.protocol, a.scenario, a.n_nodes, a.n_domains) <
                     std::tie(b.protocol, b.scenario, b.n_nodes, b.n_domains);
            });

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_aggregates_csv(result.merged, *out_dir + "/comparison.csv");
    emit_plot_data(result.merged, *out_dir + "/plot");
  }
  return result;
}

}  // namespace podsim

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "podsim/config.hpp"
#include "podsim/metrics.hpp"
#include "podsim/sim.hpp"

namespace podsim {

struct RunOutput {
  SimConfig config;
  std::vector<LookupRecord> records;
  std::vector<AggregateStats> aggregates;
  RunCounters counters;
  double wall_seconds = 0.0;
};

// Bootstraps and runs one cell. When out_dir is given, writes records.csv,
// aggregates.csv, plot data and metadata.json into it (created if absent).
RunOutput run_scenario(SimConfig config, ScenarioName scenario,
                       const std::optional<std::string>& out_dir);

struct SweepGrid {
  std::vector<Protocol> protocols{Protocol::Kademlia, Protocol::FedKad,
                                  Protocol::SovKad};
  std::vector<uint32_t> sizes{1000, 8000, 16000};
  std::vector<uint16_t> domain_counts{2, 4, 6, 8};
  std::vector<ScenarioName> scenarios{
      ScenarioName::HappyPath, ScenarioName::Churn,
      ScenarioName::ByzantineUniform, ScenarioName::ByzantineCongregated};
  SimConfig base;  // seed, protocol params, etc.

  size_t cell_count() const {
    return protocols.size() * sizes.size() * domain_counts.size() *
           scenarios.size();
  }
};

struct SweepResult {
  std::vector<AggregateStats> merged;
  size_t cells_run = 0;
  size_t cells_failed = 0;
  std::vector<std::string> failures;
};

// Runs the grid cross product, one engine per cell, optionally on several
// OS threads. Each cell is fully independent; the merged aggregate table is
// sorted by key, so schedules cannot change the output. Kademlia ignores
// n_domains for topology but keeps it as a workload label.
SweepResult sweep(const SweepGrid& grid,
                  const std::optional<std::string>& out_dir, int parallelism,
                  bool write_cell_outputs = true);

// Per-cell derived seed so cells are statistically independent while the
// whole sweep stays a pure function of the base seed.
uint64_t cell_seed(uint64_t base_seed, const SimConfig& cell);

std::string cell_name(const SimConfig& cell);

}  // namespace podsim

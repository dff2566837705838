// podsim: protocol library + deterministic discrete-event simulator that
// compares Kademlia, FedKad and SovKad node discovery.
//
// Subcommands:
//   run      one (protocol, size, domains, scenario) cell, CSV outputs
//   sweep    cross product of cells, merged comparison CSV
//   validate config check only

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "podsim/driver.hpp"

namespace {

constexpr int kExitOK = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

struct CommonFlags {
  std::string config_path;
  std::string protocol;
  uint32_t nodes = 0;
  uint16_t domains = 0;
  std::string scenario;
  int64_t seed = -1;
  std::string out_dir;
  uint64_t duration_ms = 0;
  bool quick = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Config file (key = value)");
  cmd->add_option("--protocol", f.protocol, "kademlia | fedkad | sovkad");
  cmd->add_option("--nodes", f.nodes, "Network size |V|");
  cmd->add_option("--domains", f.domains, "Domain count |D|");
  cmd->add_option("--scenario", f.scenario,
                  "happy_path | churn | byzantine_uniform | "
                  "byzantine_congregated | custom");
  cmd->add_option("--seed", f.seed, "RNG seed (default 0)");
  cmd->add_option("--out", f.out_dir,
                  "Output directory (default $PODSIM_OUT_DIR or ./out)");
  cmd->add_option("--duration-ms", f.duration_ms, "Simulated time in ms");
  cmd->add_flag("--quick", f.quick,
                "CI preset: 1000 nodes, 10 simulated minutes");
}

std::string default_out_dir(const CommonFlags& f) {
  if (!f.out_dir.empty()) return f.out_dir;
  if (const char* env = std::getenv("PODSIM_OUT_DIR")) return env;
  return "out";
}

// File config first, then flag overrides. Returns nullopt (after printing
// diagnostics) when invalid.
std::optional<podsim::ConfigParseResult> load_config(const CommonFlags& f,
                                                     bool print_notes) {
  podsim::ConfigParseResult parsed;
  if (!f.config_path.empty()) {
    parsed = podsim::parse_config_file(f.config_path);
    if (!parsed.ok()) {
      for (const auto& e : parsed.errors) std::cerr << "config: " << e << "\n";
      return std::nullopt;
    }
  }
  podsim::SimConfig& cfg = parsed.config;
  std::vector<std::string> errors;
  if (!f.protocol.empty()) {
    if (auto p = podsim::protocol_from_string(f.protocol)) {
      cfg.protocol = *p;
    } else {
      errors.push_back("unknown protocol '" + f.protocol + "'");
    }
  }
  if (!f.scenario.empty()) {
    if (auto s = podsim::scenario_from_string(f.scenario)) {
      parsed.scenario = *s;
    } else {
      errors.push_back("unknown scenario '" + f.scenario + "'");
    }
  }
  if (f.nodes > 0) cfg.n_nodes = f.nodes;
  if (f.domains > 0) cfg.n_domains = f.domains;
  if (f.duration_ms > 0) cfg.sim_duration_ms = f.duration_ms;
  if (f.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(f.seed);
    parsed.seed_given = true;
    parsed.notes.clear();
  }
  if (f.quick) {
    cfg.n_nodes = 1000;
    cfg.sim_duration_ms = 600'000;
  }
  podsim::ScenarioSpec{parsed.scenario}.apply(cfg);
  for (auto& e : cfg.validate()) errors.push_back(e);
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "config: " << e << "\n";
    return std::nullopt;
  }
  if (print_notes) {
    for (const auto& n : parsed.notes) std::cerr << "note: " << n << "\n";
  }
  return parsed;
}

template <typename T>
std::vector<T> parse_list(const std::string& csv,
                          std::optional<T> (*parse)(const std::string&),
                          bool& ok) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (auto v = parse(item)) {
      out.push_back(*v);
    } else {
      std::cerr << "config: unknown list item '" << item << "'\n";
      ok = false;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"podsim: Kademlia / FedKad / SovKad node-discovery simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run a single simulation cell");
  add_common(run_cmd, run_flags);

  CommonFlags sweep_flags;
  std::string sweep_protocols = "kademlia,fedkad,sovkad";
  std::string sweep_sizes = "1000,8000,16000";
  std::string sweep_domains = "2,4,6,8";
  std::string sweep_scenarios =
      "happy_path,churn,byzantine_uniform,byzantine_congregated";
  int parallel = 1;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Run a grid of cells and merge aggregates");
  add_common(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--protocols", sweep_protocols, "Comma list");
  sweep_cmd->add_option("--sizes", sweep_sizes, "Comma list of |V|");
  sweep_cmd->add_option("--domain-counts", sweep_domains,
                        "Comma list of |D|");
  sweep_cmd->add_option("--scenarios", sweep_scenarios, "Comma list");
  sweep_cmd->add_option("--parallel", parallel, "Worker threads");

  CommonFlags validate_flags;
  auto* validate_cmd =
      app.add_subcommand("validate", "Check a configuration and exit");
  add_common(validate_cmd, validate_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate_cmd->parsed()) {
      auto parsed = load_config(validate_flags, true);
      if (!parsed) return kExitConfigError;
      std::cout << "config ok: protocol=" << to_string(parsed->config.protocol)
                << " nodes=" << parsed->config.n_nodes
                << " domains=" << parsed->config.n_domains
                << " scenario=" << to_string(parsed->scenario)
                << " seed=" << parsed->config.seed << "\n";
      return kExitOK;
    }

    if (run_cmd->parsed()) {
      auto parsed = load_config(run_flags, true);
      if (!parsed) return kExitConfigError;
      const std::string out_dir = default_out_dir(run_flags);
      podsim::RunOutput out =
          podsim::run_scenario(parsed->config, parsed->scenario, out_dir);
      std::cout << "run " << out.config.run_id << ": "
                << out.records.size() << " lookups, wall "
                << out.wall_seconds << "s\n";
      for (const auto& a : out.aggregates) {
        std::cout << "  success_rate=" << a.success_rate
                  << " hops_mean=" << a.hops_mean
                  << " messages_mean=" << a.messages_mean
                  << " (n=" << a.count << ")\n";
      }
      std::cout << "outputs in " << out_dir << "/\n";
      return kExitOK;
    }

    if (sweep_cmd->parsed()) {
      auto parsed = load_config(sweep_flags, true);
      if (!parsed) return kExitConfigError;
      bool ok = true;
      podsim::SweepGrid grid;
      grid.base = parsed->config;
      grid.protocols =
          parse_list<podsim::Protocol>(sweep_protocols,
                                       podsim::protocol_from_string, ok);
      grid.scenarios =
          parse_list<podsim::ScenarioName>(sweep_scenarios,
                                           podsim::scenario_from_string, ok);
      grid.sizes.clear();
      grid.domain_counts.clear();
      {
        std::stringstream ss(sweep_sizes);
        std::string item;
        while (std::getline(ss, item, ',')) {
          grid.sizes.push_back(static_cast<uint32_t>(std::stoul(item)));
        }
        std::stringstream ds(sweep_domains);
        while (std::getline(ds, item, ',')) {
          grid.domain_counts.push_back(
              static_cast<uint16_t>(std::stoul(item)));
        }
      }
      if (sweep_flags.quick) {
        grid.base.n_nodes = 1000;
        grid.base.sim_duration_ms = 600'000;
        grid.sizes = {1000};
      }
      if (!ok || grid.protocols.empty() || grid.sizes.empty() ||
          grid.domain_counts.empty() || grid.scenarios.empty()) {
        return kExitConfigError;
      }
      const std::string out_dir = default_out_dir(sweep_flags);
      podsim::SweepResult result = podsim::sweep(grid, out_dir, parallel);
      std::cout << "sweep: " << result.cells_run << " cells ok, "
                << result.cells_failed << " failed; merged comparison in "
                << out_dir << "/comparison.csv\n";
      for (const auto& f : result.failures) {
        std::cerr << "cell failed: " << f << "\n";
      }
      return result.cells_failed == 0 ? kExitOK : kExitRuntimeError;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOK;
}

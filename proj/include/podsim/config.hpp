#pragma once

#include <optional>
#include <string>
#include <vector>

#include "podsim/node.hpp"
#include "podsim/protocol.hpp"

namespace podsim {

enum class Protocol { Kademlia, FedKad, SovKad };
enum class Placement { Uniform, Congregated };
enum class ScenarioName {
  HappyPath,
  Churn,
  ByzantineUniform,
  ByzantineCongregated,
  Custom,
};

std::string to_string(Protocol p);
std::string to_string(ScenarioName s);
std::string to_string(AdversaryStrategy s);
std::optional<Protocol> protocol_from_string(const std::string& s);
std::optional<ScenarioName> scenario_from_string(const std::string& s);
std::optional<AdversaryStrategy> strategy_from_string(const std::string& s);

struct SimConfig {
  Protocol protocol = Protocol::Kademlia;
  std::string run_id = "run";
  std::string scenario_label = "custom";

  uint32_t n_nodes = 1000;
  uint16_t n_domains = 1;
  uint64_t sim_duration_ms = 3'600'000;

  double churn_rate = 0.0;                  // c
  double byzantine_fraction = 0.0;          // f
  Placement placement = Placement::Uniform;
  DomainId victim_domain = 0;
  AdversaryStrategy strategy = AdversaryStrategy::DropAll;
  bool respond_to_pings = true;

  double multi_domain_fraction = 0.1;       // p
  int max_domains_per_node = 0;             // m; 0 means |D|
  // Fraction of nodes that start as members of every domain in SovKad.
  // Kept at 0 by default so the p budget is available to the attack
  // response; FedKad realises the multi-domain population as gateways.
  double sov_multi_bootstrap_fraction = 0.0;

  std::optional<double> inter_lookup_prob_override;
  double mean_lookup_interval_ms = 60'000;

  uint64_t seed = 0;
  uint64_t latency_min_ms = 50;
  uint64_t latency_max_ms = 300;

  ProtocolParams params;

  size_t reputation_window = 20;    // W
  double reputation_threshold = 0.7;  // t
  bool response_enabled = true;
  uint64_t response_throttle_ms = 60'000;
  uint64_t response_check_interval_ms = 60'000;  // Delta for leave checks
  double leave_margin = 0.1;

  int effective_max_domains() const {
    return max_domains_per_node > 0 ? max_domains_per_node : n_domains;
  }

  // Probability that a generated lookup is inter-domain, as a function of
  // the domain count: {2: 5%, 4: 7.5%, 6: 10%, 8: 15%}, linear in between,
  // clamped at the ends.
  double inter_lookup_probability() const;

  // All violated invariants, empty when the config is valid.
  std::vector<std::string> validate() const;
};

struct ScenarioSpec {
  ScenarioName name = ScenarioName::Custom;
  void apply(SimConfig& config) const;
};

struct ConfigParseResult {
  SimConfig config;
  ScenarioName scenario = ScenarioName::Custom;
  std::vector<std::string> errors;
  std::vector<std::string> notes;
  bool seed_given = false;

  bool ok() const { return errors.empty(); }
};

// Parses a line-oriented `key = value` file with [section] headers.
// Unknown sections or keys are reported as errors. Returns all violations
// at once rather than stopping at the first.
ConfigParseResult parse_config_file(const std::string& path);
ConfigParseResult parse_config_text(const std::string& text);

}  // namespace podsim

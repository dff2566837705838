#include "podsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace podsim {

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::Kademlia: return "kademlia";
    case Protocol::FedKad: return "fedkad";
    case Protocol::SovKad: return "sovkad";
  }
  return "?";
}

std::string to_string(ScenarioName s) {
  switch (s) {
    case ScenarioName::HappyPath: return "happy_path";
    case ScenarioName::Churn: return "churn";
    case ScenarioName::ByzantineUniform: return "byzantine_uniform";
    case ScenarioName::ByzantineCongregated: return "byzantine_congregated";
    case ScenarioName::Custom: return "custom";
  }
  return "?";
}

std::string to_string(AdversaryStrategy s) {
  switch (s) {
    case AdversaryStrategy::Honest: return "honest";
    case AdversaryStrategy::DropAll: return "drop_all";
    case AdversaryStrategy::IntraOnlyDrop: return "intra_only_drop";
  }
  return "?";
}

std::optional<Protocol> protocol_from_string(const std::string& s) {
  if (s == "kademlia") return Protocol::Kademlia;
  if (s == "fedkad") return Protocol::FedKad;
  if (s == "sovkad") return Protocol::SovKad;
  return std::nullopt;
}

std::optional<ScenarioName> scenario_from_string(const std::string& s) {
  if (s == "happy_path") return ScenarioName::HappyPath;
  if (s == "churn") return ScenarioName::Churn;
  if (s == "byzantine_uniform") return ScenarioName::ByzantineUniform;
  if (s == "byzantine_congregated") return ScenarioName::ByzantineCongregated;
  if (s == "custom") return ScenarioName::Custom;
  return std::nullopt;
}

std::optional<AdversaryStrategy> strategy_from_string(const std::string& s) {
  if (s == "honest") return AdversaryStrategy::Honest;
  if (s == "drop_all") return AdversaryStrategy::DropAll;
  if (s == "intra_only_drop") return AdversaryStrategy::IntraOnlyDrop;
  return std::nullopt;
}

double SimConfig::inter_lookup_probability() const {
  if (inter_lookup_prob_override) return *inter_lookup_prob_override;
  const double d = static_cast<double>(n_domains);
  if (n_domains <= 1) return 0.0;
  struct Point {
    double d, p;
  };
  static constexpr Point kTable[] = {
      {1.0, 0.0}, {2.0, 0.05}, {4.0, 0.075}, {6.0, 0.10}, {8.0, 0.15}};
  if (d >= 8.0) return 0.15;
  for (size_t i = 1; i < std::size(kTable); ++i) {
    if (d <= kTable[i].d) {
      const auto& a = kTable[i - 1];
      const auto& b = kTable[i];
      return a.p + (b.p - a.p) * (d - a.d) / (b.d - a.d);
    }
  }
  return 0.15;
}

std::vector<std::string> SimConfig::validate() const {
  std::vector<std::string> errors;
  if (n_nodes < 2) {
    errors.push_back("n_nodes must be at least 2");
  }
  if (n_domains < 1) {
    errors.push_back("n_domains must be at least 1");
  }
  if (n_domains > kMaxDomains) {
    errors.push_back("n_domains exceeds the 64-domain limit");
  }
  if (protocol != Protocol::Kademlia && n_domains < 2) {
    errors.push_back("fedkad/sovkad require at least 2 domains");
  }
  if (byzantine_fraction < 0.0 || byzantine_fraction >= 1.0 / 3.0) {
    errors.push_back(
        "byzantine_fraction must satisfy 0 <= f < 1/3 (threat model bound)");
  }
  if (churn_rate < 0.0 || churn_rate > 1.0) {
    errors.push_back("churn_rate must be in [0, 1]");
  }
  if (multi_domain_fraction < 0.0 || multi_domain_fraction > 1.0) {
    errors.push_back("multi_domain_fraction must be in [0, 1]");
  }
  if (sov_multi_bootstrap_fraction < 0.0 ||
      sov_multi_bootstrap_fraction > multi_domain_fraction) {
    errors.push_back(
        "sov_multi_bootstrap_fraction must be in [0, multi_domain_fraction]");
  }
  if (inter_lookup_prob_override &&
      (*inter_lookup_prob_override < 0.0 || *inter_lookup_prob_override > 1.0)) {
    errors.push_back("inter_lookup_prob must be in [0, 1]");
  }
  if (max_domains_per_node < 0 || max_domains_per_node > n_domains) {
    errors.push_back("max_domains_per_node must be in [0, n_domains]");
  }
  if (victim_domain >= n_domains) {
    errors.push_back("victim_domain must name an existing domain");
  }
  if (latency_min_ms == 0 || latency_min_ms > latency_max_ms) {
    errors.push_back("latency bounds must satisfy 0 < min <= max");
  }
  if (params.alpha < 1 || params.alpha > params.beta ||
      params.beta > params.k) {
    errors.push_back("protocol params must satisfy 1 <= alpha <= beta <= k");
  }
  if (params.max_attempts_intra < 1 || params.max_attempts_fedkad < 1 ||
      params.max_attempts_sovkad < 1) {
    errors.push_back("attempt limits must be at least 1");
  }
  if (reputation_window < 1) {
    errors.push_back("reputation window must be at least 1");
  }
  if (reputation_threshold < 0.0 || reputation_threshold > 1.0) {
    errors.push_back("reputation threshold must be in [0, 1]");
  }
  if (mean_lookup_interval_ms == 0) {
    errors.push_back("mean_lookup_interval_ms must be positive");
  }
  return errors;
}

void ScenarioSpec::apply(SimConfig& config) const {
  config.scenario_label = to_string(name);
  switch (name) {
    case ScenarioName::HappyPath:
      config.churn_rate = 0.0;
      config.byzantine_fraction = 0.0;
      break;
    case ScenarioName::Churn:
      config.churn_rate = 0.5;
      config.byzantine_fraction = 0.0;
      break;
    case ScenarioName::ByzantineUniform:
      config.churn_rate = 0.0;
      config.byzantine_fraction = 0.3;
      config.placement = Placement::Uniform;
      config.strategy = AdversaryStrategy::DropAll;
      break;
    case ScenarioName::ByzantineCongregated:
      config.churn_rate = 0.0;
      config.byzantine_fraction = 0.3;
      config.placement = Placement::Congregated;
      config.strategy = AdversaryStrategy::IntraOnlyDrop;
      break;
    case ScenarioName::Custom:
      break;
  }
}

namespace {

std::string trim(const std::string& s) {
  size_t a = 0;
  size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool parse_u64(const std::string& v, uint64_t& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == nullptr || *end != '\0') return false;
  out = x;
  return true;
}

bool parse_double(const std::string& v, double& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == nullptr || *end != '\0') return false;
  out = x;
  return true;
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

ConfigParseResult parse_config_text(const std::string& text) {
  ConfigParseResult result;
  SimConfig& cfg = result.config;
  std::string section = "simulation";
  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  auto err = [&result, &lineno](const std::string& msg) {
    result.errors.push_back("line " + std::to_string(lineno) + ": " + msg);
  };

  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        err("malformed section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "simulation" && section != "scenario" &&
          section != "protocol" && section != "network" &&
          section != "reputation") {
        err("unknown section [" + section + "]");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      err("expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    uint64_t u = 0;
    double d = 0.0;
    bool b = false;

    auto want_u64 = [&]() {
      if (parse_u64(value, u)) return true;
      err("key '" + key + "' expects an unsigned integer");
      return false;
    };
    auto want_double = [&]() {
      if (parse_double(value, d)) return true;
      err("key '" + key + "' expects a number");
      return false;
    };
    auto want_bool = [&]() {
      if (parse_bool(value, b)) return true;
      err("key '" + key + "' expects a boolean");
      return false;
    };

    if (section == "simulation") {
      if (key == "protocol") {
        if (auto p = protocol_from_string(value)) {
          cfg.protocol = *p;
        } else {
          err("unknown protocol '" + value + "'");
        }
      } else if (key == "nodes") {
        if (want_u64()) cfg.n_nodes = static_cast<uint32_t>(u);
      } else if (key == "domains") {
        if (want_u64()) cfg.n_domains = static_cast<uint16_t>(u);
      } else if (key == "duration_ms") {
        if (want_u64()) cfg.sim_duration_ms = u;
      } else if (key == "seed") {
        if (want_u64()) {
          cfg.seed = u;
          result.seed_given = true;
        }
      } else if (key == "run_id") {
        cfg.run_id = value;
      } else if (key == "multi_domain_fraction") {
        if (want_double()) cfg.multi_domain_fraction = d;
      } else if (key == "max_domains_per_node") {
        if (want_u64()) cfg.max_domains_per_node = static_cast<int>(u);
      } else if (key == "sov_multi_bootstrap_fraction") {
        if (want_double()) cfg.sov_multi_bootstrap_fraction = d;
      } else if (key == "inter_lookup_prob") {
        if (want_double()) cfg.inter_lookup_prob_override = d;
      } else if (key == "mean_lookup_interval_ms") {
        if (want_u64()) cfg.mean_lookup_interval_ms = static_cast<double>(u);
      } else {
        err("unknown key '" + key + "' in [simulation]");
      }
    } else if (section == "scenario") {
      if (key == "name") {
        if (auto s = scenario_from_string(value)) {
          result.scenario = *s;
        } else {
          err("unknown scenario '" + value + "'");
        }
      } else if (key == "churn_rate") {
        if (want_double()) cfg.churn_rate = d;
      } else if (key == "byzantine_fraction") {
        if (want_double()) cfg.byzantine_fraction = d;
      } else if (key == "placement") {
        if (value == "uniform") {
          cfg.placement = Placement::Uniform;
        } else if (value == "congregated") {
          cfg.placement = Placement::Congregated;
        } else {
          err("unknown placement '" + value + "'");
        }
      } else if (key == "victim_domain") {
        if (want_u64()) cfg.victim_domain = static_cast<DomainId>(u);
      } else if (key == "strategy") {
        if (auto s = strategy_from_string(value)) {
          cfg.strategy = *s;
        } else {
          err("unknown strategy '" + value + "'");
        }
      } else if (key == "respond_to_pings") {
        if (want_bool()) cfg.respond_to_pings = b;
      } else {
        err("unknown key '" + key + "' in [scenario]");
      }
    } else if (section == "protocol") {
      if (key == "alpha") {
        if (want_u64()) cfg.params.alpha = static_cast<int>(u);
      } else if (key == "beta") {
        if (want_u64()) cfg.params.beta = static_cast<int>(u);
      } else if (key == "k") {
        if (want_u64()) cfg.params.k = static_cast<int>(u);
      } else if (key == "max_attempts_intra") {
        if (want_u64()) cfg.params.max_attempts_intra = static_cast<int>(u);
      } else if (key == "max_attempts_fedkad") {
        if (want_u64()) cfg.params.max_attempts_fedkad = static_cast<int>(u);
      } else if (key == "max_attempts_sovkad") {
        if (want_u64()) cfg.params.max_attempts_sovkad = static_cast<int>(u);
      } else if (key == "request_timeout_ms") {
        if (want_u64()) cfg.params.request_timeout_ms = u;
      } else if (key == "pong_timeout_ms") {
        if (want_u64()) cfg.params.pong_timeout_ms = u;
      } else if (key == "lookup_deadline_ms") {
        if (want_u64()) cfg.params.lookup_deadline_ms = u;
      } else if (key == "fedkad_attempt_timeout_ms") {
        if (want_u64()) cfg.params.fedkad_attempt_timeout_ms = u;
      } else if (key == "sovkad_attempt_timeout_ms") {
        if (want_u64()) cfg.params.sovkad_attempt_timeout_ms = u;
      } else {
        err("unknown key '" + key + "' in [protocol]");
      }
    } else if (section == "network") {
      if (key == "latency_min_ms") {
        if (want_u64()) cfg.latency_min_ms = u;
      } else if (key == "latency_max_ms") {
        if (want_u64()) cfg.latency_max_ms = u;
      } else {
        err("unknown key '" + key + "' in [network]");
      }
    } else if (section == "reputation") {
      if (key == "window") {
        if (want_u64()) cfg.reputation_window = u;
      } else if (key == "threshold") {
        if (want_double()) cfg.reputation_threshold = d;
      } else if (key == "response_enabled") {
        if (want_bool()) cfg.response_enabled = b;
      } else if (key == "response_throttle_ms") {
        if (want_u64()) cfg.response_throttle_ms = u;
      } else if (key == "response_check_interval_ms") {
        if (want_u64()) cfg.response_check_interval_ms = u;
      } else if (key == "leave_margin") {
        if (want_double()) cfg.leave_margin = d;
      } else {
        err("unknown key '" + key + "' in [reputation]");
      }
    }
  }

  if (!result.seed_given) {
    result.notes.push_back("seed not given, defaulting to 0");
  }
  ScenarioSpec{result.scenario}.apply(cfg);
  for (auto& v : cfg.validate()) {
    result.errors.push_back(v);
  }
  return result;
}

ConfigParseResult parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ConfigParseResult result;
    result.errors.push_back("cannot open config file: " + path);
    return result;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace podsim

#include "podsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace podsim {

namespace {

std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct Moments {
  double sum = 0.0;
  double sumsq = 0.0;
  size_t n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
  double pop_std() const {
    if (n == 0) return 0.0;
    const double m = mean();
    const double var = sumsq / static_cast<double>(n) - m * m;
    return var > 0.0 ? std::sqrt(var) : 0.0;
  }
};

}  // namespace

void RecordStore::add(LookupRecord record) {
  if (!seen_.insert(record.lookup_id).second) {
    throw std::invalid_argument("duplicate lookup_id " +
                                std::to_string(record.lookup_id));
  }
  rows_.push_back(std::move(record));
}

std::vector<AggregateStats> aggregate(const std::vector<LookupRecord>& records,
                                      const AggregateOptions& options) {
  using Key = std::tuple<std::string, std::string, uint32_t, uint16_t>;
  struct Acc {
    Moments success;
    Moments hops;
    Moments messages;
  };
  std::map<Key, Acc> groups;

  for (const auto& r : records) {
    if (options.target_domain_filter &&
        r.target_domain != *options.target_domain_filter) {
      continue;
    }
    if (options.kind_filter && r.kind != *options.kind_filter) {
      continue;
    }
    Acc& acc = groups[{r.protocol, r.scenario, r.n_nodes, r.n_domains}];
    acc.success.add(r.success ? 1.0 : 0.0);
    if (r.success) {
      acc.hops.add(static_cast<double>(r.hops));
    }
    uint32_t msgs = r.messages;
    if (!options.include_maintenance) {
      msgs -= std::min(msgs, r.ping_messages);
    }
    acc.messages.add(static_cast<double>(msgs));
  }

  std::vector<AggregateStats> out;
  out.reserve(groups.size());
  for (const auto& [key, acc] : groups) {
    AggregateStats s;
    s.protocol = std::get<0>(key);
    s.scenario = std::get<1>(key);
    s.n_nodes = std::get<2>(key);
    s.n_domains = std::get<3>(key);
    s.success_rate = acc.success.mean();
    s.success_std = acc.success.pop_std();
    s.hops_mean = acc.hops.mean();
    s.hops_std = acc.hops.pop_std();
    s.messages_mean = acc.messages.mean();
    s.messages_std = acc.messages.pop_std();
    s.count = acc.success.n;
    s.success_count = acc.hops.n;
    out.push_back(std::move(s));
  }
  return out;
}

void write_records_csv(const std::vector<LookupRecord>& records,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  out << "run_id,protocol,scenario,n_nodes,n_domains,lookup_id,kind,"
         "source_domain,target_domain,success,hops,messages,latency_ms,"
         "attempts\n";
  for (const auto& r : records) {
    out << r.run_id << ',' << r.protocol << ',' << r.scenario << ','
        << r.n_nodes << ',' << r.n_domains << ',' << r.lookup_id << ','
        << r.kind << ',' << r.source_domain << ',' << r.target_domain << ','
        << (r.success ? 1 : 0) << ',' << r.hops << ',' << r.messages << ','
        << r.latency_ms << ',' << r.attempts << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

void write_aggregates_csv(const std::vector<AggregateStats>& stats,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open for writing: " + path);
  }
  out << "protocol,scenario,n_nodes,n_domains,metric,mean,std,count\n";
  for (const auto& s : stats) {
    const std::string prefix = s.protocol + ',' + s.scenario + ',' +
                               std::to_string(s.n_nodes) + ',' +
                               std::to_string(s.n_domains) + ',';
    out << prefix << "success_rate," << fmt_double(s.success_rate) << ','
        << fmt_double(s.success_std) << ',' << s.count << '\n';
    out << prefix << "hops," << fmt_double(s.hops_mean) << ','
        << fmt_double(s.hops_std) << ',' << s.success_count << '\n';
    out << prefix << "messages," << fmt_double(s.messages_mean) << ','
        << fmt_double(s.messages_std) << ',' << s.count << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed: " + path);
  }
}

std::vector<LookupRecord> parse_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open for reading: " + path);
  }
  std::vector<LookupRecord> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 14) {
      throw std::runtime_error("malformed records row: " + line);
    }
    LookupRecord r;
    r.run_id = cols[0];
    r.protocol = cols[1];
    r.scenario = cols[2];
    r.n_nodes = static_cast<uint32_t>(std::stoul(cols[3]));
    r.n_domains = static_cast<uint16_t>(std::stoul(cols[4]));
    r.lookup_id = std::stoull(cols[5]);
    r.kind = cols[6];
    r.source_domain = static_cast<DomainId>(std::stoul(cols[7]));
    r.target_domain = static_cast<DomainId>(std::stoul(cols[8]));
    r.success = cols[9] == "1";
    r.hops = static_cast<uint32_t>(std::stoul(cols[10]));
    r.messages = static_cast<uint32_t>(std::stoul(cols[11]));
    r.latency_ms = std::stoull(cols[12]);
    r.attempts = static_cast<uint32_t>(std::stoul(cols[13]));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> emit_plot_data(const std::vector<AggregateStats>& stats,
                                        const std::string& dir) {
  std::filesystem::create_directories(dir);
  struct Row {
    uint16_t n_domains;
    std::string protocol;
    double mean, std;
  };
  // (metric, n_nodes) -> rows
  std::map<std::pair<std::string, uint32_t>, std::vector<Row>> files;
  for (const auto& s : stats) {
    files[{"success_rate", s.n_nodes}].push_back(
        {s.n_domains, s.protocol, s.success_rate, s.success_std});
    files[{"hops", s.n_nodes}].push_back(
        {s.n_domains, s.protocol, s.hops_mean, s.hops_std});
    files[{"messages", s.n_nodes}].push_back(
        {s.n_domains, s.protocol, s.messages_mean, s.messages_std});
  }
  std::vector<std::string> written;
  for (auto& [key, rows] : files) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return std::tie(a.n_domains, a.protocol) <
             std::tie(b.n_domains, b.protocol);
    });
    const std::string path = dir + "/plot_" + key.first + "_" +
                             std::to_string(key.second) + ".dat";
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw std::runtime_error("cannot open for writing: " + path);
    }
    out << "# n_domains protocol mean std\n";
    for (const auto& r : rows) {
      out << r.n_domains << ' ' << r.protocol << ' ' << fmt_double(r.mean)
          << ' ' << fmt_double(r.std) << '\n';
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace podsim

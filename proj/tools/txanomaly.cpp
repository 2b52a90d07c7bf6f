// Copyright 2026 The txanomaly Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// txanomaly: classify histories, enumerate history sets, and regenerate the
// anomaly, edge and rollback tables.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "txanomaly/anomaly.hpp"
#include "txanomaly/enumeration.hpp"
#include "txanomaly/history.hpp"
#include "txanomaly/protocols.hpp"
#include "txanomaly/report.hpp"
#include "txanomaly/stats.hpp"

namespace {

using namespace txanomaly;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFound = 1;
constexpr int kExitInput = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_shards() {
  if (const char* env = std::getenv("TXANOMALY_SHARDS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

class Progress {
 public:
  explicit Progress(std::string what) : what_(std::move(what)), start_(clock::now()), last_(start_) {}

  void tick(std::uint64_t done) {
    auto now = clock::now();
    if (now - last_ < std::chrono::seconds(2)) return;
    last_ = now;
    double sec = std::chrono::duration<double>(now - start_).count();
    std::fprintf(stderr, "%s: %llu histories (%.0f/s)\n", what_.c_str(), static_cast<unsigned long long>(done),
                 sec > 0 ? static_cast<double>(done) / sec : 0.0);
  }

  void finish(std::uint64_t done) const {
    double sec = std::chrono::duration<double>(clock::now() - start_).count();
    std::fprintf(stderr, "%s: %llu histories in %.2fs (%.0f/s)\n", what_.c_str(),
                 static_cast<unsigned long long>(done), sec, sec > 0 ? static_cast<double>(done) / sec : 0.0);
  }

 private:
  using clock = std::chrono::steady_clock;
  std::string what_;
  clock::time_point start_, last_;
};

std::vector<std::string> read_histories(const std::string& arg) {
  std::vector<std::string> out;
  std::string path = !arg.empty() && arg.front() == '@' ? arg.substr(1) : arg;
  std::error_code ec;
  if ((!arg.empty() && arg.front() == '@') || std::filesystem::is_regular_file(path, ec)) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read " + path);
    std::string line;
    while (std::getline(in, line)) {
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      out.push_back(line);
    }
    return out;
  }
  out.push_back(arg);
  return out;
}

History parse_or_report(const std::string& text) {
  try {
    return parse_history(text);
  } catch (const HistoryError& e) {
    std::ostringstream msg;
    msg << "error: " << e.what() << "\n  " << text << "\n  " << std::string(std::min(e.position(), text.size()), ' ') << "^";
    throw InputError(msg.str());
  }
}

HistorySpec spec_from(const std::string& text, const std::string& mode) {
  EnumerationMode fallback = EnumerationMode::Interleaved;
  if (mode == "appended") {
    fallback = EnumerationMode::Appended;
  } else if (!mode.empty() && mode != "interleaved") {
    throw InputError("unknown mode '" + mode + "' (interleaved|appended)");
  }
  try {
    HistorySpec s = parse_spec(text, fallback);
    if (!mode.empty()) s.mode = fallback;
    return s;
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
}

json report_json(const AnomalyReport& r) {
  json edges = json::array();
  for (const auto& e : r.cycle.edges) {
    edges.push_back({{"from", e.from_txn},
                     {"to", e.to_txn},
                     {"object", e.object},
                     {"kind", std::string(to_string(e.kind))},
                     {"predicate", std::string(to_string(e.predicate_class))}});
  }
  return {{"name", std::string(to_string(r.name))},
          {"class", std::string(to_string(r.cls))},
          {"definition_class", std::string(to_string(r.definition_class))},
          {"subclass", std::string(to_string(r.subclass))},
          {"predicate_based", r.predicate_based},
          {"close_position", r.earliest_close_position},
          {"cycle", r.signature()},
          {"edges", edges}};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("cannot write " + path);
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  std::filesystem::path stem = p.parent_path() / p.stem();
  return stem.string() + suffix + p.extension().string();
}

struct Common {
  std::string mode;
  int shards = 0;
  std::string out;
  std::string format = "text";
  bool keep_aborted = false;
};

AnalyzeOptions analyze_options(const Common& c) {
  AnalyzeOptions o;
  o.abort_policy = c.keep_aborted ? AbortPolicy::KeepAborted : AbortPolicy::PruneAborted;
  return o;
}

int run_classify(const std::string& input, const Common& c, bool earliest, const std::string& dot) {
  int code = kExitOk;
  for (const auto& text : read_histories(input)) {
    History h = parse_or_report(text);
    std::vector<AnomalyReport> reports = detect_anomalies(h, analyze_options(c));
    if (earliest && reports.size() > 1) reports.resize(1);
    if (!reports.empty()) code = kExitFound;
    if (!dot.empty()) write_file(dot, build_graph(h).to_dot());
    if (c.format == "machine") {
      json rec = {{"history", format_history(h)}, {"serializable", reports.empty()}};
      rec["anomalies"] = json::array();
      for (const auto& r : reports) rec["anomalies"].push_back(report_json(r));
      std::cout << rec.dump() << '\n';
      continue;
    }
    if (reports.empty()) {
      std::cout << "serializable\n";
      continue;
    }
    for (const auto& r : reports) std::cout << r.line() << '\n';
  }
  return code;
}

int run_isolation(const std::string& input, const Common& c, const std::string& level_text) {
  IsolationLevel level;
  if (level_text == "nrw" || level_text == "NRW") {
    level = IsolationLevel::NRW;
  } else if (level_text == "na" || level_text == "NA") {
    level = IsolationLevel::NA;
  } else {
    throw InputError("unknown level '" + level_text + "' (nrw|na)");
  }
  int code = kExitOk;
  for (const auto& text : read_histories(input)) {
    History h = parse_or_report(text);
    IsolationResult r = check_isolation(h, level, analyze_options(c));
    if (!r.admissible) code = kExitFound;
    if (c.format == "machine") {
      json rec = {{"history", format_history(h)}, {"level", std::string(to_string(level))},
                  {"admissible", r.admissible}};
      rec["violations"] = json::array();
      for (const auto& v : r.violations) rec["violations"].push_back(report_json(v));
      std::cout << rec.dump() << '\n';
      continue;
    }
    std::cout << (r.admissible ? "admissible" : "not admissible") << " at " << to_string(level) << '\n';
    for (const auto& v : r.violations) std::cout << "  " << v.line() << '\n';
  }
  return code;
}

int run_enumerate(const std::string& spec_text, const Common& c, bool count_only, std::uint64_t limit) {
  HistorySpec spec = spec_from(spec_text, c.mode);
  if (count_only) {
    std::cout << count(spec) << '\n';
    return kExitOk;
  }
  std::uint64_t emitted = 0;
  HistoryStream stream(spec);
  Schedule s;
  while ((limit == 0 || emitted < limit) && stream.next(s)) {
    std::cout << format_history(to_history(s)) << '\n';
    ++emitted;
  }
  return kExitOk;
}

StatsOptions stats_options(const Common& c, const std::string& selection, Progress* progress) {
  StatsOptions o;
  o.shards = c.shards > 0 ? c.shards : default_shards();
  o.threads = o.shards;
  o.analyze = analyze_options(c);
  if (selection == "earliest") {
    o.selection = SelectionOrder::Earliest;
  } else if (selection != "priority") {
    throw InputError("unknown selection '" + selection + "' (priority|earliest)");
  }
  if (progress) o.progress = [progress](std::uint64_t n) { progress->tick(n); };
  return o;
}

int run_stats(const std::string& spec_text, const Common& c, const std::string& selection, bool edges_only) {
  HistorySpec spec = spec_from(spec_text, c.mode);
  Progress progress(edges_only ? "edges" : "stats");
  StatsOptions opt = stats_options(c, selection, &progress);
  StatsCounts counts = collect_stats(spec, opt);
  progress.finish(counts.histories);
  AnomalyDistribution dist = make_distribution(spec, counts, opt.selection);
  EdgeDistribution edges = make_edge_distribution(spec, counts);
  bool md = c.format == "md";
  std::string dist_text = md ? to_markdown(dist) : to_csv(dist);
  std::string edge_text = md ? to_markdown(edges) : to_csv(edges);
  if (c.out.empty()) {
    std::cout << (edges_only ? edge_text : dist_text);
    return kExitOk;
  }
  if (edges_only) {
    write_file(c.out, edge_text);
  } else {
    write_file(c.out, dist_text);
    write_file(with_suffix(c.out, "_edges"), edge_text);
  }
  std::cout << "H(" << to_string(spec) << "): " << counts.histories << " histories, " << counts.cyclic
            << " cyclic (" << format_percent(counts.cyclic, counts.histories) << "%)\n";
  if (!edges_only && !dist.anomalies.empty() && dist.cyclic > 0) {
    const auto& top = dist.anomalies.front();
    std::cout << "top anomaly: " << top.name << " " << top.percent_text() << "%\n";
  }
  return kExitOk;
}

int run_rollback(const std::vector<std::string>& specs, const Common& c, const std::string& protocols,
                 bool detail) {
  std::vector<ProtocolId> ps;
  try {
    ps = parse_protocols(protocols);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::vector<RollbackRow> rows;
  std::string details;
  for (const auto& text : specs) {
    HistorySpec spec = spec_from(text, c.mode);
    Progress progress("rollback " + to_string(spec));
    RollbackOptions opt;
    opt.shards = c.shards > 0 ? c.shards : default_shards();
    opt.threads = opt.shards;
    opt.analyze = analyze_options(c);
    opt.progress = [&progress](std::uint64_t n) { progress.tick(n); };
    rows.push_back(rollback_row(spec, ps, opt));
    progress.finish(rows.back().stats.front().N);
    if (detail) details += rollback_detail_csv(rows.back());
  }
  std::string table = c.format == "md" ? rollback_table_markdown(rows) : rollback_table_csv(rows);
  if (detail) table += details;
  if (c.out.empty()) {
    std::cout << table;
  } else {
    write_file(c.out, table);
  }
  return kExitOk;
}

DegreeWeights parse_weights(const std::string& text) {
  DegreeWeights w = kDefaultDegreeWeights;
  if (text.empty()) return w;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw InputError("weight '" + item + "' must look like KIND=N");
    std::string key = item.substr(0, eq);
    std::size_t k = 0;
    for (; k < kDegreeKinds; ++k) {
      if (to_string(static_cast<DegreeKind>(k)) == key) break;
    }
    if (k == kDegreeKinds) throw InputError("unknown edge kind '" + key + "' (RR,WCR,WCW,RCW,WW,WR,RW)");
    try {
      int v = std::stoi(item.substr(eq + 1));
      if (v < 0) throw std::invalid_argument("negative");
      w[k] = static_cast<std::uint32_t>(v);
    } catch (const std::exception&) {
      throw InputError("weight '" + item + "' is not a nonnegative integer");
    }
  }
  return w;
}

int run_degree(const std::string& protocols, const std::string& weights, const Common& c) {
  std::vector<ProtocolId> ps;
  try {
    ps = protocols == "all" ? std::vector<ProtocolId>(kAllProtocols.begin(), kAllProtocols.end())
                            : parse_protocols(protocols);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  DegreeWeights w = parse_weights(weights);
  if (c.format == "csv") std::cout << "protocol,degree,value\n";
  for (auto p : ps) {
    Rational r = concurrency_degree(p, w);
    char value[32];
    std::snprintf(value, sizeof value, "%.4f", r.value());
    if (c.format == "csv") {
      std::cout << to_string(p) << ',' << r.str() << ',' << value << '\n';
    } else {
      std::cout << to_string(p) << ' ' << r.str() << " (" << value << ")\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transaction history anomaly analysis"};
  app.require_subcommand(1, 1);
  Common common;

  auto add_format = [&](CLI::App* sub, std::vector<std::string> allowed) {
    sub->add_option("--format", common.format, "Output format")->check(CLI::IsMember(allowed));
  };
  auto add_enum_flags = [&](CLI::App* sub) {
    sub->add_option("--mode", common.mode, "Terminal placement")->check(CLI::IsMember({"interleaved", "appended"}));
    sub->add_option("--shards", common.shards, "Parallel shards (default: TXANOMALY_SHARDS or cores)")
        ->check(CLI::Range(1, 1024));
    sub->add_option("--out", common.out, "Output path");
  };

  std::string history;
  bool all = false, earliest = false;
  std::string dot;
  auto* classify = app.add_subcommand("classify", "Report the anomalies of a history");
  classify->add_option("history", history, "History text, a file, or @file")->required();
  add_format(classify, {"text", "machine"});
  classify->add_flag("--all", all, "Report every anomaly (default)");
  classify->add_flag("--earliest", earliest, "Report only the first anomaly to close");
  classify->add_flag("--keep-aborted", common.keep_aborted, "Keep cycles through aborted transactions");
  classify->add_option("--dot", dot, "Write the conflict graph in DOT format");

  std::string level = "na";
  auto* isolation = app.add_subcommand("isolation", "Check a history against an isolation level");
  isolation->add_option("history", history, "History text, a file, or @file")->required();
  isolation->add_option("--level", level, "nrw or na");
  add_format(isolation, {"text", "machine"});

  std::string spec_text;
  bool count_only = false;
  std::uint64_t limit = 0;
  auto* enumerate_cmd = app.add_subcommand("enumerate", "List the histories of H(m,n,k)");
  enumerate_cmd->add_option("spec", spec_text, "m,n,k[,mode]")->required();
  add_enum_flags(enumerate_cmd);
  enumerate_cmd->add_flag("--count", count_only, "Print only the number of histories");
  enumerate_cmd->add_option("--limit", limit, "Stop after this many histories");

  std::string selection = "priority";
  auto* stats = app.add_subcommand("stats", "Anomaly distribution over H(m,n,k)");
  stats->add_option("spec", spec_text, "m,n,k[,mode]")->required();
  add_enum_flags(stats);
  add_format(stats, {"text", "csv", "md"});
  stats->add_option("--selection", selection, "priority or earliest");
  stats->add_flag("--keep-aborted", common.keep_aborted, "Keep cycles through aborted transactions");

  auto* edges = app.add_subcommand("edges", "Edge distribution over H(m,n,k)");
  edges->add_option("spec", spec_text, "m,n,k[,mode]")->required();
  add_enum_flags(edges);
  add_format(edges, {"text", "csv", "md"});
  edges->add_flag("--keep-aborted", common.keep_aborted, "Keep cycles through aborted transactions");

  std::vector<std::string> specs;
  std::string protocols = "all";
  bool detail = false;
  auto* rollback = app.add_subcommand("rollback", "True and false rollback rates per protocol");
  rollback->add_option("spec", specs, "m,n,k[,mode] (one row each)")->required();
  add_enum_flags(rollback);
  add_format(rollback, {"text", "csv", "md"});
  rollback->add_option("--protocols", protocols, "Comma-separated list or all");
  rollback->add_flag("--detail", detail, "Append per-protocol counters");

  std::string weights;
  auto* degree = app.add_subcommand("degree", "Concurrency degree of each protocol");
  degree->add_option("--protocols", protocols, "Comma-separated list or all");
  degree->add_option("--weights", weights, "Per-kind weights, e.g. RR=1,WW=2");
  add_format(degree, {"text", "csv"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*classify) return run_classify(history, common, earliest && !all, dot);
    if (*isolation) return run_isolation(history, common, level);
    if (*enumerate_cmd) return run_enumerate(spec_text, common, count_only, limit);
    if (*stats) return run_stats(spec_text, common, selection, false);
    if (*edges) return run_stats(spec_text, common, "priority", true);
    if (*rollback) return run_rollback(specs, common, protocols, detail);
    if (*degree) return run_degree(protocols, weights, common);
  } catch (const InputError& e) {
    std::cerr << e.what() << '\n';
    return kExitInput;
  } catch (const CycleCapExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

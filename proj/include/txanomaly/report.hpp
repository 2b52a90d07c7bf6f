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

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "txanomaly/anomaly.hpp"
#include "txanomaly/enumeration.hpp"
#include "txanomaly/protocols.hpp"
#include "txanomaly/stats.hpp"

namespace txanomaly {

// count/total as a percentage with two decimals, rounded half up on the
// exact integer ratio.
inline std::string format_percent(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return "0.00";
  unsigned __int128 scaled = static_cast<unsigned __int128>(count) * 20000 / total;
  auto hundredths = static_cast<std::uint64_t>((scaled + 1) / 2);
  std::string frac = std::to_string(hundredths % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return std::to_string(hundredths / 100) + "." + frac;
}

inline double percent(std::uint64_t count, std::uint64_t total) {
  return total ? 100.0 * static_cast<double>(count) / static_cast<double>(total) : 0.0;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string_view to_string(SelectionOrder o) {
  return o == SelectionOrder::Priority ? "priority" : "earliest";
}

struct DistributionRow {
  std::string name;
  std::string cls;
  std::string subclass;
  std::uint64_t count = 0;
  std::uint64_t total = 0;

  std::string percent_text() const { return format_percent(count, total); }
};

struct AnomalyDistribution {
  HistorySpec spec;
  SelectionOrder selection = SelectionOrder::Priority;
  std::uint64_t histories = 0;
  std::uint64_t cyclic = 0;
  std::vector<DistributionRow> anomalies;  // by count, then table order
  std::array<std::uint64_t, 3> class_totals{};
  std::array<std::uint64_t, 3> subclass_totals{};
  std::array<std::array<std::uint64_t, 3>, 3> matrix{};  // [class][subclass]
};

inline constexpr std::array<AnomalyClass, 3> kClasses = {AnomalyClass::RAT, AnomalyClass::WAT,
                                                         AnomalyClass::IAT};
inline constexpr std::array<AnomalySubclass, 3> kSubclasses = {AnomalySubclass::SDA, AnomalySubclass::DDA,
                                                               AnomalySubclass::MDA};

inline AnomalyDistribution make_distribution(const HistorySpec& spec, const StatsCounts& c,
                                             SelectionOrder selection) {
  AnomalyDistribution d;
  d.spec = spec;
  d.selection = selection;
  d.histories = c.histories;
  d.cyclic = c.cyclic;
  d.matrix = c.matrix;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      d.class_totals[i] += c.matrix[i][j];
      d.subclass_totals[j] += c.matrix[i][j];
    }
  }
  std::vector<std::pair<std::size_t, DistributionRow>> rows;
  for (std::size_t slot = 0; slot < kLabelSlots; ++slot) {
    DistributionRow r;
    r.count = c.by_label[slot];
    r.total = c.cyclic;
    if (slot < kNamedAnomalyCount) {
      const auto& info = kAnomalyTable[slot];
      r.name = std::string(info.text);
      r.cls = std::string(to_string(info.cls));
      r.subclass = std::string(to_string(info.subclass));
    } else {
      if (r.count == 0) continue;
      r.name = "Unclassified";
      r.cls = std::string(to_string(kClasses[slot - kNamedAnomalyCount]));
      r.subclass = "-";
    }
    rows.emplace_back(slot, std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second.count > b.second.count; });
  for (auto& [slot, r] : rows) d.anomalies.push_back(std::move(r));
  return d;
}

inline AnomalyDistribution anomaly_distribution(const HistorySpec& spec, const StatsOptions& opt = {}) {
  return make_distribution(spec, collect_stats(spec, opt), opt.selection);
}

// Anomaly rows, then class and subclass marginals, then the class x subclass
// matrix (name "RAT/SDA").
inline std::string to_csv(const AnomalyDistribution& d) {
  std::ostringstream out;
  out << "name,class,subclass,count,percent\n";
  auto row = [&](std::string_view name, std::string_view cls, std::string_view sub, std::uint64_t n) {
    out << csv_field(name) << ',' << csv_field(cls) << ',' << csv_field(sub) << ',' << n << ','
        << format_percent(n, d.cyclic) << '\n';
  };
  for (const auto& r : d.anomalies) row(r.name, r.cls, r.subclass, r.count);
  for (std::size_t i = 0; i < 3; ++i) row(to_string(kClasses[i]), to_string(kClasses[i]), "*", d.class_totals[i]);
  for (std::size_t j = 0; j < 3; ++j) {
    row(to_string(kSubclasses[j]), "*", to_string(kSubclasses[j]), d.subclass_totals[j]);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      std::string name = std::string(to_string(kClasses[i])) + "/" + std::string(to_string(kSubclasses[j]));
      row(name, to_string(kClasses[i]), to_string(kSubclasses[j]), d.matrix[i][j]);
    }
  }
  return out.str();
}

inline std::string to_markdown(const AnomalyDistribution& d) {
  std::ostringstream out;
  out << "H(" << to_string(d.spec) << "): " << d.histories << " histories, " << d.cyclic << " cyclic ("
      << format_percent(d.cyclic, d.histories) << "%), selection " << to_string(d.selection) << "\n\n";
  out << "| name | class | subclass | count | percent |\n|---|---|---|---:|---:|\n";
  for (const auto& r : d.anomalies) {
    out << "| " << r.name << " | " << r.cls << " | " << r.subclass << " | " << r.count << " | "
        << r.percent_text() << " |\n";
  }
  out << "\n| class | SDA | DDA | MDA | total |\n|---|---:|---:|---:|---:|\n";
  for (std::size_t i = 0; i < 3; ++i) {
    out << "| " << to_string(kClasses[i]);
    for (std::size_t j = 0; j < 3; ++j) out << " | " << format_percent(d.matrix[i][j], d.cyclic);
    out << " | " << format_percent(d.class_totals[i], d.cyclic) << " |\n";
  }
  out << "| total";
  for (std::size_t j = 0; j < 3; ++j) out << " | " << format_percent(d.subclass_totals[j], d.cyclic);
  out << " | " << format_percent(d.cyclic, d.cyclic) << " |\n";
  return out.str();
}

// Edge labels in report order; WA, RA and WC are the aborted/committed
// markers WWA, WRA and WWC.
struct EdgeLabel {
  std::string_view name;
  PopKind kind;
};

inline constexpr std::array<EdgeLabel, kPopKindCount> kEdgeLabels = {{
    {"RW", PopKind::RW},
    {"WR", PopKind::WR},
    {"WW", PopKind::WW},
    {"WA", PopKind::WWA},
    {"RA", PopKind::WRA},
    {"WC", PopKind::WWC},
    {"WCR", PopKind::WCR},
    {"WCW", PopKind::WCW},
    {"RCW", PopKind::RCW},
}};

enum class EdgeScope : std::uint8_t { History, Cyclic, Cycle };
inline constexpr std::array<EdgeScope, 3> kEdgeScopes = {EdgeScope::History, EdgeScope::Cyclic, EdgeScope::Cycle};

inline std::string_view to_string(EdgeScope s) {
  switch (s) {
    case EdgeScope::History: return "history";
    case EdgeScope::Cyclic: return "cyclic";
    case EdgeScope::Cycle: return "cycle";
  }
  return "?";
}

struct EdgeDistribution {
  HistorySpec spec;
  // counts[scope][label index in kEdgeLabels]
  std::array<std::array<std::uint64_t, kPopKindCount>, 3> counts{};

  std::uint64_t count(EdgeScope s, PopKind k, bool folded = false) const {
    const auto& row = counts[static_cast<std::size_t>(s)];
    auto at = [&](PopKind x) {
      for (std::size_t i = 0; i < kEdgeLabels.size(); ++i) {
        if (kEdgeLabels[i].kind == x) return row[i];
      }
      return std::uint64_t{0};
    };
    if (!folded) return at(k);
    if (k == PopKind::RCW) return 0;
    return k == PopKind::RW ? at(PopKind::RW) + at(PopKind::RCW) : at(k);
  }

  std::uint64_t total(EdgeScope s) const {
    std::uint64_t t = 0;
    for (auto v : counts[static_cast<std::size_t>(s)]) t += v;
    return t;
  }
};

inline EdgeDistribution make_edge_distribution(const HistorySpec& spec, const StatsCounts& c) {
  EdgeDistribution d;
  d.spec = spec;
  for (std::size_t i = 0; i < kEdgeLabels.size(); ++i) {
    auto k = static_cast<std::size_t>(kEdgeLabels[i].kind);
    d.counts[0][i] = c.edges_history[k];
    d.counts[1][i] = c.edges_cyclic[k];
    d.counts[2][i] = c.edges_cycle[k];
  }
  return d;
}

inline EdgeDistribution edge_distribution(const HistorySpec& spec, const StatsOptions& opt = {}) {
  return make_edge_distribution(spec, collect_stats(spec, opt));
}

// Scopes: history (edges of all histories), cyclic (edges of cyclic
// histories), cycle (edges on the selected anomaly cycle); "_folded" scopes
// count RCW as RW.
inline std::string to_csv(const EdgeDistribution& d) {
  std::ostringstream out;
  out << "edge,scope,count,percent\n";
  for (bool folded : {false, true}) {
    for (EdgeScope s : kEdgeScopes) {
      std::string scope = std::string(to_string(s)) + (folded ? "_folded" : "");
      for (const auto& l : kEdgeLabels) {
        if (folded && l.kind == PopKind::RCW) continue;
        std::uint64_t n = d.count(s, l.kind, folded);
        out << l.name << ',' << scope << ',' << n << ',' << format_percent(n, d.total(s)) << '\n';
      }
    }
  }
  return out.str();
}

inline std::string to_markdown(const EdgeDistribution& d) {
  std::ostringstream out;
  out << "| scope |";
  for (const auto& l : kEdgeLabels) out << ' ' << l.name << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < kEdgeLabels.size(); ++i) out << "---:|";
  out << '\n';
  for (EdgeScope s : kEdgeScopes) {
    out << "| " << to_string(s) << " |";
    for (const auto& l : kEdgeLabels) out << ' ' << format_percent(d.count(s, l.kind), d.total(s)) << " |";
    out << '\n';
  }
  return out.str();
}

struct RollbackRow {
  HistorySpec spec;
  std::vector<ProtocolId> protocols;
  std::vector<RollbackStats> stats;
};

inline RollbackRow rollback_row(const HistorySpec& spec, const std::vector<ProtocolId>& ps,
                                const RollbackOptions& opt = {}) {
  RollbackRun run = run_rollback(spec, ps, opt);
  return RollbackRow{spec, ps, run.stats};
}

inline std::string rollback_header(const std::vector<ProtocolId>& ps) {
  std::string h = "spec,TRR";
  for (auto p : ps) h += "," + std::string(short_name(p)) + "_FRR";
  return h;
}

inline std::string rollback_table_csv(const std::vector<RollbackRow>& rows) {
  std::ostringstream out;
  if (rows.empty()) return "";
  out << rollback_header(rows.front().protocols) << '\n';
  for (const auto& r : rows) {
    const RollbackStats& any = r.stats.front();
    out << csv_field(to_string(r.spec)) << ',' << format_percent(any.N_true, any.N);
    for (const auto& s : r.stats) out << ',' << format_percent(s.N_false, s.N);
    out << '\n';
  }
  return out.str();
}

inline std::string rollback_table_markdown(const std::vector<RollbackRow>& rows) {
  std::ostringstream out;
  if (rows.empty()) return "";
  out << "| spec | TRR |";
  for (auto p : rows.front().protocols) out << ' ' << short_name(p) << " FRR |";
  out << "\n|---|---:|";
  for (std::size_t i = 0; i < rows.front().protocols.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& r : rows) {
    const RollbackStats& any = r.stats.front();
    out << "| H(" << to_string(r.spec) << ") | " << format_percent(any.N_true, any.N) << " |";
    for (const auto& s : r.stats) out << ' ' << format_percent(s.N_false, s.N) << " |";
    out << '\n';
  }
  return out.str();
}

// Per-protocol counters behind one rollback row.
inline std::string rollback_detail_csv(const RollbackRow& r) {
  std::ostringstream out;
  out << "protocol,N,N_true,N_alg,N_false,TRR,R_alg,FRR,missed,audit_violations,txn_TRR,txn_R_alg\n";
  for (std::size_t i = 0; i < r.protocols.size(); ++i) {
    const auto& s = r.stats[i];
    out << to_string(r.protocols[i]) << ',' << s.N << ',' << s.N_true << ',' << s.N_alg << ',' << s.N_false
        << ',' << format_percent(s.N_true, s.N) << ',' << format_percent(s.N_alg, s.N) << ','
        << format_percent(s.N_false, s.N) << ',' << s.missed << ',' << s.audit_violations << ','
        << format_percent(s.txns_in_cycles, s.txns) << ',' << format_percent(s.txns_forced, s.txns) << '\n';
  }
  return out.str();
}

}  // namespace txanomaly

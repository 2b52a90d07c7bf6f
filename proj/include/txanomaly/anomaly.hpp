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
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "txanomaly/conflict.hpp"
#include "txanomaly/history.hpp"

namespace txanomaly {

enum class AnomalyClass : std::uint8_t { RAT, WAT, IAT };
enum class AnomalySubclass : std::uint8_t { SDA, DDA, MDA };

inline std::string_view to_string(AnomalyClass c) {
  switch (c) {
    case AnomalyClass::RAT: return "RAT";
    case AnomalyClass::WAT: return "WAT";
    case AnomalyClass::IAT: break;
  }
  return "IAT";
}

inline std::string_view to_string(AnomalySubclass s) {
  switch (s) {
    case AnomalySubclass::SDA: return "SDA";
    case AnomalySubclass::DDA: return "DDA";
    case AnomalySubclass::MDA: break;
  }
  return "MDA";
}

enum class AnomalyName : std::uint8_t {
  DirtyRead,
  NonRepeatableRead,
  IntermediateRead,
  WriteReadSkewCommitted,
  DoubleWriteSkew1Committed,
  WriteReadSkew,
  ReadSkew,
  ReadSkew2,
  StepRAT,
  DirtyWrite,
  LostSelfUpdateCommitted,
  FullWriteCommitted,
  FullWrite,
  LostUpdate,
  LostSelfUpdate,
  DoubleWriteSkew2Committed,
  FullWriteSkewCommitted,
  FullWriteSkew,
  DoubleWriteSkew1,
  DoubleWriteSkew2,
  ReadWriteSkew1,
  ReadWriteSkew2,
  NonRepeatableReadCommitted,
  LostUpdateCommitted,
  ReadSkewCommitted,
  ReadWriteSkew1Committed,
  WriteSkew,
  StepWAT,
  StepIAT,
  Unclassified,
};

inline constexpr std::size_t kNamedAnomalyCount = 29;

struct AnomalyNameInfo {
  AnomalyName name;
  std::string_view text;
  AnomalyClass cls;
  AnomalySubclass subclass;
};

// Rows in table order: RAT rows, then WAT rows, then IAT rows. Index in this
// array is the tie-break rank used when one label must be picked.
inline constexpr std::array<AnomalyNameInfo, kNamedAnomalyCount> kAnomalyTable = {{
    {AnomalyName::DirtyRead, "Dirty Read", AnomalyClass::RAT, AnomalySubclass::SDA},
    {AnomalyName::NonRepeatableRead, "Non-repeatable Read", AnomalyClass::RAT, AnomalySubclass::SDA},
    {AnomalyName::IntermediateRead, "Intermediate Read", AnomalyClass::RAT, AnomalySubclass::SDA},
    {AnomalyName::WriteReadSkewCommitted, "Write-Read Skew Committed", AnomalyClass::RAT,
     AnomalySubclass::DDA},
    {AnomalyName::DoubleWriteSkew1Committed, "Double-Write Skew 1 Committed", AnomalyClass::RAT,
     AnomalySubclass::DDA},
    {AnomalyName::WriteReadSkew, "Write-Read Skew", AnomalyClass::RAT, AnomalySubclass::DDA},
    {AnomalyName::ReadSkew, "Read Skew", AnomalyClass::RAT, AnomalySubclass::DDA},
    {AnomalyName::ReadSkew2, "Read Skew 2", AnomalyClass::RAT, AnomalySubclass::DDA},
    {AnomalyName::StepRAT, "Step RAT", AnomalyClass::RAT, AnomalySubclass::MDA},
    {AnomalyName::DirtyWrite, "Dirty Write", AnomalyClass::WAT, AnomalySubclass::SDA},
    {AnomalyName::LostSelfUpdateCommitted, "Lost Self Update Committed", AnomalyClass::WAT,
     AnomalySubclass::SDA},
    {AnomalyName::FullWriteCommitted, "Full-Write Committed", AnomalyClass::WAT,
     AnomalySubclass::SDA},
    {AnomalyName::FullWrite, "Full-Write", AnomalyClass::WAT, AnomalySubclass::SDA},
    {AnomalyName::LostUpdate, "Lost Update", AnomalyClass::WAT, AnomalySubclass::SDA},
    {AnomalyName::LostSelfUpdate, "Lost Self Update", AnomalyClass::WAT, AnomalySubclass::SDA},
    {AnomalyName::DoubleWriteSkew2Committed, "Double-Write Skew 2 Committed", AnomalyClass::WAT,
     AnomalySubclass::DDA},
    {AnomalyName::FullWriteSkewCommitted, "Full-Write Skew Committed", AnomalyClass::WAT,
     AnomalySubclass::DDA},
    {AnomalyName::FullWriteSkew, "Full-Write Skew", AnomalyClass::WAT, AnomalySubclass::DDA},
    {AnomalyName::DoubleWriteSkew1, "Double-Write Skew 1", AnomalyClass::WAT, AnomalySubclass::DDA},
    {AnomalyName::DoubleWriteSkew2, "Double-Write Skew 2", AnomalyClass::WAT, AnomalySubclass::DDA},
    {AnomalyName::ReadWriteSkew1, "Read-Write Skew 1", AnomalyClass::WAT, AnomalySubclass::DDA},
    {AnomalyName::ReadWriteSkew2, "Read-Write Skew 2", AnomalyClass::WAT, AnomalySubclass::DDA},
    {AnomalyName::StepWAT, "Step WAT", AnomalyClass::WAT, AnomalySubclass::MDA},
    {AnomalyName::NonRepeatableReadCommitted, "Non-repeatable Read Committed", AnomalyClass::IAT,
     AnomalySubclass::SDA},
    {AnomalyName::LostUpdateCommitted, "Lost Update Committed", AnomalyClass::IAT,
     AnomalySubclass::SDA},
    {AnomalyName::ReadSkewCommitted, "Read Skew Committed", AnomalyClass::IAT, AnomalySubclass::DDA},
    {AnomalyName::ReadWriteSkew1Committed, "Read-Write Skew 1 Committed", AnomalyClass::IAT,
     AnomalySubclass::DDA},
    {AnomalyName::WriteSkew, "Write Skew", AnomalyClass::IAT, AnomalySubclass::DDA},
    {AnomalyName::StepIAT, "Step IAT", AnomalyClass::IAT, AnomalySubclass::MDA},
}};

inline const AnomalyNameInfo* name_info(AnomalyName n) {
  for (const auto& row : kAnomalyTable) {
    if (row.name == n) return &row;
  }
  return nullptr;
}

inline std::size_t table_rank(AnomalyName n) {
  for (std::size_t i = 0; i < kAnomalyTable.size(); ++i) {
    if (kAnomalyTable[i].name == n) return i;
  }
  return kAnomalyTable.size();
}

inline std::string_view to_string(AnomalyName n) {
  const auto* info = name_info(n);
  return info ? info->text : std::string_view("Unclassified");
}

inline std::optional<AnomalyName> parse_anomaly_name(std::string_view s) {
  for (const auto& row : kAnomalyTable) {
    if (row.text == s) return row.name;
  }
  if (s == "Unclassified") return AnomalyName::Unclassified;
  return std::nullopt;
}

// Name of a two-edge cycle from its earlier-formed and later-formed edge
// kinds. Both arguments must already be folded with uncommitted_base.
inline std::optional<AnomalyName> two_edge_name(bool one_object, PopKind first, PopKind second) {
  using K = PopKind;
  using N = AnomalyName;
  struct Row {
    K first;
    K second;
    N single;
    N dual;
  };
  static constexpr std::array<Row, 18> rows = {{
      {K::RW, K::WR, N::NonRepeatableRead, N::ReadSkew},
      {K::RW, K::WCR, N::NonRepeatableReadCommitted, N::ReadSkewCommitted},
      {K::RW, K::WW, N::LostUpdate, N::ReadWriteSkew1},
      {K::RW, K::RW, N::LostUpdate, N::WriteSkew},
      {K::RW, K::WCW, N::LostUpdateCommitted, N::ReadWriteSkew1Committed},
      {K::RW, K::RCW, N::LostUpdateCommitted, N::WriteSkew},
      {K::WR, K::RW, N::IntermediateRead, N::ReadSkew2},
      {K::WR, K::RCW, N::IntermediateRead, N::ReadSkew2},
      {K::WR, K::WW, N::FullWrite, N::DoubleWriteSkew1},
      {K::WR, K::WR, N::LostSelfUpdate, N::WriteReadSkew},
      {K::WR, K::WCR, N::LostSelfUpdateCommitted, N::WriteReadSkewCommitted},
      {K::WR, K::WCW, N::FullWriteCommitted, N::DoubleWriteSkew1Committed},
      {K::WW, K::WW, N::FullWrite, N::FullWriteSkew},
      {K::WW, K::RW, N::FullWrite, N::ReadWriteSkew2},
      {K::WW, K::WR, N::LostSelfUpdate, N::DoubleWriteSkew2},
      {K::WW, K::WCR, N::LostSelfUpdateCommitted, N::DoubleWriteSkew2Committed},
      {K::WW, K::WCW, N::FullWriteCommitted, N::FullWriteSkewCommitted},
      {K::WW, K::RCW, N::FullWriteCommitted, N::ReadWriteSkew2},
  }};
  for (const auto& r : rows) {
    if (r.first == first && r.second == second) return one_object ? r.single : r.dual;
  }
  return std::nullopt;
}

enum class AbortPolicy : std::uint8_t {
  // Cycles made only of non-self-anomalous edges are dropped when a
  // participant aborts.
  PruneAborted,
  KeepAborted,
};

struct AnalyzeOptions {
  std::size_t cycle_cap = 10000;
  AbortPolicy abort_policy = AbortPolicy::PruneAborted;
};

namespace kernel {

using Arc = std::pair<std::uint16_t, std::uint16_t>;

// Visits every simple cycle of length >= 2 once, rooted at its smallest
// vertex. visit receives arc indices in path order and returns false to stop.
template <class Visit>
bool simple_cycles(std::size_t n, const std::vector<Arc>& arcs, Visit&& visit) {
  std::vector<std::vector<std::uint32_t>> out(n);
  for (std::uint32_t i = 0; i < arcs.size(); ++i) out[arcs[i].first].push_back(i);
  std::vector<char> on_path(n, 0);
  std::vector<std::uint32_t> path;
  bool keep_going = true;
  std::uint16_t root = 0;
  auto dfs = [&](auto& self, std::uint16_t v) -> void {
    for (std::uint32_t a : out[v]) {
      if (!keep_going) return;
      std::uint16_t w = arcs[a].second;
      if (w == root) {
        path.push_back(a);
        keep_going = visit(static_cast<const std::vector<std::uint32_t>&>(path));
        path.pop_back();
      } else if (w > root && !on_path[w]) {
        on_path[w] = 1;
        path.push_back(a);
        self(self, w);
        path.pop_back();
        on_path[w] = 0;
      }
    }
  };
  for (std::size_t s = 0; s < n && keep_going; ++s) {
    root = static_cast<std::uint16_t>(s);
    on_path[s] = 1;
    dfs(dfs, root);
    on_path[s] = 0;
  }
  return keep_going;
}

// Starts the cycle at the edge whose target operation comes first.
inline void rotate_canonical(std::vector<Edge>& cyc) {
  if (cyc.size() < 2) return;
  auto first = std::min_element(cyc.begin(), cyc.end(),
                                [](const Edge& a, const Edge& b) { return a.q < b.q; });
  std::rotate(cyc.begin(), first, cyc.end());
}

inline std::size_t close_position(const Trace& t, const std::vector<Edge>& cyc) {
  if (cyc.size() == 1) return t.terms[cyc[0].src].position;
  std::size_t pos = 0;
  for (const auto& e : cyc) pos = std::max<std::size_t>(pos, t.ops[e.q].pos);
  return pos;
}

// Shortest cycle over the all-pairs conflicts among the cycle's own
// operations. Ties prefer edges of the input cycle, then the earliest close,
// then the earliest operations.
inline std::vector<Edge> reduce(const Trace& t, std::vector<Edge> cyc,
                                std::size_t search_cap = 200000) {
  if (cyc.size() <= 2) {
    rotate_canonical(cyc);
    return cyc;
  }
  std::vector<std::uint16_t> anchors;
  for (const auto& e : cyc) {
    anchors.push_back(e.p);
    anchors.push_back(e.q);
  }
  std::sort(anchors.begin(), anchors.end());
  anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());

  std::vector<Edge> derived;
  std::vector<char> original;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      auto e = make_edge(t, anchors[i], anchors[j]);
      if (!e) continue;
      bool in_input = std::any_of(cyc.begin(), cyc.end(), [&](const Edge& c) {
        return c.p == e->p && c.q == e->q;
      });
      derived.push_back(*e);
      original.push_back(in_input ? 1 : 0);
    }
  }
  std::vector<Arc> arcs;
  arcs.reserve(derived.size());
  for (const auto& e : derived) arcs.emplace_back(e.src, e.dst);

  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::vector<std::uint32_t>>;
  std::optional<Key> best_key;
  std::vector<std::uint32_t> best;
  std::size_t seen = 0;
  simple_cycles(txn_count(t), arcs, [&](const std::vector<std::uint32_t>& path) {
    if (best_key && path.size() > std::get<0>(*best_key)) return ++seen < search_cap;
    std::size_t foreign = 0;
    std::size_t close = 0;
    std::vector<std::uint32_t> ops;
    for (auto a : path) {
      foreign += original[a] ? 0 : 1;
      close = std::max<std::size_t>(close, t.ops[derived[a].q].pos);
      ops.push_back(derived[a].p);
      ops.push_back(derived[a].q);
    }
    std::sort(ops.begin(), ops.end());
    Key key{path.size(), foreign, close, std::move(ops)};
    if (!best_key || key < *best_key) {
      best_key = std::move(key);
      best = path;
    }
    return ++seen < search_cap;
  });
  std::vector<Edge> out;
  if (!best_key || best.size() >= cyc.size()) {
    out = std::move(cyc);
  } else {
    for (auto a : best) out.push_back(derived[a]);
  }
  // A loop that stays longer than the canonical bounds still contains an
  // edge that closes on its own; that edge is the reduced cycle.
  std::set<std::uint16_t> objs;
  std::set<std::uint16_t> txns;
  for (const auto& e : out) {
    objs.insert(e.obj);
    txns.insert(e.src);
    txns.insert(e.dst);
  }
  if ((objs.size() == 1 && txns.size() > 2) || out.size() > 2 * objs.size()) {
    auto self = std::find_if(out.begin(), out.end(), [](const Edge& e) { return is_self_anomalous(e.kind); });
    if (self != out.end()) return {*self};
  }
  rotate_canonical(out);
  return out;
}

struct Anomaly {
  std::vector<Edge> edges;  // reduced, canonical rotation
  AnomalyName name = AnomalyName::Unclassified;
  AnomalyClass cls = AnomalyClass::IAT;
  AnomalyClass definition_class = AnomalyClass::IAT;
  AnomalySubclass subclass = AnomalySubclass::MDA;
  bool predicate_based = false;
  std::size_t close = 0;
};

inline AnomalyClass definition_class(const std::vector<Edge>& cyc) {
  bool wr = false;
  bool ww = false;
  for (const auto& e : cyc) {
    wr = wr || e.kind == PopKind::WR || e.kind == PopKind::WRA;
    ww = ww || e.kind == PopKind::WW || e.kind == PopKind::WWC || e.kind == PopKind::WWA;
  }
  if (wr) return AnomalyClass::RAT;
  return ww ? AnomalyClass::WAT : AnomalyClass::IAT;
}

inline Anomaly classify(const Trace& t, const std::vector<Edge>& cyc) {
  Anomaly a;
  a.edges = cyc;
  std::vector<std::uint16_t> objs;
  std::vector<std::uint16_t> txns;
  for (const auto& e : cyc) {
    objs.push_back(e.obj);
    txns.push_back(e.src);
    txns.push_back(e.dst);
    a.predicate_based = a.predicate_based || e.pc == PredicateClass::Predicate;
  }
  std::sort(objs.begin(), objs.end());
  objs.erase(std::unique(objs.begin(), objs.end()), objs.end());
  std::sort(txns.begin(), txns.end());
  txns.erase(std::unique(txns.begin(), txns.end()), txns.end());
  if (txns.size() == 2 && objs.size() == 1) {
    a.subclass = AnomalySubclass::SDA;
  } else if (txns.size() == 2 && objs.size() == 2) {
    a.subclass = AnomalySubclass::DDA;
  } else {
    a.subclass = AnomalySubclass::MDA;
  }
  a.definition_class = definition_class(cyc);
  a.close = close_position(t, cyc);
  std::optional<AnomalyName> name;
  if (cyc.size() == 1) {
    if (cyc[0].kind == PopKind::WRA) name = AnomalyName::DirtyRead;
    if (cyc[0].kind == PopKind::WWC || cyc[0].kind == PopKind::WWA) name = AnomalyName::DirtyWrite;
  } else if (cyc.size() == 2) {
    if (!is_committed_kind(cyc[0].kind)) {
      name = two_edge_name(objs.size() == 1, uncommitted_base(cyc[0].kind),
                           uncommitted_base(cyc[1].kind));
    }
  } else {
    switch (a.definition_class) {
      case AnomalyClass::RAT: name = AnomalyName::StepRAT; break;
      case AnomalyClass::WAT: name = AnomalyName::StepWAT; break;
      case AnomalyClass::IAT: name = AnomalyName::StepIAT; break;
    }
  }
  a.name = name.value_or(AnomalyName::Unclassified);
  const auto* info = name_info(a.name);
  a.cls = info ? info->cls : a.definition_class;
  return a;
}

struct Analysis {
  std::vector<Anomaly> anomalies;  // deduplicated, ordered by close position
  bool overflow = false;
};

inline bool pruned(const Trace& t, const std::vector<Edge>& cyc, AbortPolicy policy) {
  if (policy == AbortPolicy::KeepAborted) return false;
  for (const auto& e : cyc) {
    if (is_self_anomalous(e.kind)) return false;
  }
  return std::any_of(cyc.begin(), cyc.end(), [&](const Edge& e) {
    return t.terms[e.src].status == TxnStatus::Aborted;
  });
}

// Raw (unreduced) cycles: one per self-anomalous edge, then every simple
// cycle of length >= 2. visit returns false to stop; the result is false
// when the cap was hit.
template <class Visit>
bool raw_cycles(const Trace& t, const std::vector<Edge>& edges, std::size_t cap, Visit&& visit) {
  std::size_t count = 0;
  std::vector<Edge> cyc;
  for (const auto& e : edges) {
    if (!is_self_anomalous(e.kind)) continue;
    if (++count > cap) return false;
    cyc.assign(1, e);
    if (!visit(cyc)) return true;
  }
  std::vector<Arc> arcs;
  arcs.reserve(edges.size());
  for (const auto& e : edges) arcs.emplace_back(e.src, e.dst);
  bool capped = false;
  simple_cycles(txn_count(t), arcs, [&](const std::vector<std::uint32_t>& path) {
    if (++count > cap) {
      capped = true;
      return false;
    }
    cyc.clear();
    for (auto a : path) cyc.push_back(edges[a]);
    return visit(cyc);
  });
  return !capped;
}

inline Analysis analyze(const Trace& t, const std::vector<Edge>& edges,
                        const AnalyzeOptions& opt = {}) {
  Analysis out;
  std::set<std::vector<std::tuple<std::uint16_t, std::uint16_t, PopKind>>> seen;
  out.overflow = !raw_cycles(t, edges, opt.cycle_cap, [&](const std::vector<Edge>& raw) {
    std::vector<Edge> red = reduce(t, raw);
    if (pruned(t, red, opt.abort_policy)) return true;
    std::vector<std::tuple<std::uint16_t, std::uint16_t, PopKind>> key;
    for (const auto& e : red) key.emplace_back(e.p, e.q, e.kind);
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) return true;
    out.anomalies.push_back(classify(t, red));
    return true;
  });
  // Ties on the close position fall back to op positions, which survive any
  // relabeling of transactions and objects.
  auto key = [&t](const Anomaly& a) {
    std::vector<std::tuple<std::size_t, std::size_t, PopKind>> k;
    for (const auto& e : a.edges) k.emplace_back(t.ops[e.p].pos, t.ops[e.q].pos, e.kind);
    std::sort(k.begin(), k.end());
    return std::make_pair(a.close, std::move(k));
  };
  std::sort(out.anomalies.begin(), out.anomalies.end(),
            [&key](const Anomaly& a, const Anomaly& b) { return key(a) < key(b); });
  return out;
}

inline Analysis analyze(const Trace& t, const AnalyzeOptions& opt = {}) {
  std::vector<Edge> edges;
  extract(t, edges);
  return analyze(t, edges, opt);
}

// Rank used to pick one label per history: class first, then table row.
inline std::size_t priority_rank(const Anomaly& a) {
  std::size_t rank = table_rank(a.name);
  if (rank < kAnomalyTable.size()) return rank;
  return kAnomalyTable.size() + static_cast<std::size_t>(a.cls);
}

// Equal ranks fall back to the sorted edge kinds of the cycle.
using PriorityKey = std::pair<std::size_t, std::vector<PopKind>>;

template <class EdgeRange>
PriorityKey priority_key(std::size_t rank, const EdgeRange& edges) {
  PriorityKey key{rank, {}};
  for (const auto& e : edges) key.second.push_back(e.kind);
  std::sort(key.second.begin(), key.second.end());
  return key;
}

inline PriorityKey priority_key(const Anomaly& a) { return priority_key(priority_rank(a), a.edges); }

}  // namespace kernel

struct Cycle {
  std::vector<PopEdge> edges;
  std::set<ObjectId> objects;
  std::set<TxnId> txns;
  std::map<TxnId, Terminal> terminals;  // outcome of every member transaction

  std::size_t length() const { return edges.size(); }

  bool operator==(const Cycle& o) const { return edges == o.edges; }
};

struct AnomalyReport {
  Cycle cycle;
  AnomalyClass cls = AnomalyClass::IAT;
  AnomalyClass definition_class = AnomalyClass::IAT;
  AnomalySubclass subclass = AnomalySubclass::MDA;
  AnomalyName name = AnomalyName::Unclassified;
  bool predicate_based = false;
  std::size_t earliest_close_position = 0;

  std::string signature() const {
    std::string out;
    for (const auto& e : cycle.edges) {
      if (!out.empty()) out += ',';
      out += e.label();
    }
    return out;
  }

  std::string line() const {
    std::string out(to_string(name));
    out += ';';
    out += to_string(cls);
    out += ';';
    out += to_string(subclass);
    out += ';';
    out += predicate_based ? "predicate" : "entity";
    out += ';';
    out += signature();
    return out;
  }
};

class CycleCapExceeded : public std::runtime_error {
 public:
  explicit CycleCapExceeded(std::size_t cap)
      : std::runtime_error("cycle count exceeds cap of " + std::to_string(cap)) {}
};

namespace detail {

// Rebuilds a small trace from a cycle's own operations.
struct CycleTrace {
  kernel::Trace trace;
  kernel::Labels labels;
  std::vector<kernel::Edge> edges;
};

inline CycleTrace cycle_trace(const Cycle& c) {
  CycleTrace ct;
  std::map<TxnId, std::uint16_t> txn_index;
  auto txn_of = [&](TxnId id) {
    auto [it, fresh] = txn_index.emplace(id, static_cast<std::uint16_t>(txn_index.size()));
    if (fresh) ct.labels.txns.push_back(id);
    return it->second;
  };
  std::map<ObjectId, std::uint16_t> obj_index;
  auto obj_of = [&](const ObjectId& o) {
    auto [it, fresh] = obj_index.emplace(o, static_cast<std::uint16_t>(obj_index.size()));
    if (fresh) ct.labels.objects.push_back(o);
    return it->second;
  };
  struct Anchor {
    std::size_t pos;
    std::uint16_t txn;
    std::uint16_t obj;
    bool write;
    Membership mem;
  };
  std::map<std::size_t, Anchor> anchors;
  for (const auto& e : c.edges) {
    PopFamily f = family(e.kind);
    std::uint16_t o = obj_of(e.object);
    anchors[e.positions.first] = {e.positions.first, txn_of(e.from_txn), o, f != PopFamily::RW,
                                  e.memberships.first};
    anchors[e.positions.second] = {e.positions.second, txn_of(e.to_txn), o, f != PopFamily::WR,
                                   e.memberships.second};
  }
  std::map<std::size_t, std::uint16_t> op_index;
  for (const auto& [pos, a] : anchors) {
    kernel::Op op;
    op.txn = a.txn;
    op.obj = a.obj;
    op.write = a.write;
    op.mem = a.mem;
    op.pos = static_cast<std::uint32_t>(pos);
    op_index[pos] = static_cast<std::uint16_t>(ct.trace.ops.size());
    ct.trace.ops.push_back(op);
  }
  ct.trace.terms.resize(ct.labels.txns.size());
  for (std::size_t i = 0; i < ct.labels.txns.size(); ++i) {
    auto it = c.terminals.find(ct.labels.txns[i]);
    if (it != c.terminals.end()) ct.trace.terms[i] = it->second;
  }
  for (const auto& e : c.edges) {
    kernel::Edge k;
    k.src = txn_index.at(e.from_txn);
    k.dst = txn_index.at(e.to_txn);
    k.obj = obj_index.at(e.object);
    k.kind = e.kind;
    k.pc = e.predicate_class;
    k.p = op_index.at(e.positions.first);
    k.q = op_index.at(e.positions.second);
    ct.edges.push_back(k);
  }
  return ct;
}

inline Cycle to_cycle(const kernel::Trace& t, const kernel::Labels& l,
                      const std::vector<kernel::Edge>& edges) {
  Cycle c;
  for (const auto& e : edges) {
    c.edges.push_back(to_pop_edge(t, l, e));
    c.objects.insert(l.objects[e.obj]);
    c.txns.insert(l.txns[e.src]);
    c.txns.insert(l.txns[e.dst]);
  }
  for (TxnId id : c.txns) {
    auto idx = static_cast<std::size_t>(
        std::find(l.txns.begin(), l.txns.end(), id) - l.txns.begin());
    c.terminals[id] = t.terms[idx];
  }
  return c;
}

inline AnomalyReport to_report(const kernel::Trace& t, const kernel::Labels& l,
                               const kernel::Anomaly& a) {
  AnomalyReport r;
  r.cycle = to_cycle(t, l, a.edges);
  r.cls = a.cls;
  r.definition_class = a.definition_class;
  r.subclass = a.subclass;
  r.name = a.name;
  r.predicate_based = a.predicate_based;
  r.earliest_close_position = a.close;
  return r;
}

}  // namespace detail

struct CycleList {
  std::vector<Cycle> cycles;
  bool overflow = false;
};

inline CycleList find_cycles(const ConflictGraph& g, std::size_t cap = 10000) {
  CycleList out;
  auto count = [&]() {
    if (out.cycles.size() >= cap) {
      out.overflow = true;
      return false;
    }
    return true;
  };
  auto add = [&](std::vector<PopEdge> edges) {
    Cycle c;
    c.edges = std::move(edges);
    for (const auto& e : c.edges) {
      c.objects.insert(e.object);
      c.txns.insert(e.from_txn);
      c.txns.insert(e.to_txn);
    }
    for (TxnId id : c.txns) {
      auto it = g.terminals.find(id);
      c.terminals[id] = it == g.terminals.end() ? Terminal{} : it->second;
    }
    out.cycles.push_back(std::move(c));
  };
  for (const auto& e : g.edges) {
    if (!is_self_anomalous(e.kind)) continue;
    if (!count()) return out;
    add({e});
  }
  std::map<TxnId, std::uint16_t> index;
  for (TxnId v : g.vertices) index.emplace(v, static_cast<std::uint16_t>(index.size()));
  std::vector<kernel::Arc> arcs;
  for (const auto& e : g.edges) arcs.emplace_back(index.at(e.from_txn), index.at(e.to_txn));
  kernel::simple_cycles(index.size(), arcs, [&](const std::vector<std::uint32_t>& path) {
    if (!count()) return false;
    std::vector<PopEdge> edges;
    for (auto a : path) edges.push_back(g.edges[a]);
    add(std::move(edges));
    return true;
  });
  return out;
}

inline Cycle reduce_cycle(const Cycle& c) {
  auto ct = detail::cycle_trace(c);
  auto red = kernel::reduce(ct.trace, ct.edges);
  return detail::to_cycle(ct.trace, ct.labels, red);
}

inline AnomalyReport classify_cycle(const Cycle& c) {
  auto ct = detail::cycle_trace(c);
  std::vector<kernel::Edge> edges = ct.edges;
  kernel::rotate_canonical(edges);
  return detail::to_report(ct.trace, ct.labels, kernel::classify(ct.trace, edges));
}

struct Detection {
  std::vector<AnomalyReport> reports;
  bool overflow = false;
};

inline Detection analyze_history(const History& h, const AnalyzeOptions& opt = {}) {
  kernel::Labels labels;
  kernel::Trace t = kernel::from_history(h, &labels);
  kernel::Analysis a = kernel::analyze(t, opt);
  Detection d;
  d.overflow = a.overflow;
  for (const auto& an : a.anomalies) d.reports.push_back(detail::to_report(t, labels, an));
  return d;
}

inline std::vector<AnomalyReport> detect_anomalies(const History& h,
                                                   const AnalyzeOptions& opt = {}) {
  Detection d = analyze_history(h, opt);
  if (d.overflow) throw CycleCapExceeded(opt.cycle_cap);
  return std::move(d.reports);
}

inline std::optional<AnomalyReport> earliest_anomaly(const History& h,
                                                     const AnalyzeOptions& opt = {}) {
  auto reports = detect_anomalies(h, opt);
  if (reports.empty()) return std::nullopt;
  return reports.front();
}

// One label for a history with several anomalies: RAT before WAT before IAT,
// then table row order, then edge kinds.
inline const AnomalyReport* select_by_priority(const std::vector<AnomalyReport>& reports) {
  const AnomalyReport* best = nullptr;
  kernel::PriorityKey best_key;
  for (const auto& r : reports) {
    std::size_t rank = table_rank(r.name);
    if (rank >= kAnomalyTable.size()) rank = kAnomalyTable.size() + static_cast<std::size_t>(r.cls);
    auto key = kernel::priority_key(rank, r.cycle.edges);
    if (!best || key < best_key) {
      best = &r;
      best_key = std::move(key);
    }
  }
  return best;
}

inline bool is_serializable(const History& h, const AnalyzeOptions& opt = {}) {
  return detect_anomalies(h, opt).empty();
}

enum class IsolationLevel : std::uint8_t { NRW, NA };

inline std::string_view to_string(IsolationLevel l) { return l == IsolationLevel::NRW ? "NRW" : "NA"; }

struct IsolationResult {
  bool admissible = true;
  std::vector<AnomalyReport> violations;
};

inline bool forbidden(IsolationLevel level, AnomalyClass cls) {
  return level == IsolationLevel::NA || cls != AnomalyClass::IAT;
}

inline IsolationResult check_isolation(const History& h, IsolationLevel level,
                                       const AnalyzeOptions& opt = {}) {
  IsolationResult out;
  for (auto& r : detect_anomalies(h, opt)) {
    if (forbidden(level, r.cls)) out.violations.push_back(std::move(r));
  }
  out.admissible = out.violations.empty();
  return out;
}

}  // namespace txanomaly

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
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "txanomaly/history.hpp"

namespace txanomaly {

// Partial-order pair kinds. The first three carry the source's commit
// before the target operation; the last three close a cycle on their own.
enum class PopKind : std::uint8_t { WCR, WCW, RCW, WW, WR, RW, WRA, WWC, WWA };

inline constexpr std::size_t kPopKindCount = 9;

inline constexpr std::array<PopKind, kPopKindCount> kAllPopKinds = {
    PopKind::WCR, PopKind::WCW, PopKind::RCW, PopKind::WW,  PopKind::WR,
    PopKind::RW,  PopKind::WRA, PopKind::WWC, PopKind::WWA};

inline std::string_view to_string(PopKind k) {
  static constexpr std::array<std::string_view, kPopKindCount> names = {
      "WCR", "WCW", "RCW", "WW", "WR", "RW", "WRA", "WWC", "WWA"};
  return names[static_cast<std::size_t>(k)];
}

inline std::optional<PopKind> parse_pop_kind(std::string_view s) {
  for (PopKind k : kAllPopKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

constexpr bool is_self_anomalous(PopKind k) {
  return k == PopKind::WRA || k == PopKind::WWC || k == PopKind::WWA;
}

constexpr bool is_committed_kind(PopKind k) {
  return k == PopKind::WCR || k == PopKind::WCW || k == PopKind::RCW;
}

enum class PopFamily : std::uint8_t { WR, WW, RW };

constexpr PopFamily family(PopKind k) {
  switch (k) {
    case PopKind::WCR:
    case PopKind::WR:
    case PopKind::WRA: return PopFamily::WR;
    case PopKind::WCW:
    case PopKind::WW:
    case PopKind::WWC:
    case PopKind::WWA: return PopFamily::WW;
    case PopKind::RCW:
    case PopKind::RW: break;
  }
  return PopFamily::RW;
}

// Self-anomalous kinds fold to the plain kind of their family.
constexpr PopKind uncommitted_base(PopKind k) {
  switch (k) {
    case PopKind::WRA: return PopKind::WR;
    case PopKind::WWC:
    case PopKind::WWA: return PopKind::WW;
    default: return k;
  }
}

enum class PredicateClass : std::uint8_t { Entity, Predicate };

inline std::string_view to_string(PredicateClass c) {
  return c == PredicateClass::Entity ? "entity" : "predicate";
}

inline constexpr std::size_t kNoPosition = std::numeric_limits<std::size_t>::max();

struct Terminal {
  TxnStatus status = TxnStatus::Active;
  std::size_t position = kNoPosition;

  bool operator==(const Terminal&) const = default;
};

// Kind of the pair p (in the source txn) before q, or nullopt when the
// source aborted before q.
inline std::optional<PopKind> label_pair(bool p_write, bool q_write, std::size_t q_pos,
                                         const Terminal& source) {
  bool ended_before = source.status != TxnStatus::Active && source.position < q_pos;
  if (ended_before) {
    if (source.status == TxnStatus::Aborted) return std::nullopt;
    if (!p_write) return PopKind::RCW;
    return q_write ? PopKind::WCW : PopKind::WCR;
  }
  if (!p_write) return PopKind::RW;
  if (!q_write) return source.status == TxnStatus::Aborted ? PopKind::WRA : PopKind::WR;
  switch (source.status) {
    case TxnStatus::Aborted: return PopKind::WWA;
    case TxnStatus::Committed: return PopKind::WWC;
    case TxnStatus::Active: break;
  }
  return PopKind::WW;
}

// nullopt: the two accesses have no relation (a read outside the predicate
// followed by a write that stays outside).
inline std::optional<PredicateClass> predicate_relation(bool p_write, Membership p_mem,
                                                        bool q_write, Membership q_mem) {
  if (p_write && q_write) return PredicateClass::Entity;
  if (!p_write && p_mem == Membership::NotIn && q_mem == Membership::NotIn) return std::nullopt;
  if (p_mem == Membership::NotIn || q_mem == Membership::NotIn) return PredicateClass::Predicate;
  return PredicateClass::Entity;
}

inline std::optional<PredicateClass> classify_edge_predicate(const Event& p, const Event& q) {
  return predicate_relation(p.is_write(), p.predicate.membership, q.is_write(),
                            q.predicate.membership);
}

struct PopEdge {
  TxnId from_txn = 0;
  TxnId to_txn = 0;
  ObjectId object;
  PopKind kind = PopKind::WW;
  PredicateClass predicate_class = PredicateClass::Entity;
  std::pair<std::size_t, std::size_t> positions{0, 0};
  std::pair<Membership, Membership> memberships{Membership::Unspecified,
                                                Membership::Unspecified};

  bool operator==(const PopEdge&) const = default;

  std::string label() const { return std::string(to_string(kind)) + "[" + object + "]"; }
};

struct ConflictGraph {
  std::set<TxnId> vertices;
  std::vector<PopEdge> edges;
  std::map<TxnId, Terminal> terminals;

  std::string to_dot() const {
    std::string out = "digraph conflict {\n";
    for (TxnId t : vertices) out += "  t" + std::to_string(t) + ";\n";
    for (const auto& e : edges) {
      out += "  t" + std::to_string(e.from_txn) + " -> t" + std::to_string(e.to_txn) +
             " [label=\"" + e.label() +
             (e.predicate_class == PredicateClass::Predicate ? " pred" : "") + "\"];\n";
    }
    out += "}\n";
    return out;
  }
};

// Dense integer form shared by the graph, cycle and protocol code.
namespace kernel {

struct Op {
  std::uint16_t txn = 0;
  std::uint16_t obj = 0;
  bool write = false;
  Membership mem = Membership::Unspecified;
  std::uint32_t pos = 0;
  // Writes: 1-based version slot produced. Reads: slot read (0 = initial).
  std::uint32_t slot = 0;
};

struct Edge {
  std::uint16_t src = 0;
  std::uint16_t dst = 0;
  std::uint16_t obj = 0;
  PopKind kind = PopKind::WW;
  PredicateClass pc = PredicateClass::Entity;
  std::uint16_t p = 0;  // op indices
  std::uint16_t q = 0;
  bool adjacent = true;

  bool operator==(const Edge&) const = default;
};

struct Trace {
  std::vector<Op> ops;          // in history order
  std::vector<Terminal> terms;  // by txn index

  void clear() {
    ops.clear();
    terms.clear();
  }
};

inline bool version_adjacent(const Op& a, const Op& b) {
  if (a.write && b.write) return b.slot == a.slot + 1;
  if (a.write) return b.slot == a.slot;
  return b.slot == a.slot + 1;
}

inline std::optional<Edge> make_edge(const Trace& t, std::uint16_t ai, std::uint16_t bi) {
  const Op& a = t.ops[ai];
  const Op& b = t.ops[bi];
  if (a.txn == b.txn || a.obj != b.obj || (!a.write && !b.write)) return std::nullopt;
  auto pc = predicate_relation(a.write, a.mem, b.write, b.mem);
  if (!pc) return std::nullopt;
  auto kind = label_pair(a.write, b.write, b.pos, t.terms[a.txn]);
  if (!kind) return std::nullopt;
  Edge e;
  e.src = a.txn;
  e.dst = b.txn;
  e.obj = a.obj;
  e.kind = *kind;
  e.pc = *pc;
  e.p = ai;
  e.q = bi;
  e.adjacent = version_adjacent(a, b);
  return e;
}

// Version-adjacent edges only, ordered by (q, p).
inline void extract(const Trace& t, std::vector<Edge>& out) {
  out.clear();
  auto n = static_cast<std::uint16_t>(t.ops.size());
  for (std::uint16_t b = 0; b < n; ++b) {
    for (std::uint16_t a = 0; a < b; ++a) {
      if (!version_adjacent(t.ops[a], t.ops[b])) continue;
      if (auto e = make_edge(t, a, b)) out.push_back(*e);
    }
  }
}

inline std::uint16_t txn_count(const Trace& t) { return static_cast<std::uint16_t>(t.terms.size()); }

// Maps dense indices back to history labels.
struct Labels {
  std::vector<TxnId> txns;
  std::vector<ObjectId> objects;
};

inline Trace from_history(const History& h, Labels* labels = nullptr) {
  Trace t;
  std::map<TxnId, std::uint16_t> txn_index;
  for (const auto& [id, s] : h.txn_status) {
    auto idx = static_cast<std::uint16_t>(txn_index.size());
    txn_index.emplace(id, idx);
  }
  t.terms.resize(txn_index.size());
  std::unordered_map<ObjectId, std::uint16_t> obj_index;
  std::vector<std::uint32_t> writes;
  if (labels) {
    labels->txns.clear();
    labels->objects.clear();
    for (const auto& [id, idx] : txn_index) labels->txns.push_back(id);
  }
  for (std::size_t i = 0; i < h.events.size(); ++i) {
    const Event& e = h.events[i];
    std::uint16_t ti = txn_index.at(e.txn);
    if (e.is_terminal()) {
      t.terms[ti] = Terminal{e.kind == EventKind::Commit ? TxnStatus::Committed
                                                         : TxnStatus::Aborted,
                             i};
      continue;
    }
    auto [it, fresh] = obj_index.emplace(e.object, static_cast<std::uint16_t>(obj_index.size()));
    if (fresh) {
      writes.push_back(0);
      if (labels) labels->objects.push_back(e.object);
    }
    Op op;
    op.txn = ti;
    op.obj = it->second;
    op.write = e.is_write();
    op.mem = e.predicate.membership;
    op.pos = static_cast<std::uint32_t>(i);
    op.slot = op.write ? ++writes[op.obj] : writes[op.obj];
    t.ops.push_back(op);
  }
  return t;
}

}  // namespace kernel

inline PopEdge to_pop_edge(const kernel::Trace& t, const kernel::Labels& l, const kernel::Edge& e) {
  PopEdge out;
  out.from_txn = l.txns[e.src];
  out.to_txn = l.txns[e.dst];
  out.object = l.objects[e.obj];
  out.kind = e.kind;
  out.predicate_class = e.pc;
  out.positions = {t.ops[e.p].pos, t.ops[e.q].pos};
  out.memberships = {t.ops[e.p].mem, t.ops[e.q].mem};
  return out;
}

inline std::vector<PopEdge> extract_pops(const History& h) {
  kernel::Labels labels;
  kernel::Trace t = kernel::from_history(h, &labels);
  std::vector<kernel::Edge> edges;
  kernel::extract(t, edges);
  std::vector<PopEdge> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.push_back(to_pop_edge(t, labels, e));
  return out;
}

inline ConflictGraph build_graph(const History& h) {
  ConflictGraph g;
  for (const auto& [id, s] : h.txn_status) g.vertices.insert(id);
  g.edges = extract_pops(h);
  for (TxnId id : g.vertices) g.terminals[id] = Terminal{};
  for (std::size_t i = 0; i < h.events.size(); ++i) {
    const Event& e = h.events[i];
    if (e.is_terminal()) {
      g.terminals[e.txn] = Terminal{
          e.kind == EventKind::Commit ? TxnStatus::Committed : TxnStatus::Aborted, i};
    }
  }
  return g;
}

}  // namespace txanomaly

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
#include <atomic>
#include <functional>
#include <thread>
#include <string>
#include <unordered_map>
#include <vector>

#include "txanomaly/anomaly.hpp"
#include "txanomaly/conflict.hpp"
#include "txanomaly/enumeration.hpp"

namespace txanomaly {

enum class SelectionOrder : std::uint8_t {
  Priority,  // RAT, WAT, IAT, then table row
  Earliest,  // first cycle to close
};

// Per-history outcome used by the aggregate statistics.
struct HistoryOutcome {
  bool cyclic = false;
  AnomalyName name = AnomalyName::Unclassified;
  AnomalyClass cls = AnomalyClass::IAT;
  AnomalySubclass subclass = AnomalySubclass::MDA;
  std::array<std::uint8_t, kPopKindCount> history_edges{};
  std::array<std::uint8_t, kPopKindCount> cycle_edges{};
};

inline std::size_t pick_anomaly(const std::vector<kernel::Anomaly>& as, SelectionOrder order) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < as.size(); ++i) {
    bool better = order == SelectionOrder::Priority
                      ? kernel::priority_key(as[i]) < kernel::priority_key(as[best])
                      : as[i].close < as[best].close;
    if (better) best = i;
  }
  return best;
}

inline HistoryOutcome outcome_of(const kernel::Trace& t, const AnalyzeOptions& opt,
                                 SelectionOrder order) {
  HistoryOutcome out;
  std::vector<kernel::Edge> edges;
  kernel::extract(t, edges);
  for (const auto& e : edges) ++out.history_edges[static_cast<std::size_t>(e.kind)];
  kernel::Analysis a = kernel::analyze(t, edges, opt);
  if (a.anomalies.empty()) return out;
  const kernel::Anomaly& pick = a.anomalies[pick_anomaly(a.anomalies, order)];
  out.cyclic = true;
  out.name = pick.name;
  out.cls = pick.cls;
  out.subclass = pick.subclass;
  for (const auto& e : pick.edges) ++out.cycle_edges[static_cast<std::size_t>(e.kind)];
  return out;
}

// Classifies every terminal assignment of one op sequence. Edges depend only
// on each source transaction's outcome and on which operations precede its
// terminal, so results are memoized on the all-pairs kind vector.
class SequenceAnalyzer {
 public:
  SequenceAnalyzer(const AnalyzeOptions& opt, SelectionOrder order) : opt_(opt), order_(order) {}

  void prepare(const std::vector<OpSymbol>& ops, int n) {
    ops_ = ops;
    n_ = n;
    pairs_.clear();
    for (std::size_t b = 0; b < ops.size(); ++b) {
      for (std::size_t a = 0; a < b; ++a) {
        if (ops[a].txn == ops[b].txn || ops[a].obj != ops[b].obj) continue;
        if (!ops[a].write && !ops[b].write) continue;
        pairs_.push_back(Pair{static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)});
      }
    }
    memo_enabled_ = pairs_.size() <= 30 && n <= 4 && order_ == SelectionOrder::Priority;
    memo_.clear();
  }

  // status[t], gap[t]: terminal placed before op gap[t] (gap == ops.size()
  // means after every op); gap is ignored for Active transactions.
  const HistoryOutcome& outcome(const TxnStatus* status, const int* gap) {
    if (!memo_enabled_) {
      scratch_ = compute(status, gap);
      return scratch_;
    }
    Key key = make_key(status, gap);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    return memo_.emplace(key, compute(status, gap)).first->second;
  }

  std::size_t memo_size() const { return memo_.size(); }

 private:
  struct Pair {
    std::uint8_t a;
    std::uint8_t b;
  };
  struct Key {
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return static_cast<std::size_t>(k.lo * 0x9E3779B97F4A7C15ULL ^ (k.hi + 0x632BE59BD9B4E019ULL + (k.lo << 6)));
    }
  };

  AnalyzeOptions opt_;
  SelectionOrder order_;
  std::vector<OpSymbol> ops_;
  int n_ = 0;
  std::vector<Pair> pairs_;
  bool memo_enabled_ = false;
  std::unordered_map<Key, HistoryOutcome, KeyHash> memo_;
  HistoryOutcome scratch_;
  kernel::Trace trace_;

  Key make_key(const TxnStatus* status, const int* gap) const {
    Key k;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      const Pair& p = pairs_[i];
      int src = ops_[p.a].txn;
      Terminal term;
      term.status = status[src];
      // Only the relative order with op b matters.
      term.position = status[src] == TxnStatus::Active ? kNoPosition
                      : gap[src] <= p.b               ? 0
                                                      : kNoPosition - 1;
      auto kind = label_pair(ops_[p.a].write, ops_[p.b].write, 1, term);
      std::uint64_t code = kind ? static_cast<std::uint64_t>(*kind) + 1 : 0;
      if (i < 16) {
        k.lo |= code << (4 * i);
      } else {
        k.hi |= code << (4 * (i - 16));
      }
    }
    for (int t = 0; t < n_; ++t) {
      if (status[t] == TxnStatus::Aborted) k.hi |= std::uint64_t{1} << (60 + t);
    }
    return k;
  }

  HistoryOutcome compute(const TxnStatus* status, const int* gap) {
    trace_.clear();
    trace_.terms.resize(static_cast<std::size_t>(n_));
    const int len = static_cast<int>(ops_.size());
    std::vector<std::uint32_t> writes(64, 0);
    std::uint32_t pos = 0;
    for (int g = 0; g <= len; ++g) {
      for (int t = 0; t < n_; ++t) {
        if (status[t] != TxnStatus::Active && gap[t] == g) {
          trace_.terms[static_cast<std::size_t>(t)] = Terminal{status[t], pos++};
        }
      }
      if (g == len) break;
      const OpSymbol& o = ops_[static_cast<std::size_t>(g)];
      kernel::Op op;
      op.txn = o.txn;
      op.obj = o.obj;
      op.write = o.write;
      op.pos = pos++;
      op.slot = o.write ? ++writes[o.obj] : writes[o.obj];
      trace_.ops.push_back(op);
    }
    return outcome_of(trace_, opt_, order_);
  }
};

// Terminal assignments of one op sequence with the number of distinct
// histories (terminal orderings within a gap) each one stands for.
template <class Visit>
void for_each_terminal_assignment(const std::vector<OpSymbol>& ops, int n, EnumerationMode mode,
                                  Visit&& visit) {
  const int len = static_cast<int>(ops.size());
  auto last = detail::last_ops(ops, n);
  std::vector<TxnStatus> status(static_cast<std::size_t>(n), TxnStatus::Active);
  std::vector<int> gap(static_cast<std::size_t>(n), len);
  std::vector<int> in_gap(static_cast<std::size_t>(len + 1), 0);
  auto rec = [&](auto& self, int t, std::uint64_t weight) -> void {
    if (t == n) {
      visit(status.data(), gap.data(), weight);
      return;
    }
    auto ti = static_cast<std::size_t>(t);
    int lo = mode == EnumerationMode::Appended ? len : last[ti] + 1;
    for (TxnStatus s : {TxnStatus::Committed, TxnStatus::Aborted}) {
      status[ti] = s;
      for (int g = lo; g <= len; ++g) {
        gap[ti] = g;
        int c = ++in_gap[static_cast<std::size_t>(g)];
        self(self, t + 1, weight * static_cast<std::uint64_t>(c));
        --in_gap[static_cast<std::size_t>(g)];
      }
    }
    if (mode == EnumerationMode::Interleaved) {
      status[ti] = TxnStatus::Active;
      gap[ti] = len;
      self(self, t + 1, weight);
    }
  };
  rec(rec, 0, 1);
}

inline constexpr std::size_t kLabelSlots = kNamedAnomalyCount + 3;

// Label slot: table rows first, then Unclassified split by class.
inline std::size_t label_slot(AnomalyName name, AnomalyClass cls) {
  std::size_t r = table_rank(name);
  return r < kNamedAnomalyCount ? r : kNamedAnomalyCount + static_cast<std::size_t>(cls);
}

struct StatsCounts {
  std::uint64_t histories = 0;
  std::uint64_t cyclic = 0;
  std::array<std::uint64_t, kLabelSlots> by_label{};
  std::array<std::array<std::uint64_t, 3>, 3> matrix{};  // [class][subclass]
  std::array<std::uint64_t, kPopKindCount> edges_history{};
  std::array<std::uint64_t, kPopKindCount> edges_cyclic{};
  std::array<std::uint64_t, kPopKindCount> edges_cycle{};

  void add(const HistoryOutcome& o, std::uint64_t w) {
    histories += w;
    for (std::size_t k = 0; k < kPopKindCount; ++k) edges_history[k] += w * o.history_edges[k];
    if (!o.cyclic) return;
    cyclic += w;
    by_label[label_slot(o.name, o.cls)] += w;
    matrix[static_cast<std::size_t>(o.cls)][static_cast<std::size_t>(o.subclass)] += w;
    for (std::size_t k = 0; k < kPopKindCount; ++k) {
      edges_cyclic[k] += w * o.history_edges[k];
      edges_cycle[k] += w * o.cycle_edges[k];
    }
  }

  void merge(const StatsCounts& o) {
    histories += o.histories;
    cyclic += o.cyclic;
    for (std::size_t i = 0; i < kLabelSlots; ++i) by_label[i] += o.by_label[i];
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t s = 0; s < 3; ++s) matrix[c][s] += o.matrix[c][s];
    }
    for (std::size_t k = 0; k < kPopKindCount; ++k) {
      edges_history[k] += o.edges_history[k];
      edges_cyclic[k] += o.edges_cyclic[k];
      edges_cycle[k] += o.edges_cycle[k];
    }
  }

  bool operator==(const StatsCounts&) const = default;
};

struct StatsOptions {
  int shards = 1;
  int threads = 1;
  // Visit one op sequence per relabeling orbit, weighted by orbit size.
  bool canonical = true;
  AnalyzeOptions analyze;
  SelectionOrder selection = SelectionOrder::Priority;
  std::function<void(std::uint64_t)> progress;  // histories done, called from shard 0
};

namespace detail {

template <class Work>
void run_shards(int shards, int threads, Work&& work) {
  if (threads <= 1 || shards <= 1) {
    for (int s = 0; s < shards; ++s) work(s);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  int workers = std::min(threads, shards);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (int s = next++; s < shards; s = next++) work(s);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Shard s visits op sequences whose index is congruent to s modulo shards.
inline StatsCounts collect_stats(const HistorySpec& spec, const StatsOptions& opt = {}) {
  const int shards = std::max(1, opt.shards);
  std::vector<StatsCounts> parts(static_cast<std::size_t>(shards));
  detail::run_shards(shards, opt.threads, [&](int shard) {
    StatsCounts& acc = parts[static_cast<std::size_t>(shard)];
    SequenceAnalyzer analyzer(opt.analyze, opt.selection);
    std::uint64_t index = 0;
    std::uint64_t done = 0;
    for_each_op_sequence(spec, opt.canonical, [&](const std::vector<OpSymbol>& ops, std::uint64_t w) {
      if (index++ % static_cast<std::uint64_t>(shards) != static_cast<std::uint64_t>(shard)) return true;
      if (opt.selection == SelectionOrder::Earliest) {
        // Close positions depend on where each terminal lands, so every
        // placement is analyzed on its own.
        for_each_schedule(ops, spec.n, spec.mode, [&](const Schedule& s) {
          acc.add(outcome_of(kernel::from_history(to_history(s)), opt.analyze, opt.selection), w);
          return true;
        });
        if (opt.progress && shard == 0 && (++done & 0x3fff) == 0) opt.progress(acc.histories);
        return true;
      }
      analyzer.prepare(ops, spec.n);
      for_each_terminal_assignment(ops, spec.n, spec.mode,
                                   [&](const TxnStatus* st, const int* gap, std::uint64_t mult) {
                                     acc.add(analyzer.outcome(st, gap), w * mult);
                                   });
      if (opt.progress && shard == 0 && (++done & 0x3fff) == 0) opt.progress(acc.histories);
      return true;
    });
  });
  StatsCounts total;
  for (const auto& p : parts) total.merge(p);
  return total;
}

}  // namespace txanomaly

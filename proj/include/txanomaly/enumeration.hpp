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
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "txanomaly/history.hpp"

namespace txanomaly {

inline std::string_view to_string(EnumerationMode m) {
  return m == EnumerationMode::Interleaved ? "interleaved" : "appended";
}

inline std::string object_name(std::size_t i) {
  static constexpr std::string_view first = "xyz";
  if (i < first.size()) return std::string(1, first[i]);
  return "x" + std::to_string(i + 1);
}

inline std::string to_string(const HistorySpec& s) {
  return std::to_string(s.m) + "," + std::to_string(s.n) + "," + std::to_string(s.k) + "," +
         std::string(to_string(s.mode));
}

inline void validate_spec(const HistorySpec& s) {
  if (s.m < 1 || s.n < 1 || s.k < 1) throw std::invalid_argument("spec needs m >= 1, n >= 1, k >= 1");
  if (s.n > 16 || s.m > 64 || s.k > 32) throw std::invalid_argument("spec too large");
}

// Accepts "m,n,k" or "m,n,k,mode".
inline HistorySpec parse_spec(std::string_view text, EnumerationMode fallback = EnumerationMode::Interleaved) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 3 && parts.size() != 4) {
    throw std::invalid_argument("spec must look like m,n,k[,mode]: '" + std::string(text) + "'");
  }
  HistorySpec s;
  int* fields[3] = {&s.m, &s.n, &s.k};
  for (int i = 0; i < 3; ++i) {
    const std::string& p = parts[static_cast<std::size_t>(i)];
    if (p.empty() || p.size() > 6 ||
        !std::all_of(p.begin(), p.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw std::invalid_argument("spec field '" + p + "' is not a number");
    }
    *fields[i] = std::stoi(p);
  }
  s.mode = fallback;
  if (parts.size() == 4) {
    if (parts[3] == "interleaved") {
      s.mode = EnumerationMode::Interleaved;
    } else if (parts[3] == "appended") {
      s.mode = EnumerationMode::Appended;
    } else {
      throw std::invalid_argument("unknown mode '" + parts[3] + "' (interleaved|appended)");
    }
  }
  validate_spec(s);
  return s;
}

struct OpSymbol {
  std::uint8_t txn = 0;  // 0-based
  std::uint8_t obj = 0;  // 0-based
  bool write = false;

  bool operator==(const OpSymbol&) const = default;
};

// Compact history event used by the enumerator and the protocol replay.
struct SEvent {
  EventKind kind = EventKind::Read;
  std::uint8_t txn = 0;
  std::uint8_t obj = 0;

  bool operator==(const SEvent&) const = default;
};

using Schedule = std::vector<SEvent>;

namespace detail {

inline bool mul_overflows(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
  return __builtin_mul_overflow(a, b, &out);
}

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (mul_overflows(a, b, out)) throw std::overflow_error("history count overflows 64 bits");
  return out;
}

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("history count overflows 64 bits");
  return out;
}

inline std::uint64_t factorial(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f = checked_mul(f, static_cast<std::uint64_t>(i));
  return f;
}

inline std::vector<int> last_ops(const std::vector<OpSymbol>& ops, int n) {
  std::vector<int> last(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < ops.size(); ++i) last[ops[i].txn] = static_cast<int>(i);
  return last;
}

// Terminated transactions in insertion order: latest last op first.
inline std::vector<int> insertion_order(const std::vector<int>& last, std::uint32_t mask) {
  std::vector<int> order;
  for (int t = 0; t < static_cast<int>(last.size()); ++t) {
    if (mask & (1u << t)) order.push_back(t);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return last[static_cast<std::size_t>(a)] > last[static_cast<std::size_t>(b)]; });
  return order;
}

}  // namespace detail

// Every op sequence of length 1..k-1 in which all n transactions appear.
// canonical=true keeps one representative per relabeling orbit (labels in
// order of first appearance) and reports the orbit size as weight; otherwise
// every labeled sequence is visited with weight 1 in lexicographic order.
inline void for_each_op_sequence(
    const HistorySpec& spec, bool canonical,
    const std::function<bool(const std::vector<OpSymbol>&, std::uint64_t)>& visit) {
  validate_spec(spec);
  const int n = spec.n;
  const int m = spec.m;
  std::vector<OpSymbol> ops;
  std::vector<int> txn_uses(static_cast<std::size_t>(n), 0);
  bool stop = false;
  for (int len = 1; len < spec.k && !stop; ++len) {
    if (len < n) continue;
    ops.assign(static_cast<std::size_t>(len), OpSymbol{});
    std::fill(txn_uses.begin(), txn_uses.end(), 0);
    int txns_used = 0;
    auto rec = [&](auto& self, int i, int max_txn, int max_obj) -> void {
      if (stop) return;
      if (i == len) {
        if (txns_used != n) return;
        std::uint64_t w = 1;
        if (canonical) {
          w = detail::factorial(n);
          for (int j = 0; j <= max_obj; ++j) w = detail::checked_mul(w, static_cast<std::uint64_t>(m - j));
        }
        if (!visit(ops, w)) stop = true;
        return;
      }
      if (n - txns_used > len - i) return;
      int t_hi = canonical ? std::min(n - 1, max_txn + 1) : n - 1;
      int o_hi = canonical ? std::min(m - 1, max_obj + 1) : m - 1;
      for (int t = 0; t <= t_hi; ++t) {
        for (int o = 0; o <= o_hi; ++o) {
          for (int w = 0; w < 2; ++w) {
            ops[static_cast<std::size_t>(i)] = OpSymbol{static_cast<std::uint8_t>(t),
                                                        static_cast<std::uint8_t>(o), w == 1};
            if (txn_uses[static_cast<std::size_t>(t)]++ == 0) ++txns_used;
            self(self, i + 1, std::max(max_txn, t), std::max(max_obj, o));
            if (--txn_uses[static_cast<std::size_t>(t)] == 0) --txns_used;
            if (stop) return;
          }
        }
      }
    };
    rec(rec, 0, -1, -1);
  }
}

// Number of distinct terminal placements for one op sequence.
inline std::uint64_t placement_count(const std::vector<OpSymbol>& ops, int n, EnumerationMode mode) {
  auto last = detail::last_ops(ops, n);
  const int len = static_cast<int>(ops.size());
  std::uint64_t total = 0;
  const std::uint32_t full = (1u << n) - 1;
  for (std::uint32_t mask = 0; mask <= full; ++mask) {
    if (mode == EnumerationMode::Appended && mask != full) continue;
    auto order = detail::insertion_order(last, mask);
    std::uint64_t ways = 1;
    int placed = 0;
    for (int t : order) {
      int floor = mode == EnumerationMode::Appended ? len - 1 : last[static_cast<std::size_t>(t)];
      ways = detail::checked_mul(ways, static_cast<std::uint64_t>(len - 1 - floor + placed + 1));
      ++placed;
    }
    ways = detail::checked_mul(ways, std::uint64_t{1} << order.size());
    total = detail::checked_add(total, ways);
  }
  return total;
}

// Every terminal placement of one op sequence, in a fixed order. Per
// transaction the outcome order is Commit, Abort, then (interleaved only)
// no terminal.
inline bool for_each_schedule(const std::vector<OpSymbol>& ops, int n, EnumerationMode mode,
                              const std::function<bool(const Schedule&)>& visit) {
  auto last = detail::last_ops(ops, n);
  const int len = static_cast<int>(ops.size());
  Schedule base;
  base.reserve(ops.size() + static_cast<std::size_t>(n));
  for (const auto& o : ops) base.push_back(SEvent{o.write ? EventKind::Write : EventKind::Read, o.txn, o.obj});
  const int options = mode == EnumerationMode::Appended ? 2 : 3;
  std::vector<int> choice(static_cast<std::size_t>(n), 0);
  bool keep = true;
  Schedule cur;
  auto place = [&](auto& self, const std::vector<int>& order, std::size_t idx) -> void {
    if (!keep) return;
    if (idx == order.size()) {
      keep = visit(cur);
      return;
    }
    int t = order[idx];
    int floor_op = mode == EnumerationMode::Appended ? len - 1 : last[static_cast<std::size_t>(t)];
    // Position just after op floor_op in cur.
    std::size_t start = 0;
    int seen = -1;
    while (seen < floor_op) {
      if (cur[start].kind != EventKind::Commit && cur[start].kind != EventKind::Abort) ++seen;
      ++start;
    }
    SEvent term{choice[static_cast<std::size_t>(t)] == 0 ? EventKind::Commit : EventKind::Abort,
                static_cast<std::uint8_t>(t), 0};
    for (std::size_t at = start; at <= cur.size() && keep; ++at) {
      cur.insert(cur.begin() + static_cast<std::ptrdiff_t>(at), term);
      self(self, order, idx + 1);
      cur.erase(cur.begin() + static_cast<std::ptrdiff_t>(at));
    }
  };
  auto choose = [&](auto& self, int t) -> void {
    if (!keep) return;
    if (t == n) {
      std::uint32_t mask = 0;
      for (int i = 0; i < n; ++i) {
        if (choice[static_cast<std::size_t>(i)] < 2) mask |= 1u << i;
      }
      auto order = detail::insertion_order(last, mask);
      cur = base;
      place(place, order, 0);
      return;
    }
    for (int c = 0; c < options && keep; ++c) {
      choice[static_cast<std::size_t>(t)] = c;
      self(self, t + 1);
    }
  };
  choose(choose, 0);
  return keep;
}

inline History to_history(const Schedule& s, const std::optional<HistorySpec>& spec = std::nullopt) {
  std::vector<Event> events;
  events.reserve(s.size());
  for (const auto& e : s) {
    Event ev;
    ev.kind = e.kind;
    ev.txn = static_cast<TxnId>(e.txn) + 1;
    if (!ev.is_terminal()) ev.object = object_name(e.obj);
    events.push_back(std::move(ev));
  }
  History h = make_history(std::move(events));
  h.spec = spec;
  return h;
}

inline std::uint64_t count(const HistorySpec& spec) {
  std::uint64_t total = 0;
  for_each_op_sequence(spec, true, [&](const std::vector<OpSymbol>& ops, std::uint64_t w) {
    total = detail::checked_add(total, detail::checked_mul(w, placement_count(ops, spec.n, spec.mode)));
    return true;
  });
  return total;
}

struct EnumerationCursor {
  std::uint64_t position = 0;
  std::uint64_t emitted_count = 0;
};

struct CursorRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 0;

  std::uint64_t size() const { return end - begin; }
  bool operator==(const CursorRange&) const = default;
};

inline std::vector<CursorRange> partition(const HistorySpec& spec, int shards) {
  if (shards < 1) throw std::invalid_argument("shards must be >= 1");
  std::uint64_t total = count(spec);
  std::vector<CursorRange> out;
  auto s = static_cast<std::uint64_t>(shards);
  for (std::uint64_t i = 0; i < s; ++i) {
    std::uint64_t b = total / s * i + std::min(i, total % s);
    std::uint64_t e = total / s * (i + 1) + std::min(i + 1, total % s);
    out.push_back({b, e});
  }
  return out;
}

// Labeled op sequences in the same order as for_each_op_sequence with
// canonical=false, advanced one at a time.
class OpSequenceCursor {
 public:
  explicit OpSequenceCursor(const HistorySpec& spec) : spec_(spec) {
    validate_spec(spec_);
    symbols_ = 2 * spec_.m * spec_.n;
    len_ = std::max(1, spec_.n);
    digits_.assign(static_cast<std::size_t>(len_), 0);
    fresh_ = true;
  }

  // Advances to the next sequence covering all transactions.
  bool next(std::vector<OpSymbol>& out) {
    while (true) {
      if (!fresh_ && !advance()) return false;
      fresh_ = false;
      if (len_ >= spec_.k) return false;
      if (covers_all()) {
        out.resize(digits_.size());
        for (std::size_t i = 0; i < digits_.size(); ++i) out[i] = symbol(digits_[i]);
        return true;
      }
    }
  }

 private:
  HistorySpec spec_;
  int symbols_ = 0;
  int len_ = 0;
  std::vector<int> digits_;
  bool fresh_ = true;

  OpSymbol symbol(int s) const {
    int per_txn = 2 * spec_.m;
    return OpSymbol{static_cast<std::uint8_t>(s / per_txn), static_cast<std::uint8_t>((s / 2) % spec_.m),
                    s % 2 == 1};
  }

  bool advance() {
    for (int i = len_ - 1; i >= 0; --i) {
      if (++digits_[static_cast<std::size_t>(i)] < symbols_) return true;
      digits_[static_cast<std::size_t>(i)] = 0;
    }
    ++len_;
    digits_.assign(static_cast<std::size_t>(len_), 0);
    return len_ < spec_.k;
  }

  bool covers_all() const {
    std::uint32_t seen = 0;
    for (int d : digits_) seen |= 1u << (d / (2 * spec_.m));
    return seen == (1u << spec_.n) - 1;
  }
};

// Pull-style stream over a range of the deterministic enumeration order.
class HistoryStream {
 public:
  explicit HistoryStream(HistorySpec spec, CursorRange range = {0, std::numeric_limits<std::uint64_t>::max()})
      : spec_(spec), range_(range), seqs_(spec) {
    cursor_.position = range_.begin;
  }

  const EnumerationCursor& cursor() const { return cursor_; }

  bool next(Schedule& out) {
    if (cursor_.position >= range_.end) return false;
    while (buffer_pos_ >= buffer_.size()) {
      if (!refill()) return false;
    }
    out = buffer_[buffer_pos_++];
    ++cursor_.position;
    ++cursor_.emitted_count;
    return true;
  }

  bool next(History& out) {
    Schedule s;
    if (!next(s)) return false;
    out = to_history(s, spec_);
    return true;
  }

 private:
  HistorySpec spec_;
  CursorRange range_;
  EnumerationCursor cursor_;
  OpSequenceCursor seqs_;
  std::vector<OpSymbol> ops_;
  std::vector<Schedule> buffer_;
  std::size_t buffer_pos_ = 0;
  std::uint64_t seq_base_ = 0;  // history index of the next op sequence

  bool refill() {
    buffer_.clear();
    buffer_pos_ = 0;
    while (seqs_.next(ops_)) {
      std::uint64_t c = placement_count(ops_, spec_.n, spec_.mode);
      std::uint64_t base = seq_base_;
      seq_base_ += c;
      if (base + c <= cursor_.position) continue;
      std::uint64_t skip = cursor_.position - base;
      std::uint64_t i = 0;
      for_each_schedule(ops_, spec_.n, spec_.mode, [&](const Schedule& s) {
        if (i++ >= skip) buffer_.push_back(s);
        return true;
      });
      return true;
    }
    return false;
  }
};

inline void enumerate(const HistorySpec& spec, const std::function<bool(const History&)>& visit) {
  HistoryStream stream(spec);
  History h;
  while (stream.next(h)) {
    if (!visit(h)) return;
  }
}

}  // namespace txanomaly

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
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "txanomaly/anomaly.hpp"
#include "txanomaly/conflict.hpp"
#include "txanomaly/enumeration.hpp"
#include "txanomaly/history.hpp"
#include "txanomaly/stats.hpp"

namespace txanomaly {

enum class ProtocolId : std::uint8_t { NoWait2PL, WaitDie2PL, TO, MVTO, OCC, MaaT, SSI, WSI };

inline constexpr std::array<ProtocolId, 8> kAllProtocols = {
    ProtocolId::NoWait2PL, ProtocolId::WaitDie2PL, ProtocolId::TO,  ProtocolId::MVTO,
    ProtocolId::OCC,       ProtocolId::MaaT,       ProtocolId::SSI, ProtocolId::WSI};

// Protocols run at their serializable level by the soundness audit.
inline constexpr std::array<ProtocolId, 7> kAuditedProtocols = {
    ProtocolId::NoWait2PL, ProtocolId::TO,   ProtocolId::MVTO, ProtocolId::OCC,
    ProtocolId::MaaT,      ProtocolId::SSI,  ProtocolId::WSI};

// Column order of the rollback table.
inline constexpr std::array<ProtocolId, 6> kRollbackTableProtocols = {
    ProtocolId::OCC, ProtocolId::MaaT, ProtocolId::MVTO,
    ProtocolId::TO,  ProtocolId::SSI,  ProtocolId::NoWait2PL};

inline std::string_view to_string(ProtocolId p) {
  switch (p) {
    case ProtocolId::NoWait2PL: return "NoWait2PL";
    case ProtocolId::WaitDie2PL: return "WaitDie2PL";
    case ProtocolId::TO: return "TO";
    case ProtocolId::MVTO: return "MVTO";
    case ProtocolId::OCC: return "OCC";
    case ProtocolId::MaaT: return "MaaT";
    case ProtocolId::SSI: return "SSI";
    case ProtocolId::WSI: return "WSI";
  }
  return "?";
}

// Short column name used by the rollback table ("NoWait", "OCC", ...).
inline std::string_view short_name(ProtocolId p) {
  switch (p) {
    case ProtocolId::NoWait2PL: return "NoWait";
    case ProtocolId::WaitDie2PL: return "WaitDie";
    default: return to_string(p);
  }
}

inline std::optional<ProtocolId> parse_protocol(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == '_' || c == '-' || c == ' ') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  static const std::map<std::string, ProtocolId, std::less<>> names = {
      {"nowait2pl", ProtocolId::NoWait2PL}, {"nowait", ProtocolId::NoWait2PL},
      {"2pl", ProtocolId::NoWait2PL},       {"waitdie2pl", ProtocolId::WaitDie2PL},
      {"waitdie", ProtocolId::WaitDie2PL},  {"to", ProtocolId::TO},
      {"mvto", ProtocolId::MVTO},           {"occ", ProtocolId::OCC},
      {"maat", ProtocolId::MaaT},           {"ssi", ProtocolId::SSI},
      {"wsi", ProtocolId::WSI}};
  auto it = names.find(key);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

inline std::string protocol_list() {
  std::string out;
  for (ProtocolId p : kAllProtocols) {
    if (!out.empty()) out += ", ";
    out += to_string(p);
  }
  return out;
}

// Parses "all" or a comma-separated list of protocol names.
inline std::vector<ProtocolId> parse_protocols(std::string_view text) {
  std::string lower;
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "all") return {kRollbackTableProtocols.begin(), kRollbackTableProtocols.end()};
  std::vector<ProtocolId> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    auto p = parse_protocol(item);
    if (!p) {
      throw std::invalid_argument("unknown protocol '" + std::string(item) +
                                  "'; valid protocols: " + protocol_list() + ", all");
    }
    if (std::find(out.begin(), out.end(), *p) == out.end()) out.push_back(*p);
    start = end + 1;
  }
  return out;
}

enum class AbortReason : std::uint8_t {
  None,
  LockConflict,
  WaitDie,
  Deadlock,
  ReadTooLate,
  WriteTooLate,
  UncommittedAccess,
  VersionMismatch,
  CascadingAbort,
  LateWrite,
  VersionOrder,
  ValidationFailed,
  EmptyInterval,
  FirstCommitterWins,
  ConsecutiveRw,
  SnapshotStale,
  DirtyWrite,
};

inline std::string_view to_string(AbortReason r) {
  switch (r) {
    case AbortReason::None: return "none";
    case AbortReason::LockConflict: return "lock conflict";
    case AbortReason::WaitDie: return "younger requester dies";
    case AbortReason::Deadlock: return "deadlock victim";
    case AbortReason::ReadTooLate: return "read too late";
    case AbortReason::WriteTooLate: return "write too late";
    case AbortReason::UncommittedAccess: return "uncommitted write in place";
    case AbortReason::VersionMismatch: return "version not served";
    case AbortReason::CascadingAbort: return "cascading abort";
    case AbortReason::LateWrite: return "write invalidates younger read";
    case AbortReason::VersionOrder: return "version order";
    case AbortReason::ValidationFailed: return "validation failed";
    case AbortReason::EmptyInterval: return "empty timestamp interval";
    case AbortReason::FirstCommitterWins: return "first committer wins";
    case AbortReason::ConsecutiveRw: return "two consecutive RW";
    case AbortReason::SnapshotStale: return "snapshot version differs";
    case AbortReason::DirtyWrite: return "overlapping uncommitted writes";
  }
  return "?";
}

struct SimulateOptions {
  // SSI only: false drops rw-antidependency tracking, leaving plain SI.
  bool track_rw = true;
};

struct ProtocolDecision {
  std::set<TxnId> aborted_txns;
  std::optional<std::size_t> first_abort_position;
  std::map<TxnId, std::string> reasons;
  std::set<TxnId> committed_txns;
  // Deferred at the end of the history (neither committed nor aborted).
  std::set<TxnId> blocked_txns;
  // True when some victim's scripted outcome was commit or no terminal.
  bool counted = false;
};

namespace sim {

struct Ev {
  EventKind kind = EventKind::Read;  // Read, Write, Commit or Abort
  std::uint16_t txn = 0;
  std::uint16_t obj = 0;
};

struct Script {
  std::vector<Ev> events;
  int txns = 0;
  int objs = 0;
};

inline Script from_schedule(const Schedule& s) {
  Script out;
  out.events.reserve(s.size());
  for (const auto& e : s) {
    out.events.push_back(Ev{e.kind, e.txn, e.obj});
    out.txns = std::max(out.txns, e.txn + 1);
    if (e.kind == EventKind::Read || e.kind == EventKind::Write) out.objs = std::max(out.objs, e.obj + 1);
  }
  return out;
}

// Insert and Delete replay as writes.
inline Script from_history(const History& h, std::vector<TxnId>* txn_ids = nullptr) {
  Script out;
  std::map<TxnId, std::uint16_t> txn_index;
  for (const auto& [id, s] : h.txn_status) {
    txn_index.emplace(id, static_cast<std::uint16_t>(txn_index.size()));
    if (txn_ids) txn_ids->push_back(id);
  }
  std::unordered_map<ObjectId, std::uint16_t> obj_index;
  for (const auto& e : h.events) {
    Ev ev;
    ev.txn = txn_index.at(e.txn);
    if (e.is_terminal()) {
      ev.kind = e.kind;
    } else {
      ev.kind = e.is_read() ? EventKind::Read : EventKind::Write;
      ev.obj = obj_index.emplace(e.object, static_cast<std::uint16_t>(obj_index.size())).first->second;
    }
    out.events.push_back(ev);
  }
  out.txns = static_cast<int>(txn_index.size());
  out.objs = static_cast<int>(obj_index.size());
  return out;
}

// Scripted outcome per transaction.
inline std::vector<TxnStatus> scripted_outcome(const Script& s) {
  std::vector<TxnStatus> out(static_cast<std::size_t>(s.txns), TxnStatus::Active);
  for (const auto& e : s.events) {
    if (e.kind == EventKind::Commit) out[e.txn] = TxnStatus::Committed;
    if (e.kind == EventKind::Abort) out[e.txn] = TxnStatus::Aborted;
  }
  return out;
}

// Kernel trace of a script, for ground-truth classification.
inline kernel::Trace trace_of(const Script& s) {
  kernel::Trace t;
  t.terms.resize(static_cast<std::size_t>(s.txns));
  std::vector<std::uint32_t> writes(static_cast<std::size_t>(s.objs), 0);
  for (std::uint32_t i = 0; i < s.events.size(); ++i) {
    const Ev& e = s.events[i];
    if (e.kind == EventKind::Commit || e.kind == EventKind::Abort) {
      t.terms[e.txn] = Terminal{e.kind == EventKind::Commit ? TxnStatus::Committed : TxnStatus::Aborted, i};
      continue;
    }
    kernel::Op op;
    op.txn = e.txn;
    op.obj = e.obj;
    op.write = e.kind == EventKind::Write;
    op.pos = i;
    op.slot = op.write ? ++writes[e.obj] : writes[e.obj];
    t.ops.push_back(op);
  }
  return t;
}

enum class Phase : std::uint8_t { Running, Committed, Aborted, Forced };

inline constexpr std::uint16_t kInitial = std::numeric_limits<std::uint16_t>::max();
inline constexpr std::int64_t kInfinity = std::numeric_limits<std::int64_t>::max();

struct Result {
  std::vector<Phase> phase;
  std::vector<AbortReason> reason;
  std::vector<std::size_t> abort_at;  // script index where the rule fired
  std::vector<bool> blocked;
  // Executed events: writes of buffered protocols appear at their commit.
  std::vector<Ev> executed;
  bool counted = false;
  // Some operation waited for another transaction's terminal.
  bool deferred = false;
  std::optional<std::size_t> first_abort;
  std::vector<TxnStatus> scripted;

  bool any_forced() const {
    return std::find(phase.begin(), phase.end(), Phase::Forced) != phase.end();
  }
};

class Replay {
 public:
  Replay(ProtocolId p, const Script& s, SimulateOptions opt = {}) : p_(p), s_(s), opt_(opt) {}

  Result run() {
    init();
    for (std::size_t i = 0; i < s_.events.size(); ++i) {
      const Ev& e = s_.events[i];
      Txn& t = tx_[e.txn];
      if (t.phase != Phase::Running) continue;
      if (e.kind == EventKind::Abort) {
        t.pending.clear();
        t.blocked = false;
        t.wait_on = -1;
        terminate(e.txn, Phase::Aborted, AbortReason::None, i);
        drain();
        continue;
      }
      if (t.blocked) {
        t.pending.push_back(i);
        continue;
      }
      t.pending.push_back(i);
      ready_.push_back(e.txn);
      drain();
    }
    end_of_history();
    Result r;
    r.scripted = scripted_outcome(s_);
    for (std::size_t t = 0; t < tx_.size(); ++t) {
      r.phase.push_back(tx_[t].phase);
      r.reason.push_back(tx_[t].reason);
      r.abort_at.push_back(tx_[t].abort_at);
      r.blocked.push_back(tx_[t].phase == Phase::Running && tx_[t].blocked);
      if (tx_[t].phase == Phase::Forced) {
        if (r.scripted[t] != TxnStatus::Aborted) r.counted = true;
        if (!r.first_abort || tx_[t].abort_at < *r.first_abort) r.first_abort = tx_[t].abort_at;
      }
    }
    r.executed = std::move(exec_);
    r.deferred = deferred_;
    return r;
  }

 private:
  enum class Step : std::uint8_t { Done, Wait, Aborted };

  struct Txn {
    Phase phase = Phase::Running;
    AbortReason reason = AbortReason::None;
    std::size_t abort_at = 0;
    std::int64_t ts = 0;          // script index of first event
    std::int64_t start = -1;      // clock at first processed event
    std::int64_t commit_at = -1;  // clock at commit
    bool blocked = false;
    int wait_on = -1;
    std::deque<std::size_t> pending;
    std::vector<std::uint16_t> rs, ws;              // object sets
    std::vector<std::int64_t> first_write;          // clock of first write, by object
    std::vector<std::uint16_t> depends;             // uncommitted writers read from
    std::int64_t lb = 0, ub = kInfinity, cts = -1;
    std::vector<std::uint16_t> before, after;       // MaaT order constraints
  };

  struct Version {
    std::uint16_t writer;
    std::int64_t at;  // clock of install
  };

  struct Obj {
    // In-place view: writes of live transactions, in execution order.
    std::vector<std::uint16_t> inplace;
    // Installed versions (buffered protocols install at commit).
    std::vector<Version> installed;
    // Locks.
    int xlock = -1;
    std::vector<std::uint16_t> slocks;
    // Accesses by live transactions: (txn, write, version writer read).
    struct Access {
      std::uint16_t txn;
      bool write;
      std::uint16_t read_from;
    };
    std::vector<Access> accesses;
  };

  ProtocolId p_;
  const Script& s_;
  SimulateOptions opt_;
  std::vector<Txn> tx_;
  std::vector<Obj> ob_;
  std::vector<Ev> exec_;
  std::deque<std::uint16_t> ready_;
  std::vector<std::pair<std::uint16_t, std::uint16_t>> rw_;  // reader -> writer
  std::int64_t clock_ = 0;
  bool deferred_ = false;

  bool buffered() const {
    return p_ == ProtocolId::OCC || p_ == ProtocolId::MaaT || p_ == ProtocolId::SSI ||
           p_ == ProtocolId::WSI;
  }
  bool locking() const { return p_ == ProtocolId::NoWait2PL || p_ == ProtocolId::WaitDie2PL; }

  static bool contains(const std::vector<std::uint16_t>& v, std::uint16_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  }
  static void add(std::vector<std::uint16_t>& v, std::uint16_t x) {
    if (!contains(v, x)) v.push_back(x);
  }

  void init() {
    tx_.assign(static_cast<std::size_t>(s_.txns), Txn{});
    ob_.assign(static_cast<std::size_t>(s_.objs), Obj{});
    for (auto& t : tx_) t.first_write.assign(static_cast<std::size_t>(s_.objs), -1);
    std::vector<bool> seen(static_cast<std::size_t>(s_.txns), false);
    for (std::size_t i = 0; i < s_.events.size(); ++i) {
      auto t = s_.events[i].txn;
      if (!seen[t]) {
        seen[t] = true;
        tx_[t].ts = static_cast<std::int64_t>(i);
      }
    }
    exec_.clear();
    ready_.clear();
    rw_.clear();
    deferred_ = false;
    clock_ = 0;
  }

  bool live(std::uint16_t t) const { return tx_[t].phase == Phase::Running || tx_[t].phase == Phase::Committed; }
  bool running(std::uint16_t t) const { return tx_[t].phase == Phase::Running; }
  bool committed(std::uint16_t t) const { return tx_[t].phase == Phase::Committed; }

  std::uint16_t expected_version(std::uint16_t obj) const {
    const auto& v = ob_[obj].inplace;
    return v.empty() ? kInitial : v.back();
  }

  // Runs pending events of ready transactions until nothing can progress.
  void drain() {
    while (!ready_.empty()) {
      std::uint16_t t = ready_.front();
      ready_.pop_front();
      Txn& tx = tx_[t];
      while (tx.phase == Phase::Running && !tx.blocked && !tx.pending.empty()) {
        std::size_t i = tx.pending.front();
        Step st = attempt(i);
        if (st != Step::Done) break;
        tx.pending.pop_front();
      }
    }
  }

  void wake(std::uint16_t holder) {
    std::vector<std::uint16_t> waiters;
    for (std::uint16_t t = 0; t < tx_.size(); ++t) {
      if (tx_[t].phase == Phase::Running && tx_[t].blocked && tx_[t].wait_on == holder) waiters.push_back(t);
    }
    std::sort(waiters.begin(), waiters.end(), [&](auto a, auto b) { return tx_[a].ts < tx_[b].ts; });
    for (auto w : waiters) {
      tx_[w].blocked = false;
      tx_[w].wait_on = -1;
      ready_.push_back(w);
    }
  }

  void terminate(std::uint16_t t, Phase phase, AbortReason why, std::size_t at) {
    Txn& tx = tx_[t];
    tx.phase = phase;
    ++clock_;
    if (phase == Phase::Forced) {
      tx.reason = why;
      tx.abort_at = at;
      tx.pending.clear();
      tx.blocked = false;
      tx.wait_on = -1;
    }
    if (phase == Phase::Committed) {
      tx.commit_at = clock_;
      if (buffered()) {
        for (auto o : tx.ws) {
          ob_[o].installed.push_back(Version{t, clock_});
          exec_.push_back(Ev{EventKind::Write, t, o});
        }
      }
      exec_.push_back(Ev{EventKind::Commit, t, 0});
    } else {
      exec_.push_back(Ev{EventKind::Abort, t, 0});
      for (auto& o : ob_) {
        std::erase(o.inplace, t);
        std::erase_if(o.installed, [&](const Version& v) { return v.writer == t; });
        std::erase_if(o.accesses, [&](const Obj::Access& a) { return a.txn == t; });
      }
    }
    for (auto& o : ob_) {
      if (o.xlock == t) o.xlock = -1;
      std::erase(o.slocks, t);
    }
    if (phase != Phase::Committed && (p_ == ProtocolId::MVTO)) cascade(t, at);
    wake(t);
  }

  void force_abort(std::uint16_t t, AbortReason why, std::size_t at) {
    if (tx_[t].phase != Phase::Running) return;
    terminate(t, Phase::Forced, why, at);
  }

  void cascade(std::uint16_t writer, std::size_t at) {
    for (std::uint16_t t = 0; t < tx_.size(); ++t) {
      if (running(t) && contains(tx_[t].depends, writer)) force_abort(t, AbortReason::CascadingAbort, at);
    }
  }

  Step wait_for(std::uint16_t t, std::uint16_t holder, std::size_t at) {
    Txn& tx = tx_[t];
    deferred_ = true;
    tx.blocked = true;
    tx.wait_on = holder;
    // Deadlock: follow the wait chain from the holder.
    std::vector<std::uint16_t> chain{t};
    int cur = holder;
    while (cur >= 0 && running(static_cast<std::uint16_t>(cur)) && tx_[cur].blocked) {
      if (cur == t) break;
      chain.push_back(static_cast<std::uint16_t>(cur));
      cur = tx_[cur].wait_on;
      if (chain.size() > tx_.size()) break;
    }
    if (cur == t) {
      std::uint16_t victim = *std::max_element(chain.begin(), chain.end(),
                                               [&](auto a, auto b) { return tx_[a].ts < tx_[b].ts; });
      force_abort(victim, AbortReason::Deadlock, at);
      if (victim == t) return Step::Aborted;
      if (!tx.blocked) return Step::Wait;  // woken; retried from the ready queue
    }
    return Step::Wait;
  }

  void record_access(std::uint16_t t, std::uint16_t obj, bool write, std::uint16_t from) {
    ob_[obj].accesses.push_back(Obj::Access{t, write, from});
  }

  Step attempt(std::size_t i) {
    const Ev& e = s_.events[i];
    ++clock_;
    if (tx_[e.txn].start < 0) tx_[e.txn].start = clock_;
    switch (e.kind) {
      case EventKind::Read: return read(e.txn, e.obj, i);
      case EventKind::Write: return write(e.txn, e.obj, i);
      case EventKind::Commit: return commit(e.txn, i);
      default: return Step::Done;
    }
  }

  // Version a buffered protocol serves to t.
  std::uint16_t served_buffered(std::uint16_t t, std::uint16_t obj) const {
    if (contains(tx_[t].ws, obj)) return t;
    const auto& inst = ob_[obj].installed;
    bool snapshot = p_ == ProtocolId::SSI || p_ == ProtocolId::WSI;
    for (auto it = inst.rbegin(); it != inst.rend(); ++it) {
      if (!snapshot || it->at < tx_[t].start) return it->writer;
    }
    return kInitial;
  }

  std::int64_t version_ts(std::uint16_t writer) const { return writer == kInitial ? -1 : tx_[writer].ts; }

  Step read(std::uint16_t t, std::uint16_t obj, std::size_t at) {
    Obj& o = ob_[obj];
    std::uint16_t expected = expected_version(obj);
    switch (p_) {
      case ProtocolId::NoWait2PL:
      case ProtocolId::WaitDie2PL: {
        if (o.xlock >= 0 && o.xlock != t) {
          if (p_ == ProtocolId::NoWait2PL) return abort_self(t, AbortReason::LockConflict, at);
          auto holder = static_cast<std::uint16_t>(o.xlock);
          if (tx_[t].ts < tx_[holder].ts) return wait_for(t, holder, at);
          return abort_self(t, AbortReason::WaitDie, at);
        }
        add(o.slocks, t);
        break;
      }
      case ProtocolId::TO: {
        if (expected != kInitial && expected != t && running(expected)) {
          return abort_self(t, AbortReason::UncommittedAccess, at);
        }
        for (const auto& a : o.accesses) {
          if (a.write && tx_[a.txn].ts > tx_[t].ts) return abort_self(t, AbortReason::ReadTooLate, at);
        }
        break;
      }
      case ProtocolId::MVTO: {
        std::uint16_t served = kInitial;
        std::int64_t best = -1;
        for (auto w : o.inplace) {
          std::int64_t wts = version_ts(w);
          if (wts <= tx_[t].ts && wts >= best) {
            best = wts;
            served = w;
          }
        }
        if (served != expected) return abort_self(t, AbortReason::VersionMismatch, at);
        if (served != kInitial && served != t && running(served)) add(tx_[t].depends, served);
        break;
      }
      case ProtocolId::OCC:
      case ProtocolId::MaaT:
      case ProtocolId::SSI:
      case ProtocolId::WSI: {
        std::uint16_t served = served_buffered(t, obj);
        if (served != expected) {
          bool dirty = expected != kInitial && expected != t && running(expected);
          return abort_self(t, dirty || p_ == ProtocolId::OCC || p_ == ProtocolId::MaaT
                                   ? AbortReason::VersionMismatch
                                   : AbortReason::SnapshotStale,
                            at);
        }
        if (p_ == ProtocolId::MaaT) {
          if (served != kInitial && served != t) tx_[t].lb = std::max(tx_[t].lb, tx_[served].cts + 1);
          for (std::uint16_t u = 0; u < tx_.size(); ++u) {
            if (u != t && running(u) && contains(tx_[u].ws, obj)) {
              add(tx_[t].before, u);
              add(tx_[u].after, t);
            }
          }
        }
        break;
      }
    }
    add(tx_[t].rs, obj);
    record_access(t, obj, false, expected);
    if (!(buffered() && expected == t)) exec_.push_back(Ev{EventKind::Read, t, obj});
    return Step::Done;
  }

  Step write(std::uint16_t t, std::uint16_t obj, std::size_t at) {
    Obj& o = ob_[obj];
    switch (p_) {
      case ProtocolId::NoWait2PL:
      case ProtocolId::WaitDie2PL: {
        std::vector<std::uint16_t> holders;
        if (o.xlock >= 0 && o.xlock != t) holders.push_back(static_cast<std::uint16_t>(o.xlock));
        for (auto h : o.slocks) {
          if (h != t) holders.push_back(h);
        }
        if (!holders.empty()) {
          if (p_ == ProtocolId::NoWait2PL) return abort_self(t, AbortReason::LockConflict, at);
          bool older = std::all_of(holders.begin(), holders.end(),
                                   [&](auto h) { return tx_[t].ts < tx_[h].ts; });
          if (!older) return abort_self(t, AbortReason::WaitDie, at);
          auto youngest = *std::max_element(holders.begin(), holders.end(),
                                            [&](auto a, auto b) { return tx_[a].ts < tx_[b].ts; });
          return wait_for(t, youngest, at);
        }
        o.xlock = t;
        break;
      }
      case ProtocolId::TO: {
        for (auto w : o.inplace) {
          if (w != t && running(w)) return abort_self(t, AbortReason::UncommittedAccess, at);
        }
        for (const auto& a : o.accesses) {
          if (tx_[a.txn].ts > tx_[t].ts) {
            return abort_self(t, a.write ? AbortReason::WriteTooLate : AbortReason::ReadTooLate, at);
          }
        }
        break;
      }
      case ProtocolId::MVTO: {
        for (auto w : o.inplace) {
          if (w != t && running(w)) return wait_for(t, w, at);
        }
        for (const auto& a : o.accesses) {
          if (!a.write && a.txn != t && tx_[a.txn].ts > tx_[t].ts && (a.read_from == t || version_ts(a.read_from) < tx_[t].ts)) {
            return abort_self(t, AbortReason::LateWrite, at);
          }
        }
        for (auto w : o.inplace) {
          if (version_ts(w) > tx_[t].ts) return abort_self(t, AbortReason::VersionOrder, at);
        }
        break;
      }
      default: break;
    }
    if (buffered()) {
      for (auto w : o.inplace) {
        if (w != t && running(w)) return abort_self(t, AbortReason::DirtyWrite, at);
      }
    }
    switch (p_) {
      case ProtocolId::MaaT: {
        for (const auto& a : o.accesses) {
          if (!a.write && a.txn != t && running(a.txn)) {
            add(tx_[t].after, a.txn);
            add(tx_[a.txn].before, t);
          }
        }
        break;
      }
      case ProtocolId::SSI: {
        if (!opt_.track_rw) break;
        for (const auto& a : o.accesses) {
          if (a.write || a.txn == t) continue;
          const Txn& r = tx_[a.txn];
          if (r.phase == Phase::Committed && r.commit_at < tx_[t].start) continue;
          rw_.emplace_back(a.txn, t);
          if (Step st = check_pivot(t, a.txn, at); st == Step::Aborted) return st;
        }
        break;
      }
      default: break;
    }
    add(tx_[t].ws, obj);
    if (tx_[t].first_write[obj] < 0) tx_[t].first_write[obj] = clock_;
    std::erase(o.inplace, t);
    o.inplace.push_back(t);
    record_access(t, obj, true, kInitial);
    if (!buffered()) exec_.push_back(Ev{EventKind::Write, t, obj});
    return Step::Done;
  }

  // Inbound and outbound rw edges whose other ends are not aborted.
  bool pivot(std::uint16_t x) const {
    bool in = false, out = false;
    for (auto [r, w] : rw_) {
      if (w == x && r != x && live(r)) in = true;
      if (r == x && w != x && live(w)) out = true;
    }
    return in && out;
  }

  // rw edge reader -> writer just added; writer is the requester.
  Step check_pivot(std::uint16_t writer, std::uint16_t reader, std::size_t at) {
    for (std::uint16_t x : {writer, reader}) {
      if (!pivot(x)) continue;
      if (running(x)) {
        force_abort(x, AbortReason::ConsecutiveRw, at);
      } else {
        force_abort(writer, AbortReason::ConsecutiveRw, at);
      }
      if (!running(writer)) return Step::Aborted;
    }
    return Step::Done;
  }

  Step abort_self(std::uint16_t t, AbortReason why, std::size_t at) {
    force_abort(t, why, at);
    return Step::Aborted;
  }

  bool committed_during(std::uint16_t u, std::uint16_t t) const {
    return u != t && committed(u) && tx_[u].commit_at > tx_[t].start;
  }

  // Commit-time rules shared with end-of-history validation.
  AbortReason validate(std::uint16_t t) {
    Txn& tx = tx_[t];
    switch (p_) {
      case ProtocolId::OCC:
      case ProtocolId::WSI: {
        for (std::uint16_t u = 0; u < tx_.size(); ++u) {
          if (!committed_during(u, t)) continue;
          for (auto o : tx.rs) {
            if (contains(tx_[u].ws, o)) return AbortReason::ValidationFailed;
          }
        }
        return AbortReason::None;
      }
      case ProtocolId::SSI: {
        for (std::uint16_t u = 0; u < tx_.size(); ++u) {
          if (!committed_during(u, t)) continue;
          for (auto o : tx.ws) {
            if (contains(tx_[u].ws, o)) return AbortReason::FirstCommitterWins;
          }
        }
        if (opt_.track_rw && pivot(t)) return AbortReason::ConsecutiveRw;
        return AbortReason::None;
      }
      case ProtocolId::MaaT: {
        auto [lb, ub] = maat_interval(t);
        return lb < ub ? AbortReason::None : AbortReason::EmptyInterval;
      }
      default: return AbortReason::None;
    }
  }

  std::pair<std::int64_t, std::int64_t> maat_interval(std::uint16_t t) const {
    const Txn& tx = tx_[t];
    std::int64_t lb = tx.lb, ub = tx.ub;
    for (auto o : tx.ws) {
      for (const auto& a : ob_[o].accesses) {
        if (a.txn != t && committed(a.txn)) lb = std::max(lb, tx_[a.txn].cts + 1);
      }
    }
    for (auto u : tx.before) {
      if (committed(u)) ub = std::min(ub, tx_[u].cts);
    }
    for (auto u : tx.after) {
      if (committed(u)) lb = std::max(lb, tx_[u].cts + 1);
    }
    return {lb, ub};
  }

  Step commit(std::uint16_t t, std::size_t at) {
    Txn& tx = tx_[t];
    if (p_ == ProtocolId::MVTO) {
      for (auto w : tx.depends) {
        if (running(w)) return wait_for(t, w, at);
      }
    }
    if (AbortReason why = validate(t); why != AbortReason::None) return abort_self(t, why, at);
    if (p_ == ProtocolId::MaaT) {
      auto [lb, ub] = maat_interval(t);
      tx.cts = lb;
      for (auto u : tx.before) {
        if (running(u)) tx_[u].lb = std::max(tx_[u].lb, tx.cts + 1);
      }
      for (auto u : tx.after) {
        if (running(u)) tx_[u].ub = std::min(tx_[u].ub, tx.cts);
      }
      (void)ub;
    }
    terminate(t, Phase::Committed, AbortReason::None, at);
    return Step::Done;
  }

  // Transactions without a terminal are validated in timestamp order as if
  // committing at the end, then returned to the running state.
  void end_of_history() {
    if (!buffered()) return;
    std::vector<std::uint16_t> order;
    for (std::uint16_t t = 0; t < tx_.size(); ++t) {
      if (running(t) && !tx_[t].blocked) order.push_back(t);
    }
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return tx_[a].ts < tx_[b].ts; });
    std::size_t mark = exec_.size();
    std::vector<std::uint16_t> provisional;
    for (auto t : order) {
      if (running(t) && commit(t, s_.events.size()) == Step::Done) provisional.push_back(t);
    }
    for (auto t : provisional) tx_[t].phase = Phase::Running;
    exec_.resize(mark);
  }
};

inline Result replay(ProtocolId p, const Script& s, SimulateOptions opt = {}) {
  return Replay(p, s, opt).run();
}

// Committed projection of the executed events as a kernel trace.
inline kernel::Trace committed_projection(const Result& r, int objs) {
  kernel::Trace t;
  t.terms.resize(r.phase.size());
  std::vector<std::uint32_t> writes(static_cast<std::size_t>(objs), 0);
  std::uint32_t pos = 0;
  for (const auto& e : r.executed) {
    if (r.phase[e.txn] != Phase::Committed) continue;
    if (e.kind == EventKind::Commit) {
      t.terms[e.txn] = Terminal{TxnStatus::Committed, pos++};
      continue;
    }
    if (e.kind == EventKind::Abort) continue;
    kernel::Op op;
    op.txn = e.txn;
    op.obj = e.obj;
    op.write = e.kind == EventKind::Write;
    op.pos = pos++;
    op.slot = op.write ? ++writes[e.obj] : writes[e.obj];
    t.ops.push_back(op);
  }
  // Transactions outside the projection take no part in any edge.
  for (std::size_t i = 0; i < r.phase.size(); ++i) {
    if (r.phase[i] != Phase::Committed) t.terms[i] = Terminal{TxnStatus::Aborted, 0};
  }
  return t;
}

inline bool projection_cyclic(const Result& r, int objs) {
  kernel::Trace t = committed_projection(r, objs);
  AnalyzeOptions opt;
  opt.abort_policy = AbortPolicy::KeepAborted;
  return !kernel::analyze(t, opt).anomalies.empty();
}

}  // namespace sim

inline ProtocolDecision simulate(ProtocolId p, const History& h, SimulateOptions opt = {}) {
  std::vector<TxnId> ids;
  sim::Script s = sim::from_history(h, &ids);
  sim::Result r = sim::replay(p, s, opt);
  ProtocolDecision d;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (r.phase[t] == sim::Phase::Forced) {
      d.aborted_txns.insert(ids[t]);
      d.reasons[ids[t]] = std::string(to_string(r.reason[t]));
    }
    if (r.phase[t] == sim::Phase::Committed) d.committed_txns.insert(ids[t]);
    if (r.blocked[t]) d.blocked_txns.insert(ids[t]);
  }
  d.first_abort_position = r.first_abort;
  d.counted = r.counted;
  return d;
}

// True when the transactions p commits on h form a cycle-free projection.
inline bool committed_projection_acyclic(ProtocolId p, const History& h, SimulateOptions opt = {}) {
  sim::Script s = sim::from_history(h);
  return !sim::projection_cyclic(sim::replay(p, s, opt), s.objs);
}

struct RollbackStats {
  std::uint64_t N = 0;
  std::uint64_t N_true = 0;
  std::uint64_t N_alg = 0;
  // Counted rollbacks on histories without a cycle.
  std::uint64_t N_false = 0;
  // Cyclic histories without a forced abort, and those among them whose
  // cycles are not undone by the history's own aborts.
  std::uint64_t unforced_cyclic = 0;
  std::uint64_t missed = 0;
  // Missed histories in which some operation was deferred.
  std::uint64_t missed_deferred = 0;
  // Histories whose committed projection is cyclic.
  std::uint64_t audit_violations = 0;
  // Histories where some operation was deferred past the end.
  std::uint64_t blocked = 0;
  // Transaction-level counters.
  std::uint64_t txns = 0;
  std::uint64_t txns_in_cycles = 0;
  std::uint64_t txns_forced = 0;

  double TRR() const { return N ? static_cast<double>(N_true) / static_cast<double>(N) : 0.0; }
  double R_alg() const { return N ? static_cast<double>(N_alg) / static_cast<double>(N) : 0.0; }
  double FRR() const { return N ? static_cast<double>(N_false) / static_cast<double>(N) : 0.0; }
  double txn_TRR() const { return txns ? static_cast<double>(txns_in_cycles) / static_cast<double>(txns) : 0.0; }
  double txn_R_alg() const { return txns ? static_cast<double>(txns_forced) / static_cast<double>(txns) : 0.0; }
  double txn_FRR() const { return txn_R_alg() - txn_TRR(); }

  void merge(const RollbackStats& o) {
    N += o.N;
    N_true += o.N_true;
    N_alg += o.N_alg;
    N_false += o.N_false;
    unforced_cyclic += o.unforced_cyclic;
    missed += o.missed;
    missed_deferred += o.missed_deferred;
    audit_violations += o.audit_violations;
    blocked += o.blocked;
    txns += o.txns;
    txns_in_cycles += o.txns_in_cycles;
    txns_forced += o.txns_forced;
  }

  bool operator==(const RollbackStats&) const = default;
};

struct RollbackOptions {
  int shards = 1;
  int threads = 1;
  bool canonical = true;
  AnalyzeOptions analyze;
  SimulateOptions simulate;
  // Keep at most this many audit violations / missed histories per protocol.
  std::size_t keep_examples = 0;
  std::function<void(std::uint64_t)> progress;  // histories done, called from shard 0
};

struct RollbackRun {
  std::vector<ProtocolId> protocols;
  std::vector<RollbackStats> stats;
  std::vector<std::vector<Schedule>> violations;
  std::vector<std::vector<Schedule>> misses;
};

namespace detail {

inline void rollback_one(const Schedule& s, int n, std::uint64_t w, const std::vector<ProtocolId>& ps,
                         const RollbackOptions& opt, RollbackRun& out) {
  sim::Script script = sim::from_schedule(s);
  script.txns = n;
  kernel::Trace trace = sim::trace_of(script);
  kernel::Analysis a = kernel::analyze(trace, opt.analyze);
  bool cyclic = !a.anomalies.empty();
  auto scripted = sim::scripted_outcome(script);
  auto aborted = [&](std::uint16_t t) { return scripted[t] == TxnStatus::Aborted; };
  // A 1-cycle is undone when its target aborts; a longer cycle when any member does.
  bool undone = std::all_of(a.anomalies.begin(), a.anomalies.end(), [&](const kernel::Anomaly& an) {
    if (an.edges.size() == 1) return aborted(an.edges.front().dst);
    return std::any_of(an.edges.begin(), an.edges.end(), [&](const kernel::Edge& e) { return aborted(e.src); });
  });
  std::uint64_t in_cycles = 0;
  if (cyclic) {
    std::uint32_t mask = 0;
    for (const auto& an : a.anomalies) {
      for (const auto& e : an.edges) mask |= (1u << e.src) | (1u << e.dst);
    }
    in_cycles = static_cast<std::uint64_t>(__builtin_popcount(mask));
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    sim::Result r = sim::replay(ps[k], script, opt.simulate);
    RollbackStats& st = out.stats[k];
    st.N += w;
    st.txns += w * static_cast<std::uint64_t>(n);
    st.txns_in_cycles += w * in_cycles;
    if (cyclic) st.N_true += w;
    std::uint64_t forced = 0;
    for (std::size_t t = 0; t < r.phase.size(); ++t) {
      if (r.phase[t] == sim::Phase::Forced && r.scripted[t] != TxnStatus::Aborted) ++forced;
    }
    st.txns_forced += w * forced;
    if (r.counted) {
      st.N_alg += w;
      if (!cyclic) st.N_false += w;
    }
    if (cyclic && !r.any_forced()) st.unforced_cyclic += w;
    if (cyclic && !r.any_forced() && !undone) {
      st.missed += w;
      if (r.deferred) st.missed_deferred += w;
      if (out.misses[k].size() < opt.keep_examples) out.misses[k].push_back(s);
    }
    if (std::find(r.blocked.begin(), r.blocked.end(), true) != r.blocked.end()) st.blocked += w;
    if (sim::projection_cyclic(r, script.objs)) {
      st.audit_violations += w;
      if (out.violations[k].size() < opt.keep_examples) out.violations[k].push_back(s);
    }
  }
}

}  // namespace detail

// Replays every history of spec through each protocol. Protocol rules depend
// on event order only, never on names, so relabeling orbits are visited once.
inline RollbackRun run_rollback(const HistorySpec& spec, const std::vector<ProtocolId>& ps,
                                const RollbackOptions& opt = {}) {
  const int shards = std::max(1, opt.shards);
  std::vector<RollbackRun> parts(static_cast<std::size_t>(shards));
  for (auto& part : parts) {
    part.protocols = ps;
    part.stats.assign(ps.size(), RollbackStats{});
    part.violations.assign(ps.size(), {});
    part.misses.assign(ps.size(), {});
  }
  detail::run_shards(shards, opt.threads, [&](int shard) {
    RollbackRun& acc = parts[static_cast<std::size_t>(shard)];
    std::uint64_t index = 0;
    std::uint64_t done = 0;
    for_each_op_sequence(spec, opt.canonical, [&](const std::vector<OpSymbol>& ops, std::uint64_t w) {
      if (index++ % static_cast<std::uint64_t>(shards) != static_cast<std::uint64_t>(shard)) return true;
      for_each_schedule(ops, spec.n, spec.mode, [&](const Schedule& s) {
        detail::rollback_one(s, spec.n, w, ps, opt, acc);
        return true;
      });
      if (opt.progress && shard == 0 && (++done & 0xfff) == 0) opt.progress(acc.stats.front().N);
      return true;
    });
  });
  RollbackRun total = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      total.stats[k].merge(parts[i].stats[k]);
      for (auto& v : parts[i].violations[k]) {
        if (total.violations[k].size() < opt.keep_examples) total.violations[k].push_back(v);
      }
      for (auto& v : parts[i].misses[k]) {
        if (total.misses[k].size() < opt.keep_examples) total.misses[k].push_back(v);
      }
    }
  }
  return total;
}

inline RollbackStats rollback_stats(const HistorySpec& spec, ProtocolId p, const RollbackOptions& opt = {}) {
  return run_rollback(spec, {p}, opt).stats.front();
}

struct AuditResult {
  std::vector<History> violations;
  std::uint64_t violation_count = 0;  // weighted by relabeling orbit
};

inline AuditResult serializability_audit(ProtocolId p, const HistorySpec& spec, std::size_t keep = 64,
                                         SimulateOptions sopt = {}) {
  RollbackOptions opt;
  opt.keep_examples = keep;
  opt.simulate = sopt;
  RollbackRun run = run_rollback(spec, {p}, opt);
  AuditResult out;
  out.violation_count = run.stats.front().audit_violations;
  for (const auto& s : run.violations.front()) out.violations.push_back(to_history(s, spec));
  return out;
}

// Concurrency-degree model over the six non-self-anomalous POP kinds.
enum class DegreeKind : std::uint8_t { RR, WCR, WCW, RCW, WW, WR, RW };
inline constexpr std::size_t kDegreeKinds = 7;

inline std::string_view to_string(DegreeKind k) {
  static constexpr std::array<std::string_view, kDegreeKinds> names = {"RR", "WCR", "WCW", "RCW",
                                                                       "WW", "WR",  "RW"};
  return names[static_cast<std::size_t>(k)];
}

using DegreeWeights = std::array<std::uint32_t, kDegreeKinds>;

// RR carries no weight unless requested.
inline constexpr DegreeWeights kDefaultDegreeWeights = {0, 1, 1, 1, 1, 1, 1};

// 2 = handled without locking or aborting, 1 = one side may proceed,
// 0 = lock wait or abort. Order: RR, WCR, WCW, RCW, WW, WR, RW.
inline std::array<std::uint8_t, kDegreeKinds> capability(ProtocolId p) {
  switch (p) {
    case ProtocolId::NoWait2PL:
    case ProtocolId::WaitDie2PL: return {2, 2, 2, 2, 0, 0, 0};
    case ProtocolId::TO: return {2, 2, 2, 2, 0, 0, 1};
    case ProtocolId::MVTO: return {2, 2, 2, 2, 1, 1, 1};
    case ProtocolId::OCC: return {2, 2, 2, 2, 0, 1, 1};
    case ProtocolId::MaaT: return {2, 2, 2, 2, 0, 1, 2};
    case ProtocolId::SSI: return {2, 2, 2, 2, 0, 1, 2};
    case ProtocolId::WSI: return {2, 2, 2, 2, 0, 1, 1};
  }
  return {};
}

struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  double value() const { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
  bool operator==(const Rational&) const = default;
};

inline Rational concurrency_degree(const std::array<std::uint8_t, kDegreeKinds>& scores,
                                   const DegreeWeights& weights = kDefaultDegreeWeights) {
  std::uint64_t num = 0, den = 0;
  for (std::size_t k = 0; k < kDegreeKinds; ++k) {
    num += static_cast<std::uint64_t>(weights[k]) * scores[k];
    den += static_cast<std::uint64_t>(weights[k]) * 2;
  }
  if (den == 0) return {0, 1};
  std::uint64_t g = std::gcd(num, den);
  if (g == 0) g = 1;
  return {num / g, den / g};
}

inline Rational concurrency_degree(ProtocolId p, const DegreeWeights& weights = kDefaultDegreeWeights) {
  return concurrency_degree(capability(p), weights);
}

}  // namespace txanomaly

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

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace txanomaly {

using TxnId = std::uint32_t;
using ObjectId = std::string;

enum class EventKind : std::uint8_t { Read, Write, Insert, Delete, Commit, Abort };

enum class Membership : std::uint8_t { Unspecified, In, NotIn };

enum class TxnStatus : std::uint8_t { Committed, Aborted, Active };

struct VersionTag {
  enum class Kind : std::uint8_t { Unborn, Visible, Dead };

  Kind kind = Kind::Visible;
  std::uint32_t index = 0;

  static VersionTag unborn() { return {Kind::Unborn, 0}; }
  static VersionTag visible(std::uint32_t i) { return {Kind::Visible, i}; }
  static VersionTag dead() { return {Kind::Dead, 0}; }

  bool operator==(const VersionTag&) const = default;

  std::string str() const {
    switch (kind) {
      case Kind::Unborn: return "unborn";
      case Kind::Dead: return "dead";
      case Kind::Visible: break;
    }
    return std::to_string(index);
  }
};

struct PredicateRef {
  std::string id;
  Membership membership = Membership::Unspecified;

  bool operator==(const PredicateRef&) const = default;
};

struct Event {
  EventKind kind = EventKind::Read;
  TxnId txn = 0;
  ObjectId object;
  VersionTag version;
  PredicateRef predicate;

  bool is_terminal() const { return kind == EventKind::Commit || kind == EventKind::Abort; }
  bool is_read() const { return kind == EventKind::Read; }
  // Insert and Delete are writes that produce a fresh or dead version.
  bool is_write() const {
    return kind == EventKind::Write || kind == EventKind::Insert || kind == EventKind::Delete;
  }

  bool operator==(const Event&) const = default;
};

enum class EnumerationMode : std::uint8_t { Interleaved, Appended };

struct HistorySpec {
  int m = 1;
  int n = 1;
  int k = 2;
  EnumerationMode mode = EnumerationMode::Interleaved;

  bool operator==(const HistorySpec&) const = default;
};

struct History {
  std::vector<Event> events;
  std::map<TxnId, TxnStatus> txn_status;
  std::optional<HistorySpec> spec;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }

  std::vector<TxnId> transactions() const {
    std::vector<TxnId> out;
    out.reserve(txn_status.size());
    for (const auto& [t, s] : txn_status) out.push_back(t);
    return out;
  }

  TxnStatus status(TxnId t) const {
    auto it = txn_status.find(t);
    return it == txn_status.end() ? TxnStatus::Active : it->second;
  }

  // Spec metadata is not part of the value.
  bool operator==(const History& o) const {
    return events == o.events && txn_status == o.txn_status;
  }
};

class HistoryError : public std::runtime_error {
 public:
  enum class Kind { Syntax, Semantic };

  HistoryError(Kind kind, std::size_t position, std::string token, const std::string& what)
      : std::runtime_error(what), kind_(kind), position_(position), token_(std::move(token)) {}

  Kind kind() const { return kind_; }
  // Character offset for syntax errors, event index for semantic errors.
  std::size_t position() const { return position_; }
  const std::string& token() const { return token_; }

 private:
  Kind kind_;
  std::size_t position_;
  std::string token_;
};

inline char event_letter(EventKind k) {
  switch (k) {
    case EventKind::Read: return 'R';
    case EventKind::Write: return 'W';
    case EventKind::Insert: return 'I';
    case EventKind::Delete: return 'D';
    case EventKind::Commit: return 'C';
    case EventKind::Abort: return 'A';
  }
  return '?';
}

inline std::string_view to_string(TxnStatus s) {
  switch (s) {
    case TxnStatus::Committed: return "committed";
    case TxnStatus::Aborted: return "aborted";
    case TxnStatus::Active: return "active";
  }
  return "?";
}

inline std::string format_event(const Event& e) {
  std::string out(1, event_letter(e.kind));
  out += std::to_string(e.txn);
  if (e.is_terminal()) return out;
  out += '[';
  out += e.object;
  if (e.predicate.membership != Membership::Unspecified) {
    out += e.predicate.membership == Membership::In ? " in " : " out ";
    out += e.predicate.id;
  }
  out += ']';
  return out;
}

inline std::string format_history(const History& h) {
  std::string out;
  for (const auto& e : h.events) {
    if (!out.empty()) out += ' ';
    out += format_event(e);
  }
  return out;
}

namespace detail {

inline HistoryError semantic_error(std::size_t index, const Event& e, const std::string& msg) {
  std::string tok = format_event(e);
  return HistoryError(HistoryError::Kind::Semantic, index, tok,
                      "event " + std::to_string(index) + " (" + tok + "): " + msg);
}

inline bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  std::vector<Event> run() {
    std::vector<Event> out;
    skip_ws();
    while (i_ < s_.size()) {
      out.push_back(event());
      std::size_t before = i_;
      skip_ws();
      if (i_ < s_.size() && i_ == before) fail(i_, "expected whitespace between events");
    }
    return out;
  }

 private:
  std::string_view s_;
  std::size_t i_ = 0;

  [[noreturn]] void fail(std::size_t at, const std::string& msg) {
    std::size_t end = at;
    while (end < s_.size() && !std::isspace(static_cast<unsigned char>(s_[end]))) ++end;
    std::string tok(s_.substr(at, end - at));
    if (tok.empty()) tok = "<end>";
    throw HistoryError(HistoryError::Kind::Syntax, at, tok,
                       "syntax error at " + std::to_string(at) + " near '" + tok + "': " + msg);
  }

  void skip_ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }

  std::string ident(const char* what) {
    std::size_t start = i_;
    while (i_ < s_.size() && ident_char(s_[i_])) ++i_;
    if (i_ == start) fail(start, std::string("expected ") + what);
    return std::string(s_.substr(start, i_ - start));
  }

  Event event() {
    std::size_t start = i_;
    Event e;
    switch (s_[i_]) {
      case 'R': e.kind = EventKind::Read; break;
      case 'W': e.kind = EventKind::Write; break;
      case 'I': e.kind = EventKind::Insert; break;
      case 'D': e.kind = EventKind::Delete; break;
      case 'C': e.kind = EventKind::Commit; break;
      case 'A': e.kind = EventKind::Abort; break;
      default: fail(start, "expected one of R W I D C A");
    }
    ++i_;
    std::size_t digits = i_;
    std::uint64_t txn = 0;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) {
      txn = txn * 10 + static_cast<std::uint64_t>(s_[i_] - '0');
      if (txn > 0xffffffffULL) fail(digits, "transaction id out of range");
      ++i_;
    }
    if (i_ == digits) fail(start, "expected transaction id");
    if (txn == 0) fail(digits, "transaction id must be positive");
    e.txn = static_cast<TxnId>(txn);
    if (e.is_terminal()) return e;
    if (i_ >= s_.size() || s_[i_] != '[') fail(start, "expected '['");
    ++i_;
    e.object = ident("object name");
    if (i_ < s_.size() && s_[i_] == ' ') {
      ++i_;
      std::size_t word = i_;
      std::string m = ident("'in' or 'out'");
      if (m == "in") {
        e.predicate.membership = Membership::In;
      } else if (m == "out") {
        e.predicate.membership = Membership::NotIn;
      } else {
        fail(word, "expected 'in' or 'out'");
      }
      if (i_ >= s_.size() || s_[i_] != ' ') fail(i_, "expected ' ' before predicate id");
      ++i_;
      e.predicate.id = ident("predicate id");
    }
    if (i_ >= s_.size() || s_[i_] != ']') fail(start, "expected ']'");
    ++i_;
    return e;
  }
};

}  // namespace detail

// Checks terminal placement and derives txn_status.
inline void derive_status(History& h) {
  h.txn_status.clear();
  std::set<TxnId> finished;
  for (std::size_t i = 0; i < h.events.size(); ++i) {
    const Event& e = h.events[i];
    if (finished.count(e.txn)) {
      throw detail::semantic_error(i, e, e.is_terminal() ? "duplicate terminal event"
                                                         : "event after terminal");
    }
    if (e.is_terminal()) {
      finished.insert(e.txn);
      h.txn_status[e.txn] = e.kind == EventKind::Commit ? TxnStatus::Committed : TxnStatus::Aborted;
    } else {
      h.txn_status.emplace(e.txn, TxnStatus::Active);
    }
  }
}

// Fills each operation's version. Objects first touched by an Insert start
// unborn; every other object starts at committed version 0.
inline History version_annotate(History h) {
  struct State {
    VersionTag current;
    std::uint32_t last_visible = 0;
  };
  std::unordered_map<ObjectId, State> state;
  for (std::size_t i = 0; i < h.events.size(); ++i) {
    Event& e = h.events[i];
    if (e.is_terminal()) continue;
    if (e.object.empty()) throw detail::semantic_error(i, e, "operation without object");
    auto it = state.find(e.object);
    if (it == state.end()) {
      State s;
      s.current = e.kind == EventKind::Insert ? VersionTag::unborn() : VersionTag::visible(0);
      it = state.emplace(e.object, s).first;
    }
    State& s = it->second;
    bool visible = s.current.kind == VersionTag::Kind::Visible;
    switch (e.kind) {
      case EventKind::Read:
        if (!visible) {
          throw detail::semantic_error(
              i, e, s.current.kind == VersionTag::Kind::Dead ? "read of dead version"
                                                             : "read of unborn version");
        }
        e.version = s.current;
        break;
      case EventKind::Write:
        if (!visible) throw detail::semantic_error(i, e, "write to object that is not visible");
        s.last_visible += 1;
        s.current = e.version = VersionTag::visible(s.last_visible);
        break;
      case EventKind::Insert:
        if (visible) throw detail::semantic_error(i, e, "insert of existing object");
        if (s.current.kind == VersionTag::Kind::Dead) s.last_visible += 1;
        s.current = e.version = VersionTag::visible(s.last_visible);
        break;
      case EventKind::Delete:
        if (!visible) throw detail::semantic_error(i, e, "delete of object that is not visible");
        s.current = e.version = VersionTag::dead();
        break;
      default: break;
    }
  }
  return h;
}

inline History make_history(std::vector<Event> events) {
  History h;
  h.events = std::move(events);
  derive_status(h);
  return version_annotate(std::move(h));
}

inline History parse_history(std::string_view text) {
  return make_history(detail::Parser(text).run());
}

}  // namespace txanomaly

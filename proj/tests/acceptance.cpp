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

// Acceptance run: one PASS/FAIL line per criterion, followed by the
// measurements behind it. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "txanomaly/anomaly.hpp"
#include "txanomaly/protocols.hpp"
#include "txanomaly/report.hpp"
#include "txanomaly/stats.hpp"

namespace {

using namespace txanomaly;

// Targets and tolerances.
constexpr double kStatsTolerancePp = 3.0;
constexpr double kTargetWAT = 62.45;
constexpr double kTargetRAT = 33.79;
constexpr double kTargetIAT = 3.76;
constexpr double kTargetSDA = 83.10;
constexpr double kTrrTolerancePp = 3.0;
constexpr double kTargetTRR = 69.82;
constexpr int kReductionSamples = 10000;

int shard_count() {
  if (const char* env = std::getenv("TXANOMALY_SHARDS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1-edge and 2-edge cycles over every edge kind and object count.
Outcome taxonomy_closure() {
  Outcome o;
  std::size_t named = 0, unreachable = 0, missing = 0;
  auto edge = [](TxnId a, TxnId b, const char* obj, PopKind k, std::size_t p, std::size_t q) {
    PopEdge e;
    e.from_txn = a;
    e.to_txn = b;
    e.object = obj;
    e.kind = k;
    e.positions = {p, q};
    return e;
  };
  auto make = [](std::vector<PopEdge> edges) {
    Cycle c;
    c.edges = std::move(edges);
    for (const auto& e : c.edges) {
      c.objects.insert(e.object);
      c.txns.insert(e.from_txn);
      c.txns.insert(e.to_txn);
    }
    return c;
  };
  for (PopKind k : kAllPopKinds) {
    if (!is_self_anomalous(k)) continue;
    AnomalyReport r = classify_cycle(make({edge(1, 2, "x", k, 0, 1)}));
    if (r.name == AnomalyName::Unclassified) {
      ++missing;
      o.detail.push_back("unnamed 1-edge cycle " + std::string(to_string(k)));
    } else {
      ++named;
    }
  }
  for (PopKind a : kAllPopKinds) {
    for (PopKind b : kAllPopKinds) {
      for (const char* second_obj : {"x", "y"}) {
        AnomalyReport r = classify_cycle(make({edge(1, 2, "x", a, 0, 1), edge(2, 1, second_obj, b, 2, 3)}));
        // A committed first edge means its source finished before the
        // second edge's target op, which then cannot close the cycle.
        if (is_committed_kind(a)) {
          if (r.name != AnomalyName::Unclassified) {
            ++missing;
            o.detail.push_back("unreachable pair named: " + r.signature());
          }
          ++unreachable;
          continue;
        }
        if (r.name == AnomalyName::Unclassified) {
          ++missing;
          o.detail.push_back("unnamed 2-edge cycle " + r.signature());
        } else {
          ++named;
        }
      }
    }
  }
  const char* surveyed[] = {
      "W1[x] W2[x] C1 C2",
      "R1[x] W2[x] C2 W1[x] C1",
      "W1[x] R2[x] A1 C2",
      "R1[x] W2[x] C2 R1[x] C1",
      "R1[x out P1] W2[x in P1] C2 R1[x in P1] C1",
      "W1[x] R2[x] W1[x] C2 C1",
      "R1[x] W2[x] W2[y] C2 R1[y] C1",
      "R1[y] R2[x] W2[x] R2[y] W2[y] C2 R3[x] W3[x] R3[z] W3[z] C3 R1[z] C1",
      "R1[x] R2[y] W3[x] C3 W4[y] C4 R2[x] R1[y] C1 C2",
      "R1[x] W2[x] C2 R3[x] W3[y] C3 R1[y] C1",
      "R1[x] R1[y] R2[y] W2[y] C2 R3[x] R3[y] C3 W1[x] C1",
      "R1[x] R2[y] W1[y] W2[x] C1 C2",
      "R1[x in P1] R2[y in P1] W1[y out P1] W2[x out P1] C1 C2",
  };
  std::size_t surveyed_ok = 0;
  for (const char* h : surveyed) {
    auto reports = detect_anomalies(parse_history(h));
    bool ok = !reports.empty() && std::none_of(reports.begin(), reports.end(), [](const AnomalyReport& r) {
      return r.name == AnomalyName::Unclassified;
    });
    surveyed_ok += ok;
    if (!ok) o.detail.push_back("surveyed history not named: " + std::string(h));
  }
  o.pass = missing == 0 && kNamedAnomalyCount >= 29 && surveyed_ok == std::size(surveyed);
  o.summary = std::to_string(named) + " reachable cycles named, " + std::to_string(unreachable) +
              " unreachable pairs Unclassified, " + std::to_string(kNamedAnomalyCount) + " named rows, " +
              std::to_string(surveyed_ok) + "/" + std::to_string(std::size(surveyed)) +
              " surveyed histories named";
  return o;
}

Outcome golden_anomalies() {
  struct Golden {
    const char* history;
    AnomalyName name;
    AnomalyClass cls;
    AnomalySubclass subclass;
  };
  const Golden rows[] = {
      {"W1[x] R2[x] A1 C2", AnomalyName::DirtyRead, AnomalyClass::RAT, AnomalySubclass::SDA},
      {"W1[x] W2[x] A1 C2", AnomalyName::DirtyWrite, AnomalyClass::WAT, AnomalySubclass::SDA},
      {"R1[x] W2[x] R1[x] C1 C2", AnomalyName::NonRepeatableRead, AnomalyClass::RAT, AnomalySubclass::SDA},
      {"R1[x] W2[x] W1[x] C1", AnomalyName::LostUpdate, AnomalyClass::WAT, AnomalySubclass::SDA},
      {"W1[x] R2[x] W1[x] C1 C2", AnomalyName::IntermediateRead, AnomalyClass::RAT, AnomalySubclass::SDA},
      {"R1[x] W2[x] W2[y] R1[y] C1 C2", AnomalyName::ReadSkew, AnomalyClass::RAT, AnomalySubclass::DDA},
      {"R1[x] R2[y] W1[y] W2[x] C1 C2", AnomalyName::WriteSkew, AnomalyClass::IAT, AnomalySubclass::DDA},
      {"W1[x] W2[x] W2[y] W1[y]", AnomalyName::FullWriteSkew, AnomalyClass::WAT, AnomalySubclass::DDA},
      {"W1[x] R2[x] W2[y] R1[y] C1 C2", AnomalyName::WriteReadSkew, AnomalyClass::RAT, AnomalySubclass::DDA},
  };
  Outcome o;
  std::size_t ok = 0;
  for (const auto& g : rows) {
    auto reports = detect_anomalies(parse_history(g.history));
    bool hit = reports.size() == 1 && reports[0].name == g.name && reports[0].cls == g.cls &&
               reports[0].subclass == g.subclass;
    ok += hit;
    std::string got;
    for (const auto& r : reports) got += (got.empty() ? "" : " | ") + r.line();
    o.detail.push_back(std::string(hit ? "ok   " : "BAD  ") + g.history + " -> " + got);
  }
  o.pass = ok == std::size(rows);
  o.summary = std::to_string(ok) + "/" + std::to_string(std::size(rows)) + " golden histories exact";
  return o;
}

Outcome reduction_properties() {
  Outcome o;
  std::mt19937_64 rng(20260101);
  std::uniform_int_distribution<int> tdist(2, 5), odist(1, 3);
  int samples = 0, tries = 0, bad_a = 0, bad_b = 0, bad_c = 0, cycles = 0;
  while (samples < kReductionSamples) {
    ++tries;
    int txns = tdist(rng);
    std::string text = oracle::random_history(rng, txns, odist(rng), txns + 4);
    History h = parse_history(text);
    bool expect = oracle::cyclic(oracle::pops(h));
    ConflictGraph g = build_graph(h);
    CycleList found = find_cycles(g, 100000);
    if (!expect) {
      if (!found.cycles.empty()) {
        ++bad_c;
        if (o.detail.size() < 5) o.detail.push_back("cycle on acyclic graph: " + text);
      }
      continue;
    }
    ++samples;
    if (found.cycles.empty()) {
      ++bad_c;
      if (o.detail.size() < 5) o.detail.push_back("cycle lost: " + text);
      continue;
    }
    for (const Cycle& c : found.cycles) {
      ++cycles;
      Cycle r = reduce_cycle(c);
      bool closed = !r.edges.empty();
      if (r.edges.size() == 1) {
        closed = is_self_anomalous(r.edges[0].kind);
      } else {
        for (std::size_t i = 0; closed && i < r.edges.size(); ++i) {
          closed = r.edges[i].to_txn == r.edges[(i + 1) % r.edges.size()].from_txn;
        }
      }
      if (!closed) {
        ++bad_c;
        if (o.detail.size() < 5) o.detail.push_back("reduced cycle not closed: " + text);
      }
      if (r.objects.size() == 1 && r.txns.size() != 2) {
        ++bad_a;
        if (o.detail.size() < 5) o.detail.push_back("single-object cycle over " + std::to_string(r.txns.size()) + " txns: " + text);
      }
      if (r.length() > 2 * r.objects.size()) {
        ++bad_b;
        if (o.detail.size() < 5) o.detail.push_back("too many edges: " + text);
      }
    }
  }
  o.pass = bad_a == 0 && bad_b == 0 && bad_c == 0;
  o.summary = std::to_string(samples) + " cyclic histories (" + std::to_string(tries) + " drawn), " +
              std::to_string(cycles) + " cycles reduced; violations a=" + std::to_string(bad_a) +
              " b=" + std::to_string(bad_b) + " c=" + std::to_string(bad_c);
  return o;
}

Outcome conflict_free_serializable() {
  Outcome o;
  AnalyzeOptions keep;
  keep.abort_policy = AbortPolicy::KeepAborted;
  std::uint64_t total = 0, committed_only = 0, counter = 0;
  enumerate({2, 2, 5, EnumerationMode::Interleaved}, [&](const History& h) {
    ++total;
    auto pops = extract_pops(h);
    bool plain = std::any_of(pops.begin(), pops.end(), [](const PopEdge& e) { return !is_committed_kind(e.kind); });
    if (plain) return true;
    ++committed_only;
    if (!detect_anomalies(h, keep).empty() || oracle::cyclic(oracle::pops(h))) {
      ++counter;
      if (o.detail.size() < 5) o.detail.push_back("counterexample: " + format_history(h));
    }
    return true;
  });
  o.pass = counter == 0 && committed_only > 0;
  o.summary = std::to_string(total) + " histories, " + std::to_string(committed_only) +
              " with only committed-order edges, " + std::to_string(counter) + " counterexamples";
  return o;
}

struct ModeStats {
  EnumerationMode mode;
  AnomalyDistribution dist;
  EdgeDistribution edges;
  double seconds = 0;
};

double pct(std::uint64_t n, std::uint64_t d) { return percent(n, d); }

Outcome statistics_reproduction() {
  Outcome o;
  std::vector<ModeStats> runs;
  for (auto mode : {EnumerationMode::Interleaved, EnumerationMode::Appended}) {
    HistorySpec spec{3, 4, 7, mode};
    StatsOptions opt;
    opt.shards = shard_count();
    opt.threads = opt.shards;
    auto t0 = std::chrono::steady_clock::now();
    StatsCounts c = collect_stats(spec, opt);
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    runs.push_back({mode, make_distribution(spec, c, opt.selection), make_edge_distribution(spec, c), sec});
  }
  bool any_within = false, orderings = true;
  for (const auto& r : runs) {
    const auto& d = r.dist;
    double wat = pct(d.class_totals[1], d.cyclic), rat = pct(d.class_totals[0], d.cyclic);
    double iat = pct(d.class_totals[2], d.cyclic), sda = pct(d.subclass_totals[0], d.cyclic);
    bool within = std::fabs(wat - kTargetWAT) <= kStatsTolerancePp && std::fabs(rat - kTargetRAT) <= kStatsTolerancePp &&
                  std::fabs(iat - kTargetIAT) <= kStatsTolerancePp && std::fabs(sda - kTargetSDA) <= kStatsTolerancePp;
    any_within = any_within || within;
    bool top = d.anomalies.size() >= 2 && d.anomalies[0].name == "Dirty Write" && d.anomalies[0].count > d.anomalies[1].count;
    bool cls = d.class_totals[1] > d.class_totals[0] && d.class_totals[0] > d.class_totals[2];
    bool sub = d.subclass_totals[0] > d.subclass_totals[1] && d.subclass_totals[1] > d.subclass_totals[2];
    std::array<std::uint64_t, 3> fam{};  // WR, WW, RW families on the selected cycles
    std::array<std::uint64_t, 3> base{};
    for (PopKind k : kAllPopKinds) {
      std::uint64_t n = r.edges.count(EdgeScope::Cycle, k);
      fam[static_cast<std::size_t>(family(k))] += n;
      if (k == PopKind::WR || k == PopKind::WW || k == PopKind::RW) base[static_cast<std::size_t>(family(k))] += n;
    }
    bool edges = fam[1] > fam[0] && fam[0] > fam[2];
    orderings = orderings && top && cls && sub && edges;
    std::uint64_t et = r.edges.total(EdgeScope::Cycle);
    o.detail.push_back(std::string(to_string(r.mode)) + ": " + std::to_string(d.histories) + " histories, " +
                       std::to_string(d.cyclic) + " cyclic (" + format_percent(d.cyclic, d.histories) + "%), " +
                       fmt("%.0fs", r.seconds));
    o.detail.push_back("  WAT " + format_percent(d.class_totals[1], d.cyclic) + " (target " + fmt("%.2f", kTargetWAT) +
                       ")  RAT " + format_percent(d.class_totals[0], d.cyclic) + " (" + fmt("%.2f", kTargetRAT) +
                       ")  IAT " + format_percent(d.class_totals[2], d.cyclic) + " (" + fmt("%.2f", kTargetIAT) +
                       ")  SDA " + format_percent(d.subclass_totals[0], d.cyclic) + " (" + fmt("%.2f", kTargetSDA) +
                       ")  within " + fmt("%.0fpp", kStatsTolerancePp) + ": " + (within ? "yes" : "no"));
    o.detail.push_back("  DDA " + format_percent(d.subclass_totals[1], d.cyclic) + "  MDA " +
                       format_percent(d.subclass_totals[2], d.cyclic) + "  top " + d.anomalies[0].name + " " +
                       d.anomalies[0].percent_text() + "%, next " + d.anomalies[1].name + " " +
                       d.anomalies[1].percent_text() + "%");
    o.detail.push_back("  cycle edges by family WW " + format_percent(fam[1], et) + " WR " + format_percent(fam[0], et) +
                       " RW " + format_percent(fam[2], et) + "; plain kinds only WW " + format_percent(base[1], et) +
                       " WR " + format_percent(base[0], et) + " RW " + format_percent(base[2], et));
    o.detail.push_back(std::string("  orderings: Dirty Write top ") + (top ? "yes" : "no") + ", WAT>RAT>IAT " +
                       (cls ? "yes" : "no") + ", SDA>DDA>MDA " + (sub ? "yes" : "no") + ", WW>WR>RW " +
                       (edges ? "yes" : "no"));
  }
  if (!any_within) {
    o.detail.push_back("mode-sensitivity report: no enumeration mode reaches the aggregates within " +
                       fmt("%.0f", kStatsTolerancePp) + "pp");
    const auto& a = runs[0].dist;
    const auto& b = runs[1].dist;
    for (std::size_t i = 0; i < 3; ++i) {
      o.detail.push_back("  " + std::string(to_string(kClasses[i])) + ": interleaved " +
                         format_percent(a.class_totals[i], a.cyclic) + ", appended " +
                         format_percent(b.class_totals[i], b.cyclic) + ", shift " +
                         fmt("%+.2fpp", pct(b.class_totals[i], b.cyclic) - pct(a.class_totals[i], a.cyclic)));
    }
    for (std::size_t j = 0; j < 3; ++j) {
      o.detail.push_back("  " + std::string(to_string(kSubclasses[j])) + ": interleaved " +
                         format_percent(a.subclass_totals[j], a.cyclic) + ", appended " +
                         format_percent(b.subclass_totals[j], b.cyclic) + ", shift " +
                         fmt("%+.2fpp", pct(b.subclass_totals[j], b.cyclic) - pct(a.subclass_totals[j], a.cyclic)));
    }
    o.detail.push_back("  cyclic share: interleaved " + format_percent(a.cyclic, a.histories) + ", appended " +
                       format_percent(b.cyclic, b.histories));
  }
  o.pass = orderings;
  o.summary = std::string("orderings ") + (orderings ? "hold" : "fail") + " in both modes; aggregates " +
              (any_within ? "within" : "outside") + " " + fmt("%.0fpp", kStatsTolerancePp) +
              (any_within ? " in at least one mode" : " in both modes (mode-sensitivity report emitted)");
  return o;
}

Outcome rollback_soundness() {
  Outcome o;
  RollbackOptions opt;
  opt.shards = shard_count();
  opt.threads = opt.shards;
  opt.keep_examples = 2;
  std::vector<ProtocolId> ps(kAuditedProtocols.begin(), kAuditedProtocols.end());
  RollbackRun run = run_rollback({2, 2, 6}, ps, opt);
  bool ok = true;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& s = run.stats[i];
    bool good = s.missed == 0 && s.audit_violations == 0;
    ok = ok && good;
    std::string line = std::string(good ? "ok   " : "BAD  ") + std::string(to_string(ps[i])) + ": cyclic " +
                       std::to_string(s.N_true) + ", cyclic without forced abort " + std::to_string(s.unforced_cyclic) +
                       ", of which not undone by scripted aborts " + std::to_string(s.missed) + " (" +
                       std::to_string(s.missed_deferred) + " after a wait), audit violations " +
                       std::to_string(s.audit_violations);
    o.detail.push_back(line);
    for (const auto& m : run.misses[i]) o.detail.push_back("     e.g. " + format_history(to_history(m)));
  }
  o.pass = ok;
  o.summary = std::string("H(2,2,6): ") + (ok ? "every" : "not every") +
              " audited protocol aborts in each cyclic history; committed projections audited";
  return o;
}

Outcome rollback_reproduction() {
  Outcome o;
  std::vector<ProtocolId> ps(kRollbackTableProtocols.begin(), kRollbackTableProtocols.end());
  bool within = false;
  for (auto mode : {EnumerationMode::Interleaved, EnumerationMode::Appended}) {
    RollbackOptions opt;
    opt.shards = shard_count();
    opt.threads = opt.shards;
    RollbackRun run = run_rollback({2, 2, 6, mode}, ps, opt);
    const auto& any = run.stats.front();
    double trr = pct(any.N_true, any.N);
    bool ok = std::fabs(trr - kTargetTRR) <= kTrrTolerancePp;
    within = within || ok;
    std::string frr;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      frr += std::string(i ? ", " : "") + std::string(short_name(ps[i])) + " " +
             format_percent(run.stats[i].N_false, run.stats[i].N);
    }
    o.detail.push_back(std::string(to_string(mode)) + ": TRR " + format_percent(any.N_true, any.N) + " (target " +
                       fmt("%.2f", kTargetTRR) + ", within " + fmt("%.0fpp", kTrrTolerancePp) + ": " +
                       (ok ? "yes" : "no") + "); FRR " + frr);
    auto frr_of = [&](ProtocolId p) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i] == p) return run.stats[i].FRR();
      }
      return 0.0;
    };
    bool order = frr_of(ProtocolId::MaaT) >= frr_of(ProtocolId::OCC) && frr_of(ProtocolId::OCC) >= frr_of(ProtocolId::SSI) &&
                 frr_of(ProtocolId::SSI) >= frr_of(ProtocolId::TO) && frr_of(ProtocolId::TO) >= frr_of(ProtocolId::MVTO);
    o.detail.push_back(std::string("  FRR order MaaT >= OCC >= SSI >= TO >= MVTO: ") + (order ? "matches" : "differs") +
                       " (reported only)");
  }
  // Same measurement with the operation bound read as inclusive.
  for (auto mode : {EnumerationMode::Interleaved, EnumerationMode::Appended}) {
    RollbackOptions opt;
    opt.shards = shard_count();
    opt.threads = opt.shards;
    RollbackStats s = run_rollback({2, 2, 7, mode}, {ProtocolId::OCC}, opt).stats.front();
    o.detail.push_back(std::string("diagnostic, at most 6 reads/writes (H(2,2,7)) ") + std::string(to_string(mode)) +
                       ": TRR " + format_percent(s.N_true, s.N));
  }
  o.pass = within;
  o.summary = std::string("H(2,2,6) TRR ") + (within ? "within" : "outside") + " " + fmt("%.0fpp", kTrrTolerancePp) +
              " of " + fmt("%.2f", kTargetTRR) + (within ? " in some mode" : " in every mode");
  return o;
}

Outcome concurrency_degree_value() {
  Outcome o;
  Rational r = concurrency_degree(ProtocolId::NoWait2PL);
  o.pass = r.num == 1 && r.den == 2;
  o.summary = "concurrency_degree(NoWait2PL) = " + r.str();
  return o;
}

Outcome determinism() {
  Outcome o;
  auto render = [](int shards) {
    StatsOptions opt;
    opt.shards = shards;
    opt.threads = shards;
    StatsCounts c = collect_stats({2, 2, 4}, opt);
    HistorySpec spec{2, 2, 4};
    return to_csv(make_distribution(spec, c, opt.selection)) + to_csv(make_edge_distribution(spec, c));
  };
  std::string one = render(1), eight = render(8), again = render(8), once_more = render(1);
  bool shard_invariant = one == eight;
  bool repeatable = eight == again && one == once_more;
  o.pass = shard_invariant && repeatable && !one.empty();
  o.summary = std::string("H(2,2,4) stats: 1 vs 8 shards ") + (shard_invariant ? "identical" : "differ") +
              ", consecutive runs " + (repeatable ? "identical" : "differ") + " (" + std::to_string(one.size()) +
              " bytes)";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "taxonomy closure", taxonomy_closure},
      {2, "golden anomalies", golden_anomalies},
      {3, "reduction properties", reduction_properties},
      {4, "conflict-free histories serializable", conflict_free_serializable},
      {5, "statistics reproduction", statistics_reproduction},
      {6, "rollback soundness", rollback_soundness},
      {7, "rollback reproduction", rollback_reproduction},
      {8, "concurrency degree", concurrency_degree_value},
      {9, "determinism and shard invariance", determinism},
  };
  int failed = 0;
  std::vector<std::string> report;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o = c.run();
    double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("criterion %d %s: %s - %s [%.1fs]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.summary.c_str(), sec);
    std::fflush(stdout);
    for (const auto& d : o.detail) report.push_back("  [" + std::to_string(c.id) + "] " + d);
  }
  std::printf("\n");
  for (const auto& line : report) std::printf("%s\n", line.c_str());
  std::printf("\n%d of %zu criteria failed\n", failed, std::size(criteria));
  return failed;
}

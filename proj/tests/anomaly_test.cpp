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

#include <gtest/gtest.h>

#include <algorithm>

#include <random>

#include "oracles.hpp"
#include "txanomaly/anomaly.hpp"

namespace txanomaly {
namespace {

struct Golden {
  const char* history;
  const char* name;
  AnomalyClass cls;
  AnomalySubclass subclass;
};

const Golden kGolden[] = {
    {"W1[x] R2[x] A1 C2", "Dirty Read", AnomalyClass::RAT, AnomalySubclass::SDA},
    {"W1[x] W2[x] A1 C2", "Dirty Write", AnomalyClass::WAT, AnomalySubclass::SDA},
    {"R1[x] W2[x] R1[x] C1 C2", "Non-repeatable Read", AnomalyClass::RAT, AnomalySubclass::SDA},
    {"R1[x] W2[x] W1[x] C1", "Lost Update", AnomalyClass::WAT, AnomalySubclass::SDA},
    {"W1[x] R2[x] W1[x] C1 C2", "Intermediate Read", AnomalyClass::RAT, AnomalySubclass::SDA},
    {"R1[x] W2[x] W2[y] R1[y] C1 C2", "Read Skew", AnomalyClass::RAT, AnomalySubclass::DDA},
    {"R1[x] R2[y] W1[y] W2[x] C1 C2", "Write Skew", AnomalyClass::IAT, AnomalySubclass::DDA},
    {"W1[x] W2[x] W2[y] W1[y]", "Full-Write Skew", AnomalyClass::WAT, AnomalySubclass::DDA},
    {"W1[x] R2[x] W2[y] R1[y] C1 C2", "Write-Read Skew", AnomalyClass::RAT, AnomalySubclass::DDA},
    {"R1[x] W2[x] C2 W1[x] C1", "Lost Update Committed", AnomalyClass::IAT, AnomalySubclass::SDA},
    {"R1[x] W2[x] C2 R1[x] C1", "Non-repeatable Read Committed", AnomalyClass::IAT, AnomalySubclass::SDA},
};

TEST(DetectAnomalies, GoldenHistories) {
  for (const auto& g : kGolden) {
    auto reports = detect_anomalies(parse_history(g.history));
    ASSERT_EQ(reports.size(), 1u) << g.history;
    const AnomalyReport* pick = select_by_priority(reports);
    EXPECT_EQ(to_string(pick->name), g.name) << g.history;
    EXPECT_EQ(pick->cls, g.cls) << g.history;
    EXPECT_EQ(pick->subclass, g.subclass) << g.history;
    EXPECT_FALSE(pick->predicate_based);
  }
}

TEST(DetectAnomalies, ReportLine) {
  auto reports = detect_anomalies(parse_history("W1[x] R2[x] A1 C2"));
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].line(), "Dirty Read;RAT;SDA;entity;WRA[x]");
}

TEST(DetectAnomalies, SerialIsClean) {
  EXPECT_TRUE(detect_anomalies(parse_history("R1[x] W1[x] C1 R2[x] C2")).empty());
  EXPECT_TRUE(is_serializable(parse_history("W1[x] C1 R2[x] W2[x] C2 W3[x] C3")));
}

TEST(DetectAnomalies, OrderedByClosePosition) {
  auto reports = detect_anomalies(parse_history("W1[x] W2[x] W2[y] W1[y] C1 C2"));
  ASSERT_GE(reports.size(), 2u);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    EXPECT_LE(reports[i - 1].earliest_close_position, reports[i].earliest_close_position);
  }
  auto first = earliest_anomaly(parse_history("W1[x] W2[x] W2[y] W1[y] C1 C2"));
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(first->line(), reports.front().line());
}

TEST(DetectAnomalies, PredicateBased) {
  auto reports = detect_anomalies(parse_history("R1[x in P1] R2[y in P1] W1[y out P1] W2[x out P1] C1 C2"));
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].name, AnomalyName::WriteSkew);
  EXPECT_TRUE(reports[0].predicate_based);
}

TEST(DetectAnomalies, AbortPolicy) {
  History h = parse_history("R1[x] W2[x] R1[x] A1 C2");
  EXPECT_TRUE(detect_anomalies(h).empty());
  AnalyzeOptions keep;
  keep.abort_policy = AbortPolicy::KeepAborted;
  EXPECT_EQ(detect_anomalies(h, keep).size(), 1u);
}

TEST(IsSerializable, CommittedEdgesOnly) {
  History h = parse_history("W1[x] C1 R2[x] W2[y] C2 R3[y] C3");
  for (const auto& e : extract_pops(h)) EXPECT_TRUE(is_committed_kind(e.kind));
  EXPECT_TRUE(is_serializable(h));
}

TEST(FindCycles, Examples) {
  auto dirty = find_cycles(build_graph(parse_history("W1[x] R2[x] A1 C2")));
  ASSERT_EQ(dirty.cycles.size(), 1u);
  EXPECT_EQ(dirty.cycles[0].length(), 1u);
  EXPECT_EQ(dirty.cycles[0].edges[0].kind, PopKind::WRA);

  auto nrr = find_cycles(build_graph(parse_history("R1[x] W2[x] R1[x] C1 C2")));
  ASSERT_EQ(nrr.cycles.size(), 1u);
  EXPECT_EQ(nrr.cycles[0].edges[0].label(), "RW[x]");
  EXPECT_EQ(nrr.cycles[0].edges[1].label(), "WR[x]");

  EXPECT_TRUE(find_cycles(build_graph(parse_history("W1[x] C1 W2[x] C2"))).cycles.empty());
}

TEST(FindCycles, Cap) {
  auto h = parse_history("W1[x] W2[x] W2[y] W1[y] C1 C2");
  auto capped = find_cycles(build_graph(h), 1);
  EXPECT_TRUE(capped.overflow);
  AnalyzeOptions opt;
  opt.cycle_cap = 1;
  EXPECT_THROW(detect_anomalies(h, opt), CycleCapExceeded);
}

TEST(ReduceCycle, SingleObjectToTwoTransactions) {
  auto cycles = find_cycles(build_graph(parse_history("R1[x] W2[x] W3[x] W1[x]"))).cycles;
  ASSERT_EQ(cycles.size(), 1u);
  ASSERT_EQ(cycles[0].txns.size(), 3u);
  Cycle r = reduce_cycle(cycles[0]);
  EXPECT_EQ(r.txns.size(), 2u);
  EXPECT_EQ(r.length(), 2u);
}

TEST(ReduceCycle, StuckLoopFallsBackToSelfClosingEdge) {
  auto cycles = find_cycles(build_graph(parse_history("R2[x] W1[x] R3[x] A1 W2[x] C2"))).cycles;
  auto loop = std::find_if(cycles.begin(), cycles.end(), [](const Cycle& c) { return c.length() == 3; });
  ASSERT_NE(loop, cycles.end());
  Cycle r = reduce_cycle(*loop);
  ASSERT_EQ(r.length(), 1u);
  EXPECT_EQ(r.edges[0].kind, PopKind::WRA);
  EXPECT_EQ(r.edges[0].from_txn, 1u);
  EXPECT_EQ(r.edges[0].to_txn, 3u);
}

TEST(ReduceCycle, CanonicalIsFixpoint) {
  auto cycles = find_cycles(build_graph(parse_history("R1[x] R2[y] W1[y] W2[x] C1 C2"))).cycles;
  ASSERT_EQ(cycles.size(), 1u);
  Cycle once = reduce_cycle(cycles[0]);
  EXPECT_EQ(once.edges.size(), 2u);
  EXPECT_EQ(reduce_cycle(once), once);
}

TEST(ReduceCycle, GappedObjectEdgesCoalesce) {
  auto h = parse_history("W1[x] W2[x] W2[y] W3[y] W3[x] W4[x] W4[z] W5[z] W5[x] W1[x]");
  for (const auto& c : find_cycles(build_graph(h)).cycles) {
    Cycle r = reduce_cycle(c);
    EXPECT_LE(r.length(), 2 * c.objects.size());
    // Edges on one object sit next to each other in the reduced cycle.
    std::size_t runs = 0;
    for (std::size_t i = 0; i < r.edges.size(); ++i) {
      if (r.edges[i].object != r.edges[(i + r.edges.size() - 1) % r.edges.size()].object) ++runs;
    }
    EXPECT_LE(runs, r.objects.size() == 1 ? 0u : r.objects.size());
  }
}

PopEdge edge(TxnId a, TxnId b, const char* obj, PopKind k, std::size_t p, std::size_t q) {
  PopEdge e;
  e.from_txn = a;
  e.to_txn = b;
  e.object = obj;
  e.kind = k;
  e.positions = {p, q};
  return e;
}

Cycle cycle_of(std::vector<PopEdge> edges) {
  Cycle c;
  c.edges = std::move(edges);
  for (const auto& e : c.edges) {
    c.objects.insert(e.object);
    c.txns.insert(e.from_txn);
    c.txns.insert(e.to_txn);
  }
  return c;
}

TEST(ClassifyCycle, TableRows) {
  auto check = [](Cycle c, AnomalyName name, AnomalyClass cls, AnomalySubclass sub) {
    AnomalyReport r = classify_cycle(c);
    EXPECT_EQ(r.name, name) << r.line();
    EXPECT_EQ(r.cls, cls) << r.line();
    EXPECT_EQ(r.subclass, sub) << r.line();
  };
  check(cycle_of({edge(1, 2, "x", PopKind::RW, 0, 1), edge(2, 1, "y", PopKind::WR, 2, 3)}), AnomalyName::ReadSkew,
        AnomalyClass::RAT, AnomalySubclass::DDA);
  check(cycle_of({edge(1, 2, "x", PopKind::RW, 0, 3), edge(2, 1, "y", PopKind::RW, 1, 2)}), AnomalyName::WriteSkew,
        AnomalyClass::IAT, AnomalySubclass::DDA);
  check(cycle_of({edge(1, 2, "x", PopKind::RW, 0, 1), edge(2, 1, "x", PopKind::WCW, 1, 3)}),
        AnomalyName::LostUpdateCommitted, AnomalyClass::IAT, AnomalySubclass::SDA);
  check(cycle_of({edge(1, 2, "x", PopKind::WW, 0, 1), edge(2, 1, "y", PopKind::WW, 2, 3)}),
        AnomalyName::FullWriteSkew, AnomalyClass::WAT, AnomalySubclass::DDA);
}

TEST(ClassifyCycle, LongCyclesAreSteps) {
  auto h = parse_history("R1[x] W2[x] R2[y] W3[y] R3[z] W1[z] C1 C2 C3");
  auto reports = detect_anomalies(h);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].name, AnomalyName::StepIAT);
  EXPECT_EQ(reports[0].subclass, AnomalySubclass::MDA);
}

TEST(CheckIsolation, Levels) {
  History skew = parse_history("R1[x] R2[y] W1[y] W2[x] C1 C2");
  EXPECT_TRUE(check_isolation(skew, IsolationLevel::NRW).admissible);
  EXPECT_FALSE(check_isolation(skew, IsolationLevel::NA).admissible);
  History dirty = parse_history("W1[x] R2[x] A1 C2");
  auto r = check_isolation(dirty, IsolationLevel::NRW);
  EXPECT_FALSE(r.admissible);
  ASSERT_EQ(r.violations.size(), 1u);
  EXPECT_EQ(r.violations[0].name, AnomalyName::DirtyRead);
}

TEST(AnomalyTable, ClassMatchesDefinitionForTwoEdgeRows) {
  EXPECT_GE(kNamedAnomalyCount, 29u);
  for (const auto& row : kAnomalyTable) {
    EXPECT_EQ(parse_anomaly_name(row.text), row.name);
  }
  EXPECT_EQ(parse_anomaly_name("Unclassified"), AnomalyName::Unclassified);
}

TEST(DetectProperty, CycleExistenceMatchesClosureOracle) {
  std::mt19937_64 rng(23);
  AnalyzeOptions keep;
  keep.abort_policy = AbortPolicy::KeepAborted;
  int cyclic = 0;
  for (int i = 0; i < 4000; ++i) {
    std::string text = oracle::random_history(rng, 2 + i % 3, 1 + i % 3, 8);
    History h = parse_history(text);
    bool expect = oracle::cyclic(oracle::pops(h));
    cyclic += expect;
    EXPECT_EQ(!detect_anomalies(h, keep).empty(), expect) << text;
    // Pruning only ever removes anomalies.
    EXPECT_LE(detect_anomalies(h).size(), detect_anomalies(h, keep).size()) << text;
  }
  EXPECT_GT(cyclic, 400);
}

TEST(DetectProperty, ClassFollowsEdgeFamilies) {
  std::mt19937_64 rng(29);
  for (int i = 0; i < 3000; ++i) {
    std::string text = oracle::random_history(rng, 2 + i % 3, 1 + i % 3, 8);
    for (const auto& r : detect_anomalies(parse_history(text))) {
      bool wr = false, ww = false;
      for (const auto& e : r.cycle.edges) {
        wr = wr || e.kind == PopKind::WR || e.kind == PopKind::WRA;
        ww = ww || e.kind == PopKind::WW || e.kind == PopKind::WWC || e.kind == PopKind::WWA;
      }
      AnomalyClass expect = wr ? AnomalyClass::RAT : ww ? AnomalyClass::WAT : AnomalyClass::IAT;
      EXPECT_EQ(r.definition_class, expect) << text;
      if (r.name == AnomalyName::Unclassified || r.cycle.length() >= 3) {
        EXPECT_EQ(r.cls, expect) << text;
      }
      std::size_t objs = r.cycle.objects.size(), txns = r.cycle.txns.size();
      AnomalySubclass sub = txns == 2 && objs == 1   ? AnomalySubclass::SDA
                            : txns == 2 && objs == 2 ? AnomalySubclass::DDA
                                                     : AnomalySubclass::MDA;
      EXPECT_EQ(r.subclass, sub) << text;
    }
  }
}

}  // namespace
}  // namespace txanomaly

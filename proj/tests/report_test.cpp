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

#include "txanomaly/report.hpp"

namespace txanomaly {
namespace {

TEST(FormatPercent, RoundsHalfUpOnExactRatio) {
  EXPECT_EQ(format_percent(0, 0), "0.00");
  EXPECT_EQ(format_percent(0, 7), "0.00");
  EXPECT_EQ(format_percent(1, 3), "33.33");
  EXPECT_EQ(format_percent(2, 3), "66.67");
  EXPECT_EQ(format_percent(1, 8), "12.50");
  EXPECT_EQ(format_percent(1, 800), "0.13");
  EXPECT_EQ(format_percent(1, 801), "0.12");
  EXPECT_EQ(format_percent(7, 7), "100.00");
  EXPECT_EQ(format_percent(~0ull, ~0ull), "100.00");
}

TEST(CsvField, Quoting) {
  EXPECT_EQ(csv_field("Dirty Read"), "Dirty Read");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(AnomalyDistribution, CsvShape) {
  AnomalyDistribution d = anomaly_distribution({2, 2, 4});
  std::string csv = to_csv(d);
  EXPECT_EQ(csv.rfind("name,class,subclass,count,percent\n", 0), 0u);
  EXPECT_EQ(d.anomalies.front().name, "Dirty Write");
  std::size_t lines = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(lines, 1 + d.anomalies.size() + 3 + 3 + 9);
  EXPECT_NE(csv.find("RAT/SDA,RAT,SDA,"), std::string::npos);
  for (std::size_t i = 1; i < d.anomalies.size(); ++i) EXPECT_GE(d.anomalies[i - 1].count, d.anomalies[i].count);
  std::uint64_t sum = 0;
  for (auto v : d.class_totals) sum += v;
  EXPECT_EQ(sum, d.cyclic);
}

TEST(AnomalyDistribution, Deterministic) {
  StatsOptions eight;
  eight.shards = 8;
  eight.threads = 8;
  std::string a = to_csv(anomaly_distribution({2, 2, 4}));
  std::string b = to_csv(anomaly_distribution({2, 2, 4}));
  std::string c = to_csv(anomaly_distribution({2, 2, 4}, eight));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_EQ(to_markdown(anomaly_distribution({2, 2, 4})), to_markdown(anomaly_distribution({2, 2, 4}, eight)));
}

TEST(AnomalyDistribution, NoCyclesTable) {
  AnomalyDistribution d = anomaly_distribution({1, 1, 2});
  EXPECT_EQ(d.cyclic, 0u);
  EXPECT_EQ(d.histories, 6u);
  EXPECT_NE(to_markdown(d).find("0 cyclic"), std::string::npos);
}

TEST(EdgeDistribution, FoldedView) {
  EdgeDistribution d = edge_distribution({2, 2, 4});
  for (EdgeScope s : kEdgeScopes) {
    EXPECT_EQ(d.count(s, PopKind::RW, true), d.count(s, PopKind::RW) + d.count(s, PopKind::RCW));
    EXPECT_EQ(d.count(s, PopKind::RCW, true), 0u);
  }
  std::string csv = to_csv(d);
  EXPECT_EQ(csv.rfind("edge,scope,count,percent\n", 0), 0u);
  EXPECT_NE(csv.find("RW,cycle_folded,"), std::string::npos);
  EXPECT_EQ(csv.find("RCW,history_folded"), std::string::npos);
  EXPECT_GT(d.total(EdgeScope::History), d.total(EdgeScope::Cyclic));
}

TEST(RollbackTable, Schema) {
  std::vector<ProtocolId> ps = {ProtocolId::NoWait2PL, ProtocolId::TO, ProtocolId::SSI};
  RollbackRow row = rollback_row({2, 2, 4}, ps);
  std::string csv = rollback_table_csv({row});
  EXPECT_EQ(csv.rfind("spec,TRR,NoWait_FRR,TO_FRR,SSI_FRR\n", 0), 0u);
  std::string second = csv.substr(csv.find('\n') + 1);
  EXPECT_EQ(second.rfind("\"2,2,4,interleaved\",", 0), 0u);
  EXPECT_EQ(std::count(second.begin(), second.end(), ','), 7);
  std::string detail = rollback_detail_csv(row);
  EXPECT_EQ(std::count(detail.begin(), detail.end(), '\n'), 4);
}

}  // namespace
}  // namespace txanomaly

// Copyright 2026 The Authors.
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

#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "chronic/pipeline.hpp"
#include "chronic/random.hpp"
#include "chronic/synth.hpp"

namespace chronic {
namespace {

using std::chrono::days;
using std::chrono::minutes;

Timestamp at(Date d, int hour, int minute = 0) {
  return Timestamp{d} + std::chrono::hours{hour} + minutes{minute};
}

ServiceEvent visit(long long id, ServiceKind k, Timestamp start, int mins) {
  return {id, k, start, start + minutes{mins}};
}

// Independent recount: collect qualifying stay days in a set, then count
// the ones inside the window.
long brute_force_stays(const std::vector<ServiceEvent>& events, long long client, Date end,
                       long window) {
  std::set<Date> days_with_stay;
  for (auto& e : events)
    if (e.client_id == client && e.service == ServiceKind::kStay &&
        (e.end - e.start) >= minutes{15})
      days_with_stay.insert(std::chrono::floor<std::chrono::days>(e.start));
  long n = 0;
  for (Date d : days_with_stay)
    if (d > end - days{window} && d <= end) ++n;
  return n;
}

std::vector<ServiceEvent> random_timeline(Rng& r, Date base, long long client) {
  std::vector<ServiceEvent> ev;
  const double density = r.uniform();
  for (int d = 0; d < 500; ++d) {
    if (!r.bernoulli(density)) continue;
    int visits = int(r.integer(1, 3));
    for (int v = 0; v < visits; ++v)
      ev.push_back(visit(client, r.bernoulli(0.9) ? ServiceKind::kStay : ServiceKind::kFoodBank,
                         at(base + days{d}, int(r.integer(0, 23)), int(r.integer(0, 59))),
                         int(r.integer(5, 30))));
  }
  // Another client's stays must never leak into the count.
  ev.push_back(visit(client + 1, ServiceKind::kStay, at(base + days{10}, 20), 600));
  return ev;
}

const FeatureSchema kSchema = FeatureSchema::from_catalog();
const Date kBase = make_date(2019, 1, 1);

TEST(CountStays, SameDayVisitsCountOnce) {
  std::vector<ServiceEvent> ev;
  for (int h : {8, 12, 20}) ev.push_back(visit(1, ServiceKind::kStay, at(kBase, h), 20));
  EXPECT_EQ(count_stays(ev, 1, kBase, 30), 1);
}

TEST(CountStays, ShortVisitDoesNotCount) {
  std::vector<ServiceEvent> ev = {visit(1, ServiceKind::kStay, at(kBase, 8), 10)};
  EXPECT_EQ(count_stays(ev, 1, kBase, 30), 0);
  ev = {visit(1, ServiceKind::kStay, at(kBase, 8), 14)};
  EXPECT_EQ(count_stays(ev, 1, kBase, 30), 0);
  ev = {visit(1, ServiceKind::kStay, at(kBase, 8), 15)};
  EXPECT_EQ(count_stays(ev, 1, kBase, 30), 1);
}

TEST(CountStays, ConsecutiveDailyVisits) {
  std::vector<ServiceEvent> ev;
  for (int d = 0; d < 200; ++d) ev.push_back(visit(1, ServiceKind::kStay, at(kBase + days{d}, 21), 30));
  Date last = kBase + days{199};
  EXPECT_EQ(count_stays(ev, 1, last, 365), 200);
  EXPECT_EQ(count_stays(ev, 1, last, 365), brute_force_stays(ev, 1, last, 365));
  EXPECT_EQ(count_stays({}, 1, last, 365), 0);
  EXPECT_THROW(count_stays(ev, 1, last, 0), Error);
}

TEST(CountStays, MidnightSpanCountsOnStartDay) {
  std::vector<ServiceEvent> ev = {visit(1, ServiceKind::kStay, at(kBase, 23), 600)};
  EXPECT_EQ(count_stays(ev, 1, kBase, 1), 1);
  EXPECT_EQ(count_stays(ev, 1, kBase + days{1}, 1), 0);
}

TEST(IsChronic, ThresholdBoundary) {
  Date as_of = kBase + days{364};
  std::vector<ServiceEvent> ev;
  for (int d = 0; d < 179; ++d) ev.push_back(visit(5, ServiceKind::kStay, at(kBase + days{2 * d}, 20), 60));
  EXPECT_FALSE(is_chronic(ev, 5, as_of));
  ev.push_back(visit(5, ServiceKind::kStay, at(kBase + days{359}, 20), 60));
  EXPECT_TRUE(is_chronic(ev, 5, as_of));
  // The same 180 stays fall partly out of the window a day later.
  EXPECT_FALSE(is_chronic(ev, 5, as_of + days{1}));
}

TEST(IsChronic, MatchesBruteForceOnRandomTimelines) {
  Rng r(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto ev = random_timeline(r, kBase, 9);
    Date as_of = kBase + days{r.integer(0, 560)};
    long expect = brute_force_stays(ev, 9, as_of, 365);
    ASSERT_EQ(count_stays(ev, 9, as_of, 365), expect) << trial;
    ASSERT_EQ(is_chronic(ev, 9, as_of), expect >= 180) << trial;
  }
}

TEST(Label, NoEventsIsNegative) { EXPECT_EQ(label_example({}, 1, kBase), 0); }

TEST(Label, LooksHorizonAhead) {
  std::vector<ServiceEvent> ev;
  for (int d = 0; d < 200; ++d) ev.push_back(visit(1, ServiceKind::kStay, at(kBase + days{180 + d}, 21), 30));
  EXPECT_EQ(label_example(ev, 1, kBase + days{200}), 1);   // chronic at day 380
  EXPECT_EQ(label_example(ev, 1, kBase + days{150}), 0);   // 150 stays by day 330
}

TEST(DynamicFeatures, NoEventsAllZero) {
  auto m = dynamic_features({}, 1, kBase, kSchema);
  ASSERT_EQ(m.size(), 6u);
  for (auto& row : m)
    for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(DynamicFeatures, StayFortyFiveDaysBack) {
  Date date = kBase + days{100};
  std::vector<ServiceEvent> ev = {visit(1, ServiceKind::kStay, at(date - days{45}, 20), 600)};
  auto m = dynamic_features(ev, 1, date, kSchema);
  for (int t = 0; t < 6; ++t)
    for (int k = 0; k < kNumServiceKinds; ++k)
      EXPECT_EQ(m[t][k], (t == 1 && k == int(ServiceKind::kStay)) ? 1.0 : 0.0) << t << "," << k;
}

TEST(DynamicFeatures, ThirtyCaseManagementDays) {
  Date date = kBase + days{100};
  std::vector<ServiceEvent> ev;
  for (int d = 0; d < 30; ++d) ev.push_back(visit(1, ServiceKind::kCaseManagement, at(date - days{d}, 10), 60));
  auto m = dynamic_features(ev, 1, date, kSchema);
  EXPECT_EQ(m[0][int(ServiceKind::kCaseManagement)], 30.0);
  EXPECT_EQ(m[1][int(ServiceKind::kCaseManagement)], 0.0);
}

TEST(DynamicFeatures, DaySpanSplitsAcrossSteps) {
  Date date = kBase + days{100};
  // Subsidy covering the last 40 days: 30 in the current step, 10 in the previous.
  std::vector<ServiceEvent> ev = {{1, ServiceKind::kHousingSubsidy, at(date - days{39}, 9), at(date, 17)}};
  auto m = dynamic_features(ev, 1, date, kSchema);
  EXPECT_EQ(m[0][int(ServiceKind::kHousingSubsidy)], 30.0);
  EXPECT_EQ(m[1][int(ServiceKind::kHousingSubsidy)], 10.0);
}

TEST(StaticFeatures, AgeAndMissingScore) {
  ClientAttributes c;
  c.client_id = 1;
  c.birth_date = make_date(1990, 3, 15);
  auto s = static_features(c, std::vector<ServiceEvent>{}, make_date(2020, 3, 15), kSchema);
  EXPECT_EQ(s.numeric_static[kSchema.numeric_static_index("CurrentAge")], 30.0);
  EXPECT_EQ(s.numeric_static[kSchema.numeric_static_index("TotalScore")], -1.0);
  EXPECT_EQ(s.numeric_static[kSchema.numeric_static_index("ClientWeightKG")], -1.0);
  EXPECT_EQ(s.numeric_static[kSchema.numeric_static_index("ExpenseAmount")], 0.0);
  s = static_features(c, std::vector<ServiceEvent>{}, make_date(2020, 3, 14), kSchema);
  EXPECT_EQ(s.numeric_static[kSchema.numeric_static_index("CurrentAge")], 29.0);
}

TEST(StaticFeatures, ScoreAppearsAfterFirstAssessment) {
  ClientAttributes c;
  c.client_id = 1;
  c.birth_date = make_date(1970, 1, 1);
  c.latest_spdat_score = 7;
  std::vector<ServiceEvent> ev = {visit(1, ServiceKind::kSpdat, at(kBase + days{10}, 13), 60)};
  auto before = static_features(c, ev, kBase + days{9}, kSchema);
  auto after = static_features(c, ev, kBase + days{10}, kSchema);
  int i = kSchema.numeric_static_index("TotalScore");
  EXPECT_EQ(before.numeric_static[i], -1.0);
  EXPECT_EQ(after.numeric_static[i], 7.0);
}

TEST(StaticFeatures, TotalStayEqualsWindowSumPlusEarlier) {
  Rng r(5);
  auto ev = random_timeline(r, kBase, 3);
  ClientAttributes c;
  c.client_id = 3;
  c.birth_date = make_date(1970, 1, 1);
  Date date = kBase + days{400};
  auto s = static_features(c, ev, date, kSchema);
  auto m = dynamic_features(ev, 3, date, kSchema);
  double windows = 0;
  for (auto& row : m) windows += row[int(ServiceKind::kStay)];
  long earlier = brute_force_stays(ev, 3, date - days{180}, 100000);
  EXPECT_EQ(s.numeric_static[kSchema.numeric_static_index("Total_Stay")], windows + double(earlier));
}

TEST(Impute, Rules) {
  EXPECT_EQ(impute_numeric(std::nullopt, ImputeKind::kNumeric), 0.0);
  EXPECT_EQ(impute_numeric(std::nullopt, ImputeKind::kWeightOrSpdat), -1.0);
  EXPECT_EQ(impute_numeric(72.5, ImputeKind::kWeightOrSpdat), 72.5);
  EXPECT_EQ(impute_svcf(std::nullopt), "Unknown");
  EXPECT_TRUE(impute_mvcf(std::nullopt).empty());

  ClientAttributes c;
  c.client_id = 1;
  c.birth_date = make_date(1970, 1, 1);
  auto st = static_features(c, std::vector<ServiceEvent>{}, kBase, kSchema);
  st.dynamic = dynamic_features({}, 1, kBase, kSchema);
  auto x = encode(st, kSchema);
  auto names = kSchema.feature_names();
  auto at_name = [&](const std::string& n) {
    return x[std::find(names.begin(), names.end(), n) - names.begin()];
  };
  EXPECT_EQ(at_name("Citizenship_Unknown"), 1.0);
  EXPECT_EQ(at_name("Citizenship_Canadian Citizen"), 0.0);
  EXPECT_EQ(at_name("IncomeType_Pension"), 0.0);
}

ClientState blank_state() {
  ClientState s;
  s.numeric_static.assign(kSchema.numeric_static.size(), 0.0);
  s.dynamic.assign(kSchema.sequence_length, {});
  return s;
}

TEST(Encode, OneHotAndBitGroups) {
  auto s = blank_state();
  s.svcf["Gender"] = "Female";  // 2nd of (Male, Female, Other, Unknown)
  s.mvcf["IncomeType"] = {"Pension", "Old Age Security"};
  auto x = encode(s, kSchema);
  ASSERT_EQ(int(x.size()), kSchema.vector_length());
  int o = kSchema.svcf_offset();
  EXPECT_EQ(x[o], 0.0);
  EXPECT_EQ(x[o + 1], 1.0);
  EXPECT_EQ(x[o + 2], 0.0);
  int m = kSchema.mvcf_offset();  // IncomeType is the first MVCF
  EXPECT_EQ(x[m + 1], 1.0);       // Pension
  EXPECT_EQ(x[m + 2], 1.0);       // Old Age Security
  EXPECT_EQ(x[m] + x[m + 3] + x[m + 4], 0.0);
}

TEST(Encode, OutOfDomainValuesMapToUnknown) {
  auto s = blank_state();
  s.svcf["Gender"] = "Martian";
  s.mvcf["HealthIssue"] = {"Imaginary"};
  auto x = encode(s, kSchema);
  EXPECT_EQ(x[kSchema.svcf_offset() + 3], 1.0);
  auto a = decode_categorical(x, kSchema);
  EXPECT_TRUE(a.mvcf["HealthIssue"].empty());
}

TEST(Encode, DecodeInvertsOnRandomAssignments) {
  Rng r(17);
  for (int trial = 0; trial < 300; ++trial) {
    auto s = blank_state();
    CategoricalAssignment want;
    for (auto& f : kSchema.svcf) {
      s.svcf[f.name] = want.svcf[f.name] = f.domain[r.integer(0, long(f.domain.size()) - 1)];
    }
    for (auto& f : kSchema.mvcf) {
      auto& set = want.mvcf[f.name];
      for (auto& v : f.domain)
        if (r.bernoulli(0.4)) set.insert(v);
      s.mvcf[f.name] = set;
    }
    auto x = encode(s, kSchema);
    ASSERT_EQ(decode_categorical(x, kSchema), want);
    // Every SVCF group is exactly one-hot.
    int o = kSchema.svcf_offset();
    for (auto& f : kSchema.svcf) {
      double sum = 0;
      for (std::size_t i = 0; i < f.domain.size(); ++i) sum += x[o + i];
      ASSERT_EQ(sum, 1.0);
      o += int(f.domain.size());
    }
  }
}

Example numeric_example(double v) {
  Example e;
  e.x.assign(kSchema.vector_length(), 0.0);
  e.x[0] = v;
  e.x[kSchema.dynamic_offset()] = 5.0;  // constant column
  return e;
}

TEST(Scaler, StandardizesWithPopulationSigma) {
  std::vector<Example> rows = {numeric_example(1), numeric_example(2), numeric_example(3)};
  std::vector<const Example*> ptrs = {&rows[0], &rows[1], &rows[2]};
  auto sc = fit_scaler(ptrs, kSchema);
  auto scaled = apply_scaler(sc, rows);
  EXPECT_NEAR(scaled[0].x[0], -1.2247449, 1e-6);
  EXPECT_NEAR(scaled[1].x[0], 0.0, 1e-6);
  EXPECT_NEAR(scaled[2].x[0], 1.2247449, 1e-6);
  // Constant column passes through and is flagged.
  auto pos = std::find(sc.indices.begin(), sc.indices.end(), kSchema.dynamic_offset()) - sc.indices.begin();
  EXPECT_TRUE(sc.constant[pos]);
  EXPECT_EQ(scaled[0].x[kSchema.dynamic_offset()], 5.0);
  // One-hot columns are not scaled.
  for (int i : sc.indices) EXPECT_TRUE(kSchema.is_numeric(i));
}

TEST(BuildDataset, EmptyRecordSet) {
  RecordSet rs;
  EXPECT_TRUE(build_dataset(rs, kSchema).examples.empty());
}

TEST(BuildDataset, SingleEventGridDates) {
  RecordSet rs;
  ClientAttributes c;
  c.client_id = 1;
  c.birth_date = make_date(1980, 1, 1);
  rs.clients = {c};
  ClientAttributes other = c;
  other.client_id = 2;
  rs.clients.push_back(other);
  // Client 2's early event anchors the grid; client 1 starts 45 days later.
  rs.events = {visit(2, ServiceKind::kFoodBank, at(kBase, 12), 10),
               visit(1, ServiceKind::kStay, at(kBase + days{45}, 20), 60)};
  rs.data_end = kBase + days{399};
  auto ds = build_dataset(rs, kSchema);
  // Oracle: grid ends at kBase + 29 + 30j; client 1 needs g >= day 45, both need g <= 399 - 180.
  std::vector<std::pair<long long, Date>> want;
  for (int j = 0;; ++j) {
    Date g = kBase + days{29 + 30 * j};
    if (g > rs.data_end - days{180}) break;
    want.emplace_back(2, g);
    if (g >= kBase + days{45}) want.emplace_back(1, g);
  }
  std::sort(want.begin(), want.end(), [](auto& a, auto& b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
  ASSERT_EQ(ds.examples.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(ds.examples[i].client_id, want[i].first);
    EXPECT_EQ(ds.examples[i].date, want[i].second);
    EXPECT_EQ(int(ds.examples[i].x.size()), kSchema.vector_length());
  }
}

Dataset synthetic_dataset(int clients, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.clients = clients;
  return build_dataset(generate_synthetic(cfg, seed), kSchema);
}

TEST(BuildDataset, InvariantsOnSynthetic) {
  auto ds = synthetic_dataset(300, 4);
  ASSERT_FALSE(ds.examples.empty());
  std::set<std::pair<long long, Date>> keys;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    auto& e = ds.examples[i];
    ASSERT_TRUE(keys.insert({e.client_id, e.date}).second);
    ASSERT_EQ(int(e.x.size()), kSchema.vector_length());
    for (int j = kSchema.dynamic_offset(); j < kSchema.vector_length(); ++j) ASSERT_GE(e.x[j], 0.0);
    if (i) ASSERT_LE(std::tie(ds.examples[i - 1].date, ds.examples[i - 1].client_id), std::tie(e.date, e.client_id));
  }
}

TEST(BuildDataset, LabelsMatchBruteForce) {
  SynthConfig cfg;
  cfg.clients = 120;
  auto rs = generate_synthetic(cfg, 9);
  auto ds = build_dataset(rs, kSchema);
  for (std::size_t i = 0; i < ds.examples.size(); i += 7) {
    auto& e = ds.examples[i];
    long stays = brute_force_stays(rs.events, e.client_id, e.date + days{180}, 365);
    ASSERT_EQ(e.y, stays >= 180 ? 1 : 0);
  }
}

TEST(Partition, FirstFoldUsesLastDate) {
  auto ds = synthetic_dataset(150, 2);
  auto dates = ds.dates();
  auto s = partition(ds, 1);
  ASSERT_EQ(s.test_dates.size(), 1u);
  EXPECT_EQ(s.test_dates[0], dates.back());
  EXPECT_EQ(s.val_dates[0], dates[dates.size() - 2]);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), ds.examples.size());
}

TEST(Partition, ThirdFoldOfTenSteps) {
  Dataset ds;
  ds.schema = kSchema;
  for (int step = 1; step <= 10; ++step)
    for (int c = 0; c < 3; ++c) {
      Example e;
      e.client_id = c;
      e.date = kBase + days{30 * step};
      ds.examples.push_back(e);
    }
  auto s = partition(ds, 3);
  EXPECT_EQ(s.test_dates, std::vector<Date>{kBase + days{240}});
  EXPECT_EQ(s.val_dates, std::vector<Date>{kBase + days{210}});
  EXPECT_EQ(s.train_dates.back(), kBase + days{180});
  EXPECT_EQ(s.train.size(), 18u);
  EXPECT_EQ(s.test.size(), 3u);
  EXPECT_THROW(partition(ds, 9), Error);
  EXPECT_NO_THROW(partition(ds, 8));
  auto wide = partition(ds, 1, 2, 2);
  EXPECT_EQ(wide.test.size(), 6u);
  EXPECT_EQ(wide.val.size(), 6u);
}

TEST(Partition, NoLeakageAnyFold) {
  auto ds = synthetic_dataset(200, 8);
  int steps = int(ds.dates().size());
  for (int k = 1; k + 2 <= steps; ++k) {
    auto s = partition(ds, k);
    Date train_max{}, val_min = Date::max(), val_max{}, test_min = Date::max();
    for (auto i : s.train) train_max = std::max(train_max, ds.examples[i].date);
    for (auto i : s.val) {
      val_min = std::min(val_min, ds.examples[i].date);
      val_max = std::max(val_max, ds.examples[i].date);
    }
    for (auto i : s.test) test_min = std::min(test_min, ds.examples[i].date);
    ASSERT_LT(train_max, val_min);
    ASSERT_LT(val_max, test_min);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.val) ASSERT_TRUE(all.insert(i).second);
    for (auto i : s.test) ASSERT_TRUE(all.insert(i).second);
  }
}

TEST(DatasetFiles, RoundTrip) {
  auto ds = synthetic_dataset(40, 1);
  auto sel = select(ds, partition(ds, 1).train);
  ds.scaler = fit_scaler(sel, ds.schema);
  auto dir = std::filesystem::temp_directory_path() / "chronic_dataset_rt";
  std::filesystem::create_directories(dir);
  save_dataset(ds, dir / "dataset.csv", dir / "dataset.json");
  auto back = load_dataset(dir / "dataset.csv", dir / "dataset.json");
  EXPECT_EQ(back.schema, ds.schema);
  EXPECT_EQ(back.examples, ds.examples);
  EXPECT_EQ(back.scaler, ds.scaler);
}

}  // namespace
}  // namespace chronic

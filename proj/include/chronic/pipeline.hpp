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

#pragma once

// Raw records -> labelled, encoded examples on a shared 30-day grid.
//
// Example vector layout (FeatureSchema order):
//   [numeric statics | SVCF one-hots | MVCF bit groups | dynamic T x 10]
// The dynamic block is row-major with the current step (t = 0) first.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "chronic/catalog.hpp"
#include "chronic/common.hpp"
#include "chronic/csv.hpp"
#include "chronic/records.hpp"
#include "chronic/timeline.hpp"

namespace chronic {

struct FeatureSchema {
  std::vector<std::string> numeric_static;
  std::vector<CategoricalFeature> svcf;
  std::vector<CategoricalFeature> mvcf;
  int sequence_length = 6;
  int step_days = 30;
  int horizon_days = 180;
  int window_days = 365;
  int chronic_threshold = 180;
  int min_stay_minutes = kMinStayMinutes;

  static FeatureSchema from_catalog(const CategoryCatalog& cat = default_catalog()) {
    FeatureSchema s;
    s.numeric_static = {"CurrentAge", "ClientWeightKG", "IncomeAmount", "ExpenseAmount",
                        "TotalScore"};
    for (auto name : kServiceNames) s.numeric_static.push_back("Total_" + std::string(name));
    s.svcf = cat.svcf;
    s.mvcf = cat.mvcf;
    return s;
  }

  int num_numeric_static() const { return int(numeric_static.size()); }
  int svcf_offset() const { return num_numeric_static(); }
  int mvcf_offset() const {
    int o = svcf_offset();
    for (auto& f : svcf) o += int(f.domain.size());
    return o;
  }
  int dynamic_offset() const {
    int o = mvcf_offset();
    for (auto& f : mvcf) o += int(f.domain.size());
    return o;
  }
  int static_size() const { return dynamic_offset(); }
  int dynamic_width() const { return kNumServiceKinds; }
  int dynamic_size() const { return sequence_length * kNumServiceKinds; }
  int vector_length() const { return dynamic_offset() + dynamic_size(); }

  int dynamic_index(int t, ServiceKind k) const {
    return dynamic_offset() + t * kNumServiceKinds + int(k);
  }

  // Numeric statics and the dynamic block are standardized; one-hot bits are not.
  bool is_numeric(int i) const {
    return i < num_numeric_static() || i >= dynamic_offset();
  }
  std::vector<int> numeric_indices() const {
    std::vector<int> out;
    for (int i = 0; i < vector_length(); ++i)
      if (is_numeric(i)) out.push_back(i);
    return out;
  }

  int numeric_static_index(std::string_view name) const {
    for (std::size_t i = 0; i < numeric_static.size(); ++i)
      if (numeric_static[i] == name) return int(i);
    return -1;
  }

  static std::string dynamic_name(int t, ServiceKind k) {
    std::string base = "30-Day_" + std::string(service_name(k));
    return t == 0 ? base : "(-" + std::to_string(t) + ")" + base;
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> names = numeric_static;
    for (auto& f : svcf)
      for (auto& v : f.domain) names.push_back(f.name + "_" + v);
    for (auto& f : mvcf)
      for (auto& v : f.domain) names.push_back(f.name + "_" + v);
    for (int t = 0; t < sequence_length; ++t)
      for (int k = 0; k < kNumServiceKinds; ++k) names.push_back(dynamic_name(t, ServiceKind(k)));
    return names;
  }

  nlohmann::json to_json() const {
    return {{"numeric_static", numeric_static},
            {"svcf", svcf},
            {"mvcf", mvcf},
            {"dynamic_services", std::vector<std::string>(kServiceNames.begin(), kServiceNames.end())},
            {"sequence_length", sequence_length},
            {"step_days", step_days},
            {"horizon_days", horizon_days},
            {"window_days", window_days},
            {"chronic_threshold", chronic_threshold},
            {"min_stay_minutes", min_stay_minutes}};
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    FeatureSchema s;
    j.at("numeric_static").get_to(s.numeric_static);
    j.at("svcf").get_to(s.svcf);
    j.at("mvcf").get_to(s.mvcf);
    auto services = j.at("dynamic_services").get<std::vector<std::string>>();
    if (services != std::vector<std::string>(kServiceNames.begin(), kServiceNames.end()))
      throw Error("schema: unsupported dynamic service list");
    j.at("sequence_length").get_to(s.sequence_length);
    j.at("step_days").get_to(s.step_days);
    j.at("horizon_days").get_to(s.horizon_days);
    j.at("window_days").get_to(s.window_days);
    j.at("chronic_threshold").get_to(s.chronic_threshold);
    j.at("min_stay_minutes").get_to(s.min_stay_minutes);
    return s;
  }

  std::uint64_t hash() const { return fnv1a(to_json().dump()); }

  bool operator==(const FeatureSchema& o) const { return to_json() == o.to_json(); }
};

// ---------------------------------------------------------------------------
// Labelling

// Distinct calendar days in (window_end - window_days, window_end] with at
// least one Stay visit of >= 15 minutes.
inline long count_stays(std::span<const ServiceEvent> events, long long client, Date window_end,
                        long window_days, int min_stay_minutes = kMinStayMinutes) {
  if (window_days < 1) throw Error("count_stays: window_days must be >= 1");
  return ClientTimeline(events, client, min_stay_minutes)
      .window(ServiceKind::kStay, window_end, window_days);
}

inline bool is_chronic(std::span<const ServiceEvent> events, long long client, Date as_of,
                       const FeatureSchema& schema = FeatureSchema::from_catalog()) {
  return count_stays(events, client, as_of, schema.window_days, schema.min_stay_minutes) >=
         schema.chronic_threshold;
}

inline bool is_chronic(const ClientTimeline& tl, Date as_of, const FeatureSchema& schema) {
  return tl.window(ServiceKind::kStay, as_of, schema.window_days) >= schema.chronic_threshold;
}

// Ground truth for an example dated `date`: chronic at date + horizon.
// Callers exclude examples whose horizon passes data_end.
inline int label_example(std::span<const ServiceEvent> events, long long client, Date date,
                         const FeatureSchema& schema = FeatureSchema::from_catalog()) {
  return is_chronic(events, client, date + std::chrono::days{schema.horizon_days}, schema) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Features

// T x 10 usage counts; row t covers the step ending at date - t * step_days.
using DynamicMatrix = std::vector<std::array<double, kNumServiceKinds>>;

inline DynamicMatrix dynamic_features(const ClientTimeline& tl, Date date,
                                      const FeatureSchema& schema) {
  DynamicMatrix m(schema.sequence_length);
  for (int t = 0; t < schema.sequence_length; ++t) {
    Date end = date - std::chrono::days{long(t) * schema.step_days};
    for (int k = 0; k < kNumServiceKinds; ++k)
      m[t][k] = double(tl.window(ServiceKind(k), end, schema.step_days));
  }
  return m;
}

inline DynamicMatrix dynamic_features(std::span<const ServiceEvent> events, long long client,
                                      Date date, const FeatureSchema& schema) {
  return dynamic_features(ClientTimeline(events, client, schema.min_stay_minutes), date, schema);
}

enum class ImputeKind { kNumeric, kWeightOrSpdat, kSvcf, kMvcf };

// Missing numerics become 0, except weight and SPDAT score which become -1.
inline double impute_numeric(std::optional<double> v, ImputeKind kind) {
  if (v) return *v;
  return kind == ImputeKind::kWeightOrSpdat ? -1.0 : 0.0;
}

inline std::string impute_svcf(const std::optional<std::string>& v) {
  return v && !v->empty() ? *v : std::string(kUnknown);
}

inline std::set<std::string> impute_mvcf(const std::optional<std::set<std::string>>& v) {
  return v ? *v : std::set<std::string>{};
}

// Everything `encode` needs about one client on one date.
struct ClientState {
  std::vector<double> numeric_static;
  std::map<std::string, std::string> svcf;
  std::map<std::string, std::set<std::string>> mvcf;
  DynamicMatrix dynamic;
};

// Numeric statics and categorical assignments as of `date`. TotalScore is the
// latest SPDAT score once the client has been assessed (immediately when the
// record holds a score but no SPDAT events), else -1.
inline ClientState static_features(const ClientAttributes& c, const ClientTimeline& tl, Date date,
                                   const FeatureSchema& schema) {
  ClientState s;
  s.numeric_static.assign(schema.numeric_static.size(), 0.0);
  bool assessed = tl.through(ServiceKind::kSpdat, date) > 0 ||
                  (c.latest_spdat_score && tl.through(ServiceKind::kSpdat, Date::max()) == 0);
  std::optional<double> score;
  if (assessed && c.latest_spdat_score) score = double(*c.latest_spdat_score);
  for (std::size_t i = 0; i < schema.numeric_static.size(); ++i) {
    const auto& name = schema.numeric_static[i];
    double v = 0;
    if (name == "CurrentAge") {
      v = age_in_years(c.birth_date, date);
    } else if (name == "ClientWeightKG") {
      v = impute_numeric(c.weight_kg, ImputeKind::kWeightOrSpdat);
    } else if (name == "IncomeAmount") {
      v = impute_numeric(c.monthly_income, ImputeKind::kNumeric);
    } else if (name == "ExpenseAmount") {
      v = impute_numeric(c.monthly_expense, ImputeKind::kNumeric);
    } else if (name == "TotalScore") {
      v = impute_numeric(score, ImputeKind::kWeightOrSpdat);
    } else if (name.rfind("Total_", 0) == 0) {
      auto k = parse_service(std::string_view(name).substr(6));
      if (!k) throw Error("schema: unknown service total '" + name + "'");
      v = double(tl.through(*k, date));
    } else {
      throw Error("schema: unknown numeric static '" + name + "'");
    }
    s.numeric_static[i] = v;
  }
  for (auto& f : schema.svcf) {
    auto it = c.svcf_values.find(f.name);
    s.svcf[f.name] = impute_svcf(it == c.svcf_values.end() ? std::nullopt
                                                           : std::optional<std::string>(it->second));
  }
  for (auto& f : schema.mvcf) {
    auto it = c.mvcf_values.find(f.name);
    s.mvcf[f.name] = impute_mvcf(it == c.mvcf_values.end()
                                     ? std::nullopt
                                     : std::optional<std::set<std::string>>(it->second));
  }
  return s;
}

inline ClientState static_features(const ClientAttributes& c, std::span<const ServiceEvent> events,
                                   Date date, const FeatureSchema& schema) {
  return static_features(c, ClientTimeline(events, c.client_id, schema.min_stay_minutes), date,
                         schema);
}

// Values outside a schema domain map to Unknown (SVCF) or are dropped (MVCF),
// with a warning.
inline std::vector<double> encode(const ClientState& s, const FeatureSchema& schema) {
  std::vector<double> x(schema.vector_length(), 0.0);
  if (s.numeric_static.size() != schema.numeric_static.size())
    throw Error("encode: numeric static count mismatch");
  std::copy(s.numeric_static.begin(), s.numeric_static.end(), x.begin());
  int o = schema.svcf_offset();
  for (auto& f : schema.svcf) {
    auto it = s.svcf.find(f.name);
    int idx = it == s.svcf.end() ? -1 : f.index_of(it->second);
    if (idx < 0) {
      if (it != s.svcf.end()) warn("encode: '" + it->second + "' not in " + f.name + " domain");
      idx = f.index_of(kUnknown);
    }
    x[o + idx] = 1.0;
    o += int(f.domain.size());
  }
  for (auto& f : schema.mvcf) {
    if (auto it = s.mvcf.find(f.name); it != s.mvcf.end()) {
      for (auto& v : it->second) {
        int idx = f.index_of(v);
        if (idx < 0)
          warn("encode: '" + v + "' not in " + f.name + " domain");
        else
          x[o + idx] = 1.0;
      }
    }
    o += int(f.domain.size());
  }
  if (int(s.dynamic.size()) != schema.sequence_length)
    throw Error("encode: dynamic matrix has wrong number of steps");
  for (int t = 0; t < schema.sequence_length; ++t)
    for (int k = 0; k < kNumServiceKinds; ++k) x[o + t * kNumServiceKinds + k] = s.dynamic[t][k];
  return x;
}

struct CategoricalAssignment {
  std::map<std::string, std::string> svcf;
  std::map<std::string, std::set<std::string>> mvcf;
  bool operator==(const CategoricalAssignment&) const = default;
};

inline CategoricalAssignment decode_categorical(std::span<const double> x,
                                                const FeatureSchema& schema) {
  CategoricalAssignment a;
  int o = schema.svcf_offset();
  for (auto& f : schema.svcf) {
    for (std::size_t i = 0; i < f.domain.size(); ++i)
      if (x[o + i] > 0.5) a.svcf[f.name] = f.domain[i];
    o += int(f.domain.size());
  }
  for (auto& f : schema.mvcf) {
    auto& set = a.mvcf[f.name];
    for (std::size_t i = 0; i < f.domain.size(); ++i)
      if (x[o + i] > 0.5) set.insert(f.domain[i]);
    o += int(f.domain.size());
  }
  return a;
}

// ---------------------------------------------------------------------------
// Standardization

struct StandardScaler {
  std::vector<int> indices;  // numeric feature positions
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<char> constant;  // sigma == 0: passed through unscaled

  bool operator==(const StandardScaler&) const = default;

  void apply(std::span<double> x) const {
    for (std::size_t j = 0; j < indices.size(); ++j)
      if (!constant[j]) x[indices[j]] = (x[indices[j]] - means[j]) / stds[j];
  }

  void invert(std::span<double> x) const {
    for (std::size_t j = 0; j < indices.size(); ++j)
      if (!constant[j]) x[indices[j]] = x[indices[j]] * stds[j] + means[j];
  }

  nlohmann::json to_json() const {
    std::vector<int> c(constant.begin(), constant.end());
    return {{"indices", indices}, {"means", means}, {"stds", stds}, {"constant", c}};
  }
  static StandardScaler from_json(const nlohmann::json& j) {
    StandardScaler s;
    j.at("indices").get_to(s.indices);
    j.at("means").get_to(s.means);
    j.at("stds").get_to(s.stds);
    auto c = j.at("constant").get<std::vector<int>>();
    s.constant.assign(c.begin(), c.end());
    return s;
  }
};

// ---------------------------------------------------------------------------
// Dataset

struct Example {
  long long client_id = 0;
  Date date{};
  std::vector<double> x;
  int y = 0;
  bool operator==(const Example&) const = default;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Example> examples;  // sorted by (date, client_id)
  std::optional<StandardScaler> scaler;

  std::vector<Date> dates() const {
    std::vector<Date> d;
    for (auto& e : examples)
      if (d.empty() || d.back() != e.date) d.push_back(e.date);
    return d;
  }

  double positive_rate() const {
    if (examples.empty()) return 0;
    double p = 0;
    for (auto& e : examples) p += e.y;
    return p / double(examples.size());
  }
};

// Population statistics over the numeric features of `rows`.
inline StandardScaler fit_scaler(const std::vector<const Example*>& rows,
                                 const FeatureSchema& schema) {
  StandardScaler s;
  s.indices = schema.numeric_indices();
  const std::size_t m = s.indices.size();
  s.means.assign(m, 0.0);
  s.stds.assign(m, 0.0);
  s.constant.assign(m, 0);
  if (rows.empty()) throw Error("fit_scaler: empty training set");
  const double n = double(rows.size());
  for (auto* e : rows)
    for (std::size_t j = 0; j < m; ++j) s.means[j] += e->x[s.indices[j]];
  for (auto& v : s.means) v /= n;
  for (auto* e : rows)
    for (std::size_t j = 0; j < m; ++j) {
      double d = e->x[s.indices[j]] - s.means[j];
      s.stds[j] += d * d;
    }
  for (std::size_t j = 0; j < m; ++j) {
    s.stds[j] = std::sqrt(s.stds[j] / n);
    if (!(s.stds[j] > 0)) {
      s.constant[j] = 1;
      s.stds[j] = 0;
    }
  }
  return s;
}

inline std::vector<Example> apply_scaler(const StandardScaler& s, std::vector<Example> rows) {
  for (auto& e : rows) s.apply(e.x);
  return rows;
}

// One example per (client, grid date) where grid dates end 30-day steps
// anchored at the earliest event day, from the client's first record through
// data_end - horizon. Unscaled.
inline Dataset build_dataset(const RecordSet& rs, const FeatureSchema& schema) {
  Dataset ds;
  ds.schema = schema;
  if (rs.events.empty()) return ds;
  std::unordered_map<long long, std::vector<ServiceEvent>> by_client;
  Date anchor = day_of(rs.events.front().start);
  for (auto& e : rs.events) {
    by_client[e.client_id].push_back(e);
    anchor = std::min(anchor, day_of(e.start));
  }
  const Date last_date = rs.data_end - std::chrono::days{schema.horizon_days};
  const std::chrono::days step{schema.step_days};
  for (auto& c : rs.clients) {
    auto it = by_client.find(c.client_id);
    if (it == by_client.end()) continue;
    ClientTimeline tl(it->second, c.client_id, schema.min_stay_minutes);
    for (Date g = anchor + step - std::chrono::days{1}; g <= last_date; g += step) {
      if (g < tl.first_record()) continue;
      ClientState st = static_features(c, tl, g, schema);
      st.dynamic = dynamic_features(tl, g, schema);
      Example ex;
      ex.client_id = c.client_id;
      ex.date = g;
      ex.x = encode(st, schema);
      ex.y = is_chronic(tl, g + std::chrono::days{schema.horizon_days}, schema) ? 1 : 0;
      ds.examples.push_back(std::move(ex));
    }
  }
  std::sort(ds.examples.begin(), ds.examples.end(), [](const Example& a, const Example& b) {
    return std::tie(a.date, a.client_id) < std::tie(b.date, b.client_id);
  });
  return ds;
}

// ---------------------------------------------------------------------------
// Rolling-origin partitioning

struct Split {
  std::vector<std::size_t> train, val, test;  // indices into Dataset::examples
  std::vector<Date> train_dates, val_dates, test_dates;
};

// Fold k (1-based): drop the k-1 most recent grid dates, hold out the latest
// `test_steps` remaining dates for test and the `val_steps` before them for
// validation; everything earlier trains.
inline Split partition(const Dataset& ds, int k, int val_steps = 1, int test_steps = 1) {
  if (k < 1) throw Error("partition: fold index must be >= 1");
  if (val_steps < 1 || test_steps < 1) throw Error("partition: val/test steps must be >= 1");
  auto dates = ds.dates();
  const long need = long(k - 1) + val_steps + test_steps + 1;
  if (long(dates.size()) < need)
    throw Error("partition: fold " + std::to_string(k) + " needs " + std::to_string(need) +
                " time steps, dataset has " + std::to_string(dates.size()));
  const std::size_t usable = dates.size() - std::size_t(k - 1);
  const std::size_t test_from = usable - std::size_t(test_steps);
  const std::size_t val_from = test_from - std::size_t(val_steps);
  Split s;
  s.train_dates.assign(dates.begin(), dates.begin() + long(val_from));
  s.val_dates.assign(dates.begin() + long(val_from), dates.begin() + long(test_from));
  s.test_dates.assign(dates.begin() + long(test_from), dates.begin() + long(usable));
  const Date val_start = dates[val_from], test_start = dates[test_from];
  const Date end = dates[usable - 1];
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    Date d = ds.examples[i].date;
    if (d > end) continue;
    if (d >= test_start)
      s.test.push_back(i);
    else if (d >= val_start)
      s.val.push_back(i);
    else
      s.train.push_back(i);
  }
  return s;
}

inline std::vector<const Example*> select(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<const Example*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&ds.examples[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: CSV rows plus a JSON sidecar with schema and scaler.

inline void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                         const std::filesystem::path& json_path) {
  {
    std::ofstream os(csv_path, std::ios::binary);
    if (!os) throw Error("cannot write " + csv_path.string());
    csv::Row header = {"ClientID", "Date", "y"};
    for (auto& n : ds.schema.feature_names()) header.push_back(n);
    csv::write_row(os, header);
    for (auto& e : ds.examples) {
      os << e.client_id << ',' << format_date(e.date) << ',' << e.y;
      for (double v : e.x) os << ',' << format_double(v);
      os << '\n';
    }
    if (!os) throw Error("I/O failure writing " + csv_path.string());
  }
  nlohmann::json j = {{"schema", ds.schema.to_json()},
                      {"schema_hash", ds.schema.hash()},
                      {"examples", ds.examples.size()}};
  if (ds.scaler) j["scaler"] = ds.scaler->to_json();
  std::ofstream os(json_path);
  if (!os) throw Error("cannot write " + json_path.string());
  os << j.dump(2) << '\n';
}

inline Dataset load_dataset(const std::filesystem::path& csv_path,
                            const std::filesystem::path& json_path) {
  std::ifstream js(json_path);
  if (!js) throw Error("cannot open " + json_path.string());
  auto j = nlohmann::json::parse(js);
  Dataset ds;
  ds.schema = FeatureSchema::from_json(j.at("schema"));
  if (j.contains("scaler")) ds.scaler = StandardScaler::from_json(j["scaler"]);
  auto t = csv::read(csv_path.string());
  const int f = ds.schema.vector_length();
  if (int(t.header.size()) != 3 + f)
    throw Error(csv_path.string() + ": header has " + std::to_string(t.header.size()) +
                " columns, schema expects " + std::to_string(3 + f));
  ds.examples.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto& row = t.rows[r];
    Example e;
    auto id = parse_int64(row[0]);
    if (!id) t.fail(r, "ClientID", "expected an integer");
    e.client_id = *id;
    auto d = parse_date(row[1]);
    if (!d) t.fail(r, "Date", "expected YYYY-MM-DD");
    e.date = *d;
    auto y = parse_int(row[2]);
    if (!y || (*y != 0 && *y != 1)) t.fail(r, "y", "expected 0 or 1");
    e.y = *y;
    e.x.resize(f);
    for (int i = 0; i < f; ++i) {
      auto v = parse_double(row[3 + i]);
      if (!v) t.fail(r, t.header[3 + i], "expected a number");
      e.x[i] = *v;
    }
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

}  // namespace chronic

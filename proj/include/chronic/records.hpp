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

// Raw client-record model: client attributes, dated service events, and the
// two-file CSV representation.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "chronic/catalog.hpp"
#include "chronic/common.hpp"
#include "chronic/csv.hpp"

namespace chronic {

struct ClientAttributes {
  long long client_id = 0;
  Date birth_date{};
  std::optional<double> weight_kg;
  std::map<std::string, std::string> svcf_values;             // absent key = missing
  std::map<std::string, std::set<std::string>> mvcf_values;  // absent or empty = none
  std::optional<double> monthly_income;
  std::optional<double> monthly_expense;
  std::optional<int> latest_spdat_score;  // [0, 12]

  bool operator==(const ClientAttributes&) const = default;
};

struct ServiceEvent {
  long long client_id = 0;
  ServiceKind service = ServiceKind::kStay;
  Timestamp start{};
  Timestamp end{};

  std::chrono::minutes duration() const { return end - start; }
  bool operator==(const ServiceEvent&) const = default;
};

struct RecordSet {
  std::vector<ClientAttributes> clients;
  std::vector<ServiceEvent> events;
  Date data_end{};

  bool operator==(const RecordSet&) const = default;

  // Throws on any broken invariant.
  void validate() const {
    std::unordered_set<long long> ids;
    for (auto& c : clients) {
      if (!ids.insert(c.client_id).second)
        throw Error("duplicate ClientID " + std::to_string(c.client_id));
      if (c.latest_spdat_score && (*c.latest_spdat_score < 0 || *c.latest_spdat_score > 12))
        throw Error("SPDAT score out of [0,12] for client " + std::to_string(c.client_id));
      if (c.weight_kg && *c.weight_kg < 0)
        throw Error("negative weight for client " + std::to_string(c.client_id));
    }
    for (auto& e : events) {
      if (!ids.count(e.client_id))
        throw Error("event references unknown ClientID " + std::to_string(e.client_id));
      if (e.end < e.start) throw Error("event ends before it starts: " + format_timestamp(e.start));
      if (day_of(e.end) > data_end)
        throw Error("event after data end: " + format_timestamp(e.end));
    }
  }

  // Latest event day, the natural data_end for a loaded record set.
  Date last_event_day() const {
    Date d{};
    bool any = false;
    for (auto& e : events) {
      Date x = day_of(e.end);
      if (!any || x > d) d = x;
      any = true;
    }
    return d;
  }
};

inline constexpr std::string_view kClientsFile = "clients.csv";
inline constexpr std::string_view kEventsFile = "events.csv";

inline csv::Row client_header(const CategoryCatalog& cat) {
  csv::Row h = {"ClientID",      "BirthDate",      "WeightKG",
                "MonthlyIncome", "MonthlyExpense", "SpdatScore"};
  for (auto& f : cat.svcf) h.push_back(f.name);
  for (auto& f : cat.mvcf) h.push_back(f.name);
  return h;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

// Writes `dir/clients.csv` and `dir/events.csv`. Clients are written in
// stored order, events sorted by (client, start, service, end).
inline void save_records(const RecordSet& rs, const std::filesystem::path& dir,
                         const CategoryCatalog& cat = default_catalog()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    return os;
  };
  {
    auto p = dir / kClientsFile;
    auto os = open(p);
    csv::write_row(os, client_header(cat));
    for (auto& c : rs.clients) {
      csv::Row r = {std::to_string(c.client_id), format_date(c.birth_date),
                    format_optional(c.weight_kg), format_optional(c.monthly_income),
                    format_optional(c.monthly_expense),
                    c.latest_spdat_score ? std::to_string(*c.latest_spdat_score) : ""};
      for (auto& f : cat.svcf) {
        auto it = c.svcf_values.find(f.name);
        r.push_back(it == c.svcf_values.end() ? "" : it->second);
      }
      for (auto& f : cat.mvcf) {
        std::string cell;
        if (auto it = c.mvcf_values.find(f.name); it != c.mvcf_values.end()) {
          for (auto& v : it->second) {
            if (!cell.empty()) cell += '|';
            cell += v;
          }
        }
        r.push_back(cell);
      }
      csv::write_row(os, r);
    }
    if (!os) throw Error("I/O failure writing " + p.string());
  }
  {
    auto p = dir / kEventsFile;
    auto os = open(p);
    csv::write_row(os, {"ClientID", "ServiceType", "Start", "End"});
    std::vector<const ServiceEvent*> sorted;
    sorted.reserve(rs.events.size());
    for (auto& e : rs.events) sorted.push_back(&e);
    std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
      return std::tie(a->client_id, a->start, a->service, a->end) <
             std::tie(b->client_id, b->start, b->service, b->end);
    });
    for (auto* e : sorted)
      csv::write_row(os, {std::to_string(e->client_id), std::string(service_name(e->service)),
                          format_timestamp(e->start), format_timestamp(e->end)});
    if (!os) throw Error("I/O failure writing " + p.string());
  }
}

// Reads the two CSV files in `dir`. data_end defaults to the latest event
// day. Columns the catalog does not know are ignored with a warning.
inline RecordSet load_records(const std::filesystem::path& dir,
                              const CategoryCatalog& cat = default_catalog(),
                              std::optional<Date> data_end = std::nullopt) {
  RecordSet rs;
  auto ct = csv::read((dir / kClientsFile).string());
  const csv::Row fixed = {"ClientID",      "BirthDate",      "WeightKG",
                          "MonthlyIncome", "MonthlyExpense", "SpdatScore"};
  std::vector<int> fixed_col;
  for (auto& name : fixed) {
    int c = ct.column(name);
    if (c < 0) throw Error(ct.path + ": missing column " + name);
    fixed_col.push_back(c);
  }
  std::vector<std::pair<int, const CategoricalFeature*>> svcf_cols, mvcf_cols;
  for (std::size_t i = 0; i < ct.header.size(); ++i) {
    auto& h = ct.header[i];
    if (std::find(fixed.begin(), fixed.end(), h) != fixed.end()) continue;
    if (auto* f = cat.find_svcf(h)) {
      svcf_cols.emplace_back(int(i), f);
    } else if (auto* f = cat.find_mvcf(h)) {
      mvcf_cols.emplace_back(int(i), f);
    } else {
      warn(ct.path + ": ignoring unknown column '" + h + "'");
    }
  }
  auto opt_num = [&](std::size_t row, int col, const char* name) -> std::optional<double> {
    auto& s = ct.rows[row][col];
    if (s.empty()) return std::nullopt;
    auto v = parse_double(s);
    if (!v || *v < 0) ct.fail(row, name, "expected a non-negative number, got '" + s + "'");
    return v;
  };
  for (std::size_t r = 0; r < ct.rows.size(); ++r) {
    auto& row = ct.rows[r];
    ClientAttributes c;
    auto id = parse_int64(row[fixed_col[0]]);
    if (!id) ct.fail(r, "ClientID", "expected an integer, got '" + row[fixed_col[0]] + "'");
    c.client_id = *id;
    auto bd = parse_date(row[fixed_col[1]]);
    if (!bd) ct.fail(r, "BirthDate", "expected YYYY-MM-DD, got '" + row[fixed_col[1]] + "'");
    c.birth_date = *bd;
    c.weight_kg = opt_num(r, fixed_col[2], "WeightKG");
    c.monthly_income = opt_num(r, fixed_col[3], "MonthlyIncome");
    c.monthly_expense = opt_num(r, fixed_col[4], "MonthlyExpense");
    if (auto& s = row[fixed_col[5]]; !s.empty()) {
      auto v = parse_int(s);
      if (!v || *v < 0 || *v > 12) ct.fail(r, "SpdatScore", "expected integer in [0,12], got '" + s + "'");
      c.latest_spdat_score = v;
    }
    for (auto [col, f] : svcf_cols)
      if (!row[col].empty()) c.svcf_values[f->name] = row[col];
    for (auto [col, f] : mvcf_cols) {
      auto& cell = row[col];
      if (cell.empty()) continue;
      auto& set = c.mvcf_values[f->name];
      std::size_t pos = 0;
      while (pos <= cell.size()) {
        auto next = cell.find('|', pos);
        if (next == std::string::npos) next = cell.size();
        if (next > pos) set.insert(cell.substr(pos, next - pos));
        pos = next + 1;
      }
    }
    rs.clients.push_back(std::move(c));
  }

  auto et = csv::read((dir / kEventsFile).string());
  const csv::Row ecols = {"ClientID", "ServiceType", "Start", "End"};
  std::vector<int> ec;
  for (auto& name : ecols) {
    int c = et.column(name);
    if (c < 0) throw Error(et.path + ": missing column " + name);
    ec.push_back(c);
  }
  for (std::size_t i = 0; i < et.header.size(); ++i)
    if (std::find(ecols.begin(), ecols.end(), et.header[i]) == ecols.end())
      warn(et.path + ": ignoring unknown column '" + et.header[i] + "'");
  std::unordered_set<long long> ids;
  for (auto& c : rs.clients) ids.insert(c.client_id);
  for (std::size_t r = 0; r < et.rows.size(); ++r) {
    auto& row = et.rows[r];
    ServiceEvent e;
    auto id = parse_int64(row[ec[0]]);
    if (!id) et.fail(r, "ClientID", "expected an integer, got '" + row[ec[0]] + "'");
    if (!ids.count(*id)) et.fail(r, "ClientID", "unknown client " + row[ec[0]]);
    e.client_id = *id;
    auto kind = parse_service(row[ec[1]]);
    if (!kind) et.fail(r, "ServiceType", "unknown service '" + row[ec[1]] + "'");
    e.service = *kind;
    auto s = parse_timestamp(row[ec[2]]);
    if (!s) et.fail(r, "Start", "expected YYYY-MM-DDTHH:MM, got '" + row[ec[2]] + "'");
    auto en = parse_timestamp(row[ec[3]]);
    if (!en) et.fail(r, "End", "expected YYYY-MM-DDTHH:MM, got '" + row[ec[3]] + "'");
    if (*en < *s) et.fail(r, "End", "end precedes start");
    e.start = *s;
    e.end = *en;
    rs.events.push_back(e);
  }
  rs.data_end = data_end ? *data_end : rs.last_event_day();
  rs.validate();
  return rs;
}

}  // namespace chronic

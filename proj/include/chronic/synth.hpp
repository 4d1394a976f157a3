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

// Synthetic client populations with a planted chronic-risk rule.
//
// Each client belongs to a latent low- or high-risk class. High-risk
// clients ramp up to near-daily shelter stays, never receive a housing
// subsidy, and are older than 52; rule_strength in [0,1] controls how fully
// those traits are expressed. Low-risk clients stay occasionally, sometimes
// with a short burst of daily stays that never reaches the chronic
// threshold. Class membership is calibrated so the fraction of positive
// labelled examples matches target_positive_rate.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "chronic/catalog.hpp"
#include "chronic/common.hpp"
#include "chronic/random.hpp"
#include "chronic/records.hpp"

namespace chronic {

struct SynthConfig {
  int clients = 3000;
  std::string start_date = "2016-01-01";
  int span_days = 1095;
  double target_positive_rate = 0.065;
  double rule_strength = 1.0;

  double low_stay_rate = 0.12;
  double high_stay_rate = 0.85;
  int ramp_days = 150;
  double burst_fraction = 0.3;
  int burst_min_days = 40;
  int burst_max_days = 100;
  double subsidy_fraction = 0.6;
  int min_active_days = 60;
  int max_active_days = 900;
  double short_visit_rate = 0.03;

  // Labelling constants used for calibration; keep in step with the
  // preprocessing options.
  int step_days = 30;
  int horizon_days = 180;
  int window_days = 365;
  int chronic_threshold = 180;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, clients, start_date, span_days,
                                                target_positive_rate, rule_strength, low_stay_rate,
                                                high_stay_rate, ramp_days, burst_fraction,
                                                burst_min_days, burst_max_days, subsidy_fraction,
                                                min_active_days, max_active_days, short_visit_rate,
                                                step_days, horizon_days, window_days,
                                                chronic_threshold)

namespace detail {

struct SimulatedClient {
  ClientAttributes attrs;
  std::vector<ServiceEvent> events;
  std::vector<char> stay_day;  // indexed by day offset from start
};

inline SimulatedClient simulate_client(const SynthConfig& cfg, long long id, bool high_risk,
                                       Date start, int entry, Rng& rng) {
  using std::chrono::minutes;
  const int last = cfg.span_days - 1;
  const double s = cfg.rule_strength;
  SimulatedClient out;
  out.stay_day.assign(cfg.span_days, 0);
  const Timestamp hard_end = Timestamp{start + std::chrono::days{last}} + minutes{23 * 60 + 59};

  auto at = [&](int day, int minute_of_day) {
    return Timestamp{start + std::chrono::days{day}} + minutes{minute_of_day};
  };
  auto add = [&](ServiceKind k, Timestamp a, Timestamp b) {
    if (b > hard_end) b = hard_end;
    if (a > b) a = b;
    out.events.push_back({id, k, a, b});
  };

  int exit = last;
  if (!high_risk)
    exit = std::min<int>(last, entry + int(rng.integer(cfg.min_active_days, cfg.max_active_days)));

  // Shelter stays.
  const double high_rate = cfg.low_stay_rate + s * (cfg.high_stay_rate - cfg.low_stay_rate);
  std::vector<double> rate(cfg.span_days, 0.0);
  for (int d = entry; d <= exit; ++d) {
    if (high_risk) {
      double ramp = std::min(1.0, double(d - entry) / std::max(1, cfg.ramp_days));
      rate[d] = cfg.low_stay_rate + (high_rate - cfg.low_stay_rate) * ramp;
    } else {
      rate[d] = cfg.low_stay_rate;
    }
  }
  if (!high_risk && rng.bernoulli(cfg.burst_fraction)) {
    int len = int(rng.integer(cfg.burst_min_days, cfg.burst_max_days));
    int from = int(rng.integer(entry, std::max(entry, exit - len)));
    for (int d = from; d < std::min(exit + 1, from + len); ++d) rate[d] = 0.95;
  }
  for (int d = entry; d <= exit; ++d) {
    if (d == entry || rng.bernoulli(rate[d])) {
      out.stay_day[d] = 1;
      int in = 19 * 60 + int(rng.integer(0, 180));
      add(ServiceKind::kStay, at(d, in), at(d, in) + minutes{rng.integer(480, 720)});
      if (rng.bernoulli(0.05)) {
        int extra = 8 * 60 + int(rng.integer(0, 120));
        add(ServiceKind::kStay, at(d, extra), at(d, extra) + minutes{rng.integer(15, 60)});
      }
    } else if (rng.bernoulli(cfg.short_visit_rate)) {
      int in = 10 * 60 + int(rng.integer(0, 300));
      add(ServiceKind::kStay, at(d, in), at(d, in) + minutes{rng.integer(1, 14)});
    }
  }

  // Other services carry no risk signal: they continue after a shelter exit.
  for (int d = entry; d <= last; ++d) {
    if (rng.bernoulli(0.2)) add(ServiceKind::kFoodBank, at(d, 18 * 60), at(d, 18 * 60 + 30));
    if (rng.bernoulli(0.03)) add(ServiceKind::kReservations, at(d, 12 * 60), at(d, 12 * 60 + 5));
    if (rng.bernoulli(0.04)) add(ServiceKind::kCaseManagement, at(d, 600), at(d, 660));
    if (rng.bernoulli(0.01)) add(ServiceKind::kTurnaways, at(d, 23 * 60), at(d, 23 * 60));
    if (rng.bernoulli(0.02)) add(ServiceKind::kGoodsAndServices, at(d, 14 * 60), at(d, 14 * 60 + 15));
    if (rng.bernoulli(0.01)) {
      int len = int(rng.integer(1, 7));
      add(ServiceKind::kStorage, at(d, 9 * 60), at(std::min(last, d + len - 1), 17 * 60));
    }
  }

  // Housing subsidy: consecutive 30-day spans from shortly after entry.
  const double subsidy_p = high_risk ? (1.0 - s) * cfg.subsidy_fraction : cfg.subsidy_fraction;
  if (rng.bernoulli(subsidy_p)) {
    for (int d = entry + int(rng.integer(0, 30)); d <= exit; d += 30)
      add(ServiceKind::kHousingSubsidy, at(d, 9 * 60), at(std::min(last, d + 29), 17 * 60));
  }
  if (rng.bernoulli(0.15)) {
    int from = int(rng.integer(entry, last));
    int len = int(rng.integer(30, 120));
    add(ServiceKind::kHousing, at(from, 9 * 60), at(std::min(last, from + len - 1), 17 * 60));
  }

  // SPDAT assessments.
  bool spdat = false;
  if (rng.bernoulli(0.5)) {
    add(ServiceKind::kSpdat, at(entry, 13 * 60), at(entry, 14 * 60));
    spdat = true;
  }
  for (int d = entry + 1; d <= last; ++d) {
    if (rng.bernoulli(0.004)) {
      add(ServiceKind::kSpdat, at(d, 13 * 60), at(d, 14 * 60));
      spdat = true;
    }
  }

  // Attributes.
  auto& a = out.attrs;
  a.client_id = id;
  double age = (high_risk && rng.bernoulli(s)) ? rng.uniform(53.0, 75.0) : rng.uniform(18.0, 60.0);
  a.birth_date = start + std::chrono::days{entry} -
                 std::chrono::days{static_cast<long>(std::floor(age * 365.25))};
  if (rng.bernoulli(0.9))
    a.weight_kg = std::round(std::clamp(rng.normal(75.0, 15.0), 40.0, 150.0) * 10.0) / 10.0;
  if (rng.bernoulli(0.9)) a.monthly_income = std::round(rng.uniform(0.0, 2000.0) * 100.0) / 100.0;
  if (rng.bernoulli(0.85)) a.monthly_expense = std::round(rng.uniform(0.0, 1500.0) * 100.0) / 100.0;
  if (spdat) a.latest_spdat_score = int(rng.integer(0, 12));
  const auto& cat = default_catalog();
  for (auto& f : cat.svcf) {
    if (rng.bernoulli(0.05)) continue;
    a.svcf_values[f.name] = f.domain[rng.integer(0, long(f.domain.size()) - 2)];
  }
  for (auto& f : cat.mvcf) {
    std::set<std::string> vals;
    for (auto& v : f.domain)
      if (rng.bernoulli(0.15)) vals.insert(v);
    if (!vals.empty()) a.mvcf_values[f.name] = std::move(vals);
  }
  return out;
}

// Positive examples a client would contribute on the shared grid.
inline long count_positive_examples(const SynthConfig& cfg, const std::vector<char>& stay_day,
                                    int entry, int anchor, int last) {
  std::vector<int> prefix(stay_day.size() + 1, 0);
  for (std::size_t i = 0; i < stay_day.size(); ++i) prefix[i + 1] = prefix[i] + stay_day[i];
  auto stays_through = [&](int day) {
    day = std::clamp(day, -1, int(stay_day.size()) - 1);
    return prefix[day + 1];
  };
  long pos = 0;
  for (int g = anchor + cfg.step_days - 1; g + cfg.horizon_days <= last; g += cfg.step_days) {
    if (g < entry) continue;
    int t = g + cfg.horizon_days;
    if (stays_through(t) - stays_through(t - cfg.window_days) >= cfg.chronic_threshold) ++pos;
  }
  return pos;
}

inline long count_labelable_examples(const SynthConfig& cfg, int entry, int anchor, int last) {
  long n = 0;
  for (int g = anchor + cfg.step_days - 1; g + cfg.horizon_days <= last; g += cfg.step_days)
    if (g >= entry) ++n;
  return n;
}

}  // namespace detail

inline void validate(const SynthConfig& cfg) {
  if (cfg.clients < 0) throw Error("synth: clients must be >= 0");
  if (cfg.span_days < 1) throw Error("synth: span_days must be >= 1");
  if (!parse_date(cfg.start_date)) throw Error("synth: bad start_date '" + cfg.start_date + "'");
  if (cfg.rule_strength < 0 || cfg.rule_strength > 1)
    throw Error("synth: rule_strength must be in [0,1]");
  if (cfg.target_positive_rate < 0 || cfg.target_positive_rate >= 1)
    throw Error("synth: target_positive_rate must be in [0,1)");
  if (cfg.target_positive_rate == 0 && cfg.rule_strength > 0)
    throw Error("synth: a planted rule needs a nonzero target positive rate");
  if (cfg.target_positive_rate > 0 && cfg.rule_strength == 0)
    throw Error("synth: a nonzero target positive rate needs rule_strength > 0");
  if (cfg.min_active_days < 1 || cfg.max_active_days < cfg.min_active_days)
    throw Error("synth: bad active-days range");
  if (cfg.burst_min_days < 1 || cfg.burst_max_days < cfg.burst_min_days)
    throw Error("synth: bad burst length range");
  if (cfg.step_days < 1 || cfg.horizon_days < 0 || cfg.window_days < 1)
    throw Error("synth: bad labelling constants");
}

// Deterministic in (cfg, seed). Client ids are 1..clients.
inline RecordSet generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const Date start = *parse_date(cfg.start_date);
  const int last = cfg.span_days - 1;
  RecordSet rs;
  rs.data_end = start + std::chrono::days{last};
  if (cfg.clients == 0) return rs;

  const int n = cfg.clients;
  std::vector<int> entry(n);
  std::vector<double> u(n);
  // Entries leave room for at least one labelled step when the span allows.
  const int latest_entry = std::max(0, last - cfg.horizon_days - cfg.step_days);
  for (int i = 0; i < n; ++i) {
    Rng r(derive_seed(seed, std::uint64_t(i), 0));
    entry[i] = int(r.integer(0, latest_entry));
    u[i] = r.uniform();
  }
  const int anchor = *std::min_element(entry.begin(), entry.end());

  auto sim = [&](int i, bool high) {
    Rng r(derive_seed(seed, std::uint64_t(i), high ? 2 : 1));
    return detail::simulate_client(cfg, i + 1, high, start, entry[i], r);
  };

  // Calibrate how many of the lowest-u clients belong to the high-risk class.
  std::vector<long> pos_low(n), pos_high(n);
  long labelable = 0;
  for (int i = 0; i < n; ++i) {
    pos_low[i] = detail::count_positive_examples(cfg, sim(i, false).stay_day, entry[i], anchor, last);
    pos_high[i] = detail::count_positive_examples(cfg, sim(i, true).stay_day, entry[i], anchor, last);
    labelable += detail::count_labelable_examples(cfg, entry[i], anchor, last);
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return u[a] < u[b]; });
  long positives = std::accumulate(pos_low.begin(), pos_low.end(), 0L);
  int n_high = 0;
  if (labelable > 0 && cfg.target_positive_rate > 0) {
    const double target = cfg.target_positive_rate * double(labelable);
    double best = std::abs(double(positives) - target);
    long running = positives;
    for (int k = 1; k <= n; ++k) {
      running += pos_high[order[k - 1]] - pos_low[order[k - 1]];
      double gap = std::abs(double(running) - target);
      if (gap < best) {
        best = gap;
        n_high = k;
      }
    }
    long all_high = std::accumulate(pos_high.begin(), pos_high.end(), 0L);
    if (labelable >= 1000 && double(all_high) / double(labelable) < cfg.target_positive_rate - 0.02)
      throw Error("synth: target positive rate unreachable with this configuration");
  }
  std::vector<char> high(n, 0);
  for (int k = 0; k < n_high; ++k) high[order[k]] = 1;

  for (int i = 0; i < n; ++i) {
    auto c = sim(i, high[i] != 0);
    rs.clients.push_back(std::move(c.attrs));
    rs.events.insert(rs.events.end(), c.events.begin(), c.events.end());
  }
  std::stable_sort(rs.events.begin(), rs.events.end(), [](auto& a, auto& b) {
    return std::tie(a.client_id, a.start, a.service, a.end) <
           std::tie(b.client_id, b.start, b.service, b.end);
  });
  rs.data_end = rs.last_event_day();
  return rs;
}

inline SynthConfig load_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return nlohmann::json::parse(in).get<SynthConfig>();
}

}  // namespace chronic

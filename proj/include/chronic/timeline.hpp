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

// Per-client daily usage series. Each service is reduced to a count per
// calendar day, so any window count is a prefix-sum difference:
//   Stay:       1 if the day starts at least one visit of >= min_stay minutes
//               (a visit spanning midnight counts on its start day);
//   day-based:  1 if any event of that service covers the day;
//   event-based: number of events starting that day.

#include <algorithm>
#include <array>
#include <span>
#include <vector>

#include "chronic/catalog.hpp"
#include "chronic/common.hpp"
#include "chronic/records.hpp"

namespace chronic {

inline constexpr int kMinStayMinutes = 15;

class ClientTimeline {
 public:
  ClientTimeline() = default;

  // Uses only the events belonging to `client`.
  ClientTimeline(std::span<const ServiceEvent> events, long long client,
                 int min_stay_minutes = kMinStayMinutes) {
    bool any = false;
    Date lo{}, hi{};
    for (auto& e : events) {
      if (e.client_id != client) continue;
      Date a = day_of(e.start), b = day_of(e.end);
      if (!any || a < lo) lo = a;
      if (!any || b > hi) hi = b;
      if (!any || a < first_) first_ = a;
      any = true;
    }
    if (!any) return;
    origin_ = lo;
    const long n = days_between(lo, hi) + 1;
    std::array<std::vector<int>, kNumServiceKinds> daily;
    for (auto& d : daily) d.assign(n, 0);
    for (auto& e : events) {
      if (e.client_id != client) continue;
      const long a = days_between(origin_, day_of(e.start));
      const int k = int(e.service);
      if (e.service == ServiceKind::kStay) {
        if (e.duration().count() >= min_stay_minutes) daily[k][a] = 1;
      } else if (counts_days(e.service)) {
        const long b = days_between(origin_, day_of(e.end));
        for (long d = a; d <= b; ++d) daily[k][d] = 1;
      } else {
        daily[k][a] += 1;
      }
    }
    for (int k = 0; k < kNumServiceKinds; ++k) {
      auto& p = prefix_[k];
      p.assign(n + 1, 0);
      for (long d = 0; d < n; ++d) p[d + 1] = p[d] + daily[k][d];
    }
    empty_ = false;
  }

  bool empty() const { return empty_; }
  Date first_record() const { return first_; }

  // Usage of `k` on days in (end - days, end].
  long window(ServiceKind k, Date end, long days) const { return through(k, end) - through(k, end - std::chrono::days{days}); }

  // Usage of `k` on all days up to and including `end`.
  long through(ServiceKind k, Date end) const {
    if (empty_) return 0;
    auto& p = prefix_[int(k)];
    long d = days_between(origin_, end);
    if (d < 0) return 0;
    d = std::min<long>(d, long(p.size()) - 2);
    return p[d + 1];
  }

 private:
  bool empty_ = true;
  Date origin_{}, first_{};
  std::array<std::vector<long>, kNumServiceKinds> prefix_;
};

}  // namespace chronic

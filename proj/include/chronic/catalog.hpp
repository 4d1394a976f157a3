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

// Service kinds and the categorical vocabularies shared by the raw record
// files and the encoded feature layout.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "chronic/common.hpp"

namespace chronic {

enum class ServiceKind : int {
  kStay = 0,
  kCaseManagement,
  kHousing,
  kHousingSubsidy,
  kStorage,
  kReservations,
  kTurnaways,
  kFoodBank,
  kGoodsAndServices,
  kSpdat,
};

inline constexpr int kNumServiceKinds = 10;

inline constexpr std::array<std::string_view, kNumServiceKinds> kServiceNames = {
    "Stay",       "Case Management", "Housing",   "Housing Subsidy",    "Storage",
    "Reservations", "Turnaways",     "Food Bank", "Goods and Services", "SPDAT"};

inline std::string_view service_name(ServiceKind k) { return kServiceNames[int(k)]; }

inline std::optional<ServiceKind> parse_service(std::string_view s) {
  for (int i = 0; i < kNumServiceKinds; ++i)
    if (kServiceNames[i] == s) return ServiceKind(i);
  return std::nullopt;
}

// Services whose usage is measured in days covered by the event span; the
// rest are counted per event. Stays have their own rule (see count_stays).
inline bool counts_days(ServiceKind k) {
  switch (k) {
    case ServiceKind::kCaseManagement:
    case ServiceKind::kHousing:
    case ServiceKind::kHousingSubsidy:
    case ServiceKind::kStorage:
      return true;
    default:
      return false;
  }
}

struct CategoricalFeature {
  std::string name;
  std::vector<std::string> domain;

  int index_of(std::string_view v) const {
    for (std::size_t i = 0; i < domain.size(); ++i)
      if (domain[i] == v) return int(i);
    return -1;
  }
};

inline constexpr std::string_view kUnknown = "Unknown";

// SVCF domains always end in "Unknown"; MVCF domains never contain it.
struct CategoryCatalog {
  std::vector<CategoricalFeature> svcf;
  std::vector<CategoricalFeature> mvcf;

  const CategoricalFeature* find_svcf(std::string_view n) const {
    for (auto& f : svcf)
      if (f.name == n) return &f;
    return nullptr;
  }
  const CategoricalFeature* find_mvcf(std::string_view n) const {
    for (auto& f : mvcf)
      if (f.name == n) return &f;
    return nullptr;
  }

  void validate() const {
    for (auto& f : svcf) {
      if (f.domain.empty() || f.domain.back() != kUnknown)
        throw Error("SVCF '" + f.name + "' domain must end with Unknown");
    }
    for (auto& f : mvcf) {
      if (f.index_of(kUnknown) >= 0) throw Error("MVCF '" + f.name + "' must not list Unknown");
      for (auto& v : f.domain)
        if (v.find('|') != std::string::npos)
          throw Error("MVCF value '" + v + "' contains the list separator");
    }
  }
};

inline void to_json(nlohmann::json& j, const CategoricalFeature& f) {
  j = nlohmann::json{{"name", f.name}, {"domain", f.domain}};
}
inline void from_json(const nlohmann::json& j, CategoricalFeature& f) {
  j.at("name").get_to(f.name);
  j.at("domain").get_to(f.domain);
}
inline void to_json(nlohmann::json& j, const CategoryCatalog& c) {
  j = nlohmann::json{{"svcf", c.svcf}, {"mvcf", c.mvcf}};
}
inline void from_json(const nlohmann::json& j, CategoryCatalog& c) {
  j.at("svcf").get_to(c.svcf);
  j.at("mvcf").get_to(c.mvcf);
  c.validate();
}

// Fixed vocabularies (mirrored in data/schema.json).
inline const CategoryCatalog& default_catalog() {
  static const CategoryCatalog c{
      {
          {"Gender", {"Male", "Female", "Other", "Unknown"}},
          {"AboriginalIndicator", {"Yes", "No", "Unknown"}},
          {"Citizenship", {"Canadian Citizen", "Permanent Resident", "Refugee", "Unknown"}},
          {"VeteranStatus", {"Not a Veteran", "Canadian Armed Forces", "Unknown"}},
          {"InHousing", {"Y", "N", "Unknown"}},
          {"ExpenseFrequency", {"Monthly", "Weekly", "Unknown"}},
          {"HasFamily", {"Y", "N", "Unknown"}},
      },
      {
          {"IncomeType",
           {"Employment", "Pension", "Old Age Security", "Social Assistance", "Disability"}},
          {"HealthIssue", {"Diabetes", "Mental Health", "Addiction", "Physical Disability"}},
          {"ReasonForService", {"Eviction", "Family Breakdown", "Addiction", "Financial"}},
          {"ContributingFactor", {"Unemployment", "Housing Loss", "Substance Use"}},
          {"EducationLevel", {"Primary", "Secondary", "Post-Secondary"}},
      }};
  return c;
}

}  // namespace chronic

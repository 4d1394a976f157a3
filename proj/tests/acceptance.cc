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


// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "chronic/eval.hpp"
#include "chronic/explain.hpp"
#include "chronic/loss.hpp"
#include "chronic/net.hpp"
#include "chronic/pipeline.hpp"
#include "chronic/random.hpp"
#include "chronic/synth.hpp"

namespace {

using namespace chronic;
using std::chrono::days;
using std::chrono::minutes;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) { return format_fixed(v, digits); }

// ---------------------------------------------------------------------------
// 1. Loss identities

double soft_f1_oracle(const std::vector<double>& y, const std::vector<double>& p) {
  double tp = 0, sp = 0, sy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    tp += y[i] * p[i];
    sp += p[i];
    sy += y[i];
  }
  const double precision = tp / (sp + kLossEpsilon), recall = tp / (sy + kLossEpsilon);
  return 2 * precision * recall / (precision + recall + kLossEpsilon);
}

Outcome loss_identities() {
  Rng rng(101);
  double worst_f1 = 0, worst_recall = 0, worst_perfect = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = int(rng.integer(4, 256));
    std::vector<double> y(n), p(n), perfect(n);
    for (int i = 0; i < n; ++i) {
      y[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
      p[i] = rng.uniform();
    }
    // At least a few positives so recall is defined.
    for (int i = 0; i < 4; ++i) y[std::size_t(rng.integer(0, n - 1))] = 1.0;
    for (int i = 0; i < n; ++i) perfect[i] = y[i];
    double tp = 0, sy = 0;
    for (int i = 0; i < n; ++i) tp += y[i] * p[i], sy += y[i];
    worst_f1 = std::max(worst_f1, std::abs(weighted_f1_loss<double>(y, p, 1.0) - (1.0 - soft_f1_oracle(y, p))));
    worst_recall = std::max(worst_recall, std::abs(weighted_f1_loss<double>(y, p, 1e6) - (1.0 - tp / sy)));
    worst_perfect = std::max(worst_perfect, weighted_f1_loss<double>(y, perfect, 4.5));
  }
  return {worst_f1 <= 1e-12 && worst_recall <= 1e-4 && worst_perfect <= 1e-7,
          "max |L(w=1) - (1-softF1)| = " + format_double(worst_f1) + ", max |L(w=1e6) - (1-R)| = " +
              format_double(worst_recall) + ", max perfect-prediction loss = " + format_double(worst_perfect)};
}

// ---------------------------------------------------------------------------
// 2. Gradient check

Outcome gradient_check() {
  ModelShape shape;
  shape.static_size = 4;
  shape.sequence_length = 3;
  shape.input_dim = 2;
  shape.lstm_units = 3;
  shape.widths = {5, 4};
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(202, std::uint64_t(trial)));
    auto params = init_params(shape, 0.3, std::uint64_t(trial) + 1);
    for (Eigen::Index i = 0; i < params.values.size(); ++i) params.values[i] += 0.3 * rng.normal();
    const int n = 8;
    Eigen::MatrixXd X(shape.feature_count(), n);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    Eigen::VectorXd y(n);
    for (int j = 0; j < n; ++j) y[j] = j % 3 == 0;
    const LossSpec spec{trial % 2 ? LossKind::kBce : LossKind::kWeightedF1, 4.5, 1.0};
    const double gamma = 0.01, dropout = trial % 4 < 2 ? 0.0 : 0.2;
    const std::uint64_t mask_seed = 7000 + std::uint64_t(trial);
    auto objective = [&](const ModelParams<double>& q) {
      Rng r(mask_seed);
      return loss_gradient(q, X, y, spec, gamma, dropout, &r).objective;
    };
    Rng r(mask_seed);
    const auto g = loss_gradient(params, X, y, spec, gamma, dropout, &r);
    for (Eigen::Index i = 0; i < params.values.size(); ++i) {
      auto q = params;
      const double h = 1e-5;
      q.values[i] += h;
      const double up = objective(q);
      q.values[i] -= 2 * h;
      const double fd = (up - objective(q)) / (2 * h);
      const double rel = std::abs(g.grad[i] - fd) / std::max(1e-6, std::abs(g.grad[i]) + std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  return {worst < 1e-4, "max relative error " + format_double(worst) + " over 20 trials"};
}

// ---------------------------------------------------------------------------
// 3. Labeling oracle

Outcome labeling_oracle() {
  const Date base = make_date(2020, 1, 1);
  Rng rng(303);
  int mismatches = 0, boundary_179 = 0, boundary_180 = 0, short14 = 0, ok15 = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const long long client = 1 + trial % 5;
    const Date as_of = base + days{400};
    std::vector<ServiceEvent> events;
    // Pick the number of qualifying in-window stay days, clustered at the threshold.
    const int target = trial % 4 == 0 ? 179 : trial % 4 == 1 ? 180 : int(rng.integer(0, 365));
    std::vector<int> offsets(365);
    std::iota(offsets.begin(), offsets.end(), 0);
    rng.shuffle(offsets.begin(), offsets.end());
    for (int k = 0; k < target; ++k) {
      const Date d = as_of - days{offsets[std::size_t(k)]};
      const int visits = int(rng.integer(1, 3));
      for (int v = 0; v < visits; ++v) {
        const Timestamp s = Timestamp{d} + minutes{rng.integer(0, 23 * 60)};
        events.push_back({client, ServiceKind::kStay, s, s + minutes{v == 0 ? rng.integer(15, 600) : rng.integer(1, 600)}});
      }
    }
    // Distractors: short visits, 14/15-minute visits, out-of-window stays,
    // non-stay services and another client.
    for (int k = 0; k < 20; ++k) {
      const Date d = base + days{rng.integer(0, 420)};
      const Timestamp s = Timestamp{d} + minutes{rng.integer(0, 23 * 60)};
      const int kind = int(rng.integer(0, 4));
      if (kind == 0) events.push_back({client, ServiceKind::kStay, s, s + minutes{14}});
      if (kind == 1) events.push_back({client, ServiceKind::kStay, s, s + minutes{15}});
      if (kind == 2) events.push_back({client, ServiceKind::kFoodBank, s, s + minutes{60}});
      if (kind == 3) events.push_back({client + 100, ServiceKind::kStay, s, s + minutes{60}});
      if (kind == 4) events.push_back({client, ServiceKind::kStay, Timestamp{base} + minutes{60}, Timestamp{base} + minutes{120}});
    }
    rng.shuffle(events.begin(), events.end());

    std::set<long> stay_days;
    for (auto& e : events) {
      if (e.client_id != client || e.service != ServiceKind::kStay) continue;
      if ((e.end - e.start).count() < 15) continue;
      const long day = long(std::chrono::floor<days>(e.start).time_since_epoch().count());
      const long end = long(as_of.time_since_epoch().count());
      if (day <= end && day > end - 365) stay_days.insert(day);
    }
    const long expected = long(stay_days.size());
    if (expected == 179) ++boundary_179;
    if (expected == 180) ++boundary_180;
    for (auto& e : events) {
      if (e.client_id != client || e.service != ServiceKind::kStay) continue;
      short14 += (e.end - e.start).count() == 14;
      ok15 += (e.end - e.start).count() == 15;
    }
    if (count_stays(events, client, as_of, 365) != expected || is_chronic(events, client, as_of) != (expected >= 180))
      ++mismatches;
  }
  std::ostringstream os;
  os << mismatches << " mismatches in 1000 timelines (" << boundary_179 << " at 179 stays, " << boundary_180
     << " at 180, " << short14 << " 14-minute and " << ok15 << " 15-minute visits)";
  return {mismatches == 0 && boundary_179 > 0 && boundary_180 > 0 && short14 > 0 && ok15 > 0, os.str()};
}

// ---------------------------------------------------------------------------
// 4. Leakage-free folds and 5. standardization

Dataset small_dataset(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.clients = 400;
  return build_dataset(generate_synthetic(cfg, seed), FeatureSchema::from_catalog());
}

Outcome leakage_free_folds() {
  const auto ds = small_dataset(404);
  const auto steps = ds.dates().size();
  int bad = 0;
  for (int k = 1; k <= 10; ++k) {
    const auto s = partition(ds, k);
    Date train_max{}, val_min = Date::max(), val_max{}, test_min = Date::max();
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (auto i : s.train) train_max = std::max(train_max, ds.examples[i].date);
    for (auto i : s.val) val_min = std::min(val_min, ds.examples[i].date), val_max = std::max(val_max, ds.examples[i].date);
    for (auto i : s.test) test_min = std::min(test_min, ds.examples[i].date);
    for (auto* part : {&s.train, &s.val, &s.test}) {
      seen.insert(part->begin(), part->end());
      total += part->size();
    }
    if (s.train.empty() || s.val.empty() || s.test.empty() || !(train_max < val_min) || !(val_max < test_min) ||
        seen.size() != total)
      ++bad;
  }
  return {steps >= 12 && bad == 0, std::to_string(steps) + " time steps, " + std::to_string(bad) + " of 10 folds violate ordering or disjointness"};
}

Outcome standardization() {
  const auto ds = small_dataset(505);
  const auto s = partition(ds, 1);
  const auto train = select(ds, s.train);
  const auto scaler = fit_scaler(train, ds.schema);
  double worst_mean = 0, worst_std = 0;
  int checked = 0;
  for (int col : ds.schema.numeric_indices()) {
    std::vector<double> v;
    for (auto* e : train) {
      std::vector<double> x = e->x;
      scaler.apply(x);
      v.push_back(x[std::size_t(col)]);
    }
    double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    if (lo == hi) continue;
    ++checked;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(ss / double(v.size())) - 1.0));
  }
  // A shifted validation set keeps the train centre: its mean moves by shift / std.
  const int col = ds.schema.numeric_static_index("CurrentAge");
  double raw = 0, scaled = 0;
  const auto val = select(ds, s.val);
  for (auto* e : val) {
    std::vector<double> x = e->x;
    x[std::size_t(col)] += 10.0;
    raw += x[std::size_t(col)];
    scaler.apply(x);
    scaled += x[std::size_t(col)];
  }
  raw /= double(val.size());
  scaled /= double(val.size());
  std::size_t j = 0;
  while (scaler.indices[j] != col) ++j;
  const double expected = (raw - scaler.means[j]) / scaler.stds[j];
  const bool shift_ok = std::abs(scaled - expected) < 1e-9 && std::abs(scaled) > 0.5;
  return {checked > 0 && worst_mean < 1e-9 && worst_std < 1e-9 && shift_ok,
          std::to_string(checked) + " columns, max |mean| " + format_double(worst_mean) + ", max |std-1| " +
              format_double(worst_std) + ", shifted val mean " + fmt(scaled) + " (expected " + fmt(expected) + ")"};
}

// ---------------------------------------------------------------------------
// 6./7. End-to-end learnability and loss ordering

struct Experiment {
  Dataset ds;
  CVReport f1, bce;
  double f1_seconds = 0, bce_seconds = 0;
};

Experiment& experiment() {
  static Experiment ex = [] {
    Experiment e;
    SynthConfig cfg;
    cfg.clients = 3000;
    cfg.target_positive_rate = 0.065;
    e.ds = build_dataset(generate_synthetic(cfg, 7), FeatureSchema::from_catalog());
    ModelConfig mc;
    auto t0 = std::chrono::steady_clock::now();
    e.f1 = nested_cv(e.ds, 5, rnn_trainer(mc), mc.threshold, "weighted_f1");
    auto t1 = std::chrono::steady_clock::now();
    mc.loss = LossKind::kBce;
    e.bce = nested_cv(e.ds, 5, rnn_trainer(mc), mc.threshold, "bce");
    auto t2 = std::chrono::steady_clock::now();
    e.f1_seconds = std::chrono::duration<double>(t1 - t0).count();
    e.bce_seconds = std::chrono::duration<double>(t2 - t1).count();
    return e;
  }();
  return ex;
}

double mean_of(const CVReport& r, std::string_view metric) { return r.summary(metric).mean.value_or(NAN); }

Outcome learnability() {
  auto& e = experiment();
  const double recall = mean_of(e.f1, "recall"), auc = mean_of(e.f1, "auc"), precision = mean_of(e.f1, "precision");
  return {recall >= 0.85 && auc >= 0.95 && precision >= 0.50 && e.f1_seconds < 900,
          std::to_string(e.ds.examples.size()) + " examples, positive rate " + fmt(e.ds.positive_rate()) +
              "; mean recall " + fmt(recall) + ", AUC " + fmt(auc) + ", precision " + fmt(precision) + "; " +
              fmt(e.f1_seconds, 1) + " s"};
}

Outcome loss_ordering() {
  auto& e = experiment();
  const double r_f1 = mean_of(e.f1, "recall"), r_bce = mean_of(e.bce, "recall");
  const double p_f1 = mean_of(e.f1, "precision"), p_bce = mean_of(e.bce, "precision");
  return {r_f1 >= r_bce && p_bce >= p_f1 && e.bce_seconds < 900,
          "recall weighted-F1 " + fmt(r_f1) + " vs BCE " + fmt(r_bce) + "; precision BCE " + fmt(p_bce) +
              " vs weighted-F1 " + fmt(p_f1) + "; BCE runs " + fmt(e.bce_seconds, 1) + " s"};
}

// ---------------------------------------------------------------------------
// 8. AUC oracle

Outcome auc_oracle() {
  Rng rng(808);
  int mismatches = 0, undefined = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = int(rng.integer(2, 200));
    std::vector<int> y(static_cast<std::size_t>(n));
    std::vector<double> p(static_cast<std::size_t>(n));
    const int levels = int(rng.integer(2, 40));
    for (int i = 0; i < n; ++i) {
      y[std::size_t(i)] = rng.bernoulli(0.3);
      p[std::size_t(i)] = double(rng.integer(0, levels)) / levels;
    }
    y[0] = 1;
    y[1] = 0;
    double wins = 0;
    long pairs = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y[std::size_t(i)] == 1 && y[std::size_t(j)] == 0) {
          ++pairs;
          wins += p[std::size_t(i)] > p[std::size_t(j)] ? 1.0 : p[std::size_t(i)] == p[std::size_t(j)] ? 0.5 : 0.0;
        }
    const auto auc = rank_auc(y, p);
    if (!auc) {
      ++undefined;
      continue;
    }
    if (*auc != wins / double(pairs)) ++mismatches;
  }
  return {mismatches == 0 && undefined == 0,
          std::to_string(mismatches) + " mismatches in 100 tied-score instances"};
}

// ---------------------------------------------------------------------------
// 9. LIME fidelity and planted-driver recovery

bool names_driver(const std::string& s, const std::string& driver) {
  if (driver == "stay") return s.find("Stay") != std::string::npos;
  if (driver == "subsidy") return s.find("Housing Subsidy") != std::string::npos;
  return s.rfind("CurrentAge >", 0) == 0;
}

Outcome lime() {
  auto& e = experiment();
  const auto t0 = std::chrono::steady_clock::now();
  const auto fold = make_fold(e.ds, 1);
  ModelConfig mc;
  auto trained = train<float>(mc, e.ds.schema, fold.train, fold.val);
  const auto box = model_black_box(to_double(trained.params), fold.scaler);
  const auto train_rows = select(e.ds, fold.split.train);
  const auto disc = fit_discretizer(train_rows, e.ds.schema);
  LimeConfig lc;
  auto test_rows = select(e.ds, fold.split.test);
  Rng rng(909);
  rng.shuffle(test_rows.begin(), test_rows.end());
  test_rows.resize(std::min<std::size_t>(50, test_rows.size()));
  int faithful = 0;
  std::vector<double> r2;
  for (auto* row : test_rows) {
    const auto ex = explain_instance(box, disc, row->x, lc, row->client_id, row->date);
    r2.push_back(ex.local_fidelity_r2);
    faithful += ex.local_fidelity_r2 >= 0.5;
  }
  std::sort(r2.begin(), r2.end());
  const auto pool = sample_pool(train_rows, lc);
  std::vector<Explanation> exps;
  for (auto* row : pool) exps.push_back(explain_instance(box, disc, row->x, lc, row->client_id, row->date));
  const auto g = submodular_pick(exps, disc.size(), lc.pick_budget);
  std::string top;
  std::set<std::string> found;
  for (std::size_t k = 0; k < std::min<std::size_t>(5, g.entries.size()); ++k) {
    top += (k ? "; " : "") + g.entries[k].statement;
    for (const char* d : {"stay", "subsidy", "age"})
      if (names_driver(g.entries[k].statement, d)) found.insert(d);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double fraction = double(faithful) / double(test_rows.size());
  return {fraction >= 0.9 && found.size() == 3 && secs < 300,
          std::to_string(faithful) + "/" + std::to_string(test_rows.size()) + " explanations with R2 >= 0.5 (median " +
              fmt(r2[r2.size() / 2]) + "); drivers in global top-5: " + std::to_string(found.size()) + "/3 [" + top +
              "]; " + fmt(secs, 1) + " s"};
}

// ---------------------------------------------------------------------------
// 10. Submodular-pick bound

Outcome pick_bound() {
  Rng rng(1010);
  double worst = 1e9;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = int(rng.integer(2, 8)), m = int(rng.integer(2, 6)), budget = int(rng.integer(1, n));
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        if (rng.bernoulli(0.4)) W(i, j) = rng.normal();
    const Eigen::VectorXd imp = W.cwiseAbs().colwise().sum().cwiseSqrt().transpose();
    auto cover = [&](unsigned mask) {
      double c = 0;
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i)
          if ((mask >> i & 1u) && W(i, j) != 0) {
            c += imp[j];
            break;
          }
      return c;
    };
    double best = 0;
    for (unsigned mask = 0; mask < (1u << n); ++mask)
      if (std::popcount(mask) <= budget) best = std::max(best, cover(mask));
    unsigned greedy = 0;
    for (int i : greedy_pick(W, budget)) greedy |= 1u << i;
    const double ratio = best > 0 ? cover(greedy) / best : 1.0;
    worst = std::min(worst, ratio);
  }
  return {worst >= 1.0 - 1.0 / std::exp(1.0) - 1e-12, "worst greedy/optimal coverage ratio " + fmt(worst)};
}

// ---------------------------------------------------------------------------
// 11. Output-bias initialization

Outcome bias_init() {
  const auto schema = FeatureSchema::from_catalog();
  const auto shape = ModelShape::make(ModelConfig{}, schema);
  const auto params = init_params(shape, 0.0656, 11);
  Rng rng(1111);
  Eigen::MatrixXd X(shape.feature_count(), 1000);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const double mean = forward(params, X, false).mean();
  const double bias = params.output_bias();
  return {std::abs(bias - (-2.656)) <= 1e-3 && std::abs(mean - 0.0656) <= 0.05,
          "output bias " + fmt(bias, 6) + ", untrained mean probability " + fmt(mean)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss identities", loss_identities},
      {"gradient check", gradient_check},
      {"labeling oracle", labeling_oracle},
      {"leakage-free folds", leakage_free_folds},
      {"standardization", standardization},
      {"end-to-end synthetic learnability", learnability},
      {"loss ordering", loss_ordering},
      {"AUC oracle", auc_oracle},
      {"LIME fidelity and recovery", lime},
      {"submodular-pick bound", pick_bound},
      {"output-bias initialization", bias_init},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << " (" << fmt(secs, 2)
              << " s): " << o.detail << std::endl;
  }
  std::cout << criteria.size() - std::size_t(failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}

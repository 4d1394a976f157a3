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

// Local surrogate explanations and submodular pick.
//
// Every example vector is mapped to an interpretable representation: numeric
// features become quartile-bin membership, each single-valued categorical
// group is one categorical feature, and each multi-valued bit is a binary
// feature. Perturbed samples are drawn from training marginals, scored by
// the black box, and a kernel-weighted ridge model is fit on the binary
// "same as the instance" indicators.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "chronic/common.hpp"
#include "chronic/net.hpp"
#include "chronic/pipeline.hpp"
#include "chronic/random.hpp"
#include "chronic/svg.hpp"

namespace chronic {

struct InterpretableFeature {
  enum class Kind { kNumeric, kCategorical, kBinary };
  Kind kind = Kind::kNumeric;
  std::string name;
  int index = 0;  // position in the example vector (first column for categorical)
  int width = 1;  // categorical domain size
  std::vector<std::string> labels;  // categorical values

  // kNumeric: quartile cuts (deduplicated), bin frequencies, sorted training values.
  std::vector<double> cuts;
  std::vector<double> sorted_values;
  bool degenerate = false;
  // Training frequency of each bin / category / bit value (0 then 1).
  std::vector<double> frequency;

  int bin_of(double x) const {
    return int(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
  }
};

struct Discretizer {
  std::vector<InterpretableFeature> features;
  int vector_length = 0;

  int size() const { return int(features.size()); }

  // Category/bin/bit of feature j in the example vector x.
  int value_of(int j, std::span<const double> x) const {
    const auto& f = features[std::size_t(j)];
    switch (f.kind) {
      case InterpretableFeature::Kind::kNumeric:
        return f.bin_of(x[std::size_t(f.index)]);
      case InterpretableFeature::Kind::kCategorical: {
        int best = 0;
        for (int k = 1; k < f.width; ++k)
          if (x[std::size_t(f.index + k)] > x[std::size_t(f.index + best)]) best = k;
        return best;
      }
      case InterpretableFeature::Kind::kBinary:
        return x[std::size_t(f.index)] > 0.5 ? 1 : 0;
    }
    return 0;
  }

  // Human-readable claim about the instance's value of feature j.
  std::string statement(int j, std::span<const double> x) const {
    const auto& f = features[std::size_t(j)];
    const int v = value_of(j, x);
    switch (f.kind) {
      case InterpretableFeature::Kind::kNumeric:
        if (f.degenerate) return f.name + " = " + format_fixed(f.sorted_values.front(), 2);
        if (v == 0) return f.name + " <= " + format_fixed(f.cuts.front(), 2);
        if (v == int(f.cuts.size())) return f.name + " > " + format_fixed(f.cuts.back(), 2);
        return format_fixed(f.cuts[std::size_t(v - 1)], 2) + " < " + f.name + " <= " + format_fixed(f.cuts[std::size_t(v)], 2);
      case InterpretableFeature::Kind::kCategorical:
        return f.name + "=" + f.labels[std::size_t(v)];
      case InterpretableFeature::Kind::kBinary:
        return f.name + "=" + std::to_string(v);
    }
    return f.name;
  }
};

// Percentile with linear interpolation between order statistics.
inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw Error("percentile of empty sample");
  const double pos = q * double(sorted.size() - 1);
  const auto lo = std::size_t(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (pos - double(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline InterpretableFeature numeric_feature(std::string name, int index, std::vector<double> values) {
  InterpretableFeature f;
  f.kind = InterpretableFeature::Kind::kNumeric;
  f.name = std::move(name);
  f.index = index;
  std::sort(values.begin(), values.end());
  f.sorted_values = std::move(values);
  if (f.sorted_values.empty()) throw Error("discretizer: empty training set");
  if (f.sorted_values.front() == f.sorted_values.back()) {
    f.degenerate = true;
    f.frequency = {1.0};
    return f;
  }
  for (double q : {0.25, 0.5, 0.75}) {
    const double c = percentile(f.sorted_values, q);
    if (f.cuts.empty() || c > f.cuts.back()) f.cuts.push_back(c);
  }
  if (f.cuts.back() >= f.sorted_values.back()) f.cuts.pop_back();  // empty top bin
  f.frequency.assign(f.cuts.size() + 1, 0.0);
  for (double v : f.sorted_values) f.frequency[std::size_t(f.bin_of(v))] += 1;
  for (auto& p : f.frequency) p /= double(f.sorted_values.size());
  return f;
}

inline Discretizer fit_discretizer(const std::vector<const Example*>& train, const FeatureSchema& schema) {
  if (train.empty()) throw Error("fit_discretizer: empty training set");
  Discretizer d;
  d.vector_length = schema.vector_length();
  const auto names = schema.feature_names();
  const double n = double(train.size());
  auto column = [&](int i) {
    std::vector<double> v;
    v.reserve(train.size());
    for (auto* e : train) v.push_back(e->x[std::size_t(i)]);
    return v;
  };
  for (int i = 0; i < schema.num_numeric_static(); ++i)
    d.features.push_back(numeric_feature(names[std::size_t(i)], i, column(i)));
  int o = schema.svcf_offset();
  for (auto& cf : schema.svcf) {
    InterpretableFeature f;
    f.kind = InterpretableFeature::Kind::kCategorical;
    f.name = cf.name;
    f.index = o;
    f.width = int(cf.domain.size());
    f.labels = cf.domain;
    f.frequency.assign(cf.domain.size(), 0.0);
    d.features.push_back(f);
    for (auto* e : train) d.features.back().frequency[std::size_t(d.value_of(d.size() - 1, e->x))] += 1.0 / n;
    o += f.width;
  }
  for (auto& cf : schema.mvcf) {
    for (std::size_t k = 0; k < cf.domain.size(); ++k, ++o) {
      InterpretableFeature f;
      f.kind = InterpretableFeature::Kind::kBinary;
      f.name = names[std::size_t(o)];
      f.index = o;
      double ones = 0;
      for (auto* e : train) ones += e->x[std::size_t(o)] > 0.5;
      f.frequency = {1.0 - ones / n, ones / n};
      d.features.push_back(f);
    }
  }
  for (int i = schema.dynamic_offset(); i < schema.vector_length(); ++i)
    d.features.push_back(numeric_feature(names[std::size_t(i)], i, column(i)));
  return d;
}

// ---------------------------------------------------------------------------
// Perturbation

struct LimeConfig {
  int samples = 2000;
  int top_k = 10;
  double ridge_lambda = 1.0;
  double kernel_width_scale = 0.75;  // sigma = scale * sqrt(#interpretable features)
  int pick_budget = 15;
  double pool_fraction = 0.2;
  int pool_max = 200;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const LimeConfig& c) {
  j = nlohmann::json{{"samples", c.samples},         {"top_k", c.top_k},
                     {"ridge_lambda", c.ridge_lambda}, {"kernel_width_scale", c.kernel_width_scale},
                     {"pick_budget", c.pick_budget}, {"pool_fraction", c.pool_fraction},
                     {"pool_max", c.pool_max},       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, LimeConfig& c) {
  LimeConfig d;
  c.samples = j.value("samples", d.samples);
  c.top_k = j.value("top_k", d.top_k);
  c.ridge_lambda = j.value("ridge_lambda", d.ridge_lambda);
  c.kernel_width_scale = j.value("kernel_width_scale", d.kernel_width_scale);
  c.pick_budget = j.value("pick_budget", d.pick_budget);
  c.pool_fraction = j.value("pool_fraction", d.pool_fraction);
  c.pool_max = j.value("pool_max", d.pool_max);
  c.seed = j.value("seed", d.seed);
}

struct Perturbation {
  Eigen::MatrixXd Z;       // samples x interpretable features, 0/1
  Eigen::MatrixXd X;       // example vectors, one per column (unscaled)
  Eigen::VectorXd weights; // kernel weights
};

inline double kernel_width(int features, double scale = 0.75) { return scale * std::sqrt(double(features)); }

inline double kernel_weight(double squared_distance, double width) {
  return std::exp(-squared_distance / (width * width));
}

namespace detail {

inline std::size_t draw(const std::vector<double>& freq, Rng& rng) {
  double u = rng.uniform(), acc = 0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < freq.size(); ++k) {
    if (freq[k] <= 0) continue;
    last = k;
    acc += freq[k];
    if (u < acc) return k;
  }
  return last;
}

// Uniform draw among training values that fall in `bin`.
inline double value_in_bin(const InterpretableFeature& f, int bin, Rng& rng) {
  const auto& v = f.sorted_values;
  auto lo = bin == 0 ? v.begin() : std::upper_bound(v.begin(), v.end(), f.cuts[std::size_t(bin - 1)]);
  auto hi = bin == int(f.cuts.size()) ? v.end() : std::upper_bound(v.begin(), v.end(), f.cuts[std::size_t(bin)]);
  if (lo >= hi) throw Error("perturb: empty bin drawn for " + f.name);
  return *(lo + long(rng.integer(0, long(hi - lo) - 1)));
}

}  // namespace detail

// First sample is the instance itself.
inline Perturbation perturb(const Discretizer& d, std::span<const double> instance, int n,
                            std::uint64_t seed, double width_scale = 0.75) {
  if (n < 1) throw Error("perturb: sample count must be >= 1");
  if (int(instance.size()) != d.vector_length) throw Error("perturb: instance has wrong length");
  const int m = d.size();
  Perturbation p;
  p.Z = Eigen::MatrixXd::Ones(n, m);
  p.X.resize(d.vector_length, n);
  p.weights.resize(n);
  const Eigen::Map<const Eigen::VectorXd> x0(instance.data(), Eigen::Index(instance.size()));
  std::vector<int> instance_value(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) instance_value[std::size_t(j)] = d.value_of(j, instance);
  const double width = kernel_width(m, width_scale);
  Rng rng(seed);
  for (int s = 0; s < n; ++s) {
    auto x = p.X.col(s);
    x = x0;
    if (s == 0) {
      p.weights[0] = 1.0;
      continue;
    }
    double flipped = 0;
    for (int j = 0; j < m; ++j) {
      const auto& f = d.features[std::size_t(j)];
      const int v = int(detail::draw(f.frequency, rng));
      switch (f.kind) {
        case InterpretableFeature::Kind::kNumeric:
          x[f.index] = f.degenerate ? f.sorted_values.front() : detail::value_in_bin(f, v, rng);
          break;
        case InterpretableFeature::Kind::kCategorical:
          for (int k = 0; k < f.width; ++k) x[f.index + k] = k == v ? 1.0 : 0.0;
          break;
        case InterpretableFeature::Kind::kBinary:
          x[f.index] = v;
          break;
      }
      if (v != instance_value[std::size_t(j)]) {
        p.Z(s, j) = 0;
        flipped += 1;
      }
    }
    p.weights[s] = kernel_weight(flipped, width);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Weighted ridge

struct RidgeFit {
  Eigen::VectorXd weights;
  double intercept = 0;
  double r2 = 0;
};

// Weighted R^2 of predictions; a constant target scores 1 when matched exactly.
inline double weighted_r2(const Eigen::VectorXd& f, const Eigen::VectorXd& pred, const Eigen::VectorXd& pi) {
  const double mean = pi.dot(f) / pi.sum();
  const double ss_res = (pi.array() * (f - pred).array().square()).sum();
  const double ss_tot = (pi.array() * (f.array() - mean).square()).sum();
  if (ss_tot <= 1e-300) return ss_res <= 1e-24 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

// Minimizes sum pi (f - w.z - b)^2 + lambda ||w||^2 (intercept unpenalized).
inline RidgeFit fit_ridge(const Eigen::MatrixXd& Z, const Eigen::VectorXd& f, const Eigen::VectorXd& pi,
                          double lambda) {
  if (Z.rows() != f.size() || Z.rows() != pi.size()) throw Error("fit_ridge: dimension mismatch");
  if (lambda < 0) throw Error("fit_ridge: lambda must be >= 0");
  const double total = pi.sum();
  if (!(total > 0)) throw Error("fit_ridge: kernel weights sum to zero");
  const Eigen::RowVectorXd zbar = (pi.transpose() * Z) / total;
  const double fbar = pi.dot(f) / total;
  const Eigen::MatrixXd Zc = Z.rowwise() - zbar;
  const Eigen::VectorXd fc = f.array() - fbar;
  Eigen::MatrixXd A = Zc.transpose() * pi.asDiagonal() * Zc;
  A.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = Zc.transpose() * (pi.asDiagonal() * fc);
  RidgeFit r;
  if (lambda == 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
      throw Error("fit_ridge: singular system with lambda = 0; use a positive ridge strength");
    r.weights = lu.solve(rhs);
  } else {
    r.weights = A.ldlt().solve(rhs);
  }
  r.intercept = fbar - zbar.dot(r.weights);
  const Eigen::VectorXd pred = (Z * r.weights).array() + r.intercept;
  r.r2 = weighted_r2(f, pred, pi);
  return r;
}

// ---------------------------------------------------------------------------
// Explanations

// Probabilities for a batch of unscaled example vectors (one per column).
using BlackBox = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;

inline BlackBox model_black_box(ModelParams<double> params, StandardScaler scaler) {
  return [params = std::move(params), scaler = std::move(scaler)](const Eigen::MatrixXd& X) {
    Eigen::MatrixXd S = X;
    for (Eigen::Index c = 0; c < S.cols(); ++c) scaler.apply(std::span<double>(S.col(c).data(), std::size_t(S.rows())));
    return Eigen::VectorXd(forward(params, S, false).transpose());
  };
}

struct ExplanationEntry {
  int feature = 0;  // interpretable feature index
  std::string statement;
  double weight = 0;
};

struct Explanation {
  long long client_id = 0;
  Date date{};
  std::vector<ExplanationEntry> entries;  // descending |weight|
  double intercept = 0;
  double local_fidelity_r2 = 0;
  double predicted_probability = 0;
  std::uint64_t seed = 0;
  int samples = 0;
  double runtime_seconds = 0;
};

inline std::uint64_t instance_seed(std::uint64_t seed, long long client_id, Date date) {
  return derive_seed(seed, std::uint64_t(client_id), std::uint64_t(date.time_since_epoch().count()));
}

inline Explanation explain_instance(const BlackBox& model, const Discretizer& d, std::span<const double> instance,
                                    const LimeConfig& cfg, long long client_id = 0, Date date = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  Explanation e;
  e.client_id = client_id;
  e.date = date;
  e.seed = instance_seed(cfg.seed, client_id, date);
  e.samples = cfg.samples;
  auto p = perturb(d, instance, cfg.samples, e.seed, cfg.kernel_width_scale);
  const Eigen::VectorXd f = model(p.X);
  e.predicted_probability = f[0];

  const int k = std::min(cfg.top_k, d.size());
  std::vector<int> keep(std::size_t(d.size()));
  std::iota(keep.begin(), keep.end(), 0);
  if (k < d.size()) {
    auto pre = fit_ridge(p.Z, f, p.weights, std::max(cfg.ridge_lambda, 1e-8));
    std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) { return std::abs(pre.weights[a]) > std::abs(pre.weights[b]); });
    keep.resize(std::size_t(k));
    std::sort(keep.begin(), keep.end());
  }
  Eigen::MatrixXd Zk(p.Z.rows(), k);
  for (int j = 0; j < k; ++j) Zk.col(j) = p.Z.col(keep[std::size_t(j)]);
  auto fit = fit_ridge(Zk, f, p.weights, cfg.ridge_lambda);
  for (int j = 0; j < k; ++j)
    e.entries.push_back({keep[std::size_t(j)], d.statement(keep[std::size_t(j)], instance), fit.weights[j]});
  std::stable_sort(e.entries.begin(), e.entries.end(),
                   [](auto& a, auto& b) { return std::abs(a.weight) > std::abs(b.weight); });
  e.intercept = fit.intercept;
  e.local_fidelity_r2 = fit.r2;
  e.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

inline nlohmann::json to_json(const Explanation& e) {
  nlohmann::json entries = nlohmann::json::array();
  for (auto& x : e.entries) entries.push_back({{"feature", x.statement}, {"weight", x.weight}});
  return {{"client_id", e.client_id},
          {"date", format_date(e.date)},
          {"predicted_probability", e.predicted_probability},
          {"intercept", e.intercept},
          {"local_fidelity_r2", e.local_fidelity_r2},
          {"seed", e.seed},
          {"samples", e.samples},
          {"runtime_seconds", e.runtime_seconds},
          {"entries", entries}};
}

// ---------------------------------------------------------------------------
// Submodular pick

// Importance of feature j: sqrt(sum_i |W_ij|).
inline Eigen::VectorXd feature_importance(const Eigen::MatrixXd& W) {
  return W.cwiseAbs().colwise().sum().cwiseSqrt().transpose();
}

inline double coverage(const Eigen::MatrixXd& W, const Eigen::VectorXd& importance, const std::vector<int>& picked) {
  double c = 0;
  for (Eigen::Index j = 0; j < W.cols(); ++j)
    for (int i : picked)
      if (W(i, j) != 0) {
        c += importance[j];
        break;
      }
  return c;
}

// Greedy maximization of coverage; ties go to the lower row index.
inline std::vector<int> greedy_pick(const Eigen::MatrixXd& W, int budget) {
  if (budget < 1) throw Error("submodular pick: budget must be >= 1");
  const int n = int(W.rows());
  if (budget > n) {
    warn("submodular pick budget " + std::to_string(budget) + " exceeds pool size " + std::to_string(n) + "; picking all");
    budget = n;
  }
  const Eigen::VectorXd imp = feature_importance(W);
  std::vector<int> picked;
  std::vector<char> covered(std::size_t(W.cols()), 0), used(std::size_t(n), 0);
  while (int(picked.size()) < budget) {
    int best = -1;
    double best_gain = -1;
    for (int i = 0; i < n; ++i) {
      if (used[std::size_t(i)]) continue;
      double gain = 0;
      for (Eigen::Index j = 0; j < W.cols(); ++j)
        if (!covered[std::size_t(j)] && W(i, j) != 0) gain += imp[j];
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    used[std::size_t(best)] = 1;
    picked.push_back(best);
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      if (W(best, j) != 0) covered[std::size_t(j)] = 1;
  }
  return picked;
}

struct GlobalEntry {
  std::string statement;
  double weight = 0;
};

struct GlobalExplanation {
  std::vector<GlobalEntry> entries;  // descending |weight|
  std::vector<std::pair<long long, Date>> picked;
  double coverage = 0, total_importance = 0;
};

// Picks a covering subset of the pool's explanations and averages their
// signed weights per statement over the picked set.
inline GlobalExplanation submodular_pick(const std::vector<Explanation>& pool, int n_features, int budget) {
  if (pool.empty()) throw Error("submodular pick: empty explanation pool");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(Eigen::Index(pool.size()), n_features);
  for (std::size_t i = 0; i < pool.size(); ++i)
    for (auto& e : pool[i].entries) W(Eigen::Index(i), e.feature) = e.weight;
  const auto picked = greedy_pick(W, budget);
  GlobalExplanation g;
  const Eigen::VectorXd imp = feature_importance(W);
  g.coverage = coverage(W, imp, picked);
  g.total_importance = imp.sum();
  std::vector<std::string> order;
  std::map<std::string, double> sums;
  for (int i : picked) {
    const auto& e = pool[std::size_t(i)];
    g.picked.emplace_back(e.client_id, e.date);
    for (auto& x : e.entries) {
      if (!sums.count(x.statement)) order.push_back(x.statement);
      sums[x.statement] += x.weight;
    }
  }
  for (auto& s : order) g.entries.push_back({s, sums[s] / double(picked.size())});
  std::stable_sort(g.entries.begin(), g.entries.end(),
                   [](auto& a, auto& b) { return std::abs(a.weight) > std::abs(b.weight); });
  return g;
}

inline nlohmann::json to_json(const GlobalExplanation& g) {
  nlohmann::json entries = nlohmann::json::array(), picked = nlohmann::json::array();
  for (auto& e : g.entries) entries.push_back({{"feature", e.statement}, {"weight", e.weight}});
  for (auto& p : g.picked) picked.push_back({{"client_id", p.first}, {"date", format_date(p.second)}});
  return {{"entries", entries}, {"picked", picked}, {"coverage", g.coverage}, {"total_importance", g.total_importance}};
}

// Seeded sample of pool_fraction of the rows, capped at pool_max.
inline std::vector<const Example*> sample_pool(const std::vector<const Example*>& rows, const LimeConfig& cfg) {
  std::vector<const Example*> pool = rows;
  Rng rng(derive_seed(cfg.seed, 0x9001));
  rng.shuffle(pool.begin(), pool.end());
  std::size_t n = std::size_t(std::ceil(cfg.pool_fraction * double(rows.size())));
  n = std::min({n, pool.size(), std::size_t(std::max(cfg.pool_max, 1))});
  pool.resize(n);
  return pool;
}

}  // namespace chronic

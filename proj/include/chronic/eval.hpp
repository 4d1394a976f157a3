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

// Holdout metrics, rolling-origin cross-validation and the logistic
// regression baseline.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chronic/common.hpp"
#include "chronic/csv.hpp"
#include "chronic/net.hpp"
#include "chronic/pipeline.hpp"

namespace chronic {

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

// Ratios with a zero denominator stay empty ("undefined") rather than 0.
struct Metrics {
  Confusion confusion;
  std::optional<double> recall, precision, f1, auc;
  double accuracy = 0;
};

// Mann-Whitney AUC with mid-ranks for tied scores. Empty when either class
// is absent.
inline std::optional<double> rank_auc(std::span<const int> y, std::span<const double> p) {
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && p[order[j + 1]] == p[order[i]]) ++j;
    const double mid = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (y[i]) {
      pos += 1;
      rank_sum += rank[i];
    }
  const double neg = double(n) - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

inline Metrics compute_metrics(std::span<const int> y, std::span<const double> p, double threshold) {
  if (y.size() != p.size()) throw Error("compute_metrics: label/probability length mismatch");
  if (y.empty()) throw Error("compute_metrics: empty input");
  Metrics m;
  auto& c = m.confusion;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool pred = p[i] >= threshold;
    if (y[i] && pred) ++c.tp;
    else if (y[i]) ++c.fn;
    else if (pred) ++c.fp;
    else ++c.tn;
  }
  if (c.tp + c.fn > 0) m.recall = double(c.tp) / double(c.tp + c.fn);
  if (c.tp + c.fp > 0) m.precision = double(c.tp) / double(c.tp + c.fp);
  if (m.recall && m.precision)
    m.f1 = *m.recall + *m.precision > 0 ? 2 * *m.recall * *m.precision / (*m.recall + *m.precision) : 0.0;
  m.auc = rank_auc(y, p);
  m.accuracy = double(c.tp + c.tn) / double(c.total());
  return m;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"recall", "precision", "f1", "auc", "accuracy"};
  return names;
}

inline std::optional<double> metric_value(const Metrics& m, std::string_view name) {
  if (name == "recall") return m.recall;
  if (name == "precision") return m.precision;
  if (name == "f1") return m.f1;
  if (name == "auc") return m.auc;
  if (name == "accuracy") return m.accuracy;
  throw Error("unknown metric '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldData {
  int fold = 0;
  Split split;
  StandardScaler scaler;
  Design train, val, test;
};

// Returns test-set probabilities for one fold.
using Trainer = std::function<std::vector<double>(const FoldData&, const FeatureSchema&)>;

struct FoldResult {
  int fold = 0;
  std::size_t train_size = 0, val_size = 0, test_size = 0;
  Metrics metrics;
};

struct Summary {
  std::optional<double> mean, std;  // sample std over folds where defined
  int defined = 0;
};

struct CVReport {
  std::string model;
  std::vector<FoldResult> folds;

  Summary summary(std::string_view metric) const {
    std::vector<double> v;
    for (auto& f : folds)
      if (auto x = metric_value(f.metrics, metric)) v.push_back(*x);
    Summary s;
    s.defined = int(v.size());
    if (v.empty()) return s;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.mean = mean;
    s.std = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
    return s;
  }
};

inline FoldData make_fold(const Dataset& ds, int fold, int val_steps = 1, int test_steps = 1) {
  FoldData f;
  f.fold = fold;
  f.split = partition(ds, fold, val_steps, test_steps);
  if (f.split.train.empty() || f.split.val.empty() || f.split.test.empty())
    throw Error("empty partition");
  if (f.split.train_dates.back() >= f.split.val_dates.front() ||
      f.split.val_dates.back() >= f.split.test_dates.front())
    throw Error("partition dates overlap");
  auto tr = select(ds, f.split.train);
  f.scaler = fit_scaler(tr, ds.schema);
  const int n = ds.schema.vector_length();
  f.train = make_design(tr, &f.scaler, n);
  f.val = make_design(select(ds, f.split.val), &f.scaler, n);
  f.test = make_design(select(ds, f.split.test), &f.scaler, n);
  return f;
}

inline CVReport nested_cv(const Dataset& ds, int folds, const Trainer& trainer, double threshold,
                          std::string model = "model", int val_steps = 1, int test_steps = 1) {
  if (folds < 1) throw Error("nested_cv: folds must be >= 1");
  CVReport report{std::move(model), {}};
  for (int k = 1; k <= folds; ++k) {
    try {
      const FoldData f = make_fold(ds, k, val_steps, test_steps);
      const auto probs = trainer(f, ds.schema);
      if (Eigen::Index(probs.size()) != f.test.size()) throw Error("trainer returned wrong number of probabilities");
      std::vector<int> y(probs.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = int(f.test.y[Eigen::Index(i)]);
      report.folds.push_back({k, f.split.train.size(), f.split.val.size(), f.split.test.size(),
                              compute_metrics(y, probs, threshold)});
    } catch (const std::exception& e) {
      throw Error("fold " + std::to_string(k) + ": " + e.what());
    }
  }
  return report;
}

// Trains the recurrent model in single precision and scores the test set.
inline Trainer rnn_trainer(const ModelConfig& cfg, bool verbose = false) {
  return [cfg, verbose](const FoldData& f, const FeatureSchema& schema) {
    ModelConfig c = cfg;
    c.seed = derive_seed(cfg.seed, 0xf01d, std::uint64_t(f.fold));
    auto r = train<float>(c, schema, f.train, f.val, verbose);
    return predict(to_double(r.params), f.test.X, c.threshold).probabilities;
  };
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegConfig {
  double l2 = 1e-4;
  int max_iterations = 100;
  double tolerance = 1e-8;  // on the gradient norm
};

struct LinearModel {
  Eigen::VectorXd weights;
  double bias = 0;
  double gradient_norm = 0;
  int iterations = 0;
  bool converged = false;

  Eigen::VectorXd decision(const Eigen::MatrixXd& X) const {
    return ((weights.transpose() * X).array() + bias).matrix().transpose();
  }
  std::vector<double> predict_proba(const Eigen::MatrixXd& X) const {
    const Eigen::VectorXd z = decision(X);
    std::vector<double> p(std::size_t(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) p[std::size_t(i)] = 1.0 / (1.0 + std::exp(-z[i]));
    return p;
  }
};

namespace detail {

// Weighted mean negative log-likelihood + (l2/2)||w||^2 with its gradient
// and Hessian over theta = (w, b).
inline double logreg_objective(const Design& d, const Eigen::VectorXd& sample_w, double l2,
                               const Eigen::VectorXd& theta, Eigen::VectorXd* grad,
                               Eigen::MatrixXd* hess) {
  const Eigen::Index F = d.X.rows(), n = d.size();
  const Eigen::VectorXd z = (theta.head(F).transpose() * d.X).transpose().array() + theta[F];
  double loss = 0;
  Eigen::VectorXd r(n), curv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = d.y[i], p = 1.0 / (1.0 + std::exp(-z[i]));
    loss -= sample_w[i] * (t * log_sigmoid(z[i]) + (1 - t) * log_sigmoid(-z[i]));
    r[i] = sample_w[i] * (p - t) / double(n);
    curv[i] = sample_w[i] * p * (1 - p) / double(n);
  }
  loss = loss / double(n) + 0.5 * l2 * theta.head(F).squaredNorm();
  if (grad) {
    grad->resize(F + 1);
    grad->head(F) = d.X * r + l2 * theta.head(F);
    (*grad)[F] = r.sum();
  }
  if (hess) {
    hess->resize(F + 1, F + 1);
    const Eigen::MatrixXd Xs = d.X * curv.cwiseSqrt().asDiagonal();
    hess->topLeftCorner(F, F) = Xs * Xs.transpose();
    hess->topLeftCorner(F, F).diagonal().array() += l2;
    hess->col(F).head(F) = d.X * curv;
    hess->row(F).head(F) = hess->col(F).head(F).transpose();
    (*hess)(F, F) = curv.sum();
  }
  return loss;
}

}  // namespace detail

// Damped Newton descent on the (optionally class-weighted) log-likelihood.
// Positive examples get weight (1 - p) / p under class weighting.
inline LinearModel train_logreg(const Design& d, bool class_weighting, const LogRegConfig& cfg = {}) {
  if (d.size() == 0) throw Error("train_logreg: empty training set");
  const Eigen::Index F = d.X.rows();
  Eigen::VectorXd sample_w = Eigen::VectorXd::Ones(d.size());
  if (class_weighting) {
    const double w = class_weight(d.positive_fraction());
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (d.y[i] > 0.5) sample_w[i] = w;
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(F + 1), grad, step;
  Eigen::MatrixXd hess;
  LinearModel m;
  double loss = detail::logreg_objective(d, sample_w, cfg.l2, theta, &grad, &hess);
  for (m.iterations = 0; m.iterations < cfg.max_iterations; ++m.iterations) {
    if (grad.norm() < cfg.tolerance) {
      m.converged = true;
      break;
    }
    step = hess.ldlt().solve(-grad);
    if (!step.allFinite() || grad.dot(step) >= 0) step = -grad;
    double t = 1.0;
    double next = loss;
    for (int bt = 0; bt < 60; ++bt) {
      next = detail::logreg_objective(d, sample_w, cfg.l2, theta + t * step, nullptr, nullptr);
      if (next <= loss + 1e-4 * t * grad.dot(step)) break;
      t *= 0.5;
    }
    if (!(next < loss)) {
      // No further decrease is representable.
      m.converged = grad.norm() < std::sqrt(cfg.tolerance);
      break;
    }
    theta += t * step;
    loss = detail::logreg_objective(d, sample_w, cfg.l2, theta, &grad, &hess);
  }
  m.gradient_norm = grad.norm();
  if (m.gradient_norm < cfg.tolerance) m.converged = true;
  if (!m.converged)
    warn("logistic regression did not converge after " + std::to_string(m.iterations) +
         " iterations (gradient norm " + format_double(m.gradient_norm) + ")");
  m.weights = theta.head(F);
  m.bias = theta[F];
  return m;
}

inline Trainer logreg_trainer(bool class_weighting, const LogRegConfig& cfg = {}) {
  return [class_weighting, cfg](const FoldData& f, const FeatureSchema&) {
    return train_logreg(f.train, class_weighting, cfg).predict_proba(f.test.X);
  };
}

// ---------------------------------------------------------------------------
// Model comparison and reporting

struct ComparisonEntry {
  std::string name;
  Trainer trainer;
};

inline std::vector<ComparisonEntry> comparison_models(const ModelConfig& cfg, const LogRegConfig& lr = {}) {
  auto with = [&](LossKind k) {
    ModelConfig c = cfg;
    c.loss = k;
    return c;
  };
  return {{"rnn_mlp_weighted_f1", rnn_trainer(with(LossKind::kWeightedF1))},
          {"rnn_mlp_weighted_bce", rnn_trainer(with(LossKind::kWeightedBce))},
          {"rnn_mlp_bce", rnn_trainer(with(LossKind::kBce))},
          {"logistic_regression", logreg_trainer(true, lr)}};
}

inline std::vector<CVReport> compare_models(const Dataset& ds, const ModelConfig& cfg, int folds,
                                            const LogRegConfig& lr = {}) {
  std::vector<CVReport> out;
  for (auto& m : comparison_models(cfg, lr)) out.push_back(nested_cv(ds, folds, m.trainer, cfg.threshold, m.name));
  return out;
}

inline std::string format_metric(const std::optional<double>& v) {
  return v ? format_fixed(*v, 6) : "undefined";
}

// "mean [std]" with three decimals, as percentages when `percent`.
inline std::string format_summary(const Summary& s, bool percent = false) {
  if (!s.mean) return "undefined";
  const double k = percent ? 100.0 : 1.0;
  return format_fixed(*s.mean * k, percent ? 1 : 3) + " [" + format_fixed(*s.std * k, percent ? 1 : 3) + "]";
}

inline void write_cv_report(const std::vector<CVReport>& reports, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  std::vector<std::string> header{"model", "fold", "train_size", "val_size", "test_size", "tp", "fp", "tn", "fn"};
  for (auto& m : metric_names()) header.push_back(m);
  csv::write_row(os, header);
  for (auto& r : reports) {
    for (auto& f : r.folds) {
      const auto& c = f.metrics.confusion;
      std::vector<std::string> row{r.model, std::to_string(f.fold), std::to_string(f.train_size),
                                   std::to_string(f.val_size), std::to_string(f.test_size),
                                   std::to_string(c.tp), std::to_string(c.fp), std::to_string(c.tn),
                                   std::to_string(c.fn)};
      for (auto& m : metric_names()) row.push_back(format_metric(metric_value(f.metrics, m)));
      csv::write_row(os, row);
    }
    for (const char* stat : {"mean", "std"}) {
      std::vector<std::string> row{r.model, stat, "", "", "", "", "", "", ""};
      for (auto& m : metric_names()) {
        auto s = r.summary(m);
        row.push_back(format_metric(std::string_view(stat) == "mean" ? s.mean : s.std));
      }
      csv::write_row(os, row);
    }
  }
}

inline std::string format_cv_table(const std::vector<CVReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "model";
  for (auto& m : metric_names()) os << std::setw(16) << m;
  os << '\n';
  for (auto& r : reports) {
    os << std::setw(24) << r.model;
    for (auto& m : metric_names()) os << std::setw(16) << format_summary(r.summary(m), true);
    os << '\n';
  }
  return os.str();
}

}  // namespace chronic

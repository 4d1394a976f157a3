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

// Training objectives over a minibatch.
//
// The weighted F1 loss is a batch statistic: precision and recall are
// computed from probabilities rather than thresholded labels,
//   P = sum(y p) / sum(p),  R = sum(y p) / sum(y),
//   L = 1 - 2PR / ((2 - 2/(w+1)) P + (2/(w+1)) R),
// so w = 1 gives 1 - F1 and large w tends to 1 - R.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "chronic/common.hpp"

namespace chronic {

enum class LossKind { kWeightedF1, kBce, kWeightedBce };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kWeightedF1:
      return "weighted_f1";
    case LossKind::kBce:
      return "bce";
    case LossKind::kWeightedBce:
      return "weighted_bce";
  }
  return "?";
}

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "weighted_f1") return LossKind::kWeightedF1;
  if (s == "bce") return LossKind::kBce;
  if (s == "weighted_bce") return LossKind::kWeightedBce;
  throw Error("unknown loss '" + std::string(s) + "'");
}

inline constexpr double kLossEpsilon = 1e-7;

struct SoftCounts {
  double tp = 0;    // sum y * p
  double pred = 0;  // sum p
  double pos = 0;   // sum y
};

template <typename Scalar>
SoftCounts soft_counts(std::span<const Scalar> y, std::span<const Scalar> p) {
  SoftCounts c;
  for (std::size_t i = 0; i < y.size(); ++i) {
    c.tp += double(y[i]) * double(p[i]);
    c.pred += double(p[i]);
    c.pos += double(y[i]);
  }
  return c;
}

inline double weighted_f1_from_counts(const SoftCounts& c, double recall_weight) {
  const double b = 2.0 / (recall_weight + 1.0);
  const double a = 2.0 - b;
  const double precision = c.tp / (c.pred + kLossEpsilon);
  const double recall = c.tp / (c.pos + kLossEpsilon);
  return 1.0 - 2.0 * precision * recall / (a * precision + b * recall + kLossEpsilon);
}

template <typename Scalar>
double weighted_f1_loss(std::span<const Scalar> y, std::span<const Scalar> p,
                        double recall_weight) {
  return weighted_f1_from_counts(soft_counts(y, p), recall_weight);
}

// dL/dp_i written into `grad`. Returns the loss.
template <typename Scalar>
double weighted_f1_loss_grad(std::span<const Scalar> y, std::span<const Scalar> p,
                             double recall_weight, std::span<Scalar> grad) {
  const auto c = soft_counts(y, p);
  const double b = 2.0 / (recall_weight + 1.0);
  const double a = 2.0 - b;
  const double qd = c.pred + kLossEpsilon, yd = c.pos + kLossEpsilon;
  const double P = c.tp / qd, R = c.tp / yd;
  const double num = 2.0 * P * R;
  const double den = a * P + b * R + kLossEpsilon;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double dP = double(y[i]) / qd - c.tp / (qd * qd);
    const double dR = double(y[i]) / yd;
    const double dnum = 2.0 * (R * dP + P * dR);
    const double dden = a * dP + b * dR;
    grad[i] = Scalar(-(dnum * den - num * dden) / (den * den));
  }
  return 1.0 - num / den;
}

inline double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

// Mean of -(w y log p + (1 - y) log(1 - p)) from logits; dL/dlogit into grad.
template <typename Scalar>
double bce_from_logits(std::span<const Scalar> y, std::span<const Scalar> logits,
                       double positive_weight, std::span<Scalar> grad) {
  const double n = double(y.size());
  double loss = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = double(logits[i]), t = double(y[i]);
    const double p = 1.0 / (1.0 + std::exp(-z));
    loss -= positive_weight * t * log_sigmoid(z) + (1.0 - t) * log_sigmoid(-z);
    grad[i] = Scalar((positive_weight * t * (p - 1.0) + (1.0 - t) * p) / n);
  }
  return loss / n;
}

// Positive-term weight for class-weighted BCE from the train positive fraction.
inline double class_weight(double positive_fraction) {
  if (!(positive_fraction > 0 && positive_fraction < 1))
    throw Error("class weighting needs a positive fraction in (0,1)");
  return (1.0 - positive_fraction) / positive_fraction;
}

}  // namespace chronic

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

// Recurrent + feedforward risk model.
//
// The dynamic block (T steps x 10 services) runs oldest step first through
// one LSTM layer; the hidden states of every step are concatenated with the
// static block and fed to a stack of rectified dense layers with inverted
// dropout, ending in a single sigmoid unit. All trainable values live in one
// flat vector so the optimizer, finite-difference checks and checkpoints can
// treat the model uniformly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#if defined(__SSE3__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include "json.hpp"

#include "chronic/common.hpp"
#include "chronic/loss.hpp"
#include "chronic/pipeline.hpp"
#include "chronic/random.hpp"

namespace chronic {

struct ModelConfig {
  int lstm_units = 4;
  int fc_layers = 6;
  int fc_first_width = 64;
  int fc_rest_width = 32;
  double dropout_rate = 0.44;
  double l2_gamma = 1.78e-3;
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int max_epochs = 300;
  int patience = 15;
  double recall_weight = 4.5;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kWeightedF1;
  bool use_dynamic = true;  // false zeroes the dynamic block (static-only ablation)

  void validate() const {
    if (lstm_units < 1 || fc_layers < 1 || fc_first_width < 1 || fc_rest_width < 1)
      throw Error("model: layer sizes must be positive");
    if (!(dropout_rate >= 0 && dropout_rate < 1)) throw Error("model: dropout_rate must be in [0,1)");
    if (l2_gamma < 0) throw Error("model: l2_gamma must be >= 0");
    if (!(learning_rate > 0)) throw Error("model: learning_rate must be > 0");
    if (batch_size < 1 || max_epochs < 1 || patience < 1) throw Error("model: bad training schedule");
    if (!(recall_weight > 0)) throw Error("model: recall_weight must be > 0");
    if (!(threshold > 0 && threshold < 1)) throw Error("model: threshold must be in (0,1)");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"lstm_units", c.lstm_units},     {"fc_layers", c.fc_layers},
                     {"fc_first_width", c.fc_first_width}, {"fc_rest_width", c.fc_rest_width},
                     {"dropout_rate", c.dropout_rate}, {"l2_gamma", c.l2_gamma},
                     {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},     {"patience", c.patience},
                     {"recall_weight", c.recall_weight}, {"threshold", c.threshold},
                     {"seed", c.seed},                 {"loss", to_string(c.loss)},
                     {"use_dynamic", c.use_dynamic}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.lstm_units = j.value("lstm_units", d.lstm_units);
  c.fc_layers = j.value("fc_layers", d.fc_layers);
  c.fc_first_width = j.value("fc_first_width", d.fc_first_width);
  c.fc_rest_width = j.value("fc_rest_width", d.fc_rest_width);
  c.dropout_rate = j.value("dropout_rate", d.dropout_rate);
  c.l2_gamma = j.value("l2_gamma", d.l2_gamma);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.patience = j.value("patience", d.patience);
  c.recall_weight = j.value("recall_weight", d.recall_weight);
  c.threshold = j.value("threshold", d.threshold);
  c.seed = j.value("seed", d.seed);
  c.loss = parse_loss_kind(j.value("loss", to_string(d.loss)));
  c.use_dynamic = j.value("use_dynamic", d.use_dynamic);
}

struct ModelShape {
  int static_size = 0;
  int sequence_length = 6;
  int input_dim = kNumServiceKinds;
  int lstm_units = 4;
  std::vector<int> widths;  // hidden dense layers
  bool use_dynamic = true;

  int recurrent_features() const { return sequence_length * lstm_units; }
  int dense_input() const { return recurrent_features() + static_size; }
  int feature_count() const { return static_size + sequence_length * input_dim; }

  static ModelShape make(const ModelConfig& cfg, const FeatureSchema& schema) {
    ModelShape s;
    s.static_size = schema.static_size();
    s.sequence_length = schema.sequence_length;
    s.input_dim = schema.dynamic_width();
    s.lstm_units = cfg.lstm_units;
    s.widths.push_back(cfg.fc_first_width);
    for (int i = 1; i < cfg.fc_layers; ++i) s.widths.push_back(cfg.fc_rest_width);
    s.use_dynamic = cfg.use_dynamic;
    return s;
  }

  bool operator==(const ModelShape&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelShape& s) {
  j = nlohmann::json{{"static_size", s.static_size}, {"sequence_length", s.sequence_length},
                     {"input_dim", s.input_dim},     {"lstm_units", s.lstm_units},
                     {"widths", s.widths},           {"use_dynamic", s.use_dynamic}};
}
inline void from_json(const nlohmann::json& j, ModelShape& s) {
  j.at("static_size").get_to(s.static_size);
  j.at("sequence_length").get_to(s.sequence_length);
  j.at("input_dim").get_to(s.input_dim);
  j.at("lstm_units").get_to(s.lstm_units);
  j.at("widths").get_to(s.widths);
  j.at("use_dynamic").get_to(s.use_dynamic);
}

// Offsets of each parameter block inside the flat vector. LSTM gates are
// stacked in the order input, forget, cell, output.
struct ParamLayout {
  struct Block {
    std::size_t offset = 0;
    int rows = 0, cols = 0;
    std::size_t size() const { return std::size_t(rows) * std::size_t(cols); }
  };
  Block lstm_wx, lstm_wh, lstm_b;
  std::vector<Block> dense_w, dense_b;
  Block out_w, out_b;
  std::size_t total = 0;

  explicit ParamLayout(const ModelShape& s) {
    auto take = [&](int r, int c) {
      Block b{total, r, c};
      total += b.size();
      return b;
    };
    const int h = s.lstm_units;
    lstm_wx = take(4 * h, s.input_dim);
    lstm_wh = take(4 * h, h);
    lstm_b = take(4 * h, 1);
    int in = s.dense_input();
    for (int w : s.widths) {
      dense_w.push_back(take(w, in));
      dense_b.push_back(take(w, 1));
      in = w;
    }
    out_w = take(1, in);
    out_b = take(1, 1);
  }
};

template <typename Scalar = double>
struct ModelParams {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  ModelShape shape;
  ParamLayout layout;
  Vec values;

  explicit ModelParams(ModelShape s) : shape(std::move(s)), layout(shape), values(Vec::Zero(Eigen::Index(layout.total))) {}

  static Eigen::Map<Mat> view(Vec& v, const ParamLayout::Block& b) {
    return Eigen::Map<Mat>(v.data() + b.offset, b.rows, b.cols);
  }
  static Eigen::Map<const Mat> view(const Vec& v, const ParamLayout::Block& b) {
    return Eigen::Map<const Mat>(v.data() + b.offset, b.rows, b.cols);
  }
  auto block(const ParamLayout::Block& b) { return view(values, b); }
  auto block(const ParamLayout::Block& b) const { return view(values, b); }

  Scalar output_bias() const { return values[Eigen::Index(layout.out_b.offset)]; }
};

// Seeded symmetric initialization: Glorot-uniform LSTM gates with forget
// bias 1, He-uniform rectified layers, a small LeCun-uniform output layer,
// and output bias ln(p / (1 - p)).
template <typename Scalar = double>
ModelParams<Scalar> init_params(const ModelShape& shape, double positive_fraction,
                                std::uint64_t seed) {
  if (!(positive_fraction > 0 && positive_fraction < 1))
    throw Error("init_params: positive fraction must be in (0,1)");
  ModelParams<Scalar> p(shape);
  Rng rng(derive_seed(seed, 0x1417));
  auto fill = [&](const ParamLayout::Block& b, double limit) {
    auto m = p.block(b);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = Scalar(rng.uniform(-limit, limit));
  };
  const int h = shape.lstm_units;
  fill(p.layout.lstm_wx, std::sqrt(6.0 / (shape.input_dim + 4 * h)));
  fill(p.layout.lstm_wh, std::sqrt(6.0 / (h + 4 * h)));
  p.block(p.layout.lstm_b).setZero();
  p.block(p.layout.lstm_b).middleRows(h, h).setConstant(Scalar(1));
  for (std::size_t l = 0; l < p.layout.dense_w.size(); ++l) {
    fill(p.layout.dense_w[l], std::sqrt(6.0 / p.layout.dense_w[l].cols));
    p.block(p.layout.dense_b[l]).setZero();
  }
  fill(p.layout.out_w, 0.1 * std::sqrt(3.0 / p.layout.out_w.cols));
  p.block(p.layout.out_b)(0, 0) = Scalar(std::log(positive_fraction / (1.0 - positive_fraction)));
  return p;
}

template <typename Scalar>
struct ForwardCache {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<Mat> gate_i, gate_f, gate_g, gate_o, cell, hidden;  // per processed step
  Mat dense_in;
  std::vector<Mat> pre, out, mask;  // per dense layer; mask already divided by keep prob
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> logits, probs;
};

namespace detail {

template <typename M>
void check_finite(const M& m, const char* where) {
  if (!m.allFinite()) throw Error(std::string("non-finite values in ") + where);
}

template <typename Scalar>
auto sigmoid(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x) {
  return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
}

// One draw from `rng` seeds a counter-based splitmix stream; each 64-bit
// value yields two keep/drop decisions at 32-bit resolution. Kept entries
// hold 1 / keep.
template <typename Scalar>
void fill_dropout_mask(Scalar* out, Eigen::Index n, double keep, Rng& rng) {
  const auto threshold = std::uint64_t(std::ldexp(keep, 32));
  const Scalar scale = Scalar(1.0 / keep);
  const std::uint64_t base = rng.next();
  for (Eigen::Index i = 0; i < n; i += 2) {
    const std::uint64_t u = splitmix64(base + std::uint64_t(i) * 0x9e3779b97f4a7c15ull);
    out[i] = scale * Scalar((u & 0xffffffffu) < threshold);
    if (i + 1 < n) out[i + 1] = scale * Scalar((u >> 32) < threshold);
  }
}

}  // namespace detail

// X holds one example per column in FeatureSchema order (static block, then
// the dynamic block with the current step first). Dropout masks are drawn
// from `dropout_rng` when training.
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> forward(const ModelParams<Scalar>& params,
                                                 const Eigen::MatrixBase<Derived>& X, bool training,
                                                 double dropout_rate = 0.0,
                                                 Rng* dropout_rng = nullptr,
                                                 ForwardCache<Scalar>* cache = nullptr) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto& s = params.shape;
  if (X.rows() != s.feature_count())
    throw Error("forward: expected " + std::to_string(s.feature_count()) + " features, got " +
                std::to_string(X.rows()));
  if (training && dropout_rate > 0 && !dropout_rng) throw Error("forward: dropout needs an rng");
  const Eigen::Index B = X.cols();
  const int H = s.lstm_units, T = s.sequence_length, D = s.input_dim;
  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  for (auto* v : {&c.gate_i, &c.gate_f, &c.gate_g, &c.gate_o, &c.cell, &c.hidden}) v->assign(T, Mat());
  c.pre.assign(s.widths.size(), Mat());
  c.out.assign(s.widths.size(), Mat());
  c.mask.assign(s.widths.size(), Mat());

  const auto Wx = params.block(params.layout.lstm_wx);
  const auto Wh = params.block(params.layout.lstm_wh);
  const auto bl = params.block(params.layout.lstm_b);
  c.dense_in.resize(s.dense_input(), B);
  Mat h_prev = Mat::Zero(H, B), c_prev = Mat::Zero(H, B);
  for (int step = 0; step < T; ++step) {
    const int t = T - 1 - step;  // oldest first
    Mat gates = Wh * h_prev;
    if (s.use_dynamic) gates.noalias() += Wx * X.middleRows(s.static_size + t * D, D).template cast<Scalar>();
    gates.colwise() += bl.col(0);
    c.gate_i[step] = detail::sigmoid<Scalar>(gates.topRows(H));
    c.gate_f[step] = detail::sigmoid<Scalar>(gates.middleRows(H, H));
    c.gate_g[step] = gates.middleRows(2 * H, H).array().tanh().matrix();
    c.gate_o[step] = detail::sigmoid<Scalar>(gates.bottomRows(H));
    c.cell[step] = (c.gate_f[step].array() * c_prev.array() +
                    c.gate_i[step].array() * c.gate_g[step].array()).matrix();
    c.hidden[step] = (c.gate_o[step].array() * c.cell[step].array().tanh()).matrix();
    c.dense_in.middleRows(step * H, H) = c.hidden[step];
    h_prev = c.hidden[step];
    c_prev = c.cell[step];
  }
  detail::check_finite(c.dense_in.topRows(s.recurrent_features()), "lstm");
  c.dense_in.bottomRows(s.static_size) = X.topRows(s.static_size).template cast<Scalar>();

  const Scalar keep = Scalar(1.0 - dropout_rate);
  const Mat* in = &c.dense_in;
  for (std::size_t l = 0; l < s.widths.size(); ++l) {
    c.pre[l] = params.block(params.layout.dense_w[l]) * *in;
    c.pre[l].colwise() += params.block(params.layout.dense_b[l]).col(0);
    c.out[l] = c.pre[l].cwiseMax(Scalar(0));
    if (training && dropout_rate > 0) {
      c.mask[l].resize(c.out[l].rows(), B);
      detail::fill_dropout_mask(c.mask[l].data(), c.mask[l].size(), double(keep), *dropout_rng);
      c.out[l].array() *= c.mask[l].array();
    }
    detail::check_finite(c.out[l], "dense layer");
    in = &c.out[l];
  }
  c.logits = params.block(params.layout.out_w) * *in;
  c.logits.array() += params.output_bias();
  detail::check_finite(c.logits, "output layer");
  c.probs = (Scalar(1) / (Scalar(1) + (-c.logits.array()).exp())).matrix();
  return c.probs;
}

struct LossSpec {
  LossKind kind = LossKind::kWeightedF1;
  double recall_weight = 4.5;
  double positive_weight = 1.0;  // weighted BCE only
};

inline LossSpec loss_spec(const ModelConfig& cfg, double train_positive_fraction) {
  LossSpec s{cfg.loss, cfg.recall_weight, 1.0};
  if (cfg.loss == LossKind::kWeightedBce) s.positive_weight = class_weight(train_positive_fraction);
  return s;
}

// Data loss (no regularization) of probabilities/logits against labels.
template <typename Scalar>
double data_loss(const LossSpec& spec, std::span<const Scalar> y, std::span<const Scalar> probs,
                 std::span<const Scalar> logits) {
  if (spec.kind == LossKind::kWeightedF1) return weighted_f1_loss(y, probs, spec.recall_weight);
  std::vector<Scalar> scratch(y.size());
  return bce_from_logits(y, logits, spec.kind == LossKind::kWeightedBce ? spec.positive_weight : 1.0,
                         std::span<Scalar>(scratch));
}

template <typename Scalar>
double l2_penalty(const ModelParams<Scalar>& p, double gamma) {
  double s = 0;
  for (auto& b : p.layout.dense_w) s += double(p.block(b).squaredNorm());
  return gamma * s;
}

template <typename Scalar>
struct GradientResult {
  double objective = 0;  // data loss + L2
  double data_loss = 0;
  typename ModelParams<Scalar>::Vec grad;
};

// Exact gradient of data loss + gamma * sum ||W_dense||^2 by backpropagation
// through the output, dense stack and LSTM recurrence.
template <typename Scalar, typename Derived, typename YDerived>
GradientResult<Scalar> loss_gradient(const ModelParams<Scalar>& params,
                                     const Eigen::MatrixBase<Derived>& X,
                                     const Eigen::MatrixBase<YDerived>& y, const LossSpec& spec,
                                     double l2_gamma, double dropout_rate = 0.0,
                                     Rng* dropout_rng = nullptr) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Row = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  const auto& s = params.shape;
  const Eigen::Index B = X.cols();
  if (B == 0) throw Error("loss_gradient: empty batch");
  if (y.size() != B) throw Error("loss_gradient: label count mismatch");
  ForwardCache<Scalar> c;
  forward(params, X, dropout_rate > 0, dropout_rate, dropout_rng, &c);

  GradientResult<Scalar> r;
  r.grad = ModelParams<Scalar>::Vec::Zero(params.values.size());
  auto G = [&](const ParamLayout::Block& b) { return ModelParams<Scalar>::view(r.grad, b); };

  std::vector<Scalar> yv(y.derived().data(), y.derived().data() + B);
  Row dlogit(B);
  std::span<const Scalar> ys(yv), ps(c.probs.data(), std::size_t(B)), zs(c.logits.data(), std::size_t(B));
  std::span<Scalar> ds(dlogit.data(), std::size_t(B));
  if (spec.kind == LossKind::kWeightedF1) {
    r.data_loss = weighted_f1_loss_grad(ys, ps, spec.recall_weight, ds);
    dlogit.array() *= c.probs.array() * (Scalar(1) - c.probs.array());
  } else {
    r.data_loss = bce_from_logits(ys, zs, spec.kind == LossKind::kWeightedBce ? spec.positive_weight : 1.0, ds);
  }
  r.objective = r.data_loss + l2_penalty(params, l2_gamma);

  const std::size_t L = s.widths.size();
  const Mat& last = L ? c.out[L - 1] : c.dense_in;
  G(params.layout.out_w).noalias() = dlogit * last.transpose();
  G(params.layout.out_b)(0, 0) = dlogit.sum();
  Mat dz = params.block(params.layout.out_w).transpose() * dlogit;
  for (std::size_t li = L; li-- > 0;) {
    if (c.mask[li].size()) dz.array() *= c.mask[li].array();
    dz.array() *= (c.pre[li].array() > Scalar(0)).template cast<Scalar>();
    const Mat& in = li ? c.out[li - 1] : c.dense_in;
    auto W = params.block(params.layout.dense_w[li]);
    G(params.layout.dense_w[li]).noalias() = dz * in.transpose();
    G(params.layout.dense_w[li]) += Scalar(2 * l2_gamma) * W;
    G(params.layout.dense_b[li]) = dz.rowwise().sum();
    Mat prev = W.transpose() * dz;
    dz.swap(prev);
  }
  detail::check_finite(dz, "dense backward");

  // Backpropagation through time over the processed (oldest-first) steps.
  const int H = s.lstm_units, T = s.sequence_length, D = s.input_dim;
  const auto Wh = params.block(params.layout.lstm_wh);
  auto gWx = G(params.layout.lstm_wx);
  auto gWh = G(params.layout.lstm_wh);
  auto gb = G(params.layout.lstm_b);
  Mat dh_next = Mat::Zero(H, B), dc_next = Mat::Zero(H, B), dgates(4 * H, B);
  for (int step = T - 1; step >= 0; --step) {
    const int t = T - 1 - step;
    Mat dh = dz.middleRows(step * H, H) + dh_next;
    auto tc = c.cell[step].array().tanh();
    auto& gi = c.gate_i[step];
    auto& gf = c.gate_f[step];
    auto& gg = c.gate_g[step];
    auto& go = c.gate_o[step];
    Mat dc = (dh.array() * go.array() * (Scalar(1) - tc.square()) + dc_next.array()).matrix();
    const Mat c_prev = step ? c.cell[step - 1] : Mat::Zero(H, B);
    const Mat h_prev = step ? c.hidden[step - 1] : Mat::Zero(H, B);
    dgates.topRows(H) = (dc.array() * gg.array() * gi.array() * (Scalar(1) - gi.array())).matrix();
    dgates.middleRows(H, H) = (dc.array() * c_prev.array() * gf.array() * (Scalar(1) - gf.array())).matrix();
    dgates.middleRows(2 * H, H) = (dc.array() * gi.array() * (Scalar(1) - gg.array().square())).matrix();
    dgates.bottomRows(H) = (dh.array() * tc * go.array() * (Scalar(1) - go.array())).matrix();
    if (s.use_dynamic) gWx.noalias() += dgates * X.middleRows(s.static_size + t * D, D).transpose().template cast<Scalar>();
    gWh.noalias() += dgates * h_prev.transpose();
    gb += dgates.rowwise().sum();
    dh_next.noalias() = Wh.transpose() * dgates;
    dc_next = (dc.array() * gf.array()).matrix();
  }
  detail::check_finite(r.grad, "lstm backward");
  return r;
}

template <typename Scalar = double>
struct AdamState {
  typename ModelParams<Scalar>::Vec m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

template <typename Scalar, typename Derived>
void adam_step(typename ModelParams<Scalar>::Vec& params, const Eigen::MatrixBase<Derived>& grad,
               AdamState<Scalar>& st, double lr) {
  if (st.m.size() != params.size()) {
    st.m = ModelParams<Scalar>::Vec::Zero(params.size());
    st.v = ModelParams<Scalar>::Vec::Zero(params.size());
    st.step = 0;
  }
  ++st.step;
  st.m = Scalar(st.beta1) * st.m + Scalar(1 - st.beta1) * grad;
  st.v = Scalar(st.beta2) * st.v + Scalar(1 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
  params.array() -= Scalar(lr) * (st.m.array() / Scalar(c1)) /
                    ((st.v.array() / Scalar(c2)).sqrt() + Scalar(st.epsilon));
}

// ---------------------------------------------------------------------------
// Training

// Columns of scaled example vectors plus labels.
struct Design {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;

  Eigen::Index size() const { return X.cols(); }
  double positive_fraction() const { return y.size() ? y.mean() : 0.0; }
};

inline Design make_design(const std::vector<const Example*>& rows, const StandardScaler* scaler,
                          int feature_count) {
  Design d;
  d.X.resize(feature_count, Eigen::Index(rows.size()));
  d.y.resize(Eigen::Index(rows.size()));
  std::vector<double> buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    buf = rows[i]->x;
    if (int(buf.size()) != feature_count) throw Error("make_design: example has wrong length");
    if (scaler) scaler->apply(buf);
    d.X.col(Eigen::Index(i)) = Eigen::Map<const Eigen::VectorXd>(buf.data(), feature_count);
    d.y[Eigen::Index(i)] = rows[i]->y;
  }
  return d;
}

struct TrainReport {
  std::vector<double> train_loss, val_loss;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

// Stops once validation loss has not decreased for `patience` epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Returns true when training should stop after `epoch` (1-based).
  bool update(int epoch, double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch;
      improved_ = true;
    } else {
      improved_ = false;
    }
    return epoch - best_epoch_ >= patience_;
  }
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  bool improved_ = false;
};

// Inference-mode data loss averaged over batch_size chunks, weighted by
// chunk size.
template <typename Scalar = double>
double evaluate_loss(const ModelParams<Scalar>& params, const Design& d, const LossSpec& spec,
                     int batch_size) {
  double total = 0;
  const Eigen::Index n = d.size();
  for (Eigen::Index a = 0; a < n; a += batch_size) {
    const Eigen::Index m = std::min<Eigen::Index>(batch_size, n - a);
    ForwardCache<Scalar> c;
    forward(params, d.X.middleCols(a, m), false, 0.0, nullptr, &c);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> yb = d.y.segment(a, m).template cast<Scalar>();
    total += double(m) * data_loss<Scalar>(spec, std::span<const Scalar>(yb.data(), std::size_t(m)),
                                           std::span<const Scalar>(c.probs.data(), std::size_t(m)),
                                           std::span<const Scalar>(c.logits.data(), std::size_t(m)));
  }
  return n ? total / double(n) : 0.0;
}

template <typename Scalar = double>
struct TrainResult {
  ModelParams<Scalar> params;
  TrainReport report;
};

// Flushes subnormal floats to zero for the lifetime of the guard.
class DenormalGuard {
 public:
  DenormalGuard() {
#if defined(__SSE3__)
    saved_ = _mm_getcsr();
    _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
    _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
  }
  ~DenormalGuard() {
#if defined(__SSE3__)
    _mm_setcsr(saved_);
#endif
  }
  DenormalGuard(const DenormalGuard&) = delete;
  DenormalGuard& operator=(const DenormalGuard&) = delete;

 private:
  unsigned saved_ = 0;
};

// Adam on shuffled minibatches; keeps the weights of the epoch with the
// lowest validation loss.
template <typename Scalar = double>
TrainResult<Scalar> train(const ModelConfig& cfg, const FeatureSchema& schema,
                                 const Design& train_set, const Design& val_set,
                                 bool verbose = false) {
  cfg.validate();
  DenormalGuard ftz;
  if (train_set.size() == 0 || val_set.size() == 0) throw Error("train: empty train or validation set");
  const double p = train_set.positive_fraction();
  if (p <= 0) throw Error("train: training set has no positive examples");
  if (p >= 1) throw Error("train: training set has no negative examples");
  const auto shape = ModelShape::make(cfg, schema);
  if (train_set.X.rows() != shape.feature_count()) throw Error("train: feature count mismatch");
  auto params = init_params<Scalar>(shape, p, cfg.seed);
  const LossSpec spec = loss_spec(cfg, p);
  AdamState<Scalar> adam;
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5eed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 0x5eed, 2));
  EarlyStopping stopper(cfg.patience);
  TrainResult<Scalar> result{params, {}};

  std::vector<Eigen::Index> order(std::size_t(train_set.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = Eigen::Index(i);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> xb;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> yb;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0;
    for (std::size_t a = 0; a < order.size(); a += std::size_t(cfg.batch_size)) {
      const std::size_t m = std::min(order.size() - a, std::size_t(cfg.batch_size));
      xb.resize(train_set.X.rows(), Eigen::Index(m));
      yb.resize(Eigen::Index(m));
      for (std::size_t j = 0; j < m; ++j) {
        xb.col(Eigen::Index(j)) = train_set.X.col(order[a + j]).template cast<Scalar>();
        yb[Eigen::Index(j)] = Scalar(train_set.y[order[a + j]]);
      }
      auto g = loss_gradient(params, xb, yb, spec, cfg.l2_gamma, cfg.dropout_rate, &dropout_rng);
      adam_step(params.values, g.grad, adam, cfg.learning_rate);
      epoch_loss += g.objective * double(m);
    }
    result.report.train_loss.push_back(epoch_loss / double(order.size()));
    const double val = evaluate_loss(params, val_set, spec, cfg.batch_size);
    result.report.val_loss.push_back(val);
    const bool stop = stopper.update(epoch, val);
    if (stopper.improved()) result.params = params;
    result.report.stopped_epoch = epoch;
    if (verbose)
      std::cerr << "epoch " << epoch << " train " << result.report.train_loss.back() << " val "
                << val << (stopper.improved() ? " *" : "") << '\n';
    if (stop) break;
  }
  result.report.best_epoch = stopper.best_epoch();
  return result;
}

template <typename Scalar>
ModelParams<double> to_double(const ModelParams<Scalar>& p) {
  ModelParams<double> out(p.shape);
  out.values = p.values.template cast<double>();
  return out;
}

struct Prediction {
  std::vector<double> probabilities;
  std::vector<int> labels;
};

// label = 1 iff probability >= threshold.
template <typename Scalar = double>
Prediction predict(const ModelParams<Scalar>& params, const Eigen::MatrixXd& X, double threshold,
                   int batch_size = 4096) {
  Prediction out;
  out.probabilities.resize(std::size_t(X.cols()));
  out.labels.resize(std::size_t(X.cols()));
  for (Eigen::Index a = 0; a < X.cols(); a += batch_size) {
    const Eigen::Index m = std::min<Eigen::Index>(batch_size, X.cols() - a);
    auto p = forward(params, X.middleCols(a, m), false);
    for (Eigen::Index j = 0; j < m; ++j) {
      out.probabilities[std::size_t(a + j)] = double(p[j]);
      out.labels[std::size_t(a + j)] = double(p[j]) >= threshold ? 1 : 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct Checkpoint {
  ModelConfig config;
  FeatureSchema schema;
  StandardScaler scaler;
  ModelParams<double> params;
  nlohmann::json metadata = nlohmann::json::object();
};

inline nlohmann::json block_json(const ModelParams<double>& p, const ParamLayout::Block& b) {
  auto m = p.block(b);
  std::vector<double> flat(m.data(), m.data() + m.size());
  return {{"rows", b.rows}, {"cols", b.cols}, {"values", flat}};
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto& p = ck.params;
  nlohmann::json dense = nlohmann::json::array();
  for (std::size_t l = 0; l < p.layout.dense_w.size(); ++l)
    dense.push_back({{"w", block_json(p, p.layout.dense_w[l])}, {"b", block_json(p, p.layout.dense_b[l])}});
  nlohmann::json j = {
      {"format", "chronic-checkpoint-v1"},
      {"config", ck.config},
      {"schema_hash", ck.schema.hash()},
      {"schema", ck.schema.to_json()},
      {"scaler", ck.scaler.to_json()},
      {"shape", p.shape},
      {"metadata", ck.metadata},
      {"weights",
       {{"lstm", {{"wx", block_json(p, p.layout.lstm_wx)}, {"wh", block_json(p, p.layout.lstm_wh)}, {"b", block_json(p, p.layout.lstm_b)}}},
        {"dense", dense},
        {"out", {{"w", block_json(p, p.layout.out_w)}, {"b", block_json(p, p.layout.out_b)}}}}}};
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(1) << '\n';
}

// Refuses a checkpoint whose schema hash differs from `expected` when given.
inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const FeatureSchema* expected = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "chronic-checkpoint-v1") throw Error(path.string() + ": not a checkpoint");
  auto schema = FeatureSchema::from_json(j.at("schema"));
  const auto hash = j.at("schema_hash").get<std::uint64_t>();
  if (hash != schema.hash()) throw Error(path.string() + ": schema hash does not match its schema");
  if (expected && expected->hash() != hash)
    throw Error(path.string() + ": checkpoint schema hash " + std::to_string(hash) +
                " does not match dataset schema hash " + std::to_string(expected->hash()));
  Checkpoint ck{j.at("config").get<ModelConfig>(), schema, StandardScaler::from_json(j.at("scaler")),
                ModelParams<double>(j.at("shape").get<ModelShape>())};
  auto read = [&](const nlohmann::json& bj, const ParamLayout::Block& b) {
    if (bj.at("rows").get<int>() != b.rows || bj.at("cols").get<int>() != b.cols)
      throw Error(path.string() + ": weight block shape mismatch");
    auto v = bj.at("values").get<std::vector<double>>();
    if (v.size() != b.size()) throw Error(path.string() + ": weight block size mismatch");
    std::copy(v.begin(), v.end(), ck.params.block(b).data());
  };
  auto& w = j.at("weights");
  auto& p = ck.params;
  read(w.at("lstm").at("wx"), p.layout.lstm_wx);
  read(w.at("lstm").at("wh"), p.layout.lstm_wh);
  read(w.at("lstm").at("b"), p.layout.lstm_b);
  auto& dense = w.at("dense");
  if (dense.size() != p.layout.dense_w.size()) throw Error(path.string() + ": dense layer count mismatch");
  for (std::size_t l = 0; l < dense.size(); ++l) {
    read(dense[l].at("w"), p.layout.dense_w[l]);
    read(dense[l].at("b"), p.layout.dense_b[l]);
  }
  read(w.at("out").at("w"), p.layout.out_w);
  read(w.at("out").at("b"), p.layout.out_b);
  ck.metadata = j.value("metadata", nlohmann::json::object());
  return ck;
}

}  // namespace chronic

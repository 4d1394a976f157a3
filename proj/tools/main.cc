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

// Command-line front end: synth, preprocess, train, crossval, predict,
// explain, pick.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "chronic/eval.hpp"
#include "chronic/explain.hpp"
#include "chronic/pipeline.hpp"
#include "chronic/records.hpp"
#include "chronic/svg.hpp"
#include "chronic/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chronic;

namespace {

struct PipelineConfig {
  int step_days = 30;
  int sequence_length = 6;
  int horizon_days = 180;
  int window_days = 365;
  int chronic_threshold = 180;
  int min_stay_minutes = kMinStayMinutes;
  int val_steps = 1;
  int test_steps = 1;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PipelineConfig, step_days, sequence_length, horizon_days,
                                                window_days, chronic_threshold, min_stay_minutes, val_steps,
                                                test_steps)

struct RunConfig {
  std::string data_dir;     // raw clients.csv / events.csv
  std::string dataset_dir;  // dataset.csv / dataset.json
  std::string model_path;   // model.json
  std::string out_dir = "out";
  std::optional<std::string> data_end;
  SynthConfig synth;
  PipelineConfig pipeline;
  ModelConfig model;
  LimeConfig lime;
  double logreg_l2 = 1e-4;
  int folds = 10;
  int train_fold = 1;
  std::uint64_t seed = 0;
};

json to_json(const RunConfig& c) {
  json j = {{"data_dir", c.data_dir},   {"dataset_dir", c.dataset_dir}, {"model_path", c.model_path},
            {"out_dir", c.out_dir},     {"synth", c.synth},             {"pipeline", c.pipeline},
            {"model", c.model},         {"lime", c.lime},               {"logreg_l2", c.logreg_l2},
            {"folds", c.folds},         {"train_fold", c.train_fold},   {"seed", c.seed}};
  j["data_end"] = c.data_end ? json(*c.data_end) : json(nullptr);
  return j;
}

RunConfig run_config_from(const json& j) {
  RunConfig c;
  c.data_dir = j.value("data_dir", c.data_dir);
  c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
  c.model_path = j.value("model_path", c.model_path);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("data_end") && !j["data_end"].is_null()) c.data_end = j["data_end"].get<std::string>();
  if (j.contains("synth")) c.synth = j["synth"].get<SynthConfig>();
  if (j.contains("pipeline")) c.pipeline = j["pipeline"].get<PipelineConfig>();
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("lime")) c.lime = j["lime"].get<LimeConfig>();
  c.logreg_l2 = j.value("logreg_l2", c.logreg_l2);
  c.folds = j.value("folds", c.folds);
  c.train_fold = j.value("train_fold", c.train_fold);
  c.seed = j.value("seed", c.seed);
  static const std::set<std::string> known{"data_dir", "dataset_dir", "model_path", "out_dir", "data_end",
                                           "synth",    "pipeline",    "model",      "lime",    "logreg_l2",
                                           "folds",    "train_fold",  "seed"};
  for (auto& [k, v] : j.items())
    if (!known.count(k)) warn("config: ignoring unknown key '" + k + "'");
  return c;
}

// Options that are applied over the config file only when given.
struct Overrides {
  std::string config_path, out_dir, data_dir, dataset_dir, model_path, data_end, loss, split = "all", client_date;
  std::uint64_t seed = 0;
  int clients = 0, folds = 0, fold = 0, epochs = 0, samples = 0, budget = 0, pool_max = 0;
  long long client = 0;
  double positive_rate = 0, threshold = 0;
  bool compare = false, verbose = false;
};

FeatureSchema schema_from(const RunConfig& c) {
  auto s = FeatureSchema::from_catalog();
  s.step_days = c.pipeline.step_days;
  s.sequence_length = c.pipeline.sequence_length;
  s.horizon_days = c.pipeline.horizon_days;
  s.window_days = c.pipeline.window_days;
  s.chronic_threshold = c.pipeline.chronic_threshold;
  s.min_stay_minutes = c.pipeline.min_stay_minutes;
  return s;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw Error("I/O failure writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// Re-reads every output so a zero exit status means the files are usable.
void verify_outputs(const std::vector<fs::path>& paths) {
  for (auto& p : paths) {
    if (!fs::exists(p)) throw Error("missing output " + p.string());
    const auto ext = p.extension().string();
    if (ext == ".json") {
      read_json(p);
    } else if (ext == ".csv") {
      csv::read(p.string());
    } else if (ext == ".svg") {
      std::ifstream in(p);
      std::string first;
      std::getline(in, first);
      if (first.rfind("<svg", 0) != 0) throw Error(p.string() + ": not an SVG document");
    }
  }
}

fs::path out_dir(const RunConfig& c) {
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

void write_resolved(const RunConfig& c, const std::string& command) {
  write_json(out_dir(c) / ("resolved_config_" + command + ".json"), to_json(c));
}

std::string input_dir(const std::string& configured, const RunConfig& c) {
  return configured.empty() ? c.out_dir : configured;
}

Dataset load_dataset_dir(const RunConfig& c) {
  const fs::path dir = input_dir(c.dataset_dir, c);
  return load_dataset(dir / "dataset.csv", dir / "dataset.json");
}

Checkpoint load_model(const RunConfig& c, const FeatureSchema& schema) {
  const fs::path path = c.model_path.empty() ? fs::path(c.out_dir) / "model.json" : fs::path(c.model_path);
  return load_checkpoint(path, &schema);
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& c) {
  auto rs = generate_synthetic(c.synth, c.seed);
  const auto dir = out_dir(c);
  save_records(rs, dir, default_catalog());
  write_resolved(c, "synth");
  verify_outputs({dir / "clients.csv", dir / "events.csv"});
  std::cout << "wrote " << rs.clients.size() << " clients and " << rs.events.size() << " events to " << dir.string()
            << '\n';
  return 0;
}

int cmd_preprocess(const RunConfig& c) {
  const fs::path raw = input_dir(c.data_dir, c);
  std::optional<Date> data_end;
  if (c.data_end) {
    data_end = parse_date(*c.data_end);
    if (!data_end) throw Error("data_end: expected YYYY-MM-DD");
  }
  auto rs = load_records(raw, default_catalog(), data_end);
  const auto schema = schema_from(c);
  auto ds = build_dataset(rs, schema);
  if (!ds.examples.empty()) {
    try {
      auto split = partition(ds, c.train_fold, c.pipeline.val_steps, c.pipeline.test_steps);
      if (!split.train.empty()) ds.scaler = fit_scaler(select(ds, split.train), schema);
    } catch (const Error& e) {
      warn(std::string("preprocess: no scaler stored (") + e.what() + ")");
    }
  }
  const auto dir = out_dir(c);
  save_dataset(ds, dir / "dataset.csv", dir / "dataset.json");
  write_resolved(c, "preprocess");
  verify_outputs({dir / "dataset.csv", dir / "dataset.json"});
  std::cout << "wrote " << ds.examples.size() << " examples (" << ds.dates().size() << " time steps, positive rate "
            << format_fixed(ds.positive_rate(), 4) << ") to " << dir.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& c, bool verbose) {
  auto ds = load_dataset_dir(c);
  auto fold = make_fold(ds, c.train_fold, c.pipeline.val_steps, c.pipeline.test_steps);
  ModelConfig mc = c.model;
  mc.seed = c.seed;
  const auto t0 = std::chrono::steady_clock::now();
  auto r = train<float>(mc, ds.schema, fold.train, fold.val, verbose);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Checkpoint ck{mc, ds.schema, fold.scaler, to_double(r.params)};
  ck.metadata = {{"train_fold", c.train_fold},
                 {"val_steps", c.pipeline.val_steps},
                 {"test_steps", c.pipeline.test_steps},
                 {"best_epoch", r.report.best_epoch},
                 {"stopped_epoch", r.report.stopped_epoch},
                 {"train_positive_fraction", fold.train.positive_fraction()}};
  const auto dir = out_dir(c);
  save_checkpoint(ck, dir / "model.json");
  {
    std::ofstream os(dir / "train_report.csv", std::ios::binary);
    csv::write_row(os, {"epoch", "train_loss", "val_loss", "best"});
    for (std::size_t e = 0; e < r.report.train_loss.size(); ++e)
      csv::write_row(os, {std::to_string(e + 1), format_double(r.report.train_loss[e]),
                          format_double(r.report.val_loss[e]), int(e + 1) == r.report.best_epoch ? "1" : "0"});
  }
  svg::write(dir / "loss_curve.svg",
             svg::line_chart("Training and validation loss (" + to_string(mc.loss) + ")", "epoch",
                             {{"train (incl. L2)", r.report.train_loss, "#1f77b4"},
                              {"validation", r.report.val_loss, "#ff7f0e"}}));
  auto probs = predict(ck.params, fold.test.X, mc.threshold).probabilities;
  std::vector<int> y(probs.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = int(fold.test.y[Eigen::Index(i)]);
  auto m = compute_metrics(y, probs, mc.threshold);
  write_resolved(c, "train");
  verify_outputs({dir / "model.json", dir / "train_report.csv", dir / "loss_curve.svg"});
  std::cout << "trained " << r.report.stopped_epoch << " epochs (best " << r.report.best_epoch << ") in "
            << format_fixed(secs, 1) << " s; test recall " << format_metric(m.recall) << " precision "
            << format_metric(m.precision) << " auc " << format_metric(m.auc) << '\n';
  return 0;
}

int cmd_crossval(const RunConfig& c, bool compare) {
  auto ds = load_dataset_dir(c);
  ModelConfig mc = c.model;
  mc.seed = c.seed;
  LogRegConfig lr;
  lr.l2 = c.logreg_l2;
  std::vector<CVReport> reports;
  if (compare) {
    for (auto& m : comparison_models(mc, lr))
      reports.push_back(nested_cv(ds, c.folds, m.trainer, mc.threshold, m.name, c.pipeline.val_steps,
                                  c.pipeline.test_steps));
  } else {
    reports.push_back(nested_cv(ds, c.folds, rnn_trainer(mc), mc.threshold, "rnn_mlp_" + to_string(mc.loss),
                                c.pipeline.val_steps, c.pipeline.test_steps));
  }
  const auto dir = out_dir(c);
  write_cv_report(reports, dir / "cv_report.csv");
  write_resolved(c, "crossval");
  verify_outputs({dir / "cv_report.csv"});
  std::cout << format_cv_table(reports);
  return 0;
}

int cmd_predict(const RunConfig& c, const std::string& split_name, std::optional<double> threshold) {
  auto ds = load_dataset_dir(c);
  auto ck = load_model(c, ds.schema);
  const double t = threshold.value_or(ck.config.threshold);
  std::vector<std::size_t> idx;
  if (split_name == "all") {
    idx.resize(ds.examples.size());
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    const int fold = ck.metadata.value("train_fold", 1);
    auto s = partition(ds, fold, ck.metadata.value("val_steps", 1), ck.metadata.value("test_steps", 1));
    if (split_name == "train") idx = s.train;
    else if (split_name == "val") idx = s.val;
    else if (split_name == "test") idx = s.test;
    else throw Error("--split must be all, train, val or test");
  }
  auto rows = select(ds, idx);
  auto design = make_design(rows, &ck.scaler, ds.schema.vector_length());
  auto pred = predict(ck.params, design.X, t);
  const auto dir = out_dir(c);
  {
    std::ofstream os(dir / "predictions.csv", std::ios::binary);
    csv::write_row(os, {"ClientID", "Date", "y", "probability", "label"});
    for (std::size_t i = 0; i < rows.size(); ++i)
      csv::write_row(os, {std::to_string(rows[i]->client_id), format_date(rows[i]->date), std::to_string(rows[i]->y),
                          format_double(pred.probabilities[i]), std::to_string(pred.labels[i])});
  }
  write_resolved(c, "predict");
  verify_outputs({dir / "predictions.csv"});
  if (!rows.empty()) {
    std::vector<int> y;
    for (auto* r : rows) y.push_back(r->y);
    auto m = compute_metrics(y, pred.probabilities, t);
    std::cout << "predicted " << rows.size() << " examples; recall " << format_metric(m.recall) << " precision "
              << format_metric(m.precision) << " auc " << format_metric(m.auc) << '\n';
  } else {
    std::cout << "predicted 0 examples\n";
  }
  return 0;
}

struct ExplainContext {
  Dataset ds;
  Checkpoint ck;
  Split split;
  Discretizer disc;
  BlackBox box;
};

ExplainContext explain_context(const RunConfig& c) {
  auto ds = load_dataset_dir(c);
  auto ck = load_model(c, ds.schema);
  auto split = partition(ds, ck.metadata.value("train_fold", 1), ck.metadata.value("val_steps", 1),
                         ck.metadata.value("test_steps", 1));
  auto disc = fit_discretizer(select(ds, split.train), ds.schema);
  auto box = model_black_box(ck.params, ck.scaler);
  return {std::move(ds), std::move(ck), std::move(split), std::move(disc), std::move(box)};
}

std::vector<std::pair<std::string, double>> bars_of(const std::vector<ExplanationEntry>& entries) {
  std::vector<std::pair<std::string, double>> bars;
  for (auto& e : entries) bars.emplace_back(e.statement, e.weight);
  return bars;
}

int cmd_explain(const RunConfig& c, long long client, const std::string& date_text) {
  auto ctx = explain_context(c);
  auto date = parse_date(date_text);
  if (!date) throw Error("--date: expected YYYY-MM-DD");
  const Example* target = nullptr;
  for (auto& e : ctx.ds.examples)
    if (e.client_id == client && e.date == *date) target = &e;
  if (!target) throw Error("no example for client " + std::to_string(client) + " on " + date_text);
  LimeConfig lc = c.lime;
  lc.seed = c.seed;
  auto e = explain_instance(ctx.box, ctx.disc, target->x, lc, target->client_id, target->date);
  const auto dir = out_dir(c);
  const std::string stem = "explanation_" + std::to_string(client) + "_" + date_text;
  auto j = to_json(e);
  j["label"] = target->y;
  write_json(dir / (stem + ".json"), j);
  svg::write(dir / (stem + ".svg"),
             svg::bar_chart("Client " + std::to_string(client) + " on " + date_text + ": p = " +
                                format_fixed(e.predicted_probability, 3) + ", local R2 = " +
                                format_fixed(e.local_fidelity_r2, 3),
                            bars_of(e.entries)));
  write_resolved(c, "explain");
  verify_outputs({dir / (stem + ".json"), dir / (stem + ".svg")});
  std::cout << "probability " << format_fixed(e.predicted_probability, 4) << ", local R2 "
            << format_fixed(e.local_fidelity_r2, 3) << ", " << format_fixed(e.runtime_seconds, 2) << " s\n";
  for (auto& x : e.entries) std::cout << "  " << format_fixed(x.weight, 5) << "  " << x.statement << '\n';
  return 0;
}

int cmd_pick(const RunConfig& c) {
  auto ctx = explain_context(c);
  LimeConfig lc = c.lime;
  lc.seed = c.seed;
  auto rows = select(ctx.ds, ctx.split.train);
  auto val = select(ctx.ds, ctx.split.val);
  rows.insert(rows.end(), val.begin(), val.end());
  auto pool = sample_pool(rows, lc);
  std::vector<Explanation> exps;
  exps.reserve(pool.size());
  for (auto* e : pool) exps.push_back(explain_instance(ctx.box, ctx.disc, e->x, lc, e->client_id, e->date));
  auto g = submodular_pick(exps, ctx.disc.size(), lc.pick_budget);
  const auto dir = out_dir(c);
  auto j = to_json(g);
  j["pool_size"] = pool.size();
  j["budget"] = lc.pick_budget;
  write_json(dir / "global_explanation.json", j);
  std::vector<std::pair<std::string, double>> bars;
  for (std::size_t k = 0; k < g.entries.size() && k < 20; ++k) bars.emplace_back(g.entries[k].statement, g.entries[k].weight);
  svg::write(dir / "global_explanation.svg",
             svg::bar_chart("Submodular pick: " + std::to_string(g.picked.size()) + " explanations from a pool of " +
                                std::to_string(pool.size()),
                            bars));
  write_resolved(c, "pick");
  verify_outputs({dir / "global_explanation.json", dir / "global_explanation.svg"});
  for (std::size_t k = 0; k < g.entries.size() && k < 10; ++k)
    std::cout << "  " << format_fixed(g.entries[k].weight, 5) << "  " << g.entries[k].statement << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chronic homelessness risk modelling pipeline"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", o.seed, "Random seed");
  auto* out_opt = app.add_option("--out", o.out_dir, "Output directory");

  auto* synth = app.add_subcommand("synth", "Generate synthetic clients.csv and events.csv");
  auto* clients_opt = synth->add_option("--clients", o.clients, "Number of clients")->check(CLI::NonNegativeNumber);
  auto* rate_opt = synth->add_option("--positive-rate", o.positive_rate, "Target positive example rate");

  auto* pre = app.add_subcommand("preprocess", "Build the example dataset from raw CSVs");
  auto* data_opt = pre->add_option("--data", o.data_dir, "Directory with clients.csv and events.csv");
  auto* end_opt = pre->add_option("--data-end", o.data_end, "Last day covered by the records (YYYY-MM-DD)");

  auto add_dataset = [&](CLI::App* sub) { return sub->add_option("--dataset", o.dataset_dir, "Directory with dataset.csv and dataset.json"); };
  auto add_model = [&](CLI::App* sub) { return sub->add_option("--model", o.model_path, "Model checkpoint (model.json)"); };

  auto* tr = app.add_subcommand("train", "Train the recurrent model on one rolling-origin fold");
  std::vector<CLI::Option*> dataset_opts{add_dataset(tr)};
  auto* fold_opt = tr->add_option("--fold", o.fold, "Fold index (1 = most recent)")->check(CLI::PositiveNumber);
  auto* loss_opt = tr->add_option("--loss", o.loss, "weighted_f1, bce or weighted_bce");
  auto* epochs_opt = tr->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  tr->add_flag("--verbose", o.verbose, "Print per-epoch losses");

  auto* cv = app.add_subcommand("crossval", "Nested rolling-origin cross-validation");
  dataset_opts.push_back(add_dataset(cv));
  auto* folds_opt = cv->add_option("--folds", o.folds, "Number of folds")->check(CLI::PositiveNumber);
  cv->add_flag("--compare", o.compare, "Compare loss functions and logistic regression");
  std::vector<CLI::Option*> loss_opts{loss_opt, cv->add_option("--loss", o.loss, "weighted_f1, bce or weighted_bce")};
  std::vector<CLI::Option*> epoch_opts{epochs_opt, cv->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber)};

  auto* pr = app.add_subcommand("predict", "Score examples with a trained model");
  dataset_opts.push_back(add_dataset(pr));
  std::vector<CLI::Option*> model_opts{add_model(pr)};
  pr->add_option("--split", o.split, "all, train, val or test")->check(CLI::IsMember({"all", "train", "val", "test"}));
  auto* threshold_opt = pr->add_option("--threshold", o.threshold, "Classification threshold");

  auto* ex = app.add_subcommand("explain", "Local explanation of one prediction");
  dataset_opts.push_back(add_dataset(ex));
  model_opts.push_back(add_model(ex));
  ex->add_option("--client", o.client, "Client id")->required();
  ex->add_option("--date", o.client_date, "Example date (YYYY-MM-DD)")->required();
  std::vector<CLI::Option*> sample_opts{ex->add_option("--samples", o.samples, "Perturbation samples")->check(CLI::PositiveNumber)};

  auto* pk = app.add_subcommand("pick", "Global explanation by submodular pick");
  dataset_opts.push_back(add_dataset(pk));
  model_opts.push_back(add_model(pk));
  sample_opts.push_back(pk->add_option("--samples", o.samples, "Perturbation samples")->check(CLI::PositiveNumber));
  auto* budget_opt = pk->add_option("--budget", o.budget, "Number of explanations to pick")->check(CLI::PositiveNumber);
  auto* pool_opt = pk->add_option("--pool-max", o.pool_max, "Maximum explanation pool size")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  auto given = [](const std::vector<CLI::Option*>& opts) {
    for (auto* opt : opts)
      if (opt->count()) return true;
    return false;
  };

  try {
    RunConfig c = o.config_path.empty() ? RunConfig{} : run_config_from(read_json(o.config_path));
    if (seed_opt->count()) c.seed = o.seed;
    if (out_opt->count()) c.out_dir = o.out_dir;
    if (clients_opt->count()) c.synth.clients = o.clients;
    if (rate_opt->count()) c.synth.target_positive_rate = o.positive_rate;
    if (data_opt->count()) c.data_dir = o.data_dir;
    if (end_opt->count()) c.data_end = o.data_end;
    if (given(dataset_opts)) c.dataset_dir = o.dataset_dir;
    if (given(model_opts)) c.model_path = o.model_path;
    if (fold_opt->count()) c.train_fold = o.fold;
    if (given(loss_opts)) c.model.loss = parse_loss_kind(o.loss);
    if (given(epoch_opts)) c.model.max_epochs = o.epochs;
    if (folds_opt->count()) c.folds = o.folds;
    if (given(sample_opts)) c.lime.samples = o.samples;
    if (budget_opt->count()) c.lime.pick_budget = o.budget;
    if (pool_opt->count()) c.lime.pool_max = o.pool_max;
    c.model.validate();
    validate(c.synth);

    if (*synth) return cmd_synth(c);
    if (*pre) return cmd_preprocess(c);
    if (*tr) return cmd_train(c, o.verbose);
    if (*cv) return cmd_crossval(c, o.compare);
    if (*pr) return cmd_predict(c, o.split, threshold_opt->count() ? std::optional<double>(o.threshold) : std::nullopt);
    if (*ex) return cmd_explain(c, o.client, o.client_date);
    if (*pk) return cmd_pick(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

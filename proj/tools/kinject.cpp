// kinject: train, validate and explain knowledge-regularized networks from a
// config file.
//
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or configuration
// error. Results go to stdout as JSON, progress to stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "kinject/kinject.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace kinject::cli {
namespace {

struct Options {
  std::string config;
  std::string run_dir;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  std::string model;
  std::string baseline;
  std::string data;
  std::optional<std::size_t> top_k;
  bool aware = false;
  bool agnostic = false;
  std::optional<std::size_t> bins;
  std::string scale;
  std::optional<std::size_t> row;
  std::string method = "ig";
  bool on_probability = false;
  std::optional<std::size_t> steps;
};

void log(const std::string& msg) { std::cerr << "kinject: " << msg << std::endl; }

// Shortest text that reads back to the same double.
std::string num(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string lambda_text(const LambdaWeights& w) {
  return "(" + num(w.fit) + ", " + num(w.complexity) + ", " + num(w.knowledge) + ")";
}

json lambda_json(const LambdaWeights& w) { return json::array({w.fit, w.complexity, w.knowledge}); }

// ---------------------------------------------------------------------------
// Shared setup

struct Run {
  RunConfig cfg;
  Options opt;
  fs::path dir;

  fs::path file(const std::string& name) const { return dir / name; }
};

std::uint64_t parse_seed(const std::string& text, const std::string& source) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty())
    throw UsageError(source + " must be a nonnegative integer, got '" + text + "'");
  return v;
}

fs::path timestamped_dir(const std::string& root) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::path dir = fs::path(root) / name.str();
  for (int i = 1; fs::exists(dir); ++i) dir = fs::path(root) / (name.str() + "-" + std::to_string(i));
  return dir;
}

Run open_run(const Options& opt) {
  Run run;
  run.opt = opt;
  try {
    run.cfg = load_run_config(opt.config);
  } catch (const ParseError& e) {
    throw ConfigurationError(opt.config + ": " + e.what());
  }
  if (const char* env = std::getenv("KINJECT_SEED"); env && *env) run.cfg.seed = parse_seed(env, "KINJECT_SEED");
  if (opt.seed) run.cfg.seed = *opt.seed;
  if (!opt.data.empty()) run.cfg.data.path = opt.data;
  if (opt.bins) {
    if (*opt.bins < 1) throw UsageError("--bins must be at least 1");
    run.cfg.ale.bins = *opt.bins;
  }
  if (!opt.scale.empty()) run.cfg.ale.on_logit = opt.scale == "logit";
  if (opt.aware) run.cfg.ale.aware = true;
  if (opt.agnostic) run.cfg.ale.aware = false;
  if (opt.steps) {
    if (*opt.steps < 1) throw UsageError("--steps must be at least 1");
    run.cfg.explain.steps = *opt.steps;
  }

  run.dir = opt.run_dir.empty() ? timestamped_dir(run.cfg.output) : fs::path(opt.run_dir);
  std::error_code ec;
  fs::create_directories(run.dir, ec);
  if (ec) throw IoError("cannot create run directory '" + run.dir.string() + "': " + ec.message());
  write_text(run.file("config.toml"), to_toml(run.cfg));
  log("run directory " + run.dir.string() + ", seed " + std::to_string(run.cfg.seed));
  return run;
}

struct Prepared {
  Dataset data;  // selected feature columns, all rows
  Split split;
  std::vector<FeatureScore> ranking;  // set when selected by score
  std::vector<std::string> all_names;
};

std::uint64_t split_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {0x5917}); }

Prepared prepare(const RunConfig& cfg) {
  Prepared p;
  Dataset all = load_table(cfg.data.path, cfg.data.resolved_format(), cfg.data.label);
  log("loaded " + std::to_string(all.rows()) + " rows, " + std::to_string(all.features()) + " features from " +
      cfg.data.path);
  p.split = stratified_split(all, cfg.search.split, split_seed(cfg));

  std::vector<std::size_t> columns;
  const std::optional<std::size_t> top_k = cfg.data.select_top_k;
  if (!cfg.data.features.empty()) {
    for (const auto& name : cfg.data.features) columns.push_back(all.feature_index(name));
  } else if (top_k) {
    if (*top_k > all.features())
      throw UsageError("cannot select " + std::to_string(*top_k) + " features from " +
                       std::to_string(all.features()));
    p.ranking = roc_feature_select(all, *top_k, p.split.train);
    for (const auto& s : p.ranking) columns.push_back(s.index);
  } else {
    for (std::size_t j = 0; j < all.features(); ++j) columns.push_back(j);
  }
  p.data = all.select_columns(columns);
  p.all_names = all.feature_names;
  return p;
}

// Entries for dataset features that were not selected are dropped.
KnowledgeSpec knowledge_for(const RunConfig& cfg, const Prepared& p) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& entry : cfg.knowledge) {
    const auto& names = p.data.feature_names;
    const bool selected = std::find(names.begin(), names.end(), entry.first) != names.end();
    const bool known = std::find(p.all_names.begin(), p.all_names.end(), entry.first) != p.all_names.end();
    if (!selected && known) {
      log("knowledge for '" + entry.first + "' ignored, feature not selected");
      continue;
    }
    entries.push_back(entry);
  }
  try {
    return parse_knowledge_spec(entries, p.data.feature_names);
  } catch (const ValidationError& e) {
    throw ConfigurationError(e.what());
  }
}

TrainingData training_split(const Prepared& p) {
  return TrainingData::from(p.data, p.split.train, impute_and_standardize(p.data, p.split.train).stats);
}

// Columns of `data` in the order the model expects them.
Eigen::MatrixXd model_columns(const Model& model, const Dataset& data) {
  std::vector<std::size_t> cols;
  for (const auto& name : model.stats.names) cols.push_back(data.feature_index(name));
  return data.select_columns(cols).raw;
}

std::string model_path(const Run& run, const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (run.opt.run_dir.empty()) throw UsageError("give --model or a --run-dir containing " + fallback);
  return run.file(fallback).string();
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

// ---------------------------------------------------------------------------
// Commands

void cmd_select(const Options& opt) {
  Run run = open_run(opt);
  Dataset all = load_table(run.cfg.data.path, run.cfg.data.resolved_format(), run.cfg.data.label);
  const std::size_t k = opt.top_k.value_or(run.cfg.data.select_top_k.value_or(all.features()));
  if (k > all.features())
    throw UsageError("cannot select " + std::to_string(k) + " features from " + std::to_string(all.features()));
  const Split split = stratified_split(all, run.cfg.search.split, split_seed(run.cfg));
  const auto ranking = roc_feature_select(all, k, split.train);
  json out;
  out["training_rows"] = split.train.size();
  out["features"] = json::array();
  for (std::size_t r = 0; r < ranking.size(); ++r)
    out["features"].push_back({{"rank", r + 1},
                               {"name", ranking[r].name},
                               {"index", ranking[r].index},
                               {"auroc", ranking[r].auroc},
                               {"score", ranking[r].score}});
  write_text(run.file("features.json"), out.dump(2) + "\n");
  emit(out);
}

void cmd_grid(const Options& opt) {
  Run run = open_run(opt);
  const Prepared p = prepare(run.cfg);
  const TrainingData train = training_split(p);
  Experiment ex{run.cfg.model.spec(p.data.features()), knowledge_for(run.cfg, p), run.cfg.train_config()};

  json out;
  out["features"] = p.data.feature_names;
  LambdaWeights best;
  if (run.cfg.search.lambda) {
    best = *run.cfg.search.lambda;
    out["searched"] = false;
    log("single lambda " + lambda_text(best) + ", skipping the search");
  } else {
    const auto cells = run.cfg.search.cells();
    log("searching " + std::to_string(cells.size()) + " cells x " + std::to_string(run.cfg.search.bootstrap) +
        " bootstrap resamples on " + std::to_string(opt.jobs) + " jobs");
    const GridSearchResult r = grid_search(ex, cells, train, run.cfg.search.bootstrap, opt.jobs);
    std::ostringstream csv;
    csv << "lambda1,lambda2,lambda3,mean_auroc,se\n";
    out["cells"] = json::array();
    for (const auto& c : r.cells) {
      csv << num(c.lambda.fit) << ',' << num(c.lambda.complexity) << ',' << num(c.lambda.knowledge) << ','
          << num(c.mean_auroc) << ',' << num(c.standard_error) << '\n';
      out["cells"].push_back({{"lambda", lambda_json(c.lambda)},
                              {"mean_auroc", c.mean_auroc},
                              {"se", c.standard_error},
                              {"aurocs", c.aurocs}});
    }
    write_text(run.file("grid.csv"), csv.str());
    best = r.best_lambda();
    out["searched"] = true;
    out["bootstrap"] = run.cfg.search.bootstrap;
    log("best cell " + lambda_text(best) + " with mean AUROC " + num(r.cells[r.best].mean_auroc));
  }
  out["best"] = lambda_json(best);

  const Model tuned = fit_model(ex.spec, best, ex.knowledge, train, ex.train);
  save_model(tuned, run.file("model.json").string());
  const Model baseline = fit_model(ex.spec, run.cfg.search.baseline, ex.knowledge, train, ex.train);
  save_model(baseline, run.file("baseline_model.json").string());
  out["model"] = run.file("model.json").string();
  out["baseline_model"] = run.file("baseline_model.json").string();
  write_text(run.file("grid.json"), out.dump(2) + "\n");
  emit(out);
}

void cmd_test(const Options& opt) {
  Run run = open_run(opt);
  std::vector<std::pair<std::string, Model>> models;
  models.emplace_back("validated", load_model(model_path(run, opt.model, "model.json")));
  if (!opt.baseline.empty()) {
    models.emplace_back("baseline", load_model(opt.baseline));
  } else if (!opt.run_dir.empty() && fs::exists(run.file("baseline_model.json"))) {
    models.emplace_back("baseline", load_model(run.file("baseline_model.json").string()));
  } else {
    log("no baseline model, reporting the validated model only");
  }

  Dataset all = load_table(run.cfg.data.path, run.cfg.data.resolved_format(), run.cfg.data.label);
  const Split split = stratified_split(all, run.cfg.search.split, split_seed(run.cfg));
  const Dataset test = all.select_rows(split.test);

  std::vector<HoldoutRow> rows;
  for (const auto& [setting, model] : models) {
    HoldoutRow row;
    row.setting = setting;
    if (model.lambda) row.lambda = {(*model.lambda)[0], (*model.lambda)[1], (*model.lambda)[2]};
    row.arch = to_string(model.spec.arch);
    row.test_auroc = holdout_auroc(model, model_columns(model, test), test.labels);
    rows.push_back(row);
  }
  std::ostringstream csv;
  csv << "setting,lambda1,lambda2,lambda3,arch,test_auroc\n";
  json out;
  out["test_rows"] = split.test.size();
  out["rows"] = json::array();
  for (const auto& r : rows) {
    csv << r.setting << ',' << num(r.lambda.fit) << ',' << num(r.lambda.complexity) << ','
        << num(r.lambda.knowledge) << ',' << r.arch << ',' << num(r.test_auroc) << '\n';
    out["rows"].push_back(
        {{"setting", r.setting}, {"lambda", lambda_json(r.lambda)}, {"arch", r.arch}, {"test_auroc", r.test_auroc}});
  }
  write_text(run.file("test.csv"), csv.str());
  write_text(run.file("test.json"), out.dump(2) + "\n");
  emit(out);
}

void cmd_ale(const Options& opt) {
  if (opt.aware && opt.agnostic) throw UsageError("--aware and --agnostic are mutually exclusive");
  Run run = open_run(opt);
  const Model model = load_model(model_path(run, opt.model, "model.json"));
  Dataset all = load_table(run.cfg.data.path, run.cfg.data.resolved_format(), run.cfg.data.label);
  const Split split = stratified_split(all, run.cfg.search.split, split_seed(run.cfg));
  const Eigen::MatrixXd x = model.stats.impute(model_columns(model, all.select_rows(split.train)));

  std::vector<std::string> names = run.cfg.ale.features.empty() ? model.stats.names : run.cfg.ale.features;
  std::vector<NamedCurve> curves;
  auto curve = [&](std::size_t j) {
    auto build = [&](const auto& view) {
      return run.cfg.ale.aware ? ale_aware(view, x, j, run.cfg.ale.bins) : ale_agnostic(view, x, j, run.cfg.ale.bins);
    };
    return run.cfg.ale.on_logit ? build(LogitView{model}) : build(ProbabilityView{model});
  };
  for (const auto& name : names) {
    std::size_t j = model.stats.names.size();
    for (std::size_t i = 0; i < model.stats.names.size(); ++i)
      if (model.stats.names[i] == name) j = i;
    if (j == model.stats.names.size()) throw ConfigurationError("ale feature '" + name + "' is not a model input");
    ALECurve c = curve(j);
    if (c.merged_bins > 0) log(name + ": merged " + std::to_string(c.merged_bins) + " empty bins");
    curves.push_back({name, std::move(c)});
  }
  const std::string method = run.cfg.ale.aware ? "aware" : "agnostic";
  emit_ale_plot(curves, run.file("ale.svg").string(), run.file("ale.csv").string(),
                "Accumulated local effects (" + method + ")");
  json out;
  out["method"] = method;
  out["bins"] = run.cfg.ale.bins;
  out["scale"] = run.cfg.ale.on_logit ? "logit" : "probability";
  out["features"] = names;
  out["csv"] = run.file("ale.csv").string();
  out["svg"] = run.file("ale.svg").string();
  emit(out);
}

void cmd_explain(const Options& opt) {
  if (opt.method != "saliency" && opt.method != "ig") throw UsageError("--method must be saliency or ig");
  if (!opt.row) throw UsageError("--row is required");
  Run run = open_run(opt);
  const Model model = load_model(model_path(run, opt.model, "model.json"));
  Dataset all = load_table(run.cfg.data.path, run.cfg.data.resolved_format(), run.cfg.data.label);
  if (*opt.row >= all.rows())
    throw UsageError("row " + std::to_string(*opt.row) + " is out of range; the data has " +
                     std::to_string(all.rows()) + " rows");
  const Eigen::MatrixXd x = model.stats.impute(model_columns(model, all));
  const Eigen::RowVectorXd instance = x.row(static_cast<Eigen::Index>(*opt.row));

  json out;
  out["row"] = *opt.row;
  out["method"] = opt.method;
  out["output"] = opt.on_probability ? "probability" : "logit";
  Eigen::VectorXd attributions;
  auto run_method = [&](const auto& view) {
    Eigen::MatrixXd one = instance;
    out["score"] = view.predict(one)(0);
    if (opt.method == "saliency") {
      attributions = saliency(view, instance);
      return;
    }
    Eigen::RowVectorXd base = Eigen::RowVectorXd::Zero(instance.size());
    if (run.cfg.explain.baseline == BaselineKind::mean)
      for (Eigen::Index j = 0; j < base.size(); ++j) base(j) = model.stats.mean[static_cast<std::size_t>(j)];
    const IntegratedGradients ig = integrated_gradients(view, instance, base, run.cfg.explain.steps);
    attributions = ig.attributions;
    constexpr double kTolerance = 1e-3;
    out["baseline"] = run.cfg.explain.baseline == BaselineKind::mean ? "mean" : "zero";
    out["baseline_values"] = std::vector<double>(base.data(), base.data() + base.size());
    out["steps"] = ig.steps;
    out["completeness"] = {{"attribution_sum", ig.attributions.sum()},
                           {"score_difference", ig.score_difference},
                           {"error", ig.completeness_error},
                           {"tolerance", kTolerance},
                           {"within_tolerance", ig.completeness_error < kTolerance}};
    if (ig.completeness_error >= kTolerance)
      log("completeness error " + num(ig.completeness_error) + " exceeds " + num(kTolerance) +
          "; try more --steps");
  };
  if (opt.on_probability)
    run_method(ProbabilityView{model});
  else
    run_method(LogitView{model});

  out["features"] = json::array();
  for (std::size_t j = 0; j < model.stats.names.size(); ++j)
    out["features"].push_back({{"name", model.stats.names[j]},
                               {"value", instance(static_cast<Eigen::Index>(j))},
                               {"attribution", attributions(static_cast<Eigen::Index>(j))}});
  write_text(run.file("explain.json"), out.dump(2) + "\n");
  emit(out);
}

void cmd_scarcity(const Options& opt) {
  Run run = open_run(opt);
  const Prepared p = prepare(run.cfg);
  const Experiment ex{run.cfg.model.spec(p.data.features()), knowledge_for(run.cfg, p),
                      run.cfg.train_config()};
  std::optional<LambdaWeights> with = run.cfg.scarcity.with_knowledge;
  if (!with) with = run.cfg.search.lambda;
  if (!with) throw ConfigurationError("scarcity needs scarcity.with_knowledge or search.lambda");
  const LambdaWeights without = run.cfg.scarcity.without_knowledge.value_or(
      LambdaWeights{with->fit + with->knowledge, with->complexity, 0.0});
  log("scarcity sweep over " + std::to_string(run.cfg.scarcity.fractions.size()) + " fractions, " +
      lambda_text(*with) + " against " + lambda_text(without));
  const auto rows = scarcity_sweep(ex, run.cfg.scarcity.fractions, *with, without, p.data, opt.jobs);
  std::ostringstream csv;
  csv << "fraction,with_knowledge,without_knowledge\n";
  json out;
  out["with_knowledge"] = lambda_json(*with);
  out["without_knowledge"] = lambda_json(without);
  out["rows"] = json::array();
  for (const auto& r : rows) {
    csv << num(r.fraction) << ',' << num(r.with_knowledge) << ',' << num(r.without_knowledge) << '\n';
    out["rows"].push_back(
        {{"fraction", r.fraction}, {"with_knowledge", r.with_knowledge}, {"without_knowledge", r.without_knowledge}});
  }
  write_text(run.file("scarcity.csv"), csv.str());
  emit(out);
}

void cmd_predict(const Options& opt) {
  Run run = open_run(opt);
  const Model model = load_model(model_path(run, opt.model, "model.json"));
  Dataset all = load_table(run.cfg.data.path, run.cfg.data.resolved_format(), run.cfg.data.label);
  const Eigen::MatrixXd x = model_columns(model, all);
  const Eigen::VectorXd prob = model.probability(x);
  const Eigen::VectorXd logit = model.logit(x);
  std::ostringstream csv;
  csv << "row,label,logit,probability\n";
  for (Eigen::Index i = 0; i < prob.size(); ++i)
    csv << i << ',' << all.labels[static_cast<std::size_t>(i)] << ',' << num(logit(i)) << ',' << num(prob(i))
        << '\n';
  write_text(run.file("predictions.csv"), csv.str());
  json out;
  out["rows"] = prob.size();
  out["predictions"] = run.file("predictions.csv").string();
  emit(out);
}

void add_common(CLI::App* sub, Options& opt) {
  sub->add_option("-c,--config", opt.config, "Run configuration (TOML)")->required()->check(CLI::ExistingFile);
  sub->add_option("--run-dir", opt.run_dir, "Output directory (default: <output>/<timestamp>)");
  sub->add_option("--jobs", opt.jobs, "Worker threads for grid and bootstrap runs")->check(CLI::PositiveNumber);
  sub->add_option("--seed", opt.seed, "Master seed, overriding KINJECT_SEED and the config");
}

void add_model(CLI::App* sub, Options& opt) {
  sub->add_option("--model", opt.model, "Model file (default: <run-dir>/model.json)");
}

int run_main(int argc, char** argv) {
  CLI::App app{"Knowledge-regularized neural networks for tabular risk prediction"};
  app.require_subcommand(1);
  Options opt;

  auto* select = app.add_subcommand("select", "Rank features by single-feature AUROC");
  add_common(select, opt);
  select->add_option("-k,--top", opt.top_k, "Number of features to keep");

  auto* grid = app.add_subcommand("grid", "Bootstrap grid search over lambda, then train the best cell");
  add_common(grid, opt);

  auto* test = app.add_subcommand("test", "Hold-out AUROC of the validated and baseline models");
  add_common(test, opt);
  add_model(test, opt);
  test->add_option("--baseline", opt.baseline, "Baseline model file (default: <run-dir>/baseline_model.json)");

  auto* ale = app.add_subcommand("ale", "Accumulated local effects CSV and SVG");
  add_common(ale, opt);
  add_model(ale, opt);
  ale->add_flag("--aware", opt.aware, "Use the model gradient inside each bin");
  ale->add_flag("--agnostic", opt.agnostic, "Use prediction differences at bin edges");
  ale->add_option("--bins", opt.bins, "Number of quantile bins");
  ale->add_option("--scale", opt.scale, "probability or logit")->check(CLI::IsMember({"probability", "logit"}));

  auto* explain = app.add_subcommand("explain", "Per-feature attribution of one row");
  add_common(explain, opt);
  add_model(explain, opt);
  explain->add_option("--row", opt.row, "Zero-based row of the configured data")->required();
  explain->add_option("--method", opt.method, "saliency or ig")->check(CLI::IsMember({"saliency", "ig"}));
  explain->add_flag("--on-probability", opt.on_probability, "Attribute the probability instead of the logit");
  explain->add_option("--steps", opt.steps, "Integrated-gradients steps");

  auto* scarcity = app.add_subcommand("scarcity", "Test AUROC across training fractions");
  add_common(scarcity, opt);

  auto* predict = app.add_subcommand("predict", "Score every row of a dataset");
  add_common(predict, opt);
  add_model(predict, opt);
  predict->add_option("--data", opt.data, "Dataset to score (default: the configured data)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (select->parsed()) cmd_select(opt);
    if (grid->parsed()) cmd_grid(opt);
    if (test->parsed()) cmd_test(opt);
    if (ale->parsed()) cmd_ale(opt);
    if (explain->parsed()) cmd_explain(opt);
    if (scarcity->parsed()) cmd_scarcity(opt);
    if (predict->parsed()) cmd_predict(opt);
  } catch (const UsageError& e) {
    log(std::string("usage error: ") + e.what());
    return 2;
  } catch (const ConfigurationError& e) {
    log(std::string("configuration error: ") + e.what());
    return 2;
  } catch (const DivergenceError& e) {
    log(std::string("training failed: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace kinject::cli

int main(int argc, char** argv) { return kinject::cli::run_main(argc, argv); }

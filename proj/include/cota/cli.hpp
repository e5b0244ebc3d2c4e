#pragma once

// Config-driven command line: generate / train / evaluate / predict /
// hyperopt / serve. Every command writes versioned artifacts plus a
// manifest (config hash, seed, code version) under the output directory.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cota/config.hpp"
#include "cota/pipeline.hpp"
#include "cota/serve.hpp"
#include "cota/serve_http.hpp"
#include "cota/version.hpp"

namespace cota::cli {

using config::json;
using pipeline::Family;

struct Experiment {
  json raw;
  std::uint64_t seed = 0;
  std::string out_dir;
  corpus::Format format = corpus::Format::json_lines;
  int top_k = 3;
};

inline Experiment load_experiment(const std::string& config_path,
                                  const std::string& out_override,
                                  std::int64_t seed_override,
                                  const std::string& format_override,
                                  int top_k_override) {
  Experiment exp;
  exp.raw = config::load_json_file(config_path);
  exp.seed = config::get_or<std::uint64_t>(exp.raw, "seed", 0, "config");
  if (seed_override >= 0) exp.seed = std::uint64_t(seed_override);
  exp.out_dir = config::get_or<std::string>(exp.raw, "out", "runs/out", "config");
  if (!out_override.empty()) exp.out_dir = out_override;
  std::string format = config::get_or<std::string>(exp.raw, "format", "json-lines", "config");
  if (!format_override.empty()) format = format_override;
  exp.format = corpus::parse_format(format);
  exp.top_k = config::get_or(exp.raw, "top_k", 3, "config");
  if (top_k_override > 0) exp.top_k = top_k_override;
  return exp;
}

inline void write_manifest(const Experiment& exp, const std::string& command) {
  std::filesystem::create_directories(exp.out_dir);
  json manifest = {{"command", command},
                   {"code_version", kVersion},
                   {"seed", exp.seed},
                   {"config_hash", to_hex(config::config_hash(exp.raw))},
                   {"config", exp.raw}};
  write_file(exp.out_dir + "/manifest.json", manifest.dump(2));
}

// --- Dataset resolution -----------------------------------------------------

struct ResolvedData {
  corpus::ContactTypeTree tree;
  corpus::ReplyTemplateBank bank;
  std::vector<corpus::LabeledTicket> tickets;
};

inline ResolvedData resolve_dataset(const Experiment& exp,
                                    const std::string& save_corpus_dir = "") {
  const json& dataset = config::require(exp.raw, "dataset", "config");
  ResolvedData data;
  if (dataset.contains("generate")) {
    const auto spec = corpus::GeneratorSpec::from_json(dataset.at("generate"));
    corpus::Corpus generated = corpus::generate_corpus(spec, exp.seed);
    data.tree = std::move(generated.tree);
    data.bank = std::move(generated.bank);
    data.tickets = std::move(generated.tickets);
    if (!save_corpus_dir.empty()) {
      std::filesystem::create_directories(save_corpus_dir);
      const std::string extension =
          exp.format == corpus::Format::delimited ? "csv" : "jsonl";
      corpus::save_dataset(data.tickets, save_corpus_dir + "/tickets." + extension,
                           exp.format);
      write_file(save_corpus_dir + "/tree.json", corpus::tree_to_json(data.tree).dump(2));
      write_file(save_corpus_dir + "/templates.json",
                 corpus::bank_to_json(data.bank).dump(2));
    }
    return data;
  }
  if (!dataset.contains("load"))
    throw UsageError("config.dataset: expected 'generate' or 'load'");
  const json& load = dataset.at("load");
  const std::string context = "config.dataset.load";
  data.tree = corpus::tree_from_json(
      config::load_json_file(config::get_as<std::string>(load, "tree", context)));
  data.bank = corpus::bank_from_json(
      config::load_json_file(config::get_as<std::string>(load, "templates", context)));
  const std::string tickets_path = config::get_as<std::string>(load, "tickets", context);
  const auto result =
      corpus::load_dataset(tickets_path, exp.format, &data.tree, &data.bank);
  if (result.unknown_column_warnings > 0)
    std::cerr << "warning: " << result.unknown_column_warnings
              << " unknown column(s) ignored in " << tickets_path << "\n";
  data.tickets = result.records;
  return data;
}

inline corpus::DatasetSplit split_data(const Experiment& exp, const ResolvedData& data) {
  const json split = config::get_or(exp.raw, "split", json::object(), "config");
  const double train = config::get_or(split, "train", 0.8, "config.split");
  const double validation = config::get_or(split, "validation", 0.1, "config.split");
  const double test = config::get_or(split, "test", 0.1, "config.split");
  return corpus::split_dataset(data.tickets, train, validation, test, exp.seed);
}

// --- Option parsing helpers ----------------------------------------------------

inline pipeline::TextOptions text_options_from(const Experiment& exp) {
  pipeline::TextOptions options;
  const json text = config::get_or(exp.raw, "text", json::object(), "config");
  options.min_df = config::get_or(text, "min_df", 2, "config.text");
  options.max_vocab = config::get_or(text, "max_vocab", 50000, "config.text");
  const json lsa = config::get_or(text, "lsa", json::object(), "config.text");
  options.lsa.variance_threshold =
      config::get_or(lsa, "variance_threshold", 0.9, "config.text.lsa");
  options.lsa.max_k = config::get_or(lsa, "max_k", 200, "config.text.lsa");
  options.lsa.oversample = config::get_or(lsa, "oversample", 10, "config.text.lsa");
  options.lsa.power_iters = config::get_or(lsa, "power_iters", 4, "config.text.lsa");
  return options;
}

inline pipeline::V1Options v1_options_from(const Experiment& exp) {
  pipeline::V1Options options;
  const json v1 = config::get_or(exp.raw, "v1", json::object(), "config");
  options.negatives_per_positive =
      config::get_or(v1, "negatives_per_positive", 5, "config.v1");
  options.include_tfidf = config::get_or(v1, "include_tfidf", false, "config.v1");
  const json forest = config::get_or(v1, "forest", json::object(), "config.v1");
  options.forest.n_estimators = config::get_or(forest, "n_estimators", 100, "config.v1.forest");
  options.forest.max_depth = config::get_or(forest, "max_depth", 100, "config.v1.forest");
  options.forest.min_samples_leaf =
      config::get_or(forest, "min_samples_leaf", 50, "config.v1.forest");
  const std::string max_features =
      config::get_or<std::string>(forest, "max_features", "sqrt", "config.v1.forest");
  if (max_features == "sqrt") {
    options.forest.max_features = forest::MaxFeatures::sqrt_of_features;
  } else if (max_features == "all") {
    options.forest.max_features = forest::MaxFeatures::all;
  } else {
    options.forest.max_features = forest::MaxFeatures::fraction;
    options.forest.feature_fraction = std::stod(max_features);
  }
  return options;
}

inline ecd::ModelConfig model_config_from(const Experiment& exp) {
  ecd::ModelConfig model_config =
      exp.raw.contains("model") ? ecd::model_config_from_json(exp.raw.at("model"))
                                : ecd::default_model_config();
  model_config.trainer.seed = exp.seed;
  return model_config;
}

// --- Commands --------------------------------------------------------------------

inline int cmd_generate(const Experiment& exp) {
  resolve_dataset(exp, exp.out_dir + "/corpus");
  write_manifest(exp, "generate");
  std::cout << "corpus written to " << exp.out_dir << "/corpus\n";
  return 0;
}

inline pipeline::TrainedModel train_model(const Experiment& exp,
                                          const ResolvedData& data,
                                          const corpus::DatasetSplit& split,
                                          const std::string& model_dir,
                                          ecd::TrainResult* history_out = nullptr) {
  pipeline::TrainedModel trained;
  trained.family =
      pipeline::parse_family(config::get_as<std::string>(exp.raw, "family", "config"));
  if (trained.family == Family::v2_ecd) {
    ecd::ModelConfig model_config = model_config_from(exp);
    trained.v2 = pipeline::EcdFloatModel(model_config);
    trained.v2.attach_tree(data.tree);
    const auto result = ecd::train(trained.v2, split);
    if (history_out) *history_out = result;
    ecd::save_model(trained.v2, model_dir);
    json history = json::array();
    for (const auto& stats : result.history)
      history.push_back({{"train_loss", stats.train_loss},
                         {"val_accuracy", stats.val_accuracy},
                         {"mean_val_accuracy", stats.mean_val_accuracy}});
    json history_doc = {{"history", history},
                        {"best_epoch", result.best_epoch},
                        {"warnings", result.warnings}};
    write_file(model_dir + "/history.json", history_doc.dump(2));
  } else {
    trained.v1 = pipeline::train_v1(trained.family, split, data.bank,
                                    text_options_from(exp), v1_options_from(exp),
                                    exp.seed);
    pipeline::save_v1(trained.v1, model_dir);
  }
  return trained;
}

inline pipeline::TrainedModel load_model(const Experiment& exp,
                                         const std::string& model_dir) {
  pipeline::TrainedModel trained;
  trained.family =
      pipeline::parse_family(config::get_as<std::string>(exp.raw, "family", "config"));
  if (trained.family == Family::v2_ecd)
    trained.v2 = ecd::load_model<float>(model_dir);
  else
    trained.v1 = pipeline::load_v1(model_dir);
  return trained;
}

inline int cmd_train(const Experiment& exp) {
  const ResolvedData data = resolve_dataset(exp, exp.out_dir + "/corpus");
  const auto split = split_data(exp, data);
  train_model(exp, data, split, exp.out_dir + "/model");
  write_manifest(exp, "train");
  std::cout << "model written to " << exp.out_dir << "/model\n";
  return 0;
}

inline int cmd_evaluate(const Experiment& exp) {
  const ResolvedData data = resolve_dataset(exp);
  const auto split = split_data(exp, data);
  pipeline::TrainedModel model = load_model(exp, exp.out_dir + "/model");

  const auto by_task = model.predict(split.test, exp.top_k);
  const auto records = pipeline::to_prediction_records(by_task, split.test);
  std::filesystem::create_directories(exp.out_dir + "/predictions");
  write_file(exp.out_dir + "/predictions/test.jsonl", to_dump(records));

  const auto report =
      pipeline::evaluate_predictions(by_task, split.test, &data.tree, exp.top_k);
  std::filesystem::create_directories(exp.out_dir + "/reports");
  write_file(exp.out_dir + "/reports/report.json", eval::report_to_json(report).dump(2));
  write_file(exp.out_dir + "/reports/report.txt", eval::report_to_text(report));
  for (const auto& [task, table] : report.per_class)
    write_file(exp.out_dir + "/reports/f1_" + task + ".tsv",
               eval::class_table_to_text(table));
  write_manifest(exp, "evaluate");
  std::cout << eval::report_to_text(report);
  return 0;
}

inline int cmd_predict(const Experiment& exp, const std::string& input_path) {
  const ResolvedData data = resolve_dataset(exp);
  pipeline::TrainedModel model = load_model(exp, exp.out_dir + "/model");
  const auto loaded = corpus::load_dataset(input_path, exp.format, &data.tree, &data.bank);
  const auto by_task = model.predict(loaded.records, exp.top_k);
  const auto records = pipeline::to_prediction_records(by_task, loaded.records);
  std::filesystem::create_directories(exp.out_dir + "/predictions");
  const std::string out_path = exp.out_dir + "/predictions/predictions.jsonl";
  write_file(out_path, to_dump(records));
  write_manifest(exp, "predict");
  std::cout << "predictions written to " << out_path << "\n";
  return 0;
}

// Random search over declared value lists, ranked by validation accuracy,
// with per-configuration wall time.
inline int cmd_hyperopt(const Experiment& exp) {
  const json hyper = config::get_or(exp.raw, "hyperopt", json::object(), "config");
  const int budget = config::get_or(hyper, "budget", 10, "config.hyperopt");
  const int workers = std::max(1, config::get_or(hyper, "workers", 1, "config.hyperopt"));
  const json space = config::get_or(hyper, "space", json::object(), "config.hyperopt");
  if (budget < 1) throw UsageError("config.hyperopt.budget must be >= 1");

  struct Trial {
    int index = 0;
    json overrides;
    double val_metric = -1.0;
    double wall_seconds = 0.0;
    std::string error;
  };
  std::vector<Trial> trials;
  trials.resize(std::size_t(budget));
  Rng rng(exp.seed ^ 0x68797065726fULL);
  for (int t = 0; t < budget; ++t) {
    trials[std::size_t(t)].index = t;
    json overrides = json::object();
    for (const auto& [path, values] : space.items()) {
      if (!values.is_array() || values.empty())
        throw UsageError("config.hyperopt.space." + path + ": expected a non-empty array");
      overrides[path] = values[std::size_t(rng.uniform_int(0, std::int64_t(values.size()) - 1))];
    }
    trials[std::size_t(t)].overrides = overrides;
  }

  auto apply_override = [](json& target, const std::string& dotted, const json& value) {
    json* cursor = &target;
    const auto parts = split_string(dotted, '.');
    for (std::size_t i = 0; i + 1 < parts.size(); ++i)
      cursor = &((*cursor)[parts[i]]);
    (*cursor)[parts.back()] = value;
  };

  std::mutex io_mutex;
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int t = next.fetch_add(1);
      if (t >= budget) return;
      Trial& trial = trials[std::size_t(t)];
      Experiment trial_exp = exp;
      for (const auto& [path, value] : trial.overrides.items())
        apply_override(trial_exp.raw, path, value);
      trial_exp.out_dir = exp.out_dir + "/trial" + std::to_string(t);
      const auto start = std::chrono::steady_clock::now();
      try {
        const ResolvedData data = resolve_dataset(trial_exp);
        const auto split = split_data(trial_exp, data);
        ecd::TrainResult history;
        pipeline::TrainedModel model = train_model(trial_exp, data, split,
                                                   trial_exp.out_dir + "/model", &history);
        const auto by_task = model.predict(split.validation, trial_exp.top_k);
        const auto report = pipeline::evaluate_predictions(by_task, split.validation,
                                                           &data.tree, trial_exp.top_k);
        double mean = 0;
        for (const auto& [_, acc] : report.accuracy) mean += acc;
        trial.val_metric = report.accuracy.empty() ? 0 : mean / double(report.accuracy.size());
        write_manifest(trial_exp, "hyperopt-trial");
      } catch (const std::exception& e) {
        std::lock_guard lock(io_mutex);
        trial.error = e.what();
      }
      trial.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& thread : pool) thread.join();

  std::sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    if (a.val_metric != b.val_metric) return a.val_metric > b.val_metric;
    return a.index < b.index;
  });
  json ranking = json::array();
  std::string table = "rank\ttrial\tval_accuracy\tminutes\toverrides\n";
  for (std::size_t r = 0; r < trials.size(); ++r) {
    const Trial& trial = trials[r];
    ranking.push_back({{"trial", trial.index},
                       {"overrides", trial.overrides},
                       {"val_accuracy", trial.val_metric},
                       {"wall_seconds", trial.wall_seconds},
                       {"error", trial.error}});
    table += std::to_string(r + 1) + "\t" + std::to_string(trial.index) + "\t" +
             format_double(trial.val_metric) + "\t" +
             format_double(trial.wall_seconds / 60.0) + "\t" + trial.overrides.dump() +
             "\n";
  }
  std::filesystem::create_directories(exp.out_dir);
  write_file(exp.out_dir + "/hyperopt.json", json{{"ranking", ranking}}.dump(2));
  write_file(exp.out_dir + "/hyperopt.txt", table);
  write_manifest(exp, "hyperopt");
  std::cout << table;
  return 0;
}

// --- Serving ---------------------------------------------------------------------

class TrainedSuggestionModel : public serve::SuggestionModel {
 public:
  TrainedSuggestionModel(pipeline::TrainedModel model, int top_k, std::string version)
      : model_(std::move(model)), top_k_(top_k), version_(std::move(version)) {}

  std::map<std::string, RankedSuggestions> suggest(const corpus::Ticket& ticket) override {
    std::lock_guard lock(mutex_);
    corpus::LabeledTicket record;
    record.ticket = ticket;
    record.contact_type = "";
    record.reply_template = "";
    const auto by_task = model_.predict({record}, top_k_);
    std::map<std::string, RankedSuggestions> out;
    for (const auto& [task, per_record] : by_task) out[task] = per_record.at(0);
    return out;
  }
  std::string version() const override { return version_; }

 private:
  std::mutex mutex_;
  pipeline::TrainedModel model_;
  int top_k_;
  std::string version_;
};

inline int cmd_serve(const Experiment& exp, int port) {
  pipeline::TrainedModel model = load_model(exp, exp.out_dir + "/model");
  auto suggester = std::make_shared<TrainedSuggestionModel>(
      std::move(model), exp.top_k, to_hex(config::config_hash(exp.raw)));
  std::filesystem::create_directories(exp.out_dir);
  serve::TicketStore store(suggester, exp.top_k, exp.out_dir + "/events.jsonl");
  serve::HttpService service(store);
  write_manifest(exp, "serve");
  std::cout << "serving on port " << port << "\n";
  if (!service.listen("0.0.0.0", port)) throw Error("failed to bind port");
  return 0;
}

// --- Entry point -------------------------------------------------------------------

inline int run(int argc, char** argv) {
  CLI::App app{"ticket triage: synthetic corpora, v1/v2 models, evaluation, serving"};
  app.require_subcommand(1);

  std::string config_path, out_override, format_override, input_path;
  std::int64_t seed_override = -1;
  int top_k_override = -1;
  int port = 8080;

  auto add_common = [&](CLI::App* cmd, bool config_required = true) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config file (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", seed_override, "seed override");
    cmd->add_option("--out", out_override, "output directory override");
    cmd->add_option("--format", format_override, "dataset format: delimited | json-lines");
    cmd->add_option("--top-k", top_k_override, "suggestions per task (default 3)");
  };

  auto* generate = app.add_subcommand("generate", "generate a synthetic corpus");
  add_common(generate);
  auto* train = app.add_subcommand("train", "train the configured model family");
  add_common(train);
  auto* evaluate = app.add_subcommand("evaluate", "evaluate the trained model on the test split");
  add_common(evaluate);
  auto* predict = app.add_subcommand("predict", "write prediction dumps for a dataset file");
  add_common(predict);
  predict->add_option("--input", input_path, "dataset file to predict")->required();
  auto* hyperopt = app.add_subcommand("hyperopt", "random search over declared ranges");
  add_common(hyperopt);
  auto* serve_cmd = app.add_subcommand("serve", "serve suggestions over HTTP");
  add_common(serve_cmd);
  serve_cmd->add_option("--port", port, "listen port (default 8080)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    const Experiment exp = load_experiment(config_path, out_override, seed_override,
                                           format_override, top_k_override);
    if (generate->parsed()) return cmd_generate(exp);
    if (train->parsed()) return cmd_train(exp);
    if (evaluate->parsed()) return cmd_evaluate(exp);
    if (predict->parsed()) return cmd_predict(exp, input_path);
    if (hyperopt->parsed()) return cmd_hyperopt(exp);
    if (serve_cmd->parsed()) return cmd_serve(exp, port);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int run(const std::vector<std::string>& args) {
  std::vector<std::string> owned = args;
  owned.insert(owned.begin(), "cota");
  std::vector<char*> argv;
  for (auto& arg : owned) argv.push_back(arg.data());
  return run(int(argv.size()), argv.data());
}

}  // namespace cota::cli

#pragma once

// Experiment pipelines shared by the CLI and the acceptance suite: the v1
// text pipeline (dictionary, TF-IDF, LSA, prototypes, forests) and the v2
// ECD pipeline, with artifact persistence for both.

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cota/corpus.hpp"
#include "cota/ecd.hpp"
#include "cota/ecd_train.hpp"
#include "cota/eval.hpp"
#include "cota/rank.hpp"
#include "cota/suggestions.hpp"

namespace cota::pipeline {

using corpus::Corpus;
using corpus::DatasetSplit;
using corpus::LabeledTicket;

enum class Family { v1_classification, v1_ranking, v2_ecd };

inline Family parse_family(const std::string& name) {
  if (name == "v1-classification") return Family::v1_classification;
  if (name == "v1-ranking") return Family::v1_ranking;
  if (name == "v2-ecd") return Family::v2_ecd;
  throw UsageError("unknown model family: " + name);
}

inline const char* family_name(Family family) {
  switch (family) {
    case Family::v1_classification: return "v1-classification";
    case Family::v1_ranking: return "v1-ranking";
    default: return "v2-ecd";
  }
}

struct TextOptions {
  int min_df = 2;
  int max_vocab = 50000;
  vectorize::LsaOptions lsa;
};

struct V1Options {
  int negatives_per_positive = 5;
  bool include_tfidf = false;
  forest::ForestConfig forest;
};

// --- V1 (both formulations) ---------------------------------------------------

struct V1TaskModel {
  rank::Task task = rank::Task::contact_type;
  rank::PrototypeSet prototypes;
  std::vector<std::string> classes;
  forest::ForestModel forest;   // ranker or multiclass forest
  bool is_ranking = false;
};

struct V1Model {
  Family family = Family::v1_ranking;
  vectorize::TfIdfModel tfidf;
  vectorize::LsaModel lsa;
  rank::TicketEncoder encoder;
  V1Options options;
  V1TaskModel contact_type;
  V1TaskModel reply_template;

  rank::V1Context context_for(const V1TaskModel& task_model) const {
    rank::V1Context context;
    context.tfidf = tfidf;
    context.lsa = lsa;
    context.encoder = encoder;
    context.prototypes = task_model.prototypes;
    context.task = task_model.task;
    return context;
  }
};

inline std::vector<std::string> labels_in(const std::vector<LabeledTicket>& records,
                                          rank::Task task) {
  std::set<std::string> labels;
  for (const auto& record : records) labels.insert(rank::label_of(record, task));
  return {labels.begin(), labels.end()};
}

inline V1Model train_v1(Family family, const DatasetSplit& split,
                        const corpus::ReplyTemplateBank& bank,
                        const TextOptions& text_options, const V1Options& v1_options,
                        std::uint64_t seed) {
  if (family == Family::v2_ecd) throw UsageError("train_v1 called with v2 family");
  if (split.train.empty()) throw TrainError("v1: empty training split");

  V1Model model;
  model.family = family;
  model.options = v1_options;

  std::vector<textprep::BagOfWords> bags;
  bags.reserve(split.train.size());
  for (const auto& record : split.train)
    bags.push_back(textprep::bag_of_words(record.ticket.message));
  const auto dictionary =
      textprep::build_dictionary(bags, text_options.min_df, text_options.max_vocab);
  model.tfidf = vectorize::fit_tfidf(bags, dictionary);
  std::vector<vectorize::SparseVector> vectors;
  vectors.reserve(bags.size());
  for (const auto& bag : bags)
    vectors.push_back(vectorize::transform_tfidf(model.tfidf, bag));
  vectorize::LsaOptions lsa_options = text_options.lsa;
  lsa_options.seed = seed;
  model.lsa = vectorize::fit_lsa(vectors, dictionary.size(), lsa_options);
  model.encoder = rank::TicketEncoder::fit(split.train);

  auto train_task = [&](rank::Task task) {
    V1TaskModel task_model;
    task_model.task = task;
    task_model.is_ranking = family == Family::v1_ranking;
    task_model.classes = labels_in(split.train, task);
    task_model.prototypes = rank::build_prototypes(
        split.train, task, model.tfidf, model.lsa, task_model.classes,
        task == rank::Task::reply_template ? &bank : nullptr);
    const rank::V1Context context = model.context_for(task_model);
    forest::ForestConfig config = v1_options.forest;
    config.seed = splitmix64(seed) ^ (task == rank::Task::contact_type ? 0x11 : 0x22);
    if (family == Family::v1_ranking) {
      const auto pairs = rank::make_pairs(context, split.train,
                                          v1_options.negatives_per_positive,
                                          splitmix64(seed) ^ 0x33);
      task_model.forest = rank::train_ranker(pairs, config);
    } else {
      task_model.forest =
          rank::train_multiclass_baseline(context, split.train, config,
                                          v1_options.include_tfidf)
              .forest;
    }
    return task_model;
  };
  model.contact_type = train_task(rank::Task::contact_type);
  model.reply_template = train_task(rank::Task::reply_template);
  return model;
}

inline std::map<std::string, std::vector<RankedSuggestions>> predict_v1(
    const V1Model& model, const std::vector<LabeledTicket>& records, int top_k) {
  std::map<std::string, std::vector<RankedSuggestions>> out;
  for (const V1TaskModel* task_model : {&model.contact_type, &model.reply_template}) {
    const rank::V1Context context = model.context_for(*task_model);
    auto& results = out[rank::task_name(task_model->task)];
    results.reserve(records.size());
    for (const auto& record : records) {
      if (task_model->is_ranking) {
        results.push_back(rank::rank_classes(task_model->forest, context, record.ticket,
                                             task_model->classes, top_k));
      } else {
        rank::MulticlassModel multiclass{task_model->forest, task_model->classes};
        results.push_back(rank::predict_multiclass(multiclass, context, record.ticket,
                                                   top_k, model.options.include_tfidf));
      }
    }
  }
  return out;
}

// --- V1 persistence -------------------------------------------------------------

namespace detail {

inline config::json sparse_to_json(const vectorize::SparseVector& v) {
  config::json entries = config::json::array();
  for (const auto& [index, weight] : v.entries)
    entries.push_back(config::json::array({index, weight}));
  return entries;
}

inline vectorize::SparseVector sparse_from_json(const config::json& j) {
  vectorize::SparseVector v;
  for (const auto& pair : j)
    v.entries.emplace_back(pair[0].get<int>(), pair[1].get<double>());
  return v;
}

inline config::json prototype_to_json(const rank::ClassPrototype& p) {
  return {{"tfidf", sparse_to_json(p.tfidf)}, {"lsa", p.lsa}};
}

inline rank::ClassPrototype prototype_from_json(const config::json& j) {
  rank::ClassPrototype p;
  p.tfidf = sparse_from_json(j.at("tfidf"));
  p.lsa = j.at("lsa").get<std::vector<double>>();
  return p;
}

inline config::json prototypes_to_json(const rank::PrototypeSet& set) {
  config::json history = config::json::object();
  for (const auto& [cls, proto] : set.history) history[cls] = prototype_to_json(proto);
  config::json content = config::json::object();
  for (const auto& [cls, proto] : set.content) content[cls] = prototype_to_json(proto);
  return {{"classes", set.classes},
          {"history", history},
          {"content", content},
          {"empty_history_classes", set.empty_history_classes}};
}

inline rank::PrototypeSet prototypes_from_json(const config::json& j) {
  rank::PrototypeSet set;
  set.classes = j.at("classes").get<std::vector<std::string>>();
  for (const auto& [cls, proto] : j.at("history").items())
    set.history[cls] = prototype_from_json(proto);
  for (const auto& [cls, proto] : j.at("content").items())
    set.content[cls] = prototype_from_json(proto);
  set.empty_history_classes =
      j.at("empty_history_classes").get<std::vector<std::string>>();
  return set;
}

}  // namespace detail

inline void save_v1(const V1Model& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/dictionary.tsv",
             textprep::serialize_dictionary(model.tfidf.dictionary));
  config::json tfidf = {{"idf", model.tfidf.idf},
                        {"document_count", model.tfidf.document_count}};
  write_file(dir + "/tfidf.json", tfidf.dump(2));
  vectorize::save_lsa(model.lsa, dir + "/lsa.bin");
  write_file(dir + "/encoder.json", model.encoder.to_json().dump(2));
  config::json meta = {{"family", family_name(model.family)},
                       {"negatives_per_positive", model.options.negatives_per_positive},
                       {"include_tfidf", model.options.include_tfidf}};
  write_file(dir + "/v1.json", meta.dump(2));
  for (const V1TaskModel* task : {&model.contact_type, &model.reply_template}) {
    const std::string name = rank::task_name(task->task);
    write_file(dir + "/prototypes_" + name + ".json",
               detail::prototypes_to_json(task->prototypes).dump());
    config::json task_meta = {{"classes", task->classes},
                              {"is_ranking", task->is_ranking}};
    write_file(dir + "/task_" + name + ".json", task_meta.dump(2));
    forest::save_forest(task->forest, dir + "/forest_" + name + ".bin");
  }
}

inline V1Model load_v1(const std::string& dir) {
  V1Model model;
  const config::json meta = config::load_json_file(dir + "/v1.json");
  model.family = parse_family(config::get_as<std::string>(meta, "family", "v1.json"));
  model.options.negatives_per_positive =
      config::get_or(meta, "negatives_per_positive", 5, "v1.json");
  model.options.include_tfidf = config::get_or(meta, "include_tfidf", false, "v1.json");
  model.tfidf.dictionary = textprep::parse_dictionary(read_file(dir + "/dictionary.tsv"));
  const config::json tfidf = config::load_json_file(dir + "/tfidf.json");
  model.tfidf.idf = config::get_as<std::vector<double>>(tfidf, "idf", "tfidf.json");
  model.tfidf.document_count =
      config::get_as<int>(tfidf, "document_count", "tfidf.json");
  model.lsa = vectorize::load_lsa(dir + "/lsa.bin");
  model.encoder = rank::TicketEncoder::from_json(config::load_json_file(dir + "/encoder.json"));
  auto load_task = [&](rank::Task task) {
    V1TaskModel task_model;
    task_model.task = task;
    const std::string name = rank::task_name(task);
    task_model.prototypes =
        detail::prototypes_from_json(config::load_json_file(dir + "/prototypes_" + name + ".json"));
    const config::json task_meta = config::load_json_file(dir + "/task_" + name + ".json");
    task_model.classes =
        config::get_as<std::vector<std::string>>(task_meta, "classes", "task meta");
    task_model.is_ranking = config::get_as<bool>(task_meta, "is_ranking", "task meta");
    task_model.forest = forest::load_forest(dir + "/forest_" + name + ".bin");
    return task_model;
  };
  model.contact_type = load_task(rank::Task::contact_type);
  model.reply_template = load_task(rank::Task::reply_template);
  return model;
}

// --- Unified prediction + evaluation --------------------------------------------

using EcdFloatModel = ecd::EcdModel<float>;

struct TrainedModel {
  Family family = Family::v2_ecd;
  V1Model v1;        // when family is v1-*
  EcdFloatModel v2;  // when family is v2-ecd

  std::map<std::string, std::vector<RankedSuggestions>> predict(
      const std::vector<LabeledTicket>& records, int top_k) {
    if (family == Family::v2_ecd) {
      auto predictions = ecd::predict_topk(v2, records, top_k);
      return predictions.suggestions;
    }
    return predict_v1(v1, records, top_k);
  }
};

inline std::vector<PredictionRecord> to_prediction_records(
    const std::map<std::string, std::vector<RankedSuggestions>>& by_task,
    const std::vector<LabeledTicket>& records) {
  std::vector<PredictionRecord> out;
  for (const auto& [task, per_record] : by_task) {
    if (per_record.size() != records.size())
      throw Error("prediction count mismatch for task " + task);
    for (std::size_t i = 0; i < records.size(); ++i)
      out.push_back({records[i].ticket.id, task, per_record[i]});
  }
  return out;
}

inline eval::EvalReport evaluate_predictions(
    const std::map<std::string, std::vector<RankedSuggestions>>& by_task,
    const std::vector<LabeledTicket>& records, const corpus::ContactTypeTree* tree,
    int k) {
  std::map<std::string, eval::TaskPredictions> tasks;
  for (const auto& [task, per_record] : by_task) {
    eval::TaskPredictions data;
    data.predictions = per_record;
    for (const auto& record : records)
      data.truths.push_back(task == "contact_type" ? record.contact_type
                                                   : record.reply_template);
    tasks[task] = std::move(data);
  }
  return eval::build_report(tasks, tree, k);
}

}  // namespace cota::pipeline

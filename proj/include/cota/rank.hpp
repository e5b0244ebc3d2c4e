#pragma once

// The v1 model family over LSA/TF-IDF features: (A) direct multi-class
// classification with a Random Forest, and (B) the multi-class to
// pointwise-ranking conversion over engineered cosine-similarity features.
// Pair features are assembled by one code path for training and inference,
// so there is no train/serve skew by construction.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cota/common.hpp"
#include "cota/corpus.hpp"
#include "cota/forest.hpp"
#include "cota/suggestions.hpp"
#include "cota/vectorize.hpp"

namespace cota::rank {

using corpus::LabeledTicket;
using corpus::ReplyTemplateBank;
using corpus::Ticket;
using vectorize::LsaModel;
using vectorize::LsaVector;
using vectorize::SparseVector;
using vectorize::TfIdfModel;

enum class Task { contact_type, reply_template };

inline const char* task_name(Task task) {
  return task == Task::contact_type ? "contact_type" : "reply_template";
}

inline const std::string& label_of(const LabeledTicket& record, Task task) {
  return task == Task::contact_type ? record.contact_type : record.reply_template;
}

// --- Ticket metadata features ---------------------------------------------
// Categorical fields are integer-encoded (code 0 is the dedicated
// missing/unknown bucket) and treated as ordered for threshold splits; a
// one-hot expansion is available behind a flag. Numeric eta is imputed with
// the training median.

struct TicketEncoder {
  static constexpr const char* kFields[5] = {"product_type", "user_type", "country",
                                             "city", "trip_status"};
  std::map<std::string, std::map<std::string, int>> vocab;  // field -> value -> code
  double eta_median = 0.0;
  bool one_hot = false;

  static const std::string& field_value(const Ticket& t, const std::string& field) {
    if (field == "product_type") return t.product_type;
    if (field == "user_type") return t.user_type;
    if (field == "country") return t.country;
    if (field == "city") return t.city;
    return t.trip_status;
  }

  static TicketEncoder fit(std::span<const LabeledTicket> data, bool one_hot = false) {
    TicketEncoder encoder;
    encoder.one_hot = one_hot;
    for (const char* field : kFields) {
      std::set<std::string> values;
      for (const auto& record : data) {
        const std::string& value = field_value(record.ticket, field);
        if (!value.empty()) values.insert(value);
      }
      auto& table = encoder.vocab[field];
      int code = 1;  // 0 is reserved for missing/unknown
      for (const auto& value : values) table[value] = code++;
    }
    std::vector<double> etas;
    for (const auto& record : data)
      if (record.ticket.eta_minutes) etas.push_back(*record.ticket.eta_minutes);
    if (!etas.empty()) {
      std::sort(etas.begin(), etas.end());
      const std::size_t mid = etas.size() / 2;
      encoder.eta_median = etas.size() % 2 == 1
                               ? etas[mid]
                               : (etas[mid - 1] + etas[mid]) / 2.0;
    }
    return encoder;
  }

  int code_of(const std::string& field, const std::string& value) const {
    if (value.empty()) return 0;
    const auto& table = vocab.at(field);
    auto it = table.find(value);
    return it == table.end() ? 0 : it->second;
  }

  std::vector<double> encode(const Ticket& ticket) const {
    std::vector<double> features;
    for (const char* field : kFields) {
      const int code = code_of(field, field_value(ticket, field));
      if (one_hot) {
        const int cardinality = int(vocab.at(field).size()) + 1;
        for (int c = 0; c < cardinality; ++c)
          features.push_back(c == code ? 1.0 : 0.0);
      } else {
        features.push_back(double(code));
      }
    }
    features.push_back(ticket.has_trip ? 1.0 : 0.0);
    features.push_back(ticket.eta_minutes ? *ticket.eta_minutes : eta_median);
    return features;
  }

  int width() const {
    int w = 2;  // has_trip + eta
    for (const char* field : kFields)
      w += one_hot ? int(vocab.at(field).size()) + 1 : 1;
    return w;
  }

  config::json to_json() const {
    return {{"vocab", vocab}, {"eta_median", eta_median}, {"one_hot", one_hot}};
  }
  static TicketEncoder from_json(const config::json& j) {
    TicketEncoder encoder;
    encoder.vocab =
        config::get_as<std::map<std::string, std::map<std::string, int>>>(j, "vocab",
                                                                          "encoder");
    encoder.eta_median = config::get_as<double>(j, "eta_median", "encoder");
    encoder.one_hot = config::get_or(j, "one_hot", false, "encoder");
    return encoder;
  }
};

// --- Prototypes ------------------------------------------------------------

struct ClassPrototype {
  SparseVector tfidf;  // L2-normalized; empty when the class has no history
  LsaVector lsa;       // L2-normalized; zeros when the class has no history

  bool is_zero() const { return tfidf.empty(); }
};

struct PrototypeSet {
  std::vector<std::string> classes;  // sorted lexicographically
  std::map<std::string, ClassPrototype> history;
  std::map<std::string, ClassPrototype> content;  // template text; reply task only
  std::vector<std::string> empty_history_classes;

  bool has_content() const { return !content.empty(); }
};

namespace detail {

inline LsaVector normalized(LsaVector v) {
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0)
    for (double& x : v) x /= norm;
  return v;
}

inline ClassPrototype prototype_from_bag(const textprep::BagOfWords& bag,
                                         const TfIdfModel& tfidf, const LsaModel& lsa) {
  ClassPrototype proto;
  proto.tfidf = vectorize::transform_tfidf(tfidf, bag);
  proto.lsa = normalized(vectorize::project_lsa(lsa, proto.tfidf));
  return proto;
}

}  // namespace detail

// Per class, the bag-of-words union of its historical tickets, TF-IDF
// transformed and LSA projected, both L2-normalized. `class_universe` lists
// every class that must have a prototype (classes without history get zero
// prototypes and are reported). For the reply-template task, passing the
// bank adds template-content prototypes.
inline PrototypeSet build_prototypes(const std::vector<LabeledTicket>& history,
                                     Task task, const TfIdfModel& tfidf,
                                     const LsaModel& lsa,
                                     const std::vector<std::string>& class_universe,
                                     const ReplyTemplateBank* bank = nullptr) {
  PrototypeSet set;
  std::set<std::string> classes(class_universe.begin(), class_universe.end());
  for (const auto& record : history) classes.insert(label_of(record, task));
  set.classes.assign(classes.begin(), classes.end());

  std::map<std::string, textprep::BagOfWords> bags;
  for (const auto& record : history) {
    auto& bag = bags[label_of(record, task)];
    for (const auto& [term, count] : textprep::bag_of_words(record.ticket.message))
      bag[term] += count;
  }
  for (const auto& cls : set.classes) {
    auto it = bags.find(cls);
    if (it == bags.end()) {
      set.history[cls] = ClassPrototype{};
      set.history[cls].lsa.assign(std::size_t(lsa.k), 0.0);
      set.empty_history_classes.push_back(cls);
    } else {
      set.history[cls] = detail::prototype_from_bag(it->second, tfidf, lsa);
    }
  }
  if (task == Task::reply_template && bank) {
    for (const auto& cls : set.classes) {
      auto it = bank->templates.find(cls);
      if (it == bank->templates.end()) {
        set.content[cls] = ClassPrototype{};
        set.content[cls].lsa.assign(std::size_t(lsa.k), 0.0);
      } else {
        set.content[cls] =
            detail::prototype_from_bag(textprep::bag_of_words(it->second), tfidf, lsa);
      }
    }
  }
  return set;
}

// --- Cosine similarity features --------------------------------------------

struct SimilarityFeatures {
  double cos_tfidf = 0.0;
  double cos_lsa = 0.0;
  std::optional<double> cos_tfidf_template;
  std::optional<double> cos_lsa_template;
};

namespace detail {

inline double cosine_sparse(const SparseVector& a, const SparseVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return vectorize::dot(a, b) / (na * nb);
}

inline double cosine_dense(const LsaVector& a, const LsaVector& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

// Zero-norm operands yield exactly 0 by convention.
inline SimilarityFeatures similarity_features(const SparseVector& ticket_tfidf,
                                              const LsaVector& ticket_lsa,
                                              const std::string& class_id,
                                              const PrototypeSet& prototypes) {
  SimilarityFeatures features;
  const ClassPrototype& history = prototypes.history.at(class_id);
  features.cos_tfidf = detail::cosine_sparse(ticket_tfidf, history.tfidf);
  features.cos_lsa = detail::cosine_dense(ticket_lsa, history.lsa);
  if (prototypes.has_content()) {
    const ClassPrototype& content = prototypes.content.at(class_id);
    features.cos_tfidf_template = detail::cosine_sparse(ticket_tfidf, content.tfidf);
    features.cos_lsa_template = detail::cosine_dense(ticket_lsa, content.lsa);
  }
  return features;
}

// --- Pairwise conversion ----------------------------------------------------

struct V1Context {
  TfIdfModel tfidf;
  LsaModel lsa;
  TicketEncoder encoder;
  PrototypeSet prototypes;
  Task task = Task::contact_type;
};

struct TicketVectors {
  SparseVector tfidf;
  LsaVector lsa;
};

inline TicketVectors vectorize_ticket(const V1Context& context, const Ticket& ticket) {
  TicketVectors v;
  v.tfidf = vectorize::transform_tfidf(context.tfidf,
                                       textprep::bag_of_words(ticket.message));
  v.lsa = vectorize::project_lsa(context.lsa, v.tfidf);
  return v;
}

// One code path for pair features, shared by training and inference.
inline std::vector<double> pair_features(const V1Context& context,
                                         const TicketVectors& vectors,
                                         const Ticket& ticket,
                                         const std::string& class_id) {
  const SimilarityFeatures sim =
      similarity_features(vectors.tfidf, vectors.lsa, class_id, context.prototypes);
  std::vector<double> features = {sim.cos_tfidf, sim.cos_lsa};
  if (sim.cos_tfidf_template) features.push_back(*sim.cos_tfidf_template);
  if (sim.cos_lsa_template) features.push_back(*sim.cos_lsa_template);
  const std::vector<double> meta = context.encoder.encode(ticket);
  features.insert(features.end(), meta.begin(), meta.end());
  return features;
}

struct PairExample {
  std::string ticket_id;
  std::string class_id;
  std::vector<double> features;
  int label = 0;  // 1 = matching pair
};

// Per ticket: one positive pair plus `negatives_per_positive` negatives
// sampled uniformly without replacement from the non-matching classes
// (fewer when the class count is small).
inline std::vector<PairExample> make_pairs(const V1Context& context,
                                           const std::vector<LabeledTicket>& data,
                                           int negatives_per_positive,
                                           std::uint64_t seed) {
  if (negatives_per_positive < 1)
    throw UsageError("make_pairs: negatives_per_positive must be >= 1");
  const auto& classes = context.prototypes.classes;
  if (classes.size() < 2) throw TrainError("make_pairs: single-class label space");

  std::map<std::string, int> class_index;
  for (int i = 0; i < int(classes.size()); ++i) class_index[classes[std::size_t(i)]] = i;

  Rng rng(seed);
  std::vector<PairExample> pairs;
  std::vector<int> others(classes.size() - 1);
  for (const auto& record : data) {
    const TicketVectors vectors = vectorize_ticket(context, record.ticket);
    const std::string& truth = label_of(record, context.task);
    const auto truth_it = class_index.find(truth);
    if (truth_it == class_index.end())
      throw DataError("make_pairs: label not in class universe: " + truth);

    PairExample positive;
    positive.ticket_id = record.ticket.id;
    positive.class_id = truth;
    positive.features = pair_features(context, vectors, record.ticket, truth);
    positive.label = 1;
    pairs.push_back(std::move(positive));

    int fill = 0;
    for (int c = 0; c < int(classes.size()); ++c)
      if (c != truth_it->second) others[std::size_t(fill++)] = c;
    const int n_negatives = std::min(negatives_per_positive, int(classes.size()) - 1);
    for (int k = 0; k < n_negatives; ++k) {
      const int swap_with = int(rng.uniform_int(k, int(others.size()) - 1));
      std::swap(others[std::size_t(k)], others[std::size_t(swap_with)]);
      const std::string& negative_class = classes[std::size_t(others[std::size_t(k)])];
      PairExample negative;
      negative.ticket_id = record.ticket.id;
      negative.class_id = negative_class;
      negative.features = pair_features(context, vectors, record.ticket, negative_class);
      negative.label = 0;
      pairs.push_back(std::move(negative));
    }
  }
  return pairs;
}

inline forest::ForestModel train_ranker(const std::vector<PairExample>& pairs,
                                        const forest::ForestConfig& config) {
  if (pairs.empty()) throw TrainError("train_ranker: no pairs");
  bool seen[2] = {false, false};
  for (const auto& pair : pairs) seen[pair.label] = true;
  if (!seen[0] || !seen[1])
    throw TrainError("train_ranker: pairs contain a single label value");
  linalg::Matrix<double> x(int(pairs.size()), int(pairs[0].features.size()));
  std::vector<int> y;
  y.reserve(pairs.size());
  for (int i = 0; i < int(pairs.size()); ++i) {
    const auto& pair = pairs[std::size_t(i)];
    if (int(pair.features.size()) != x.cols)
      throw TrainError("train_ranker: inconsistent feature widths");
    for (int f = 0; f < x.cols; ++f) x.at(i, f) = pair.features[std::size_t(f)];
    y.push_back(pair.label);
  }
  return forest::fit_forest(x, y, config);
}

// Scores every candidate pair with the positive-class probability and sorts
// descending (ties by class id ascending).
inline RankedSuggestions rank_classes(const forest::ForestModel& model,
                                      const V1Context& context, const Ticket& ticket,
                                      const std::vector<std::string>& candidates,
                                      int top_k) {
  if (candidates.empty()) throw UsageError("rank_classes: no candidates");
  const TicketVectors vectors = vectorize_ticket(context, ticket);
  RankedSuggestions suggestions;
  suggestions.reserve(candidates.size());
  for (const auto& candidate : candidates) {
    const std::vector<double> features =
        pair_features(context, vectors, ticket, candidate);
    const auto probs = forest::predict_proba(model, features);
    suggestions.push_back(ScoredClass{candidate, probs.size() > 1 ? probs[1] : probs[0]});
  }
  sort_suggestions(suggestions, top_k);
  return suggestions;
}

// --- Direct multi-class baseline -------------------------------------------

struct MulticlassModel {
  forest::ForestModel forest;
  std::vector<std::string> classes;  // index -> class id, lexicographic
};

// Feature layout: [LSA dense | optional dense TF-IDF | encoded metadata].
// Dense TF-IDF is off by default; a flag re-enables it for the
// high-dimensionality comparison.
inline std::vector<double> multiclass_features(const V1Context& context,
                                               const Ticket& ticket,
                                               bool include_tfidf) {
  const TicketVectors vectors = vectorize_ticket(context, ticket);
  std::vector<double> features = vectors.lsa;
  if (include_tfidf) {
    std::vector<double> dense(std::size_t(context.lsa.vocab_size), 0.0);
    for (const auto& [index, weight] : vectors.tfidf.entries)
      dense[std::size_t(index)] = weight;
    features.insert(features.end(), dense.begin(), dense.end());
  }
  const std::vector<double> meta = context.encoder.encode(ticket);
  features.insert(features.end(), meta.begin(), meta.end());
  return features;
}

inline MulticlassModel train_multiclass_baseline(const V1Context& context,
                                                 const std::vector<LabeledTicket>& data,
                                                 const forest::ForestConfig& config,
                                                 bool include_tfidf = false) {
  if (data.empty()) throw TrainError("multiclass baseline: no training data");
  MulticlassModel model;
  model.classes = context.prototypes.classes;
  std::map<std::string, int> index;
  for (int i = 0; i < int(model.classes.size()); ++i)
    index[model.classes[std::size_t(i)]] = i;

  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (const auto& record : data) {
    rows.push_back(multiclass_features(context, record.ticket, include_tfidf));
    const auto it = index.find(label_of(record, context.task));
    if (it == index.end())
      throw DataError("multiclass baseline: label not in class universe");
    y.push_back(it->second);
  }
  linalg::Matrix<double> x(int(rows.size()), int(rows[0].size()));
  for (int i = 0; i < x.rows; ++i)
    for (int f = 0; f < x.cols; ++f) x.at(i, f) = rows[std::size_t(i)][std::size_t(f)];
  model.forest = forest::fit_forest(x, y, config);
  return model;
}

inline RankedSuggestions predict_multiclass(const MulticlassModel& model,
                                            const V1Context& context,
                                            const Ticket& ticket, int top_k,
                                            bool include_tfidf = false) {
  const std::vector<double> features =
      multiclass_features(context, ticket, include_tfidf);
  const auto probs = forest::predict_proba(model.forest, features);
  RankedSuggestions suggestions;
  suggestions.reserve(model.classes.size());
  for (int c = 0; c < int(model.classes.size()); ++c)
    suggestions.push_back(ScoredClass{model.classes[std::size_t(c)], probs[std::size_t(c)]});
  sort_suggestions(suggestions, top_k);
  return suggestions;
}

}  // namespace cota::rank

#pragma once

// ECD training loop, prediction (including beam-search tree-path decoding),
// embedding export and model persistence.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cota/ecd.hpp"

namespace cota::ecd {

// --- Config serialization ----------------------------------------------------

inline config::json feature_to_json(const FeatureSpec& f) {
  config::json j = {{"name", f.name},
                    {"kind",
                     [&] {
                       switch (f.kind) {
                         case FeatureKind::text: return "text";
                         case FeatureKind::categorical: return "categorical";
                         case FeatureKind::numeric: return "numeric";
                         default: return "binary";
                       }
                     }()},
                    {"params", f.params}};
  if (f.role == FeatureRole::input) {
    j["encoder"] = f.codec;
  } else {
    j["decoder"] = f.codec;
    j["loss_weight"] = f.loss_weight;
    j["dependencies"] = f.dependencies;
  }
  return j;
}

inline config::json model_config_to_json(const ModelConfig& config) {
  config::json inputs = config::json::array();
  for (const auto& f : config.input_features) inputs.push_back(feature_to_json(f));
  config::json outputs = config::json::array();
  for (const auto& f : config.output_features) outputs.push_back(feature_to_json(f));
  return {{"input_features", inputs},
          {"output_features", outputs},
          {"combiner",
           {{"fc_sizes", config.combiner.fc_sizes},
            {"activation", config.combiner.activation},
            {"dropout", config.combiner.dropout}}},
          {"trainer",
           {{"batch_size", config.trainer.batch_size},
            {"epochs", config.trainer.epochs},
            {"patience", config.trainer.patience},
            {"seed", config.trainer.seed},
            {"learning_rate", config.trainer.learning_rate},
            {"beta1", config.trainer.beta1},
            {"beta2", config.trainer.beta2},
            {"epsilon", config.trainer.epsilon},
            {"target_accuracy", config.trainer.target_accuracy}}},
          {"dependency_uses_logits", config.dependency_uses_logits},
          {"normalize_sequence_loss", config.normalize_sequence_loss}};
}

// --- Beam search over the contact-type tree -----------------------------------

struct BeamPath {
  std::vector<std::string> nodes;  // root-anchored, <eop> not included
  double log_prob = 0.0;

  const std::string& final_node() const {
    static const std::string empty;
    return nodes.empty() ? empty : nodes.back();
  }
};

namespace detail {

template <typename Real>
std::vector<double> log_softmax_row(const std::vector<Real>& logits) {
  double peak = -1e300;
  for (Real v : logits) peak = std::max(peak, double(v));
  double total = 0;
  for (Real v : logits) total += std::exp(double(v) - peak);
  const double log_total = std::log(total) + peak;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = double(logits[i]) - log_total;
  return out;
}

}  // namespace detail

// Beam search for one record. `input_row` is the decoder input (combiner
// output concatenated with any dependency representations). Returns up to
// beam_width complete paths ordered by total log-probability (ties by
// lexicographic node sequence).
template <typename Real>
std::vector<BeamPath> decode_tree_path(EcdModel<Real>& model, const FeatureSpec& f,
                                       const std::vector<Real>& input_row,
                                       int beam_width) {
  if (beam_width < 1) throw UsageError("decode_tree_path: beam width must be >= 1");
  if (!model.has_tree) throw TrainError("decode_tree_path: model has no tree");
  const bool constrained = f.param("constrained_to_tree", true);
  const int max_steps = f.param("max_steps", model.tree.depth() + 1);
  const std::string base = "dec/" + f.name + "/";

  struct State {
    std::vector<Real> h;
    int prev = 0;  // node id fed at the next step (<eop> doubles as BOS)
    double log_prob = 0.0;
    std::vector<int> nodes;
  };

  // h0 = tanh(input W + b)
  std::vector<Real> h0;
  {
    ad::Tape<Real> tape;
    const ad::NodeId input =
        tape.input({1, int(input_row.size())}, input_row);
    const ad::NodeId w = tape.param(model.parameter(base + "init/w"));
    const ad::NodeId b = tape.param(model.parameter(base + "init/b"));
    const ad::NodeId h = ad::tanh_op(tape, ad::add(tape, ad::matmul(tape, input, w), b));
    h0 = tape.value(h);
  }

  std::vector<State> live = {State{h0, 0, 0.0, {}}};
  std::vector<BeamPath> completed;
  const int root_id = model.node_vocab.lookup(model.tree.root(), -1);

  for (int step = 0; step < max_steps && !live.empty(); ++step) {
    std::vector<State> expanded;
    for (State& state : live) {
      // One recurrence step shared by every candidate expansion.
      ad::Tape<Real> tape;
      const ad::NodeId input = tape.input({1, int(input_row.size())}, input_row);
      const ad::NodeId x = model.sequence_step_input(tape, f, input, {state.prev});
      const ad::NodeId h_node = tape.input({1, int(state.h.size())}, state.h);
      const ad::NodeId h_next = model.sequence_cell_step(tape, f, x, h_node);
      const ad::NodeId out_w = tape.param(model.parameter(base + "out/w"));
      const ad::NodeId out_b = tape.param(model.parameter(base + "out/b"));
      const ad::NodeId logits = ad::add(tape, ad::matmul(tape, h_next, out_w), out_b);
      const std::vector<double> log_probs = detail::log_softmax_row(tape.value(logits));
      const std::vector<Real> h_value = tape.value(h_next);

      std::vector<int> candidates;
      if (constrained) {
        if (state.nodes.empty()) {
          candidates.push_back(root_id);
        } else {
          const std::string& last = model.node_vocab.items[std::size_t(state.nodes.back())];
          for (const auto& child : model.tree.children_of(last))
            candidates.push_back(model.node_vocab.lookup(child, -1));
          candidates.push_back(0);  // end of path
        }
      } else {
        for (int c = 0; c < model.node_vocab.size(); ++c) candidates.push_back(c);
      }
      for (int candidate : candidates) {
        if (candidate < 0) continue;
        if (candidate == 0) {
          BeamPath path;
          for (int node : state.nodes)
            path.nodes.push_back(model.node_vocab.items[std::size_t(node)]);
          path.log_prob = state.log_prob + log_probs[0];
          completed.push_back(std::move(path));
          continue;
        }
        State next;
        next.h = h_value;
        next.prev = candidate;
        next.log_prob = state.log_prob + log_probs[std::size_t(candidate)];
        next.nodes = state.nodes;
        next.nodes.push_back(candidate);
        expanded.push_back(std::move(next));
      }
    }
    std::sort(expanded.begin(), expanded.end(), [](const State& a, const State& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      return a.nodes < b.nodes;
    });
    if (int(expanded.size()) > beam_width) expanded.resize(std::size_t(beam_width));
    live = std::move(expanded);
  }
  // Paths cut off by the step limit still count as terminated sequences.
  for (const State& state : live) {
    BeamPath path;
    for (int node : state.nodes)
      path.nodes.push_back(model.node_vocab.items[std::size_t(node)]);
    path.log_prob = state.log_prob;
    completed.push_back(std::move(path));
  }
  std::sort(completed.begin(), completed.end(), [](const BeamPath& a, const BeamPath& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.nodes < b.nodes;
  });
  if (int(completed.size()) > beam_width) completed.resize(std::size_t(beam_width));
  return completed;
}

// --- Prediction ----------------------------------------------------------------

struct Predictions {
  // Per output feature: one ranked suggestion list per record.
  std::map<std::string, std::vector<RankedSuggestions>> suggestions;
  // Tree-path outputs additionally expose their best decoded paths.
  std::map<std::string, std::vector<BeamPath>> best_paths;
};

template <typename Real>
Predictions predict_topk(EcdModel<Real>& model, const std::vector<LabeledTicket>& records,
                         int top_k, int beam_width_override = 0) {
  Predictions out;
  const int batch_size = std::max(1, model.config.trainer.batch_size);
  for (std::size_t start = 0; start < records.size(); start += std::size_t(batch_size)) {
    std::vector<const LabeledTicket*> chunk;
    for (std::size_t i = start; i < records.size() && i < start + std::size_t(batch_size); ++i)
      chunk.push_back(&records[i]);
    auto batch = model.make_batch(chunk, false);
    ad::Tape<Real> tape;
    typename EcdModel<Real>::ForwardOptions options;
    options.train_mode = false;
    options.with_losses = false;
    auto fwd = model.forward(tape, batch, options);

    for (const auto& f : model.config.output_features) {
      if (f.codec == "classifier") {
        const auto& logits = tape.value(fwd.outputs.at(f.name));
        const Vocab& vocab = model.class_vocabs.at(f.name);
        const int classes = vocab.size();
        for (int r = 0; r < batch.size; ++r) {
          std::vector<Real> row(logits.begin() + std::size_t(r) * std::size_t(classes),
                                logits.begin() + std::size_t(r + 1) * std::size_t(classes));
          const std::vector<double> log_probs = detail::log_softmax_row(row);
          RankedSuggestions ranked;
          ranked.reserve(std::size_t(classes));
          for (int c = 0; c < classes; ++c)
            ranked.push_back({vocab.items[std::size_t(c)], std::exp(log_probs[std::size_t(c)])});
          sort_suggestions(ranked, top_k);
          out.suggestions[f.name].push_back(std::move(ranked));
        }
      } else if (f.codec == "tree_path") {
        const int beam_width =
            beam_width_override > 0 ? beam_width_override
                                    : std::max(top_k, f.param("beam_width", 3));
        const auto& input_value = tape.value(fwd.decoder_inputs.at(f.name));
        const int width = tape.shape(fwd.decoder_inputs.at(f.name))[1];
        for (int r = 0; r < batch.size; ++r) {
          std::vector<Real> row(input_value.begin() + std::size_t(r) * std::size_t(width),
                                input_value.begin() + std::size_t(r + 1) * std::size_t(width));
          const auto paths = decode_tree_path(model, f, row, beam_width);
          // Final nodes of the top paths, deduplicated, padded from
          // next-best paths.
          RankedSuggestions ranked;
          std::set<std::string> seen;
          for (const auto& path : paths) {
            const std::string& node = path.final_node();
            if (node.empty() || !seen.insert(node).second) continue;
            ranked.push_back({node, std::exp(path.log_prob)});
            if (int(ranked.size()) == top_k) break;
          }
          out.suggestions[f.name].push_back(std::move(ranked));
          out.best_paths[f.name].push_back(paths.empty() ? BeamPath{} : paths.front());
        }
      }
    }
  }
  return out;
}

// --- Training -------------------------------------------------------------------

inline std::uint64_t splitmix64_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t state = a ^ (b * 0x9e3779b97f4a7c15ULL);
  return splitmix64(state);
}

struct EpochStats {
  double train_loss = 0.0;
  std::map<std::string, double> val_accuracy;
  double mean_val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  std::vector<std::string> warnings;
};

template <typename Real>
std::map<std::string, double> evaluate_accuracy(EcdModel<Real>& model,
                                                const std::vector<LabeledTicket>& records) {
  std::map<std::string, double> accuracy;
  if (records.empty()) return accuracy;
  // Greedy decoding (beam 1) for sequence outputs keeps per-epoch
  // validation cheap.
  Predictions predictions = predict_topk(model, records, 1, /*beam override=*/1);
  for (const auto& f : model.config.output_features) {
    const auto& per_record = predictions.suggestions.at(f.name);
    int correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!per_record[i].empty() &&
          per_record[i][0].class_id == output_label(records[i], f.name))
        ++correct;
    }
    accuracy[f.name] = double(correct) / double(records.size());
  }
  return accuracy;
}

template <typename Real>
TrainResult train(EcdModel<Real>& model, const DatasetSplit& split) {
  if (split.train.empty()) throw TrainError("train: empty training split");
  const TrainerSpec& trainer = model.config.trainer;
  model.fit_vocabs(split.train);
  model.materialize_parameters(trainer.seed);

  TrainResult result;
  double total_weight = 0;
  for (const auto& f : model.config.output_features) total_weight += f.loss_weight;
  if (total_weight == 0)
    result.warnings.push_back("all loss weights are zero; training is a no-op");

  ad::AdamConfig adam_config;
  adam_config.learning_rate = trainer.learning_rate;
  adam_config.beta1 = trainer.beta1;
  adam_config.beta2 = trainer.beta2;
  adam_config.epsilon = trainer.epsilon;
  ad::AdamState<Real> adam(adam_config);
  auto params = model.parameter_list();

  Rng order_rng(trainer.seed ^ 0x7061746873ULL);
  std::vector<std::size_t> indices(split.train.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  double best_metric = -1.0;
  std::map<std::string, std::vector<Real>> best_values;
  std::map<std::string, std::pair<std::vector<Real>, std::vector<Real>>> best_bn;
  int epochs_since_best = 0;

  auto snapshot = [&]() {
    best_values.clear();
    for (const auto& [name, param] : model.parameters()) best_values[name] = param.value;
    best_bn.clear();
    for (const auto& [name, state] : model.bn_states())
      best_bn[name] = {state.running_mean, state.running_var};
  };
  auto restore = [&]() {
    if (best_values.empty()) return;
    for (auto& [name, values] : best_values) model.parameter(name).value = values;
    for (auto& [name, stats] : best_bn) {
      model.bn_states().at(name).running_mean = stats.first;
      model.bn_states().at(name).running_var = stats.second;
    }
  };

  for (int epoch = 0; epoch < trainer.epochs; ++epoch) {
    Rng epoch_rng = order_rng.fork(std::uint64_t(epoch));
    epoch_rng.shuffle(indices);
    double epoch_loss = 0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < indices.size();
         start += std::size_t(trainer.batch_size), ++batch_index) {
      std::vector<const LabeledTicket*> chunk;
      for (std::size_t i = start;
           i < indices.size() && i < start + std::size_t(trainer.batch_size); ++i)
        chunk.push_back(&split.train[indices[i]]);
      auto batch = model.make_batch(chunk, true);
      ad::Tape<Real> tape;
      typename EcdModel<Real>::ForwardOptions options;
      options.train_mode = true;
      options.with_losses = true;
      options.dropout_seed =
          splitmix64_mix(trainer.seed, std::uint64_t(epoch) * 1000003ULL +
                                           std::uint64_t(batch_index));
      auto fwd = model.forward(tape, batch, options);
      tape.backward(fwd.total_loss);
      adam.step(params);
      epoch_loss += double(tape.value(fwd.total_loss)[0]) * double(batch.size);
      seen += std::size_t(batch.size);
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / double(seen);
    stats.val_accuracy = evaluate_accuracy(model, split.validation);
    double mean = 0;
    for (const auto& [_, acc] : stats.val_accuracy) mean += acc;
    if (!stats.val_accuracy.empty()) mean /= double(stats.val_accuracy.size());
    stats.mean_val_accuracy = mean;
    result.history.push_back(stats);

    if (mean > best_metric) {
      best_metric = mean;
      result.best_epoch = epoch;
      epochs_since_best = 0;
      snapshot();
    } else {
      ++epochs_since_best;
    }
    if (trainer.target_accuracy > 0 && mean >= trainer.target_accuracy) break;
    if (trainer.patience > 0 && epochs_since_best >= trainer.patience) break;
  }
  restore();
  return result;
}

// --- Embedding export -----------------------------------------------------------

enum class EmbeddingKind { word, category, output_class };

template <typename Real>
std::vector<std::pair<std::string, std::vector<Real>>> export_embeddings(
    EcdModel<Real>& model, EmbeddingKind kind, const std::string& feature_name) {
  std::vector<std::pair<std::string, std::vector<Real>>> rows;
  if (kind == EmbeddingKind::word) {
    const FeatureSpec* spec = nullptr;
    for (const auto& f : model.config.input_features)
      if (f.name == feature_name) spec = &f;
    if (!spec || spec->kind != FeatureKind::text)
      throw UsageError("export_embeddings: " + feature_name + " is not a text feature");
    const bool word_level = spec->codec.rfind("word_", 0) == 0;
    const Vocab& vocab = word_level ? model.word_vocab : model.char_vocab;
    const auto& table = model.parameter("enc/" + feature_name + "/embedding");
    const int width = table.shape[1];
    for (int v = 0; v < vocab.size(); ++v)
      rows.emplace_back(vocab.items[std::size_t(v)],
                        std::vector<Real>(table.value.begin() + std::size_t(v) * std::size_t(width),
                                          table.value.begin() + std::size_t(v + 1) * std::size_t(width)));
    return rows;
  }
  if (kind == EmbeddingKind::category) {
    auto it = model.categorical_vocabs.find(feature_name);
    if (it == model.categorical_vocabs.end())
      throw UsageError("export_embeddings: " + feature_name +
                       " is not a categorical feature with embeddings");
    const auto& table = model.parameter("enc/" + feature_name + "/embedding");
    const int width = table.shape[1];
    for (int v = 0; v < it->second.size(); ++v)
      rows.emplace_back(it->second.items[std::size_t(v)],
                        std::vector<Real>(table.value.begin() + std::size_t(v) * std::size_t(width),
                                          table.value.begin() + std::size_t(v + 1) * std::size_t(width)));
    return rows;
  }
  // Output-class embeddings: columns of the final layer weight matrix.
  const FeatureSpec* spec = model.config.find_output(feature_name);
  if (!spec) throw UsageError("export_embeddings: unknown output " + feature_name);
  const auto& w = model.parameter("dec/" + feature_name + "/out/w");
  const int hidden = w.shape[0], classes = w.shape[1];
  const Vocab& vocab = spec->codec == "tree_path" ? model.node_vocab
                                                  : model.class_vocabs.at(feature_name);
  for (int c = 0; c < classes; ++c) {
    std::vector<Real> column(static_cast<std::size_t>(hidden));
    for (int h = 0; h < hidden; ++h)
      column[std::size_t(h)] = w.value[std::size_t(h) * std::size_t(classes) + std::size_t(c)];
    rows.emplace_back(vocab.items[std::size_t(c)], std::move(column));
  }
  return rows;
}

template <typename Real>
std::string embeddings_to_table(
    const std::vector<std::pair<std::string, std::vector<Real>>>& rows) {
  std::string out;
  for (const auto& [label, vector] : rows) {
    out += label;
    for (Real v : vector) {
      out += '\t';
      out += format_double(double(v));
    }
    out += '\n';
  }
  return out;
}

// --- Persistence ------------------------------------------------------------------

inline config::json vocab_to_json(const Vocab& vocab) { return vocab.items; }

inline Vocab vocab_from_json(const config::json& j) {
  Vocab vocab;
  for (const auto& item : j) vocab.add(item.get<std::string>());
  return vocab;
}

template <typename Real>
void save_model(EcdModel<Real>& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  config::json meta = {{"model", model_config_to_json(model.config)},
                       {"word_vocab", vocab_to_json(model.word_vocab)},
                       {"char_vocab", vocab_to_json(model.char_vocab)},
                       {"has_tree", model.has_tree}};
  config::json cats = config::json::object();
  for (const auto& [name, vocab] : model.categorical_vocabs)
    cats[name] = vocab_to_json(vocab);
  meta["categorical_vocabs"] = cats;
  config::json classes = config::json::object();
  for (const auto& [name, vocab] : model.class_vocabs)
    classes[name] = vocab_to_json(vocab);
  meta["class_vocabs"] = classes;
  if (model.has_tree) meta["tree"] = corpus::tree_to_json(model.tree);
  write_file(dir + "/model.json", meta.dump(2));

  // Batch-norm running statistics ride along as pseudo-parameters.
  std::vector<ad::Param<Real>> bn_params;
  for (const auto& [name, state] : model.bn_states()) {
    ad::Param<Real> mean("state/bn/" + name + "/mean",
                         {int(state.running_mean.size())});
    mean.value = state.running_mean;
    bn_params.push_back(std::move(mean));
    ad::Param<Real> var("state/bn/" + name + "/var", {int(state.running_var.size())});
    var.value = state.running_var;
    bn_params.push_back(std::move(var));
  }
  std::vector<const ad::Param<Real>*> to_save;
  for (const auto& [name, param] : model.parameters()) to_save.push_back(&param);
  for (const auto& param : bn_params) to_save.push_back(&param);
  write_file(dir + "/checkpoint.bin", ad::serialize_params<Real>(to_save));
}

template <typename Real>
EcdModel<Real> load_model(const std::string& dir) {
  const config::json meta = config::load_json_file(dir + "/model.json");
  EcdModel<Real> model(model_config_from_json(config::require(meta, "model", "model.json")));
  model.word_vocab = vocab_from_json(config::require(meta, "word_vocab", "model.json"));
  model.char_vocab = vocab_from_json(config::require(meta, "char_vocab", "model.json"));
  for (const auto& [name, items] : config::require(meta, "categorical_vocabs", "model.json").items())
    model.categorical_vocabs[name] = vocab_from_json(items);
  for (const auto& [name, items] : config::require(meta, "class_vocabs", "model.json").items())
    model.class_vocabs[name] = vocab_from_json(items);
  if (config::get_or(meta, "has_tree", false, "model.json"))
    model.attach_tree(corpus::tree_from_json(config::require(meta, "tree", "model.json")));
  model.materialize_parameters(model.config.trainer.seed);

  std::vector<ad::Param<Real>*> params = model.parameter_list();
  std::vector<ad::Param<Real>> bn_params;
  for (auto& [name, state] : model.bn_states()) {
    ad::Param<Real> mean("state/bn/" + name + "/mean", {int(state.running_mean.size())});
    bn_params.push_back(std::move(mean));
    ad::Param<Real> var("state/bn/" + name + "/var", {int(state.running_var.size())});
    bn_params.push_back(std::move(var));
  }
  for (auto& param : bn_params) params.push_back(&param);
  ad::load_params(read_file(dir + "/checkpoint.bin"), params);
  for (auto& param : bn_params) {
    const auto slash = param.name.rfind('/');
    const std::string feature =
        param.name.substr(9, slash - 9);  // strip "state/bn/" prefix
    if (param.name.substr(slash + 1) == "mean")
      model.bn_states().at(feature).running_mean = param.value;
    else
      model.bn_states().at(feature).running_var = param.value;
  }
  return model;
}

}  // namespace cota::ecd

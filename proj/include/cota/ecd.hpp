#pragma once

// Encoder-Combiner-Decoder: typed per-feature encoders, a concatenating
// combiner with an optional fully connected stack, per-output decoder heads
// joined by a dependency DAG, a tree-path sequence decoder with beam search,
// and the multi-task training loop.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cota/autodiff.hpp"
#include "cota/common.hpp"
#include "cota/config.hpp"
#include "cota/corpus.hpp"
#include "cota/suggestions.hpp"
#include "cota/textprep.hpp"

namespace cota::ecd {

using corpus::ContactTypeTree;
using corpus::DatasetSplit;
using corpus::LabeledTicket;
namespace ad = cota::ad;

enum class FeatureKind { text, categorical, numeric, binary };
enum class FeatureRole { input, output };

inline FeatureKind parse_kind(const std::string& name) {
  if (name == "text") return FeatureKind::text;
  if (name == "categorical") return FeatureKind::categorical;
  if (name == "numeric") return FeatureKind::numeric;
  if (name == "binary") return FeatureKind::binary;
  throw UsageError("unknown feature kind: " + name);
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::text;
  FeatureRole role = FeatureRole::input;
  std::string codec;      // encoder or decoder name
  config::json params;    // codec hyperparameters
  double loss_weight = 1.0;
  std::vector<std::string> dependencies;

  template <typename T>
  T param(const std::string& key, const T& fallback) const {
    return config::get_or(params, key, fallback, name);
  }
};

struct CombinerSpec {
  std::vector<int> fc_sizes;  // empty: output is the concatenation itself
  std::string activation = "relu";
  double dropout = 0.35;
};

struct TrainerSpec {
  int batch_size = 256;
  int epochs = 20;
  int patience = 5;
  std::uint64_t seed = 0;
  double learning_rate = 0.00025;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Optional early exit once mean validation accuracy reaches this level;
  // 0 disables.
  double target_accuracy = 0.0;
};

struct ModelConfig {
  std::vector<FeatureSpec> input_features;
  std::vector<FeatureSpec> output_features;
  CombinerSpec combiner;
  TrainerSpec trainer;
  // Dependency injection uses the dependency decoder's final hidden
  // representation by default; this flag substitutes its logits.
  bool dependency_uses_logits = false;
  // Sequence losses are unnormalized sums by default.
  bool normalize_sequence_loss = false;

  const FeatureSpec* find_output(const std::string& name) const {
    for (const auto& f : output_features)
      if (f.name == name) return &f;
    return nullptr;
  }
};

// --- Registries and config validation ---------------------------------------

inline const std::vector<std::string>& encoders_for(FeatureKind kind) {
  static const std::vector<std::string> text = {"char_cnn", "word_cnn", "char_rnn",
                                                "word_rnn", "char_crnn", "word_crnn"};
  static const std::vector<std::string> categorical = {"embed"};
  static const std::vector<std::string> numeric = {"batch_norm"};
  static const std::vector<std::string> binary = {"passthrough"};
  switch (kind) {
    case FeatureKind::text: return text;
    case FeatureKind::categorical: return categorical;
    case FeatureKind::numeric: return numeric;
    default: return binary;
  }
}

inline const std::vector<std::string>& decoders_for(FeatureKind kind) {
  static const std::vector<std::string> categorical = {"classifier", "tree_path"};
  static const std::vector<std::string> numeric = {"regressor"};
  static const std::vector<std::string> binary = {"logistic"};
  static const std::vector<std::string> none = {};
  switch (kind) {
    case FeatureKind::categorical: return categorical;
    case FeatureKind::numeric: return numeric;
    case FeatureKind::binary: return binary;
    default: return none;
  }
}

// Ticket schema names understood by the feature extractors.
inline FeatureKind schema_kind(const std::string& feature, FeatureRole role) {
  if (role == FeatureRole::input) {
    if (feature == "message") return FeatureKind::text;
    if (feature == "product_type" || feature == "user_type" || feature == "country" ||
        feature == "city" || feature == "trip_status")
      return FeatureKind::categorical;
    if (feature == "eta_minutes") return FeatureKind::numeric;
    if (feature == "has_trip") return FeatureKind::binary;
    throw UsageError("unknown input feature name: " + feature);
  }
  if (feature == "contact_type" || feature == "reply_template")
    return FeatureKind::categorical;
  throw UsageError("unknown output feature name: " + feature);
}

// Topological order over output features (Kahn; ties resolved by
// declaration order). Throws on cycles (listing the cycle), dependencies on
// input features, unknown names, and unregistered codecs.
inline std::vector<std::string> validate_config(const ModelConfig& config) {
  if (config.input_features.empty()) throw UsageError("config: no input features");
  if (config.output_features.empty()) throw UsageError("config: no output features");

  std::set<std::string> input_names, output_names;
  for (const auto& f : config.input_features) {
    if (!input_names.insert(f.name).second)
      throw UsageError("config: duplicate input feature " + f.name);
    if (schema_kind(f.name, FeatureRole::input) != f.kind)
      throw UsageError("config: feature " + f.name + " has the wrong kind");
    const auto& registry = encoders_for(f.kind);
    if (std::find(registry.begin(), registry.end(), f.codec) == registry.end())
      throw UsageError("config: unknown encoder '" + f.codec + "' for input feature " +
                       f.name);
  }
  for (const auto& f : config.output_features) {
    if (!output_names.insert(f.name).second)
      throw UsageError("config: duplicate output feature " + f.name);
    if (schema_kind(f.name, FeatureRole::output) != f.kind)
      throw UsageError("config: feature " + f.name + " has the wrong kind");
    const auto& registry = decoders_for(f.kind);
    if (std::find(registry.begin(), registry.end(), f.codec) == registry.end())
      throw UsageError("config: unknown decoder '" + f.codec + "' for output feature " +
                       f.name);
    if (f.loss_weight < 0)
      throw UsageError("config: negative loss_weight on " + f.name);
    for (const auto& dep : f.dependencies) {
      if (input_names.count(dep))
        throw UsageError("config: output " + f.name + " depends on input feature " + dep);
      if (!config.find_output(dep))
        throw UsageError("config: output " + f.name + " depends on unknown feature " + dep);
      if (dep == f.name)
        throw UsageError("config: output " + f.name + " depends on itself");
    }
  }

  // Kahn with declaration-order tie break.
  std::vector<std::string> order;
  std::set<std::string> resolved;
  while (order.size() < config.output_features.size()) {
    bool progressed = false;
    for (const auto& f : config.output_features) {
      if (resolved.count(f.name)) continue;
      bool ready = true;
      for (const auto& dep : f.dependencies)
        if (!resolved.count(dep)) ready = false;
      if (ready) {
        order.push_back(f.name);
        resolved.insert(f.name);
        progressed = true;
      }
    }
    if (!progressed) {
      std::string cycle;
      for (const auto& f : config.output_features)
        if (!resolved.count(f.name)) cycle += (cycle.empty() ? "" : ", ") + f.name;
      throw UsageError("config: dependency cycle among [" + cycle + "]");
    }
  }
  return order;
}

// --- Config parsing ----------------------------------------------------------

inline FeatureSpec feature_from_json(const config::json& j, FeatureRole role,
                                     const std::string& context) {
  FeatureSpec spec;
  spec.name = config::get_as<std::string>(j, "name", context);
  spec.role = role;
  spec.kind = parse_kind(config::get_or<std::string>(
      j, "kind",
      // Kind defaults to the schema's kind for the name.
      [&] {
        switch (schema_kind(spec.name, role)) {
          case FeatureKind::text: return "text";
          case FeatureKind::categorical: return "categorical";
          case FeatureKind::numeric: return "numeric";
          default: return "binary";
        }
      }(),
      context));
  const char* codec_key = role == FeatureRole::input ? "encoder" : "decoder";
  std::string fallback;
  if (role == FeatureRole::input) {
    switch (spec.kind) {
      case FeatureKind::text: fallback = "word_cnn"; break;
      case FeatureKind::categorical: fallback = "embed"; break;
      case FeatureKind::numeric: fallback = "batch_norm"; break;
      default: fallback = "passthrough"; break;
    }
  } else {
    switch (spec.kind) {
      case FeatureKind::categorical: fallback = "classifier"; break;
      case FeatureKind::numeric: fallback = "regressor"; break;
      default: fallback = "logistic"; break;
    }
  }
  spec.codec = config::get_or<std::string>(j, codec_key, fallback, context);
  spec.params = config::get_or(j, "params", config::json::object(), context);
  if (role == FeatureRole::output) {
    spec.loss_weight = config::get_or(j, "loss_weight", 1.0, context);
    spec.dependencies =
        config::get_or(j, "dependencies", std::vector<std::string>{}, context);
  }
  return spec;
}

inline ModelConfig model_config_from_json(const config::json& j) {
  ModelConfig config;
  const std::string c = "model";
  for (const auto& f : config::require(j, "input_features", c))
    config.input_features.push_back(feature_from_json(f, FeatureRole::input, c));
  for (const auto& f : config::require(j, "output_features", c))
    config.output_features.push_back(feature_from_json(f, FeatureRole::output, c));
  if (j.contains("combiner")) {
    const auto& cj = j.at("combiner");
    config.combiner.fc_sizes =
        config::get_or(cj, "fc_sizes", std::vector<int>{}, c + ".combiner");
    config.combiner.activation =
        config::get_or<std::string>(cj, "activation", "relu", c + ".combiner");
    config.combiner.dropout = config::get_or(cj, "dropout", 0.35, c + ".combiner");
  }
  if (j.contains("trainer")) {
    const auto& tj = j.at("trainer");
    const std::string tc = c + ".trainer";
    config.trainer.batch_size = config::get_or(tj, "batch_size", 256, tc);
    config.trainer.epochs = config::get_or(tj, "epochs", 20, tc);
    config.trainer.patience = config::get_or(tj, "patience", 5, tc);
    config.trainer.seed = config::get_or<std::uint64_t>(tj, "seed", 0, tc);
    config.trainer.learning_rate = config::get_or(tj, "learning_rate", 0.00025, tc);
    config.trainer.beta1 = config::get_or(tj, "beta1", 0.9, tc);
    config.trainer.beta2 = config::get_or(tj, "beta2", 0.999, tc);
    config.trainer.epsilon = config::get_or(tj, "epsilon", 1e-8, tc);
    config.trainer.target_accuracy = config::get_or(tj, "target_accuracy", 0.0, tc);
  }
  config.dependency_uses_logits =
      config::get_or(j, "dependency_uses_logits", false, c);
  config.normalize_sequence_loss =
      config::get_or(j, "normalize_sequence_loss", false, c);
  validate_config(config);
  return config;
}

// The architecture of the winning model: word CNN with 256-dim embeddings
// and 4 parallel width-{2,3,4,5} convolutions of 512 filters, 256-dim
// categorical embeddings, a pass-through combiner, decoder stacks of
// [512, 256], dropout 0.35, Adam at lr 0.00025 with batch size 256.
inline ModelConfig default_model_config() {
  config::json j = {
      {"input_features",
       {{{"name", "message"},
         {"encoder", "word_cnn"},
         {"params",
          {{"embedding_size", 256},
           {"filter_sizes", {2, 3, 4, 5}},
           {"num_filters", 512},
           {"max_length", 256}}}},
        {{"name", "product_type"}, {"params", {{"embedding_size", 256}}}},
        {{"name", "user_type"}, {"params", {{"embedding_size", 256}}}},
        {{"name", "country"}, {"params", {{"embedding_size", 256}}}},
        {{"name", "city"}, {"params", {{"embedding_size", 256}}}},
        {{"name", "trip_status"}, {"params", {{"embedding_size", 256}}}},
        {{"name", "eta_minutes"}},
        {{"name", "has_trip"}}}},
      {"combiner", {{"fc_sizes", config::json::array()}, {"dropout", 0.35}}},
      {"output_features",
       {{{"name", "contact_type"},
         {"params", {{"fc_sizes", {512, 256}}, {"dropout", 0.35}}}},
        {{"name", "reply_template"},
         {"params", {{"fc_sizes", {512, 256}}, {"dropout", 0.35}}},
         {"dependencies", {"contact_type"}}}}},
      {"trainer", config::json::object()}};
  return model_config_from_json(j);
}

// --- Vocabularies ------------------------------------------------------------

struct Vocab {
  std::vector<std::string> items;  // index -> symbol
  std::map<std::string, int> index;

  int add(const std::string& item) {
    auto it = index.find(item);
    if (it != index.end()) return it->second;
    const int id = int(items.size());
    items.push_back(item);
    index.emplace(item, id);
    return id;
  }
  int lookup(const std::string& item, int fallback) const {
    auto it = index.find(item);
    return it == index.end() ? fallback : it->second;
  }
  int size() const { return int(items.size()); }
};

inline constexpr int kPad = 0;
inline constexpr int kOov = 1;

// --- Feature extraction -------------------------------------------------------

inline const std::string& input_string_value(const LabeledTicket& r,
                                             const std::string& name) {
  const corpus::Ticket& t = r.ticket;
  if (name == "message") return t.message;
  if (name == "product_type") return t.product_type;
  if (name == "user_type") return t.user_type;
  if (name == "country") return t.country;
  if (name == "city") return t.city;
  if (name == "trip_status") return t.trip_status;
  throw UsageError("unknown string feature: " + name);
}

inline const std::string& output_label(const LabeledTicket& r, const std::string& name) {
  if (name == "contact_type") return r.contact_type;
  if (name == "reply_template") return r.reply_template;
  throw UsageError("unknown output feature: " + name);
}

// --- Model ---------------------------------------------------------------------

template <typename Real>
class EcdModel {
 public:
  ModelConfig config;
  ContactTypeTree tree;  // used by tree_path decoders
  bool has_tree = false;

  Vocab word_vocab;  // 0 = pad, 1 = oov
  Vocab char_vocab;  // 0 = pad, 1 = oov
  std::map<std::string, Vocab> categorical_vocabs;  // 0 = missing/oov
  std::map<std::string, Vocab> class_vocabs;        // categorical outputs
  Vocab node_vocab;                                 // 0 = <eop>, then tree nodes

  std::vector<std::string> output_order;

  EcdModel() = default;
  explicit EcdModel(ModelConfig cfg) : config(std::move(cfg)) {
    output_order = validate_config(config);
  }

  void attach_tree(const ContactTypeTree& contact_tree) {
    tree = contact_tree;
    has_tree = true;
    node_vocab = Vocab{};
    node_vocab.add("<eop>");
    for (const auto& node : tree.nodes) node_vocab.add(node);
  }

  // Vocabulary fitting over the training split.
  void fit_vocabs(const std::vector<LabeledTicket>& train) {
    word_vocab = Vocab{};
    word_vocab.add("<pad>");
    word_vocab.add("<oov>");
    char_vocab = Vocab{};
    char_vocab.add("<pad>");
    char_vocab.add("<oov>");
    for (const auto& f : config.input_features) {
      if (f.kind == FeatureKind::text) {
        for (const auto& record : train) {
          const std::string& text = input_string_value(record, f.name);
          for (const auto& word : textprep::simple_tokens(text)) word_vocab.add(word);
          for (char c : text) char_vocab.add(std::string(1, c));
        }
      } else if (f.kind == FeatureKind::categorical) {
        Vocab& vocab = categorical_vocabs[f.name];
        vocab = Vocab{};
        vocab.add("<missing>");
        std::set<std::string> values;
        for (const auto& record : train) {
          const std::string& value = input_string_value(record, f.name);
          if (!value.empty()) values.insert(value);
        }
        for (const auto& value : values) vocab.add(value);
      }
    }
    for (const auto& f : config.output_features) {
      if (f.codec == "tree_path") {
        if (!has_tree)
          throw TrainError("tree_path decoder requires an attached contact-type tree");
        continue;
      }
      if (f.kind == FeatureKind::categorical) {
        Vocab& vocab = class_vocabs[f.name];
        vocab = Vocab{};
        std::set<std::string> labels;
        for (const auto& record : train) labels.insert(output_label(record, f.name));
        for (const auto& label : labels) vocab.add(label);
      }
    }
  }

  // --- Static width algebra ---------------------------------------------------

  int encoder_width(const FeatureSpec& f) const {
    switch (f.kind) {
      case FeatureKind::text: {
        const int hidden = f.param("hidden_size", 256);
        const bool bidirectional = f.param("bidirectional", false);
        if (f.codec == "word_cnn" || f.codec == "char_cnn") {
          const auto widths = f.param("filter_sizes", std::vector<int>{2, 3, 4, 5});
          return int(widths.size()) * f.param("num_filters", 512);
        }
        return bidirectional ? 2 * hidden : hidden;  // rnn and crnn
      }
      case FeatureKind::categorical:
        return f.param("embedding_size", 256);
      case FeatureKind::numeric:
      case FeatureKind::binary:
        return 1;
    }
    return 1;
  }

  int combiner_input_width() const {
    int total = 0;
    for (const auto& f : config.input_features) total += encoder_width(f);
    return total;
  }

  int combiner_output_width() const {
    return config.combiner.fc_sizes.empty() ? combiner_input_width()
                                            : config.combiner.fc_sizes.back();
  }

  int decoder_hidden_width(const FeatureSpec& f) const {
    if (f.codec == "tree_path") return f.param("hidden_size", 256);
    const auto sizes = f.param("fc_sizes", std::vector<int>{512, 256});
    return sizes.empty() ? decoder_input_width(f) : sizes.back();
  }

  int decoder_output_width(const FeatureSpec& f) const {
    if (f.codec == "classifier") return class_vocabs.at(f.name).size();
    if (f.codec == "tree_path") return node_vocab.size();
    return 1;
  }

  int decoder_input_width(const FeatureSpec& f) const {
    int width = combiner_output_width();
    for (const auto& dep : f.dependencies) {
      const FeatureSpec* spec = config.find_output(dep);
      width += config.dependency_uses_logits ? decoder_output_width(*spec)
                                             : decoder_hidden_width(*spec);
    }
    return width;
  }

  // --- Parameters ---------------------------------------------------------------

  ad::Param<Real>& parameter(const std::string& name) { return params_.at(name); }
  const std::map<std::string, ad::Param<Real>>& parameters() const { return params_; }
  std::map<std::string, ad::BatchNormState<Real>>& bn_states() { return bn_states_; }

  std::vector<ad::Param<Real>*> parameter_list() {
    std::vector<ad::Param<Real>*> out;
    out.reserve(params_.size());
    for (auto& [name, param] : params_) out.push_back(&param);
    return out;
  }

  // Creates every parameter eagerly with seeded Glorot/uniform init; shapes
  // derive from the config and fitted vocabularies.
  void materialize_parameters(std::uint64_t seed) {
    params_.clear();
    bn_states_.clear();
    init_seed_ = seed;
    for (const auto& f : config.input_features) {
      const std::string base = "enc/" + f.name + "/";
      switch (f.kind) {
        case FeatureKind::text: {
          const bool word_level = f.codec.rfind("word_", 0) == 0;
          const int vocab = word_level ? word_vocab.size() : char_vocab.size();
          const int emb = f.param("embedding_size", 256);
          create(base + "embedding", {vocab, emb}, InitKind::embedding);
          if (f.codec == "word_cnn" || f.codec == "char_cnn") {
            const auto widths = f.param("filter_sizes", std::vector<int>{2, 3, 4, 5});
            const int filters = f.param("num_filters", 512);
            for (int w : widths) {
              create(base + "conv" + std::to_string(w) + "/w", {filters, w, emb},
                     InitKind::glorot);
              create(base + "conv" + std::to_string(w) + "/b", {filters},
                     InitKind::zero);
            }
          } else {
            int input_width = emb;
            if (f.codec == "word_crnn" || f.codec == "char_crnn") {
              const int filters = f.param("num_filters", 256);
              const int conv_width = f.param("conv_width", 3);
              create(base + "conv/w", {filters, conv_width, emb}, InitKind::glorot);
              create(base + "conv/b", {filters}, InitKind::zero);
              input_width = filters;
            }
            const int hidden = f.param("hidden_size", 256);
            const int layers = f.param("layers", 1);
            const bool bidirectional = f.param("bidirectional", false);
            const int directions = bidirectional ? 2 : 1;
            const int gate_mult = cell_gate_multiplier(f.param<std::string>("cell", "gru"));
            for (int d = 0; d < directions; ++d) {
              int in_width = input_width;
              for (int l = 0; l < layers; ++l) {
                const std::string cell_base =
                    base + "rnn" + std::to_string(d) + "_" + std::to_string(l) + "/";
                create(cell_base + "wx", {in_width, gate_mult * hidden}, InitKind::glorot);
                create(cell_base + "wh", {hidden, gate_mult * hidden}, InitKind::glorot);
                create(cell_base + "b", {gate_mult * hidden}, InitKind::zero);
                in_width = hidden;
              }
            }
          }
          break;
        }
        case FeatureKind::categorical:
          create(base + "embedding",
                 {categorical_vocabs.at(f.name).size(), f.param("embedding_size", 256)},
                 InitKind::embedding);
          break;
        case FeatureKind::numeric:
          create(base + "bn_gamma", {1}, InitKind::one);
          create(base + "bn_beta", {1}, InitKind::zero);
          create(base + "missing", {1}, InitKind::zero);
          bn_states_.emplace(f.name, ad::BatchNormState<Real>(1));
          break;
        case FeatureKind::binary:
          break;  // no parameters
      }
    }
    {
      int width = combiner_input_width();
      for (std::size_t i = 0; i < config.combiner.fc_sizes.size(); ++i) {
        const int next = config.combiner.fc_sizes[i];
        create("combiner/fc" + std::to_string(i) + "/w", {width, next}, InitKind::glorot);
        create("combiner/fc" + std::to_string(i) + "/b", {next}, InitKind::zero);
        width = next;
      }
    }
    for (const auto& f : config.output_features) {
      const std::string base = "dec/" + f.name + "/";
      const int input = decoder_input_width(f);
      if (f.codec == "tree_path") {
        const int hidden = f.param("hidden_size", 256);
        const int emb = f.param("embedding_size", 256);
        const int gate_mult = cell_gate_multiplier(f.param<std::string>("cell", "gru"));
        create(base + "init/w", {input, hidden}, InitKind::glorot);
        create(base + "init/b", {hidden}, InitKind::zero);
        create(base + "embedding", {node_vocab.size(), emb}, InitKind::embedding);
        // Each step consumes the previous node's embedding concatenated
        // with the static decoder input, so text evidence reaches every
        // step directly instead of only seeding h0.
        create(base + "cell/wx", {emb + input, gate_mult * hidden}, InitKind::glorot);
        create(base + "cell/wh", {hidden, gate_mult * hidden}, InitKind::glorot);
        create(base + "cell/b", {gate_mult * hidden}, InitKind::zero);
        create(base + "out/w", {hidden, node_vocab.size()}, InitKind::glorot);
        create(base + "out/b", {node_vocab.size()}, InitKind::zero);
        continue;
      }
      int width = input;
      const auto sizes = f.param("fc_sizes", std::vector<int>{512, 256});
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        create(base + "fc" + std::to_string(i) + "/w", {width, sizes[i]},
               InitKind::glorot);
        create(base + "fc" + std::to_string(i) + "/b", {sizes[i]}, InitKind::zero);
        width = sizes[i];
      }
      create(base + "out/w", {width, decoder_output_width(f)}, InitKind::glorot);
      create(base + "out/b", {decoder_output_width(f)}, InitKind::zero);
    }
  }

  // --- Batches -------------------------------------------------------------------

  struct Batch {
    int size = 0;
    std::map<std::string, std::pair<std::vector<int>, int>> text_ids;  // ids, length
    std::map<std::string, std::vector<int>> categorical_ids;
    std::map<std::string, std::vector<Real>> numeric_values;
    std::map<std::string, std::vector<bool>> numeric_present;
    std::map<std::string, std::vector<Real>> binary_values;
    std::map<std::string, std::vector<int>> class_targets;  // -1 when unseen
    std::map<std::string, std::vector<std::vector<int>>> path_targets;
    bool has_targets = false;
  };

  Batch make_batch(const std::vector<const LabeledTicket*>& records,
                   bool with_targets) const {
    Batch batch;
    batch.size = int(records.size());
    batch.has_targets = with_targets;
    for (const auto& f : config.input_features) {
      switch (f.kind) {
        case FeatureKind::text: {
          const bool word_level = f.codec.rfind("word_", 0) == 0;
          const int cap = f.param("max_length", word_level ? 256 : 1024);
          std::vector<std::vector<int>> ids_per_record;
          int longest = 1;
          for (const auto* record : records) {
            const std::string& text = input_string_value(*record, f.name);
            std::vector<int> ids;
            if (word_level) {
              for (const auto& word : textprep::simple_tokens(text)) {
                if (int(ids.size()) >= cap) break;
                ids.push_back(word_vocab.lookup(word, kOov));
              }
            } else {
              for (char c : text) {
                if (int(ids.size()) >= cap) break;
                ids.push_back(char_vocab.lookup(std::string(1, c), kOov));
              }
            }
            if (ids.empty()) ids.push_back(kOov);
            longest = std::max(longest, int(ids.size()));
            ids_per_record.push_back(std::move(ids));
          }
          std::vector<int> packed(std::size_t(batch.size) * std::size_t(longest), kPad);
          for (int r = 0; r < batch.size; ++r)
            for (std::size_t i = 0; i < ids_per_record[std::size_t(r)].size(); ++i)
              packed[std::size_t(r) * std::size_t(longest) + i] =
                  ids_per_record[std::size_t(r)][i];
          batch.text_ids[f.name] = {std::move(packed), longest};
          break;
        }
        case FeatureKind::categorical: {
          auto& ids = batch.categorical_ids[f.name];
          const Vocab& vocab = categorical_vocabs.at(f.name);
          for (const auto* record : records) {
            const std::string& value = input_string_value(*record, f.name);
            ids.push_back(value.empty() ? 0 : vocab.lookup(value, 0));
          }
          break;
        }
        case FeatureKind::numeric: {
          auto& values = batch.numeric_values[f.name];
          auto& present = batch.numeric_present[f.name];
          for (const auto* record : records) {
            const auto& eta = record->ticket.eta_minutes;
            values.push_back(eta ? Real(*eta) : Real(0));
            present.push_back(eta.has_value());
          }
          break;
        }
        case FeatureKind::binary: {
          auto& values = batch.binary_values[f.name];
          for (const auto* record : records)
            values.push_back(record->ticket.has_trip ? Real(1) : Real(0));
          break;
        }
      }
    }
    if (!with_targets) return batch;
    for (const auto& f : config.output_features) {
      if (f.codec == "tree_path") {
        auto& paths = batch.path_targets[f.name];
        for (const auto* record : records) {
          const auto path = tree.path_from_root(output_label(*record, f.name));
          std::vector<int> ids;
          for (const auto& node : path) ids.push_back(node_vocab.lookup(node, -1));
          ids.push_back(0);  // <eop>
          for (int id : ids)
            if (id < 0) throw DataError("tree_path: label outside tree: " +
                                        output_label(*record, f.name));
          paths.push_back(std::move(ids));
        }
      } else if (f.kind == FeatureKind::categorical) {
        auto& targets = batch.class_targets[f.name];
        const Vocab& vocab = class_vocabs.at(f.name);
        for (const auto* record : records)
          targets.push_back(vocab.lookup(output_label(*record, f.name), -1));
      }
    }
    return batch;
  }

  // --- Forward -------------------------------------------------------------------

  struct Forward {
    std::map<std::string, ad::NodeId> encodings;
    ad::NodeId combined = -1;
    std::map<std::string, ad::NodeId> decoder_inputs;
    std::map<std::string, ad::NodeId> hidden;   // decoder hidden representations
    std::map<std::string, ad::NodeId> outputs;  // logits / predictions
    std::map<std::string, ad::NodeId> losses;   // per-output scalar losses
    ad::NodeId total_loss = -1;
    std::vector<std::string> decode_trace;      // outputs in execution order
  };

  struct ForwardOptions {
    bool train_mode = false;
    bool with_losses = false;
    std::uint64_t dropout_seed = 0;
  };

  Forward forward(ad::Tape<Real>& tape, const Batch& batch, ForwardOptions options) {
    dropout_counter_ = 0;
    Forward fwd;
    for (const auto& f : config.input_features)
      fwd.encodings[f.name] = encode_feature(tape, f, batch, options);
    fwd.combined = combine(tape, fwd, options);
    for (const auto& name : output_order) {
      const FeatureSpec& f = *config.find_output(name);
      decode_feature(tape, f, batch, options, fwd);
      fwd.decode_trace.push_back(name);
    }
    if (options.with_losses) {
      std::vector<std::pair<ad::NodeId, Real>> terms;
      for (const auto& f : config.output_features)
        terms.emplace_back(fwd.losses.at(f.name), Real(f.loss_weight));
      fwd.total_loss = ad::weighted_sum(tape, terms);
    }
    return fwd;
  }

  // Step input of a tree_path decoder: previous-node embedding
  // concatenated with the static decoder input.
  ad::NodeId sequence_step_input(ad::Tape<Real>& tape, const FeatureSpec& f,
                                 ad::NodeId decoder_input,
                                 const std::vector<int>& prev_ids) {
    const ad::NodeId table = tape.param(parameter("dec/" + f.name + "/embedding"));
    const ad::NodeId emb =
        ad::embedding_lookup(tape, table, prev_ids, {int(prev_ids.size())});
    return ad::concat(tape, {emb, decoder_input}, 1);
  }

  // Single recurrence step of a tree_path decoder; public so that beam
  // search and the exhaustive test oracle share the same step math.
  ad::NodeId sequence_cell_step(ad::Tape<Real>& tape, const FeatureSpec& f,
                                ad::NodeId x_emb, ad::NodeId h) {
    const std::string base = "dec/" + f.name + "/cell/";
    const std::string cell = f.param<std::string>("cell", "gru");
    const ad::NodeId wx = tape.param(parameter(base + "wx"));
    const ad::NodeId wh = tape.param(parameter(base + "wh"));
    const ad::NodeId b = tape.param(parameter(base + "b"));
    if (cell == "gru") return ad::gru_step(tape, x_emb, h, wx, wh, b);
    if (cell == "simple") return ad::rnn_step_simple(tape, x_emb, h, wx, wh, b);
    throw UsageError("tree_path: unsupported cell " + cell);
  }

  std::uint64_t init_seed() const { return init_seed_; }

 private:
  enum class InitKind { glorot, embedding, zero, one };

  int cell_gate_multiplier(const std::string& cell) const {
    if (cell == "gru") return 3;
    if (cell == "lstm") return 4;
    if (cell == "simple") return 1;
    throw UsageError("unknown rnn cell: " + cell);
  }

  void create(const std::string& name, ad::Shape shape, InitKind kind) {
    ad::Param<Real> param(name, shape);
    Rng rng(splitmix_of(init_seed_ ^ fnv1a64(name)));
    switch (kind) {
      case InitKind::zero:
        break;
      case InitKind::one:
        std::fill(param.value.begin(), param.value.end(), Real(1));
        break;
      case InitKind::embedding:
        for (auto& v : param.value) v = Real(rng.uniform(-0.05, 0.05));
        break;
      case InitKind::glorot: {
        const int fan_in = shape.size() >= 2 ? shape[0] : 1;
        const int fan_out = shape.size() >= 2 ? shape[shape.size() - 1] : shape[0];
        const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
        for (auto& v : param.value) v = Real(rng.uniform(-limit, limit));
        break;
      }
    }
    params_.emplace(name, std::move(param));
  }

  static std::uint64_t splitmix_of(std::uint64_t x) {
    return splitmix64(x);
  }

  std::uint64_t next_dropout_seed(const ForwardOptions& options) {
    return splitmix_of(options.dropout_seed ^ (0x9e3779b97f4a7c15ULL *
                                               std::uint64_t(++dropout_counter_)));
  }

  ad::NodeId activation(ad::Tape<Real>& tape, ad::NodeId x, const std::string& name) {
    if (name == "relu") return ad::relu(tape, x);
    if (name == "tanh") return ad::tanh_op(tape, x);
    if (name == "sigmoid") return ad::sigmoid(tape, x);
    throw UsageError("unknown activation: " + name);
  }

  ad::NodeId fc_stack(ad::Tape<Real>& tape, ad::NodeId x, const std::string& base,
                      const std::vector<int>& sizes, const std::string& act,
                      double dropout, const ForwardOptions& options) {
    ad::NodeId h = x;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const ad::NodeId w = tape.param(parameter(base + "fc" + std::to_string(i) + "/w"));
      const ad::NodeId b = tape.param(parameter(base + "fc" + std::to_string(i) + "/b"));
      h = activation(tape, ad::add(tape, ad::matmul(tape, h, w), b), act);
      if (dropout > 0)
        h = ad::dropout(tape, h, dropout, options.train_mode, next_dropout_seed(options));
    }
    return h;
  }

  ad::NodeId encode_feature(ad::Tape<Real>& tape, const FeatureSpec& f,
                            const Batch& batch, const ForwardOptions& options) {
    const std::string base = "enc/" + f.name + "/";
    switch (f.kind) {
      case FeatureKind::text: {
        const auto& [ids, length] = batch.text_ids.at(f.name);
        const ad::NodeId table = tape.param(parameter(base + "embedding"));
        const ad::NodeId emb =
            ad::embedding_lookup(tape, table, ids, {batch.size, length});
        if (f.codec == "word_cnn" || f.codec == "char_cnn") {
          const auto widths = f.param("filter_sizes", std::vector<int>{2, 3, 4, 5});
          std::vector<ad::NodeId> pooled;
          for (int w : widths) {
            const ad::NodeId filters =
                tape.param(parameter(base + "conv" + std::to_string(w) + "/w"));
            const ad::NodeId bias =
                tape.param(parameter(base + "conv" + std::to_string(w) + "/b"));
            const ad::NodeId conv = ad::relu(tape, ad::conv1d(tape, emb, filters, bias));
            pooled.push_back(ad::max_pool_over_time(tape, conv));
          }
          return pooled.size() == 1 ? pooled[0] : ad::concat(tape, pooled, 1);
        }
        ad::NodeId sequence = emb;
        if (f.codec == "word_crnn" || f.codec == "char_crnn") {
          const ad::NodeId filters = tape.param(parameter(base + "conv/w"));
          const ad::NodeId bias = tape.param(parameter(base + "conv/b"));
          sequence = ad::relu(tape, ad::conv1d(tape, sequence, filters, bias));
        }
        return encode_rnn(tape, f, sequence, base);
      }
      case FeatureKind::categorical: {
        const ad::NodeId table = tape.param(parameter(base + "embedding"));
        return ad::embedding_lookup(tape, table, batch.categorical_ids.at(f.name),
                                    {batch.size});
      }
      case FeatureKind::numeric: {
        const auto& values = batch.numeric_values.at(f.name);
        const ad::NodeId x = tape.input({batch.size, 1}, values);
        const ad::NodeId gamma = tape.param(parameter(base + "bn_gamma"));
        const ad::NodeId beta = tape.param(parameter(base + "bn_beta"));
        const ad::NodeId normalized = ad::batch_norm_1d(
            tape, x, gamma, beta, bn_states_.at(f.name), options.train_mode);
        const ad::NodeId placeholder = tape.param(parameter(base + "missing"));
        return ad::row_select(tape, batch.numeric_present.at(f.name), normalized,
                              placeholder);
      }
      case FeatureKind::binary: {
        return tape.input({batch.size, 1}, batch.binary_values.at(f.name));
      }
    }
    throw Error("unreachable");
  }

  ad::NodeId encode_rnn(ad::Tape<Real>& tape, const FeatureSpec& f, ad::NodeId sequence,
                        const std::string& base) {
    const int hidden = f.param("hidden_size", 256);
    const int layers = f.param("layers", 1);
    const bool bidirectional = f.param("bidirectional", false);
    const std::string cell = f.param<std::string>("cell", "gru");
    const int batch = tape.shape(sequence)[0];
    const int length = tape.shape(sequence)[1];
    std::vector<ad::NodeId> finals;
    for (int d = 0; d < (bidirectional ? 2 : 1); ++d) {
      std::vector<ad::NodeId> inputs;
      for (int t = 0; t < length; ++t)
        inputs.push_back(ad::slice_time(tape, sequence, d == 0 ? t : length - 1 - t));
      for (int l = 0; l < layers; ++l) {
        const std::string cell_base =
            base + "rnn" + std::to_string(d) + "_" + std::to_string(l) + "/";
        const ad::NodeId wx = tape.param(parameter(cell_base + "wx"));
        const ad::NodeId wh = tape.param(parameter(cell_base + "wh"));
        const ad::NodeId b = tape.param(parameter(cell_base + "b"));
        ad::NodeId h =
            tape.input({batch, hidden}, std::vector<Real>(std::size_t(batch) *
                                                          std::size_t(hidden)));
        ad::NodeId c = h;
        std::vector<ad::NodeId> next_inputs;
        for (ad::NodeId x_t : inputs) {
          if (cell == "gru") {
            h = ad::gru_step(tape, x_t, h, wx, wh, b);
          } else if (cell == "lstm") {
            const auto step = ad::lstm_step(tape, x_t, h, c, wx, wh, b);
            h = step.h;
            c = step.c;
          } else {
            h = ad::rnn_step_simple(tape, x_t, h, wx, wh, b);
          }
          next_inputs.push_back(h);
        }
        inputs = std::move(next_inputs);
      }
      finals.push_back(inputs.back());
    }
    return finals.size() == 1 ? finals[0] : ad::concat(tape, finals, 1);
  }

  ad::NodeId combine(ad::Tape<Real>& tape, Forward& fwd, const ForwardOptions& options) {
    std::vector<ad::NodeId> parts;
    for (const auto& f : config.input_features) parts.push_back(fwd.encodings.at(f.name));
    ad::NodeId combined = parts.size() == 1 ? parts[0] : ad::concat(tape, parts, 1);
    if (!config.combiner.fc_sizes.empty())
      combined = fc_stack(tape, combined, "combiner/", config.combiner.fc_sizes,
                          config.combiner.activation, config.combiner.dropout, options);
    return combined;
  }

  void decode_feature(ad::Tape<Real>& tape, const FeatureSpec& f, const Batch& batch,
                      const ForwardOptions& options, Forward& fwd) {
    ad::NodeId input = fwd.combined;
    if (!f.dependencies.empty()) {
      std::vector<ad::NodeId> parts = {fwd.combined};
      for (const auto& dep : f.dependencies)
        parts.push_back(config.dependency_uses_logits ? fwd.outputs.at(dep)
                                                      : fwd.hidden.at(dep));
      input = ad::concat(tape, parts, 1);
    }
    fwd.decoder_inputs[f.name] = input;
    const std::string base = "dec/" + f.name + "/";
    if (f.codec == "tree_path") {
      decode_tree_path_training(tape, f, batch, options, fwd, input, base);
      return;
    }
    const auto sizes = f.param("fc_sizes", std::vector<int>{512, 256});
    const std::string act = f.param<std::string>("activation", "relu");
    const double dropout = f.param("dropout", 0.35);
    const ad::NodeId hidden =
        fc_stack(tape, input, base, sizes, act, dropout, options);
    fwd.hidden[f.name] = hidden;
    const ad::NodeId w = tape.param(parameter(base + "out/w"));
    const ad::NodeId b = tape.param(parameter(base + "out/b"));
    const ad::NodeId output = ad::add(tape, ad::matmul(tape, hidden, w), b);
    fwd.outputs[f.name] = output;
    if (!options.with_losses) return;
    if (f.codec == "classifier") {
      fwd.losses[f.name] = ad::cross_entropy(tape, output, batch.class_targets.at(f.name));
    } else if (f.codec == "regressor") {
      throw UsageError("regressor outputs are not wired to a ticket field");
    } else {
      throw UsageError("logistic outputs are not wired to a ticket field");
    }
  }

  // Teacher-forced unrolling; the loss is the sum of stepwise cross
  // entropies over the batch's longest path (padded rows are ignored).
  void decode_tree_path_training(ad::Tape<Real>& tape, const FeatureSpec& f,
                                 const Batch& batch, const ForwardOptions& options,
                                 Forward& fwd, ad::NodeId input, const std::string& base) {
    const ad::NodeId init_w = tape.param(parameter(base + "init/w"));
    const ad::NodeId init_b = tape.param(parameter(base + "init/b"));
    ad::NodeId h = ad::tanh_op(tape, ad::add(tape, ad::matmul(tape, input, init_w), init_b));
    const ad::NodeId out_w = tape.param(parameter(base + "out/w"));
    const ad::NodeId out_b = tape.param(parameter(base + "out/b"));

    int max_steps = 1;
    const std::vector<std::vector<int>>* paths = nullptr;
    if (batch.has_targets) {
      paths = &batch.path_targets.at(f.name);
      for (const auto& path : *paths) max_steps = std::max(max_steps, int(path.size()));
    } else {
      max_steps = has_tree ? tree.depth() + 1 : 1;
    }

    std::vector<ad::NodeId> step_losses;
    std::vector<int> prev_ids(std::size_t(batch.size), 0);  // <eop> doubles as BOS
    for (int step = 0; step < max_steps; ++step) {
      const ad::NodeId x = sequence_step_input(tape, f, input, prev_ids);
      h = sequence_cell_step(tape, f, x, h);
      const ad::NodeId logits = ad::add(tape, ad::matmul(tape, h, out_w), out_b);
      if (batch.has_targets && options.with_losses) {
        std::vector<int> targets(std::size_t(batch.size), -1);
        bool any = false;
        for (int r = 0; r < batch.size; ++r) {
          const auto& path = (*paths)[std::size_t(r)];
          if (step < int(path.size())) {
            targets[std::size_t(r)] = path[std::size_t(step)];
            any = true;
          }
        }
        if (any) step_losses.push_back(ad::cross_entropy(tape, logits, targets));
      }
      if (step == max_steps - 1) {
        fwd.outputs[f.name] = logits;
        break;
      }
      if (batch.has_targets) {
        // Teacher forcing: ground-truth previous node feeds the next step.
        for (int r = 0; r < batch.size; ++r) {
          const auto& path = (*paths)[std::size_t(r)];
          prev_ids[std::size_t(r)] = step < int(path.size()) ? path[std::size_t(step)] : 0;
        }
      } else {
        // No targets (prediction-time hidden for dependents): greedy feed.
        const auto& logit_values = tape.value(logits);
        const int vocab = node_vocab.size();
        for (int r = 0; r < batch.size; ++r) {
          int best = 0;
          Real best_value = logit_values[std::size_t(r) * std::size_t(vocab)];
          for (int c = 1; c < vocab; ++c) {
            const Real v = logit_values[std::size_t(r) * std::size_t(vocab) + std::size_t(c)];
            if (v > best_value) {
              best_value = v;
              best = c;
            }
          }
          prev_ids[std::size_t(r)] = best;
        }
      }
    }
    fwd.hidden[f.name] = h;
    if (options.with_losses) {
      if (step_losses.empty())
        throw TrainError("tree_path: no targets available for loss");
      std::vector<std::pair<ad::NodeId, Real>> terms;
      const Real scale =
          config.normalize_sequence_loss ? Real(1.0 / double(step_losses.size())) : Real(1);
      for (ad::NodeId loss : step_losses) terms.emplace_back(loss, scale);
      fwd.losses[f.name] = ad::weighted_sum(tape, terms);
    }
  }

  std::map<std::string, ad::Param<Real>> params_;
  std::map<std::string, ad::BatchNormState<Real>> bn_states_;
  std::uint64_t init_seed_ = 0;
  int dropout_counter_ = 0;
};

}  // namespace cota::ecd

#pragma once

// Ticket schema, contact-type tree, reply-template bank, dataset splits and
// the deterministic synthetic-corpus generator.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cota/common.hpp"
#include "cota/config.hpp"

namespace cota::corpus {

struct Ticket {
  std::string id;
  std::string message;
  std::string created_at;  // ISO-8601
  std::string product_type;
  std::string user_type;
  std::string country;
  std::string city;
  std::optional<double> eta_minutes;  // present only when has_trip
  std::string trip_status;            // empty when has_trip is false
  bool has_trip = false;
};

struct LabeledTicket {
  Ticket ticket;
  std::string contact_type;    // node id in the contact-type tree
  std::string reply_template;  // template id in the bank
};

struct ContactTypeTree {
  std::vector<std::string> nodes;  // BFS order, nodes[0] is the root
  std::unordered_map<std::string, std::string> parent;  // non-root -> parent
  std::unordered_map<std::string, std::vector<std::string>> children;
  std::unordered_map<std::string, std::string> labels;

  const std::string& root() const {
    if (nodes.empty()) throw DataError("contact-type tree is empty");
    return nodes.front();
  }
  bool contains(const std::string& node) const {
    return node == root() || parent.count(node) > 0;
  }
  const std::vector<std::string>& children_of(const std::string& node) const {
    static const std::vector<std::string> none;
    auto it = children.find(node);
    return it == children.end() ? none : it->second;
  }
  // Root-to-node path, root included.
  std::vector<std::string> path_from_root(const std::string& node) const {
    std::vector<std::string> path;
    std::string current = node;
    path.push_back(current);
    while (current != root()) {
      auto it = parent.find(current);
      if (it == parent.end())
        throw DataError("tree node does not reach the root: " + node);
      current = it->second;
      path.push_back(current);
      if (path.size() > parent.size() + 2)
        throw DataError("parent links contain a cycle at: " + node);
    }
    std::reverse(path.begin(), path.end());
    return path;
  }
  int depth() const {
    int deepest = 1;
    for (const auto& node : nodes)
      deepest = std::max(deepest, int(path_from_root(node).size()));
    return deepest;
  }
  void validate() const {
    if (nodes.empty()) throw DataError("tree: no nodes");
    std::unordered_set<std::string> known(nodes.begin(), nodes.end());
    if (known.size() != nodes.size()) throw DataError("tree: duplicate node ids");
    int roots = 0;
    for (const auto& node : nodes)
      if (!parent.count(node)) ++roots;
    if (roots != 1) throw DataError("tree: expected exactly one root");
    for (const auto& [child, par] : parent)
      if (!known.count(par)) throw DataError("tree: unknown parent of " + child);
    for (const auto& node : nodes) path_from_root(node);  // acyclic + reaches root
  }
};

struct ReplyTemplateBank {
  std::map<std::string, std::string> templates;  // template id -> text
  std::map<std::string, std::set<std::string>> allowed_for;  // contact type -> ids

  void validate() const {
    for (const auto& [contact_type, ids] : allowed_for)
      for (const auto& id : ids)
        if (!templates.count(id))
          throw DataError("template bank: allowed_for references unknown template " + id);
  }
};

struct DatasetSplit {
  std::vector<LabeledTicket> train;
  std::vector<LabeledTicket> validation;
  std::vector<LabeledTicket> test;
  std::uint64_t seed = 0;
};

inline void validate_ticket(const Ticket& ticket) {
  if (trim(ticket.message).empty())
    throw DataError("ticket " + ticket.id + ": empty message");
  if (!ticket.has_trip && ticket.eta_minutes.has_value())
    throw DataError("ticket " + ticket.id + ": eta_minutes present without a trip");
  if (ticket.eta_minutes.has_value() && *ticket.eta_minutes < 0)
    throw DataError("ticket " + ticket.id + ": negative eta_minutes");
}

inline void validate_labeled(const LabeledTicket& labeled, const ContactTypeTree& tree,
                             const ReplyTemplateBank& bank) {
  validate_ticket(labeled.ticket);
  if (!tree.contains(labeled.contact_type))
    throw DataError("ticket " + labeled.ticket.id + ": unknown contact type " +
                    labeled.contact_type);
  if (!bank.templates.count(labeled.reply_template))
    throw DataError("ticket " + labeled.ticket.id + ": unknown reply template " +
                    labeled.reply_template);
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct GeneratorSpec {
  int tree_depth = 3;   // levels including the root
  int tree_fanout = 3;
  int templates_per_class = 2;
  int keywords_per_class = 3;
  int noise_vocab_size = 60;
  int ticket_count = 1000;
  double skew = 1.0;  // class-frequency power-law exponent; 0 = uniform
  double internal_label_fraction = 0.25;
  int min_message_words = 4;
  int max_message_words = 10;
  double noise_word_prob = 0.35;
  double template_marker_prob = 0.9;  // message carries the template slot marker
  double metadata_signal = 0.85;      // metadata matches its class-conditional value
  double trip_rate_floor = 0.25;      // class-conditional has_trip rates span
  double trip_rate_ceil = 0.9;        //   [floor, ceil]
  double html_noise_prob = 0.05;      // wrap a message word in a tag
  int max_message_chars = 1024;
  // Optional explicit keyword pools, one per class in class order. When
  // empty, pools are synthesized from the seed.
  std::vector<std::vector<std::string>> keyword_pools;

  void validate() const {
    if (tree_depth < 1) throw UsageError("generator.tree_depth must be >= 1");
    if (tree_fanout < 1) throw UsageError("generator.tree_fanout must be >= 1");
    if (templates_per_class < 1)
      throw UsageError("generator.templates_per_class must be >= 1");
    if (keywords_per_class < 1)
      throw UsageError("generator.keywords_per_class must be >= 1");
    if (ticket_count < 1) throw UsageError("generator.ticket_count must be >= 1");
    if (min_message_words < 1 || max_message_words < min_message_words)
      throw UsageError("generator: bad message word bounds");
    for (const auto& pool : keyword_pools)
      if (pool.empty()) throw UsageError("generator: empty keyword pool");
  }

  static GeneratorSpec from_json(const config::json& j) {
    GeneratorSpec spec;
    const std::string c = "generator";
    spec.tree_depth = config::get_or(j, "tree_depth", spec.tree_depth, c);
    spec.tree_fanout = config::get_or(j, "tree_fanout", spec.tree_fanout, c);
    spec.templates_per_class =
        config::get_or(j, "templates_per_class", spec.templates_per_class, c);
    spec.keywords_per_class =
        config::get_or(j, "keywords_per_class", spec.keywords_per_class, c);
    spec.noise_vocab_size = config::get_or(j, "noise_vocab_size", spec.noise_vocab_size, c);
    spec.ticket_count = config::get_or(j, "ticket_count", spec.ticket_count, c);
    spec.skew = config::get_or(j, "skew", spec.skew, c);
    spec.internal_label_fraction =
        config::get_or(j, "internal_label_fraction", spec.internal_label_fraction, c);
    spec.min_message_words = config::get_or(j, "min_message_words", spec.min_message_words, c);
    spec.max_message_words = config::get_or(j, "max_message_words", spec.max_message_words, c);
    spec.noise_word_prob = config::get_or(j, "noise_word_prob", spec.noise_word_prob, c);
    spec.template_marker_prob =
        config::get_or(j, "template_marker_prob", spec.template_marker_prob, c);
    spec.metadata_signal = config::get_or(j, "metadata_signal", spec.metadata_signal, c);
    spec.trip_rate_floor = config::get_or(j, "trip_rate_floor", spec.trip_rate_floor, c);
    spec.trip_rate_ceil = config::get_or(j, "trip_rate_ceil", spec.trip_rate_ceil, c);
    spec.html_noise_prob = config::get_or(j, "html_noise_prob", spec.html_noise_prob, c);
    spec.max_message_chars = config::get_or(j, "max_message_chars", spec.max_message_chars, c);
    spec.keyword_pools = config::get_or(j, "keyword_pools", spec.keyword_pools, c);
    spec.validate();
    return spec;
  }
};

struct Corpus {
  ContactTypeTree tree;
  ReplyTemplateBank bank;
  std::vector<LabeledTicket> tickets;
  std::vector<std::string> classes;  // labelable contact types, rank order
};

namespace detail {

inline std::string synth_word(Rng& rng, int syllables) {
  static const char* parts[] = {"ba", "ke", "di", "fo", "gu", "la", "me", "ni",
                                "po", "ru", "sa", "te", "vi", "wo", "zu", "cha",
                                "dro", "fli", "gra", "ple", "sto", "tri", "vra", "klo"};
  std::string word;
  for (int s = 0; s < syllables; ++s)
    word += parts[rng.uniform_int(0, 23)];
  return word;
}

inline std::string iso8601(std::int64_t unix_seconds) {
  // Days-from-civil inverse; good enough for synthetic timestamps.
  std::int64_t days = unix_seconds / 86400;
  std::int64_t rem = unix_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = yoe + era * 400;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t year = m <= 2 ? y + 1 : y;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lldT%02lld:%02lld:%02lldZ",
                (long long)year, (long long)m, (long long)d, (long long)(rem / 3600),
                (long long)((rem % 3600) / 60), (long long)(rem % 60));
  return buf;
}

}  // namespace detail

// Deterministic for a fixed (spec, seed). Class frequencies follow the
// requested power-law exactly (largest-remainder allocation with remainders
// granted in rank order), so the histogram over rank order is monotone
// non-increasing.
inline Corpus generate_corpus(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  Corpus corpus;

  // Tree: level 0 is the root, levels 1..depth-1 have `fanout` children per
  // node. Node ids encode the path.
  auto& tree = corpus.tree;
  tree.nodes.push_back("ct_root");
  tree.labels["ct_root"] = "All Issues";
  std::vector<std::string> frontier = {"ct_root"};
  for (int level = 1; level < spec.tree_depth; ++level) {
    std::vector<std::string> next;
    for (const auto& node : frontier) {
      for (int c = 0; c < spec.tree_fanout; ++c) {
        std::string id = node == "ct_root" ? "ct_" + std::to_string(c)
                                           : node + "_" + std::to_string(c);
        tree.nodes.push_back(id);
        tree.parent[id] = node;
        tree.children[node].push_back(id);
        tree.labels[id] = "Issue " + id.substr(3);
        next.push_back(id);
      }
    }
    frontier = std::move(next);
  }
  tree.validate();

  // Classes: all leaves plus a deterministic slice of internal nodes.
  std::vector<std::string> leaves, internals;
  for (const auto& node : tree.nodes) {
    if (node == tree.root()) continue;
    if (tree.children_of(node).empty()) leaves.push_back(node);
    else internals.push_back(node);
  }
  if (leaves.empty()) leaves.push_back(tree.root());  // depth 1: root only
  const int internal_classes =
      int(std::llround(spec.internal_label_fraction * double(internals.size())));
  corpus.classes = leaves;
  for (int i = 0; i < internal_classes; ++i) corpus.classes.push_back(internals[std::size_t(i)]);
  const int n_classes = int(corpus.classes.size());

  if (!spec.keyword_pools.empty() && int(spec.keyword_pools.size()) < n_classes)
    throw UsageError("generator: keyword_pools has fewer pools than classes (" +
                     std::to_string(spec.keyword_pools.size()) + " < " +
                     std::to_string(n_classes) + ")");

  // Vocabulary: per-class keyword pools, shared noise words, and one global
  // marker word per template slot.
  std::vector<std::vector<std::string>> pools;
  std::unordered_set<std::string> used;
  auto fresh_word = [&](int syllables) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::string word = detail::synth_word(rng, syllables);
      if (used.insert(word).second) return word;
    }
    throw Error("generator: vocabulary space exhausted");
  };
  for (int c = 0; c < n_classes; ++c) {
    if (!spec.keyword_pools.empty()) {
      pools.push_back(spec.keyword_pools[std::size_t(c)]);
      continue;
    }
    std::vector<std::string> pool;
    for (int k = 0; k < spec.keywords_per_class; ++k) pool.push_back(fresh_word(3));
    pools.push_back(std::move(pool));
  }
  std::vector<std::string> noise;
  for (int i = 0; i < spec.noise_vocab_size; ++i) noise.push_back(fresh_word(2));
  std::vector<std::string> markers;
  for (int s = 0; s < spec.templates_per_class; ++s) markers.push_back(fresh_word(4));

  // Reply templates: ids are (class, slot); the text echoes the class
  // keywords and the slot marker so template content carries signal.
  static const char* actions[] = {"resolve", "review", "refund", "escalate",
                                  "investigate", "close"};
  for (int c = 0; c < n_classes; ++c) {
    const std::string& contact_type = corpus.classes[std::size_t(c)];
    for (int s = 0; s < spec.templates_per_class; ++s) {
      const std::string id = "rt_" + contact_type.substr(3) + "_" + std::to_string(s);
      std::string text = "Hello, we will " + std::string(actions[s % 6]) + " your ";
      for (const auto& kw : pools[std::size_t(c)]) text += kw + " ";
      text += "issue. Ref " + markers[std::size_t(s)] + ".";
      corpus.bank.templates[id] = text;
      corpus.bank.allowed_for[contact_type].insert(id);
    }
  }
  corpus.bank.validate();

  // Class-conditional metadata preferences.
  static const char* product_types[] = {"rides", "eats", "freight"};
  static const char* user_types[] = {"driver", "rider", "eater"};
  static const char* countries[] = {"us", "br", "in", "fr"};
  static const char* cities[] = {"sf", "nyc", "sao_paulo", "mumbai",
                                 "paris", "chicago", "austin", "seattle"};
  static const char* trip_statuses[] = {"completed", "canceled", "in_progress"};
  struct ClassProfile {
    int product, user, country, city, status;
    double trip_rate, eta_mean;
  };
  std::vector<ClassProfile> profiles;
  for (int c = 0; c < n_classes; ++c) {
    ClassProfile p;
    p.product = int(rng.uniform_int(0, 2));
    p.user = int(rng.uniform_int(0, 2));
    p.country = int(rng.uniform_int(0, 3));
    p.city = int(rng.uniform_int(0, 7));
    p.status = int(rng.uniform_int(0, 2));
    p.trip_rate = rng.uniform(spec.trip_rate_floor, spec.trip_rate_ceil);
    p.eta_mean = rng.uniform(5.0, 45.0);
    profiles.push_back(p);
  }

  // Exact power-law allocation of ticket counts over rank order.
  std::vector<double> weights(static_cast<std::size_t>(n_classes), 0.0);
  double total_weight = 0;
  for (int c = 0; c < n_classes; ++c) {
    weights[std::size_t(c)] = std::pow(double(c + 1), -spec.skew);
    total_weight += weights[std::size_t(c)];
  }
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  int allocated = 0;
  for (int c = 0; c < n_classes; ++c) {
    const double exact = double(spec.ticket_count) * weights[std::size_t(c)] / total_weight;
    counts[std::size_t(c)] = int(exact);
    allocated += counts[std::size_t(c)];
  }
  // Grant leftover tickets in rank order so counts stay monotone.
  for (int c = 0; allocated < spec.ticket_count; c = (c + 1) % n_classes) {
    ++counts[std::size_t(c)];
    ++allocated;
  }

  std::vector<int> ticket_class;
  ticket_class.reserve(std::size_t(spec.ticket_count));
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < counts[std::size_t(c)]; ++i) ticket_class.push_back(c);
  rng.shuffle(ticket_class);

  const std::int64_t base_time = 1767225600;  // 2026-01-01T00:00:00Z
  for (int i = 0; i < spec.ticket_count; ++i) {
    const int c = ticket_class[std::size_t(i)];
    const ClassProfile& profile = profiles[std::size_t(c)];
    LabeledTicket labeled;
    labeled.contact_type = corpus.classes[std::size_t(c)];

    // Template slot, learnable from a marker word in the message.
    const int slot = int(rng.uniform_int(0, spec.templates_per_class - 1));
    labeled.reply_template =
        "rt_" + labeled.contact_type.substr(3) + "_" + std::to_string(slot);

    Ticket& ticket = labeled.ticket;
    char idbuf[24];
    std::snprintf(idbuf, sizeof(idbuf), "t%06d", i);
    ticket.id = idbuf;
    ticket.created_at = detail::iso8601(base_time + std::int64_t(i) * 37);

    const int n_words = int(rng.uniform_int(spec.min_message_words, spec.max_message_words));
    std::vector<std::string> words;
    words.push_back(pools[std::size_t(c)][std::size_t(
        rng.uniform_int(0, int(pools[std::size_t(c)].size()) - 1))]);
    for (int w = 1; w < n_words; ++w) {
      if (!noise.empty() && rng.uniform() < spec.noise_word_prob)
        words.push_back(noise[std::size_t(rng.uniform_int(0, int(noise.size()) - 1))]);
      else
        words.push_back(pools[std::size_t(c)][std::size_t(
            rng.uniform_int(0, int(pools[std::size_t(c)].size()) - 1))]);
    }
    if (rng.uniform() < spec.template_marker_prob)
      words.push_back(markers[std::size_t(slot)]);
    rng.shuffle(words);
    std::string message;
    for (auto& word : words) {
      if (rng.uniform() < spec.html_noise_prob) word = "<b>" + word + "</b>";
      if (!message.empty()) message += ' ';
      message += word;
    }
    if (int(message.size()) > spec.max_message_chars)
      message.resize(std::size_t(spec.max_message_chars));
    if (trim(message).empty()) message = words.front();
    ticket.message = message;

    auto pick = [&](const char* const* options, int count, int preferred) {
      if (rng.uniform() < spec.metadata_signal) return std::string(options[preferred]);
      return std::string(options[rng.uniform_int(0, count - 1)]);
    };
    ticket.product_type = pick(product_types, 3, profile.product);
    ticket.user_type = pick(user_types, 3, profile.user);
    ticket.country = pick(countries, 4, profile.country);
    ticket.city = pick(cities, 8, profile.city);
    ticket.has_trip = rng.uniform() < profile.trip_rate;
    if (ticket.has_trip) {
      ticket.trip_status = pick(trip_statuses, 3, profile.status);
      ticket.eta_minutes = std::max(0.0, profile.eta_mean + rng.normal() * 6.0);
    }
    corpus.tickets.push_back(std::move(labeled));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Dataset formats

enum class Format { delimited, json_lines };

inline Format parse_format(const std::string& name) {
  if (name == "delimited") return Format::delimited;
  if (name == "json-lines" || name == "jsonl") return Format::json_lines;
  throw UsageError("unknown dataset format: " + name);
}

namespace detail {

inline const std::vector<std::string>& columns() {
  static const std::vector<std::string> names = {
      "id",          "message",     "created_at", "product_type",
      "user_type",   "country",     "city",       "eta_minutes",
      "trip_status", "has_trip",    "contact_type", "reply_template"};
  return names;
}

inline std::string csv_quote(const std::string& field) {
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// One physical line -> fields; quoted fields may contain commas and doubled
// quotes. Embedded newlines are not part of the format (messages are
// single-line by construction).
inline std::vector<std::string> csv_split(const std::string& line, int line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"' && current.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (quoted)
    throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(current));
  return fields;
}

}  // namespace detail

inline std::string to_delimited(const std::vector<LabeledTicket>& records) {
  std::string out;
  const auto& cols = detail::columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out += cols[i];
    if (i + 1 < cols.size()) out += ',';
  }
  out += '\n';
  for (const auto& record : records) {
    const Ticket& t = record.ticket;
    out += t.id;
    out += ',';
    out += detail::csv_quote(t.message);
    out += ',';
    out += t.created_at;
    out += ',';
    out += t.product_type;
    out += ',';
    out += t.user_type;
    out += ',';
    out += t.country;
    out += ',';
    out += t.city;
    out += ',';
    if (t.eta_minutes) out += format_double(*t.eta_minutes);
    out += ',';
    out += t.trip_status;
    out += ',';
    out += t.has_trip ? "true" : "false";
    out += ',';
    out += record.contact_type;
    out += ',';
    out += record.reply_template;
    out += '\n';
  }
  return out;
}

inline config::json to_json_record(const LabeledTicket& record) {
  const Ticket& t = record.ticket;
  config::json j = {{"id", t.id},
                    {"message", t.message},
                    {"created_at", t.created_at},
                    {"product_type", t.product_type},
                    {"user_type", t.user_type},
                    {"country", t.country},
                    {"city", t.city},
                    {"trip_status", t.trip_status},
                    {"has_trip", t.has_trip},
                    {"contact_type", record.contact_type},
                    {"reply_template", record.reply_template}};
  if (t.eta_minutes) j["eta_minutes"] = *t.eta_minutes;
  return j;
}

inline std::string to_json_lines(const std::vector<LabeledTicket>& records) {
  std::string out;
  for (const auto& record : records) {
    out += to_json_record(record).dump();
    out += '\n';
  }
  return out;
}

struct LoadResult {
  std::vector<LabeledTicket> records;
  int unknown_column_warnings = 0;
};

inline LoadResult parse_dataset(const std::string& content, Format format,
                                const ContactTypeTree* tree = nullptr,
                                const ReplyTemplateBank* bank = nullptr) {
  LoadResult result;
  auto check_label = [&](const LabeledTicket& record, int line_no) {
    if (tree && !tree->contains(record.contact_type))
      throw DataError("line " + std::to_string(line_no) +
                      ": contact_type not in tree: " + record.contact_type);
    if (bank && !bank->templates.count(record.reply_template))
      throw DataError("line " + std::to_string(line_no) +
                      ": reply_template not in bank: " + record.reply_template);
  };

  const auto lines = split_string(content, '\n');
  if (format == Format::delimited) {
    if (lines.empty() || trim(lines[0]).empty())
      throw DataError("delimited dataset: missing header row");
    const auto header = detail::csv_split(lines[0], 1);
    std::unordered_map<std::string, int> position;
    for (int i = 0; i < int(header.size()); ++i) {
      if (position.count(header[std::size_t(i)]))
        throw DataError("header: duplicate column " + header[std::size_t(i)]);
      position[header[std::size_t(i)]] = i;
    }
    for (const auto& required : detail::columns())
      if (!position.count(required))
        throw DataError("header: missing required column " + required);
    const std::unordered_set<std::string> known(detail::columns().begin(),
                                                detail::columns().end());
    for (const auto& name : header)
      if (!known.count(name)) ++result.unknown_column_warnings;

    for (int line_no = 2; line_no <= int(lines.size()); ++line_no) {
      const std::string& line = lines[std::size_t(line_no) - 1];
      if (trim(line).empty()) continue;
      const auto fields = detail::csv_split(line, line_no);
      if (fields.size() != header.size())
        throw DataError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size()));
      auto field = [&](const char* name) -> const std::string& {
        return fields[std::size_t(position.at(name))];
      };
      LabeledTicket record;
      Ticket& t = record.ticket;
      t.id = field("id");
      t.message = field("message");
      t.created_at = field("created_at");
      t.product_type = field("product_type");
      t.user_type = field("user_type");
      t.country = field("country");
      t.city = field("city");
      const std::string& eta = field("eta_minutes");
      if (!eta.empty()) {
        try {
          t.eta_minutes = std::stod(eta);
        } catch (const std::exception&) {
          throw DataError("line " + std::to_string(line_no) +
                          ": malformed eta_minutes: " + eta);
        }
      }
      t.trip_status = field("trip_status");
      const std::string& trip = field("has_trip");
      if (trip == "true") t.has_trip = true;
      else if (trip == "false") t.has_trip = false;
      else
        throw DataError("line " + std::to_string(line_no) +
                        ": has_trip must be true or false, got: " + trip);
      record.contact_type = field("contact_type");
      record.reply_template = field("reply_template");
      check_label(record, line_no);
      try {
        validate_ticket(t);
      } catch (const DataError& e) {
        throw DataError("line " + std::to_string(line_no) + ": " + e.what());
      }
      result.records.push_back(std::move(record));
    }
    return result;
  }

  // JSON lines.
  std::set<std::string> unknown_keys;
  const std::unordered_set<std::string> known(detail::columns().begin(),
                                              detail::columns().end());
  for (int line_no = 1; line_no <= int(lines.size()); ++line_no) {
    const std::string& line = lines[std::size_t(line_no) - 1];
    if (trim(line).empty()) continue;
    config::json j;
    try {
      j = config::json::parse(line);
    } catch (const config::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string ctx = "line " + std::to_string(line_no);
    LabeledTicket record;
    Ticket& t = record.ticket;
    try {
      t.id = config::get_as<std::string>(j, "id", ctx);
      t.message = config::get_as<std::string>(j, "message", ctx);
      t.created_at = config::get_as<std::string>(j, "created_at", ctx);
      t.product_type = config::get_as<std::string>(j, "product_type", ctx);
      t.user_type = config::get_as<std::string>(j, "user_type", ctx);
      t.country = config::get_as<std::string>(j, "country", ctx);
      t.city = config::get_as<std::string>(j, "city", ctx);
      t.trip_status = config::get_or<std::string>(j, "trip_status", "", ctx);
      t.has_trip = config::get_as<bool>(j, "has_trip", ctx);
      if (j.contains("eta_minutes")) t.eta_minutes = j.at("eta_minutes").get<double>();
      record.contact_type = config::get_as<std::string>(j, "contact_type", ctx);
      record.reply_template = config::get_as<std::string>(j, "reply_template", ctx);
    } catch (const UsageError& e) {
      throw DataError(e.what());
    }
    for (const auto& [key, _] : j.items())
      if (!known.count(key)) unknown_keys.insert(key);
    check_label(record, line_no);
    try {
      validate_ticket(t);
    } catch (const DataError& e) {
      throw DataError(ctx + ": " + e.what());
    }
    result.records.push_back(std::move(record));
  }
  result.unknown_column_warnings = int(unknown_keys.size());
  return result;
}

inline LoadResult load_dataset(const std::string& path, Format format,
                               const ContactTypeTree* tree = nullptr,
                               const ReplyTemplateBank* bank = nullptr) {
  return parse_dataset(read_file(path), format, tree, bank);
}

inline void save_dataset(const std::vector<LabeledTicket>& records,
                         const std::string& path, Format format) {
  write_file(path, format == Format::delimited ? to_delimited(records)
                                               : to_json_lines(records));
}

// ---------------------------------------------------------------------------
// Splits

inline DatasetSplit split_dataset(const std::vector<LabeledTicket>& data,
                                  double train_fraction, double val_fraction,
                                  double test_fraction, std::uint64_t seed) {
  if (train_fraction <= 0 || val_fraction <= 0 || test_fraction <= 0)
    throw UsageError("split: fractions must be positive");
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
    throw UsageError("split: fractions must sum to 1");
  if (data.size() < 3)
    throw DataError("split: need at least 3 records to populate all splits");

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const auto n = std::int64_t(data.size());
  std::int64_t n_train = std::llround(double(n) * train_fraction);
  std::int64_t n_val = std::llround(double(n) * val_fraction);
  n_train = std::max<std::int64_t>(1, std::min(n_train, n - 2));
  n_val = std::max<std::int64_t>(1, std::min(n_val, n - n_train - 1));

  DatasetSplit split;
  split.seed = seed;
  for (std::int64_t i = 0; i < n; ++i) {
    const LabeledTicket& record = data[order[std::size_t(i)]];
    if (i < n_train) split.train.push_back(record);
    else if (i < n_train + n_val) split.validation.push_back(record);
    else split.test.push_back(record);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Tree / bank serialization (JSON files)

inline config::json tree_to_json(const ContactTypeTree& tree) {
  config::json parent = config::json::object();
  for (const auto& node : tree.nodes)
    if (auto it = tree.parent.find(node); it != tree.parent.end())
      parent[node] = it->second;
  config::json labels = config::json::object();
  for (const auto& node : tree.nodes)
    if (auto it = tree.labels.find(node); it != tree.labels.end())
      labels[node] = it->second;
  return {{"nodes", tree.nodes}, {"parent", parent}, {"labels", labels}};
}

inline ContactTypeTree tree_from_json(const config::json& j) {
  ContactTypeTree tree;
  tree.nodes = config::get_as<std::vector<std::string>>(j, "nodes", "tree");
  for (const auto& [child, par] : config::require(j, "parent", "tree").items()) {
    tree.parent[child] = par.get<std::string>();
    tree.children[par.get<std::string>()].push_back(child);
  }
  // Children in BFS node order, not JSON key order.
  for (auto& [node, kids] : tree.children) {
    std::unordered_map<std::string, int> rank;
    for (int i = 0; i < int(tree.nodes.size()); ++i) rank[tree.nodes[std::size_t(i)]] = i;
    std::sort(kids.begin(), kids.end(), [&](const auto& a, const auto& b) {
      return rank.at(a) < rank.at(b);
    });
  }
  if (j.contains("labels"))
    for (const auto& [node, label] : j.at("labels").items())
      tree.labels[node] = label.get<std::string>();
  tree.validate();
  return tree;
}

inline config::json bank_to_json(const ReplyTemplateBank& bank) {
  config::json allowed = config::json::object();
  for (const auto& [contact_type, ids] : bank.allowed_for)
    allowed[contact_type] = std::vector<std::string>(ids.begin(), ids.end());
  return {{"templates", bank.templates}, {"allowed_for", allowed}};
}

inline ReplyTemplateBank bank_from_json(const config::json& j) {
  ReplyTemplateBank bank;
  for (const auto& [id, text] : config::require(j, "templates", "bank").items())
    bank.templates[id] = text.get<std::string>();
  if (j.contains("allowed_for")) {
    for (const auto& [contact_type, ids] : j.at("allowed_for").items())
      for (const auto& id : ids)
        bank.allowed_for[contact_type].insert(id.get<std::string>());
  }
  bank.validate();
  return bank;
}

}  // namespace cota::corpus

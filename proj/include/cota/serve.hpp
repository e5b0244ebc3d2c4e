#pragma once

// The four-step serving workflow: collect features on ticket creation, call
// the model and store predictions, re-check for staleness when an agent
// opens the ticket, and log the agent's resolution for offline accuracy
// measurement. Storage is an append-only event log with snapshot support.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "cota/common.hpp"
#include "cota/config.hpp"
#include "cota/corpus.hpp"
#include "cota/suggestions.hpp"

namespace cota::serve {

using corpus::Ticket;

// Canonical feature snapshot hash: any change to a model-visible field
// changes the hash.
inline std::uint64_t feature_hash(const Ticket& ticket) {
  config::json j = {{"message", ticket.message},
                    {"created_at", ticket.created_at},
                    {"product_type", ticket.product_type},
                    {"user_type", ticket.user_type},
                    {"country", ticket.country},
                    {"city", ticket.city},
                    {"trip_status", ticket.trip_status},
                    {"has_trip", ticket.has_trip}};
  if (ticket.eta_minutes) j["eta_minutes"] = *ticket.eta_minutes;
  return fnv1a64(j.dump());
}

// Model boundary; implementations wrap a trained v1 or v2 model.
class SuggestionModel {
 public:
  virtual ~SuggestionModel() = default;
  // Per task ("contact_type", "reply_template"): ranked suggestions.
  virtual std::map<std::string, RankedSuggestions> suggest(const Ticket& ticket) = 0;
  virtual std::string version() const = 0;
};

struct StoredPrediction {
  std::string ticket_id;
  std::map<std::string, RankedSuggestions> suggestions;
  std::uint64_t feature_hash = 0;
  std::string model_version;
  bool pending = false;  // model was unavailable; retried on open
};

struct ResolutionRecord {
  std::string ticket_id;
  std::string chosen_contact_type;
  std::string chosen_reply_template;
  bool had_suggestions = false;
  bool contact_top1 = false, contact_top3 = false;
  bool reply_top1 = false, reply_top3 = false;
};

namespace detail {

inline config::json ticket_to_json(const Ticket& t) {
  config::json j = {{"id", t.id},
                    {"message", t.message},
                    {"created_at", t.created_at},
                    {"product_type", t.product_type},
                    {"user_type", t.user_type},
                    {"country", t.country},
                    {"city", t.city},
                    {"trip_status", t.trip_status},
                    {"has_trip", t.has_trip}};
  if (t.eta_minutes) j["eta_minutes"] = *t.eta_minutes;
  return j;
}

inline Ticket ticket_from_json(const config::json& j, const std::string& context) {
  Ticket t;
  t.id = config::get_as<std::string>(j, "id", context);
  t.message = config::get_as<std::string>(j, "message", context);
  t.created_at = config::get_or<std::string>(j, "created_at", "", context);
  t.product_type = config::get_or<std::string>(j, "product_type", "", context);
  t.user_type = config::get_or<std::string>(j, "user_type", "", context);
  t.country = config::get_or<std::string>(j, "country", "", context);
  t.city = config::get_or<std::string>(j, "city", "", context);
  t.trip_status = config::get_or<std::string>(j, "trip_status", "", context);
  t.has_trip = config::get_or(j, "has_trip", false, context);
  if (j.contains("eta_minutes")) t.eta_minutes = j.at("eta_minutes").get<double>();
  corpus::validate_ticket(t);
  return t;
}

inline config::json suggestions_to_json(const std::map<std::string, RankedSuggestions>& s) {
  config::json out = config::json::object();
  for (const auto& [task, ranked] : s) {
    config::json list = config::json::array();
    for (const auto& entry : ranked)
      list.push_back(config::json::array({entry.class_id, entry.score}));
    out[task] = list;
  }
  return out;
}

inline std::map<std::string, RankedSuggestions> suggestions_from_json(
    const config::json& j) {
  std::map<std::string, RankedSuggestions> out;
  for (const auto& [task, list] : j.items()) {
    RankedSuggestions ranked;
    for (const auto& pair : list)
      ranked.push_back({pair[0].get<std::string>(), pair[1].get<double>()});
    out[task] = std::move(ranked);
  }
  return out;
}

}  // namespace detail

class TicketStore {
 public:
  explicit TicketStore(std::shared_ptr<SuggestionModel> model, int top_k = 3,
                       std::string event_log_path = "")
      : model_(std::move(model)), top_k_(top_k), log_path_(std::move(event_log_path)) {}

  // Step 1 + 2: collect features, call the model, store the prediction. A
  // model failure leaves the ticket stored with a pending prediction.
  StoredPrediction on_ticket_created(const Ticket& ticket) {
    corpus::validate_ticket(ticket);
    Entry* entry;
    {
      std::unique_lock lock(map_mutex_);
      if (entries_.count(ticket.id))
        throw DataError("ticket already exists: " + ticket.id);
      entry = &entries_[ticket.id];
    }
    std::lock_guard entry_lock(entry->mutex);
    entry->ticket = ticket;
    append_event({{"event", "created"}, {"ticket", detail::ticket_to_json(ticket)}});
    entry->prediction = compute_prediction(ticket);
    append_prediction_event(*entry->prediction);
    return *entry->prediction;
  }

  // Field updates between creation and opening (message edits, trip data).
  void update_ticket(const std::string& id, const config::json& fields) {
    Entry& entry = find(id);
    std::lock_guard lock(entry.mutex);
    Ticket updated = entry.ticket;
    if (fields.contains("message")) updated.message = fields.at("message").get<std::string>();
    if (fields.contains("product_type"))
      updated.product_type = fields.at("product_type").get<std::string>();
    if (fields.contains("user_type")) updated.user_type = fields.at("user_type").get<std::string>();
    if (fields.contains("country")) updated.country = fields.at("country").get<std::string>();
    if (fields.contains("city")) updated.city = fields.at("city").get<std::string>();
    if (fields.contains("trip_status"))
      updated.trip_status = fields.at("trip_status").get<std::string>();
    if (fields.contains("has_trip")) updated.has_trip = fields.at("has_trip").get<bool>();
    if (fields.contains("eta_minutes")) {
      if (fields.at("eta_minutes").is_null()) updated.eta_minutes.reset();
      else updated.eta_minutes = fields.at("eta_minutes").get<double>();
    }
    corpus::validate_ticket(updated);
    entry.ticket = updated;
    append_event({{"event", "updated"}, {"id", id}, {"fields", fields}});
  }

  // Step 3: return stored suggestions when the feature snapshot is
  // unchanged; otherwise recompute and overwrite.
  StoredPrediction on_ticket_opened(const std::string& id) {
    Entry& entry = find(id);
    std::lock_guard lock(entry.mutex);
    const std::uint64_t current = feature_hash(entry.ticket);
    if (entry.prediction && !entry.prediction->pending &&
        entry.prediction->feature_hash == current &&
        entry.prediction->model_version == model_->version()) {
      return *entry.prediction;
    }
    entry.prediction = compute_prediction(entry.ticket);
    append_prediction_event(*entry.prediction);
    return *entry.prediction;
  }

  // Step 4: the agent resolves; record whether the choices were in the
  // delivered top-1/top-3 and append to the audit log.
  ResolutionRecord on_ticket_resolved(const std::string& id,
                                      const std::string& chosen_contact_type,
                                      const std::string& chosen_reply_template) {
    Entry& entry = find(id);
    std::lock_guard lock(entry.mutex);
    ResolutionRecord record;
    record.ticket_id = id;
    record.chosen_contact_type = chosen_contact_type;
    record.chosen_reply_template = chosen_reply_template;
    record.had_suggestions = entry.prediction.has_value() && !entry.prediction->pending;
    if (record.had_suggestions) {
      auto in_top = [](const RankedSuggestions& ranked, const std::string& chosen,
                       int k) {
        for (int i = 0; i < k && i < int(ranked.size()); ++i)
          if (ranked[std::size_t(i)].class_id == chosen) return true;
        return false;
      };
      const auto& s = entry.prediction->suggestions;
      if (auto it = s.find("contact_type"); it != s.end()) {
        record.contact_top1 = in_top(it->second, chosen_contact_type, 1);
        record.contact_top3 = in_top(it->second, chosen_contact_type, 3);
      }
      if (auto it = s.find("reply_template"); it != s.end()) {
        record.reply_top1 = in_top(it->second, chosen_reply_template, 1);
        record.reply_top3 = in_top(it->second, chosen_reply_template, 3);
      }
    }
    entry.resolutions.push_back(record);
    append_event({{"event", "resolution"},
                  {"id", id},
                  {"contact_type", chosen_contact_type},
                  {"reply_template", chosen_reply_template}});
    append_audit(record, entry);
    return record;
  }

  const Ticket& ticket(const std::string& id) {
    Entry& entry = find(id);
    std::lock_guard lock(entry.mutex);
    return entry.ticket;
  }

  std::optional<StoredPrediction> stored_prediction(const std::string& id) {
    Entry& entry = find(id);
    std::lock_guard lock(entry.mutex);
    return entry.prediction;
  }

  int model_call_count() const { return model_calls_.load(); }

  // Audit log in the prediction-dump format plus chosen-value fields; one
  // line per task per resolution. Replayable by the eval reader.
  const std::vector<std::string>& audit_log() const { return audit_lines_; }

  std::string audit_log_text() const {
    std::string out;
    for (const auto& line : audit_lines_) {
      out += line;
      out += '\n';
    }
    return out;
  }

  // --- Persistence: append-only event log + snapshots ----------------------

  const std::vector<std::string>& event_log() const { return event_lines_; }

  config::json snapshot() {
    std::unique_lock lock(map_mutex_);
    config::json tickets = config::json::array();
    for (auto& [id, entry] : entries_) {
      std::lock_guard entry_lock(entry.mutex);
      config::json item = {{"ticket", detail::ticket_to_json(entry.ticket)}};
      if (entry.prediction) {
        item["prediction"] = {
            {"ticket_id", entry.prediction->ticket_id},
            {"feature_hash", entry.prediction->feature_hash},
            {"model_version", entry.prediction->model_version},
            {"pending", entry.prediction->pending},
            {"suggestions", detail::suggestions_to_json(entry.prediction->suggestions)}};
      }
      tickets.push_back(std::move(item));
    }
    return {{"tickets", tickets}};
  }

  void restore_snapshot(const config::json& snapshot_json) {
    std::unique_lock lock(map_mutex_);
    entries_.clear();
    for (const auto& item : config::require(snapshot_json, "tickets", "snapshot")) {
      Ticket ticket = detail::ticket_from_json(item.at("ticket"), "snapshot");
      Entry& entry = entries_[ticket.id];
      entry.ticket = ticket;
      if (item.contains("prediction")) {
        const auto& p = item.at("prediction");
        StoredPrediction stored;
        stored.ticket_id = p.at("ticket_id").get<std::string>();
        stored.feature_hash = p.at("feature_hash").get<std::uint64_t>();
        stored.model_version = p.at("model_version").get<std::string>();
        stored.pending = p.at("pending").get<bool>();
        stored.suggestions = detail::suggestions_from_json(p.at("suggestions"));
        entry.prediction = std::move(stored);
      }
    }
  }

  // Rebuilds state from an event log without invoking the model; stored
  // predictions come from their logged events.
  void replay_events(const std::string& log_text) {
    for (const auto& line : split_string(log_text, '\n')) {
      if (trim(line).empty()) continue;
      const config::json event = config::parse_json(line, "event log");
      const std::string kind = config::get_as<std::string>(event, "event", "event log");
      if (kind == "created") {
        Ticket ticket = detail::ticket_from_json(event.at("ticket"), "event log");
        std::unique_lock lock(map_mutex_);
        entries_[ticket.id].ticket = ticket;
      } else if (kind == "updated") {
        const std::string id = event.at("id").get<std::string>();
        update_ticket_replay(id, event.at("fields"));
      } else if (kind == "prediction") {
        const std::string id = event.at("ticket_id").get<std::string>();
        Entry& entry = find(id);
        StoredPrediction stored;
        stored.ticket_id = id;
        stored.feature_hash = event.at("feature_hash").get<std::uint64_t>();
        stored.model_version = event.at("model_version").get<std::string>();
        stored.pending = event.at("pending").get<bool>();
        stored.suggestions = detail::suggestions_from_json(event.at("suggestions"));
        std::lock_guard entry_lock(entry.mutex);
        entry.prediction = std::move(stored);
      }
      // Resolution events only feed the audit log, which has its own file.
    }
  }

 private:
  struct Entry {
    std::mutex mutex;
    Ticket ticket;
    std::optional<StoredPrediction> prediction;
    std::vector<ResolutionRecord> resolutions;
  };

  Entry& find(const std::string& id) {
    std::shared_lock lock(map_mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) throw DataError("unknown ticket id: " + id);
    return it->second;
  }

  void update_ticket_replay(const std::string& id, const config::json& fields) {
    Entry& entry = find(id);
    std::lock_guard lock(entry.mutex);
    Ticket updated = entry.ticket;
    if (fields.contains("message")) updated.message = fields.at("message").get<std::string>();
    if (fields.contains("has_trip")) updated.has_trip = fields.at("has_trip").get<bool>();
    if (fields.contains("eta_minutes")) {
      if (fields.at("eta_minutes").is_null()) updated.eta_minutes.reset();
      else updated.eta_minutes = fields.at("eta_minutes").get<double>();
    }
    for (const char* key : {"product_type", "user_type", "country", "city", "trip_status"}) {
      if (!fields.contains(key)) continue;
      const std::string value = fields.at(key).get<std::string>();
      if (key == std::string("product_type")) updated.product_type = value;
      else if (key == std::string("user_type")) updated.user_type = value;
      else if (key == std::string("country")) updated.country = value;
      else if (key == std::string("city")) updated.city = value;
      else updated.trip_status = value;
    }
    entry.ticket = updated;
  }

  StoredPrediction compute_prediction(const Ticket& ticket) {
    StoredPrediction stored;
    stored.ticket_id = ticket.id;
    stored.feature_hash = feature_hash(ticket);
    stored.model_version = model_->version();
    try {
      ++model_calls_;
      auto suggestions = model_->suggest(ticket);
      for (auto& [task, ranked] : suggestions) sort_suggestions(ranked, top_k_);
      stored.suggestions = std::move(suggestions);
    } catch (const std::exception&) {
      stored.pending = true;  // stored without partial suggestions
      stored.suggestions.clear();
    }
    return stored;
  }

  void append_prediction_event(const StoredPrediction& stored) {
    append_event({{"event", "prediction"},
                  {"ticket_id", stored.ticket_id},
                  {"feature_hash", stored.feature_hash},
                  {"model_version", stored.model_version},
                  {"pending", stored.pending},
                  {"suggestions", detail::suggestions_to_json(stored.suggestions)}});
  }

  void append_event(const config::json& event) {
    std::lock_guard lock(log_mutex_);
    event_lines_.push_back(event.dump());
    if (!log_path_.empty()) {
      std::ofstream out(log_path_, std::ios::app);
      out << event_lines_.back() << '\n';
    }
  }

  void append_audit(const ResolutionRecord& record, const Entry& entry) {
    auto make_line = [&](const std::string& task, const std::string& chosen,
                         bool top1, bool top3) {
      config::json line = {{"ticket_id", record.ticket_id},
                           {"task", task},
                           {"chosen", chosen},
                           {"top1", top1},
                           {"top3", top3},
                           {"had_suggestions", record.had_suggestions}};
      config::json suggestions = config::json::array();
      if (entry.prediction) {
        auto it = entry.prediction->suggestions.find(task);
        if (it != entry.prediction->suggestions.end())
          for (const auto& s : it->second)
            suggestions.push_back(config::json::array({s.class_id, s.score}));
      }
      line["suggestions"] = suggestions;
      return line.dump();
    };
    std::lock_guard lock(log_mutex_);
    audit_lines_.push_back(make_line("contact_type", record.chosen_contact_type,
                                     record.contact_top1, record.contact_top3));
    audit_lines_.push_back(make_line("reply_template", record.chosen_reply_template,
                                     record.reply_top1, record.reply_top3));
  }

  std::shared_ptr<SuggestionModel> model_;
  int top_k_;
  std::string log_path_;
  std::shared_mutex map_mutex_;
  std::map<std::string, Entry> entries_;
  std::mutex log_mutex_;
  std::vector<std::string> event_lines_;
  std::vector<std::string> audit_lines_;
  std::atomic<int> model_calls_{0};
};

}  // namespace cota::serve

#pragma once

// JSON-over-HTTP wire protocol around the ticket store:
//   POST /tickets                    create a ticket (body: ticket fields)
//   POST /tickets/{id}               update fields
//   GET  /tickets/{id}/suggestions   open: stored or recomputed suggestions
//   POST /tickets/{id}/resolution    record the agent's selection

#include <httplib.h>

#include <string>

#include "cota/serve.hpp"

namespace cota::serve {

namespace detail {

inline config::json prediction_to_json(const StoredPrediction& stored) {
  return {{"ticket_id", stored.ticket_id},
          {"pending", stored.pending},
          {"model_version", stored.model_version},
          {"feature_hash", stored.feature_hash},
          {"suggestions", suggestions_to_json(stored.suggestions)}};
}

template <typename Fn>
void handle(const httplib::Request&, httplib::Response& res, Fn fn) {
  try {
    const config::json body = fn();
    res.status = 200;
    res.set_content(body.dump(), "application/json");
  } catch (const DataError& e) {
    const std::string what = e.what();
    res.status = what.rfind("unknown ticket id", 0) == 0 ? 404 : 400;
    res.set_content(config::json{{"error", what}}.dump(), "application/json");
  } catch (const UsageError& e) {
    res.status = 400;
    res.set_content(config::json{{"error", e.what()}}.dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(config::json{{"error", e.what()}}.dump(), "application/json");
  }
}

}  // namespace detail

class HttpService {
 public:
  explicit HttpService(TicketStore& store) : store_(store) { install_routes(); }

  // Binds an ephemeral port; returns it. Serve with listen_after_bind().
  int bind_any_port(const std::string& host = "127.0.0.1") {
    return server_.bind_to_any_port(host);
  }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }
  void stop() { server_.stop(); }
  bool is_running() const { return server_.is_running(); }

 private:
  void install_routes() {
    server_.Post("/tickets", [this](const httplib::Request& req, httplib::Response& res) {
      detail::handle(req, res, [&] {
        const config::json body = config::parse_json(req.body, "request body");
        const Ticket ticket = detail::ticket_from_json(body, "request body");
        return detail::prediction_to_json(store_.on_ticket_created(ticket));
      });
    });
    server_.Get(R"(/tickets/([^/]+)/suggestions)",
                [this](const httplib::Request& req, httplib::Response& res) {
      detail::handle(req, res, [&] {
        return detail::prediction_to_json(store_.on_ticket_opened(req.matches[1]));
      });
    });
    server_.Post(R"(/tickets/([^/]+)/resolution)",
                 [this](const httplib::Request& req, httplib::Response& res) {
      detail::handle(req, res, [&] {
        const config::json body = config::parse_json(req.body, "request body");
        const auto record = store_.on_ticket_resolved(
            req.matches[1],
            config::get_or<std::string>(body, "contact_type", "", "resolution"),
            config::get_or<std::string>(body, "reply_template", "", "resolution"));
        return config::json{{"ticket_id", record.ticket_id},
                            {"had_suggestions", record.had_suggestions},
                            {"contact_top1", record.contact_top1},
                            {"contact_top3", record.contact_top3},
                            {"reply_top1", record.reply_top1},
                            {"reply_top3", record.reply_top3}};
      });
    });
    server_.Post(R"(/tickets/([^/]+))",
                 [this](const httplib::Request& req, httplib::Response& res) {
      detail::handle(req, res, [&] {
        const config::json body = config::parse_json(req.body, "request body");
        store_.update_ticket(req.matches[1], body);
        return config::json{{"ok", true}};
      });
    });
  }

  TicketStore& store_;
  httplib::Server server_;
};

}  // namespace cota::serve

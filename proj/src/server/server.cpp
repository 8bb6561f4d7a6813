#include "ipnmt/server/server.hpp"

#include <httplib.h>

#include "ipnmt/data/corpus.hpp"
#include "ipnmt/errors.hpp"

namespace ipnmt::server {

using nlohmann::json;
using session::FeedbackRule;
using session::Session;

namespace {

struct ParsedRules {
  std::vector<FeedbackRule> rules;
  std::vector<std::size_t> origin;  // index in the request of each parsed rule
  std::vector<session::RuleDiagnostic> diagnostics;
};

json diagnostics_json(const std::vector<session::RuleDiagnostic>& diagnostics) {
  json out = json::array();
  for (const auto& d : diagnostics) {
    out.push_back({{"index", d.index}, {"position", d.position}, {"message", d.message}});
  }
  return out;
}

// Structural problems of single rules become diagnostics; only a body that
// is not an object with a `rules` array is malformed.
ParsedRules parse_rules(const json& list, const Session& s, const model::Vocabulary& target) {
  ParsedRules out;
  const auto& shown = s.current().tokens;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const json& item = list[i];
    auto fail = [&](std::size_t pos, std::string msg) {
      out.diagnostics.push_back({i, pos, std::move(msg)});
    };
    if (!item.is_object()) {
      fail(0, "rule must be an object");
      continue;
    }
    const auto pos_it = item.find("position");
    if (pos_it == item.end() || !pos_it->is_number_integer() || pos_it->get<long long>() < 1) {
      fail(0, "position must be a positive integer");
      continue;
    }
    const auto position = pos_it->get<std::size_t>();
    const auto kind_it = item.find("kind");
    if (kind_it == item.end() || !kind_it->is_string()) {
      fail(position, "kind must be one of keep, delete, substitute");
      continue;
    }
    FeedbackRule rule;
    rule.position = position;
    try {
      rule.kind = feedback::parse_kind(kind_it->get<std::string>());
    } catch (const RuleError&) {
      fail(position, "kind must be one of keep, delete, substitute");
      continue;
    }
    const auto token_it = item.find("token");
    const bool has_token = token_it != item.end() && !token_it->is_null();
    if (has_token && !token_it->is_string()) {
      fail(position, "token must be a string");
      continue;
    }
    if (has_token) {
      const auto id = target.find(token_it->get<std::string>());
      if (!id) {
        fail(position, "token '" + token_it->get<std::string>() + "' is not in the vocabulary");
        continue;
      }
      rule.token = *id;
    } else if (rule.kind == feedback::FeedbackKind::Substitute) {
      fail(position, "substitute requires a token");
      continue;
    } else if (position <= shown.size()) {
      rule.token = shown[position - 1];
    }
    out.rules.push_back(rule);
    out.origin.push_back(i);
  }
  return out;
}

Response not_found(const std::string& id) { return {404, error_body("no session " + id), {}}; }

Response conflict(const Session& s) {
  return {409, error_body("session " + s.id() + " is " + std::string(to_string(s.status()))),
          {}};
}

json rule_counts_json(const session::RuleCounts& c) {
  return {{"keep", c.keep}, {"delete", c.remove}, {"substitute", c.substitute}};
}

}  // namespace

json error_body(std::string_view message) { return {{"error", std::string(message)}}; }

SessionService::SessionService(model::ModelBundle& bundle, ServiceOptions options)
    : bundle_(bundle), options_(std::move(options)) {
  if (options_.log_path) log_ = std::make_unique<session::ProtocolLog>(*options_.log_path);
}

SessionService::~SessionService() { shutdown(); }

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::lock_guard lock(registry_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void SessionService::log(const json& record) {
  if (log_) log_->append(record);
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(registry_mutex_);
  return sessions_.size();
}

Response SessionService::create_session(const std::string& body) {
  const json request = json::parse(body, nullptr, false);
  if (request.is_discarded() || !request.is_object() || !request.contains("source")) {
    return {400, error_body("expected a JSON object with a source field"), {}};
  }
  const json& src = request["source"];
  std::vector<std::string> words;
  if (src.is_string()) {
    words = data::split_tokens(src.get<std::string>());
  } else if (src.is_array()) {
    for (const auto& w : src) {
      if (!w.is_string()) return {400, error_body("source tokens must be strings"), {}};
      words.push_back(w.get<std::string>());
    }
  } else {
    return {400, error_body("source must be a string or an array of strings"), {}};
  }
  if (words.empty()) return {422, error_body("source is empty"), {}};
  const std::size_t limit = bundle_.network.config().max_length;
  if (words.size() > limit) {
    return {422,
            error_body("source has " + std::to_string(words.size()) +
                       " tokens, the limit is " + std::to_string(limit)),
            {}};
  }

  std::uint64_t number;
  {
    std::lock_guard lock(registry_mutex_);
    number = next_id_++;
  }
  const std::string id = "s" + std::to_string(number);
  auto entry = std::make_shared<Entry>();
  entry->session.emplace(Session::start(access(), id, bundle_.source_vocab.encode(words),
                                        options_.session, options_.seed * 1000003 + number));
  const Session& s = *entry->session;
  json partial = session::partial_json(s.current(), bundle_.target_vocab, s.round());
  log({{"event", "start"},
       {"session_id", id},
       {"source", bundle_.source_vocab.decode(s.source())},
       {"partial", partial}});
  {
    std::lock_guard lock(registry_mutex_);
    sessions_.emplace(id, entry);
  }
  return {201, {{"session_id", id}, {"partial", std::move(partial)}}, {}};
}

Response SessionService::submit_feedback(const std::string& id, const std::string& body) {
  const json request = json::parse(body, nullptr, false);
  if (request.is_discarded() || !request.is_object() || !request.contains("rules") ||
      !request["rules"].is_array()) {
    return {400, error_body("expected a JSON object with a rules array"), {}};
  }
  auto entry = find(id);
  if (!entry) return not_found(id);
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  if (s.status() != session::Status::Active) return conflict(s);

  ParsedRules parsed = parse_rules(request["rules"], s, bundle_.target_vocab);
  for (auto d : s.validate(parsed.rules, bundle_.target_vocab.size())) {
    d.index = parsed.origin[d.index];
    parsed.diagnostics.push_back(std::move(d));
  }
  if (!parsed.diagnostics.empty()) {
    std::sort(parsed.diagnostics.begin(), parsed.diagnostics.end(),
              [](const auto& a, const auto& b) { return a.index < b.index; });
    json out = error_body("feedback rejected");
    out["diagnostics"] = diagnostics_json(parsed.diagnostics);
    return {422, std::move(out), {}};
  }
  try {
    s.submit(access(), parsed.rules);
  } catch (const session::FeedbackRejected& e) {
    json out = error_body("feedback rejected");
    out["diagnostics"] = diagnostics_json(e.diagnostics());
    return {422, std::move(out), {}};
  }
  log(session::round_log_json(s, s.history().back(), bundle_.target_vocab));
  return {200,
          {{"session_id", s.id()},
           {"status", std::string(to_string(s.status()))},
           {"round", s.round()},
           {"partial", session::partial_json(s.current(), bundle_.target_vocab, s.round())}},
          {}};
}

Response SessionService::accept(const std::string& id) {
  auto entry = find(id);
  if (!entry) return not_found(id);
  std::lock_guard lock(entry->mutex);
  Session& s = *entry->session;
  if (s.status() != session::Status::Active) return conflict(s);
  const TokenIds translation = s.accept();
  log(session::round_log_json(s, s.history().back(), bundle_.target_vocab));
  if (log_) log_->flush();
  const auto words = bundle_.target_vocab.decode(translation);
  std::string text;
  for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
  return {200,
          {{"session_id", s.id()},
           {"translation", words},
           {"text", text},
           {"rounds", s.history().size()},
           {"rule_counts", rule_counts_json(session::count_rules(s))}},
          {}};
}

Response SessionService::get_session(const std::string& id, const std::string& if_none_match) {
  auto entry = find(id);
  if (!entry) return not_found(id);
  std::lock_guard lock(entry->mutex);
  const Session& s = *entry->session;
  const std::string etag = "\"" + s.id() + "-" + std::to_string(s.version()) + "\"";
  if (!if_none_match.empty() && if_none_match == etag) return {304, nullptr, etag};
  return {200, session::session_json(s, bundle_.source_vocab, bundle_.target_vocab), etag};
}

Response SessionService::health() const {
  const auto& c = bundle_.network.config();
  return {200,
          {{"status", "ok"},
           {"sessions", session_count()},
           {"model",
            {{"source_vocab_size", c.source_vocab_size},
             {"target_vocab_size", c.target_vocab_size},
             {"parameters", bundle_.network.parameter_count()},
             {"epsilon", c.epsilon},
             {"delta", c.delta},
             {"beam_size", c.beam_size},
             {"max_length", c.max_length}}}},
          {}};
}

void SessionService::shutdown() {
  if (shut_down_.exchange(true)) return;
  std::map<std::string, std::shared_ptr<Entry>> snapshot;
  {
    std::lock_guard lock(registry_mutex_);
    snapshot = sessions_;
  }
  for (auto& [id, entry] : snapshot) {
    std::lock_guard lock(entry->mutex);
    const Session& s = *entry->session;
    if (s.status() != session::Status::Active) continue;
    log({{"event", "shutdown"},
         {"session_id", id},
         {"round", s.round()},
         {"partial", session::partial_json(s.current(), bundle_.target_vocab, s.round())},
         {"constraints", session::constraints_json(s.rules(), bundle_.target_vocab)}});
  }
  if (log_) log_->flush();
}

HttpServer::HttpServer(SessionService& service)
    : service_(service), http_(std::make_unique<httplib::Server>()) {
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    if (!r.etag.empty()) res.set_header("ETag", r.etag);
    if (r.status != 304) res.set_content(r.body.dump(), "application/json");
  };
  http_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.health());
  });
  http_->Post("/api/sessions",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, service_.create_session(req.body));
              });
  http_->Post(R"(/api/sessions/([^/]+)/feedback)",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, service_.submit_feedback(req.matches[1], req.body));
              });
  http_->Post(R"(/api/sessions/([^/]+)/accept)",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, service_.accept(req.matches[1]));
              });
  http_->Get(R"(/api/sessions/([^/]+))",
             [this, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, service_.get_session(req.matches[1],
                                               req.get_header_value("If-None-Match")));
             });
  http_->set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          msg = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(error_body(msg).dump(), "application/json");
      });
  http_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(error_body(httplib::status_message(res.status)).dump(),
                      "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    port_ = http_->bind_to_any_port(host);
  } else {
    port_ = http_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ < 0) {
    throw InputError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port_;
}

void HttpServer::run() { http_->listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { run(); });
  http_->wait_until_ready();
}

void HttpServer::stop() {
  if (http_->is_running()) http_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ipnmt::server

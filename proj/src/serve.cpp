#include "inferqa/serve.hpp"

#include "httplib.h"
#include "inferqa/json_io.hpp"

namespace inferqa {

namespace {

std::string error_body(const std::string& message) { return json{{"error", message}}.dump(); }

}  // namespace

VerificationServer::VerificationServer(Corpus corpus, std::filesystem::path decision_log,
                                       ServeOptions options)
    : corpus_(std::move(corpus)),
      log_(std::move(decision_log)),
      options_(std::move(options)),
      server_(std::make_unique<httplib::Server>()) {
  corpus_.sort();
  for (auto& task : export_verification(corpus_, options_.splits)) {
    auto id = task.question_id;
    tasks_.emplace(std::move(id), std::move(task));
  }
  install_routes();
}

VerificationServer::~VerificationServer() { stop(); }

bool VerificationServer::authorized(const std::string& header) const {
  if (options_.token.empty()) return true;
  return header == "Bearer " + options_.token;
}

VerificationServer::Response VerificationServer::list_tasks() const {
  auto decisions = log_.folded();
  json out = json::array();
  for (const auto& [id, task] : tasks_) {
    VerificationTask t = task;
    auto it = decisions.find(id);
    if (it != decisions.end()) t.decisions = it->second;
    out.push_back(json{{"question_id", id},
                       {"question", t.question},
                       {"candidates", t.candidates.size()},
                       {"decided", t.fully_decided()},
                       {"version", t.version}});
  }
  return {200, out.dump()};
}

VerificationServer::Response VerificationServer::get_task(const std::string& question_id) const {
  auto it = tasks_.find(question_id);
  if (it == tasks_.end()) return {404, error_body("unknown task '" + question_id + "'")};
  VerificationTask t = it->second;
  auto decisions = log_.folded();
  auto dit = decisions.find(question_id);
  if (dit != decisions.end()) t.decisions = dit->second;
  return {200, task_to_json(t)};
}

VerificationServer::Response VerificationServer::post_decisions(const std::string& question_id,
                                                                const std::string& body) {
  auto it = tasks_.find(question_id);
  if (it == tasks_.end()) return {404, error_body("unknown task '" + question_id + "'")};
  const VerificationTask& task = it->second;
  json j;
  try {
    j = json::parse(body);
  } catch (const std::exception& e) {
    return {400, error_body(std::string("malformed JSON: ") + e.what())};
  }
  if (!j.is_object() || !j.contains("version") || !j.contains("decisions") ||
      !j["decisions"].is_array() || !j["version"].is_string()) {
    return {400, error_body("expected {version, annotator, decisions}")};
  }
  if (j["version"].get<std::string>() != task.version) {
    return {409, json{{"error", "task changed since it was fetched"},
                      {"version", task.version}}.dump()};
  }
  std::string annotator = j.value("annotator", std::string());
  std::map<std::string, bool> decided;
  std::set<std::string> known;
  for (const auto& c : task.candidates) known.insert(c.answer);
  for (const auto& d : j["decisions"]) {
    if (!d.is_object() || !d.contains("answer") || !d["answer"].is_string() ||
        !d.contains("accepted") || !d["accepted"].is_boolean()) {
      return {400, error_body("each decision needs a string answer and a boolean accepted")};
    }
    auto answer = d["answer"].get<std::string>();
    if (known.count(answer) == 0) return {422, error_body("unknown answer '" + answer + "'")};
    decided[answer] = d["accepted"].get<bool>();
  }
  if (decided.size() != known.size()) {
    return {422, error_body("decisions must cover every candidate answer")};
  }
  std::vector<DecisionRecord> records;
  for (const auto& [answer, accepted] : decided) {
    records.push_back({question_id, answer, accepted, annotator, task.version});
  }
  {
    std::lock_guard lock(write_mutex_);
    log_.append(records);
  }
  return {200, json{{"ok", true}, {"recorded", records.size()}}.dump()};
}

void VerificationServer::install_routes() {
  auto& s = *server_;
  auto reply = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  auto guard = [this, reply](const httplib::Request& req, httplib::Response& res) {
    if (authorized(req.get_header_value("Authorization"))) return true;
    reply(res, {401, error_body("missing or invalid bearer token")});
    return false;
  };
  s.Get("/api/tasks", [=, this](const httplib::Request& req, httplib::Response& res) {
    if (guard(req, res)) reply(res, list_tasks());
  });
  s.Get(R"(/api/tasks/([^/]+))", [=, this](const httplib::Request& req, httplib::Response& res) {
    if (guard(req, res)) reply(res, get_task(req.matches[1].str()));
  });
  s.Post(R"(/api/tasks/([^/]+)/decisions)",
         [=, this](const httplib::Request& req, httplib::Response& res) {
           if (guard(req, res)) reply(res, post_decisions(req.matches[1].str(), req.body));
         });
  if (options_.static_dir) s.set_mount_point("/", options_.static_dir->string());
}

bool VerificationServer::listen(const std::string& host, int port) {
  return server_->listen(host, port);
}

int VerificationServer::bind_to_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool VerificationServer::listen_after_bind() { return server_->listen_after_bind(); }

void VerificationServer::stop() {
  if (server_) server_->stop();
}

void VerificationServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace inferqa

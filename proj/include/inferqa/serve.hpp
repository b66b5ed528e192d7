#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "inferqa/corpus.hpp"
#include "inferqa/labeler.hpp"

namespace httplib {
class Server;
}

namespace inferqa {

struct ServeOptions {
  /// Required as "Authorization: Bearer <token>" on every /api request when
  /// non-empty.
  std::string token;
  /// Served at "/" when set (the verification UI build).
  std::optional<std::filesystem::path> static_dir;
  std::set<Split> splits{Split::dev, Split::test};
};

/// HTTP JSON API over the verification tasks of one corpus:
///   GET  /api/tasks                       task summaries
///   GET  /api/tasks/{question_id}         one task with its current decisions
///   POST /api/tasks/{question_id}/decisions
///        {"version", "annotator", "decisions": [{"answer", "accepted"}]}
/// A stale version answers 409, decisions that do not cover every candidate
/// or name an unknown answer answer 422. Accepted posts are appended to the
/// decision log; writes are serialized.
class VerificationServer {
 public:
  VerificationServer(Corpus corpus, std::filesystem::path decision_log, ServeOptions options = {});
  ~VerificationServer();
  VerificationServer(const VerificationServer&) = delete;
  VerificationServer& operator=(const VerificationServer&) = delete;

  /// Binds and blocks until stop().
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Response {
    int status = 200;
    std::string body;
  };
  Response list_tasks() const;
  Response get_task(const std::string& question_id) const;
  Response post_decisions(const std::string& question_id, const std::string& body);
  bool authorized(const std::string& header) const;
  void install_routes();

  Corpus corpus_;
  std::map<std::string, VerificationTask> tasks_;
  DecisionLog log_;
  ServeOptions options_;
  std::mutex write_mutex_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace inferqa

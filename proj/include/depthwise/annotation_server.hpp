#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "depthwise/annotation.hpp"

namespace httplib {
class Server;
}

namespace depthwise {

struct AnnotationServiceOptions {
  std::filesystem::path batches_dir;  // every *.json file is a TaskBatch
  std::filesystem::path log_path;
  std::optional<std::filesystem::path> static_dir;  // mounted at "/"
};

/// JSON HTTP API over task batches and the annotation log.
///
///   GET  /batches                     batch ids, kinds and sizes
///   GET  /batches/{id}/next?rater=R   next unanswered task for R, or {"done": true}
///   POST /annotations                 submit one annotation
///   GET  /batches/{id}/agreement      agreement summary
///
/// Errors map to 400 (validation), 403 (authorization) and 404 (unknown batch or task).
class AnnotationService {
public:
  explicit AnnotationService(AnnotationServiceOptions options);
  ~AnnotationService();

  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Binds `host:port` (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port. Throws ConfigurationError when binding fails.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void run(const std::string& host, int port);
  void stop();

  const AnnotationStore& store() const { return store_; }
  const std::map<std::string, TaskBatch>& batches() const { return batches_; }

private:
  void install_routes();

  AnnotationServiceOptions options_;
  std::map<std::string, TaskBatch> batches_;
  AnnotationStore store_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace depthwise

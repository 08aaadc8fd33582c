#include "depthwise/annotation_server.hpp"

#include <httplib.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace depthwise {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

std::map<std::string, TaskBatch> load_batches(const std::filesystem::path& dir) {
  std::map<std::string, TaskBatch> out;
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigurationError(fmt::format("annotation batch directory {} does not exist", dir.string()));
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto batch = TaskBatch::load(f);
    auto id = batch.batch_id;
    if (!out.emplace(id, std::move(batch)).second) {
      throw DataError(fmt::format("batch id '{}' appears in more than one file", id));
    }
  }
  return out;
}

}  // namespace

AnnotationService::AnnotationService(AnnotationServiceOptions options)
    : options_(std::move(options)),
      batches_(load_batches(options_.batches_dir)),
      store_(options_.log_path),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

AnnotationService::~AnnotationService() { stop(); }

void AnnotationService::install_routes() {
  auto& srv = *server_;

  srv.Get("/batches", [this](const httplib::Request&, httplib::Response& res) {
    ordered_json out = ordered_json::array();
    for (const auto& [id, b] : batches_) {
      out.push_back({{"batch_id", id}, {"kind", std::string(to_string(b.kind))}, {"items", b.items.size()},
                     {"raters", b.raters}});
    }
    send_json(res, 200, out);
  });

  srv.Get(R"(/batches/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    auto it = batches_.find(req.matches[1]);
    if (it == batches_.end()) return send_error(res, 404, fmt::format("unknown batch '{}'", req.matches[1].str()));
    const auto rater = req.get_param_value("rater");
    if (rater.empty()) return send_error(res, 400, "missing 'rater' query parameter");
    try {
      const TaskItem* item = next_task(it->second, store_, rater);
      if (!item) return send_json(res, 200, {{"done", true}});
      const auto& b = it->second;
      std::size_t assigned = 0;
      std::size_t answered = 0;
      for (const auto& t : b.items) {
        if (std::find(t.raters.begin(), t.raters.end(), rater) == t.raters.end()) continue;
        ++assigned;
        if (store_.get(b.batch_id, t.task_id, rater)) ++answered;
      }
      ordered_json out;
      out["done"] = false;
      out["batch_id"] = b.batch_id;
      out["task_id"] = item->task_id;
      out["kind"] = std::string(to_string(b.kind));
      out["labels"] = label_set(b.kind);
      out["payload"] = item->payload;
      out["progress"] = {{"answered", answered}, {"assigned", assigned}};
      send_json(res, 200, out);
    } catch (const AuthorizationError& e) {
      send_error(res, 403, e.what());
    }
  });

  srv.Post("/annotations", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = json::parse(req.body);
      auto annotation = Annotation::from_json(body);
      auto it = batches_.find(annotation.batch_id);
      if (it == batches_.end()) return send_error(res, 404, fmt::format("unknown batch '{}'", annotation.batch_id));
      annotation.timestamp.clear();
      const auto stored = store_.submit(it->second, std::move(annotation));
      send_json(res, 200, stored.to_json());
    } catch (const json::parse_error& e) {
      send_error(res, 400, fmt::format("request body is not JSON: {}", e.what()));
    } catch (const ValidationError& e) {
      send_error(res, 400, e.what());
    } catch (const AuthorizationError& e) {
      send_error(res, 403, e.what());
    } catch (const LookupError& e) {
      send_error(res, 404, e.what());
    }
  });

  srv.Get(R"(/batches/([^/]+)/agreement)", [this](const httplib::Request& req, httplib::Response& res) {
    auto it = batches_.find(req.matches[1]);
    if (it == batches_.end()) return send_error(res, 404, fmt::format("unknown batch '{}'", req.matches[1].str()));
    send_json(res, 200, agreement_summary(it->second, store_));
  });

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      spdlog::error("annotation service: {}", e.what());
      send_error(res, 500, e.what());
    } catch (...) {
      send_error(res, 500, "unknown error");
    }
  });

  if (options_.static_dir) {
    if (!srv.set_mount_point("/", options_.static_dir->string())) {
      throw ConfigurationError(fmt::format("static directory {} cannot be mounted", options_.static_dir->string()));
    }
  }
}

int AnnotationService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
    if (bound < 0) throw ConfigurationError(fmt::format("cannot bind {}", host));
  } else if (!server_->bind_to_port(host, port)) {
    throw ConfigurationError(fmt::format("cannot bind {}:{}", host, port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("annotation service on http://{}:{} with {} batches", host, bound, batches_.size());
  return bound;
}

void AnnotationService::run(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) throw ConfigurationError(fmt::format("cannot bind {}:{}", host, port));
  spdlog::info("annotation service on http://{}:{} with {} batches", host, port, batches_.size());
  server_->listen_after_bind();
}

void AnnotationService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace depthwise

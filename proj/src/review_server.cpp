#include "labelfuse/review_server.hpp"

#include <stdexcept>

#include "httplib.h"
#include "labelfuse/error.hpp"
#include "labelfuse/raster.hpp"

namespace labelfuse {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& msg) {
  send_json(res, status, {{"error", kind}, {"message", msg}});
}

json progress_json(const Progress& p) {
  return {{"resolved", p.resolved}, {"pending", p.total - p.resolved}, {"total", p.total}};
}

template <typename Handler>
auto guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not-found", e.what());
    } catch (const ConflictError& e) {
      send_error(res, 409, "conflict", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "validation", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "validation", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

int margin_param(const httplib::Request& req) {
  if (!req.has_param("margin")) return 0;
  try {
    return std::stoi(req.get_param_value("margin"));
  } catch (const std::exception&) {
    throw ValidationError("margin must be an integer");
  }
}

}  // namespace

ReviewServer::ReviewServer(TieQueue& queue, ServerOptions options)
    : queue_(queue), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ReviewServer::~ReviewServer() { stop(); }

void ReviewServer::install_routes() {
  auto& svr = *server_;

  svr.Get("/api/ties", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto status =
                tie_status_from_string(req.has_param("status") ? req.get_param_value("status") : "");
            json ties = json::array();
            for (const auto& t : queue_.list(status)) ties.push_back(tie_to_json(t));
            send_json(res, 200,
                      {{"ties", ties},
                       {"progress", progress_json(queue_.progress())},
                       {"vocabulary", queue_.vocabulary()}});
          }));

  svr.Get(R"(/api/ties/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, tie_to_json(queue_.get(req.matches[1])));
          }));

  svr.Get(R"(/api/ties/([^/]+)/crop\.json)",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto c = queue_.crop(req.matches[1], margin_param(req), options_.image_dir);
            send_json(res, 200, crop_overlay_json(c));
          }));

  svr.Get(R"(/api/ties/([^/]+)/crop)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const int margin = margin_param(req);
            const auto c = queue_.crop(id, margin, options_.image_dir);
            if (!c.image) {
              res.set_header("X-Crop-Status", "no-image");
              send_json(res, 200, {{"status", "no-image"}, {"overlay", crop_overlay_json(c)}});
              return;
            }
            res.set_header("X-Crop-Status", "ok");
            res.set_header("X-Overlay-Metadata",
                           "/api/ties/" + id + "/crop.json?margin=" + std::to_string(margin));
            res.status = 200;
            res.set_content(encode_pgm(*c.image), "image/x-portable-graymap");
          }));

  svr.Post(R"(/api/ties/([^/]+)/decision)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const json body = json::parse(req.body);
             if (!body.contains("class") || !body["class"].is_string()) {
               throw ValidationError("body needs a string 'class'");
             }
             const auto resolver = body.value("resolver", std::string("expert"));
             send_json(res, 200,
                       tie_to_json(queue_.post_decision(req.matches[1], body["class"].get<std::string>(),
                                                        resolver)));
           }));

  svr.Get("/api/progress", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, progress_json(queue_.progress()));
          }));

  if (!options_.static_dir.empty()) svr.set_mount_point("/", options_.static_dir.string());
}

int ReviewServer::start() {
  int port = options_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(options_.host);
  } else if (!server_->bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ReviewServer::run() {
  if (!server_->listen(options_.host, options_.port)) {
    throw std::runtime_error("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
}

void ReviewServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace labelfuse

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "labelfuse/review.hpp"

namespace httplib {
class Server;
}

namespace labelfuse {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path image_dir;   // <image_id>.pgm rasters for crops
  std::filesystem::path static_dir;  // review UI assets, served at /
};

/// JSON-over-HTTP front of a TieQueue.
///
///   GET  /api/ties?status=pending|resolved|all
///   GET  /api/ties/{id}
///   GET  /api/ties/{id}/crop?margin=N       PGM bytes; X-Overlay-Metadata
///                                           names the sidecar below
///   GET  /api/ties/{id}/crop.json?margin=N  crop rectangle + local boxes
///   POST /api/ties/{id}/decision            {"class": ..., "resolver": ...}
///   GET  /api/progress
///
/// Errors come back as {"error": kind, "message": text} with 400 for
/// validation, 404 for unknown ties and 409 for conflicting decisions. A
/// crop without a raster answers 200 with {"status": "no-image", ...}.
class ReviewServer {
 public:
  ReviewServer(TieQueue& queue, ServerOptions options);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();

 private:
  void install_routes();

  TieQueue& queue_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace labelfuse

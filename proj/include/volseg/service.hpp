#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "volseg/metrics.hpp"
#include "volseg/segmenter_factory.hpp"
#include "volseg/windowing.hpp"

namespace volseg {

inline constexpr const char* kSessionDirEnv = "VOLSEG_SESSION_DIR";

struct ServiceOptions {
  std::filesystem::path storage_dir;  // empty: sessions live in memory only
  size_t max_upload_bytes = size_t{1} << 30;
  WindowConfig window;  // default for sessions that do not send one
  int window_workers = 1;
  double lo_pct = 0.05;
  double hi_pct = 99.95;
  double nsd_tolerance_mm = kDefaultNsdToleranceMm;
  int http_threads = 8;
};

/// Storage directory from VOLSEG_SESSION_DIR, or empty.
std::filesystem::path session_dir_from_env();

/// Session REST API.
///
///   GET    /health
///   GET    /sessions                          ids
///   POST   /sessions                          201 {"id":...}
///   GET    /sessions/{id}                     metadata and Dice history
///   DELETE /sessions/{id}                     204
///   POST   /sessions/{id}/clicks              {"pos":[x,y,z],"cls":"tumor"}
///   DELETE /sessions/{id}/clicks/last
///   POST   /sessions/{id}/predict
///   GET    /sessions/{id}/slice?axis=z&index=k
///
/// Sessions persist as one directory each under storage_dir and are
/// reloaded on construction.
class Service {
 public:
  explicit Service(ServiceOptions opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds without serving. Port 0 picks a free port; returns the port.
  int bind(const std::string& host, int port);
  /// Serves on the bound socket until stop().
  void run();
  void stop();
  /// Blocks until run() is accepting connections.
  void wait_until_ready() const;

  size_t session_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace volseg

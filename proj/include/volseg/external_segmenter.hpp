#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <vector>

#include "volseg/segmenter.hpp"

namespace volseg {

struct ExternalOptions {
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 1;
};

/// Moves one encoded request to the backend and returns the matching
/// encoded response line.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string exchange(const std::string& id, const std::string& request_line,
                               std::chrono::milliseconds timeout) = 0;
  virtual std::string describe() const = 0;
};

/// Child process speaking line-delimited JSON on stdin/stdout. Several
/// requests may be in flight; responses are routed by id in whatever order
/// the child emits them.
std::unique_ptr<Transport> make_process_transport(const std::vector<std::string>& argv);

/// HTTP POST of the request JSON; the response body is the response JSON.
/// `url` is "http://host:port[/path]", the path defaulting to /predict.
std::unique_ptr<Transport> make_http_transport(const std::string& url);

/// Forwards windows to a trained model outside this process. Timeouts,
/// malformed responses and id mismatches surface as errors naming the
/// request id.
class ExternalSegmenter final : public Segmenter {
 public:
  ExternalSegmenter(std::unique_ptr<Transport> transport, ExternalOptions opts = {});
  ~ExternalSegmenter() override;

  PatchResponse predict(const PatchRequest& req) const override;
  std::string name() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace volseg

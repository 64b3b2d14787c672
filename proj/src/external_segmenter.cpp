#include "volseg/external_segmenter.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <future>
#include <map>
#include <mutex>
#include <semaphore>
#include <set>
#include <thread>

#include "httplib.h"
#include "volseg/wire.hpp"

extern char** environ;

namespace volseg {

namespace {

Error request_error(ErrorKind kind, const std::string& id, const std::string& what) {
  return Error(kind, "request " + id + ": " + what);
}

class ProcessTransport final : public Transport {
 public:
  explicit ProcessTransport(const std::vector<std::string>& argv) : command_(join(argv)) {
    if (argv.empty()) fail(ErrorKind::InvalidArgument, "external segmenter command is empty");
    static std::once_flag sigpipe_once;
    std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) fail(ErrorKind::Backend, "pipe: " + std::string(std::strerror(errno)));
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      fail(ErrorKind::Backend, "pipe: " + std::string(std::strerror(errno)));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);

    std::vector<char*> args;
    for (const std::string& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const int rc = ::posix_spawnp(&pid_, args[0], &actions, nullptr, args.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(to_child[0]);
    ::close(from_child[1]);
    if (rc != 0) {
      ::close(to_child[1]);
      ::close(from_child[0]);
      fail(ErrorKind::Backend, "cannot start segmenter '" + command_ + "': " + std::strerror(rc));
    }
    in_fd_ = to_child[1];
    out_fd_ = from_child[0];
    reader_ = std::thread([this] { read_loop(); });
  }

  ~ProcessTransport() override {
    ::close(in_fd_);
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, nullptr, 0);
    }
    reader_.join();
    ::close(out_fd_);
  }

  std::string exchange(const std::string& id, const std::string& request_line,
                       std::chrono::milliseconds timeout) override {
    std::future<std::string> reply;
    {
      std::lock_guard lock(mu_);
      if (dead_) throw request_error(ErrorKind::Backend, id, dead_reason_);
      if (pending_.count(id)) throw request_error(ErrorKind::Protocol, id, "duplicate request id in flight");
      reply = pending_[id].get_future();
    }
    {
      std::lock_guard lock(write_mu_);
      std::string framed = request_line + "\n";
      const char* p = framed.data();
      size_t left = framed.size();
      while (left > 0) {
        const ssize_t n = ::write(in_fd_, p, left);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
          const std::string reason = std::strerror(errno);
          std::lock_guard l2(mu_);
          pending_.erase(id);
          throw request_error(ErrorKind::Backend, id, "write to segmenter failed: " + reason);
        }
        p += n;
        left -= static_cast<size_t>(n);
      }
    }
    if (reply.wait_for(timeout) != std::future_status::ready) {
      std::lock_guard lock(mu_);
      pending_.erase(id);
      expired_.insert(id);
      throw request_error(ErrorKind::Timeout, id, "no response within " + std::to_string(timeout.count()) + " ms");
    }
    return reply.get();
  }

  std::string describe() const override { return "process:" + command_; }

 private:
  static std::string join(const std::vector<std::string>& argv) {
    std::string s;
    for (const auto& a : argv) s += (s.empty() ? "" : " ") + a;
    return s;
  }

  void fail_all(ErrorKind kind, const std::string& what) {
    for (auto& [id, p] : pending_) p.set_exception(std::make_exception_ptr(request_error(kind, id, what)));
    pending_.clear();
  }

  void deliver(const std::string& line) {
    std::string id;
    try {
      id = wire::peek_id(line);
    } catch (const Error& e) {
      std::lock_guard lock(mu_);
      fail_all(ErrorKind::Protocol, e.what());
      return;
    }
    std::lock_guard lock(mu_);
    auto it = pending_.find(id);
    if (it != pending_.end()) {
      it->second.set_value(line);
      pending_.erase(it);
    } else if (!expired_.erase(id)) {
      fail_all(ErrorKind::Protocol, "response id '" + id + "' matches no pending request");
    }
  }

  void read_loop() {
    std::string buffer;
    char chunk[1 << 16];
    while (true) {
      const ssize_t n = ::read(out_fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buffer.append(chunk, static_cast<size_t>(n));
      size_t start = 0;
      for (size_t nl = buffer.find('\n'); nl != std::string::npos; nl = buffer.find('\n', start)) {
        std::string line = buffer.substr(start, nl - start);
        start = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) deliver(line);
      }
      buffer.erase(0, start);
    }
    std::lock_guard lock(mu_);
    dead_ = true;
    dead_reason_ = "segmenter process '" + command_ + "' exited";
    fail_all(ErrorKind::Backend, dead_reason_);
  }

  std::string command_;
  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::mutex write_mu_;
  std::mutex mu_;
  std::map<std::string, std::promise<std::string>> pending_;
  std::set<std::string> expired_;
  bool dead_ = false;
  std::string dead_reason_;
  std::thread reader_;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const std::string& url) : url_(url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0)
      fail(ErrorKind::InvalidArgument, "segmenter URL must start with http://, got '" + url + "'");
    const auto slash = url.find('/', scheme + 3);
    base_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/predict" : url.substr(slash);
  }

  std::string exchange(const std::string& id, const std::string& request_line,
                       std::chrono::milliseconds timeout) override {
    httplib::Client cli(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    const auto start = std::chrono::steady_clock::now();
    auto res = cli.Post(path_, request_line, "application/json");
    if (!res) {
      const bool timed_out = std::chrono::steady_clock::now() - start >= timeout;
      throw request_error(timed_out ? ErrorKind::Timeout : ErrorKind::Backend, id,
                          "POST " + url_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200)
      throw request_error(ErrorKind::Backend, id,
                          "POST " + url_ + " returned HTTP " + std::to_string(res->status) + ": " +
                              res->body.substr(0, 200));
    return res->body;
  }

  std::string describe() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::string base_;
  std::string path_;
};

}  // namespace

std::unique_ptr<Transport> make_process_transport(const std::vector<std::string>& argv) {
  return std::make_unique<ProcessTransport>(argv);
}

std::unique_ptr<Transport> make_http_transport(const std::string& url) {
  return std::make_unique<HttpTransport>(url);
}

struct ExternalSegmenter::Impl {
  Impl(std::unique_ptr<Transport> t, ExternalOptions o)
      : transport(std::move(t)), opts(o), slots(std::max(1, o.max_in_flight)) {}
  std::unique_ptr<Transport> transport;
  ExternalOptions opts;
  std::counting_semaphore<1024> slots;
};

ExternalSegmenter::ExternalSegmenter(std::unique_ptr<Transport> transport, ExternalOptions opts) {
  if (!transport) fail(ErrorKind::InvalidArgument, "external segmenter needs a transport");
  if (opts.max_in_flight < 1 || opts.max_in_flight > 1024)
    fail(ErrorKind::InvalidArgument, "max_in_flight must lie in [1,1024]");
  impl_ = std::make_unique<Impl>(std::move(transport), opts);
}

ExternalSegmenter::~ExternalSegmenter() = default;

std::string ExternalSegmenter::name() const { return "external(" + impl_->transport->describe() + ")"; }

PatchResponse ExternalSegmenter::predict(const PatchRequest& req) const {
  validate_request(req);
  const std::string line = wire::encode_request(req);
  impl_->slots.acquire();
  std::string reply;
  try {
    reply = impl_->transport->exchange(req.id, line, impl_->opts.timeout);
  } catch (...) {
    impl_->slots.release();
    throw;
  }
  impl_->slots.release();
  PatchResponse resp;
  try {
    resp = wire::decode_response(reply);
  } catch (const Error& e) {
    throw request_error(e.kind(), req.id, e.what());
  }
  validate_response(req, resp);
  return resp;
}

}  // namespace volseg

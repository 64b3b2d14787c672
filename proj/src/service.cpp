#include "volseg/service.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>

#include "httplib.h"
#include "json.hpp"
#include "volseg/io.hpp"
#include "volseg/serialization.hpp"
#include "volseg/strategy.hpp"
#include "volseg/transforms.hpp"
#include "volseg/wire.hpp"

namespace volseg {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path session_dir_from_env() {
  const char* v = std::getenv(kSessionDirEnv);
  return v && *v ? fs::path(v) : fs::path();
}

namespace {

struct Session {
  std::string id;
  std::string source;
  Volume image;  // normalized
  std::optional<BinaryMask> label;
  SegmenterSpec spec;
  uint64_t seed = 0;
  WindowConfig window;
  std::shared_ptr<const Segmenter> segmenter;  // built on first predict
  ClickSet clicks;
  std::optional<Volume> prediction;
  int iteration = 0;  // predictions so far
  std::vector<double> dice_history;
  std::vector<double> nsd_history;
  std::string created;
  std::string updated;
  std::string volume_hash;
  bool deleted = false;
  mutable std::shared_mutex mu;
};

// Status thrown out of handlers; caught once in `guarded`.
struct HttpError {
  int status;
  std::string message;
  std::string kind;
};

[[noreturn]] void http_fail(int status, const std::string& message, const std::string& kind = "request") {
  throw HttpError{status, message, kind};
}

std::string now_iso() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_id() {
  unsigned char bytes[8];
  randombytes_buf(bytes, sizeof bytes);
  char hex[2 * sizeof bytes + 1];
  sodium_bin2hex(hex, sizeof hex, bytes, sizeof bytes);
  return hex;
}

std::string volume_hash(const Volume& v) {
  const std::string blob = raw::header_json(v.dims(), v.spacing()) + raw::encode_blob(v.values());
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
  char hex[2 * crypto_hash_sha256_BYTES + 1];
  sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
  return hex;
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Blob first, so a header never points at a missing or stale blob.
void write_raw(const fs::path& dir, const std::string& stem, const Volume& v) {
  write_atomic(dir / (stem + ".raw"), raw::encode_blob(v.values()));
  write_atomic(dir / (stem + ".json"), raw::header_json(v.dims(), v.spacing()) + "\n");
}

json state_json(const Session& s) {
  return {{"id", s.id},
          {"source", s.source},
          {"seed", s.seed},
          {"segmenter", s.spec},
          {"window", s.window},
          {"clicks", s.clicks},
          {"iteration", s.iteration},
          {"dice_history", s.dice_history},
          {"nsd_history", s.nsd_history},
          {"created", s.created},
          {"updated", s.updated},
          {"volume_hash", s.volume_hash},
          {"has_label", s.label.has_value()},
          {"has_prediction", s.prediction.has_value()}};
}

json metadata_json(const Session& s) {
  json j = state_json(s);
  j["dims"] = s.image.dims();
  j["spacing"] = s.image.spacing();
  j["click_count"] = s.clicks.size();
  return j;
}

Volume decode_upload(const json& j) {
  if (!j.is_object() || !j.contains("header") || !j.contains("data"))
    fail(ErrorKind::Format, "upload needs 'header' and 'data'");
  const json& h = j["header"];
  const std::string header_text = h.is_string() ? h.get<std::string>() : h.dump();
  Dims dims;
  Spacing spacing;
  raw::parse_header(header_text, dims, spacing);
  if (!j["data"].is_string()) fail(ErrorKind::Format, "'data' must be a base64 string");
  const std::string bytes = wire::base64_decode(j["data"].get<std::string>());
  return Volume(dims, raw::decode_blob(bytes, dims.count()), spacing);
}

int axis_of(const std::string& a) {
  if (a == "x") return 0;
  if (a == "y") return 1;
  if (a == "z") return 2;
  return -1;
}

int64_t coord(const Index3& p, int axis) { return axis == 0 ? p.x : (axis == 1 ? p.y : p.z); }

// In-plane axes (u fastest) for a slice normal to `axis`.
std::pair<int, int> plane_axes(int axis) {
  if (axis == 0) return {1, 2};
  if (axis == 1) return {0, 2};
  return {0, 1};
}

std::vector<float> extract_plane(const Dims& d, int axis, int64_t index, auto&& sample) {
  const auto [ua, va] = plane_axes(axis);
  const int64_t nu = d[ua], nv = d[va];
  std::vector<float> out(static_cast<size_t>(nu * nv));
  Index3 p;
  for (int64_t v = 0; v < nv; ++v)
    for (int64_t u = 0; u < nu; ++u) {
      int64_t c[3];
      c[axis] = index;
      c[ua] = u;
      c[va] = v;
      p = {c[0], c[1], c[2]};
      out[static_cast<size_t>(v * nu + u)] = sample(p);
    }
  return out;
}

std::string b64_plane(const std::vector<float>& plane) { return wire::base64_encode(raw::encode_blob(plane)); }

}  // namespace

struct Service::Impl {
  ServiceOptions opts;
  httplib::Server server;
  mutable std::shared_mutex store_mu;
  std::map<std::string, std::shared_ptr<Session>> sessions;

  explicit Impl(ServiceOptions o) : opts(std::move(o)) {
    if (sodium_init() < 0) fail(ErrorKind::Backend, "libsodium failed to initialize");
    opts.window.validate();
    if (!opts.storage_dir.empty()) {
      fs::create_directories(opts.storage_dir);
      restore();
    }
    routes();
  }

  fs::path dir_of(const Session& s) const { return opts.storage_dir / s.id; }

  void persist_state(const Session& s) const {
    if (opts.storage_dir.empty()) return;
    write_atomic(dir_of(s) / "state.json", state_json(s).dump(2) + "\n");
  }

  void persist_new(const Session& s) const {
    if (opts.storage_dir.empty()) return;
    const fs::path dir = dir_of(s);
    fs::create_directories(dir);
    write_raw(dir, "image", s.image);
    if (s.label) write_raw(dir, "label", s.label->to_volume());
    persist_state(s);
  }

  void restore() {
    for (const auto& entry : fs::directory_iterator(opts.storage_dir)) {
      const fs::path state_path = entry.path() / "state.json";
      if (!entry.is_directory() || !fs::exists(state_path)) continue;
      try {
        std::ifstream in(state_path);
        const json st = json::parse(in);
        auto s = std::make_shared<Session>();
        s->id = st.at("id").get<std::string>();
        s->source = st.value("source", std::string());
        s->seed = st.at("seed").get<uint64_t>();
        s->spec = st.at("segmenter").get<SegmenterSpec>();
        s->window = st.at("window").get<WindowConfig>();
        s->clicks = st.at("clicks").get<ClickSet>();
        s->iteration = st.at("iteration").get<int>();
        s->dice_history = st.at("dice_history").get<std::vector<double>>();
        s->nsd_history = st.at("nsd_history").get<std::vector<double>>();
        s->created = st.at("created").get<std::string>();
        s->updated = st.at("updated").get<std::string>();
        s->image = load_volume(entry.path() / "image.json");
        s->volume_hash = volume_hash(s->image);
        if (s->volume_hash != st.at("volume_hash").get<std::string>())
          fail(ErrorKind::Format, "image does not match the stored hash");
        if (st.at("has_label").get<bool>()) s->label = load_mask(entry.path() / "label.json");
        if (st.at("has_prediction").get<bool>()) s->prediction = load_volume(entry.path() / "prediction.json");
        sessions.emplace(s->id, std::move(s));
      } catch (const std::exception& e) {
        std::cerr << "volseg: skipping session " << entry.path().filename().string() << ": " << e.what() << "\n";
      }
    }
  }

  std::shared_ptr<Session> find(const std::string& id) const {
    std::shared_lock lock(store_mu);
    auto it = sessions.find(id);
    if (it == sessions.end()) http_fail(404, "unknown session '" + id + "'", "not_found");
    return it->second;
  }

  static json parse_body(const httplib::Request& req) {
    try {
      return json::parse(req.body.empty() ? std::string("{}") : req.body);
    } catch (const json::exception& e) {
      http_fail(400, std::string("malformed JSON body: ") + e.what(), "format");
    }
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        reply(res, e.status, {{"error", e.message}, {"kind", e.kind}});
      } catch (const Error& e) {
        reply(res, 500, {{"error", e.what()}, {"kind", to_string(e.kind())}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}, {"kind", "internal"}});
      }
    };
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    auto s = std::make_shared<Session>();
    Volume image;
    try {
      if (body.contains("path")) {
        s->source = body["path"].get<std::string>();
        image = load_volume(s->source);
      } else if (body.contains("volume")) {
        s->source = "upload";
        image = decode_upload(body["volume"]);
      } else {
        http_fail(400, "request needs 'path' or 'volume'");
      }
      if (image.size() * sizeof(float) > opts.max_upload_bytes)
        http_fail(413, "volume of " + to_string(image.dims()) + " exceeds the size cap", "size");
      image.check_finite();
      if (body.contains("label_path")) {
        s->label = load_mask(body["label_path"].get<std::string>());
      } else if (body.contains("label")) {
        s->label = BinaryMask::from_volume(decode_upload(body["label"]));
      }
      if (s->label) {
        require_same_dims(image.dims(), s->label->dims(), "label");
        s->label->set_spacing(image.spacing());
      }
      s->spec = body.contains("segmenter") ? from_json_checked<SegmenterSpec>(body["segmenter"], "segmenter")
                                           : SegmenterSpec{};
      s->spec.validate();
      if (s->spec.needs_label() && !s->label)
        http_fail(400, "segmenter '" + s->spec.type + "' needs a label", "config");
      s->window = body.contains("window") ? from_json_checked<WindowConfig>(body["window"], "window") : opts.window;
      s->window.validate();
      s->seed = body.value("seed", uint64_t{0});
    } catch (const Error& e) {
      http_fail(400, e.what(), to_string(e.kind()));
    } catch (const json::exception& e) {
      http_fail(400, e.what(), "format");
    }
    s->image = percentile_normalize(image, opts.lo_pct, opts.hi_pct);
    s->volume_hash = volume_hash(s->image);
    s->created = s->updated = now_iso();
    {
      std::unique_lock lock(store_mu);
      do s->id = new_id();
      while (sessions.count(s->id));
      persist_new(*s);
      sessions.emplace(s->id, s);
    }
    reply(res, 201, {{"id", s->id}, {"dims", s->image.dims()}, {"has_label", s->label.has_value()}});
  }

  void delete_session(const std::string& id, httplib::Response& res) {
    std::shared_ptr<Session> s;
    {
      std::unique_lock lock(store_mu);
      auto it = sessions.find(id);
      if (it == sessions.end()) http_fail(404, "unknown session '" + id + "'", "not_found");
      s = it->second;
      sessions.erase(it);
    }
    std::unique_lock lock(s->mu);  // waits for a running predict
    s->deleted = true;
    if (!opts.storage_dir.empty()) fs::remove_all(dir_of(*s));
    res.status = 204;
  }

  std::unique_lock<std::shared_mutex> lock_live(Session& s) const {
    std::unique_lock lock(s.mu);
    if (s.deleted) http_fail(404, "unknown session '" + s.id + "'", "not_found");
    return lock;
  }

  void add_click(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto s = find(id);
    const json body = parse_body(req);
    Click c;
    try {
      c.pos = body.at("pos").get<Index3>();
      c.cls = parse_click_class(body.at("cls").get<std::string>());
    } catch (const json::exception& e) {
      http_fail(400, std::string("click needs pos and cls: ") + e.what(), "format");
    } catch (const Error& e) {
      http_fail(400, e.what(), to_string(e.kind()));
    }
    auto lock = lock_live(*s);
    if (!in_bounds(s->image.dims(), c.pos))
      http_fail(422, "click " + to_string(c.pos) + " outside volume " + to_string(s->image.dims()), "shape");
    c.iteration = s->iteration;
    s->clicks.add(c);
    s->updated = now_iso();
    persist_state(*s);
    reply(res, 200, {{"clicks", s->clicks.size()}, {"click", c}});
  }

  void remove_last_click(const std::string& id, httplib::Response& res) {
    auto s = find(id);
    auto lock = lock_live(*s);
    if (s->clicks.empty()) http_fail(422, "session has no clicks", "shape");
    const Click removed = s->clicks.back();
    s->clicks.remove_last();
    s->updated = now_iso();
    persist_state(*s);
    reply(res, 200, {{"clicks", s->clicks.size()}, {"removed", removed}});
  }

  void predict(const std::string& id, httplib::Response& res) {
    auto s = find(id);
    auto lock = lock_live(*s);
    Volume pred;
    try {
      if (!s->segmenter) s->segmenter = make_segmenter(s->spec, s->label ? &*s->label : nullptr, s->seed);
      pred = predict_with_clicks(s->image, s->clicks, *s->segmenter, s->window, opts.window_workers);
    } catch (const Error& e) {
      s->segmenter.reset();  // a dead external backend is rebuilt next time
      http_fail(503, e.what(), to_string(e.kind()));
    }
    const BinaryMask bin = binarize(pred);
    json out = {{"iteration", s->iteration}, {"foreground_voxels", bin.count()}};
    if (s->label) {
      const double d = dice(bin, *s->label);
      const double n = nsd(bin, *s->label, opts.nsd_tolerance_mm);
      s->dice_history.push_back(d);
      s->nsd_history.push_back(n);
      out["dice"] = d;
      out["nsd"] = n;
    }
    s->prediction = std::move(pred);
    ++s->iteration;
    s->updated = now_iso();
    if (!opts.storage_dir.empty()) write_raw(dir_of(*s), "prediction", *s->prediction);
    persist_state(*s);
    out["predictions"] = s->iteration;
    reply(res, 200, out);
  }

  void slice(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    if (s->deleted) http_fail(404, "unknown session '" + id + "'", "not_found");
    const std::string axis_name = req.has_param("axis") ? req.get_param_value("axis") : "z";
    const int axis = axis_of(axis_name);
    if (axis < 0) http_fail(422, "axis must be x, y or z", "shape");
    const Dims& d = s->image.dims();
    if (!req.has_param("index")) http_fail(422, "missing index", "shape");
    int64_t index = 0;
    try {
      size_t used = 0;
      const std::string raw_index = req.get_param_value("index");
      index = std::stoll(raw_index, &used);
      if (used != raw_index.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      http_fail(422, "index must be an integer", "shape");
    }
    if (index < 0 || index >= d[axis])
      http_fail(422, "index " + std::to_string(index) + " outside [0, " + std::to_string(d[axis]) + ")", "shape");

    const auto [ua, va] = plane_axes(axis);
    json out = {{"axis", axis_name}, {"index", index}, {"width", d[ua]}, {"height", d[va]}};
    out["image"] = b64_plane(extract_plane(d, axis, index, [&](const Index3& p) { return s->image.at(p); }));
    std::optional<BinaryMask> bin;
    if (s->prediction) {
      bin = binarize(*s->prediction);
      out["prediction"] =
          b64_plane(extract_plane(d, axis, index, [&](const Index3& p) { return bin->at(p) ? 1.0f : 0.0f; }));
    } else {
      out["prediction"] = nullptr;
    }
    json clicks = json::array();
    for (const Click& c : s->clicks)
      if (coord(c.pos, axis) == index)
        clicks.push_back({{"u", coord(c.pos, ua)}, {"v", coord(c.pos, va)}, {"pos", c.pos},
                          {"cls", to_string(c.cls)}, {"iteration", c.iteration}});
    out["clicks"] = clicks;

    json worst = nullptr;
    if (bin && s->label) {
      const WindowGrid grid = plan_windows(d, s->window);
      const WorstPatches wp = select_worst_patches(*bin, *s->label, grid);
      auto rect = [&](std::optional<size_t> patch) -> json {
        if (!patch) return nullptr;
        const Index3& o = grid.origins[*patch];
        const Dims& w = grid.window_dims;
        if (index < coord(o, axis) || index >= coord(o, axis) + w[axis]) return nullptr;
        return {{"patch", *patch},
                {"u0", coord(o, ua)},
                {"v0", coord(o, va)},
                {"u1", coord(o, ua) + w[ua]},
                {"v1", coord(o, va) + w[va]}};
      };
      worst = {{"tumor", rect(wp.tumor_patch)}, {"background", rect(wp.background_patch)}};
    }
    out["worst_patch"] = worst;
    reply(res, 200, out);
  }

  void routes() {
    server.new_task_queue = [n = std::max(1, opts.http_threads)] { return new httplib::ThreadPool(n); };
    server.set_payload_max_length(opts.max_upload_bytes + (opts.max_upload_bytes / 3) + 4096);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        const char* kind = res.status == 413 ? "size" : "request";
        res.set_content(json{{"error", httplib::status_message(res.status)}, {"kind", kind}}.dump(),
                        "application/json");
      }
    });

    server.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
                 reply(res, 200, {{"status", "ok"}});
               }));
    server.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                 std::shared_lock lock(store_mu);
                 json ids = json::array();
                 for (const auto& [id, s] : sessions) ids.push_back(id);
                 reply(res, 200, {{"sessions", ids}});
               }));
    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  create_session(req, res);
                }));
    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 auto s = find(req.matches[1]);
                 std::shared_lock lock(s->mu);
                 if (s->deleted) http_fail(404, "unknown session", "not_found");
                 reply(res, 200, metadata_json(*s));
               }));
    server.Delete(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    delete_session(req.matches[1], res);
                  }));
    server.Post(R"(/sessions/([^/]+)/clicks)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  add_click(req.matches[1], req, res);
                }));
    server.Delete(R"(/sessions/([^/]+)/clicks/last)",
                  guarded([this](const httplib::Request& req, httplib::Response& res) {
                    remove_last_click(req.matches[1], res);
                  }));
    server.Post(R"(/sessions/([^/]+)/predict)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  predict(req.matches[1], res);
                }));
    server.Get(R"(/sessions/([^/]+)/slice)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 slice(req.matches[1], req, res);
               }));
  }
};

Service::Service(ServiceOptions opts) : impl_(std::make_unique<Impl>(std::move(opts))) {}
Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) fail(ErrorKind::Io, "cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port))
    fail(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::run() {
  if (!impl_->server.listen_after_bind()) fail(ErrorKind::Io, "server stopped with an error");
}

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

size_t Service::session_count() const {
  std::shared_lock lock(impl_->store_mu);
  return impl_->sessions.size();
}

}  // namespace volseg

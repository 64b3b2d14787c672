#include "volseg/serialization.hpp"

namespace volseg {

using nlohmann::json;

namespace {

json::array_t triple(int64_t a, int64_t b, int64_t c) { return {a, b, c}; }

void require_triple(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::Config, std::string(what) + " must be a 3-element array");
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

}  // namespace

void to_json(json& j, const Dims& d) { j = triple(d.x, d.y, d.z); }
void from_json(const json& j, Dims& d) {
  require_triple(j, "dims");
  d = {j[0].get<int64_t>(), j[1].get<int64_t>(), j[2].get<int64_t>()};
}

void to_json(json& j, const Index3& p) { j = triple(p.x, p.y, p.z); }
void from_json(const json& j, Index3& p) {
  require_triple(j, "position");
  p = {j[0].get<int64_t>(), j[1].get<int64_t>(), j[2].get<int64_t>()};
}

void to_json(json& j, const Spacing& s) { j = json::array({s.x, s.y, s.z}); }
void from_json(const json& j, Spacing& s) {
  require_triple(j, "spacing");
  s = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(json& j, const WindowConfig& c) {
  j = {{"window", c.window},
       {"overlap", c.overlap},
       {"weighting", c.weighting == Weighting::Gaussian ? "gaussian" : "constant"},
       {"sigma_scale", c.sigma_scale}};
}

void from_json(const json& j, WindowConfig& c) {
  c = WindowConfig{};
  if (j.contains("window")) {
    const json& w = j["window"];
    if (w.is_number_integer()) {
      const auto e = w.get<int64_t>();
      c.window = {e, e, e};
    } else {
      c.window = w.get<Dims>();
    }
  }
  c.overlap = j.value("overlap", c.overlap);
  const std::string weighting = j.value("weighting", std::string("gaussian"));
  if (weighting == "gaussian")
    c.weighting = Weighting::Gaussian;
  else if (weighting == "constant")
    c.weighting = Weighting::Constant;
  else
    fail(ErrorKind::Config, "weighting must be gaussian or constant");
  c.sigma_scale = j.value("sigma_scale", c.sigma_scale);
}

void to_json(json& j, const WindowGrid& g) {
  j = {{"volume_dims", g.volume_dims},
       {"window_dims", g.window_dims},
       {"count", g.origins.size()},
       {"origins", g.origins},
       {"notes", g.notes}};
}

void to_json(json& j, const StoppingCriterion& c) {
  j = json::object();
  j["max_iter"] = c.max_iter ? json(*c.max_iter) : json(nullptr);
  j["stop_probability"] = c.stop_probability ? json(*c.stop_probability) : json(nullptr);
  j["dice_threshold"] = c.dice_threshold ? json(*c.dice_threshold) : json(nullptr);
}

void from_json(const json& j, StoppingCriterion& c) {
  c.max_iter = optional_field<int>(j, "max_iter");
  c.stop_probability = optional_field<double>(j, "stop_probability");
  c.dice_threshold = optional_field<double>(j, "dice_threshold");
}

void to_json(json& j, const Click& c) {
  j = {{"pos", c.pos}, {"cls", to_string(c.cls)}, {"iteration", c.iteration}};
}

void from_json(const json& j, Click& c) {
  c.pos = j.at("pos").get<Index3>();
  c.cls = parse_click_class(j.at("cls").get<std::string>());
  c.iteration = j.value("iteration", 0);
}

void to_json(json& j, const ClickSet& s) {
  j = json::array();
  for (const Click& c : s) j.push_back(c);
}

void from_json(const json& j, ClickSet& s) {
  if (!j.is_array()) fail(ErrorKind::Config, "click set must be a JSON array");
  s = ClickSet{};
  for (const json& c : j) s.add(c.get<Click>());
}

void to_json(json& j, const SegmenterSpec& s) {
  j = {{"type", s.type}};
  if (s.type == "threshold") j["threshold"] = s.threshold;
  if (s.type == "constant") j["value"] = s.value;
  if (s.type == "click_responsive") {
    j["suppressed_components"] = s.oracle.suppressed_components;
    j["fp_blobs"] = s.oracle.fp_blobs;
    j["min_blob_radius"] = s.oracle.min_blob_radius;
    j["max_blob_radius"] = s.oracle.max_blob_radius;
  }
  if (s.type == "process") j["command"] = s.command;
  if (s.type == "http") j["url"] = s.url;
  if (s.type == "process" || s.type == "http") {
    j["timeout_ms"] = s.external.timeout.count();
    j["max_in_flight"] = s.external.max_in_flight;
  }
}

void from_json(const json& j, SegmenterSpec& s) {
  s = SegmenterSpec{};
  if (j.is_string()) {
    s.type = j.get<std::string>();
    return;
  }
  s.type = j.value("type", s.type);
  s.threshold = j.value("threshold", s.threshold);
  s.value = j.value("value", s.value);
  s.oracle.suppressed_components = j.value("suppressed_components", s.oracle.suppressed_components);
  s.oracle.fp_blobs = j.value("fp_blobs", s.oracle.fp_blobs);
  s.oracle.min_blob_radius = j.value("min_blob_radius", s.oracle.min_blob_radius);
  s.oracle.max_blob_radius = j.value("max_blob_radius", s.oracle.max_blob_radius);
  if (j.contains("command")) s.command = j["command"].get<std::vector<std::string>>();
  s.url = j.value("url", s.url);
  s.external.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<int64_t>(s.external.timeout.count())));
  s.external.max_in_flight = j.value("max_in_flight", s.external.max_in_flight);
}

void to_json(json& j, const IterationRecord& r) {
  j = {{"iteration", r.iteration}, {"clicks", r.clicks}, {"dice", r.dice}, {"nsd", r.nsd}, {"seconds", r.seconds}};
  if (r.patches.tumor_patch) j["tumor_patch"] = *r.patches.tumor_patch;
  if (r.patches.background_patch) j["background_patch"] = *r.patches.background_patch;
}

void to_json(json& j, const Trajectory& t) {
  const InteractionState& s = t.final_state;
  j = {{"records", t.records},
       {"predictions", t.predictions},
       {"iterations", s.iteration},
       {"clicks", s.clicks},
       {"dice_history", s.dice_history},
       {"nsd_history", s.nsd_history},
       {"stopped_reason", s.stopped_reason ? json(to_string(*s.stopped_reason)) : json(nullptr)}};
}

}  // namespace volseg

#include "volseg/volseg.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "json.hpp"
#include "volseg/io.hpp"
#include "volseg/metrics.hpp"
#include "volseg/serialization.hpp"
#include "volseg/service.hpp"
#include "volseg/simulator.hpp"
#include "volseg/transforms.hpp"
#include "volseg/windowing.hpp"

struct volseg_volume {
  volseg::Volume v;
};

struct volseg_mask {
  volseg::BinaryMask m;
};

struct volseg_server {
  std::unique_ptr<volseg::Service> service;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

volseg_status status_of(volseg::ErrorKind k) {
  switch (k) {
    case volseg::ErrorKind::InvalidArgument: return VOLSEG_ERR_INVALID_ARGUMENT;
    case volseg::ErrorKind::Io: return VOLSEG_ERR_IO;
    case volseg::ErrorKind::Format: return VOLSEG_ERR_FORMAT;
    case volseg::ErrorKind::Shape: return VOLSEG_ERR_SHAPE;
    case volseg::ErrorKind::Backend: return VOLSEG_ERR_BACKEND;
    case volseg::ErrorKind::Protocol: return VOLSEG_ERR_PROTOCOL;
    case volseg::ErrorKind::Timeout: return VOLSEG_ERR_TIMEOUT;
    case volseg::ErrorKind::NotFound: return VOLSEG_ERR_NOT_FOUND;
    case volseg::ErrorKind::Config: return VOLSEG_ERR_CONFIG;
  }
  return VOLSEG_ERR_INTERNAL;
}

template <typename F>
volseg_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return VOLSEG_OK;
  } catch (const volseg::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return VOLSEG_ERR_CONFIG;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return VOLSEG_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return VOLSEG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VOLSEG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return VOLSEG_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) volseg::fail(volseg::ErrorKind::InvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

json parse_json(const char* text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    volseg::fail(volseg::ErrorKind::Config, std::string(what) + " is not valid JSON: " + e.what());
  }
}

void dims_out(const volseg::Dims& d, int64_t dims[3]) {
  dims[0] = d.x;
  dims[1] = d.y;
  dims[2] = d.z;
}

}  // namespace

extern "C" {

const char* volseg_version(void) { return VOLSEG_VERSION; }

const char* volseg_status_name(volseg_status status) {
  switch (status) {
    case VOLSEG_OK: return "ok";
    case VOLSEG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case VOLSEG_ERR_IO: return "io";
    case VOLSEG_ERR_FORMAT: return "format";
    case VOLSEG_ERR_SHAPE: return "shape";
    case VOLSEG_ERR_BACKEND: return "backend";
    case VOLSEG_ERR_PROTOCOL: return "protocol";
    case VOLSEG_ERR_TIMEOUT: return "timeout";
    case VOLSEG_ERR_NOT_FOUND: return "not_found";
    case VOLSEG_ERR_CONFIG: return "config";
    case VOLSEG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* volseg_last_error(void) { return g_last_error.c_str(); }

void volseg_string_free(char* s) { std::free(s); }

volseg_status volseg_volume_load(const char* path, volseg_volume** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new volseg_volume{volseg::load_volume(path)};
  });
}

volseg_status volseg_volume_create(const int64_t dims[3], const double spacing[3], const float* data,
                                   volseg_volume** out) {
  return guarded([&] {
    require(dims && out, "dims and out are required");
    const volseg::Dims d{dims[0], dims[1], dims[2]};
    require(d.valid(), "dims must be positive");
    const volseg::Spacing sp = spacing ? volseg::Spacing{spacing[0], spacing[1], spacing[2]} : volseg::Spacing{};
    std::vector<float> values(d.count(), 0.0f);
    if (data) std::memcpy(values.data(), data, values.size() * sizeof(float));
    *out = new volseg_volume{volseg::Volume(d, std::move(values), sp)};
  });
}

volseg_status volseg_volume_save(const volseg_volume* v, const char* path) {
  return guarded([&] {
    require(v && path, "volume and path are required");
    volseg::save_volume(v->v, path);
  });
}

volseg_status volseg_volume_dims(const volseg_volume* v, int64_t dims[3]) {
  return guarded([&] {
    require(v && dims, "volume and dims are required");
    dims_out(v->v.dims(), dims);
  });
}

volseg_status volseg_volume_spacing(const volseg_volume* v, double spacing[3]) {
  return guarded([&] {
    require(v && spacing, "volume and spacing are required");
    spacing[0] = v->v.spacing().x;
    spacing[1] = v->v.spacing().y;
    spacing[2] = v->v.spacing().z;
  });
}

volseg_status volseg_volume_data(const volseg_volume* v, const float** data, size_t* count) {
  return guarded([&] {
    require(v && data && count, "volume, data and count are required");
    *data = v->v.values().data();
    *count = v->v.size();
  });
}

volseg_status volseg_volume_normalize(const volseg_volume* v, double lo_pct, double hi_pct, volseg_volume** out) {
  return guarded([&] {
    require(v && out, "volume and out are required");
    *out = new volseg_volume{volseg::percentile_normalize(v->v, lo_pct, hi_pct)};
  });
}

void volseg_volume_free(volseg_volume* v) { delete v; }

volseg_status volseg_mask_load(const char* path, volseg_mask** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new volseg_mask{volseg::load_mask(path)};
  });
}

volseg_status volseg_mask_dims(const volseg_mask* m, int64_t dims[3]) {
  return guarded([&] {
    require(m && dims, "mask and dims are required");
    dims_out(m->m.dims(), dims);
  });
}

volseg_status volseg_mask_count(const volseg_mask* m, size_t* count) {
  return guarded([&] {
    require(m && count, "mask and count are required");
    *count = m->m.count();
  });
}

void volseg_mask_free(volseg_mask* m) { delete m; }

volseg_status volseg_metrics(const volseg_mask* pred, const volseg_mask* label, double tolerance_mm, double* dice,
                             double* nsd) {
  return guarded([&] {
    require(pred && label, "pred and label are required");
    volseg::require_same_dims(pred->m.dims(), label->m.dims(), "metrics");
    if (dice) *dice = volseg::dice(pred->m, label->m);
    if (nsd) *nsd = volseg::nsd(pred->m, label->m, tolerance_mm);
  });
}

volseg_status volseg_plan_windows_json(const int64_t dims[3], const int64_t window[3], double overlap,
                                       char** out_json) {
  return guarded([&] {
    require(dims && window && out_json, "dims, window and out_json are required");
    volseg::WindowConfig cfg;
    cfg.window = {window[0], window[1], window[2]};
    cfg.overlap = overlap;
    const volseg::WindowGrid g = volseg::plan_windows({dims[0], dims[1], dims[2]}, cfg);
    *out_json = dup_string(json(g).dump());
  });
}

volseg_status volseg_run_experiment(const char* config_json, char** out_json, char** out_csv) {
  return guarded([&] {
    require(config_json && out_json, "config_json and out_json are required");
    const volseg::ExperimentConfig cfg = volseg::experiment_config_from_json(parse_json(config_json, "config"));
    const volseg::Report r = volseg::run_experiment(cfg);
    json j = volseg::report_json(r);
    j["config"] = volseg::to_json(cfg);
    std::string csv = out_csv ? volseg::report_csv(r) : std::string();
    *out_json = dup_string(j.dump());
    if (out_csv) *out_csv = dup_string(csv);
  });
}

volseg_status volseg_compare(const char* configs_json, char** out_json) {
  return guarded([&] {
    require(configs_json && out_json, "configs_json and out_json are required");
    const auto cfgs = volseg::comparison_configs_from_json(parse_json(configs_json, "comparison config"));
    const volseg::Comparison c = volseg::compare_strategies(cfgs);
    json rows = json::array();
    for (const volseg::ComparisonRow& r : c.rows)
      rows.push_back({{"label", r.label},
                      {"volumes", r.volumes},
                      {"dice_at_0", {{"mean", r.dice_at_0.mean}, {"sd", r.dice_at_0.sd}}},
                      {"dice_at_N", {{"mean", r.dice_at_n.mean}, {"sd", r.dice_at_n.sd}}},
                      {"nsd_at_N", {{"mean", r.nsd_at_n.mean}, {"sd", r.nsd_at_n.sd}}}});
    const json j = {{"n_max", c.n_max},
                    {"rows", rows},
                    {"table", volseg::format_comparison(c)},
                    {"csv", volseg::comparison_csv(c)}};
    *out_json = dup_string(j.dump());
  });
}

volseg_status volseg_server_create(const char* options_json, volseg_server** out) {
  return guarded([&] {
    require(out, "out is required");
    volseg::ServiceOptions o;
    o.storage_dir = volseg::session_dir_from_env();
    if (options_json && *options_json) {
      const json j = parse_json(options_json, "server options");
      if (j.contains("storage_dir")) o.storage_dir = j["storage_dir"].get<std::string>();
      o.max_upload_bytes = j.value("max_upload_bytes", o.max_upload_bytes);
      if (j.contains("window")) o.window = j["window"].get<volseg::WindowConfig>();
      o.window_workers = j.value("window_workers", o.window_workers);
      o.nsd_tolerance_mm = j.value("nsd_tolerance_mm", o.nsd_tolerance_mm);
      o.http_threads = j.value("http_threads", o.http_threads);
    }
    *out = new volseg_server{std::make_unique<volseg::Service>(std::move(o))};
  });
}

volseg_status volseg_server_bind(volseg_server* s, const char* host, int port, int* bound_port) {
  return guarded([&] {
    require(s && host, "server and host are required");
    const int p = s->service->bind(host, port);
    if (bound_port) *bound_port = p;
  });
}

volseg_status volseg_server_run(volseg_server* s) {
  return guarded([&] {
    require(s, "server is required");
    s->service->run();
  });
}

volseg_status volseg_server_stop(volseg_server* s) {
  return guarded([&] {
    require(s, "server is required");
    s->service->stop();
  });
}

void volseg_server_free(volseg_server* s) { delete s; }

}  // extern "C"

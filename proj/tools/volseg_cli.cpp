// volseg command line: preprocessing, window planning, simulated-user
// experiments, the session service and mask metrics.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "volseg/volseg.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageExit = 2;

// Operational failures exit with 10 + status so every error class has its
// own code.
struct Failure {
  volseg_status status;
  std::string message;
};

void check(volseg_status st) {
  if (st != VOLSEG_OK) throw Failure{st, volseg_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  volseg_string_free(s);
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure{VOLSEG_ERR_IO, "cannot read " + p.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw Failure{VOLSEG_ERR_IO, "cannot write " + p.string()};
}

json parse_config(const fs::path& p) {
  if (p.extension() == ".toml")
    throw Failure{VOLSEG_ERR_CONFIG, "TOML configs are not supported; use JSON"};
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw Failure{VOLSEG_ERR_CONFIG, p.string() + ": " + e.what()};
  }
}

std::vector<int64_t> parse_triple(const std::string& text, const char* what) {
  std::vector<int64_t> v;
  std::stringstream ss(text);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) v.push_back(std::stoll(part));
  } catch (const std::exception&) {
    v.clear();
  }
  if (v.size() == 1) v = {v[0], v[0], v[0]};
  if (v.size() != 3)
    throw Failure{VOLSEG_ERR_INVALID_ARGUMENT, std::string(what) + " must be N or X,Y,Z, got '" + text + "'"};
  return v;
}

struct RunOverrides {
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::string output;
};

void apply_overrides(json& cfg, const RunOverrides& o) {
  if (o.seed) cfg["seed"] = *o.seed;
  if (o.jobs) cfg["jobs"] = *o.jobs;
}

int cmd_normalize(const std::string& input, const std::string& output, double lo, double hi) {
  volseg_volume* v = nullptr;
  volseg_volume* n = nullptr;
  check(volseg_volume_load(input.c_str(), &v));
  const volseg_status st = volseg_volume_normalize(v, lo, hi, &n);
  volseg_volume_free(v);
  check(st);
  const volseg_status saved = volseg_volume_save(n, output.c_str());
  volseg_volume_free(n);
  check(saved);
  return 0;
}

int cmd_plan(const std::string& dims, const std::string& window, double overlap) {
  const auto d = parse_triple(dims, "--dims");
  const auto w = parse_triple(window, "--window");
  char* out = nullptr;
  check(volseg_plan_windows_json(d.data(), w.data(), overlap, &out));
  std::cout << json::parse(take(out)).dump(2) << "\n";
  return 0;
}

int cmd_simulate(const std::string& config, const RunOverrides& o) {
  json cfg = parse_config(config);
  apply_overrides(cfg, o);
  if (!o.output.empty()) cfg["output_dir"] = o.output;
  const bool to_disk = cfg.contains("output_dir") && !cfg["output_dir"].get<std::string>().empty();
  char* report = nullptr;
  char* csv = nullptr;
  check(volseg_run_experiment(cfg.dump().c_str(), &report, &csv));
  const json r = json::parse(take(report));
  const std::string csv_text = take(csv);
  if (to_disk) {
    const json& a = r["aggregate"];
    std::printf("%s: %zu volumes, Dice@0 %.4f, Dice@N %.4f, NSD@N %.4f\n", r["label"].get<std::string>().c_str(),
                a["volumes"].get<size_t>(), a["dice_at_0"]["mean"].get<double>(),
                a["dice_at_N"]["mean"].get<double>(), a["nsd_at_N"]["mean"].get<double>());
    std::printf("wrote %s\n", (fs::path(cfg["output_dir"].get<std::string>()) / "report.csv").c_str());
  } else {
    std::cout << csv_text;
  }
  for (const json& s : r["skipped"])
    std::fprintf(stderr, "skipped %s: %s\n", s["volume_id"].get<std::string>().c_str(),
                 s["reason"].get<std::string>().c_str());
  return 0;
}

int cmd_compare(const std::string& config, const RunOverrides& o) {
  json cfg = parse_config(config);
  if (cfg.is_array()) cfg = {{"defaults", json::object()}, {"configs", cfg}};
  if (!cfg.is_object() || !cfg.contains("configs") || !cfg["configs"].is_array())
    throw Failure{VOLSEG_ERR_CONFIG, "comparison config needs a 'configs' array"};
  int i = 0;
  for (json& entry : cfg["configs"]) {
    apply_overrides(entry, o);
    if (!o.output.empty()) entry["output_dir"] = (fs::path(o.output) / ("config_" + std::to_string(i))).string();
    ++i;
  }
  char* out = nullptr;
  check(volseg_compare(cfg.dump().c_str(), &out));
  const json r = json::parse(take(out));
  std::cout << r["table"].get<std::string>();
  if (!o.output.empty()) {
    fs::create_directories(o.output);
    write_text(fs::path(o.output) / "comparison.csv", r["csv"].get<std::string>());
    write_text(fs::path(o.output) / "comparison.md", r["table"].get<std::string>());
  }
  return 0;
}

int cmd_serve(const std::string& host, int port, const std::string& storage, int workers) {
  // Signals go to a dedicated thread that stops the server cleanly.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  json opts = {{"window_workers", workers}};
  if (!storage.empty()) opts["storage_dir"] = storage;
  volseg_server* srv = nullptr;
  check(volseg_server_create(opts.dump().c_str(), &srv));
  int bound = 0;
  if (volseg_server_bind(srv, host.c_str(), port, &bound) != VOLSEG_OK) {
    const Failure f{VOLSEG_ERR_IO, volseg_last_error()};
    volseg_server_free(srv);
    throw f;
  }
  std::thread([srv, set] {
    int sig = 0;
    sigwait(&set, &sig);
    volseg_server_stop(srv);
  }).detach();
  std::fprintf(stderr, "volseg: serving on http://%s:%d\n", host.c_str(), bound);
  const volseg_status st = volseg_server_run(srv);
  volseg_server_free(srv);
  check(st);
  return 0;
}

int cmd_metrics(const std::string& pred, const std::string& label, double tolerance) {
  volseg_mask* p = nullptr;
  volseg_mask* l = nullptr;
  check(volseg_mask_load(pred.c_str(), &p));
  if (volseg_mask_load(label.c_str(), &l) != VOLSEG_OK) {
    const Failure f{VOLSEG_ERR_IO, volseg_last_error()};
    volseg_mask_free(p);
    throw f;
  }
  double dice = 0.0, nsd = 0.0;
  const volseg_status st = volseg_metrics(p, l, tolerance, &dice, &nsd);
  volseg_mask_free(p);
  volseg_mask_free(l);
  check(st);
  std::cout << json{{"dice", dice}, {"nsd", nsd}, {"tolerance_mm", tolerance}}.dump() << "\n";
  return 0;
}

void add_run_flags(CLI::App* sub, std::string& config, RunOverrides& o, uint64_t& seed, int& jobs) {
  sub->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", seed, "Override the config seed");
  sub->add_option("--jobs", jobs, "Volumes processed in parallel")->check(CLI::PositiveNumber);
  sub->add_option("--output", o.output, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive volumetric segmentation engine"};
  app.set_version_flag("--version", std::string(volseg_version()));
  app.require_subcommand(1);

  std::string input, output;
  double lo = 0.05, hi = 99.95;
  auto* normalize = app.add_subcommand("normalize", "Percentile-normalize a volume to [0,1]");
  normalize->add_option("--input", input, "Input volume (.nii, .nii.gz, .json)")->required();
  normalize->add_option("--output", output, "Output volume")->required();
  normalize->add_option("--lo", lo, "Lower percentile");
  normalize->add_option("--hi", hi, "Upper percentile");

  std::string dims, window = "128";
  double overlap = 0.25;
  auto* plan = app.add_subcommand("plan-windows", "Print the sliding-window grid as JSON");
  plan->add_option("--dims", dims, "Volume dims X,Y,Z")->required();
  plan->add_option("--window", window, "Window edge N or X,Y,Z");
  plan->add_option("--overlap", overlap, "Fractional overlap in [0,1)");

  std::string sim_config, cmp_config;
  RunOverrides sim_o, cmp_o;
  uint64_t sim_seed = 0, cmp_seed = 0;
  int sim_jobs = 0, cmp_jobs = 0;
  auto* simulate = app.add_subcommand("simulate", "Run one simulated-user experiment");
  add_run_flags(simulate, sim_config, sim_o, sim_seed, sim_jobs);
  auto* compare = app.add_subcommand("compare", "Run several configs on one dataset and tabulate them");
  add_run_flags(compare, cmp_config, cmp_o, cmp_seed, cmp_jobs);

  std::string host = "127.0.0.1", storage;
  int port = 8080, workers = 1;
  auto* serve = app.add_subcommand("serve", "Start the session service");
  serve->add_option("--port", port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--storage", storage, "Session directory (default: $VOLSEG_SESSION_DIR)");
  serve->add_option("--workers", workers, "Window evaluations in parallel")->check(CLI::PositiveNumber);

  std::string pred, label;
  double tolerance = 2.0;
  auto* metrics = app.add_subcommand("metrics", "Dice and NSD between two masks");
  metrics->add_option("--pred", pred, "Predicted mask")->required();
  metrics->add_option("--label", label, "Reference mask")->required();
  metrics->add_option("--tolerance", tolerance, "NSD tolerance in mm")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    if (e.get_exit_code() != 0) std::cerr << app.help();
    return kUsageExit;
  }

  try {
    if (*normalize) return cmd_normalize(input, output, lo, hi);
    if (*plan) return cmd_plan(dims, window, overlap);
    if (*simulate) {
      if (simulate->count("--seed")) sim_o.seed = sim_seed;
      if (simulate->count("--jobs")) sim_o.jobs = sim_jobs;
      return cmd_simulate(sim_config, sim_o);
    }
    if (*compare) {
      if (compare->count("--seed")) cmp_o.seed = cmp_seed;
      if (compare->count("--jobs")) cmp_o.jobs = cmp_jobs;
      return cmd_compare(cmp_config, cmp_o);
    }
    if (*serve) return cmd_serve(host, port, storage, workers);
    if (*metrics) return cmd_metrics(pred, label, tolerance);
  } catch (const Failure& f) {
    std::cerr << "volseg: " << volseg_status_name(f.status) << ": " << f.message << "\n";
    return 10 + static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::cerr << "volseg: internal: " << e.what() << "\n";
    return 10 + static_cast<int>(VOLSEG_ERR_INTERNAL);
  }
  return kUsageExit;
}

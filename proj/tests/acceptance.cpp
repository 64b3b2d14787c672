// One line per acceptance criterion; exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <functional>
#include <map>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "volseg/guidance.hpp"
#include "volseg/io.hpp"
#include "volseg/metrics.hpp"
#include "volseg/segmenter_factory.hpp"
#include "volseg/serialization.hpp"
#include "volseg/service.hpp"
#include "volseg/simulator.hpp"
#include "volseg/strategy.hpp"
#include "volseg/transforms.hpp"
#include "volseg/windowing.hpp"
#include "volseg/wire.hpp"

using namespace volseg;
using namespace volseg::testing;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Dims random_dims(Rng& rng, int lo, int hi) {
  auto e = [&] { return static_cast<int64_t>(lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo + 1)))); };
  return {e(), e(), e()};
}

// Lesion cases whose label has enough components to outlast the click budget.
SyntheticCase crowded_case(uint64_t seed) { return make_case({48, 48, 48}, 14, seed); }

ClickResponsiveOptions persistent_errors() {
  ClickResponsiveOptions o;
  o.suppressed_components = 12;
  o.fp_blobs = 3;
  return o;
}

WindowConfig window_cfg(int edge, double overlap) {
  WindowConfig c;
  c.window = {edge, edge, edge};
  c.overlap = overlap;
  return c;
}

Outcome window_plan() {
  WindowConfig c = window_cfg(128, 0.25);
  plan_windows({224, 224, 224}, c);  // warm-up
  double best = 1e9;
  WindowGrid g;
  for (int i = 0; i < 20; ++i) {
    const auto t = Clock::now();
    g = plan_windows({224, 224, 224}, c);
    best = std::min(best, seconds_since(t));
  }
  bool exact = g.size() == 8;
  for (const Index3& o : g.origins)
    for (int64_t v : {o.x, o.y, o.z}) exact &= v == 0 || v == 96;
  return {exact && best < 1e-3, fmt("%zu windows, origins in {0,96}^3: %s; %.4f ms", g.size(), exact ? "yes" : "no",
                                    best * 1e3)};
}

Outcome coverage_convexity() {
  const auto t = Clock::now();
  Rng rng(2024);
  int covered_fail = 0, convex_fail = 0, constant_fail = 0, plan_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Dims d = random_dims(rng, 1, 28);
    WindowConfig c;
    c.window = random_dims(rng, 1, 16);
    c.overlap = rng.uniform01() * 0.9;
    c.weighting = rng.bernoulli(0.5) ? Weighting::Gaussian : Weighting::Constant;
    const WindowGrid g = plan_windows(d, c);
    for (int a = 0; a < 3; ++a) {
      std::vector<int64_t> axis;
      for (const Index3& o : g.origins) axis.push_back(o[a]);
      std::sort(axis.begin(), axis.end());
      axis.erase(std::unique(axis.begin(), axis.end()), axis.end());
      plan_fail += axis != brute_axis_origins(d[a], std::min(c.window[a], d[a]), c.overlap);
    }
    const ImportanceMap m = importance_map(g.window_dims, c.weighting, c.sigma_scale);
    std::vector<std::vector<float>> preds(g.size(), std::vector<float>(g.window_dims.count()));
    std::vector<float> lo(d.count(), 2.0f), hi(d.count(), -1.0f);
    for (size_t w = 0; w < g.size(); ++w)
      for (size_t i = 0; i < preds[w].size(); ++i) {
        const float v = static_cast<float>(rng.uniform01());
        preds[w][i] = v;
        const Index3 l = unravel(g.window_dims, i);
        const size_t gi = linear_index(d, g.origins[w].x + l.x, g.origins[w].y + l.y, g.origins[w].z + l.z);
        lo[gi] = std::min(lo[gi], v);
        hi[gi] = std::max(hi[gi], v);
      }
    for (size_t i = 0; i < d.count(); ++i) covered_fail += hi[i] < 0.0f;
    const Volume out = blend(g, m, preds);
    for (size_t i = 0; i < out.size(); ++i) convex_fail += out[i] < lo[i] - 1e-6f || out[i] > hi[i] + 1e-6f;
    const float k = static_cast<float>(rng.uniform01());
    for (auto& p : preds) std::fill(p.begin(), p.end(), k);
    const Volume flat = blend(g, m, preds);
    for (size_t i = 0; i < flat.size(); ++i) constant_fail += std::fabs(flat[i] - k) > 1e-6f;
  }
  const double s = seconds_since(t);
  const bool ok = !covered_fail && !convex_fail && !constant_fail && !plan_fail && s < 60;
  return {ok, fmt("1000 configs; uncovered %d, non-convex %d, constant drift %d, plan mismatches %d; %.2f s",
                  covered_fail, convex_fail, constant_fail, plan_fail, s)};
}

Outcome blend_identity() {
  const auto t = Clock::now();
  Rng rng(3);
  Volume img({96, 96, 96});
  for (size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform01());
  const Volume zero(img.dims());
  const std::vector<Volume> ch{img, zero, zero};
  PassThroughSegmenter seg;
  double worst = 0;
  for (double ov : {0.0, 0.25, 0.5}) {
    const Volume out = sw_predict(ch, seg, window_cfg(32, ov), 4);
    for (size_t i = 0; i < out.size(); ++i) worst = std::max(worst, static_cast<double>(std::fabs(out[i] - img[i])));
  }
  const double s = seconds_since(t);
  return {worst <= 1e-6, fmt("96^3, 32^3 windows, overlap 0/0.25/0.5; max error %.2e; %.2f s", worst, s)};
}

Outcome click_encoding() {
  auto nonzero = [](const Volume& v) {
    return std::count_if(v.values().begin(), v.values().end(), [](float x) { return x != 0.0f; });
  };
  ClickSet interior, corner;
  interior.add({{5, 5, 5}, ClickClass::Tumor, 0});
  corner.add({{0, 0, 0}, ClickClass::Background, 0});
  const auto a = nonzero(encode_clicks(interior, {11, 11, 11}).tumor);
  const auto b = nonzero(encode_clicks(corner, {11, 11, 11}).background);
  const GuidanceChannels e = encode_clicks({}, {11, 11, 11});
  const auto c = nonzero(e.tumor) + nonzero(e.background);
  return {a == 7 && b == 4 && c == 0, fmt("interior %ld, corner %ld, empty %ld", static_cast<long>(a),
                                          static_cast<long>(b), static_cast<long>(c))};
}

// Wilson-Hilferty approximation of the chi-square quantile.
double chi2_quantile(double dof, double z) {
  const double h = 2.0 / (9.0 * dof);
  return dof * std::pow(1.0 - h + z * std::sqrt(h), 3.0);
}

Outcome sampling() {
  const auto t = Clock::now();
  const Dims d{5, 5, 5};
  const BinaryMask cube(d, true);
  const std::vector<double> edt = brute_edt(cube, {});
  double total = 0;
  for (double x : edt) total += std::exp(x);
  Rng rng(99);
  const int n = 100000;
  std::vector<int> counts(d.count(), 0);
  int outside = 0;
  for (int i = 0; i < n; ++i) {
    const auto c = sample_click(cube, ClickClass::Tumor, 0, rng);
    if (!c || !in_bounds(d, c->pos)) {
      ++outside;
      continue;
    }
    ++counts[linear_index(d, c->pos.x, c->pos.y, c->pos.z)];
  }
  // Per distance class within 3 sigma, and the full 125-cell table by chi-square.
  std::map<double, std::pair<double, int>> classes;
  double chi2 = 0;
  for (size_t i = 0; i < d.count(); ++i) {
    const double p = std::exp(edt[i]) / total;
    classes[edt[i]].first += p;
    classes[edt[i]].second += counts[i];
    chi2 += (counts[i] - n * p) * (counts[i] - n * p) / (n * p);
  }
  double worst_z = 0;
  for (const auto& [dist, pk] : classes) {
    const double sigma = std::sqrt(n * pk.first * (1 - pk.first));
    worst_z = std::max(worst_z, std::fabs(pk.second - n * pk.first) / sigma);
  }
  const double limit = chi2_quantile(static_cast<double>(d.count() - 1), 3.0);
  const double s = seconds_since(t);
  const bool ok = outside == 0 && worst_z <= 3.0 && chi2 <= limit && s < 30;
  return {ok, fmt("%d draws; %zu distance classes, worst |z| %.2f; chi2 %.1f (3-sigma limit %.1f); outside %d; %.2f s",
                  n, classes.size(), worst_z, chi2, limit, outside, s)};
}

Outcome worst_patch() {
  const auto t = Clock::now();
  Rng rng(500);
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    const Dims d{32, 32, 32};
    const BinaryMask label = random_mask(d, 0.05 + 0.2 * rng.uniform01(), rng);
    BinaryMask pred = label;
    // Perturb a few regions so Dice varies between patches, with some ties.
    const int flips = 1 + static_cast<int>(rng.below(400));
    for (int f = 0; f < flips; ++f) {
      const size_t v = rng.below(d.count());
      pred.set(v, !pred[v]);
    }
    WindowConfig c;
    c.window = random_dims(rng, 4, 16);
    c.overlap = rng.uniform01() * 0.5;
    const WindowGrid g = plan_windows(d, c);
    const WorstPatches fast = select_worst_patches(pred, label, g);
    const BrutePatches slow = brute_worst_patches(pred, label, g.origins, g.window_dims);
    mismatches += fast.tumor_patch != slow.tumor || fast.background_patch != slow.background;
  }
  const double s = seconds_since(t);
  return {mismatches == 0 && s < 60, fmt("500 instances of 32^3; mismatches %d; %.2f s", mismatches, s)};
}

Trajectory interact(const SyntheticCase& k, const Segmenter& seg, const StoppingCriterion& crit, uint64_t seed) {
  InteractionConfig cfg;
  cfg.eval_mode = false;
  cfg.criterion = crit;
  cfg.window = window_cfg(32, 0.25);
  Rng rng(seed);
  return run_interaction(k.image, k.label, seg, cfg, rng);
}

Outcome stopping_table() {
  const SyntheticCase k = crowded_case(7);
  const ClickResponsiveOracle persistent(k.label, persistent_errors());
  std::vector<std::string> problems;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) problems.push_back(what);
  };
  const Trajectory cap = interact(k, persistent, {10, std::nullopt, std::nullopt}, 1);
  expect(cap.final_state.iteration == 10 && cap.final_state.stopped_reason == StopReason::MaxIter, "max_iter=10");
  for (uint64_t s = 0; s < 5; ++s) {
    const Trajectory p1 = interact(k, persistent, {std::nullopt, 1.0, std::nullopt}, s);
    expect(p1.final_state.iteration == 1 && p1.final_state.stopped_reason == StopReason::Probability, "p=1");
  }
  const Trajectory p0 = interact(k, persistent, {10, 0.0, std::nullopt}, 2);
  expect(p0.final_state.iteration == 10 && p0.final_state.stopped_reason == StopReason::MaxIter, "p=0");

  ClickResponsiveOptions few;
  few.suppressed_components = 6;
  const SyntheticCase k2 = make_case({48, 48, 48}, 10, 8);
  const ClickResponsiveOracle recovering(k2.label, few);
  const Trajectory dt = interact(k2, recovering, {std::nullopt, std::nullopt, 0.9}, 3);
  const auto& h = dt.final_state.dice_history;
  const auto first = std::find_if(h.begin(), h.end(), [](double x) { return x >= 0.9; });
  expect(first != h.end() && first + 1 == h.end() && dt.final_state.stopped_reason == StopReason::Dice,
         "dice_threshold=0.9");

  std::map<StopReason, int> seen;
  for (uint64_t s = 0; s < 40; ++s) {
    const Trajectory t = interact(k2, recovering, {10, 0.5, 0.9}, 100 + s);
    const auto& hist = t.final_state.dice_history;
    const bool earlier_dice = std::any_of(hist.begin(), hist.end() - 1, [](double x) { return x >= 0.9; });
    const StopReason r = *t.final_state.stopped_reason;
    ++seen[r];
    bool consistent = !earlier_dice;
    if (r == StopReason::Dice) consistent &= hist.back() >= 0.9 && t.final_state.iteration <= 10;
    if (r == StopReason::Probability)
      consistent &= hist.back() < 0.9 && t.final_state.iteration >= 1 && t.final_state.iteration < 10;
    if (r == StopReason::MaxIter) consistent &= t.final_state.iteration == 10 && hist.back() < 0.9;
    if (r == StopReason::NoError) consistent = false;  // Dice would have fired first
    expect(consistent, "combined seed " + std::to_string(100 + s));
  }
  std::string reasons;
  for (const auto& [r, n] : seen) reasons += to_string(r) + "=" + std::to_string(n) + " ";
  std::string detail = "max_iter, p=1, p=0, dice=0.9 and 40 combined runs (" + reasons + ")";
  if (!problems.empty()) detail += "; failed: " + problems.front();
  return {problems.empty(), detail};
}

Outcome table1_ordering(const std::filesystem::path& root) {
  const auto t = Clock::now();
  const std::filesystem::path data = root / "table1";
  write_dataset(data, 20, {48, 48, 48}, 12, 1234);
  ExperimentConfig base;
  base.dataset_dir = data;
  base.window = window_cfg(32, 0.25);
  base.segmenter.oracle.suppressed_components = 10;
  base.segmenter.oracle.fp_blobs = 3;
  base.seed = 42;
  base.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  ExperimentConfig global = base, local = base, noncorr = base;
  global.name = "corrective-global";
  local.name = "corrective-local";
  local.scope.mode = ScopeMode::LocalPatchwise;
  local.scope.patches = window_cfg(16, 0.0);
  noncorr.name = "non-corrective";
  noncorr.strategy = ClickStrategy::NonCorrective;
  const Comparison c = compare_strategies({global, local, noncorr});
  const double g = c.rows[0].dice_at_n.mean, l = c.rows[1].dice_at_n.mean, n = c.rows[2].dice_at_n.mean;
  const double s = seconds_since(t);
  const bool ok = c.rows[0].volumes == 20 && g >= 0.95 && l >= 0.95 && std::min(g, l) - n >= 0.15 && s < 120;
  return {ok, fmt("Dice@10 global %.4f, local %.4f, non-corrective %.4f (Dice@0 %.4f); %.1f s", g, l, n,
                  c.rows[0].dice_at_0.mean, s)};
}

Outcome eval_protocol(const std::filesystem::path& root) {
  const std::filesystem::path data = root / "eval";
  write_dataset(data, 3, {48, 48, 48}, 14, 77);
  ExperimentConfig cfg;
  cfg.dataset_dir = data;
  cfg.window = window_cfg(32, 0.25);
  cfg.segmenter.oracle = persistent_errors();
  cfg.criterion = {std::nullopt, 0.9, 0.5};  // would stop early outside eval mode
  cfg.eval_mode = true;
  const Report r = run_experiment(cfg);
  bool ok = r.rows.size() == 3;
  std::string sizes;
  for (const VolumeRow& row : r.rows) {
    const size_t entries = row.trajectory.final_state.dice_history.size();
    ok &= row.iterations == 10 && entries == 11 && row.trajectory.records.size() == 11;
    sizes += std::to_string(row.iterations) + "/" + std::to_string(entries) + " ";
  }
  return {ok, "iterations/dice entries per volume: " + sizes + "(criterion p=0.9, dice=0.5 ignored)"};
}

Outcome metrics_oracles() {
  Rng rng(200);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const Spacing sp{0.5 + rng.uniform01() * 2, 0.5 + rng.uniform01() * 2, 0.5 + rng.uniform01() * 2};
    BinaryMask a = random_mask({8, 8, 8}, rng.uniform01() * 0.6, rng);
    BinaryMask b = random_mask({8, 8, 8}, rng.uniform01() * 0.6, rng);
    a.set_spacing(sp);
    b.set_spacing(sp);
    const double tol = 0.5 + rng.uniform01() * 3;
    worst = std::max(worst, std::fabs(dice(a, b) - brute_dice(a, b)));
    worst = std::max(worst, std::fabs(nsd(a, b, tol) - brute_nsd(a, b, tol)));
  }
  return {worst <= 1e-9, fmt("200 pairs of 8^3, anisotropic spacing; max |diff| %.2e", worst)};
}

Outcome determinism(const std::filesystem::path& root) {
  const std::filesystem::path data = root / "determinism";
  write_dataset(data, 6, {32, 32, 32}, 8, 5);
  std::vector<std::string> csvs;
  for (int jobs : {1, 1, 4}) {
    for (ScopeMode mode : {ScopeMode::Global, ScopeMode::LocalPatchwise}) {
      ExperimentConfig cfg;
      cfg.dataset_dir = data;
      cfg.window = window_cfg(16, 0.25);
      cfg.scope.mode = mode;
      cfg.scope.patches = window_cfg(16, 0.0);
      cfg.segmenter.oracle.suppressed_components = 6;
      cfg.seed = 9;
      cfg.jobs = jobs;
      cfg.window_workers = jobs == 4 ? 2 : 1;
      cfg.output_dir = root / ("det-" + std::to_string(csvs.size()));
      run_experiment(cfg);
      std::ifstream in(cfg.output_dir / "report.csv", std::ios::binary);
      csvs.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
  }
  const bool ok = csvs[0] == csvs[2] && csvs[0] == csvs[4] && csvs[1] == csvs[3] && csvs[1] == csvs[5] &&
                  !csvs[0].empty() && csvs[0] != csvs[1];
  return {ok, "global and local configs, jobs 1, 1, 4 (window workers 2): CSV byte-identical per config"};
}

Outcome service_equivalence() {
  const SyntheticCase k = crowded_case(31);
  SegmenterSpec spec;
  spec.oracle = persistent_errors();
  const uint64_t seed = 17;
  const WindowConfig win = window_cfg(32, 0.25);
  auto seg = make_segmenter(spec, &k.label, seed);
  InteractionConfig cfg;
  cfg.window = win;
  Rng rng(55);
  const Trajectory t = run_interaction(percentile_normalize(k.image), k.label, *seg, cfg, rng);

  ServiceOptions opts;
  opts.window = win;
  Service svc(opts);
  const int port = svc.bind("127.0.0.1", 0);
  std::thread th([&] { svc.run(); });
  svc.wait_until_ready();
  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(120, 0);
  auto upload = [](const Volume& v) {
    return json{{"header", json::parse(raw::header_json(v.dims(), v.spacing()))},
                {"data", wire::base64_encode(raw::encode_blob(v.values()))}};
  };
  std::vector<double> served;
  std::string problem;
  auto created = c.Post("/sessions",
                        json{{"volume", upload(k.image)},
                             {"label", upload(k.label.to_volume())},
                             {"seed", seed},
                             {"segmenter", spec}}
                            .dump(),
                        "application/json");
  if (!created || created->status != 201) {
    problem = "session create failed";
  } else {
    const std::string base = "/sessions/" + json::parse(created->body)["id"].get<std::string>();
    for (const IterationRecord& rec : t.records) {
      for (const Click& cl : rec.clicks) {
        auto r = c.Post(base + "/clicks", json{{"pos", cl.pos}, {"cls", to_string(cl.cls)}}.dump(),
                        "application/json");
        if (!r || r->status != 200) problem = "click rejected";
      }
      auto p = c.Post(base + "/predict", "{}", "application/json");
      if (!p || p->status != 200) {
        problem = "predict failed";
        break;
      }
      served.push_back(json::parse(p->body)["dice"].get<double>());
    }
  }
  svc.stop();
  th.join();
  const std::vector<double>& expected = t.final_state.dice_history;
  const bool ok = problem.empty() && served == expected && expected.size() == 11;
  return {ok, fmt("%zu predictions over REST vs %zu simulated; identical: %s%s%s", served.size(), expected.size(),
                  served == expected ? "yes" : "no", problem.empty() ? "" : "; ", problem.c_str())};
}

}  // namespace

int main() {
  TempDir root("acceptance");
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"window plan exactness", window_plan},
      {"coverage and convexity fuzz", coverage_convexity},
      {"blend identity end-to-end", blend_identity},
      {"click encoding", click_encoding},
      {"sampling correctness", sampling},
      {"worst-patch equivalence", worst_patch},
      {"stopping criteria table", stopping_table},
      {"corrective vs non-corrective ordering", [&] { return table1_ordering(root.path()); }},
      {"eval protocol", [&] { return eval_protocol(root.path()); }},
      {"metrics oracles", metrics_oracles},
      {"determinism", [&] { return determinism(root.path()); }},
      {"service/simulator equivalence", service_equivalence},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %-40s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}

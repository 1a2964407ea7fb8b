// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spadgate/config.hpp"
#include "spadgate/core.hpp"
#include "spadgate/estimators.hpp"
#include "spadgate/harness.hpp"
#include "spadgate/policies.hpp"
#include "spadgate/spadsim.hpp"

using namespace spadgate;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_threads = 1;

SpadConfig timing(int B, double dead_ns) {
  return SpadConfig::from_timing(100.0, 1.0 / (B * 100e-12), dead_ns);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome normalization() {
  Rng rng(mix_seed(2024, 0));
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int B = trial % 2 ? 16 : 500;
    std::vector<double> r(static_cast<std::size_t>(B));
    for (double& x : r) x = 0.05 * uniform01(rng);
    r[uniform_below(rng, static_cast<std::uint64_t>(B))] += 3.0 * uniform01(rng);
    const auto scene = SceneTransient::from_rates(r);
    const int g = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(B)));
    double total = no_detection_probability(scene, g);
    for (std::int64_t t = g; t < g + B; ++t) total += detection_likelihood(scene, t, g);
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {worst <= 1e-12, fmt("max |sum - 1| = %.2e over 50 configurations", worst)};
}

Outcome optimal_gate_oracle() {
  const std::pair<double, double> fluxes[] = {{0.05, 0.5}, {0.2, 1.0}, {1.0, 0.1}};
  int cases = 0, ok = 0;
  for (int B : {16, 64}) {
    for (const auto& [bkg, sig] : fluxes) {
      for (int d = 0; d < B; ++d) {
        std::vector<double> rewards(static_cast<std::size_t>(B));
        for (int g = 0; g < B; ++g) rewards[static_cast<std::size_t>(g)] = reward_brute_force(d, g, bkg, sig, B);
        const double best = *std::max_element(rewards.begin(), rewards.end());
        const auto winners = std::count(rewards.begin(), rewards.end(), best);
        ++cases;
        if (winners == 1 && rewards[static_cast<std::size_t>(d)] == best) ++ok;
      }
    }
  }
  return {ok == cases, fmt("argmax gate unique and equal to the hypothesis in %d of %d cases", ok, cases)};
}

// TV distance between folded timestamps and the gate-weighted analytic law.
double timestamp_tv(const SceneTransient& scene, const AcquisitionRecord& rec) {
  const int B = scene.num_bins();
  std::vector<double> emp(static_cast<std::size_t>(B), 0.0), model(static_cast<std::size_t>(B), 0.0);
  std::vector<double> gates(static_cast<std::size_t>(B), 0.0);
  double n = 0.0;
  for (const auto& c : rec.cycles) {
    if (!c.detected()) continue;
    emp[static_cast<std::size_t>(*c.timestamp)] += 1.0;
    gates[static_cast<std::size_t>(c.gate)] += 1.0;
    n += 1.0;
  }
  const double pdet = 1.0 - no_detection_probability(scene);
  for (int g = 0; g < B; ++g) {
    if (gates[static_cast<std::size_t>(g)] == 0.0) continue;
    const auto f = folded_detection_distribution(scene, g);
    for (int i = 0; i < B; ++i) model[static_cast<std::size_t>(i)] += gates[static_cast<std::size_t>(g)] * f[static_cast<std::size_t>(i)] / pdet;
  }
  double tv = 0.0;
  for (int i = 0; i < B; ++i) tv += std::abs(emp[static_cast<std::size_t>(i)] - model[static_cast<std::size_t>(i)]) / n;
  return 0.5 * tv;
}

Outcome simulator_agreement() {
  const int B = 50;
  const auto cfg = timing(B, 81.0);
  const auto scene = SceneTransient::single_peak(B, 0.1, 20, 0.5);
  AcquisitionLimits limits;
  limits.max_cycles = 1000000;
  FreeRunningPolicy free;
  UniformPolicy gated(B);
  const double tv_free = timestamp_tv(scene, run_acquisition(scene, cfg, free, limits, 301));
  const double tv_gated = timestamp_tv(scene, run_acquisition(scene, cfg, gated, limits, 302));
  return {tv_free <= 0.005 && tv_gated <= 0.005,
          fmt("TV free-running %.4f, gated %.4f (1e6 cycles each, B = 50)", tv_free, tv_gated)};
}

Outcome coates_consistency() {
  const int B = 50;
  const int d = 20;
  const auto cfg = timing(B, 81.0);
  const auto scene = SceneTransient::single_peak(B, 0.05, d, 0.5);
  int correct = 0;
  double mean = 0.0;
  for (int s = 0; s < 20; ++s) {
    UniformPolicy p(B);
    AcquisitionLimits limits;
    limits.max_cycles = 100000;
    const auto est = coates_transient(timestamps_to_histogram(run_acquisition(scene, cfg, p, limits, 400 + s), B));
    correct += coates_depth(est).bin == d;
    mean += est.rates[d] / 20.0;
  }
  const double rel = std::abs(mean - 0.55) / 0.55;
  return {correct >= 19 && rel <= 0.05,
          fmt("peak correct in %d/20 seeds, mean r[d] = %.4f (%.2f%% from 0.55)", correct, mean, 100 * rel)};
}

Outcome map_vs_coates() {
  const int B = 100;
  const double bkg = 0.1, sig = 0.05;
  const auto cfg = timing(B, 81.0);
  int map_ok = 0, coates_ok = 0;
  for (int s = 0; s < 500; ++s) {
    // Seeds 1..500, the harness convention for experiment.seed = 1.
    const auto seed = static_cast<std::uint64_t>(1 + s);
    const int d = random_depth_bin(seed, B);
    const auto scene = SceneTransient::single_peak(B, bkg, d, sig);
    UniformPolicy p(B);
    AcquisitionLimits limits;
    limits.max_cycles = 200;
    const auto rec = run_acquisition(scene, cfg, p, limits, seed);
    coates_ok += coates_depth(coates_transient(timestamps_to_histogram(rec, B))).bin == d;
    // The MAP estimator sees only the record: ambient estimated from it, default flux grid.
    const double ambient = estimate_background(rec.cycles, B).ambient_flux;
    map_ok += map_depth(posterior_from_cycles(uniform_prior(B), make_flux_grid(ambient), rec.cycles, ambient,
                                              cfg.max_active_periods)) == d;
  }
  return {map_ok >= coates_ok, fmt("correct bins over 500 seeds: MAP %d, Coates %d", map_ok, coates_ok)};
}

ExperimentConfig pileup_config(double dead_ns, int seeds) {
  auto cfg = parse_config_text(R"({"experiment": {"id": "pileup"},
    "scene": {"ambient_flux": 0.02, "sbr": 2},
    "policies": ["adaptive", "free_running"]})");
  cfg.dead_time_ns = dead_ns;
  cfg.seeds = seeds;
  return cfg;
}

const GroupMetrics& group(const RunResult& run, const std::string& policy) {
  for (const auto& g : run.metrics.groups) {
    if (g.key.rfind(policy + "|", 0) == 0) return g;
  }
  throw std::runtime_error("no group for " + policy);
}

Outcome adaptive_beats_free_running() {
  const auto run = run_pixel_study(pileup_config(81.0, 200), g_threads);
  const auto& a = group(run, "adaptive");
  const auto& f = group(run, "free_running");
  return {a.mean_loss01 < f.mean_loss01 && a.rmse_m < f.rmse_m,
          fmt("adaptive loss %.3f RMSE %.3f m; free-running loss %.3f RMSE %.3f m", a.mean_loss01, a.rmse_m,
              f.mean_loss01, f.rmse_m)};
}

Outcome dead_time_crossover() {
  // One pulse period at 20 MHz.
  const auto run = run_pixel_study(pileup_config(50.0, 200), g_threads);
  const auto& a = group(run, "adaptive");
  const auto& f = group(run, "free_running");
  const double rel = std::abs(a.rmse_m - f.rmse_m) / f.rmse_m;
  return {rel <= 0.25, fmt("dead time 50 ns: adaptive RMSE %.3f m, free-running %.3f m (%.1f%% apart)", a.rmse_m,
                           f.rmse_m, 100 * rel)};
}

Outcome exposure_monotone() {
  auto cfg = parse_config_text(R"({"experiment": {"id": "exposure", "seeds": 200},
    "scene": {"ambient_flux": 0.01, "sbr": 1},
    "exposure": {"adaptive": true, "epsilon": 0.25},
    "policies": ["adaptive"],
    "sweep": {"sbr": [1, 2, 5, 10]}})");
  const auto run = run_sweep(cfg, g_threads);
  std::vector<double> means;
  std::string detail = "mean exposure (us) at SBR 1, 2, 5, 10:";
  for (const auto& g : run.metrics.groups) {
    means.push_back(g.mean_exposure_us);
    detail += fmt(" %.2f", g.mean_exposure_us);
  }
  bool ok = means.size() == 4;
  for (std::size_t i = 1; i < means.size(); ++i) ok = ok && means[i] <= means[i - 1];
  return {ok, detail};
}

Outcome posterior_calibration() {
  // Matched model: the flux grid holds the true signal level and the ambient flux is known.
  auto cfg = parse_config_text(R"({"experiment": {"id": "calibration", "seeds": 500, "dither": false},
    "scene": {"ambient_flux": 0.02, "sbr": 2},
    "acquisition": {"known_ambient": true},
    "flux_grid": {"values": [0.04]},
    "exposure": {"adaptive": true, "epsilon": 0.25},
    "policies": ["adaptive"]})");
  const auto run = run_pixel_study(cfg, g_threads);
  int terminated = 0, wrong = 0;
  for (const auto& r : run.rows) {
    if (!r.ok() || r.termination > 0.25) continue;
    ++terminated;
    wrong += r.loss01;
  }
  const double rate = terminated ? static_cast<double>(wrong) / terminated : 1.0;
  return {terminated > 0 && rate <= 0.35,
          fmt("%d of 500 runs reached termination <= 0.25; MAP error rate %.3f", terminated, rate)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  auto cfg = parse_config_text(R"({"experiment": {"id": "determinism", "seeds": 8},
    "scene": {"ambient_flux": 0.02, "sbr": 2},
    "acquisition": {"budget_us": 30},
    "policies": ["adaptive", "free_running", "uniform"],
    "sweep": {"sbr": [1, 3], "dead_time_ns": [50, 81]}})");
  const auto dir = std::filesystem::temp_directory_path() / "spadgate_acceptance";
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  for (int threads : {1, 1, 4, 4}) {
    const auto run = run_sweep(cfg, threads);
    const std::string rows = (dir / fmt("rows_%zu.csv", files.size())).string();
    const std::string summary = (dir / fmt("summary_%zu.csv", files.size())).string();
    emit_csv(run.rows, rows);
    emit_summary_csv(run.metrics, summary);
    files.push_back(slurp(rows) + slurp(summary));
  }
  const bool same = std::all_of(files.begin(), files.end(), [&](const std::string& f) { return f == files[0]; });
  return {same, fmt("4 sweep runs (1, 1, 4, 4 threads) of %zu bytes each %s", files[0].size(),
                    same ? "identical" : "differ")};
}

Outcome two_peak_mismatch() {
  auto cfg = parse_config_text(R"({"experiment": {"id": "mismatch", "seeds": 500, "dither": false},
    "scene": {"ambient_flux": 0.02, "signal_flux": 0.1,
              "mismatch": {"kind": "two_peak", "first_bin": 150, "first_flux": 0.1,
                           "second_bin": 350, "second_flux": 0.1}},
    "policies": ["adaptive"]})");
  const auto run = run_pixel_study(cfg, g_threads);
  std::map<int, int> hist;
  for (const auto& r : run.rows) {
    if (r.ok()) ++hist[r.est_depth_bin];
  }
  auto near = [&](int d) { return hist[d - 1] + hist[d] + hist[d + 1]; };
  const double n = static_cast<double>(run.rows.size());
  const double f1 = hist[150] / n, f2 = hist[350] / n;
  double worst_other = 0.0;
  for (const auto& [bin, count] : hist) {
    if (std::abs(bin - 150) <= 1 || std::abs(bin - 350) <= 1) continue;
    worst_other = std::max(worst_other, count / n);
  }
  const double near_total = (near(150) + near(350)) / n;
  return {f1 >= 0.2 && f2 >= 0.2 && worst_other <= 0.05,
          fmt("first peak %.3f, second peak %.3f, within +-1 of a peak %.3f, largest other bin %.3f", f1, f2,
              near_total, worst_other)};
}

}  // namespace

int main(int argc, char** argv) {
  g_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (argc > 1) g_threads = std::max(1, std::atoi(argv[1]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"likelihood normalization", normalization},
      {"optimal gate oracle", optimal_gate_oracle},
      {"simulator matches the timestamp model", simulator_agreement},
      {"Coates consistency", coates_consistency},
      {"MAP at least as accurate as Coates at low SBR", map_vs_coates},
      {"adaptive beats free-running under pile-up", adaptive_beats_free_running},
      {"dead time of one period: adaptive and free-running agree", dead_time_crossover},
      {"adaptive exposure non-increasing in SBR", exposure_monotone},
      {"posterior calibration at termination", posterior_calibration},
      {"byte-identical outputs across thread counts", determinism},
      {"two-peak scene splits between peaks", two_peak_mismatch},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%zu of %zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
  return failures == 0 ? 0 : 1;
}

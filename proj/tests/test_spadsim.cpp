#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "spadgate/core.hpp"
#include "spadgate/policies.hpp"
#include "spadgate/spadsim.hpp"

using namespace spadgate;

namespace {

SpadConfig timing(int B, double dead_ns) {
  return SpadConfig::from_timing(100.0, 1.0 / (B * 100e-12), dead_ns);
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] - q[i]);
  return 0.5 * tv;
}

// Empirical folded-timestamp law against the mixture of per-gate analytic
// laws over the realized gates, both conditioned on a detection.
double record_tv(const SceneTransient& scene, const AcquisitionRecord& rec) {
  const int B = scene.num_bins();
  std::vector<double> emp(static_cast<std::size_t>(B), 0.0);
  std::vector<double> model(static_cast<std::size_t>(B), 0.0);
  std::vector<std::int64_t> gate_count(static_cast<std::size_t>(B), 0);
  double n = 0.0;
  for (const auto& c : rec.cycles) {
    if (!c.detected()) continue;
    emp[static_cast<std::size_t>(*c.timestamp)] += 1.0;
    ++gate_count[static_cast<std::size_t>(c.gate)];
    n += 1.0;
  }
  const double pdet = 1.0 - no_detection_probability(scene);
  for (int g = 0; g < B; ++g) {
    if (gate_count[static_cast<std::size_t>(g)] == 0) continue;
    const auto f = folded_detection_distribution(scene, g);
    for (int i = 0; i < B; ++i) {
      model[static_cast<std::size_t>(i)] += gate_count[static_cast<std::size_t>(g)] * f[static_cast<std::size_t>(i)] / pdet;
    }
  }
  for (int i = 0; i < B; ++i) {
    emp[static_cast<std::size_t>(i)] /= n;
    model[static_cast<std::size_t>(i)] /= n;
  }
  return total_variation(emp, model);
}

AcquisitionRecord run(const SceneTransient& scene, const SpadConfig& cfg, GatingPolicy& policy,
                      std::int64_t max_cycles, std::uint64_t seed, SamplingPath path = SamplingPath::Auto) {
  AcquisitionLimits limits;
  limits.max_cycles = max_cycles;
  return run_acquisition(scene, cfg, policy, limits, seed, path);
}

// A policy that returns whatever gate it is told to.
class ScriptedPolicy final : public GatingPolicy {
 public:
  explicit ScriptedPolicy(int gate) : gate_(gate) {}
  [[nodiscard]] PolicyKind kind() const override { return PolicyKind::Fixed; }
  GateDirective next_gate(Rng&) override { return issue(GateDirective::at(gate_)); }

 private:
  int gate_;
};

}  // namespace

TEST_CASE("arm triggered") {
  const auto cfg = timing(500, 81.0);
  SimState s(1);
  CHECK(arm_triggered(s, cfg, 7) == 7);
  s.ready_time = 812;
  std::int64_t brute = s.ready_time;
  while (brute % 500 != 300) ++brute;
  CHECK(arm_triggered(s, cfg, 300) == brute);
  CHECK(brute == 1300);
  CHECK(arm_triggered(s, cfg, 312) == 812);
  CHECK_THROWS(arm_triggered(s, cfg, 500));
}

TEST_CASE("arm free running") {
  const auto cfg = timing(500, 81.0);
  SimState s(1);
  CHECK(arm_free_running(s, cfg) == std::pair<std::int64_t, int>{0, 0});
  s.ready_time = 812;
  CHECK(arm_free_running(s, cfg) == std::pair<std::int64_t, int>{812, 312});
}

TEST_CASE("dead time of one period re-arms at the previous timestamp") {
  const int B = 100;
  const auto cfg = timing(B, 10.0);
  REQUIRE(cfg.dead_time_bins == B);
  FreeRunningPolicy policy;
  const auto rec = run(SceneTransient::single_peak(B, 0.02, 40, 0.3), cfg, policy, 500, 3);
  for (std::size_t k = 1; k < rec.size(); ++k) {
    const auto& prev = rec.cycles[k - 1];
    if (prev.detected()) CHECK(rec.cycles[k].gate == *prev.timestamp);
  }
}

TEST_CASE("bright peak without ambient always fires at the peak") {
  const int B = 64;
  const auto cfg = timing(B, 81.0);
  const auto scene = SceneTransient::single_peak(B, 0.0, 21, 50.0);
  SimState s(5);
  for (int g : {0, 21, 22, 63}) {
    for (int k = 0; k < 20; ++k) {
      const auto c = sample_cycle(scene, cfg, s, g);
      REQUIRE(c.detected());
      CHECK(*c.timestamp == 21);
    }
  }
}

TEST_CASE("dark scene is censored") {
  const int B = 32;
  const auto cfg = timing(B, 81.0);
  SimState s(6);
  const auto c = sample_cycle(SceneTransient::single_peak(B, 0.0, 0, 0.0), cfg, s, 5);
  CHECK_FALSE(c.detected());
  CHECK(c.elapsed_periods == cfg.max_active_periods);
  CHECK(c.duration_bins == 5 + static_cast<std::int64_t>(cfg.max_active_periods) * B);
  const auto per_bin = sample_cycle(SceneTransient::single_peak(B, 0.0, 0, 0.0), cfg, s, 5, SamplingPath::PerBin);
  CHECK_FALSE(per_bin.detected());
}

TEST_CASE("timestamps follow the pile-up law") {
  const int B = 20;
  const auto cfg = timing(B, 2.0);
  const auto scene = SceneTransient::single_peak(B, 0.1, 0, 0.0);
  FixedPolicy fixed(B, 0);
  const auto rec = run(scene, cfg, fixed, 200000, 7);
  CHECK(record_tv(scene, rec) <= 0.01);
}

TEST_CASE("fast path and per-bin path agree") {
  const int B = 30;
  const auto cfg = timing(B, 5.0);
  const auto scene = SceneTransient::single_peak(B, 0.04, 11, 0.5);
  UniformPolicy a(B);
  UniformPolicy b(B);
  const auto fast = run(scene, cfg, a, 100000, 8, SamplingPath::Auto);
  const auto slow = run(scene, cfg, b, 100000, 9, SamplingPath::PerBin);
  CHECK(record_tv(scene, fast) <= 0.01);
  CHECK(record_tv(scene, slow) <= 0.01);

  // Also check the elapsed-period law: P(k periods) ~ geometric in e^{-S}.
  double mean_fast = 0.0, mean_slow = 0.0;
  for (const auto& c : fast.cycles) mean_fast += c.elapsed_periods;
  for (const auto& c : slow.cycles) mean_slow += c.elapsed_periods;
  mean_fast /= static_cast<double>(fast.size());
  mean_slow /= static_cast<double>(slow.size());
  CHECK(mean_fast == doctest::Approx(mean_slow).epsilon(0.1));
}

TEST_CASE("explicit-rate scenes use the per-bin law") {
  const int B = 25;
  const auto cfg = timing(B, 3.0);
  std::vector<double> r(B, 0.03);
  for (int i = 10; i < 18; ++i) r[static_cast<std::size_t>(i)] += 0.2 * std::exp(-(i - 10));
  const auto scene = SceneTransient::from_rates(r);
  UniformPolicy u(B);
  CHECK(record_tv(scene, run(scene, cfg, u, 100000, 10)) <= 0.01);
}

TEST_CASE("acquisition loop") {
  const int B = 500;
  const auto cfg = timing(B, 81.0);
  const auto scene = SceneTransient::single_peak(B, 0.02, 123, 0.04);

  SUBCASE("budget smaller than one cycle") {
    FixedPolicy p(B, 400);
    AcquisitionLimits limits;
    limits.budget_bins = 300;
    const auto rec = run_acquisition(scene, cfg, p, limits, 1);
    CHECK(rec.size() == 0);
    CHECK(rec.exposure_bins == 0);
  }
  SUBCASE("fixed gate at the depth without ambient") {
    FixedPolicy p(B, 123);
    const auto rec = run(SceneTransient::single_peak(B, 0.0, 123, 0.3), cfg, p, 300, 2);
    for (const auto& c : rec.cycles) {
      if (c.detected()) CHECK(*c.timestamp == 123);
    }
    CHECK(rec.detections() > 0);
  }
  SUBCASE("time accounting") {
    UniformPolicy p(B);
    AcquisitionLimits limits;
    limits.budget_bins = cfg.us_to_bins(100.0);
    const auto rec = run_acquisition(scene, cfg, p, limits, 3);
    std::int64_t sum = 0;
    for (const auto& c : rec.cycles) {
      CHECK(c.duration_bins > 0);
      sum += c.duration_bins;
    }
    CHECK(sum == rec.exposure_bins);
    CHECK(rec.exposure_bins <= limits.budget_bins);
    // 100 us at 20 MHz is 2000 periods.
    CHECK(limits.budget_bins == 2000 * B);
  }
  SUBCASE("out-of-range gate is a contract violation") {
    ScriptedPolicy bad(B);
    CHECK_THROWS_AS(run(scene, cfg, bad, 10, 4), ContractViolation);
    ScriptedPolicy neg(-1);
    CHECK_THROWS_AS(run(scene, cfg, neg, 10, 4), ContractViolation);
  }
}

TEST_CASE("property: determinism") {
  const int B = 200;
  const auto cfg = timing(B, 81.0);
  const auto scene = SceneTransient::single_peak(B, 0.02, 50, 0.05);
  AdaptiveOptions o;
  o.num_bins = B;
  o.calibration_cycles = 20;
  AdaptivePolicy a(o), b(o);
  const auto ra = run(scene, cfg, a, 2000, 99);
  const auto rb = run(scene, cfg, b, 2000, 99);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra.cycles[i].gate == rb.cycles[i].gate);
    CHECK(ra.cycles[i].timestamp == rb.cycles[i].timestamp);
    CHECK(ra.cycles[i].duration_bins == rb.cycles[i].duration_bins);
  }
  UniformPolicy c(B);
  const auto rc = run(scene, cfg, c, 2000, 100);
  bool differs = false;
  for (std::size_t i = 0; i < std::min(ra.size(), rc.size()); ++i) differs |= ra.cycles[i].timestamp != rc.cycles[i].timestamp;
  CHECK(differs);
}

TEST_CASE("property: longer dead time never completes more free-running cycles") {
  const int B = 500;
  const auto scene = SceneTransient::single_peak(B, 0.02, 300, 0.04);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::size_t previous = SIZE_MAX;
    for (double dead : {10.0, 50.0, 81.0, 100.0, 150.0, 400.0}) {
      const auto cfg = SpadConfig::from_timing(100.0, 20e6, dead);
      FreeRunningPolicy p;
      AcquisitionLimits limits;
      limits.budget_bins = cfg.us_to_bins(100.0);
      const auto rec = run_acquisition(scene, cfg, p, limits, seed);
      CHECK(rec.size() <= previous);
      previous = rec.size();
    }
  }
}

TEST_CASE("property: free-running directive equals direct arming") {
  const int B = 100;
  const auto cfg = timing(B, 30.0);
  const auto scene = SceneTransient::single_peak(B, 0.03, 70, 0.2);
  FreeRunningPolicy p;
  const std::uint64_t seed = 17;
  const auto rec = run(scene, cfg, p, 1000, seed);

  SimState state(mix_seed(seed, 0));
  for (const auto& expected : rec.cycles) {
    const auto [arm, gate] = arm_free_running(state, cfg);
    const auto c = sample_cycle_at(scene, cfg, state, arm);
    CHECK(c.gate == gate);
    CHECK(c.gate == expected.gate);
    CHECK(c.timestamp == expected.timestamp);
    CHECK(c.duration_bins == expected.duration_bins);
  }
}

TEST_CASE("adaptive gating collects more true-bin photons than free-running") {
  const int B = 500;
  const auto cfg = SpadConfig::from_timing(100.0, 20e6, 81.0);
  const std::int64_t budget = cfg.us_to_bins(100.0);
  double adaptive_hits = 0.0, free_hits = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng depth_rng(mix_seed(seed, 0));
    const int d = static_cast<int>(uniform_below(depth_rng, B));
    const auto scene = SceneTransient::single_peak(B, 0.02, d, 0.04);
    AdaptiveOptions o;
    o.num_bins = B;
    o.calibration_cycles = calibration_cycle_count(budget / B);
    o.active_periods = cfg.max_active_periods;
    AdaptivePolicy a(o);
    FreeRunningPolicy f;
    AcquisitionLimits limits;
    limits.budget_bins = budget;
    for (const auto& c : run_acquisition(scene, cfg, a, limits, seed).cycles) adaptive_hits += c.timestamp == d;
    for (const auto& c : run_acquisition(scene, cfg, f, limits, seed).cycles) free_hits += c.timestamp == d;
  }
  MESSAGE("true-bin detections per run: adaptive " << adaptive_hits / 200 << ", free-running " << free_hits / 200);
  CHECK(adaptive_hits > free_hits);
}

#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "spadgate/policies.hpp"
#include "spadgate/spadsim.hpp"

using namespace spadgate;

namespace {

// Expected 0-1 loss of the single-detection estimate, summed over every
// absolute detection bin with an explicit product for its probability.
double loss_oracle(int d, int g, double bkg, double sig, int B) {
  auto rate = [&](int i) { return bkg + ((i % B) == d ? sig : 0.0); };
  double survive = 1.0;
  double loss = 0.0;
  for (int t = g; t < g + B; ++t) {
    const double p = survive * (1.0 - std::exp(-rate(t)));
    if (t % B != d) loss += p;
    survive *= std::exp(-rate(t));
  }
  return loss + survive;
}

double gate_entropy(const std::vector<int>& gates) {
  std::map<int, double> freq;
  for (int g : gates) freq[g] += 1.0;
  double h = 0.0;
  for (const auto& [gate, n] : freq) {
    const double p = n / static_cast<double>(gates.size());
    h -= p * std::log(p);
  }
  return h;
}

AdaptiveOptions known(int B, double ambient) {
  AdaptiveOptions o;
  o.num_bins = B;
  o.known_ambient = ambient;
  return o;
}

}  // namespace

TEST_CASE("policy names") {
  for (auto k : {PolicyKind::Fixed, PolicyKind::Uniform, PolicyKind::FreeRunning, PolicyKind::Adaptive}) {
    CHECK(parse_policy_kind(to_string(k)) == k);
  }
  CHECK_THROWS(parse_policy_kind("random"));
  CHECK(parse_termination_metric("entropy") == TerminationMetric::Entropy);
  CHECK_THROWS(parse_termination_metric("map"));
}

TEST_CASE("fixed and uniform gates") {
  Rng rng(1);
  FixedPolicy fixed(10, 4);
  for (int k = 0; k < 5; ++k) {
    const auto d = fixed.next_gate(rng);
    CHECK_FALSE(d.free_run);
    CHECK(d.gate == 4);
    fixed.observe({4, 7, 0, 0});
  }
  CHECK(fixed.cycle_index() == 5);
  CHECK_THROWS(FixedPolicy(10, 10));

  UniformPolicy uniform(4);
  std::vector<int> gates;
  for (int k = 0; k < 6; ++k) {
    const int g = uniform.next_gate(rng).gate;
    gates.push_back(g);
    uniform.observe({g, std::nullopt, 16, 0});
  }
  CHECK(gates == std::vector<int>{0, 1, 2, 3, 0, 1});

  FreeRunningPolicy free;
  CHECK(free.next_gate(rng).free_run);
  free.observe({321, 5, 0, 0});
  CHECK(free.cycle_index() == 1);
}

TEST_CASE("observe enforces the issued gate") {
  Rng rng(2);
  FixedPolicy fixed(10, 4);
  CHECK_THROWS_AS(fixed.observe({4, 1, 0, 0}), ContractViolation);
  fixed.next_gate(rng);
  CHECK_THROWS_AS(fixed.observe({5, 1, 0, 0}), ContractViolation);

  AdaptivePolicy adaptive(known(10, 0.1));
  const int g = adaptive.next_gate(rng).gate;
  CHECK_THROWS_AS(adaptive.observe({(g + 1) % 10, 1, 0, 0}), ContractViolation);
}

TEST_CASE("adaptive with a delta prior gates at the depth") {
  Rng rng(3);
  for (int offset : {0, 5}) {
    auto o = known(50, 0.05);
    o.prior.assign(50, 0.0);
    o.prior[37] = 1.0;
    o.gate_offset = offset;
    AdaptivePolicy p(o);
    for (int k = 0; k < 20; ++k) {
      const int g = p.next_gate(rng).gate;
      CHECK(g == 37 - offset);
      p.observe({g, 37, 0, 0});
    }
  }
  auto wrap = known(50, 0.05);
  wrap.prior.assign(50, 0.0);
  wrap.prior[2] = 1.0;
  wrap.gate_offset = 5;
  AdaptivePolicy p(wrap);
  CHECK(p.next_gate(rng).gate == 47);
}

TEST_CASE("adaptive draws from a uniform posterior are uniform") {
  const int B = 100;
  const int n = 100000;
  AdaptivePolicy p(known(B, 0.01));
  Rng rng(mix_seed(5, 1));
  std::vector<double> count(B, 0.0);
  for (int k = 0; k < n; ++k) count[static_cast<std::size_t>(p.next_gate(rng).gate)] += 1.0;
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / B;
  for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
  // Upper 0.001 quantile of chi-squared with 99 degrees of freedom.
  CHECK(chi2 < 148.23);
}

TEST_CASE("calibration gates are evenly spaced") {
  AdaptiveOptions o;
  o.num_bins = 500;
  o.calibration_cycles = 40;
  AdaptivePolicy p(o);
  Rng rng(4);
  CHECK(p.calibrating());
  for (int k = 0; k < 40; ++k) {
    const int g = p.next_gate(rng).gate;
    CHECK(g == k * 500 / 40);
    p.observe({g, (g + 3) % 500, 0, 0});
  }
  CHECK_FALSE(p.calibrating());
  REQUIRE(p.ambient_flux().has_value());
  CHECK(p.posterior().num_flux() == 17);
  CHECK(p.posterior().updates() == 40);

  AdaptiveOptions none;
  none.num_bins = 10;
  CHECK_THROWS(AdaptivePolicy(none));
}

TEST_CASE("adaptive observe updates the posterior") {
  const int B = 60;
  AdaptivePolicy p(known(B, 0.1));
  Rng rng(6);
  const int g = p.next_gate(rng).gate;
  const double before = p.posterior().depth_marginal()[static_cast<std::size_t>(g)];
  p.observe({g, g, 0, 0});
  CHECK(p.posterior().depth_marginal()[static_cast<std::size_t>(g)] > before);
  CHECK(map_depth(p.posterior()) == g);
}

TEST_CASE("reward") {
  CHECK(reward(10, 10, 0.0, std::log(2.0), 32) == doctest::Approx(-0.5).epsilon(1e-15));
  const int B = 8;
  for (int d = 0; d < B; ++d) {
    for (int g = 0; g < B; ++g) {
      const double closed = reward(d, g, 0.2, 1.0, B);
      CHECK(closed == doctest::Approx(reward_brute_force(d, g, 0.2, 1.0, B)).epsilon(1e-12));
      CHECK(closed == doctest::Approx(-loss_oracle(d, g, 0.2, 1.0, B)).epsilon(1e-12));
      CHECK(closed <= 0.0);
      CHECK(closed >= -1.0);
    }
    CHECK(reward_brute_force(d, (d + 1) % B, 0.2, 1.0, B) < reward_brute_force(d, d, 0.2, 1.0, B));
  }
  CHECK(optimal_gate(0, 0.1, 0.5, 64) == 0);
}

TEST_CASE("property: the optimal gate is the hypothesis") {
  const std::pair<double, double> fluxes[] = {{0.05, 0.5}, {0.2, 1.0}, {1.0, 0.1}, {0.1, 0.5}};
  for (int B : {16, 64}) {
    for (const auto& [bkg, sig] : fluxes) {
      for (double scale : {1.0, 10.0}) {
        for (int d = 0; d < B; ++d) {
          int best = -1;
          int ties = 0;
          double best_r = -2.0;
          for (int g = 0; g < B; ++g) {
            const double r = reward_brute_force(d, g, scale * bkg, scale * sig, B);
            if (r > best_r) {
              best_r = r;
              best = g;
              ties = 0;
            } else if (r == best_r) {
              ++ties;
            }
          }
          CHECK(best == d);
          CHECK(best == optimal_gate(d, bkg, sig, B));
          CHECK(ties == 0);
        }
      }
    }
  }
}

TEST_CASE("termination value") {
  DepthPosterior u(uniform_prior(500), {0.1});
  CHECK(termination_value(u, TerminationMetric::Termination) == doctest::Approx(0.998).epsilon(1e-12));

  std::vector<double> delta(20, 0.0);
  delta[3] = 1.0;
  DepthPosterior d(delta, {0.1});
  CHECK(termination_value(d, TerminationMetric::Termination) == doctest::Approx(0.0));
  CHECK(termination_value(d, TerminationMetric::Entropy) == doctest::Approx(0.0));

  std::vector<double> two(20, 0.0);
  two[4] = 0.9;
  two[11] = 0.1;
  DepthPosterior t(two, {0.1});
  CHECK(termination_value(t, TerminationMetric::Termination) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("should stop") {
  std::vector<double> delta(20, 0.0);
  delta[3] = 1.0;
  DepthPosterior d(delta, {0.1});
  DepthPosterior u(uniform_prior(20), {0.1});
  ExposureControl c{0.25, TerminationMetric::Termination, 30};
  CHECK(should_stop(c, 30, d));
  CHECK_FALSE(should_stop(c, 29, d));
  CHECK_FALSE(should_stop(c, 1000, u));

  CHECK_THROWS(ExposureControl{0.0, TerminationMetric::Termination, 0}.validate());
  CHECK_THROWS(ExposureControl{1.0, TerminationMetric::Termination, 0}.validate());
  CHECK_NOTHROW(ExposureControl{1.5, TerminationMetric::Entropy, 0}.validate());
  CHECK_THROWS(ExposureControl{0.25, TerminationMetric::Termination, -1}.validate());
}

TEST_CASE("property: should_stop is monotone in epsilon") {
  const int B = 40;
  const auto cfg = SpadConfig::from_timing(100.0, 1.0 / (B * 100e-12), 20.0);
  const auto scene = SceneTransient::single_peak(B, 0.05, 13, 0.3);
  AdaptivePolicy p(known(B, 0.05));
  AcquisitionLimits limits;
  limits.max_cycles = 400;
  run_acquisition(scene, cfg, p, limits, 8);
  const std::vector<double> eps{0.01, 0.05, 0.1, 0.25, 0.5, 0.9, 0.99};
  for (auto metric : {TerminationMetric::Termination, TerminationMetric::Entropy}) {
    for (std::int64_t idx : {0, 50, 400}) {
      bool stopped = false;
      for (double e : eps) {
        const bool s = should_stop(ExposureControl{e, metric, 50}, idx, p.posterior());
        if (stopped) CHECK(s);
        stopped = stopped || s;
      }
    }
  }
}

TEST_CASE("adaptive exposure stops early on an easy scene") {
  const int B = 100;
  const auto cfg = SpadConfig::from_timing(100.0, 1.0 / (B * 100e-12), 20.0);
  const auto scene = SceneTransient::single_peak(B, 0.01, 66, 1.0);
  auto o = known(B, 0.01);
  o.exposure = ExposureControl{0.25, TerminationMetric::Termination, 10};
  AdaptivePolicy p(o);
  AcquisitionLimits limits;
  limits.max_cycles = 5000;
  const auto rec = run_acquisition(scene, cfg, p, limits, 9);
  CHECK(rec.size() < 5000);
  CHECK(rec.size() >= 10);
  CHECK(termination_value(p.posterior(), TerminationMetric::Termination) < 0.25);
  CHECK(map_depth(p.posterior()) == 66);
}

TEST_CASE("property: gates spread early and concentrate late") {
  const int B = 200;
  const auto cfg = SpadConfig::from_timing(100.0, 1.0 / (B * 100e-12), 20.0);
  int converged = 0;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const int d = static_cast<int>((seed * 37) % B);
    const auto scene = SceneTransient::single_peak(B, 0.02, d, 0.2);
    AdaptiveOptions o;
    o.num_bins = B;
    o.calibration_cycles = 20;
    AdaptivePolicy p(o);
    AcquisitionLimits limits;
    limits.max_cycles = 1000;
    const auto rec = run_acquisition(scene, cfg, p, limits, seed);
    if (map_depth(p.posterior()) != d) continue;
    ++converged;
    // Skip the calibration cycles; compare the first and last 10% of the rest.
    std::vector<int> early, late;
    const std::size_t n = rec.size() - 20;
    for (std::size_t k = 0; k < n / 10; ++k) {
      early.push_back(rec.cycles[20 + k].gate);
      late.push_back(rec.cycles[rec.size() - 1 - k].gate);
    }
    if (gate_entropy(early) > gate_entropy(late)) ++wins;
  }
  CHECK(converged >= 20);
  CHECK(wins == converged);
}

#include "spadgate/spadsim.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace spadgate {

std::int64_t arm_triggered(const SimState& state, const SpadConfig& cfg, int gate) {
  const int B = cfg.num_bins;
  if (gate < 0 || gate >= B) throw std::invalid_argument("arm_triggered: gate out of range");
  const std::int64_t phase = state.ready_time % B;
  std::int64_t wait = gate - phase;
  if (wait < 0) wait += B;
  return state.ready_time + wait;
}

std::pair<std::int64_t, int> arm_free_running(const SimState& state, const SpadConfig& cfg) {
  return {state.ready_time, static_cast<int>(state.ready_time % cfg.num_bins)};
}

namespace {

// Offset from arming of the first detection, scanning bin by bin.
std::optional<std::int64_t> first_detection_per_bin(const SceneTransient& scene, int gate,
                                                    std::int64_t horizon, Rng& rng) {
  for (std::int64_t o = 0; o < horizon; ++o) {
    const double r = scene.rate_wrapped(gate + o);
    if (r > 0.0 && uniform01(rng) < -std::expm1(-r)) return o;
  }
  return std::nullopt;
}

// Same law for an ambient floor with isolated peaks: between peaks the
// number of silent bins is geometric, so one draw covers a whole stretch.
std::optional<std::int64_t> first_detection_piecewise(const SceneTransient& scene, int gate,
                                                      std::int64_t horizon, Rng& rng) {
  const int B = scene.num_bins();
  const double ambient = scene.ambient_flux();
  const auto peaks = scene.merged_peaks();
  int phase = gate;
  std::int64_t o = 0;
  while (o < horizon) {
    const auto it = std::lower_bound(peaks.begin(), peaks.end(), phase,
                                     [](const Peak& p, int bin) { return p.bin < bin; });
    const int next = it == peaks.end() ? B : it->bin;
    const std::int64_t len = std::min<std::int64_t>(next - phase, horizon - o);
    if (len > 0) {
      if (ambient > 0.0) {
        const double skip = std::floor(-std::log(uniform_open0(rng)) / ambient);
        if (skip < static_cast<double>(len)) return o + static_cast<std::int64_t>(skip);
      }
      o += len;
      phase += static_cast<int>(len);
      if (o >= horizon) break;
    }
    if (phase == B) {
      phase = 0;
      continue;
    }
    const double r = ambient + it->signal_flux;
    if (uniform01(rng) < -std::expm1(-r)) return o;
    ++o;
    if (++phase == B) phase = 0;
  }
  return std::nullopt;
}

}  // namespace

CycleOutcome sample_cycle_at(const SceneTransient& scene, const SpadConfig& cfg, SimState& state,
                             std::int64_t arm_time, SamplingPath path) {
  const int B = cfg.num_bins;
  if (scene.num_bins() != B) {
    throw std::invalid_argument("sample_cycle: scene has " + std::to_string(scene.num_bins()) +
                                " bins, config has " + std::to_string(B));
  }
  if (arm_time < state.ready_time) throw std::invalid_argument("sample_cycle: arming during dead time");

  const int gate = static_cast<int>(arm_time % B);
  const std::int64_t horizon = static_cast<std::int64_t>(cfg.max_active_periods) * B;
  const std::optional<std::int64_t> hit =
      (path == SamplingPath::Auto && scene.piecewise_constant())
          ? first_detection_piecewise(scene, gate, horizon, state.rng)
          : first_detection_per_bin(scene, gate, horizon, state.rng);

  CycleOutcome out;
  out.gate = gate;
  std::int64_t ready = 0;
  if (hit) {
    const std::int64_t detection = arm_time + *hit;
    out.timestamp = static_cast<int>(detection % B);
    out.elapsed_periods = static_cast<int>(*hit / B);
    ready = detection + cfg.dead_time_bins;
  } else {
    out.elapsed_periods = cfg.max_active_periods;
    ready = arm_time + horizon;
  }
  out.duration_bins = ready - state.abs_time;
  state.abs_time = ready;
  state.ready_time = ready;
  return out;
}

CycleOutcome sample_cycle(const SceneTransient& scene, const SpadConfig& cfg, SimState& state,
                          int gate, SamplingPath path) {
  state.mode = AcquisitionMode::Triggered;
  return sample_cycle_at(scene, cfg, state, arm_triggered(state, cfg, gate), path);
}

AcquisitionRecord run_acquisition(const SceneTransient& scene, const SpadConfig& cfg,
                                  GatingPolicy& policy, const AcquisitionLimits& limits,
                                  std::uint64_t seed, SamplingPath path) {
  const int B = cfg.num_bins;
  SimState state(mix_seed(seed, 0));
  Rng policy_rng(mix_seed(seed, 1));
  AcquisitionRecord record;
  record.num_bins = B;

  while (static_cast<std::int64_t>(record.cycles.size()) < limits.max_cycles) {
    const GateDirective directive = policy.next_gate(policy_rng);
    std::int64_t arm = 0;
    if (directive.free_run) {
      state.mode = AcquisitionMode::FreeRunning;
      arm = arm_free_running(state, cfg).first;
    } else {
      if (directive.gate < 0 || directive.gate >= B) {
        throw ContractViolation("policy returned gate " + std::to_string(directive.gate) +
                                " outside [0, " + std::to_string(B) + ")");
      }
      state.mode = AcquisitionMode::Triggered;
      arm = arm_triggered(state, cfg, directive.gate);
    }
    if (arm >= limits.budget_bins) break;
    const CycleOutcome outcome = sample_cycle_at(scene, cfg, state, arm, path);
    if (state.ready_time > limits.budget_bins) break;
    record.cycles.push_back(outcome);
    record.exposure_bins += outcome.duration_bins;
    policy.observe(outcome);
    if (policy.should_stop()) break;
  }
  return record;
}

}  // namespace spadgate

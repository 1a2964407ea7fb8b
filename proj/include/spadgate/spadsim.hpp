#pragma once

#include <cstdint>
#include <limits>
#include <utility>

#include "spadgate/core.hpp"
#include "spadgate/policies.hpp"
#include "spadgate/rng.hpp"

namespace spadgate {

enum class AcquisitionMode { Triggered, FreeRunning };

/// Detector clock and random stream of one pixel acquisition. Times are in
/// absolute bins since acquisition start; after every cycle
/// abs_time == ready_time (the end of the cycle's dead time).
struct SimState {
  std::int64_t abs_time = 0;
  std::int64_t ready_time = 0;
  AcquisitionMode mode = AcquisitionMode::Triggered;
  Rng rng;

  explicit SimState(std::uint64_t seed) : rng(seed) {}
};

enum class SamplingPath {
  /// Geometric skips over constant-rate stretches when the scene allows it.
  Auto,
  /// One Bernoulli draw per bin.
  PerBin,
};

/// Smallest absolute bin >= ready_time whose phase equals the gate.
std::int64_t arm_triggered(const SimState& state, const SpadConfig& cfg, int gate);

/// Arming time (the ready time) and the effective gate it implies.
std::pair<std::int64_t, int> arm_free_running(const SimState& state, const SpadConfig& cfg);

/// Runs one cycle armed at `arm_time`: first photon detection or
/// censoring after cfg.max_active_periods periods, then dead time.
/// Advances the state to the end of the cycle.
CycleOutcome sample_cycle_at(const SceneTransient& scene, const SpadConfig& cfg, SimState& state,
                             std::int64_t arm_time, SamplingPath path = SamplingPath::Auto);

/// Triggered-mode cycle at a gate (arms via arm_triggered).
CycleOutcome sample_cycle(const SceneTransient& scene, const SpadConfig& cfg, SimState& state,
                          int gate, SamplingPath path = SamplingPath::Auto);

struct AcquisitionLimits {
  /// Exposure budget in bins; a cycle is recorded only if it ends within it.
  std::int64_t budget_bins = std::numeric_limits<std::int64_t>::max();
  std::int64_t max_cycles = std::numeric_limits<std::int64_t>::max();
};

/// Policy-driven acquisition loop. The simulator and the policy draw from
/// separate streams derived from `seed`. Throws ContractViolation when the
/// policy returns a gate outside [0, B).
AcquisitionRecord run_acquisition(const SceneTransient& scene, const SpadConfig& cfg,
                                  GatingPolicy& policy, const AcquisitionLimits& limits,
                                  std::uint64_t seed, SamplingPath path = SamplingPath::Auto);

}  // namespace spadgate

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spadgate/core.hpp"
#include "spadgate/posterior.hpp"

namespace spadgate {

/// Maximum-likelihood transient from a detected histogram.
struct TransientEstimate {
  std::vector<double> rates;
  std::vector<std::int64_t> denominators;
  /// Bins where every armed pass detected (N_i == D_i > 0); their rate is clamped.
  std::vector<bool> saturated;
};

/// r[i] = ln(D_i / (D_i - N_i)). Saturated bins use N_i -> D_i - 0.5; D_i == 0 gives 0.
TransientEstimate coates_transient(const DetectedHistogram& hist);

struct DepthEstimate {
  int bin = 0;
  bool degenerate = false;
};

/// Lowest-index argmax of the estimated transient. An all-zero estimate
/// returns bin 0 flagged degenerate.
DepthEstimate coates_depth(const TransientEstimate& est);

struct BackgroundEstimate {
  double ambient_flux = 0.0;
  bool low_confidence = false;
  std::int64_t detections = 0;
  int excluded_bins = 0;
};

struct BackgroundOptions {
  double fallback = 1e-3;
  std::int64_t min_detections = 10;
  /// At most this fraction of bins is excluded as signal.
  double exclusion_fraction = 0.05;
  /// A bin is excluded when its count is this improbable under the pooled rate.
  double exclusion_p_value = 1e-3;
};

/// Ambient flux from calibration cycles: pooled maximum-likelihood rate
/// over all bins after excluding up to `exclusion_fraction` of bins (highest
/// estimated rate first) whose counts are significant excesses.
BackgroundEstimate estimate_background(std::span<const CycleOutcome> calibration_cycles,
                                       int num_bins, const BackgroundOptions& options = {});

/// Number of calibration cycles for an acquisition of at most `max_cycles`:
/// ceil(fraction * max_cycles).
std::int64_t calibration_cycle_count(std::int64_t max_cycles, double fraction = 0.02);

/// Sub-bin peak location: quadratic least-squares fit to ln r over
/// [estimate - window, estimate + window] (positive rates only), vertex
/// clamped to the window. Returns the input bin when fewer than three
/// positive rates are available or the fit is not concave.
double dither_depth(const TransientEstimate& est, int estimate, int window = 3);

/// Batch posterior from a record: prior times the likelihood of every cycle.
DepthPosterior posterior_from_cycles(std::span<const double> prior_mass,
                                     std::vector<double> flux_grid,
                                     std::span<const CycleOutcome> cycles, double ambient_flux,
                                     int active_periods = 1);

}  // namespace spadgate

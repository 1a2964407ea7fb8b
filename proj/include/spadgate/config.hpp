#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spadgate/core.hpp"
#include "spadgate/policies.hpp"
#include "spadgate/scene.hpp"

namespace spadgate {

/// Invalid, incomplete or unreadable experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PolicySpec {
  PolicyKind kind = PolicyKind::Adaptive;
  /// Gate bin of a fixed policy.
  int gate = 0;
  /// Bins subtracted from the sampled hypothesis (adaptive only).
  int gate_offset = 0;
};

enum class PriorKind { Uniform, Flatness, External };

struct PriorSpec {
  PriorKind kind = PriorKind::Uniform;
  double sigma_bins = 10.0;
  double floor_weight = 0.1;
  /// External prior file (kind == External).
  std::string path;
};

enum class DepthEstimator { Map, Coates };

/// Pixel parameters for single-pixel studies and sweeps, or file paths for scans.
struct SceneSpec {
  std::optional<double> ambient_flux;
  /// Exactly one of signal_flux and sbr is set for single-pixel studies.
  std::optional<double> signal_flux;
  std::optional<double> sbr;
  /// Fixed true depth; when both are empty the depth is drawn per seed.
  std::optional<int> depth_bin;
  std::optional<double> depth_m;
  /// Raster scene files (scan only); empty flux paths use the scalars.
  std::string depth_map;
  std::string ambient_map;
  std::string signal_map;
  std::optional<MismatchKind> mismatch;

  /// signal_flux, or sbr * ambient.
  [[nodiscard]] double signal() const;
};

/// Optional sweep axes; an empty axis keeps the base value.
struct SweepAxes {
  std::vector<double> ambient_flux;
  std::vector<double> sbr;
  std::vector<double> dead_time_ns;
  std::vector<double> budget_us;

  [[nodiscard]] bool empty() const {
    return ambient_flux.empty() && sbr.empty() && dead_time_ns.empty() && budget_us.empty();
  }
};

/// Every setting of one experiment. Key names mirror the JSON file; see README.
struct ExperimentConfig {
  // [experiment]
  std::string id;
  std::uint64_t seed = 1;
  int seeds = 1;
  std::string output_dir = "out";
  DepthEstimator estimator = DepthEstimator::Map;
  bool dither = true;

  // [spad]
  double bin_resolution_ps = 100.0;
  double rep_rate_hz = 20e6;
  double dead_time_ns = 81.0;
  int max_active_periods = 16;

  SceneSpec scene;

  // [acquisition]
  double budget_us = 100.0;
  /// 0 means no cycle cap.
  std::int64_t max_cycles = 0;
  double calibration_fraction = 0.02;
  /// Use the true ambient flux instead of estimating it.
  bool known_ambient = false;

  // [exposure]
  bool adaptive_exposure = false;
  double epsilon = 0.25;
  TerminationMetric metric = TerminationMetric::Termination;
  /// Defaults to calibration cycles + 10.
  std::optional<std::int64_t> min_cycles;

  PriorSpec prior;

  // [flux_grid]
  int flux_grid_count = 16;
  double flux_low_factor = 0.1;
  double flux_high_factor = 100.0;
  /// Explicit grid; overrides the log-spaced one.
  std::vector<double> flux_values;

  std::vector<PolicySpec> policies;
  SweepAxes sweep;

  [[nodiscard]] SpadConfig spad() const;
  /// Throws ConfigError. Checks ranges and that referenced files exist.
  void validate() const;
};

std::string_view to_string(PriorKind kind);
std::string_view to_string(DepthEstimator estimator);

/// Parses JSON text. Unknown keys and missing required keys are reported
/// together, by dotted name. Validates the result.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

/// Full JSON form with every default written out.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace spadgate

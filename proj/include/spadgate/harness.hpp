#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spadgate/config.hpp"
#include "spadgate/core.hpp"
#include "spadgate/parallel.hpp"
#include "spadgate/scene.hpp"

namespace spadgate {

/// One acquisition and its depth estimate. Non-scan rows have x = y = -1.
struct ResultRow {
  std::string experiment_id;
  std::string policy;
  int x = -1;
  int y = -1;
  double ambient_flux = 0.0;
  double signal_flux = 0.0;
  double sbr = 0.0;
  double dead_time_ns = 0.0;
  double budget_us = 0.0;
  std::uint64_t seed = 0;
  int true_depth_bin = 0;
  double true_depth_m = 0.0;
  int est_depth_bin = 0;
  double est_depth_subbin = 0.0;
  double est_depth_m = 0.0;
  int loss01 = 0;
  double termination = 0.0;
  double entropy = 0.0;
  std::int64_t cycles = 0;
  double exposure_us = 0.0;
  std::int64_t detections_true_bin = 0;
  /// "ok", "ok: depth clamped" or "failed: <reason>".
  std::string status = "ok";

  [[nodiscard]] bool ok() const { return status.rfind("ok", 0) == 0; }
};

/// CSV column names in output order.
const std::vector<std::string>& result_columns();

/// Everything a single acquisition needs beyond the config.
struct PixelParams {
  int x = -1;
  int y = -1;
  double ambient_flux = 0.0;
  double signal_flux = 0.0;
  /// Empty means drawn uniformly from the seed.
  std::optional<int> depth_bin;
  std::optional<MismatchKind> mismatch;
  /// Depth prior mass; empty means uniform.
  std::vector<double> prior;
  std::string prior_tag = "uniform";
  /// Distinguishes pixels that share a seed.
  std::uint64_t stream = 0;
};

/// Single-pixel parameters from cfg.scene.
PixelParams pixel_params(const ExperimentConfig& cfg);

/// True depth drawn for a seed when the config leaves it open.
int random_depth_bin(std::uint64_t seed, int num_bins);

/// Simulates one acquisition under `policy` within cfg's exposure budget,
/// then estimates the depth (MAP or Coates, optionally dithered). Any
/// exception is recorded in the row status instead of propagating.
ResultRow run_pixel_experiment(const ExperimentConfig& cfg, const PixelParams& pixel,
                               const PolicySpec& policy, std::uint64_t seed);

/// Seed of the k-th repetition.
std::uint64_t row_seed(const ExperimentConfig& cfg, int k);

struct GroupMetrics {
  std::string key;
  std::size_t count = 0;
  std::size_t failed = 0;
  double rmse_m = 0.0;
  double rmse_bins = 0.0;
  double mean_loss01 = 0.0;
  double median_abs_error_bins = 0.0;
  double mean_exposure_us = 0.0;
  double mean_cycles = 0.0;
  double mean_termination = 0.0;
};

struct MetricsReport {
  GroupMetrics overall;
  /// Per (policy, ambient, sbr, dead time, budget), in first-appearance order.
  std::vector<GroupMetrics> groups;
};

/// Aggregates over successful rows in row order. Bin errors convert to
/// meters at c * bin width / 2. Throws std::invalid_argument on empty input.
MetricsReport compute_metrics(std::span<const ResultRow> rows, double bin_resolution_ps);

struct RunResult {
  std::vector<ResultRow> rows;
  MetricsReport metrics;
  std::size_t failures = 0;
};

/// Policies x seeds at the base scene parameters.
RunResult run_pixel_study(const ExperimentConfig& cfg, int threads = 1);

/// Cartesian product of the sweep axes x policies x seeds. Rows come out in
/// (point, policy, seed) order whatever the thread count.
RunResult run_sweep(const ExperimentConfig& cfg, int threads = 1);

/// Per-pixel output grids of one scan; failed pixels hold NaN.
struct ScanMaps {
  std::string policy;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  std::vector<double> depth_m;
  std::vector<double> error_m;
  std::vector<double> entropy;
  std::vector<double> exposure_us;
};

struct ScanResult {
  RunResult run;
  std::vector<ScanMaps> maps;
};

/// Serpentine scan of the scene grid for every policy and seed, chaining the
/// configured prior. Scans run in parallel; pixels within a scan are sequential.
ScanResult run_scene_scan(const ExperimentConfig& cfg, int threads = 1);

void write_scan_maps(const ScanResult& result, const std::string& directory);

/// RFC 4180 CSV with a header, 9 significant digits and LF line endings.
void emit_csv(std::span<const ResultRow> rows, const std::string& path);
std::vector<ResultRow> read_csv(const std::string& path);
void emit_summary_csv(const MetricsReport& report, const std::string& path);

}  // namespace spadgate

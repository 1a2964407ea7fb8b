#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace spadgate {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Number of temporal bins between pulse emissions, floor(1 / (bin width * repetition rate)).
/// Throws std::invalid_argument for non-positive inputs.
int derive_bins(double bin_resolution_ps, double rep_rate_hz);

/// Detector timing constants. Construct through from_timing() so the derived
/// fields stay consistent.
struct SpadConfig {
  double bin_resolution_ps = 100.0;
  double rep_rate_hz = 20e6;
  int num_bins = 500;
  double dead_time_ns = 81.0;
  int dead_time_bins = 810;
  /// A cycle that stays armed this many whole periods without a detection is censored.
  int max_active_periods = 16;

  static SpadConfig from_timing(double bin_resolution_ps, double rep_rate_hz,
                                double dead_time_ns, int max_active_periods = 16);

  void validate() const;

  /// Depth extent of one bin, c * bin width / 2, in meters.
  [[nodiscard]] double bin_depth_m() const;
  [[nodiscard]] std::int64_t us_to_bins(double microseconds) const;
  [[nodiscard]] double bins_to_us(std::int64_t bins) const;
};

/// ceil(dead_time / bin width), at least one bin.
int dead_time_to_bins(double dead_time_ns, double bin_resolution_ps);

struct Peak {
  int bin = 0;
  double signal_flux = 0.0;  // photons per pulse
};

/// Exponentially decaying multi-bounce tail: amplitude * exp(-decay_rate * (i - start_bin)) for i > start_bin.
struct Tail {
  int start_bin = 0;
  double amplitude = 0.0;
  double decay_rate = 1.0;
};

/// Per-bin incident photon rate of one pixel: ambient floor plus delta peaks
/// plus an optional tail, or an explicit rate array. Immutable.
class SceneTransient {
 public:
  SceneTransient(int num_bins, double ambient_flux, std::vector<Peak> peaks = {},
                 std::optional<Tail> tail = std::nullopt);

  static SceneTransient single_peak(int num_bins, double ambient_flux, int depth_bin,
                                    double signal_flux);
  static SceneTransient from_rates(std::vector<double> rates);

  [[nodiscard]] int num_bins() const { return num_bins_; }
  [[nodiscard]] double ambient_flux() const { return ambient_; }
  [[nodiscard]] std::span<const Peak> peaks() const { return peaks_; }
  [[nodiscard]] const std::optional<Tail>& tail() const { return tail_; }

  /// Rate at bin in [0, B); throws std::invalid_argument otherwise.
  [[nodiscard]] double rate(int bin) const;
  /// Rate at bin mod B (any integer bin).
  [[nodiscard]] double rate_wrapped(std::int64_t bin) const;
  /// Sum of the rate over one period.
  [[nodiscard]] double total_rate() const { return total_; }
  /// True when the rate is constant except at isolated peak bins.
  [[nodiscard]] bool piecewise_constant() const { return rates_.empty() && !tail_; }
  /// Sorted peak bins with coincident peaks merged (piecewise-constant scenes).
  [[nodiscard]] std::span<const Peak> merged_peaks() const { return merged_; }

  /// Same transient delayed by `shift` bins (indices mod B).
  [[nodiscard]] SceneTransient shifted(int shift) const;

  [[nodiscard]] std::vector<double> materialize() const;

 private:
  SceneTransient() = default;
  [[nodiscard]] double rate_unchecked(int bin) const;
  void finalize();

  int num_bins_ = 0;
  double ambient_ = 0.0;
  std::vector<Peak> peaks_;
  std::optional<Tail> tail_;
  std::vector<double> rates_;  // non-empty only for explicit-array scenes
  std::vector<Peak> merged_;
  double total_ = 0.0;
};

/// One SPAD cycle: gate, folded detection bin (if any), whole periods that
/// elapsed after arming before the detecting period, and absolute time consumed.
struct CycleOutcome {
  int gate = 0;
  std::optional<int> timestamp;
  int elapsed_periods = 0;
  std::int64_t duration_bins = 0;

  [[nodiscard]] bool detected() const { return timestamp.has_value(); }
};

/// Gate/timestamp sequence of one pixel acquisition.
struct AcquisitionRecord {
  int num_bins = 0;
  std::vector<CycleOutcome> cycles;
  std::int64_t exposure_bins = 0;

  [[nodiscard]] std::size_t size() const { return cycles.size(); }
  [[nodiscard]] std::size_t detections() const;
};

/// log(1 - exp(-x)) for x >= 0; -inf at x == 0.
double log1mexp(double x);

/// Probability that a cycle armed at gate g fires first at absolute bin t,
/// t in [g, g + B). Throws std::invalid_argument for t outside that window.
double detection_likelihood(const SceneTransient& scene, std::int64_t t, int gate);
double log_detection_likelihood(const SceneTransient& scene, std::int64_t t, int gate);

/// Probability of no detection within one period after arming; independent of the gate.
double no_detection_probability(const SceneTransient& scene);
double no_detection_probability(const SceneTransient& scene, int gate);

/// Absolute detection bin in [g, g + B) for a folded timestamp.
std::int64_t unfold_timestamp(int folded, int gate, int num_bins);

/// Log-likelihood of one cycle outcome. With active_periods K > 1 the folded
/// detection term is the single-period likelihood times (1 - e^{-K S}) / (1 - e^{-S})
/// and a censored cycle carries e^{-K S}, S = total rate. K == 1 gives the
/// single-period model with an explicit no-detection outcome.
double log_cycle_likelihood(const SceneTransient& scene, const CycleOutcome& cycle,
                            int active_periods = 1);

/// Sum of per-cycle log-likelihoods; -inf for an impossible observation.
double sequence_log_likelihood(const SceneTransient& scene, std::span<const CycleOutcome> cycles,
                               int active_periods = 1);
double sequence_log_likelihood(const SceneTransient& scene, const AcquisitionRecord& record,
                               int active_periods = 1);

/// Detection-time distribution for gate 0 over t in [0, B).
std::vector<double> pileup_distribution(const SceneTransient& scene);
/// Same for an arbitrary gate; entry i is the probability of a folded detection at bin i.
std::vector<double> folded_detection_distribution(const SceneTransient& scene, int gate);

struct DetectedHistogram {
  std::vector<std::int64_t> counts;
  /// Number of cycle-passes in which each bin was armed and not yet triggered.
  std::vector<std::int64_t> denominators;
};

/// Histogram of detections plus the armed-bin denominators. Whole periods
/// elapsed before the detecting period count toward every bin.
DetectedHistogram timestamps_to_histogram(std::span<const CycleOutcome> cycles, int num_bins);
DetectedHistogram timestamps_to_histogram(const AcquisitionRecord& record, int num_bins);

}  // namespace spadgate

#include "spadgate/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace spadgate {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

int derive_bins(double bin_resolution_ps, double rep_rate_hz) {
  require(bin_resolution_ps > 0.0 && std::isfinite(bin_resolution_ps),
          "derive_bins: bin resolution must be positive");
  require(rep_rate_hz > 0.0 && std::isfinite(rep_rate_hz),
          "derive_bins: repetition rate must be positive");
  // Period in picoseconds over bin width; the relative nudge absorbs
  // representation error in exact ratios such as 1e12 / (100 * 2e7).
  const double ratio = 1e12 / (bin_resolution_ps * rep_rate_hz);
  const double bins = std::floor(ratio * (1.0 + 1e-12));
  require(bins >= 1.0, "derive_bins: bin wider than the pulse period");
  require(bins <= static_cast<double>(std::numeric_limits<int>::max()),
          "derive_bins: too many bins");
  return static_cast<int>(bins);
}

int dead_time_to_bins(double dead_time_ns, double bin_resolution_ps) {
  require(dead_time_ns > 0.0, "dead time must be positive");
  require(bin_resolution_ps > 0.0, "bin resolution must be positive");
  const double bins = std::ceil(dead_time_ns * 1000.0 / bin_resolution_ps * (1.0 - 1e-12));
  return std::max(1, static_cast<int>(bins));
}

SpadConfig SpadConfig::from_timing(double bin_resolution_ps, double rep_rate_hz,
                                   double dead_time_ns, int max_active_periods) {
  SpadConfig cfg;
  cfg.bin_resolution_ps = bin_resolution_ps;
  cfg.rep_rate_hz = rep_rate_hz;
  cfg.num_bins = derive_bins(bin_resolution_ps, rep_rate_hz);
  cfg.dead_time_ns = dead_time_ns;
  cfg.dead_time_bins = dead_time_to_bins(dead_time_ns, bin_resolution_ps);
  cfg.max_active_periods = max_active_periods;
  cfg.validate();
  return cfg;
}

void SpadConfig::validate() const {
  require(bin_resolution_ps > 0.0, "SpadConfig: bin_resolution_ps must be positive");
  require(rep_rate_hz > 0.0, "SpadConfig: rep_rate_hz must be positive");
  require(num_bins > 0, "SpadConfig: num_bins must be positive");
  require(dead_time_ns > 0.0, "SpadConfig: dead_time_ns must be positive");
  require(dead_time_bins >= 1, "SpadConfig: dead_time_bins must be >= 1");
  require(max_active_periods >= 1, "SpadConfig: max_active_periods must be >= 1");
}

double SpadConfig::bin_depth_m() const {
  return kSpeedOfLight * bin_resolution_ps * 1e-12 / 2.0;
}

std::int64_t SpadConfig::us_to_bins(double microseconds) const {
  return static_cast<std::int64_t>(std::llround(microseconds * 1e6 / bin_resolution_ps));
}

double SpadConfig::bins_to_us(std::int64_t bins) const {
  return static_cast<double>(bins) * bin_resolution_ps * 1e-6;
}

// --- SceneTransient --------------------------------------------------------

SceneTransient::SceneTransient(int num_bins, double ambient_flux, std::vector<Peak> peaks,
                               std::optional<Tail> tail)
    : num_bins_(num_bins), ambient_(ambient_flux), peaks_(std::move(peaks)), tail_(tail) {
  require(num_bins_ > 0, "SceneTransient: num_bins must be positive");
  require(ambient_ >= 0.0 && std::isfinite(ambient_), "SceneTransient: ambient flux must be >= 0");
  for (const Peak& p : peaks_) {
    require(p.bin >= 0 && p.bin < num_bins_, "SceneTransient: peak bin out of range");
    require(p.signal_flux >= 0.0 && std::isfinite(p.signal_flux),
            "SceneTransient: signal flux must be >= 0");
  }
  if (tail_) {
    require(tail_->start_bin >= 0 && tail_->start_bin < num_bins_,
            "SceneTransient: tail start out of range");
    require(tail_->amplitude >= 0.0, "SceneTransient: tail amplitude must be >= 0");
    require(tail_->decay_rate >= 0.0, "SceneTransient: tail decay must be >= 0");
    if (tail_->amplitude == 0.0) tail_.reset();
  }
  finalize();
}

SceneTransient SceneTransient::single_peak(int num_bins, double ambient_flux, int depth_bin,
                                           double signal_flux) {
  return SceneTransient(num_bins, ambient_flux, {Peak{depth_bin, signal_flux}});
}

SceneTransient SceneTransient::from_rates(std::vector<double> rates) {
  require(!rates.empty(), "SceneTransient: empty rate array");
  for (double r : rates) {
    require(r >= 0.0 && std::isfinite(r), "SceneTransient: rates must be finite and >= 0");
  }
  SceneTransient s;
  s.num_bins_ = static_cast<int>(rates.size());
  s.ambient_ = *std::min_element(rates.begin(), rates.end());
  s.rates_ = std::move(rates);
  s.finalize();
  return s;
}

void SceneTransient::finalize() {
  merged_.clear();
  if (rates_.empty()) {
    std::vector<Peak> sorted = peaks_;
    std::sort(sorted.begin(), sorted.end(),
              [](const Peak& a, const Peak& b) { return a.bin < b.bin; });
    for (const Peak& p : sorted) {
      if (p.signal_flux == 0.0) continue;
      if (!merged_.empty() && merged_.back().bin == p.bin) {
        merged_.back().signal_flux += p.signal_flux;
      } else {
        merged_.push_back(p);
      }
    }
  }
  total_ = 0.0;
  for (int i = 0; i < num_bins_; ++i) total_ += rate_unchecked(i);
}

double SceneTransient::rate_unchecked(int bin) const {
  if (!rates_.empty()) return rates_[static_cast<std::size_t>(bin)];
  double r = ambient_;
  for (const Peak& p : peaks_) {
    if (p.bin == bin) r += p.signal_flux;
  }
  if (tail_ && bin > tail_->start_bin) {
    r += tail_->amplitude * std::exp(-tail_->decay_rate * (bin - tail_->start_bin));
  }
  return r;
}

double SceneTransient::rate(int bin) const {
  if (bin < 0 || bin >= num_bins_) {
    throw std::invalid_argument("SceneTransient::rate: bin " + std::to_string(bin) +
                                " outside [0, " + std::to_string(num_bins_) + ")");
  }
  return rate_unchecked(bin);
}

double SceneTransient::rate_wrapped(std::int64_t bin) const {
  std::int64_t m = bin % num_bins_;
  if (m < 0) m += num_bins_;
  return rate_unchecked(static_cast<int>(m));
}

SceneTransient SceneTransient::shifted(int shift) const {
  auto wrap = [&](int i) {
    int m = (i + shift) % num_bins_;
    return m < 0 ? m + num_bins_ : m;
  };
  if (!rates_.empty() || tail_) {
    std::vector<double> out(static_cast<std::size_t>(num_bins_));
    for (int i = 0; i < num_bins_; ++i) out[static_cast<std::size_t>(wrap(i))] = rate_unchecked(i);
    return from_rates(std::move(out));
  }
  std::vector<Peak> moved = peaks_;
  for (Peak& p : moved) p.bin = wrap(p.bin);
  return SceneTransient(num_bins_, ambient_, std::move(moved));
}

std::vector<double> SceneTransient::materialize() const {
  std::vector<double> out(static_cast<std::size_t>(num_bins_));
  for (int i = 0; i < num_bins_; ++i) out[static_cast<std::size_t>(i)] = rate_unchecked(i);
  return out;
}

std::size_t AcquisitionRecord::detections() const {
  return static_cast<std::size_t>(
      std::count_if(cycles.begin(), cycles.end(), [](const CycleOutcome& c) { return c.detected(); }));
}

// --- likelihoods -----------------------------------------------------------

double log1mexp(double x) {
  if (x <= 0.0) return kNegInf;
  if (x < 0.6931471805599453) return std::log(-std::expm1(-x));
  return std::log1p(-std::exp(-x));
}

namespace {

void check_window(std::int64_t t, int gate, int num_bins) {
  if (gate < 0 || gate >= num_bins) {
    throw std::invalid_argument("gate " + std::to_string(gate) + " outside [0, " +
                                std::to_string(num_bins) + ")");
  }
  if (t < gate || t >= static_cast<std::int64_t>(gate) + num_bins) {
    throw std::invalid_argument("timestamp " + std::to_string(t) + " outside [" +
                                std::to_string(gate) + ", " + std::to_string(gate + num_bins) + ")");
  }
}

}  // namespace

double log_detection_likelihood(const SceneTransient& scene, std::int64_t t, int gate) {
  check_window(t, gate, scene.num_bins());
  double passed = 0.0;
  for (std::int64_t tau = gate; tau < t; ++tau) passed += scene.rate_wrapped(tau);
  return log1mexp(scene.rate_wrapped(t)) - passed;
}

double detection_likelihood(const SceneTransient& scene, std::int64_t t, int gate) {
  check_window(t, gate, scene.num_bins());
  double passed = 0.0;
  for (std::int64_t tau = gate; tau < t; ++tau) passed += scene.rate_wrapped(tau);
  return -std::expm1(-scene.rate_wrapped(t)) * std::exp(-passed);
}

double no_detection_probability(const SceneTransient& scene) {
  return std::exp(-scene.total_rate());
}

double no_detection_probability(const SceneTransient& scene, int gate) {
  require(gate >= 0 && gate < scene.num_bins(), "no_detection_probability: gate out of range");
  return no_detection_probability(scene);
}

std::int64_t unfold_timestamp(int folded, int gate, int num_bins) {
  int offset = (folded - gate) % num_bins;
  if (offset < 0) offset += num_bins;
  return static_cast<std::int64_t>(gate) + offset;
}

double log_cycle_likelihood(const SceneTransient& scene, const CycleOutcome& cycle,
                            int active_periods) {
  require(active_periods >= 1, "active_periods must be >= 1");
  const int B = scene.num_bins();
  require(cycle.gate >= 0 && cycle.gate < B, "cycle gate out of range");
  const double S = scene.total_rate();
  const double K = static_cast<double>(active_periods);
  if (!cycle.detected()) return -K * S;
  require(*cycle.timestamp >= 0 && *cycle.timestamp < B, "cycle timestamp out of range");
  const std::int64_t t = unfold_timestamp(*cycle.timestamp, cycle.gate, B);
  double ll = log_detection_likelihood(scene, t, cycle.gate);
  if (active_periods > 1) {
    if (S <= 0.0) return kNegInf;
    ll += log1mexp(K * S) - log1mexp(S);
  }
  return ll;
}

double sequence_log_likelihood(const SceneTransient& scene, std::span<const CycleOutcome> cycles,
                               int active_periods) {
  double total = 0.0;
  for (const CycleOutcome& c : cycles) {
    const double ll = log_cycle_likelihood(scene, c, active_periods);
    if (ll == kNegInf) return kNegInf;
    total += ll;
  }
  return total;
}

double sequence_log_likelihood(const SceneTransient& scene, const AcquisitionRecord& record,
                               int active_periods) {
  return sequence_log_likelihood(scene, std::span<const CycleOutcome>(record.cycles),
                                 active_periods);
}

std::vector<double> folded_detection_distribution(const SceneTransient& scene, int gate) {
  const int B = scene.num_bins();
  require(gate >= 0 && gate < B, "folded_detection_distribution: gate out of range");
  std::vector<double> out(static_cast<std::size_t>(B));
  double passed = 0.0;
  for (int k = 0; k < B; ++k) {
    const int bin = (gate + k) % B;
    const double r = scene.rate(bin);
    out[static_cast<std::size_t>(bin)] = -std::expm1(-r) * std::exp(-passed);
    passed += r;
  }
  return out;
}

std::vector<double> pileup_distribution(const SceneTransient& scene) {
  return folded_detection_distribution(scene, 0);
}

DetectedHistogram timestamps_to_histogram(std::span<const CycleOutcome> cycles, int num_bins) {
  require(num_bins > 0, "timestamps_to_histogram: num_bins must be positive");
  const auto B = static_cast<std::size_t>(num_bins);
  DetectedHistogram h{std::vector<std::int64_t>(B, 0), std::vector<std::int64_t>(B, 0)};
  std::int64_t full_passes = 0;
  for (const CycleOutcome& c : cycles) {
    require(c.gate >= 0 && c.gate < num_bins, "timestamps_to_histogram: gate out of range");
    full_passes += c.elapsed_periods;
    if (!c.detected()) continue;
    const int t = *c.timestamp;
    require(t >= 0 && t < num_bins, "timestamps_to_histogram: timestamp out of range");
    h.counts[static_cast<std::size_t>(t)] += 1;
    const std::int64_t end = unfold_timestamp(t, c.gate, num_bins);
    for (std::int64_t tau = c.gate; tau <= end; ++tau) {
      h.denominators[static_cast<std::size_t>(tau % num_bins)] += 1;
    }
  }
  if (full_passes > 0) {
    for (auto& d : h.denominators) d += full_passes;
  }
  return h;
}

DetectedHistogram timestamps_to_histogram(const AcquisitionRecord& record, int num_bins) {
  return timestamps_to_histogram(std::span<const CycleOutcome>(record.cycles), num_bins);
}

}  // namespace spadgate

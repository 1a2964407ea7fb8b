#include "spadgate/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace spadgate {

TransientEstimate coates_transient(const DetectedHistogram& hist) {
  if (hist.counts.size() != hist.denominators.size()) {
    throw std::invalid_argument("coates_transient: counts and denominators differ in length");
  }
  const std::size_t B = hist.counts.size();
  TransientEstimate est{std::vector<double>(B, 0.0), hist.denominators, std::vector<bool>(B, false)};
  for (std::size_t i = 0; i < B; ++i) {
    const auto n = static_cast<double>(hist.counts[i]);
    const auto d = static_cast<double>(hist.denominators[i]);
    if (hist.denominators[i] <= 0) continue;
    if (hist.counts[i] > hist.denominators[i]) {
      throw std::invalid_argument("coates_transient: count exceeds denominator");
    }
    if (hist.counts[i] == hist.denominators[i]) {
      est.saturated[i] = true;
      est.rates[i] = std::log(d / 0.5);
    } else {
      est.rates[i] = std::log(d / (d - n));
    }
  }
  return est;
}

DepthEstimate coates_depth(const TransientEstimate& est) {
  if (est.rates.empty()) return {0, true};
  const int bin = argmax_lowest(est.rates);
  return {bin, !(est.rates[static_cast<std::size_t>(bin)] > 0.0)};
}

namespace {

// P(X >= n) for X ~ Poisson(mean).
double poisson_upper_tail(std::int64_t n, double mean) {
  if (n <= 0) return 1.0;
  if (mean <= 0.0) return 0.0;
  if (mean > 200.0) {
    const double z = (static_cast<double>(n) - 0.5 - mean) / std::sqrt(mean);
    return 0.5 * std::erfc(z / std::sqrt(2.0));
  }
  double term = std::exp(-mean);
  double cdf = term;
  for (std::int64_t k = 1; k < n; ++k) {
    term *= mean / static_cast<double>(k);
    cdf += term;
  }
  return std::max(0.0, 1.0 - cdf);
}

double pooled_rate(const DetectedHistogram& h, const std::vector<bool>& excluded) {
  double n = 0.0;
  double d = 0.0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (excluded[i]) continue;
    n += static_cast<double>(h.counts[i]);
    d += static_cast<double>(h.denominators[i]);
  }
  if (d <= 0.0 || n <= 0.0) return 0.0;
  if (n >= d) return std::log(d / 0.5);
  return std::log(d / (d - n));
}

}  // namespace

BackgroundEstimate estimate_background(std::span<const CycleOutcome> calibration_cycles,
                                       int num_bins, const BackgroundOptions& options) {
  const DetectedHistogram h = timestamps_to_histogram(calibration_cycles, num_bins);
  BackgroundEstimate out;
  out.detections = std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0});
  if (out.detections < options.min_detections) {
    out.ambient_flux = options.fallback;
    out.low_confidence = true;
    return out;
  }

  const TransientEstimate est = coates_transient(h);
  const std::size_t B = h.counts.size();
  std::vector<bool> excluded(B, false);
  const double pooled = pooled_rate(h, excluded);
  const double p_visit = -std::expm1(-pooled);

  std::vector<std::size_t> order(B);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return est.rates[a] > est.rates[b]; });
  const auto max_excluded = static_cast<std::size_t>(
      std::ceil(options.exclusion_fraction * static_cast<double>(B)));
  for (std::size_t k = 0; k < max_excluded && k < B; ++k) {
    const std::size_t i = order[k];
    const double expected = static_cast<double>(h.denominators[i]) * p_visit;
    if (poisson_upper_tail(h.counts[i], expected) < options.exclusion_p_value) {
      excluded[i] = true;
      ++out.excluded_bins;
    }
  }

  const double rate = pooled_rate(h, excluded);
  if (rate > 0.0 && std::isfinite(rate)) {
    out.ambient_flux = rate;
  } else {
    out.ambient_flux = options.fallback;
    out.low_confidence = true;
  }
  return out;
}

std::int64_t calibration_cycle_count(std::int64_t max_cycles, double fraction) {
  if (max_cycles <= 0 || fraction <= 0.0) return 0;
  return static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(max_cycles) - 1e-9));
}

double dither_depth(const TransientEstimate& est, int estimate, int window) {
  const int B = static_cast<int>(est.rates.size());
  if (window < 1) throw std::invalid_argument("dither_depth: window must be >= 1");
  if (estimate < 0 || estimate >= B) throw std::invalid_argument("dither_depth: estimate out of range");

  // Least squares for y = a x^2 + b x + c with x centred on the estimate.
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
  int used = 0;
  const int lo = std::max(0, estimate - window);
  const int hi = std::min(B - 1, estimate + window);
  for (int i = lo; i <= hi; ++i) {
    const double r = est.rates[static_cast<std::size_t>(i)];
    if (!(r > 0.0)) continue;
    const double x = i - estimate;
    const double y = std::log(r);
    s0 += 1;
    s1 += x;
    s2 += x * x;
    s3 += x * x * x;
    s4 += x * x * x * x;
    t0 += y;
    t1 += x * y;
    t2 += x * x * y;
    ++used;
  }
  if (used < 3) return estimate;

  // Normal equations [s4 s3 s2; s3 s2 s1; s2 s1 s0] [a b c]^T = [t2 t1 t0]^T by Cramer's rule.
  auto det3 = [](double a11, double a12, double a13, double a21, double a22, double a23, double a31,
                 double a32, double a33) {
    return a11 * (a22 * a33 - a23 * a32) - a12 * (a21 * a33 - a23 * a31) +
           a13 * (a21 * a32 - a22 * a31);
  };
  const double det = det3(s4, s3, s2, s3, s2, s1, s2, s1, s0);
  if (std::abs(det) < 1e-12) return estimate;
  const double a = det3(t2, s3, s2, t1, s2, s1, t0, s1, s0) / det;
  const double b = det3(s4, t2, s2, s3, t1, s1, s2, t0, s0) / det;
  if (!(a < -1e-12)) return estimate;
  const double vertex = -b / (2.0 * a);
  const double clamped = std::clamp(vertex, static_cast<double>(lo - estimate),
                                    static_cast<double>(hi - estimate));
  return estimate + clamped;
}

DepthPosterior posterior_from_cycles(std::span<const double> prior_mass,
                                     std::vector<double> flux_grid,
                                     std::span<const CycleOutcome> cycles, double ambient_flux,
                                     int active_periods) {
  DepthPosterior post(prior_mass, std::move(flux_grid));
  for (const CycleOutcome& c : cycles) post.update(c, ambient_flux, active_periods);
  return post;
}

}  // namespace spadgate

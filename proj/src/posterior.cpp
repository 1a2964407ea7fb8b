#include "spadgate/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace spadgate {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Renormalize a slice once its maximum may have fallen this far (nats).
constexpr double kMaxDrift = 200.0;

}  // namespace

DepthPosterior::DepthPosterior(std::span<const double> prior_mass, std::vector<double> flux_grid,
                               std::string prior_tag)
    : num_bins_(static_cast<int>(prior_mass.size())),
      flux_(std::move(flux_grid)),
      prior_tag_(std::move(prior_tag)) {
  if (prior_mass.empty()) throw std::invalid_argument("DepthPosterior: empty prior");
  if (flux_.empty()) throw std::invalid_argument("DepthPosterior: empty flux grid");
  for (double f : flux_) {
    if (!(f >= 0.0) || !std::isfinite(f)) {
      throw std::invalid_argument("DepthPosterior: flux grid entries must be finite and >= 0");
    }
  }
  double max_prior = 0.0;
  double sum_prior = 0.0;
  for (double p : prior_mass) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("DepthPosterior: prior mass must be finite and >= 0");
    }
    max_prior = std::max(max_prior, p);
    sum_prior += p;
  }
  if (!(sum_prior > 0.0)) throw std::invalid_argument("DepthPosterior: prior mass is all zero");

  const int G = num_flux();
  const double base = std::log(max_prior / sum_prior) - std::log(static_cast<double>(G));
  offset_.assign(static_cast<std::size_t>(G), base);
  drift_.assign(static_cast<std::size_t>(G), 0.0);
  rel_.resize(static_cast<std::size_t>(G) * prior_mass.size());
  weight_.resize(rel_.size());
  for (int s = 0; s < G; ++s) {
    for (int d = 0; d < num_bins_; ++d) {
      const double ratio = prior_mass[static_cast<std::size_t>(d)] / max_prior;
      rel_[cell(s, d)] = ratio > 0.0 ? std::log(ratio) : kNegInf;
      weight_[cell(s, d)] = ratio;
    }
  }
}

void DepthPosterior::renormalize_slice(int s) {
  const std::size_t begin = cell(s, 0);
  const std::size_t end = begin + static_cast<std::size_t>(num_bins_);
  const double m = *std::max_element(rel_.begin() + static_cast<std::ptrdiff_t>(begin),
                                     rel_.begin() + static_cast<std::ptrdiff_t>(end));
  drift_[static_cast<std::size_t>(s)] = 0.0;
  if (m == kNegInf) {
    offset_[static_cast<std::size_t>(s)] = kNegInf;
    return;
  }
  offset_[static_cast<std::size_t>(s)] += m;
  for (std::size_t i = begin; i < end; ++i) {
    rel_[i] -= m;
    weight_[i] = std::exp(rel_[i]);
  }
}

bool DepthPosterior::update(const CycleOutcome& cycle, double ambient, int active_periods) {
  const int B = num_bins_;
  if (cycle.gate < 0 || cycle.gate >= B) throw std::invalid_argument("DepthPosterior: gate out of range");
  if (!(ambient >= 0.0) || !std::isfinite(ambient)) {
    throw std::invalid_argument("DepthPosterior: ambient flux must be finite and >= 0");
  }
  if (active_periods < 1) throw std::invalid_argument("DepthPosterior: active_periods must be >= 1");
  const double K = static_cast<double>(active_periods);
  const int G = num_flux();

  if (!cycle.detected()) {
    for (int s = 0; s < G; ++s) {
      double& off = offset_[static_cast<std::size_t>(s)];
      if (off == kNegInf) continue;
      off -= K * (B * ambient + flux_[static_cast<std::size_t>(s)]);
    }
    ++updates_;
    return true;
  }

  const int t = *cycle.timestamp;
  if (t < 0 || t >= B) throw std::invalid_argument("DepthPosterior: timestamp out of range");
  const int window = static_cast<int>(unfold_timestamp(t, cycle.gate, B) - cycle.gate);

  auto folding = [&](double total) {
    return active_periods > 1 ? log1mexp(K * total) - log1mexp(total) : 0.0;
  };

  if (ambient > 0.0) {
    const double log_bkg = log1mexp(ambient);
    for (int s = 0; s < G; ++s) {
      const auto su = static_cast<std::size_t>(s);
      if (offset_[su] == kNegInf) continue;
      const double phi = flux_[su];
      offset_[su] += -ambient * window + log_bkg + folding(B * ambient + phi);
      if (phi > 0.0 && window > 0) {
        const double factor = std::exp(-phi);
        int d = cycle.gate;
        for (int k = 0; k < window; ++k) {
          const std::size_t c = cell(s, d);
          rel_[c] -= phi;
          weight_[c] *= factor;
          if (++d == B) d = 0;
        }
        drift_[su] += phi;
      }
      const std::size_t ct = cell(s, t);
      if (rel_[ct] != kNegInf) {
        rel_[ct] += log1mexp(ambient + phi) - log_bkg;
        weight_[ct] = std::exp(rel_[ct]);
      }
      if (rel_[ct] > 0.0 || drift_[su] > kMaxDrift) renormalize_slice(s);
    }
    ++updates_;
    return true;
  }

  // Zero ambient: only d == t can explain a detection at t.
  bool possible = false;
  for (int s = 0; s < G; ++s) {
    const auto su = static_cast<std::size_t>(s);
    if (offset_[su] != kNegInf && flux_[su] > 0.0 && rel_[cell(s, t)] != kNegInf) possible = true;
  }
  if (!possible) {
    ++impossible_updates_;
    return false;
  }
  for (int s = 0; s < G; ++s) {
    const auto su = static_cast<std::size_t>(s);
    if (offset_[su] == kNegInf) continue;
    const double phi = flux_[su];
    const std::size_t ct = cell(s, t);
    if (phi <= 0.0 || rel_[ct] == kNegInf) {
      offset_[su] = kNegInf;
      continue;
    }
    offset_[su] += rel_[ct] + log1mexp(phi) + folding(phi);
    for (int d = 0; d < B; ++d) {
      rel_[cell(s, d)] = kNegInf;
      weight_[cell(s, d)] = 0.0;
    }
    rel_[ct] = 0.0;
    weight_[ct] = 1.0;
    drift_[su] = 0.0;
  }
  ++updates_;
  return true;
}

double DepthPosterior::max_offset() const {
  return *std::max_element(offset_.begin(), offset_.end());
}

void DepthPosterior::marginal_into(std::vector<double>& out) const {
  out.assign(static_cast<std::size_t>(num_bins_), 0.0);
  const double m = max_offset();
  for (int s = 0; s < num_flux(); ++s) {
    const double off = offset_[static_cast<std::size_t>(s)];
    if (off == kNegInf) continue;
    const double scale = std::exp(off - m);
    const double* w = weight_.data() + cell(s, 0);
    for (int d = 0; d < num_bins_; ++d) out[static_cast<std::size_t>(d)] += scale * w[d];
  }
}

double DepthPosterior::log_mass(int flux_index, int depth) const {
  if (flux_index < 0 || flux_index >= num_flux() || depth < 0 || depth >= num_bins_) {
    throw std::out_of_range("DepthPosterior::log_mass: index out of range");
  }
  const double m = max_offset();
  double z = 0.0;
  for (int s = 0; s < num_flux(); ++s) {
    const double off = offset_[static_cast<std::size_t>(s)];
    if (off == kNegInf) continue;
    const double* w = weight_.data() + cell(s, 0);
    z += std::exp(off - m) * std::accumulate(w, w + num_bins_, 0.0);
  }
  const double off = offset_[static_cast<std::size_t>(flux_index)];
  const double rel = rel_[cell(flux_index, depth)];
  if (off == kNegInf || rel == kNegInf) return kNegInf;
  return off + rel - (m + std::log(z));
}

std::vector<double> DepthPosterior::depth_marginal() const {
  std::vector<double> out;
  marginal_into(out);
  const double z = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= z;
  return out;
}

std::vector<double> DepthPosterior::flux_marginal() const {
  std::vector<double> out(flux_.size(), 0.0);
  const double m = max_offset();
  double z = 0.0;
  for (int s = 0; s < num_flux(); ++s) {
    const double off = offset_[static_cast<std::size_t>(s)];
    if (off == kNegInf) continue;
    const double* w = weight_.data() + cell(s, 0);
    out[static_cast<std::size_t>(s)] = std::exp(off - m) * std::accumulate(w, w + num_bins_, 0.0);
    z += out[static_cast<std::size_t>(s)];
  }
  for (double& v : out) v /= z;
  return out;
}

int DepthPosterior::sample_depth(Rng& rng) const {
  marginal_into(scratch_);
  const double total = std::accumulate(scratch_.begin(), scratch_.end(), 0.0);
  const double u = uniform01(rng) * total;
  double cum = 0.0;
  int last_positive = 0;
  for (int d = 0; d < num_bins_; ++d) {
    const double p = scratch_[static_cast<std::size_t>(d)];
    if (p <= 0.0) continue;
    cum += p;
    last_positive = d;
    if (u < cum) return d;
  }
  return last_positive;
}

DepthPosterior posterior_init(std::span<const double> prior_mass, std::vector<double> flux_grid,
                              std::string prior_tag) {
  return DepthPosterior(prior_mass, std::move(flux_grid), std::move(prior_tag));
}

std::vector<double> uniform_prior(int num_bins) {
  if (num_bins <= 0) throw std::invalid_argument("uniform_prior: num_bins must be positive");
  return std::vector<double>(static_cast<std::size_t>(num_bins), 1.0 / num_bins);
}

std::vector<double> make_flux_grid(double ambient_flux, int count, double low_factor,
                                   double high_factor) {
  if (!(ambient_flux > 0.0)) throw std::invalid_argument("make_flux_grid: ambient flux must be > 0");
  if (count < 1) throw std::invalid_argument("make_flux_grid: count must be >= 1");
  if (!(low_factor > 0.0) || !(high_factor >= low_factor)) {
    throw std::invalid_argument("make_flux_grid: need 0 < low_factor <= high_factor");
  }
  std::vector<double> grid{0.0};
  const double lo = std::log(low_factor * ambient_flux);
  const double hi = std::log(high_factor * ambient_flux);
  for (int k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
    grid.push_back(std::exp(lo + frac * (hi - lo)));
  }
  return grid;
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

int map_depth(const DepthPosterior& post) {
  return argmax_lowest(post.depth_marginal());
}

double posterior_entropy(const DepthPosterior& post) {
  double h = 0.0;
  for (double p : post.depth_marginal()) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace spadgate

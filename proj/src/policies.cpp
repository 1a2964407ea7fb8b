#include "spadgate/policies.hpp"

#include <cmath>
#include <string>

namespace spadgate {

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Fixed: return "fixed";
    case PolicyKind::Uniform: return "uniform";
    case PolicyKind::FreeRunning: return "free_running";
    case PolicyKind::Adaptive: return "adaptive";
  }
  return "unknown";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "fixed") return PolicyKind::Fixed;
  if (name == "uniform") return PolicyKind::Uniform;
  if (name == "free_running") return PolicyKind::FreeRunning;
  if (name == "adaptive") return PolicyKind::Adaptive;
  throw std::invalid_argument("unknown policy kind '" + std::string(name) + "'");
}

std::string_view to_string(TerminationMetric metric) {
  return metric == TerminationMetric::Termination ? "termination" : "entropy";
}

TerminationMetric parse_termination_metric(std::string_view name) {
  if (name == "termination") return TerminationMetric::Termination;
  if (name == "entropy") return TerminationMetric::Entropy;
  throw std::invalid_argument("unknown termination metric '" + std::string(name) + "'");
}

void ExposureControl::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("exposure epsilon must be > 0");
  if (metric == TerminationMetric::Termination && !(epsilon < 1.0)) {
    throw std::invalid_argument("exposure epsilon must lie in (0, 1) for the termination metric");
  }
  if (min_cycles < 0) throw std::invalid_argument("exposure min_cycles must be >= 0");
}

double termination_value(const DepthPosterior& post, TerminationMetric metric) {
  if (metric == TerminationMetric::Entropy) return posterior_entropy(post);
  const std::vector<double> m = post.depth_marginal();
  return 1.0 - m[static_cast<std::size_t>(argmax_lowest(m))];
}

bool should_stop(const ExposureControl& control, std::int64_t cycle_index,
                 const DepthPosterior& post) {
  if (cycle_index < control.min_cycles) return false;
  return termination_value(post, control.metric) < control.epsilon;
}

namespace {

void check_bins(int hypothesis, int gate, int num_bins) {
  if (num_bins <= 0) throw std::invalid_argument("num_bins must be positive");
  if (hypothesis < 0 || hypothesis >= num_bins) throw std::invalid_argument("hypothesis out of range");
  if (gate < 0 || gate >= num_bins) throw std::invalid_argument("gate out of range");
}

}  // namespace

double reward(int hypothesis, int gate, double ambient_flux, double signal_flux, int num_bins) {
  check_bins(hypothesis, gate, num_bins);
  const auto passed = static_cast<double>(unfold_timestamp(hypothesis, gate, num_bins) - gate);
  const double hit = -std::expm1(-(ambient_flux + signal_flux)) * std::exp(-ambient_flux * passed);
  return -(1.0 - hit);
}

double reward_brute_force(int hypothesis, int gate, double ambient_flux, double signal_flux,
                          int num_bins) {
  check_bins(hypothesis, gate, num_bins);
  const auto scene = SceneTransient::single_peak(num_bins, ambient_flux, hypothesis, signal_flux);
  double expected_loss = no_detection_probability(scene);
  for (std::int64_t t = gate; t < gate + num_bins; ++t) {
    // A single detection's MAP depth under a uniform prior is its folded bin.
    const auto estimate = static_cast<int>(t % num_bins);
    if (estimate != hypothesis) expected_loss += detection_likelihood(scene, t, gate);
  }
  return -expected_loss;
}

int optimal_gate(int hypothesis, double /*ambient_flux*/, double /*signal_flux*/, int num_bins) {
  check_bins(hypothesis, 0, num_bins);
  return hypothesis;
}

// --- GatingPolicy ----------------------------------------------------------

void GatingPolicy::check_outcome(const CycleOutcome& outcome) const {
  if (!issued_) throw ContractViolation("observe() called without a preceding next_gate()");
  if (!issued_->free_run && outcome.gate != issued_->gate) {
    throw ContractViolation("outcome gate " + std::to_string(outcome.gate) +
                            " does not match issued gate " + std::to_string(issued_->gate));
  }
}

void GatingPolicy::observe(const CycleOutcome& outcome) {
  check_outcome(outcome);
  issued_.reset();
  ++cycle_index_;
}

FixedPolicy::FixedPolicy(int num_bins, int gate) : gate_(gate) {
  if (gate < 0 || gate >= num_bins) throw std::invalid_argument("FixedPolicy: gate out of range");
}

GateDirective FixedPolicy::next_gate(Rng& /*rng*/) { return issue(GateDirective::at(gate_)); }

UniformPolicy::UniformPolicy(int num_bins) : num_bins_(num_bins) {
  if (num_bins <= 0) throw std::invalid_argument("UniformPolicy: num_bins must be positive");
}

GateDirective UniformPolicy::next_gate(Rng& /*rng*/) {
  return issue(GateDirective::at(static_cast<int>(cycle_index_ % num_bins_)));
}

GateDirective FreeRunningPolicy::next_gate(Rng& /*rng*/) {
  return issue(GateDirective::free_running());
}

// --- AdaptivePolicy --------------------------------------------------------

namespace {

std::vector<double> resolve_prior(const AdaptiveOptions& o) {
  if (o.num_bins <= 0) throw std::invalid_argument("AdaptivePolicy: num_bins must be positive");
  if (o.prior.empty()) return uniform_prior(o.num_bins);
  if (static_cast<int>(o.prior.size()) != o.num_bins) {
    throw std::invalid_argument("AdaptivePolicy: prior length differs from num_bins");
  }
  return o.prior;
}

}  // namespace

AdaptivePolicy::AdaptivePolicy(AdaptiveOptions options)
    : opts_(std::move(options)),
      prior_(resolve_prior(opts_)),
      posterior_(prior_, std::vector<double>{0.0}, opts_.prior_tag) {
  if (opts_.gate_offset < 0 || opts_.gate_offset >= opts_.num_bins) {
    throw std::invalid_argument("AdaptivePolicy: gate_offset must lie in [0, B)");
  }
  if (opts_.calibration_cycles < 0) {
    throw std::invalid_argument("AdaptivePolicy: calibration_cycles must be >= 0");
  }
  if (opts_.active_periods < 1) throw std::invalid_argument("AdaptivePolicy: active_periods must be >= 1");
  if (opts_.exposure) opts_.exposure->validate();
  if (opts_.known_ambient && !(*opts_.known_ambient >= 0.0)) {
    throw std::invalid_argument("AdaptivePolicy: known ambient flux must be >= 0");
  }
  if (opts_.calibration_cycles == 0) {
    if (!opts_.known_ambient) {
      throw std::invalid_argument("AdaptivePolicy: zero calibration cycles need a known ambient flux");
    }
    finish_calibration();
  }
}

void AdaptivePolicy::finish_calibration() {
  if (opts_.known_ambient) {
    ambient_ = *opts_.known_ambient;
    background_ = BackgroundEstimate{*ambient_, false, 0, 0};
  } else {
    background_ = estimate_background(calibration_, opts_.num_bins, opts_.background);
    ambient_ = background_.ambient_flux;
  }
  std::vector<double> grid = opts_.flux_grid;
  if (grid.empty()) {
    grid = make_flux_grid(*ambient_ > 0.0 ? *ambient_ : opts_.background.fallback,
                          opts_.flux_grid_count, opts_.flux_low_factor, opts_.flux_high_factor);
  }
  posterior_ = DepthPosterior(prior_, std::move(grid), opts_.prior_tag);
  for (const CycleOutcome& c : calibration_) posterior_.update(c, *ambient_, opts_.active_periods);
  calibration_.clear();
  calibration_.shrink_to_fit();
  ready_ = true;
}

GateDirective AdaptivePolicy::next_gate(Rng& rng) {
  const int B = opts_.num_bins;
  if (cycle_index_ < opts_.calibration_cycles) {
    const auto k = static_cast<std::int64_t>(cycle_index_);
    return issue(GateDirective::at(static_cast<int>(k * B / opts_.calibration_cycles)));
  }
  const int hypothesis = posterior_.sample_depth(rng);
  int gate = (hypothesis - opts_.gate_offset) % B;
  if (gate < 0) gate += B;
  return issue(GateDirective::at(gate));
}

void AdaptivePolicy::observe(const CycleOutcome& outcome) {
  check_outcome(outcome);
  issued_.reset();
  if (ready_) {
    posterior_.update(outcome, *ambient_, opts_.active_periods);
  } else {
    calibration_.push_back(outcome);
  }
  ++cycle_index_;
  if (!ready_ && cycle_index_ >= opts_.calibration_cycles) finish_calibration();
}

bool AdaptivePolicy::should_stop() const {
  if (!opts_.exposure || !ready_) return false;
  return spadgate::should_stop(*opts_.exposure, cycle_index_, posterior_);
}

}  // namespace spadgate

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spadgate/core.hpp"
#include "spadgate/estimators.hpp"
#include "spadgate/posterior.hpp"
#include "spadgate/rng.hpp"

namespace spadgate {

enum class PolicyKind { Fixed, Uniform, FreeRunning, Adaptive };

std::string_view to_string(PolicyKind kind);
/// Accepts "fixed", "uniform", "free_running", "adaptive"; throws std::invalid_argument otherwise.
PolicyKind parse_policy_kind(std::string_view name);

/// Either arm at a gate bin (triggered mode) or arm as soon as dead time ends.
struct GateDirective {
  bool free_run = false;
  int gate = 0;

  static GateDirective at(int gate) { return {false, gate}; }
  static GateDirective free_running() { return {true, 0}; }
};

/// Raised when a policy or the acquisition loop breaks the gate contract.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class TerminationMetric { Termination, Entropy };

std::string_view to_string(TerminationMetric metric);
TerminationMetric parse_termination_metric(std::string_view name);

/// Adaptive-exposure stop rule: stop once the termination value drops below
/// epsilon, but never before min_cycles cycles.
struct ExposureControl {
  double epsilon = 0.25;
  TerminationMetric metric = TerminationMetric::Termination;
  std::int64_t min_cycles = 0;

  void validate() const;
};

/// 1 - marginal mass at the MAP depth, or the posterior entropy in nats.
double termination_value(const DepthPosterior& post, TerminationMetric metric);
bool should_stop(const ExposureControl& control, std::int64_t cycle_index,
                 const DepthPosterior& post);

/// Expected negative 0-1 loss of the single-detection MAP estimate when
/// gating at `gate` and the depth truly is `hypothesis`. A cycle without a
/// detection counts as a loss.
double reward(int hypothesis, int gate, double ambient_flux, double signal_flux, int num_bins);
/// The same expectation summed explicitly over every outcome.
double reward_brute_force(int hypothesis, int gate, double ambient_flux, double signal_flux,
                          int num_bins);
/// The reward-maximizing gate for a depth hypothesis: the hypothesis itself.
int optimal_gate(int hypothesis, double ambient_flux, double signal_flux, int num_bins);

/// Per-pixel gate selection. Call next_gate() then observe() once per cycle.
class GatingPolicy {
 public:
  virtual ~GatingPolicy() = default;

  [[nodiscard]] virtual PolicyKind kind() const = 0;
  virtual GateDirective next_gate(Rng& rng) = 0;
  /// Throws ContractViolation when the outcome's gate is not the issued one.
  virtual void observe(const CycleOutcome& outcome);
  [[nodiscard]] virtual bool should_stop() const { return false; }

  [[nodiscard]] std::int64_t cycle_index() const { return cycle_index_; }

 protected:
  GateDirective issue(GateDirective d) {
    issued_ = d;
    return d;
  }
  void check_outcome(const CycleOutcome& outcome) const;

  std::int64_t cycle_index_ = 0;
  std::optional<GateDirective> issued_;
};

class FixedPolicy final : public GatingPolicy {
 public:
  FixedPolicy(int num_bins, int gate);
  [[nodiscard]] PolicyKind kind() const override { return PolicyKind::Fixed; }
  GateDirective next_gate(Rng& rng) override;

 private:
  int gate_;
};

/// Gates cycle through 0, 1, ..., B-1, 0, ...
class UniformPolicy final : public GatingPolicy {
 public:
  explicit UniformPolicy(int num_bins);
  [[nodiscard]] PolicyKind kind() const override { return PolicyKind::Uniform; }
  GateDirective next_gate(Rng& rng) override;

 private:
  int num_bins_;
};

class FreeRunningPolicy final : public GatingPolicy {
 public:
  [[nodiscard]] PolicyKind kind() const override { return PolicyKind::FreeRunning; }
  GateDirective next_gate(Rng& rng) override;
};

struct AdaptiveOptions {
  int num_bins = 500;
  /// Depth prior mass; empty means uniform.
  std::vector<double> prior;
  std::string prior_tag = "uniform";
  /// Leading cycles gated at evenly spaced bins and used to estimate the ambient flux.
  std::int64_t calibration_cycles = 0;
  /// Skip ambient estimation and use this value.
  std::optional<double> known_ambient;
  /// Explicit signal-flux grid; empty means make_flux_grid(ambient, ...).
  std::vector<double> flux_grid;
  int flux_grid_count = 16;
  double flux_low_factor = 0.1;
  double flux_high_factor = 100.0;
  /// Bins subtracted from the sampled hypothesis to form the gate.
  int gate_offset = 0;
  int active_periods = 1;
  BackgroundOptions background;
  std::optional<ExposureControl> exposure;
};

/// Thompson-sampling gate selection over the depth posterior.
class AdaptivePolicy final : public GatingPolicy {
 public:
  explicit AdaptivePolicy(AdaptiveOptions options);

  [[nodiscard]] PolicyKind kind() const override { return PolicyKind::Adaptive; }
  GateDirective next_gate(Rng& rng) override;
  void observe(const CycleOutcome& outcome) override;
  [[nodiscard]] bool should_stop() const override;

  [[nodiscard]] bool calibrating() const { return !ready_; }
  /// Ambient flux used by the likelihood; empty while calibrating.
  [[nodiscard]] std::optional<double> ambient_flux() const { return ambient_; }
  [[nodiscard]] const BackgroundEstimate& background() const { return background_; }
  /// Current posterior; the prior alone while calibrating.
  [[nodiscard]] const DepthPosterior& posterior() const { return posterior_; }
  [[nodiscard]] const AdaptiveOptions& options() const { return opts_; }

 private:
  void finish_calibration();

  AdaptiveOptions opts_;
  std::vector<double> prior_;
  std::optional<double> ambient_;
  BackgroundEstimate background_;
  DepthPosterior posterior_;
  std::vector<CycleOutcome> calibration_;
  bool ready_ = false;
};

}  // namespace spadgate

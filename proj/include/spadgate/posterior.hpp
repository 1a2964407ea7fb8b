#pragma once

#include <span>
#include <string>
#include <vector>

#include "spadgate/core.hpp"
#include "spadgate/rng.hpp"

namespace spadgate {

/// Joint belief over (signal flux, depth bin) for a single-peak transient.
///
/// Stored per flux slice as a log offset plus relative log masses whose
/// slice maximum is kept near zero; exp() of the relative masses is cached
/// so that marginals cost one multiply-add per cell. The depth decisions
/// all use the flux-marginalized mass.
class DepthPosterior {
 public:
  /// `prior_mass` over depth bins (nonnegative, not all zero) times a uniform
  /// prior over `flux_grid` (nonempty, entries >= 0).
  DepthPosterior(std::span<const double> prior_mass, std::vector<double> flux_grid,
                 std::string prior_tag = "uniform");

  [[nodiscard]] int num_bins() const { return num_bins_; }
  [[nodiscard]] int num_flux() const { return static_cast<int>(flux_.size()); }
  [[nodiscard]] std::span<const double> flux_grid() const { return flux_; }
  [[nodiscard]] const std::string& prior_tag() const { return prior_tag_; }

  /// Bayes update with one cycle under r[i] = ambient + delta(i, d) * flux.
  /// Returns false, and leaves the posterior untouched, when the observation
  /// has zero probability under every hypothesis.
  bool update(const CycleOutcome& cycle, double ambient_flux, int active_periods = 1);

  /// Normalized log mass of cell (flux index, depth); -inf for excluded cells.
  [[nodiscard]] double log_mass(int flux_index, int depth) const;
  [[nodiscard]] std::vector<double> depth_marginal() const;
  [[nodiscard]] std::vector<double> flux_marginal() const;
  /// Draws a depth from the marginal.
  [[nodiscard]] int sample_depth(Rng& rng) const;

  [[nodiscard]] int impossible_updates() const { return impossible_updates_; }
  [[nodiscard]] std::size_t updates() const { return updates_; }

 private:
  [[nodiscard]] std::size_t cell(int s, int d) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_bins_) +
           static_cast<std::size_t>(d);
  }
  void renormalize_slice(int s);
  [[nodiscard]] double max_offset() const;
  void marginal_into(std::vector<double>& out) const;

  int num_bins_ = 0;
  std::vector<double> flux_;
  std::string prior_tag_;
  std::vector<double> offset_;  // per slice, -inf when the slice is excluded
  std::vector<double> drift_;   // accumulated decrease since the last renormalization
  std::vector<double> rel_;     // relative log mass
  std::vector<double> weight_;  // exp(rel_)
  int impossible_updates_ = 0;
  std::size_t updates_ = 0;
  mutable std::vector<double> scratch_;
};

DepthPosterior posterior_init(std::span<const double> prior_mass, std::vector<double> flux_grid,
                              std::string prior_tag = "uniform");

/// Uniform depth prior of length B.
std::vector<double> uniform_prior(int num_bins);

/// Signal-flux grid: `count` log-spaced values on [low_factor, high_factor] * ambient plus 0.
std::vector<double> make_flux_grid(double ambient_flux, int count = 16, double low_factor = 0.1,
                                   double high_factor = 100.0);

/// Lowest-index argmax of the depth marginal.
int map_depth(const DepthPosterior& post);
/// -sum p ln p of the depth marginal, in nats.
double posterior_entropy(const DepthPosterior& post);

/// Index of the first maximum.
int argmax_lowest(std::span<const double> values);

}  // namespace spadgate

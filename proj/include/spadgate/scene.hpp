#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "spadgate/core.hpp"

namespace spadgate {

/// Malformed scene or prior file. Row and column are 1-based; row 1 is the header line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t row, std::size_t column, const std::string& what);
  [[nodiscard]] std::size_t row() const { return row_; }
  [[nodiscard]] std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

/// Plain-text grid: "width height" then `height` rows of `width` values.
struct GridFile {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major

  [[nodiscard]] double at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

/// `values_per_cell` numbers per grid cell on each row.
GridFile read_grid_file(const std::string& path, int values_per_cell = 1);
void write_grid_file(const std::string& path, const GridFile& grid, int values_per_cell = 1);

/// d = floor(2 z / (c * bin width)).
int depth_to_bin(double depth_m, double bin_resolution_ps);
double bin_to_depth(double bin, double bin_resolution_ps);

/// Per-pixel depth and flux parameters of a raster scene.
struct SceneGrid {
  int width = 0;
  int height = 0;
  int num_bins = 0;
  std::vector<int> depth_bins;
  std::vector<double> ambient_flux;
  std::vector<double> signal_flux;
  /// Pixels whose metric depth fell outside [0, B) and were clamped.
  std::vector<bool> clamped;

  /// Constant-flux grid from explicit depth bins.
  static SceneGrid uniform(int width, int height, int num_bins, std::vector<int> depth_bins,
                           double ambient_flux, double signal_flux);
  /// Loads a depth map in meters; empty flux paths fall back to the scalars.
  static SceneGrid load(const std::string& depth_path, const std::string& ambient_path,
                        const std::string& signal_path, double ambient_flux, double signal_flux,
                        double bin_resolution_ps, int num_bins);

  void validate() const;
  [[nodiscard]] std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  [[nodiscard]] std::size_t size() const { return depth_bins.size(); }
};

/// Single-peak transient of pixel (x, y); throws std::invalid_argument out of bounds.
SceneTransient pixel_transient(const SceneGrid& grid, int x, int y);

/// Boustrophedon order: row 0 left to right, row 1 right to left, and so on.
std::vector<std::pair<int, int>> serpentine_order(int width, int height);

/// (1 - w) * truncated Gaussian centred on bin `center` (bin-centre
/// coordinates, so an integer centre sits on that bin) + w / B.
std::vector<double> gaussian_prior(double center, double sigma_bins, double floor_weight,
                                   int num_bins);

/// Gaussian around the previously estimated depth; uniform for the first pixel.
std::vector<double> flatness_prior(std::optional<int> previous_depth, double sigma_bins,
                                   double floor_weight, int num_bins);

struct GaussianPriorParams {
  double mean_m = 0.0;
  double sigma_m = 0.0;
};

/// Per-pixel Gaussian depth priors, in meters as stored on disk.
struct ExternalPrior {
  int width = 0;
  int height = 0;
  std::vector<GaussianPriorParams> pixels;  // row-major

  [[nodiscard]] const GaussianPriorParams& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  /// Prior mass for a pixel with the uniform floor mixed in.
  [[nodiscard]] std::vector<double> mass(int x, int y, double floor_weight,
                                         double bin_resolution_ps, int num_bins) const;
};

/// Reads "width height" then rows of `mean_m sigma_m` pairs. Throws ParseError
/// (negative or zero sigma, short rows, junk) or, when expected dimensions are
/// given and differ, ParseError at the header.
ExternalPrior load_external_prior(const std::string& path, std::optional<int> expected_width = {},
                                  std::optional<int> expected_height = {});
void write_external_prior(const std::string& path, const ExternalPrior& prior);

struct TwoPeak {
  int first_bin = 0;
  double first_flux = 0.0;
  int second_bin = 0;
  double second_flux = 0.0;
};

struct CornerTail {
  int bin = 0;
  double signal_flux = 0.0;
  double amplitude = 0.0;
  double decay_rate = 1.0;
};

using MismatchKind = std::variant<TwoPeak, CornerTail>;

/// Transients that violate the single-peak model: two peaks, or a peak
/// followed by amplitude * exp(-decay * (i - d)) for i > d.
SceneTransient mismatch_transient(const MismatchKind& kind, double ambient_flux, int num_bins);

}  // namespace spadgate

#include "spadgate/scene.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace spadgate {

ParseError::ParseError(const std::string& path, std::size_t row, std::size_t column,
                       const std::string& what)
    : std::runtime_error(path + ":" + std::to_string(row) + ":" + std::to_string(column) + ": " + what),
      row_(row),
      column_(column) {}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& tok, double& out) {
  errno = 0;
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return errno == 0 && end == tok.c_str() + tok.size() && std::isfinite(out);
}

bool parse_positive_int(const std::string& tok, int& out) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (errno != 0 || end != tok.c_str() + tok.size() || v <= 0 || v > 1'000'000) return false;
  out = static_cast<int>(v);
  return true;
}

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

GridFile read_grid_file(const std::string& path, int values_per_cell) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path, 1, 1, "missing header");
  const auto header = split_ws(line);
  GridFile grid;
  if (header.size() != 2) throw ParseError(path, 1, 1, "header must be 'width height'");
  if (!parse_positive_int(header[0], grid.width)) throw ParseError(path, 1, 1, "invalid width");
  if (!parse_positive_int(header[1], grid.height)) throw ParseError(path, 1, 2, "invalid height");

  const auto per_row = static_cast<std::size_t>(grid.width) * static_cast<std::size_t>(values_per_cell);
  grid.values.reserve(per_row * static_cast<std::size_t>(grid.height));
  for (int y = 0; y < grid.height; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) + 2;
    if (!std::getline(in, line)) throw ParseError(path, row, 1, "missing row");
    const auto toks = split_ws(line);
    for (std::size_t c = 0; c < toks.size() && c < per_row; ++c) {
      double v = 0.0;
      if (!parse_double(toks[c], v)) throw ParseError(path, row, c + 1, "not a number: '" + toks[c] + "'");
      grid.values.push_back(v);
    }
    if (toks.size() != per_row) {
      throw ParseError(path, row, std::min(toks.size(), per_row) + 1,
                       "expected " + std::to_string(per_row) + " values, found " +
                           std::to_string(toks.size()));
    }
  }
  std::size_t row = static_cast<std::size_t>(grid.height) + 2;
  while (std::getline(in, line)) {
    if (!split_ws(line).empty()) throw ParseError(path, row, 1, "trailing data after last row");
    ++row;
  }
  return grid;
}

void write_grid_file(const std::string& path, const GridFile& grid, int values_per_cell) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << grid.width << ' ' << grid.height << '\n';
  const auto per_row = static_cast<std::size_t>(grid.width) * static_cast<std::size_t>(values_per_cell);
  for (int y = 0; y < grid.height; ++y) {
    for (std::size_t c = 0; c < per_row; ++c) {
      if (c) out << ' ';
      out << format_exact(grid.values[static_cast<std::size_t>(y) * per_row + c]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

int depth_to_bin(double depth_m, double bin_resolution_ps) {
  return static_cast<int>(std::floor(2.0 * depth_m / (kSpeedOfLight * bin_resolution_ps * 1e-12)));
}

double bin_to_depth(double bin, double bin_resolution_ps) {
  return bin * kSpeedOfLight * bin_resolution_ps * 1e-12 / 2.0;
}

SceneGrid SceneGrid::uniform(int width, int height, int num_bins, std::vector<int> depth_bins,
                             double ambient_flux, double signal_flux) {
  SceneGrid g;
  g.width = width;
  g.height = height;
  g.num_bins = num_bins;
  g.depth_bins = std::move(depth_bins);
  const std::size_t n = g.depth_bins.size();
  g.ambient_flux.assign(n, ambient_flux);
  g.signal_flux.assign(n, signal_flux);
  g.clamped.assign(n, false);
  g.validate();
  return g;
}

SceneGrid SceneGrid::load(const std::string& depth_path, const std::string& ambient_path,
                          const std::string& signal_path, double ambient_flux, double signal_flux,
                          double bin_resolution_ps, int num_bins) {
  const GridFile depth = read_grid_file(depth_path);
  SceneGrid g;
  g.width = depth.width;
  g.height = depth.height;
  g.num_bins = num_bins;
  const std::size_t n = depth.values.size();
  g.depth_bins.resize(n);
  g.clamped.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const int d = depth_to_bin(depth.values[i], bin_resolution_ps);
    g.depth_bins[i] = std::clamp(d, 0, num_bins - 1);
    g.clamped[i] = d != g.depth_bins[i];
  }
  auto load_flux = [&](const std::string& path, double scalar, std::vector<double>& out) {
    if (path.empty()) {
      out.assign(n, scalar);
      return;
    }
    GridFile f = read_grid_file(path);
    if (f.width != g.width || f.height != g.height) {
      throw ParseError(path, 1, 1, "grid is " + std::to_string(f.width) + "x" +
                                       std::to_string(f.height) + ", depth map is " +
                                       std::to_string(g.width) + "x" + std::to_string(g.height));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (f.values[i] < 0.0) {
        throw ParseError(path, i / static_cast<std::size_t>(g.width) + 2,
                         i % static_cast<std::size_t>(g.width) + 1, "negative flux");
      }
    }
    out = std::move(f.values);
  };
  load_flux(ambient_path, ambient_flux, g.ambient_flux);
  load_flux(signal_path, signal_flux, g.signal_flux);
  g.validate();
  return g;
}

void SceneGrid::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("SceneGrid: empty grid");
  if (num_bins <= 0) throw std::invalid_argument("SceneGrid: num_bins must be positive");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (depth_bins.size() != n || ambient_flux.size() != n || signal_flux.size() != n ||
      clamped.size() != n) {
    throw std::invalid_argument("SceneGrid: grids differ in size");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (depth_bins[i] < 0 || depth_bins[i] >= num_bins) {
      throw std::invalid_argument("SceneGrid: depth bin out of range");
    }
    if (!(ambient_flux[i] >= 0.0) || !(signal_flux[i] >= 0.0)) {
      throw std::invalid_argument("SceneGrid: fluxes must be >= 0");
    }
  }
}

SceneTransient pixel_transient(const SceneGrid& grid, int x, int y) {
  if (x < 0 || x >= grid.width || y < 0 || y >= grid.height) {
    throw std::invalid_argument("pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                                ") outside " + std::to_string(grid.width) + "x" +
                                std::to_string(grid.height) + " grid");
  }
  const std::size_t i = grid.index(x, y);
  return SceneTransient::single_peak(grid.num_bins, grid.ambient_flux[i], grid.depth_bins[i],
                                     grid.signal_flux[i]);
}

std::vector<std::pair<int, int>> serpentine_order(int width, int height) {
  std::vector<std::pair<int, int>> order;
  order.reserve(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    for (int k = 0; k < width; ++k) order.emplace_back(y % 2 == 0 ? k : width - 1 - k, y);
  }
  return order;
}

std::vector<double> gaussian_prior(double center, double sigma_bins, double floor_weight,
                                   int num_bins) {
  if (!(sigma_bins > 0.0)) throw std::invalid_argument("gaussian_prior: sigma must be > 0");
  if (!(floor_weight >= 0.0 && floor_weight <= 1.0)) {
    throw std::invalid_argument("gaussian_prior: floor weight must lie in [0, 1]");
  }
  if (num_bins <= 0) throw std::invalid_argument("gaussian_prior: num_bins must be positive");
  const auto B = static_cast<std::size_t>(num_bins);
  std::vector<double> expo(B);
  for (std::size_t d = 0; d < B; ++d) {
    const double z = (static_cast<double>(d) - center) / sigma_bins;
    expo[d] = -0.5 * z * z;
  }
  const double top = *std::max_element(expo.begin(), expo.end());
  double sum = 0.0;
  for (double& e : expo) {
    e = std::exp(e - top);
    sum += e;
  }
  std::vector<double> mass(B);
  for (std::size_t d = 0; d < B; ++d) {
    mass[d] = (1.0 - floor_weight) * expo[d] / sum + floor_weight / num_bins;
  }
  return mass;
}

std::vector<double> flatness_prior(std::optional<int> previous_depth, double sigma_bins,
                                   double floor_weight, int num_bins) {
  if (!(sigma_bins > 0.0)) throw std::invalid_argument("flatness_prior: sigma must be > 0");
  if (!previous_depth || floor_weight >= 1.0) {
    return std::vector<double>(static_cast<std::size_t>(num_bins), 1.0 / num_bins);
  }
  return gaussian_prior(static_cast<double>(*previous_depth), sigma_bins, floor_weight, num_bins);
}

std::vector<double> ExternalPrior::mass(int x, int y, double floor_weight, double bin_resolution_ps,
                                        int num_bins) const {
  const GaussianPriorParams& p = at(x, y);
  const double per_bin = kSpeedOfLight * bin_resolution_ps * 1e-12 / 2.0;
  // Bin d spans [d, d + 1) in continuous bin units; its centre is d + 0.5.
  const double center = p.mean_m / per_bin - 0.5;
  return gaussian_prior(center, p.sigma_m / per_bin, floor_weight, num_bins);
}

ExternalPrior load_external_prior(const std::string& path, std::optional<int> expected_width,
                                  std::optional<int> expected_height) {
  const GridFile grid = read_grid_file(path, 2);
  if ((expected_width && *expected_width != grid.width) ||
      (expected_height && *expected_height != grid.height)) {
    throw ParseError(path, 1, 1, "prior grid is " + std::to_string(grid.width) + "x" +
                                     std::to_string(grid.height) + ", scan grid is " +
                                     std::to_string(expected_width.value_or(grid.width)) + "x" +
                                     std::to_string(expected_height.value_or(grid.height)));
  }
  ExternalPrior prior;
  prior.width = grid.width;
  prior.height = grid.height;
  const auto n = static_cast<std::size_t>(grid.width) * static_cast<std::size_t>(grid.height);
  prior.pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = grid.values[2 * i];
    const double sigma = grid.values[2 * i + 1];
    const std::size_t row = i / static_cast<std::size_t>(grid.width) + 2;
    const std::size_t col = 2 * (i % static_cast<std::size_t>(grid.width)) + 1;
    if (!(sigma > 0.0)) throw ParseError(path, row, col + 1, "sigma must be positive");
    prior.pixels[i] = {mean, sigma};
  }
  return prior;
}

void write_external_prior(const std::string& path, const ExternalPrior& prior) {
  GridFile grid;
  grid.width = prior.width;
  grid.height = prior.height;
  for (const GaussianPriorParams& p : prior.pixels) {
    grid.values.push_back(p.mean_m);
    grid.values.push_back(p.sigma_m);
  }
  write_grid_file(path, grid, 2);
}

SceneTransient mismatch_transient(const MismatchKind& kind, double ambient_flux, int num_bins) {
  if (const auto* two = std::get_if<TwoPeak>(&kind)) {
    return SceneTransient(num_bins, ambient_flux,
                          {Peak{two->first_bin, two->first_flux}, Peak{two->second_bin, two->second_flux}});
  }
  const auto& corner = std::get<CornerTail>(kind);
  return SceneTransient(num_bins, ambient_flux, {Peak{corner.bin, corner.signal_flux}},
                        Tail{corner.bin, corner.amplitude, corner.decay_rate});
}

}  // namespace spadgate

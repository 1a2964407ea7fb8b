#include "spadgate/harness.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "spadgate/estimators.hpp"
#include "spadgate/policies.hpp"
#include "spadgate/posterior.hpp"
#include "spadgate/rng.hpp"
#include "spadgate/spadsim.hpp"

namespace spadgate {

namespace {

// Stream indices under a row seed.
constexpr std::uint64_t kDepthStream = 0;
constexpr std::uint64_t kAcquisitionStream = 1;

const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string policy_label(const PolicySpec& p) {
  std::string label(to_string(p.kind));
  if (p.kind == PolicyKind::Fixed) label += ":" + std::to_string(p.gate);
  if (p.kind == PolicyKind::Adaptive && p.gate_offset != 0) label += ":" + std::to_string(p.gate_offset);
  return label;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::unique_ptr<GatingPolicy> make_policy(const ExperimentConfig& cfg, const PixelParams& px,
                                          const PolicySpec& spec, int num_bins,
                                          std::int64_t calibration_cycles) {
  switch (spec.kind) {
    case PolicyKind::Fixed: return std::make_unique<FixedPolicy>(num_bins, spec.gate);
    case PolicyKind::Uniform: return std::make_unique<UniformPolicy>(num_bins);
    case PolicyKind::FreeRunning: return std::make_unique<FreeRunningPolicy>();
    case PolicyKind::Adaptive: break;
  }
  AdaptiveOptions o;
  o.num_bins = num_bins;
  o.prior = px.prior;
  o.prior_tag = px.prior_tag;
  o.calibration_cycles = calibration_cycles;
  if (cfg.known_ambient) o.known_ambient = px.ambient_flux;
  o.flux_grid = cfg.flux_values;
  o.flux_grid_count = cfg.flux_grid_count;
  o.flux_low_factor = cfg.flux_low_factor;
  o.flux_high_factor = cfg.flux_high_factor;
  o.gate_offset = spec.gate_offset;
  o.active_periods = cfg.max_active_periods;
  if (cfg.adaptive_exposure) {
    o.exposure = ExposureControl{cfg.epsilon, cfg.metric, cfg.min_cycles.value_or(calibration_cycles + 10)};
  }
  return std::make_unique<AdaptivePolicy>(std::move(o));
}

// Posterior of a finished acquisition for policies that keep none.
DepthPosterior batch_posterior(const ExperimentConfig& cfg, const PixelParams& px,
                               const AcquisitionRecord& record, int num_bins) {
  const BackgroundOptions background;
  const double ambient = cfg.known_ambient
                             ? px.ambient_flux
                             : estimate_background(record.cycles, num_bins, background).ambient_flux;
  std::vector<double> grid = cfg.flux_values;
  if (grid.empty()) {
    grid = make_flux_grid(ambient > 0.0 ? ambient : background.fallback, cfg.flux_grid_count,
                          cfg.flux_low_factor, cfg.flux_high_factor);
  }
  const std::vector<double> prior = px.prior.empty() ? uniform_prior(num_bins) : px.prior;
  return posterior_from_cycles(prior, std::move(grid), record.cycles, ambient, cfg.max_active_periods);
}

}  // namespace

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> columns = {
      "experiment_id", "policy",       "x",           "y",           "ambient_flux",
      "signal_flux",   "sbr",          "dead_time_ns", "budget_us",  "seed",
      "true_depth_bin", "true_depth_m", "est_depth_bin", "est_depth_subbin", "est_depth_m",
      "loss01",        "termination",  "entropy",     "cycles",      "exposure_us",
      "detections_true_bin", "status"};
  return columns;
}

PixelParams pixel_params(const ExperimentConfig& cfg) {
  PixelParams px;
  px.ambient_flux = cfg.scene.ambient_flux.value_or(0.0);
  px.signal_flux = cfg.scene.signal();
  if (cfg.scene.depth_bin) {
    px.depth_bin = cfg.scene.depth_bin;
  } else if (cfg.scene.depth_m) {
    px.depth_bin = depth_to_bin(*cfg.scene.depth_m, cfg.bin_resolution_ps);
  }
  px.mismatch = cfg.scene.mismatch;
  return px;
}

int random_depth_bin(std::uint64_t seed, int num_bins) {
  Rng rng(mix_seed(seed, kDepthStream));
  return static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(num_bins)));
}

std::uint64_t row_seed(const ExperimentConfig& cfg, int k) { return cfg.seed + static_cast<std::uint64_t>(k); }

ResultRow run_pixel_experiment(const ExperimentConfig& cfg, const PixelParams& px,
                               const PolicySpec& policy, std::uint64_t seed) {
  ResultRow row;
  row.experiment_id = cfg.id;
  row.policy = policy_label(policy);
  row.x = px.x;
  row.y = px.y;
  row.ambient_flux = px.ambient_flux;
  row.signal_flux = px.signal_flux;
  row.sbr = px.ambient_flux > 0.0 ? px.signal_flux / px.ambient_flux
                                  : (px.signal_flux > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  row.dead_time_ns = cfg.dead_time_ns;
  row.budget_us = cfg.budget_us;
  row.seed = seed;
  try {
    const SpadConfig spad = cfg.spad();
    const int B = spad.num_bins;
    int depth = 0;
    if (px.mismatch) {
      depth = std::holds_alternative<TwoPeak>(*px.mismatch) ? std::get<TwoPeak>(*px.mismatch).first_bin
                                                              : std::get<CornerTail>(*px.mismatch).bin;
    } else {
      depth = px.depth_bin ? *px.depth_bin : random_depth_bin(seed, B);
    }
    row.true_depth_bin = depth;
    row.true_depth_m = bin_to_depth(depth, cfg.bin_resolution_ps);

    const SceneTransient scene = px.mismatch
                                     ? mismatch_transient(*px.mismatch, px.ambient_flux, B)
                                     : SceneTransient::single_peak(B, px.ambient_flux, depth, px.signal_flux);

    AcquisitionLimits limits;
    limits.budget_bins = spad.us_to_bins(cfg.budget_us);
    std::int64_t max_cycles = limits.budget_bins / B;
    if (cfg.max_cycles > 0) {
      limits.max_cycles = cfg.max_cycles;
      max_cycles = std::min(max_cycles, cfg.max_cycles);
    }
    const std::int64_t calibration =
        cfg.calibration_fraction > 0.0 ? calibration_cycle_count(max_cycles, cfg.calibration_fraction) : 0;

    auto gating = make_policy(cfg, px, policy, B, calibration);
    const AcquisitionRecord record =
        run_acquisition(scene, spad, *gating, limits, mix_seed(seed, kAcquisitionStream + px.stream));

    const auto* adaptive = dynamic_cast<const AdaptivePolicy*>(gating.get());
    const DepthPosterior post = adaptive && !adaptive->calibrating()
                                    ? adaptive->posterior()
                                    : batch_posterior(cfg, px, record, B);
    const TransientEstimate coates = coates_transient(timestamps_to_histogram(record, B));

    const int est = cfg.estimator == DepthEstimator::Map ? map_depth(post) : coates_depth(coates).bin;
    row.est_depth_bin = est;
    row.est_depth_subbin = cfg.dither ? dither_depth(coates, est) : static_cast<double>(est);
    row.est_depth_m = bin_to_depth(row.est_depth_subbin, cfg.bin_resolution_ps);
    row.loss01 = est != depth ? 1 : 0;
    row.termination = termination_value(post, TerminationMetric::Termination);
    row.entropy = posterior_entropy(post);
    row.cycles = static_cast<std::int64_t>(record.size());
    row.exposure_us = spad.bins_to_us(record.exposure_bins);
    row.detections_true_bin = std::count_if(record.cycles.begin(), record.cycles.end(),
                                            [&](const CycleOutcome& c) { return c.timestamp == depth; });
  } catch (const std::exception& e) {
    row.status = std::string("failed: ") + e.what();
  }
  return row;
}

// --- metrics ---------------------------------------------------------------

namespace {

std::string group_key(const ResultRow& r) {
  return r.policy + "|ambient=" + fmt9(r.ambient_flux) + "|sbr=" + fmt9(r.sbr) + "|dead_ns=" +
         fmt9(r.dead_time_ns) + "|budget_us=" + fmt9(r.budget_us);
}

GroupMetrics summarize(const std::string& key, const std::vector<const ResultRow*>& rows,
                       double bin_m) {
  GroupMetrics g;
  g.key = key;
  double sq = 0.0;
  double loss = 0.0;
  double exposure = 0.0;
  double cycles = 0.0;
  double term = 0.0;
  std::vector<double> abs_err;
  for (const ResultRow* r : rows) {
    if (!r->ok()) {
      ++g.failed;
      continue;
    }
    const double e = r->est_depth_bin - r->true_depth_bin;
    sq += e * e;
    abs_err.push_back(std::abs(e));
    loss += r->loss01;
    exposure += r->exposure_us;
    cycles += static_cast<double>(r->cycles);
    term += r->termination;
  }
  g.count = abs_err.size();
  if (g.count == 0) {
    g.rmse_m = g.rmse_bins = g.mean_loss01 = g.median_abs_error_bins = kNaN;
    g.mean_exposure_us = g.mean_cycles = g.mean_termination = kNaN;
    return g;
  }
  const auto n = static_cast<double>(g.count);
  g.rmse_bins = std::sqrt(sq / n);
  g.rmse_m = g.rmse_bins * bin_m;
  g.mean_loss01 = loss / n;
  std::sort(abs_err.begin(), abs_err.end());
  const std::size_t mid = g.count / 2;
  g.median_abs_error_bins = g.count % 2 ? abs_err[mid] : 0.5 * (abs_err[mid - 1] + abs_err[mid]);
  g.mean_exposure_us = exposure / n;
  g.mean_cycles = cycles / n;
  g.mean_termination = term / n;
  return g;
}

}  // namespace

MetricsReport compute_metrics(std::span<const ResultRow> rows, double bin_resolution_ps) {
  if (rows.empty()) throw std::invalid_argument("compute_metrics: no rows to aggregate");
  const double bin_m = bin_to_depth(1.0, bin_resolution_ps);
  std::vector<const ResultRow*> all;
  std::vector<std::string> keys;
  std::vector<std::vector<const ResultRow*>> members;
  for (const ResultRow& r : rows) {
    all.push_back(&r);
    const std::string key = group_key(r);
    const auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      members.push_back({&r});
    } else {
      members[static_cast<std::size_t>(it - keys.begin())].push_back(&r);
    }
  }
  MetricsReport report;
  report.overall = summarize("all", all, bin_m);
  for (std::size_t i = 0; i < keys.size(); ++i) report.groups.push_back(summarize(keys[i], members[i], bin_m));
  return report;
}

// --- runs ------------------------------------------------------------------

namespace {

RunResult finish_run(const ExperimentConfig& cfg, std::vector<ResultRow> rows) {
  RunResult out;
  out.rows = std::move(rows);
  out.failures = static_cast<std::size_t>(
      std::count_if(out.rows.begin(), out.rows.end(), [](const ResultRow& r) { return !r.ok(); }));
  if (!out.rows.empty()) out.metrics = compute_metrics(out.rows, cfg.bin_resolution_ps);
  return out;
}

struct SweepPoint {
  ExperimentConfig cfg;
  PixelParams pixel;
};

template <class T>
std::vector<T> axis_or(const std::vector<T>& axis, T base) {
  return axis.empty() ? std::vector<T>{base} : axis;
}

}  // namespace

RunResult run_pixel_study(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  const PixelParams px = pixel_params(cfg);
  const std::size_t seeds = static_cast<std::size_t>(cfg.seeds);
  const std::size_t n = cfg.policies.size() * seeds;
  auto rows = parallel_map<ResultRow>(n, threads, [&](std::size_t i) {
    return run_pixel_experiment(cfg, px, cfg.policies[i / seeds], row_seed(cfg, static_cast<int>(i % seeds)));
  });
  return finish_run(cfg, std::move(rows));
}

RunResult run_sweep(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  if (cfg.sweep.empty()) throw ConfigError("sweep: at least one axis must be nonempty");
  const double base_ambient = cfg.scene.ambient_flux.value_or(0.0);
  std::vector<SweepPoint> points;
  for (double ambient : axis_or(cfg.sweep.ambient_flux, base_ambient)) {
    const std::vector<double> sbrs =
        cfg.sweep.sbr.empty() ? std::vector<double>{kNaN} : cfg.sweep.sbr;
    for (double sbr : sbrs) {
      for (double dead : axis_or(cfg.sweep.dead_time_ns, cfg.dead_time_ns)) {
        for (double budget : axis_or(cfg.sweep.budget_us, cfg.budget_us)) {
          SweepPoint p{cfg, {}};
          p.cfg.dead_time_ns = dead;
          p.cfg.budget_us = budget;
          p.cfg.scene.ambient_flux = ambient;
          if (!std::isnan(sbr)) {
            p.cfg.scene.sbr = sbr;
            p.cfg.scene.signal_flux.reset();
          }
          p.cfg.validate();
          p.pixel = pixel_params(p.cfg);
          points.push_back(std::move(p));
        }
      }
    }
  }
  const std::size_t seeds = static_cast<std::size_t>(cfg.seeds);
  const std::size_t per_point = cfg.policies.size() * seeds;
  auto rows = parallel_map<ResultRow>(points.size() * per_point, threads, [&](std::size_t i) {
    const SweepPoint& p = points[i / per_point];
    const std::size_t j = i % per_point;
    return run_pixel_experiment(p.cfg, p.pixel, cfg.policies[j / seeds],
                                row_seed(cfg, static_cast<int>(j % seeds)));
  });
  return finish_run(cfg, std::move(rows));
}

ScanResult run_scene_scan(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  if (cfg.scene.depth_map.empty()) throw ConfigError("scan: scene.depth_map is required");
  const SpadConfig spad = cfg.spad();
  const int B = spad.num_bins;
  const double scalar_ambient = cfg.scene.ambient_flux.value_or(0.0);
  const double scalar_signal =
      cfg.scene.signal_flux ? *cfg.scene.signal_flux : cfg.scene.sbr.value_or(0.0) * scalar_ambient;
  SceneGrid grid = SceneGrid::load(cfg.scene.depth_map, cfg.scene.ambient_map, cfg.scene.signal_map,
                                   scalar_ambient, scalar_signal, cfg.bin_resolution_ps, B);
  if (cfg.scene.signal_map.empty() && !cfg.scene.signal_flux && cfg.scene.sbr) {
    for (std::size_t i = 0; i < grid.size(); ++i) grid.signal_flux[i] = *cfg.scene.sbr * grid.ambient_flux[i];
  }
  std::optional<ExternalPrior> external;
  if (cfg.prior.kind == PriorKind::External) {
    external = load_external_prior(cfg.prior.path, grid.width, grid.height);
  }
  const auto order = serpentine_order(grid.width, grid.height);
  const double bin_m = spad.bin_depth_m();

  struct ScanOut {
    std::vector<ResultRow> rows;
    ScanMaps maps;
  };
  const std::size_t seeds = static_cast<std::size_t>(cfg.seeds);
  auto scans = parallel_map<ScanOut>(cfg.policies.size() * seeds, threads, [&](std::size_t task) {
    const PolicySpec& policy = cfg.policies[task / seeds];
    const std::uint64_t seed = row_seed(cfg, static_cast<int>(task % seeds));
    ScanOut out;
    out.maps.policy = policy_label(policy);
    out.maps.seed = seed;
    out.maps.width = grid.width;
    out.maps.height = grid.height;
    for (auto* m : {&out.maps.depth_m, &out.maps.error_m, &out.maps.entropy, &out.maps.exposure_us}) {
      m->assign(grid.size(), kNaN);
    }
    std::optional<int> previous;
    for (const auto& [x, y] : order) {
      const std::size_t i = grid.index(x, y);
      PixelParams px;
      px.x = x;
      px.y = y;
      px.ambient_flux = grid.ambient_flux[i];
      px.signal_flux = grid.signal_flux[i];
      px.depth_bin = grid.depth_bins[i];
      px.stream = i;
      px.prior_tag = std::string(to_string(cfg.prior.kind));
      if (cfg.prior.kind == PriorKind::Flatness) {
        px.prior = flatness_prior(previous, cfg.prior.sigma_bins, cfg.prior.floor_weight, B);
      } else if (cfg.prior.kind == PriorKind::External) {
        px.prior = external->mass(x, y, cfg.prior.floor_weight, cfg.bin_resolution_ps, B);
      }
      ResultRow row = run_pixel_experiment(cfg, px, policy, seed);
      if (row.ok() && grid.clamped[i]) row.status = "ok: depth clamped";
      if (row.ok()) {
        previous = row.est_depth_bin;
        out.maps.depth_m[i] = row.est_depth_m;
        out.maps.error_m[i] = (row.est_depth_bin - row.true_depth_bin) * bin_m;
        out.maps.entropy[i] = row.entropy;
        out.maps.exposure_us[i] = row.exposure_us;
      }
      out.rows.push_back(std::move(row));
    }
    return out;
  });

  ScanResult result;
  std::vector<ResultRow> rows;
  for (ScanOut& s : scans) {
    rows.insert(rows.end(), std::make_move_iterator(s.rows.begin()), std::make_move_iterator(s.rows.end()));
    result.maps.push_back(std::move(s.maps));
  }
  result.run = finish_run(cfg, std::move(rows));
  return result;
}

void write_scan_maps(const ScanResult& result, const std::string& directory) {
  std::filesystem::create_directories(directory);
  for (const ScanMaps& m : result.maps) {
    std::string stem = m.policy;
    std::replace(stem.begin(), stem.end(), ':', '_');
    stem = directory + "/" + stem + "_seed" + std::to_string(m.seed) + "_";
    const std::pair<const char*, const std::vector<double>*> layers[] = {
        {"depth", &m.depth_m}, {"error", &m.error_m}, {"entropy", &m.entropy}, {"exposure", &m.exposure_us}};
    for (const auto& [name, values] : layers) {
      write_grid_file(stem + name + ".txt", GridFile{m.width, m.height, *values});
    }
  }
}

// --- CSV -------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits one record; quoted fields may contain newlines, so it reads on from `in`.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  std::string field;
  bool quoted = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

double to_double(const std::string& s, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw std::runtime_error(where + ": not a number: '" + s + "'");
  }
  return v;
}

long long to_int(const std::string& s, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw std::runtime_error(where + ": not an integer: '" + s + "'");
  }
  return v;
}

std::uint64_t to_u64(const std::string& s, const std::string& where) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno == ERANGE) {
    throw std::runtime_error(where + ": not an unsigned integer: '" + s + "'");
  }
  return v;
}

std::ofstream open_for_write(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace

void emit_csv(std::span<const ResultRow> rows, const std::string& path) {
  std::ofstream out = open_for_write(path);
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const ResultRow& r : rows) {
    out << csv_field(r.experiment_id) << ',' << csv_field(r.policy) << ',' << r.x << ',' << r.y << ','
        << fmt9(r.ambient_flux) << ',' << fmt9(r.signal_flux) << ',' << fmt9(r.sbr) << ','
        << fmt9(r.dead_time_ns) << ',' << fmt9(r.budget_us) << ',' << r.seed << ',' << r.true_depth_bin
        << ',' << fmt9(r.true_depth_m) << ',' << r.est_depth_bin << ',' << fmt9(r.est_depth_subbin) << ','
        << fmt9(r.est_depth_m) << ',' << r.loss01 << ',' << fmt9(r.termination) << ','
        << fmt9(r.entropy) << ',' << r.cycles << ',' << fmt9(r.exposure_us) << ','
        << r.detections_true_bin << ',' << csv_field(r.status) << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<std::string> f;
  std::size_t line = 1;
  if (!read_record(in, f, line) || f != result_columns()) {
    throw std::runtime_error(path + ":1: header does not match the result columns");
  }
  std::vector<ResultRow> rows;
  std::size_t record_line = line;
  while (read_record(in, f, line)) {
    const std::string where = path + ":" + std::to_string(record_line);
    record_line = line;
    if (f.size() == 1 && f[0].empty()) continue;
    if (f.size() != result_columns().size()) {
      throw std::runtime_error(where + ": expected " + std::to_string(result_columns().size()) +
                               " fields, found " + std::to_string(f.size()));
    }
    ResultRow r;
    r.experiment_id = f[0];
    r.policy = f[1];
    r.x = static_cast<int>(to_int(f[2], where));
    r.y = static_cast<int>(to_int(f[3], where));
    r.ambient_flux = to_double(f[4], where);
    r.signal_flux = to_double(f[5], where);
    r.sbr = to_double(f[6], where);
    r.dead_time_ns = to_double(f[7], where);
    r.budget_us = to_double(f[8], where);
    r.seed = to_u64(f[9], where);
    r.true_depth_bin = static_cast<int>(to_int(f[10], where));
    r.true_depth_m = to_double(f[11], where);
    r.est_depth_bin = static_cast<int>(to_int(f[12], where));
    r.est_depth_subbin = to_double(f[13], where);
    r.est_depth_m = to_double(f[14], where);
    r.loss01 = static_cast<int>(to_int(f[15], where));
    r.termination = to_double(f[16], where);
    r.entropy = to_double(f[17], where);
    r.cycles = to_int(f[18], where);
    r.exposure_us = to_double(f[19], where);
    r.detections_true_bin = to_int(f[20], where);
    r.status = f[21];
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_summary_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "group,count,failed,rmse_m,rmse_bins,mean_loss01,median_abs_error_bins,mean_exposure_us,"
         "mean_cycles,mean_termination\n";
  auto line = [&](const GroupMetrics& g) {
    out << csv_field(g.key) << ',' << g.count << ',' << g.failed << ',' << fmt9(g.rmse_m) << ','
        << fmt9(g.rmse_bins) << ',' << fmt9(g.mean_loss01) << ',' << fmt9(g.median_abs_error_bins) << ','
        << fmt9(g.mean_exposure_us) << ',' << fmt9(g.mean_cycles) << ',' << fmt9(g.mean_termination)
        << '\n';
  };
  line(report.overall);
  for (const GroupMetrics& g : report.groups) line(g);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace spadgate

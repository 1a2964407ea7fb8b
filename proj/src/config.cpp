#include "spadgate/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace spadgate {

using nlohmann::json;

double SceneSpec::signal() const {
  if (signal_flux) return *signal_flux;
  if (sbr && ambient_flux) return *sbr * *ambient_flux;
  throw ConfigError("scene: neither signal_flux nor sbr with ambient_flux is set");
}

SpadConfig ExperimentConfig::spad() const {
  return SpadConfig::from_timing(bin_resolution_ps, rep_rate_hz, dead_time_ns, max_active_periods);
}

std::string_view to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::Uniform: return "uniform";
    case PriorKind::Flatness: return "flatness";
    case PriorKind::External: return "external";
  }
  return "unknown";
}

std::string_view to_string(DepthEstimator estimator) {
  return estimator == DepthEstimator::Map ? "map" : "coates";
}

namespace {

PriorKind parse_prior_kind(const std::string& s) {
  if (s == "uniform") return PriorKind::Uniform;
  if (s == "flatness") return PriorKind::Flatness;
  if (s == "external") return PriorKind::External;
  throw std::invalid_argument("unknown prior kind '" + s + "'");
}

DepthEstimator parse_estimator(const std::string& s) {
  if (s == "map") return DepthEstimator::Map;
  if (s == "coates") return DepthEstimator::Coates;
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

struct Issues {
  std::vector<std::string> unknown;
  std::vector<std::string> missing;
  std::vector<std::string> invalid;
};

template <class T>
bool json_is(const json& j) {
  if constexpr (std::is_same_v<T, bool>) {
    return j.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    return j.is_number_integer() && (std::is_signed_v<T> || j.is_number_unsigned() || j.get<long long>() >= 0);
  } else if constexpr (std::is_floating_point_v<T>) {
    return j.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return j.is_string();
  } else {
    if (!j.is_array()) return false;
    for (const json& e : j) {
      if (!e.is_number()) return false;
    }
    return true;
  }
}

template <class T>
constexpr const char* json_type_name() {
  if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_integral_v<T>) return "an integer";
  else if constexpr (std::is_floating_point_v<T>) return "a number";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else return "an array of numbers";
}

// Reads keys from one JSON object and remembers which ones were consumed.
class Section {
 public:
  Section(const json* obj, std::string name, Issues& issues)
      : obj_(obj), name_(std::move(name)), issues_(issues) {
    if (obj_ && !obj_->is_object()) {
      issues_.invalid.push_back(name_ + ": expected an object");
      obj_ = nullptr;
    }
  }

  [[nodiscard]] bool has(const std::string& key) const { return obj_ && obj_->contains(key); }
  [[nodiscard]] const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &obj_->at(key) : nullptr;
  }
  [[nodiscard]] std::string path(const std::string& key) const { return name_ + "." + key; }

  template <class T>
  std::optional<T> get(const std::string& key) {
    const json* j = raw(key);
    if (!j) return std::nullopt;
    if (!json_is<T>(*j)) {
      issues_.invalid.push_back(path(key) + ": expected " + json_type_name<T>());
      return std::nullopt;
    }
    return j->get<T>();
  }

  template <class T>
  void read(const std::string& key, T& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  template <class T>
  std::optional<T> required(const std::string& key) {
    if (!has(key)) {
      seen_.insert(key);
      issues_.missing.push_back(path(key));
      return std::nullopt;
    }
    return get<T>(key);
  }

  // Parses a string key through `parse`, recording failures.
  template <class T, class F>
  void read_enum(const std::string& key, T& target, F parse) {
    if (auto s = get<std::string>(key)) {
      try {
        target = parse(*s);
      } catch (const std::exception& e) {
        issues_.invalid.push_back(path(key) + ": " + e.what());
      }
    }
  }

  void finish() {
    if (!obj_) return;
    for (const auto& item : obj_->items()) {
      if (!seen_.count(item.key())) issues_.unknown.push_back(path(item.key()));
    }
  }

 private:
  const json* obj_;
  std::string name_;
  Issues& issues_;
  std::set<std::string> seen_;
};

const json* child(const json& root, const char* key) {
  return root.contains(key) ? &root.at(key) : nullptr;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

std::optional<MismatchKind> parse_mismatch(const json& j, Issues& issues) {
  Section s(&j, "scene.mismatch", issues);
  const auto kind = s.required<std::string>("kind");
  std::optional<MismatchKind> out;
  if (kind && *kind == "two_peak") {
    TwoPeak p;
    s.read("first_bin", p.first_bin);
    s.read("first_flux", p.first_flux);
    s.read("second_bin", p.second_bin);
    s.read("second_flux", p.second_flux);
    out = p;
  } else if (kind && *kind == "corner_tail") {
    CornerTail c;
    s.read("bin", c.bin);
    s.read("signal_flux", c.signal_flux);
    s.read("amplitude", c.amplitude);
    s.read("decay_rate", c.decay_rate);
    out = c;
  } else if (kind) {
    issues.invalid.push_back("scene.mismatch.kind: unknown kind '" + *kind + "'");
  }
  s.finish();
  return out;
}

std::vector<PolicySpec> parse_policies(const json* j, Issues& issues) {
  std::vector<PolicySpec> out;
  if (!j) {
    issues.missing.push_back("policies");
    return out;
  }
  if (!j->is_array()) {
    issues.invalid.push_back("policies: expected an array");
    return out;
  }
  for (std::size_t i = 0; i < j->size(); ++i) {
    const json& e = (*j)[i];
    const std::string name = "policies[" + std::to_string(i) + "]";
    PolicySpec p;
    if (e.is_string()) {
      try {
        p.kind = parse_policy_kind(e.get<std::string>());
      } catch (const std::exception& ex) {
        issues.invalid.push_back(name + ": " + ex.what());
      }
      out.push_back(p);
      continue;
    }
    Section s(&e, name, issues);
    if (s.required<std::string>("kind")) s.read_enum("kind", p.kind, parse_policy_kind);
    s.read("gate", p.gate);
    s.read("gate_offset", p.gate_offset);
    s.finish();
    out.push_back(p);
  }
  return out;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void require_file(const std::string& path, const std::string& key) {
  require(std::filesystem::is_regular_file(path), key + ": file '" + path + "' does not exist");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");

  Issues issues;
  ExperimentConfig cfg;
  const std::set<std::string> sections = {"experiment", "spad",    "scene",    "acquisition", "exposure",
                                          "prior",      "flux_grid", "policies", "sweep"};
  for (const auto& item : root.items()) {
    if (!sections.count(item.key())) issues.unknown.push_back(item.key());
  }

  if (!child(root, "experiment")) issues.missing.push_back("experiment.id");
  Section exp(child(root, "experiment"), "experiment", issues);
  if (child(root, "experiment")) {
    if (auto id = exp.required<std::string>("id")) cfg.id = *id;
  }
  exp.read("seed", cfg.seed);
  exp.read("seeds", cfg.seeds);
  exp.read("output_dir", cfg.output_dir);
  exp.read_enum("estimator", cfg.estimator, parse_estimator);
  exp.read("dither", cfg.dither);
  exp.finish();

  Section spad(child(root, "spad"), "spad", issues);
  spad.read("bin_resolution_ps", cfg.bin_resolution_ps);
  spad.read("rep_rate_hz", cfg.rep_rate_hz);
  spad.read("dead_time_ns", cfg.dead_time_ns);
  spad.read("max_active_periods", cfg.max_active_periods);
  spad.finish();

  if (!child(root, "scene")) issues.missing.push_back("scene");
  Section scene(child(root, "scene"), "scene", issues);
  SceneSpec& sc = cfg.scene;
  scene.read("depth_map", sc.depth_map);
  scene.read("ambient_map", sc.ambient_map);
  scene.read("signal_map", sc.signal_map);
  if (sc.ambient_map.empty() && child(root, "scene")) {
    sc.ambient_flux = scene.required<double>("ambient_flux");
  } else {
    scene.read("ambient_flux", sc.ambient_flux);
  }
  scene.read("signal_flux", sc.signal_flux);
  scene.read("sbr", sc.sbr);
  if (sc.signal_flux && sc.sbr) issues.invalid.push_back("scene: set only one of signal_flux and sbr");
  if (!sc.signal_flux && !sc.sbr && sc.signal_map.empty() && child(root, "scene")) {
    issues.missing.push_back("scene.signal_flux (or scene.sbr)");
  }
  scene.read("depth_bin", sc.depth_bin);
  scene.read("depth_m", sc.depth_m);
  if (sc.depth_bin && sc.depth_m) issues.invalid.push_back("scene: set only one of depth_bin and depth_m");
  if (const json* m = scene.raw("mismatch")) sc.mismatch = parse_mismatch(*m, issues);
  scene.finish();

  Section acq(child(root, "acquisition"), "acquisition", issues);
  acq.read("budget_us", cfg.budget_us);
  acq.read("max_cycles", cfg.max_cycles);
  acq.read("calibration_fraction", cfg.calibration_fraction);
  acq.read("known_ambient", cfg.known_ambient);
  acq.finish();

  Section expo(child(root, "exposure"), "exposure", issues);
  expo.read("adaptive", cfg.adaptive_exposure);
  expo.read("epsilon", cfg.epsilon);
  expo.read_enum("metric", cfg.metric, parse_termination_metric);
  expo.read("min_cycles", cfg.min_cycles);
  expo.finish();

  Section prior(child(root, "prior"), "prior", issues);
  prior.read_enum("kind", cfg.prior.kind, parse_prior_kind);
  prior.read("sigma_bins", cfg.prior.sigma_bins);
  prior.read("floor_weight", cfg.prior.floor_weight);
  prior.read("path", cfg.prior.path);
  prior.finish();

  Section grid(child(root, "flux_grid"), "flux_grid", issues);
  grid.read("count", cfg.flux_grid_count);
  grid.read("low_factor", cfg.flux_low_factor);
  grid.read("high_factor", cfg.flux_high_factor);
  grid.read("values", cfg.flux_values);
  grid.finish();

  cfg.policies = parse_policies(child(root, "policies"), issues);

  Section sweep(child(root, "sweep"), "sweep", issues);
  sweep.read("ambient_flux", cfg.sweep.ambient_flux);
  sweep.read("sbr", cfg.sweep.sbr);
  sweep.read("dead_time_ns", cfg.sweep.dead_time_ns);
  sweep.read("budget_us", cfg.sweep.budget_us);
  sweep.finish();

  std::vector<std::string> parts;
  if (!issues.unknown.empty()) parts.push_back("unknown keys: " + join(issues.unknown));
  if (!issues.missing.empty()) parts.push_back("missing required keys: " + join(issues.missing));
  if (!issues.invalid.empty()) parts.push_back("invalid values: " + join(issues.invalid));
  if (!parts.empty()) {
    std::string msg;
    for (const auto& p : parts) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  require(!id.empty(), "experiment.id must be nonempty");
  require(seeds >= 1, "experiment.seeds must be >= 1");
  SpadConfig sc;
  try {
    sc = spad();
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("spad: ") + e.what());
  }
  const int B = sc.num_bins;

  if (scene.depth_map.empty()) {
    require(scene.ambient_flux.has_value(), "scene.ambient_flux is required");
    require(scene.signal_flux || scene.sbr, "scene.signal_flux or scene.sbr is required");
  } else {
    require_file(scene.depth_map, "scene.depth_map");
    require(scene.ambient_flux || !scene.ambient_map.empty(), "scene.ambient_flux or scene.ambient_map is required");
    require(scene.signal_flux || scene.sbr || !scene.signal_map.empty(),
            "scene.signal_flux, scene.sbr or scene.signal_map is required");
  }
  if (!scene.ambient_map.empty()) require_file(scene.ambient_map, "scene.ambient_map");
  if (!scene.signal_map.empty()) require_file(scene.signal_map, "scene.signal_map");
  require(!(scene.signal_flux && scene.sbr), "scene: set only one of signal_flux and sbr");
  require(!scene.ambient_flux || *scene.ambient_flux >= 0.0, "scene.ambient_flux must be >= 0");
  require(!scene.signal_flux || *scene.signal_flux >= 0.0, "scene.signal_flux must be >= 0");
  require(!scene.sbr || *scene.sbr >= 0.0, "scene.sbr must be >= 0");
  require(!scene.depth_bin || (*scene.depth_bin >= 0 && *scene.depth_bin < B),
          "scene.depth_bin must lie in [0, " + std::to_string(B) + ")");
  require(!scene.depth_m || (*scene.depth_m >= 0.0 && depth_to_bin(*scene.depth_m, bin_resolution_ps) < B),
          "scene.depth_m lies outside the unambiguous range");
  if (scene.mismatch) {
    try {
      (void)mismatch_transient(*scene.mismatch, scene.ambient_flux.value_or(0.0), B);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("scene.mismatch: ") + e.what());
    }
  }

  require(budget_us > 0.0, "acquisition.budget_us must be > 0");
  require(max_cycles >= 0, "acquisition.max_cycles must be >= 0");
  require(calibration_fraction >= 0.0 && calibration_fraction < 1.0,
          "acquisition.calibration_fraction must lie in [0, 1)");

  if (metric == TerminationMetric::Termination) {
    require(epsilon > 0.0 && epsilon < 1.0, "exposure.epsilon must lie in (0, 1) for the termination metric");
  } else {
    require(epsilon > 0.0, "exposure.epsilon must be > 0");
  }
  require(!min_cycles || *min_cycles >= 0, "exposure.min_cycles must be >= 0");

  require(prior.sigma_bins > 0.0, "prior.sigma_bins must be > 0");
  require(prior.floor_weight >= 0.0 && prior.floor_weight <= 1.0, "prior.floor_weight must lie in [0, 1]");
  if (prior.kind == PriorKind::External) {
    require(!prior.path.empty(), "prior.path is required for an external prior");
    require_file(prior.path, "prior.path");
  }

  require(flux_grid_count >= 1, "flux_grid.count must be >= 1");
  require(flux_low_factor > 0.0 && flux_low_factor <= flux_high_factor,
          "flux_grid factors must satisfy 0 < low_factor <= high_factor");
  for (double v : flux_values) require(v >= 0.0, "flux_grid.values must be >= 0");

  require(!policies.empty(), "policies must list at least one policy");
  for (const PolicySpec& p : policies) {
    require(p.gate >= 0 && p.gate < B, "policy gate must lie in [0, " + std::to_string(B) + ")");
    require(p.gate_offset >= 0 && p.gate_offset < B,
            "policy gate_offset must lie in [0, " + std::to_string(B) + ")");
    if (p.kind == PolicyKind::Adaptive) {
      require(calibration_fraction > 0.0 || known_ambient,
              "adaptive policy needs acquisition.calibration_fraction > 0 or known_ambient");
    }
  }

  for (double v : sweep.ambient_flux) require(v >= 0.0, "sweep.ambient_flux values must be >= 0");
  for (double v : sweep.sbr) require(v >= 0.0, "sweep.sbr values must be >= 0");
  for (double v : sweep.dead_time_ns) require(v > 0.0, "sweep.dead_time_ns values must be > 0");
  for (double v : sweep.budget_us) require(v > 0.0, "sweep.budget_us values must be > 0");
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json root;
  root["experiment"] = {{"id", cfg.id},
                        {"seed", cfg.seed},
                        {"seeds", cfg.seeds},
                        {"output_dir", cfg.output_dir},
                        {"estimator", std::string(to_string(cfg.estimator))},
                        {"dither", cfg.dither}};
  root["spad"] = {{"bin_resolution_ps", cfg.bin_resolution_ps},
                  {"rep_rate_hz", cfg.rep_rate_hz},
                  {"dead_time_ns", cfg.dead_time_ns},
                  {"max_active_periods", cfg.max_active_periods}};

  json scene = json::object();
  const SceneSpec& sc = cfg.scene;
  if (sc.ambient_flux) scene["ambient_flux"] = *sc.ambient_flux;
  if (sc.signal_flux) scene["signal_flux"] = *sc.signal_flux;
  if (sc.sbr) scene["sbr"] = *sc.sbr;
  if (sc.depth_bin) scene["depth_bin"] = *sc.depth_bin;
  if (sc.depth_m) scene["depth_m"] = *sc.depth_m;
  if (!sc.depth_map.empty()) scene["depth_map"] = sc.depth_map;
  if (!sc.ambient_map.empty()) scene["ambient_map"] = sc.ambient_map;
  if (!sc.signal_map.empty()) scene["signal_map"] = sc.signal_map;
  if (sc.mismatch) {
    if (const auto* p = std::get_if<TwoPeak>(&*sc.mismatch)) {
      scene["mismatch"] = {{"kind", "two_peak"},
                           {"first_bin", p->first_bin},
                           {"first_flux", p->first_flux},
                           {"second_bin", p->second_bin},
                           {"second_flux", p->second_flux}};
    } else {
      const auto& c = std::get<CornerTail>(*sc.mismatch);
      scene["mismatch"] = {{"kind", "corner_tail"},
                           {"bin", c.bin},
                           {"signal_flux", c.signal_flux},
                           {"amplitude", c.amplitude},
                           {"decay_rate", c.decay_rate}};
    }
  }
  root["scene"] = scene;

  root["acquisition"] = {{"budget_us", cfg.budget_us},
                         {"max_cycles", cfg.max_cycles},
                         {"calibration_fraction", cfg.calibration_fraction},
                         {"known_ambient", cfg.known_ambient}};
  json expo = {{"adaptive", cfg.adaptive_exposure},
               {"epsilon", cfg.epsilon},
               {"metric", std::string(to_string(cfg.metric))}};
  if (cfg.min_cycles) expo["min_cycles"] = *cfg.min_cycles;
  root["exposure"] = expo;

  json prior = {{"kind", std::string(to_string(cfg.prior.kind))},
                {"sigma_bins", cfg.prior.sigma_bins},
                {"floor_weight", cfg.prior.floor_weight}};
  if (!cfg.prior.path.empty()) prior["path"] = cfg.prior.path;
  root["prior"] = prior;

  json grid = {{"count", cfg.flux_grid_count},
               {"low_factor", cfg.flux_low_factor},
               {"high_factor", cfg.flux_high_factor}};
  if (!cfg.flux_values.empty()) grid["values"] = cfg.flux_values;
  root["flux_grid"] = grid;

  json policies = json::array();
  for (const PolicySpec& p : cfg.policies) {
    json e = {{"kind", std::string(to_string(p.kind))}};
    if (p.kind == PolicyKind::Fixed) e["gate"] = p.gate;
    if (p.kind == PolicyKind::Adaptive) e["gate_offset"] = p.gate_offset;
    policies.push_back(e);
  }
  root["policies"] = policies;

  json sweep = json::object();
  if (!cfg.sweep.ambient_flux.empty()) sweep["ambient_flux"] = cfg.sweep.ambient_flux;
  if (!cfg.sweep.sbr.empty()) sweep["sbr"] = cfg.sweep.sbr;
  if (!cfg.sweep.dead_time_ns.empty()) sweep["dead_time_ns"] = cfg.sweep.dead_time_ns;
  if (!cfg.sweep.budget_us.empty()) sweep["budget_us"] = cfg.sweep.budget_us;
  root["sweep"] = sweep;

  return root.dump(2) + "\n";
}

}  // namespace spadgate

#include "twinbeam/scenario.hpp"
#include "twinbeam/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

namespace twinbeam {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- names

std::string to_string(Geometry g) {
  switch (g) {
    case Geometry::UnapodizedSingle: return "unapodized_single";
    case Geometry::ApodizedSingle: return "apodized_single";
    case Geometry::ApodizedDouble: return "apodized_double";
  }
  return "?";
}

Geometry geometry_from_string(const std::string& s) {
  for (Geometry g : {Geometry::UnapodizedSingle, Geometry::ApodizedSingle, Geometry::ApodizedDouble})
    if (to_string(g) == s) return g;
  throw ConfigError("geometry: unknown value '" + s + "'");
}

static const std::pair<Output, const char*> kOutputs[] = {
    {Output::Jsa, "jsa"},
    {Output::SchmidtModes, "schmidt_modes"},
    {Output::KVsGain, "K_vs_gain"},
    {Output::FidelityVsGain, "fidelity_vs_gain"},
    {Output::PurityVsGain, "purity_vs_gain"},
    {Output::FidelityMatrix, "fidelity_matrix"},
    {Output::PolingAmplitude, "poling_amplitude"},
};

std::string to_string(Output o) {
  for (auto& [k, v] : kOutputs)
    if (k == o) return v;
  return "?";
}

Output output_from_string(const std::string& s) {
  for (auto& [k, v] : kOutputs)
    if (s == v) return k;
  throw ConfigError("outputs: unknown entry '" + s + "'");
}

std::vector<GainTarget> default_gain_ladder(int points, double lo, double hi) {
  if (points < 1) return {};
  if (!(lo > 0) || !(hi >= lo)) throw ConfigError("gain ladder: need 0 < min <= max");
  std::vector<GainTarget> g(points);
  for (int i = 0; i < points; ++i) {
    double t = points == 1 ? 0.0 : double(i) / (points - 1);
    g[i] = {GainTarget::Kind::MeanPhotons, std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))};
  }
  g.front().value = lo;
  g.back().value = points == 1 ? lo : hi;
  return g;
}

// ---------------------------------------------------------------- config

json ScenarioConfig::to_json() const {
  json j;
  j["name"] = name;
  j["geometry"] = to_string(geometry);
  j["grid"] = {{"n_points", n_points}, {"half_width", half_width}};
  j["medium"] = {{"kappa", kappa}, {"n_domains", n_domains}, {"gamma", gamma}, {"v_pump", v_pump},
                 {"omega_bar_pump", omega_bar_pump}};
  j["pump"] = {{"sigma", pump_sigma}};
  json pol = {{"separability", separability == SeparabilityConvention::Exact ? "exact" : "doubled"}};
  if (sigma_th) pol["sigma_th"] = *sigma_th;
  j["poling"] = pol;
  json ns = json::array(), np = json::array();
  for (auto& g : gains) (g.kind == GainTarget::Kind::MeanPhotons ? ns : np).push_back(g.value);
  j["gains"] = {{"mean_photons", ns}, {"pump_photons", np}};
  j["reference_gain"] = reference_gain;
  if (filter)
    j["filter"] = filter->kind == FilterKind::Identity
                      ? json{{"kind", "identity"}}
                      : json{{"kind", "top_hat"}, {"center", filter->center}, {"half_width", filter->half_width}};
  j["filter_widths"] = filter_widths;
  json outs = json::array();
  for (Output o : outputs) outs.push_back(to_string(o));
  j["outputs"] = outs;
  j["workers"] = workers;
  return j;
}

void ScenarioConfig::validate() const {
  auto bad = [](const std::string& msg) { throw ConfigError(msg); };
  if (n_points < 2) bad("grid.n_points: must be at least 2");
  if (!(half_width > 0)) bad("grid.half_width: must be positive");
  if (!(kappa != 0.0) || !std::isfinite(kappa)) bad("medium.kappa: must be finite and nonzero");
  if (n_domains < 2) bad("medium.n_domains: must be at least 2");
  if (!std::isfinite(gamma)) bad("medium.gamma: must be finite");
  if (!(v_pump > 0)) bad("medium.v_pump: must be positive");
  if (!(1.0 / v_pump + kappa > 0) || !(1.0 / v_pump - kappa > 0))
    bad("medium.kappa: signal and idler group velocities would be non-positive");
  if (!(omega_bar_pump > 0)) bad("medium.omega_bar_pump: must be positive");
  if (!(pump_sigma > 0)) bad("pump.sigma: must be positive");
  if (sigma_th && !(*sigma_th > 0)) bad("poling.sigma_th: must be positive");
  for (auto& g : gains)
    if (!(g.value > 0) || !std::isfinite(g.value)) bad("gains: targets must be positive and finite");
  if (!(reference_gain > 0)) bad("reference_gain: must be positive");
  if (filter && filter->kind == FilterKind::TopHat && !(filter->half_width > 0)) bad("filter.half_width: must be positive");
  for (double w : filter_widths)
    if (!(w > 0)) bad("filter_widths: entries must be positive");
  if (workers < 0) bad("workers: must be nonnegative");
}

namespace {

template <class T>
T get_field(const json& j, const char* section, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(section) + (*section ? "." : "") + key + ": wrong type");
  }
}

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(std::string(section) + (*section ? "." : "") + it.key() + ": unknown field");
  }
}

} // namespace

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig c;
  check_keys(j, "", {"name", "geometry", "grid", "medium", "lab_units", "pump", "poling", "gains", "reference_gain",
                     "filter", "filter_widths", "outputs", "workers"});
  c.name = get_field<std::string>(j, "", "name", c.name);
  if (!j.contains("geometry")) throw ConfigError("geometry: required field missing");
  c.geometry = geometry_from_string(get_field<std::string>(j, "", "geometry", ""));
  c.kappa = c.geometry == Geometry::UnapodizedSingle ? kDefaultKappaUnapodized : kDefaultKappaApodized;

  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, "grid", {"n_points", "half_width"});
    c.n_points = get_field<int>(g, "grid", "n_points", c.n_points);
    c.half_width = get_field<double>(g, "grid", "half_width", c.half_width);
  }
  if (j.contains("lab_units")) {
    // Optional laboratory description; only the pump carrier in units of the bandwidth survives.
    const json& l = j["lab_units"];
    check_keys(l, "lab_units", {"pump_wavelength_nm", "pulse_fwhm_fs"});
    double lambda = get_field<double>(l, "lab_units", "pump_wavelength_nm", 776.0);
    double tau = get_field<double>(l, "lab_units", "pulse_fwhm_fs", 200.0);
    if (!(lambda > 0) || !(tau > 0)) throw ConfigError("lab_units: wavelength and duration must be positive");
    const double c_nm_per_fs = 299.792458;
    double omega = 2.0 * std::numbers::pi * c_nm_per_fs / lambda;  // rad/fs
    double sigma = 2.0 * std::sqrt(std::log(2.0)) / tau;           // rad/fs, transform-limited Gaussian
    c.omega_bar_pump = omega / sigma;
  }
  if (j.contains("medium")) {
    const json& m = j["medium"];
    check_keys(m, "medium", {"kappa", "n_domains", "gamma", "v_pump", "omega_bar_pump"});
    c.kappa = get_field<double>(m, "medium", "kappa", c.kappa);
    c.n_domains = get_field<int>(m, "medium", "n_domains", c.n_domains);
    c.gamma = get_field<double>(m, "medium", "gamma", c.gamma);
    c.v_pump = get_field<double>(m, "medium", "v_pump", c.v_pump);
    c.omega_bar_pump = get_field<double>(m, "medium", "omega_bar_pump", c.omega_bar_pump);
  }
  if (j.contains("pump")) {
    check_keys(j["pump"], "pump", {"sigma"});
    c.pump_sigma = get_field<double>(j["pump"], "pump", "sigma", c.pump_sigma);
  }
  if (j.contains("poling")) {
    const json& p = j["poling"];
    check_keys(p, "poling", {"sigma_th", "separability"});
    if (p.contains("sigma_th") && !p["sigma_th"].is_null()) c.sigma_th = get_field<double>(p, "poling", "sigma_th", 0.0);
    std::string sep = get_field<std::string>(p, "poling", "separability", "exact");
    if (sep == "exact") c.separability = SeparabilityConvention::Exact;
    else if (sep == "doubled") c.separability = SeparabilityConvention::Doubled;
    else throw ConfigError("poling.separability: expected 'exact' or 'doubled'");
  }
  if (j.contains("gains")) {
    const json& g = j["gains"];
    check_keys(g, "gains", {"mean_photons", "pump_photons", "ladder"});
    c.gains.clear();
    if (g.contains("ladder")) {
      const json& l = g["ladder"];
      check_keys(l, "gains.ladder", {"points", "min", "max"});
      c.gains = default_gain_ladder(get_field<int>(l, "gains.ladder", "points", 20),
                                    get_field<double>(l, "gains.ladder", "min", 3e-4),
                                    get_field<double>(l, "gains.ladder", "max", 10.6));
    }
    for (double v : get_field<std::vector<double>>(g, "gains", "mean_photons", {}))
      c.gains.push_back({GainTarget::Kind::MeanPhotons, v});
    for (double v : get_field<std::vector<double>>(g, "gains", "pump_photons", {}))
      c.gains.push_back({GainTarget::Kind::PumpPhotons, v});
  }
  c.reference_gain = get_field<double>(j, "", "reference_gain", c.reference_gain);
  if (j.contains("filter") && !j["filter"].is_null()) {
    const json& f = j["filter"];
    check_keys(f, "filter", {"kind", "center", "half_width"});
    std::string kind = get_field<std::string>(f, "filter", "kind", "top_hat");
    if (kind == "identity") c.filter = FilterFunction::identity();
    else if (kind == "top_hat") {
      double hw = get_field<double>(f, "filter", "half_width", 1.5);
      if (!(hw > 0)) throw ConfigError("filter.half_width: must be positive");
      c.filter = FilterFunction::top_hat(get_field<double>(f, "filter", "center", 0.0), hw);
    } else throw ConfigError("filter.kind: expected 'top_hat' or 'identity'");
  }
  c.filter_widths = get_field<std::vector<double>>(j, "", "filter_widths", {});
  if (j.contains("outputs")) {
    c.outputs.clear();
    for (auto& s : get_field<std::vector<std::string>>(j, "", "outputs", {})) c.outputs.insert(output_from_string(s));
  }
  c.workers = get_field<int>(j, "", "workers", 0);
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j);
}

static std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

static std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ScenarioConfig& cfg) {
  json j = cfg.to_json();
  j.erase("workers");  // does not affect results
  return hex(fnv1a(j.dump()));
}

// ---------------------------------------------------------------- model

SourceModel::SourceModel(const ScenarioConfig& cfg)
    : geometry_(cfg.geometry),
      grid_(FrequencyGrid::symmetric(cfg.half_width, cfg.n_points)),
      medium_(MediumSpec::symmetric_gvm(cfg.kappa, cfg.omega_bar_pump, 1.0, cfg.n_domains, cfg.v_pump, cfg.gamma)),
      pump_sigma_(cfg.pump_sigma) {
  if (geometry_ == Geometry::UnapodizedSingle) {
    profile_ = PolingProfile::uniform(medium_.length, cfg.n_domains);
  } else {
    sigma_th_ = cfg.sigma_th ? *cfg.sigma_th
                             : sigma_th_from_separability(pump_sigma_, medium_.v_signal, medium_.v_pump, cfg.separability);
    PolingDesign d = design_domains({sigma_th_, medium_.length}, cfg.n_domains);
    profile_ = d.profile;
    tracking_error_ = d.max_tracking_error;
  }
}

PumpSpectrum SourceModel::pump(double n_pump) const { return {pump_sigma_, n_pump, medium_.omega_bar_pump}; }

Propagator SourceModel::propagator(double n_pump) const {
  if (geometry_ == Geometry::ApodizedDouble) return double_pass_propagator(profile_, grid_, medium_, pump(n_pump));
  return stitch(profile_, grid_, medium_, pump(n_pump));
}

PropagatorKey SourceModel::key(double n_pump) const {
  return make_key(grid_, medium_, profile_, pump(n_pump), to_string(geometry_));
}

const Vec& SourceModel::low_gain_spectrum() const {
  std::call_once(probe_once_, [&] {
    const double p0 = 1e-8;
    Eigen::BDCSVD<CMat> svd(propagator(p0).U_si());
    Vec sv = svd.singularValues();
    int keep = 0;
    while (keep < sv.size() && sv[keep] > 1e-6 * sv[0]) ++keep;
    probe_spectrum_ = sv.head(keep).array().square() / p0;
  });
  return probe_spectrum_;
}

CalibrationResult SourceModel::calibrate(double target_ns, Propagator* u) const {
  const Vec& q = low_gain_spectrum();
  if (q.size() == 0 || !(q[0] > 0)) throw CalibrationError("calibrate: the source produces no photons");
  // Warm start from the perturbative model <N_S> = sum sinh^2(sqrt(N_P q_l)); it ignores time ordering,
  // so the true curve is only approached, but guess and local slope are usually within a few percent.
  auto model = [&](double np, double* slope) {
    double ns = 0, d = 0;
    for (double ql : q) {
      double a = std::sqrt(np * ql), sh = std::sinh(a);
      ns += sh * sh;
      d += sh * std::cosh(a) * a;
    }
    if (slope) *slope = d / ns;
    return ns;
  };
  // the leading term alone reaches the target at the single-mode solution, so that bounds N_P above
  const double a1 = std::asinh(std::sqrt(target_ns));
  double hi = std::log(a1 * a1 / q[0]), lo = hi - 80.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    double mid = 0.5 * (lo + hi);
    (model(std::exp(mid), nullptr) < target_ns ? lo : hi) = mid;
  }
  CalibrationOptions opts;
  opts.initial_guess = std::exp(0.5 * (lo + hi));
  model(opts.initial_guess, &opts.slope_hint);
  Propagator last;
  auto f = [&](double np) {
    last = propagator(np);
    return last.mean_signal_photons();
  };
  CalibrationResult res = calibrate_pump_power(target_ns, f, opts);
  if (u) *u = res.evaluations ? std::move(last) : propagator(res.n_pump);
  return res;
}

// ---------------------------------------------------------------- points

FilteredPoint filter_state(const SchmidtDecomposition& d, const FilterFunction& f, const FrequencyGrid& grid,
                           bool keep_modes) {
  FilteredPoint out;
  const Vec t = filter_on_grid(f, grid);
  const double k = schmidt_number(d);
  if ((t.array() == 1.0).all()) {
    out.pure_path = true;
    out.leading_mode = d.rho_s.col(0);
    out.schmidt_number = k;
    out.mean_photons = mean_signal_photons(d);
    return out;
  }
  if (k - 1.0 < kPurePathThreshold) {
    PureFilterResult p = filter_pure_mode(d, t);
    out.pure_path = true;
    out.leading_mode = p.a_signal;
    out.schmidt_number = 1.0;
    out.mean_photons = p.sinh2_eff;
    // two filtered modes with <a^dag a> = <b^dag b> = n and |<ab>| = mm: nu = sqrt((n + 1/2)^2 - mm^2)
    double n = p.sinh2_eff, mm = std::sqrt(p.eta_signal * p.eta_idler) * std::sinh(d.r[0]) * std::cosh(d.r[0]);
    out.purity = 1.0 / (4.0 * ((n + 0.5) * (n + 0.5) - mm * mm));
    return out;
  }
  CovarianceMatrix cov = covariance_from_state(d, t);
  WilliamsonResult w = williamson(cov.V);
  BlochMessiahResult b = bloch_messiah(w.S);
  FilteredModeSet m = extract_mode_sets(cov, w, b);
  out.pure_path = false;
  out.leading_mode = m.squeeze_signal.col(0);
  out.schmidt_number = filtered_schmidt_number(m);
  PurityRoutes pr = purity_routes(cov.V, w.nu);
  if (std::abs(pr.from_symplectic - pr.from_determinant) > 1e-8)
    throw NumericalError("filter_state: purity routes disagree");
  out.purity = pr.from_symplectic;
  // <N_S> after the filter from the signal quadrature variances
  double trace = 0;
  for (int i = 0; i < cov.n_modes() / 2; ++i) trace += cov.V(i, i) + cov.V(cov.n_modes() + i, cov.n_modes() + i) - 1.0;
  out.mean_photons = 0.5 * trace;
  if (keep_modes) out.modes = std::move(m);
  return out;
}

namespace {

std::string calib_key(const SourceModel& model, double target) {
  PropagatorKey k = model.key(0.0);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", target);
  return hex(fnv1a(hex(k.grid) + hex(k.medium) + hex(k.profile) + buf));
}

std::string key_name(const PropagatorKey& k) { return hex(fnv1a(hex(k.grid) + hex(k.medium) + hex(k.profile) + hex(k.pump))); }

} // namespace

GainPoint evaluate_point(const SourceModel& model, const GainTarget& target, const std::optional<FilterFunction>& filter,
                         const std::string& cache_dir, bool keep_modes) {
  GainPoint gp;
  gp.target = target;
  Propagator u;
  bool have_u = false;
  if (target.kind == GainTarget::Kind::PumpPhotons) {
    gp.n_pump = target.value;
  } else if (!cache_dir.empty()) {
    std::ifstream in(fs::path(cache_dir) / ("calib-" + calib_key(model, target.value) + ".json"));
    json j;
    if (in && (in >> j) && j.contains("n_pump")) {
      gp.n_pump = j["n_pump"].get<double>();
      gp.calibration_cost = j.value("evaluations", 0);
    }
  }
  if (gp.n_pump > 0 && !cache_dir.empty()) {
    if (auto c = load_propagator((fs::path(cache_dir) / (key_name(model.key(gp.n_pump)) + ".twbprop")).string(),
                                 model.key(gp.n_pump))) {
      u = std::move(*c);
      have_u = true;
    }
  }
  if (!have_u) {
    if (gp.n_pump > 0) {
      u = model.propagator(gp.n_pump);
    } else {
      CalibrationResult c = model.calibrate(target.value, &u);
      gp.n_pump = c.n_pump;
      gp.evaluations = gp.calibration_cost = c.evaluations;
    }
    if (!cache_dir.empty()) {
      fs::create_directories(cache_dir);
      save_propagator((fs::path(cache_dir) / (key_name(model.key(gp.n_pump)) + ".twbprop")).string(), u,
                      model.key(gp.n_pump));
      if (target.kind == GainTarget::Kind::MeanPhotons) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "{\"n_pump\": %.17g, \"evaluations\": %d}\n", gp.n_pump, gp.calibration_cost);
        std::ofstream(fs::path(cache_dir) / ("calib-" + calib_key(model, target.value) + ".json")) << buf;
      }
    }
  }
  gp.schmidt = schmidt_decompose(u, model.grid(), &gp.bogoliubov_residual);
  gp.mean_photons = mean_signal_photons(gp.schmidt);
  gp.schmidt_number = schmidt_number(gp.schmidt);
  gp.r = gp.schmidt.r.head(std::min(5, gp.schmidt.n_modes()));
  if (filter) gp.filtered = filter_state(gp.schmidt, *filter, model.grid(), keep_modes);
  return gp;
}

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
  if (n <= 0) return;
  if (workers <= 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------- output

namespace {

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

class Writer {
 public:
  Writer(std::string dir, std::string stem) : dir_(std::move(dir)), stem_(std::move(stem)) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }
  bool enabled() const { return !dir_.empty(); }
  std::string path(const std::string& what, const std::string& ext) const {
    return (fs::path(dir_) / (stem_ + "-" + what + "." + ext)).string();
  }
  void text(const std::string& what, const std::string& ext, const std::string& body, std::vector<std::string>& files) {
    std::string p = path(what, ext);
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p);
    out << body;
    files.push_back(p);
  }

 private:
  std::string dir_, stem_;
};

json matrix_json(const Mat& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

std::string modes_csv(const FrequencyGrid& grid, const std::vector<std::pair<std::string, CVec>>& cols) {
  std::ostringstream s;
  s << "omega";
  for (auto& [name, v] : cols) s << ',' << name << "_re," << name << "_im";
  s << '\n';
  for (int n = 0; n < grid.size(); ++n) {
    s << fmt(grid.omega(n));
    for (auto& [name, v] : cols) s << ',' << fmt(v[n].real()) << ',' << fmt(v[n].imag());
    s << '\n';
  }
  return s.str();
}

std::string jsa_csv(const JsaMatrix& j) {
  std::ostringstream s;
  s << "omega_s,omega_i,re,im\n";
  for (int a = 0; a < j.values.rows(); ++a)
    for (int b = 0; b < j.values.cols(); ++b)
      s << fmt(j.axis_signal[a]) << ',' << fmt(j.axis_idler[b]) << ',' << fmt(j.values(a, b).real()) << ','
        << fmt(j.values(a, b).imag()) << '\n';
  return s.str();
}

json point_json(const GainPoint& p) {
  json j = {{"target", p.target.value},
            {"target_kind", p.target.kind == GainTarget::Kind::MeanPhotons ? "mean_photons" : "pump_photons"},
            {"n_pump", p.n_pump},
            {"mean_photons", p.mean_photons},
            {"schmidt_number", p.schmidt_number},
            {"r", std::vector<double>(p.r.data(), p.r.data() + p.r.size())},
            {"fidelity_lh", p.fidelity_lh},
            {"bogoliubov_residual", p.bogoliubov_residual},
            {"calibration_evaluations", p.calibration_cost}};
  if (p.filtered) {
    j["filtered"] = {{"path", p.filtered->pure_path ? "pure" : "covariance"},
                     {"schmidt_number", p.filtered->schmidt_number},
                     {"purity", p.filtered->purity},
                     {"mean_photons", p.filtered->mean_photons},
                     {"fidelity_lh", p.fidelity_lh_filtered}};
  }
  return j;
}

std::vector<CVec> fidelity_modes(const FilteredModeSet& m) {
  std::vector<CVec> v;
  for (int i = 0; i < std::min<int>(2, m.squeeze_signal.cols()); ++i) v.push_back(m.squeeze_signal.col(i));
  for (int i = 0; i < std::min<int>(2, m.thermal_signal.cols()); ++i) v.push_back(m.thermal_signal.col(i));
  return v;
}

FilterSweep analyze_sweep(const SourceModel& model, const GainPoint& ref, const std::vector<GainPoint>& pts,
                          const std::vector<double>& widths, int workers) {
  FilterSweep sw;
  sw.widths = widths;
  for (auto& p : pts) sw.bare_mean_photons.push_back(p.mean_photons);
  const double dw = model.grid().delta_omega();
  for (double w : widths) {
    FilterFunction f = std::isinf(w) ? FilterFunction::identity() : FilterFunction::top_hat(0.0, w);
    FilteredPoint fr = filter_state(ref.schmidt, f, model.grid());
    std::vector<double> fid(pts.size()), pur(pts.size());
    parallel_for(static_cast<int>(pts.size()), workers, [&](int i) {
      FilteredPoint fp = filter_state(pts[i].schmidt, f, model.grid());
      fid[i] = mode_fidelity(fr.leading_mode, fp.leading_mode, dw);
      pur[i] = fp.purity;
    });
    sw.fidelity.push_back(fid);
    sw.purity.push_back(pur);
  }
  return sw;
}

std::string sweep_csv(const FilterSweep& sw) {
  std::ostringstream s;
  s << "half_width,bare_mean_photons,fidelity_lh,purity\n";
  for (size_t w = 0; w < sw.widths.size(); ++w)
    for (size_t i = 0; i < sw.bare_mean_photons.size(); ++i)
      s << fmt(sw.widths[w]) << ',' << fmt(sw.bare_mean_photons[i]) << ',' << fmt(sw.fidelity[w][i]) << ','
        << fmt(sw.purity[w][i]) << '\n';
  return s.str();
}

} // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg_in, const RunOptions& opts) {
  ScenarioConfig cfg = cfg_in;
  if (opts.gain_points > 0) cfg.gains = default_gain_ladder(opts.gain_points);
  cfg.validate();
  auto log = [&](const std::string& s) {
    if (opts.log) opts.log(s);
  };

  ScenarioResult res;
  res.config = cfg;
  res.hash = config_hash(cfg);
  Writer out(opts.out_dir, cfg.name + "-" + res.hash.substr(0, 8));

  SourceModel model(cfg);
  if (cfg.geometry != Geometry::UnapodizedSingle) res.poling_tracking_error = model.tracking_error();
  const bool want_matrix = cfg.outputs.count(Output::FidelityMatrix) && cfg.filter;

  if (cfg.gains.empty()) {
    res.summary = {{"config_hash", res.hash}, {"geometry", to_string(cfg.geometry)}, {"points", json::array()}};
    if (out.enabled()) out.text("summary", "json", res.summary.dump(2) + "\n", res.files);
    return res;
  }

  log("reference point <N_S> = " + fmt(cfg.reference_gain));
  res.reference = evaluate_point(model, {GainTarget::Kind::MeanPhotons, cfg.reference_gain}, cfg.filter, opts.cache_dir,
                                 want_matrix);
  res.points.resize(cfg.gains.size());
  std::mutex log_mutex;
  parallel_for(static_cast<int>(cfg.gains.size()), cfg.workers, [&](int i) {
    const GainTarget& g = cfg.gains[i];
    bool same = g.kind == GainTarget::Kind::MeanPhotons && g.value == cfg.reference_gain;
    res.points[i] = same ? res.reference : evaluate_point(model, g, cfg.filter, opts.cache_dir, want_matrix);
    std::lock_guard<std::mutex> lock(log_mutex);
    log("point " + std::to_string(i + 1) + "/" + std::to_string(cfg.gains.size()) + ": <N_S> = " +
        fmt(res.points[i].mean_photons) + ", K = " + fmt(res.points[i].schmidt_number));
  });

  const double dw = model.grid().delta_omega();
  auto fid = [&](GainPoint& p) {
    p.fidelity_lh = mode_fidelity(res.reference.schmidt.rho_s.col(0), p.schmidt.rho_s.col(0), dw);
    if (p.filtered) p.fidelity_lh_filtered = mode_fidelity(res.reference.filtered->leading_mode, p.filtered->leading_mode, dw);
  };
  fid(res.reference);
  for (auto& p : res.points) fid(p);

  json pts = json::array();
  for (auto& p : res.points) pts.push_back(point_json(p));
  json config_json = cfg.to_json();
  config_json.erase("workers");  // results do not depend on it
  res.summary = {{"config_hash", res.hash},
                 {"name", cfg.name},
                 {"geometry", to_string(cfg.geometry)},
                 {"config", config_json},
                 {"reference", point_json(res.reference)},
                 {"points", pts}};
  if (res.poling_tracking_error) res.summary["poling_max_tracking_error"] = *res.poling_tracking_error;

  const GainPoint& lo = res.reference;
  const GainPoint& hi = res.points.back();
  std::optional<FilterSweep> sweep;
  if (!cfg.filter_widths.empty()) {
    sweep = analyze_sweep(model, res.reference, res.points, cfg.filter_widths, cfg.workers);
    json fw = json::array();
    for (size_t w = 0; w < sweep->widths.size(); ++w)
      fw.push_back({{"half_width", sweep->widths[w]}, {"fidelity_lh", sweep->fidelity[w]}, {"purity", sweep->purity[w]}});
    res.summary["filter_sweep"] = fw;
  }
  if (want_matrix && lo.filtered && lo.filtered->modes && hi.filtered && hi.filtered->modes) {
    res.summary["fidelity_matrix"] = {{"labels", {"A1", "A2", "thermal_A1", "thermal_A2"}},
                                      {"low_gain", matrix_json(fidelity_matrix(fidelity_modes(*lo.filtered->modes), dw))},
                                      {"high_gain", matrix_json(fidelity_matrix(fidelity_modes(*hi.filtered->modes), dw))}};
  }

  if (out.enabled()) {
    std::ostringstream k, f, p;
    k << "target,n_pump,mean_photons,schmidt_number\n";
    f << "mean_photons,fidelity_lh" << (cfg.filter ? ",filtered_fidelity_lh" : "") << '\n';
    p << "mean_photons,purity,filtered_schmidt_number,filtered_mean_photons\n";
    for (auto& g : res.points) {
      k << fmt(g.target.value) << ',' << fmt(g.n_pump) << ',' << fmt(g.mean_photons) << ',' << fmt(g.schmidt_number) << '\n';
      f << fmt(g.mean_photons) << ',' << fmt(g.fidelity_lh);
      if (cfg.filter) f << ',' << fmt(g.fidelity_lh_filtered);
      f << '\n';
      if (g.filtered)
        p << fmt(g.mean_photons) << ',' << fmt(g.filtered->purity) << ',' << fmt(g.filtered->schmidt_number) << ','
          << fmt(g.filtered->mean_photons) << '\n';
    }
    if (cfg.outputs.count(Output::KVsGain)) out.text("K_vs_gain", "csv", k.str(), res.files);
    if (cfg.outputs.count(Output::FidelityVsGain)) out.text("fidelity_vs_gain", "csv", f.str(), res.files);
    if (cfg.outputs.count(Output::PurityVsGain) && cfg.filter) out.text("purity_vs_gain", "csv", p.str(), res.files);
    if (cfg.outputs.count(Output::Jsa)) {
      out.text("jsa_low", "csv", jsa_csv(jsa(lo.schmidt, model.grid())), res.files);
      out.text("jsa_high", "csv", jsa_csv(jsa(hi.schmidt, model.grid())), res.files);
    }
    if (cfg.outputs.count(Output::SchmidtModes)) {
      std::vector<std::pair<std::string, CVec>> cols;
      for (auto [tag, g] : {std::pair<const char*, const GainPoint*>{"low", &lo}, {"high", &hi}})
        for (int i = 0; i < std::min(3, g->schmidt.n_modes()); ++i) {
          cols.push_back({std::string(tag) + "_signal" + std::to_string(i + 1), g->schmidt.rho_s.col(i)});
          cols.push_back({std::string(tag) + "_idler" + std::to_string(i + 1), g->schmidt.rho_i.col(i)});
        }
      out.text("schmidt_modes", "csv", modes_csv(model.grid(), cols), res.files);
    }
    if (cfg.outputs.count(Output::FidelityMatrix) && res.summary.contains("fidelity_matrix"))
      out.text("fidelity_matrix", "json", res.summary["fidelity_matrix"].dump(2) + "\n", res.files);
    if (cfg.outputs.count(Output::PolingAmplitude) && cfg.geometry != Geometry::UnapodizedSingle) {
      std::ostringstream s;
      s << "z,target_amplitude,profile_amplitude,sign\n";
      PmfTarget t{model.sigma_th(), model.medium().length};
      auto cum = model.profile().cumulative_amplitude();
      double scale = model.sigma_th() * std::sqrt(2.0 * std::numbers::pi) *
                     std::erf(t.length / (2.0 * std::numbers::sqrt2 * t.sigma_th));
      for (size_t i = 0; i < cum.size(); ++i) {
        double z = std::min(i * model.profile().domain_length, t.length);
        s << fmt(z) << ',' << fmt(target_amplitude(t, z)) << ',' << fmt(cum[i] / scale) << ','
          << (i ? model.profile().signs[i - 1] : 0) << '\n';
      }
      out.text("poling_amplitude", "csv", s.str(), res.files);
    }
    if (sweep) out.text("filter_sweep", "csv", sweep_csv(*sweep), res.files);
    out.text("summary", "json", res.summary.dump(2) + "\n", res.files);
  }
  return res;
}

FilterSweep sweep_filters(const ScenarioConfig& cfg_in, const std::vector<double>& widths, const RunOptions& opts) {
  ScenarioConfig cfg = cfg_in;
  if (opts.gain_points > 0) cfg.gains = default_gain_ladder(opts.gain_points);
  cfg.validate();
  if (cfg.geometry != Geometry::ApodizedSingle) throw ConfigError("sweep_filters: requires the apodized_single geometry");
  for (double w : widths)
    if (!(w > 0)) throw ConfigError("sweep_filters: widths must be positive");
  SourceModel model(cfg);
  GainPoint ref = evaluate_point(model, {GainTarget::Kind::MeanPhotons, cfg.reference_gain}, std::nullopt, opts.cache_dir);
  std::vector<GainPoint> pts(cfg.gains.size());
  parallel_for(static_cast<int>(pts.size()), cfg.workers,
               [&](int i) { pts[i] = evaluate_point(model, cfg.gains[i], std::nullopt, opts.cache_dir); });
  FilterSweep sw = analyze_sweep(model, ref, pts, widths, cfg.workers);
  if (!opts.out_dir.empty()) {
    Writer out(opts.out_dir, cfg.name + "-" + config_hash(cfg).substr(0, 8));
    std::vector<std::string> files;
    out.text("filter_sweep", "csv", sweep_csv(sw), files);
  }
  return sw;
}

} // namespace twinbeam

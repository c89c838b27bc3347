#pragma once

#include "twinbeam/gaussian.hpp"
#include "twinbeam/grid_medium.hpp"
#include "twinbeam/poling.hpp"
#include "twinbeam/propagator.hpp"
#include "twinbeam/schmidt.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace twinbeam {

enum class Geometry { UnapodizedSingle, ApodizedSingle, ApodizedDouble };

std::string to_string(Geometry g);
Geometry geometry_from_string(const std::string& s);

enum class Output { Jsa, SchmidtModes, KVsGain, FidelityVsGain, PurityVsGain, FidelityMatrix, PolingAmplitude };

std::string to_string(Output o);
Output output_from_string(const std::string& s);

struct GainTarget {
  enum class Kind { MeanPhotons, PumpPhotons };
  Kind kind = Kind::MeanPhotons;
  double value = 0.0;
};

// 20 log-spaced <N_S> targets from 3e-4 to 10.6 unless told otherwise.
std::vector<GainTarget> default_gain_ladder(int points = 20, double lo = 3e-4, double hi = 10.6);

// Region-length calibration per geometry (kappa L with L = 1), see README.
constexpr double kDefaultKappaUnapodized = 3.0;
constexpr double kDefaultKappaApodized = 4.0;

struct ScenarioConfig {
  std::string name = "scenario";
  Geometry geometry = Geometry::ApodizedSingle;
  int n_points = 501;
  double half_width = 6.0;
  double kappa = kDefaultKappaApodized;  // 1/v_S - 1/v_P in units of sigma^-1 L^-1
  int n_domains = 1000;
  double gamma = 1.0;
  double v_pump = 0.1;  // only 1/v_l - 1/v_P enters; 1/v_P > |kappa| keeps all velocities positive
  double omega_bar_pump = 291.56;  // 776 nm pump, 200 fs FWHM
  double pump_sigma = 1.0;
  std::optional<double> sigma_th;  // apodization width; default from separability
  SeparabilityConvention separability = SeparabilityConvention::Exact;
  std::vector<GainTarget> gains = default_gain_ladder();
  double reference_gain = 3e-4;  // low-gain point L of F(L, H)
  std::optional<FilterFunction> filter;
  std::vector<double> filter_widths;
  std::set<Output> outputs = {Output::KVsGain, Output::FidelityVsGain};
  int workers = 0;  // 0: hardware concurrency

  nlohmann::json to_json() const;
  void validate() const;
};

ScenarioConfig config_from_json(const nlohmann::json& j);
ScenarioConfig load_config(const std::string& path);
std::string config_hash(const ScenarioConfig& cfg);

// Everything needed to build propagators for one geometry; immutable and shareable across threads.
class SourceModel {
 public:
  explicit SourceModel(const ScenarioConfig& cfg);

  Geometry geometry() const { return geometry_; }
  const FrequencyGrid& grid() const { return grid_; }
  const MediumSpec& medium() const { return medium_; }
  const PolingProfile& profile() const { return profile_; }
  double sigma_th() const { return sigma_th_; }
  double tracking_error() const { return tracking_error_; }
  PumpSpectrum pump(double n_pump) const;

  Propagator propagator(double n_pump) const;
  PropagatorKey key(double n_pump) const;
  // Finds N_P for the target; the propagator at the solution is returned through u when non-null.
  CalibrationResult calibrate(double target_ns, Propagator* u = nullptr) const;

 private:
  // q_l = r_l^2 / N_P of the perturbative Schmidt spectrum, from one low-gain probe
  const Vec& low_gain_spectrum() const;

  Geometry geometry_;
  FrequencyGrid grid_;
  MediumSpec medium_;
  PolingProfile profile_;
  double pump_sigma_, sigma_th_ = 0, tracking_error_ = 0;
  mutable std::once_flag probe_once_;
  mutable Vec probe_spectrum_;
};

struct FilteredPoint {
  bool pure_path = false;
  CVec leading_mode;  // filtered signal mode A_1
  double schmidt_number = 1.0;
  double purity = 1.0;
  double mean_photons = 0.0;
  std::optional<FilteredModeSet> modes;  // covariance path only
};

struct GainPoint {
  GainTarget target;
  double n_pump = 0.0;
  double mean_photons = 0.0;
  double schmidt_number = 1.0;
  Vec r;
  double bogoliubov_residual = 0.0;
  int evaluations = 0;        // propagators built for calibration in this run
  int calibration_cost = 0;   // evaluations the calibration needed, also when read back from the cache
  SchmidtDecomposition schmidt;
  double fidelity_lh = 1.0;
  std::optional<FilteredPoint> filtered;
  double fidelity_lh_filtered = 1.0;
};

// Filtering of a decomposed state: pure shortcut when K - 1 < threshold, covariance path otherwise.
FilteredPoint filter_state(const SchmidtDecomposition& d, const FilterFunction& f, const FrequencyGrid& grid,
                           bool keep_modes = false);

struct RunOptions {
  std::string out_dir;    // empty: no files
  std::string cache_dir;  // empty: no propagator cache
  int gain_points = 0;    // >0: replace gains with a ladder of this many points
  std::function<void(const std::string&)> log;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::string hash;
  GainPoint reference;
  std::vector<GainPoint> points;
  std::vector<std::string> files;
  nlohmann::json summary;
  std::optional<double> poling_tracking_error;
};

// Evaluates one gain point (calibration, gate, decomposition, optional filtering).
GainPoint evaluate_point(const SourceModel& model, const GainTarget& target, const std::optional<FilterFunction>& filter,
                         const std::string& cache_dir = "", bool keep_modes = false);

ScenarioResult run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});

struct FilterSweep {
  std::vector<double> widths;             // half widths; +inf = no filter
  std::vector<double> bare_mean_photons;  // pre-filter <N_S>, one per gain
  std::vector<std::vector<double>> fidelity;  // [width][gain]
  std::vector<std::vector<double>> purity;    // [width][gain]
};

FilterSweep sweep_filters(const ScenarioConfig& cfg, const std::vector<double>& half_widths, const RunOptions& opts = {});

// Runs f(i) for i in [0, n) on a pool of workers; exceptions are rethrown in the caller.
void parallel_for(int n, int workers, const std::function<void(int)>& f);

} // namespace twinbeam

#include "twinbeam/grid_medium.hpp"
#include "twinbeam/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace twinbeam {

FrequencyGrid::FrequencyGrid(double omega_min, double omega_max, int n_points)
    : min_(omega_min), max_(omega_max), n_(n_points) {
  if (n_points < 2)
    throw InvalidParameter("FrequencyGrid: need at least 2 points, got " + std::to_string(n_points));
  if (!std::isfinite(omega_min) || !std::isfinite(omega_max) || !(omega_max > omega_min))
    throw InvalidParameter("FrequencyGrid: require finite omega_min < omega_max");
  dw_ = (max_ - min_) / (n_ - 1);
  center_ = 0.5 * (min_ + max_);
}

FrequencyGrid FrequencyGrid::symmetric(double half_width, int n_points) {
  if (!(half_width > 0)) throw InvalidParameter("FrequencyGrid: half width must be positive");
  return FrequencyGrid(-half_width, half_width, n_points);
}

double FrequencyGrid::omega(int n) const {
  if (n < 0 || n >= n_) throw OutOfRange("FrequencyGrid: index " + std::to_string(n) + " out of range");
  // Measured from the centre so that a symmetric grid is exactly antisymmetric: omega(N-1-n) == -omega(n).
  return center_ + (n - 0.5 * (n_ - 1)) * dw_;
}

int FrequencyGrid::index_of(double omega) const {
  double x = (omega - min_) / dw_;
  if (!(x > -0.5 && x < n_ - 0.5)) throw OutOfRange("FrequencyGrid: frequency outside the grid");
  return static_cast<int>(std::lround(x));
}

Vec FrequencyGrid::points() const {
  Vec p(n_);
  for (int n = 0; n < n_; ++n) p[n] = omega(n);
  return p;
}

MediumSpec MediumSpec::symmetric_gvm(double kappa, double omega_bar_pump, double length, int n_domains,
                                     double v_pump, double gamma) {
  MediumSpec m;
  m.v_pump = v_pump;
  m.v_signal = 1.0 / (1.0 / v_pump + kappa);
  m.v_idler = 1.0 / (1.0 / v_pump - kappa);
  m.omega_bar_pump = omega_bar_pump;
  m.omega_bar_signal = m.omega_bar_idler = 0.5 * omega_bar_pump;
  m.gamma = gamma;
  m.length = length;
  m.n_domains = n_domains;
  m.validate();
  return m;
}

void MediumSpec::validate() const {
  for (double v : {v_pump, v_signal, v_idler})
    if (v == 0.0 || !std::isfinite(v)) throw InvalidParameter("MediumSpec: group velocities must be finite and nonzero");
  if (!(length > 0)) throw InvalidParameter("MediumSpec: length must be positive");
  if (n_domains < 1) throw InvalidParameter("MediumSpec: n_domains must be positive");
  if (!std::isfinite(gamma)) throw InvalidParameter("MediumSpec: gamma must be finite");
  double scale = std::max({std::abs(omega_bar_pump), std::abs(omega_bar_signal), std::abs(omega_bar_idler), 1.0});
  if (std::abs(omega_bar_pump - omega_bar_signal - omega_bar_idler) > 1e-12 * scale)
    throw InvalidParameter("MediumSpec: energy matching omega_bar_P = omega_bar_S + omega_bar_I violated");
}

double MediumSpec::inverse_velocity_mismatch(Mode mode) const {
  double v = mode == Mode::Signal ? v_signal : v_idler;
  if (v == 0.0 || v_pump == 0.0) throw InvalidParameter("MediumSpec: zero group velocity");
  return 1.0 / v - 1.0 / v_pump;
}

bool MediumSpec::is_symmetric_gvm(double rel_tol) const {
  double ks = inverse_velocity_mismatch(Mode::Signal), ki = inverse_velocity_mismatch(Mode::Idler);
  return std::abs(ks + ki) <= rel_tol * std::max(std::abs(ks), std::abs(ki));
}

MediumSpec MediumSpec::with_swapped_velocities() const {
  MediumSpec m = *this;
  std::swap(m.v_signal, m.v_idler);
  return m;
}

FilterFunction FilterFunction::top_hat(double center, double half_width) {
  if (!(half_width > 0)) throw InvalidParameter("FilterFunction: top-hat half width must be positive");
  return {FilterKind::TopHat, center, half_width};
}

cdouble pump_amplitude(const PumpSpectrum& pump, double omega) {
  if (!(pump.sigma > 0)) throw InvalidParameter("pump_amplitude: sigma must be positive");
  if (pump.n_pump_photons < 0) throw InvalidParameter("pump_amplitude: negative pump photon number");
  double d = (omega - pump.omega_bar_pump) / pump.sigma;
  double pref = std::sqrt(pump.omega_bar_pump * pump.n_pump_photons) * std::pow(std::numbers::pi, -0.25) /
                std::sqrt(pump.sigma);
  return {pref * std::exp(-0.5 * d * d), 0.0};
}

double delta_k(const MediumSpec& medium, Mode mode, double omega) {
  return medium.inverse_velocity_mismatch(mode) * (omega - medium.omega_bar(mode));
}

double filter_transmission(const FilterFunction& f, double omega) {
  if (f.kind == FilterKind::Identity) return 1.0;
  return std::abs(omega - f.center) < f.half_width ? 1.0 : 0.0;
}

Vec filter_on_grid(const FilterFunction& f, const FrequencyGrid& grid) {
  Vec t(grid.size());
  for (int n = 0; n < grid.size(); ++n) t[n] = filter_transmission(f, grid.omega(n));
  return t;
}

} // namespace twinbeam

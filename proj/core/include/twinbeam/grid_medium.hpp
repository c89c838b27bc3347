#pragma once

#include "twinbeam/types.hpp"

namespace twinbeam {

// Uniform grid of detunings from the central frequency of each field.
// Signal point n sits at omega_bar_S + omega(n), idler point m at omega_bar_I + omega(m).
class FrequencyGrid {
 public:
  FrequencyGrid(double omega_min, double omega_max, int n_points);
  static FrequencyGrid symmetric(double half_width, int n_points);

  int size() const { return n_; }
  double omega_min() const { return min_; }
  double omega_max() const { return max_; }
  double delta_omega() const { return dw_; }
  double omega(int n) const;
  // Nearest grid index; throws OutOfRange outside [min - dw/2, max + dw/2].
  int index_of(double omega) const;
  Vec points() const;
  bool is_symmetric() const { return min_ == -max_; }

  bool operator==(const FrequencyGrid& o) const { return min_ == o.min_ && max_ == o.max_ && n_ == o.n_; }
  bool operator!=(const FrequencyGrid& o) const { return !(*this == o); }

 private:
  double min_, max_, dw_, center_;
  int n_;
};

struct MediumSpec {
  double v_pump = 1.0, v_signal = 1.0, v_idler = 1.0;
  double omega_bar_pump = 2.0, omega_bar_signal = 1.0, omega_bar_idler = 1.0;
  double gamma = 1.0;
  double length = 1.0;
  int n_domains = 1;

  // Symmetric group-velocity matching: 1/v_S - 1/v_P = kappa = -(1/v_I - 1/v_P).
  static MediumSpec symmetric_gvm(double kappa, double omega_bar_pump, double length, int n_domains,
                                  double v_pump = 1.0, double gamma = 1.0);

  void validate() const;
  // 1/v_l - 1/v_P
  double inverse_velocity_mismatch(Mode mode) const;
  double omega_bar(Mode mode) const { return mode == Mode::Signal ? omega_bar_signal : omega_bar_idler; }
  bool is_symmetric_gvm(double rel_tol = 1e-12) const;
  // The half-wave plate between double-pass regions interchanges the group velocities.
  MediumSpec with_swapped_velocities() const;
};

struct PumpSpectrum {
  double sigma = 1.0;
  double n_pump_photons = 0.0;
  double omega_bar_pump = 2.0;
};

enum class FilterKind { TopHat, Identity };

struct FilterFunction {
  FilterKind kind = FilterKind::Identity;
  double center = 0.0;
  double half_width = 0.0;

  static FilterFunction identity() { return {}; }
  static FilterFunction top_hat(double center, double half_width);
};

// beta_P(omega) with hbar = 1; omega is an absolute frequency.
cdouble pump_amplitude(const PumpSpectrum& pump, double omega);

// (1/v_l - 1/v_P)(omega - omega_bar_l), omega absolute.
double delta_k(const MediumSpec& medium, Mode mode, double omega);

double filter_transmission(const FilterFunction& f, double omega);

// Transmission sampled on grid detunings (filter centre given as a detuning).
Vec filter_on_grid(const FilterFunction& f, const FrequencyGrid& grid);

} // namespace twinbeam

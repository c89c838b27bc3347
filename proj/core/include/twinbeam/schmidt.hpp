#pragma once

#include "twinbeam/grid_medium.hpp"
#include "twinbeam/propagator.hpp"
#include "twinbeam/types.hpp"

#include <functional>

namespace twinbeam {

// U_SI / dw = sum_l sinh(r_l) rho_S_l(w) rho_I_l(w'); mode columns satisfy sum |rho|^2 dw = 1.
struct SchmidtDecomposition {
  Vec r;       // descending, >= 0
  CMat rho_s;  // N x n_modes
  CMat rho_i;
  double delta_omega = 1.0;

  int n_modes() const { return static_cast<int>(r.size()); }
};

constexpr double kBogoliubovGate = 1e-8;

// Throws InconsistentPropagator when the Bogoliubov residual exceeds the gate; the residual is
// reported through residual_out when non-null.
SchmidtDecomposition schmidt_decompose(const Propagator& u, const FrequencyGrid& grid, double* residual_out = nullptr);

double mean_signal_photons(const SchmidtDecomposition& d);
double schmidt_number(const SchmidtDecomposition& d);

struct JsaMatrix {
  CMat values;  // rows: signal detuning, columns: idler detuning
  Vec axis_signal, axis_idler;
};

JsaMatrix jsa(const SchmidtDecomposition& d, const FrequencyGrid& grid);

// |sum a b* dw|^2 for unit-normalized a, b.
double mode_fidelity(const CVec& a, const CVec& b, double delta_omega);

struct CalibrationOptions {
  double rel_tol = 1e-3;
  int max_iterations = 100;
  double initial_guess = 1.0;  // N_P to start from
  double slope_hint = 0.0;     // estimate of d log<N_S> / d log N_P at the guess; 0: none
};

struct CalibrationResult {
  double n_pump = 0.0;
  double mean_photons = 0.0;
  int evaluations = 0;
};

// Finds N_P with |<N_S>(N_P) - target| / target < rel_tol. <N_S> must increase monotonically in N_P.
CalibrationResult calibrate_pump_power(double target_ns, const std::function<double(double)>& mean_photons_of_np,
                                       const CalibrationOptions& opts = {});

} // namespace twinbeam

#pragma once

#include "twinbeam/errors.hpp"
#include "twinbeam/grid_medium.hpp"
#include "twinbeam/propagator.hpp"
#include "twinbeam/schmidt.hpp"
#include "twinbeam/types.hpp"

#include <vector>

namespace twinbeam {

// Second moments in continuum normalization (hbar = 1):
//   n_signal(w, w') = <a_S^dag(w) a_S(w')>, n_idler likewise, m(w, w') = <a_S(w) a_I(w')>.
struct Correlators {
  CMat n_signal, n_idler, m;
  double delta_omega = 1.0;
};

Correlators correlators_from_propagator(const Propagator& u, const FrequencyGrid& grid);
Correlators correlators_from_schmidt(const SchmidtDecomposition& d);

// N -> T* N T and M -> T M T on both frequency axes (same filter on signal and idler).
Correlators filtered_correlators(const Correlators& c, const Vec& transmission);

struct PureFilterResult {
  CVec a_signal, a_idler;  // unit-normalized filtered modes on the full grid
  double eta_signal = 1.0, eta_idler = 1.0;
  double sinh2_eff = 0.0;  // eta * sinh^2(r_1)
  Correlators filtered;
};

constexpr double kPurePathThreshold = 1e-3;

// Single-mode shortcut; throws MixedStateError when K - 1 >= threshold.
PureFilterResult filter_pure_mode(const SchmidtDecomposition& d, const Vec& transmission,
                                  double threshold = kPurePathThreshold);

struct MixedStateError : InvalidParameter { using InvalidParameter::InvalidParameter; };

// Quadrature covariance over the modes that survive the filter. Ordering (x_S, x_I, p_S, p_I) over the
// support; every discarded grid point is in vacuum (variance 1/2), see full().
struct CovarianceMatrix {
  Mat V;
  std::vector<int> support;  // grid indices kept (same for signal and idler)
  int n_grid = 0;
  double delta_omega = 1.0;

  int n_modes() const { return static_cast<int>(V.rows() / 2); }
  Mat full() const;
};

// transmission may be empty (no filter).
CovarianceMatrix covariance_from_state(const Correlators& c, const Vec& transmission = Vec());
CovarianceMatrix covariance_from_state(const SchmidtDecomposition& d, const Vec& transmission = Vec());

// Omega = [[0, 1], [-1, 0]] in (x..., p...) ordering.
Mat symplectic_form(int n_modes);

struct WilliamsonResult {
  Mat S;
  Vec nu;    // descending, >= 1/2
  Vec nbar;  // nu = (2 nbar + 1) / 2

  Mat D() const;
};

WilliamsonResult williamson(const Mat& V);

struct BlochMessiahResult {
  Mat O, O_tilde;
  Vec r;  // n_modes values, descending

  Mat Lambda() const;  // diag(e^r, e^-r)
};

BlochMessiahResult bloch_messiah(const Mat& S);

// 50:50 pair beamsplitter W built from w = [[1, i], [i, 1]]/sqrt2 acting on modes (2k, 2k+1).
Mat pair_beamsplitter(int n_modes);

struct FilteredModeSet {
  // columns are unit-normalized mode functions on the full grid
  CMat squeeze_signal, squeeze_idler;  // A_l, B_l
  Vec r;                               // two-mode squeezing parameter per pair, descending
  CMat thermal_signal, thermal_idler;  // script-A_i, script-B_i
  Vec nbar_signal, nbar_idler;
  // orthosymplectic matrices actually used for the mode read-out (pair-adapted Bloch-Messiah frame)
  Mat O, O_tilde, W;
  Vec lambda;  // diag of Lambda in that frame
  double delta_omega = 1.0;
};

FilteredModeSet extract_mode_sets(const CovarianceMatrix& cov, const WilliamsonResult& w, const BlochMessiahResult& b);

// (sum sinh^2 r)^2 / sum sinh^4 r over the two-mode squeezers.
double filtered_schmidt_number(const FilteredModeSet& m);

struct PurityRoutes {
  double from_symplectic = 1.0;
  double from_determinant = 1.0;
};

PurityRoutes purity_routes(const Mat& V, const Vec& nu);
double purity(const Mat& V);

// F_ij = |<a_i, a_j>|^2 with dw weighting; diagonal set to exactly 1.
Mat fidelity_matrix(const std::vector<CVec>& modes, double delta_omega);

} // namespace twinbeam

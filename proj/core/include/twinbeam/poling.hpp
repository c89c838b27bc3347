#pragma once

#include "twinbeam/types.hpp"

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

namespace twinbeam {

struct PolingProfile {
  double domain_length = 0.0;
  std::vector<int> signs;  // each in {+1, -1, 0}; 0 marks a free-space segment

  static PolingProfile uniform(double length, int n_domains, int sign = +1);

  int n_domains() const { return static_cast<int>(signs.size()); }
  double length() const { return domain_length * n_domains(); }
  void validate() const;
  // Spatial mirror image (same signs, reversed order).
  PolingProfile reversed() const;
  PolingProfile negated() const;
  // Running integral of g(z) at z = 0, dz, ..., L (n_domains + 1 entries).
  std::vector<double> cumulative_amplitude() const;

  bool operator==(const PolingProfile&) const = default;
};

struct PmfTarget {
  double sigma_th = 1.0;  // may be +inf: uniform poling limit
  double length = 1.0;
};

enum class SeparabilityConvention {
  // sigma_th = 1 / (sigma |kappa|): Gaussian PMF times Gaussian pump factorizes exactly.
  Exact,
  // sigma_th = 2 / (sigma |kappa|): twice the exact width, an alternative convention.
  // Kept for comparison; the resulting low-gain JSA is not separable.
  Doubled,
};

// kappa = 1/v_S - 1/v_P.
double sigma_th_from_separability(double pump_sigma, double v_signal, double v_pump,
                                  SeparabilityConvention conv = SeparabilityConvention::Exact);

// g_Th(z) = exp(-(z - L/2)^2 / (2 sigma_th^2))
double target_poling(const PmfTarget& target, double z);

// Normalized running integral of g_Th, rising monotonically from 0 at z = 0 to 1 at z = L.
double target_amplitude(const PmfTarget& target, double z);

struct PolingDesign {
  PolingProfile profile;
  // Max |A(z_k)/A_Th(L) - target_amplitude(z_k)| over domain boundaries z_k = k dz, k = 1..n.
  double max_tracking_error = 0.0;
  double sum_sq_tracking_error = 0.0;
};

// Tracking errors of an arbitrary +-1 profile against the target, at z_k = k dz (k = 1..n).
std::vector<double> tracking_errors(const PmfTarget& target, const PolingProfile& profile);

PolingDesign design_domains(const PmfTarget& target, int n_domains);

// Phase-matching function sum_p g_p int_domain exp(-i z dk) dz, divided by the largest magnitude
// over dk_values (unit peak).
std::vector<cdouble> pmf_of_profile(const PolingProfile& profile, std::span<const double> dk_values);

nlohmann::json profile_to_json(const PolingProfile& profile);
PolingProfile profile_from_json(const nlohmann::json& j);
void save_profile(const PolingProfile& profile, const std::string& path);
PolingProfile load_profile(const std::string& path);

} // namespace twinbeam

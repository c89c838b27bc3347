#include "twinbeam/poling.hpp"
#include "twinbeam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace twinbeam {

PolingProfile PolingProfile::uniform(double length, int n_domains, int sign) {
  if (n_domains < 1) throw InvalidParameter("PolingProfile: n_domains must be positive");
  if (!(length > 0)) throw InvalidParameter("PolingProfile: length must be positive");
  PolingProfile p{length / n_domains, std::vector<int>(n_domains, sign)};
  p.validate();
  return p;
}

void PolingProfile::validate() const {
  if (!(domain_length > 0) || !std::isfinite(domain_length))
    throw InvalidParameter("PolingProfile: domain length must be positive and finite");
  for (int s : signs)
    if (s != 1 && s != -1 && s != 0) throw InvalidParameter("PolingProfile: signs must be +1, -1 or 0");
}

PolingProfile PolingProfile::reversed() const {
  PolingProfile p = *this;
  std::reverse(p.signs.begin(), p.signs.end());
  return p;
}

PolingProfile PolingProfile::negated() const {
  PolingProfile p = *this;
  for (int& s : p.signs) s = -s;
  return p;
}

std::vector<double> PolingProfile::cumulative_amplitude() const {
  std::vector<double> a(signs.size() + 1, 0.0);
  long acc = 0;
  // integer accumulation keeps the running sum exact
  for (size_t k = 0; k < signs.size(); ++k) {
    acc += signs[k];
    a[k + 1] = acc * domain_length;
  }
  return a;
}

double sigma_th_from_separability(double pump_sigma, double v_signal, double v_pump, SeparabilityConvention conv) {
  if (!(pump_sigma > 0)) throw InvalidParameter("sigma_th_from_separability: sigma must be positive");
  if (v_signal == 0.0 || v_pump == 0.0) throw InvalidParameter("sigma_th_from_separability: zero group velocity");
  double kappa = 1.0 / v_signal - 1.0 / v_pump;
  if (kappa == 0.0) throw InvalidParameter("sigma_th_from_separability: degenerate matching (1/v_S == 1/v_P)");
  double factor = conv == SeparabilityConvention::Exact ? 1.0 : 2.0;
  return factor / (pump_sigma * std::abs(kappa));
}

static void check_target(const PmfTarget& t) {
  if (!(t.sigma_th > 0)) throw InvalidParameter("PmfTarget: sigma_th must be positive");
  if (!(t.length > 0) || !std::isfinite(t.length)) throw InvalidParameter("PmfTarget: length must be positive");
}

static void check_z(const PmfTarget& t, double z) {
  double tol = 1e-12 * t.length;
  if (!(z >= -tol && z <= t.length + tol)) throw OutOfRange("target: z outside [0, L]");
}

double target_poling(const PmfTarget& target, double z) {
  check_target(target);
  check_z(target, z);
  if (std::isinf(target.sigma_th)) return 1.0;
  double d = (z - 0.5 * target.length) / target.sigma_th;
  return std::exp(-0.5 * d * d);
}

double target_amplitude(const PmfTarget& target, double z) {
  check_target(target);
  check_z(target, z);
  z = std::clamp(z, 0.0, target.length);
  if (std::isinf(target.sigma_th)) return z / target.length;
  double s = 2.0 * std::numbers::sqrt2 * target.sigma_th;
  double a = std::erf(target.length / s);
  // Erf((L-2z)/(2 sqrt2 s)) - Erf(L/(2 sqrt2 s)) scaled by its value at z = L (the largest magnitude).
  return (a - std::erf((target.length - 2.0 * z) / s)) / (2.0 * a);
}

// Normalization of the running integral: A_Th(L) = int_0^L g_Th.
static double target_total(const PmfTarget& t) {
  if (std::isinf(t.sigma_th)) return t.length;
  return t.sigma_th * std::sqrt(2.0 * std::numbers::pi) * std::erf(t.length / (2.0 * std::numbers::sqrt2 * t.sigma_th));
}

std::vector<double> tracking_errors(const PmfTarget& target, const PolingProfile& profile) {
  check_target(target);
  profile.validate();
  if (std::abs(profile.length() - target.length) > 1e-9 * target.length)
    throw InvalidParameter("tracking_errors: profile length differs from target length");
  double total = target_total(target);
  auto cum = profile.cumulative_amplitude();
  std::vector<double> e(profile.signs.size());
  for (size_t k = 1; k < cum.size(); ++k)
    e[k - 1] = std::abs(cum[k] / total - target_amplitude(target, std::min(k * profile.domain_length, target.length)));
  return e;
}

// Exact dynamic programme over the lattice of reachable running sums (j = number of +1 among the
// first k domains). Objective, in order: smallest maximum tracking error; then smallest sum of squared
// errors (accumulated from the last domain backwards); then the lexicographically first sequence with
// +1 preferred over -1.
PolingDesign design_domains(const PmfTarget& target, int n_domains) {
  check_target(target);
  if (n_domains < 2) throw InvalidParameter("design_domains: need at least 2 domains");
  const int n = n_domains;
  const double dz = target.length / n;
  const double total = target_total(target);

  std::vector<double> t(n + 1);
  for (int k = 0; k <= n; ++k) t[k] = target_amplitude(target, std::min(k * dz, target.length));
  auto err = [&](int k, int j) { return std::abs((2 * j - k) * dz / total - t[k]); };
  auto idx = [](int k, int j) { return static_cast<size_t>(k) * (k + 1) / 2 + j; };

  const double inf = std::numeric_limits<double>::infinity();
  const size_t states = idx(n + 1, 0);
  std::vector<double> best_max(states), best_sq(states);

  for (int j = 0; j <= n; ++j) best_max[idx(n, j)] = 0.0;
  for (int k = n - 1; k >= 0; --k)
    for (int j = 0; j <= k; ++j) {
      double vp = std::max(err(k + 1, j + 1), best_max[idx(k + 1, j + 1)]);
      double vm = std::max(err(k + 1, j), best_max[idx(k + 1, j)]);
      best_max[idx(k, j)] = std::min(vp, vm);
    }
  const double bound = best_max[idx(0, 0)];

  auto candidate = [&](int k, int jn) {
    double e = err(k + 1, jn);
    if (e > bound || best_max[idx(k + 1, jn)] > bound) return inf;
    return e * e + best_sq[idx(k + 1, jn)];
  };
  for (int j = 0; j <= n; ++j) best_sq[idx(n, j)] = 0.0;
  for (int k = n - 1; k >= 0; --k)
    for (int j = 0; j <= k; ++j) best_sq[idx(k, j)] = std::min(candidate(k, j + 1), candidate(k, j));

  PolingDesign d;
  d.profile.domain_length = dz;
  d.profile.signs.resize(n);
  int j = 0;
  for (int k = 0; k < n; ++k) {
    if (candidate(k, j + 1) == best_sq[idx(k, j)]) {
      d.profile.signs[k] = 1;
      ++j;
    } else {
      d.profile.signs[k] = -1;
    }
  }
  d.max_tracking_error = bound;
  d.sum_sq_tracking_error = best_sq[idx(0, 0)];
  return d;
}

std::vector<cdouble> pmf_of_profile(const PolingProfile& profile, std::span<const double> dk_values) {
  profile.validate();
  const double dz = profile.domain_length;
  std::vector<cdouble> phi(dk_values.size());
  double peak = 0.0;
  for (size_t i = 0; i < dk_values.size(); ++i) {
    double dk = dk_values[i];
    double x = 0.5 * dk * dz;
    double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
    // int_{z_p}^{z_p+dz} e^{-i z dk} dz = dz sinc(dk dz/2) e^{-i dk (z_p + dz/2)}
    cdouble seg = dz * sinc * std::polar(1.0, -x);
    cdouble acc = 0.0;
    for (int p = 0; p < profile.n_domains(); ++p)
      if (profile.signs[p] != 0) acc += static_cast<double>(profile.signs[p]) * std::polar(1.0, -dk * p * dz);
    phi[i] = acc * seg;
    peak = std::max(peak, std::abs(phi[i]));
  }
  if (peak > 0)
    for (auto& v : phi) v /= peak;
  return phi;
}

nlohmann::json profile_to_json(const PolingProfile& profile) {
  return {{"domain_length", profile.domain_length}, {"signs", profile.signs}};
}

PolingProfile profile_from_json(const nlohmann::json& j) {
  PolingProfile p;
  try {
    p.domain_length = j.at("domain_length").get<double>();
    p.signs = j.at("signs").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("poling profile: ") + e.what());
  }
  p.validate();
  return p;
}

void save_profile(const PolingProfile& profile, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << profile_to_json(profile).dump() << '\n';
}

PolingProfile load_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return profile_from_json(j);
}

} // namespace twinbeam

#include "twinbeam/schmidt.hpp"
#include "twinbeam/errors.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <string>

namespace twinbeam {

SchmidtDecomposition schmidt_decompose(const Propagator& u, const FrequencyGrid& grid, double* residual_out) {
  if (u.n() != grid.size()) throw DimensionMismatch("schmidt_decompose: propagator and grid sizes differ");
  double resid = u.bogoliubov_residual();
  if (residual_out) *residual_out = resid;
  if (!(resid < kBogoliubovGate))
    throw InconsistentPropagator("schmidt_decompose: Bogoliubov residual " + std::to_string(resid) + " exceeds gate");

  const double dw = grid.delta_omega();
  const CMat usi = u.U_si();
  Eigen::BDCSVD<CMat> svd(usi, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();

  // below this U_SI is roundoff from the stitching products
  constexpr double zero_floor = 1e-13;
  int keep = static_cast<int>(s.size());
  const bool vacuum = !(s[0] > zero_floor);
  if (!vacuum) {
    keep = 0;
    while (keep < s.size() && s[keep] >= 1e-10 * s[0]) ++keep;
  }

  SchmidtDecomposition d;
  d.delta_omega = dw;
  d.r.resize(keep);
  d.rho_s = svd.matrixU().leftCols(keep) / std::sqrt(dw);
  if (vacuum) {
    d.r.setZero();
    d.rho_i = svd.matrixV().leftCols(keep).conjugate() / std::sqrt(dw);
    return d;
  }
  for (int l = 0; l < keep; ++l) {
    d.r[l] = std::asinh(s[l]);
    Eigen::Index at;
    d.rho_s.col(l).cwiseAbs().maxCoeff(&at);
    d.rho_s.col(l) *= std::polar(1.0, -std::arg(d.rho_s(at, l)));
    d.rho_s(at, l) = std::abs(d.rho_s(at, l));
  }
  // Output idler modes: the right singular vectors of U_SI are the *input* idler modes, which differ
  // from the output ones away from low gain. Project <a_S a_I> = U_SS U_IS^T onto each signal mode
  // instead; this also pairs modes correctly inside degenerate groups.
  const CMat mdw = u.U_ss() * u.U_is().transpose();  // M dw
  CMat proj_i = mdw.transpose() * d.rho_s.conjugate() * std::sqrt(dw);
  d.rho_i.resize(usi.rows(), keep);
  for (int l = 0; l < keep; ++l) {
    double nrm = proj_i.col(l).norm();
    double want = 0.5 * std::sinh(2.0 * d.r[l]);
    if (std::abs(nrm - want) > 1e-6 * want + 1e-12)
      throw InconsistentPropagator("schmidt_decompose: <a_S a_I> does not match the signal Schmidt modes");
    proj_i.col(l) /= nrm;
  }
  // Weak modes carry roundoff of order eps |U| / sinh r; Gram-Schmidt in descending order restores
  // orthonormality while leaving the well-resolved leading modes untouched.
  for (int l = 0; l < keep; ++l) {
    for (int p = 0; p < l; ++p) proj_i.col(l) -= proj_i.col(p).dot(proj_i.col(l)) * proj_i.col(p);
    proj_i.col(l).normalize();
  }
  d.rho_i = proj_i / std::sqrt(dw);

  {
    // the signal modes must also be the singular vectors of U_SS, with values cosh r
    CMat proj = u.U_ss().adjoint() * (d.rho_s * std::sqrt(dw));
    for (int l = 0; l < keep; ++l) {
      double c2 = proj.col(l).squaredNorm(), want = std::cosh(d.r[l]) * std::cosh(d.r[l]);
      if (std::abs(c2 - want) > 1e-6 * want)
        throw InconsistentPropagator("schmidt_decompose: U_SS does not share the Schmidt modes");
    }
  }
  return d;
}

double mean_signal_photons(const SchmidtDecomposition& d) {
  return d.r.array().sinh().square().sum();
}

double schmidt_number(const SchmidtDecomposition& d) {
  Eigen::ArrayXd s2 = d.r.array().sinh().square();
  double den = s2.square().sum();
  if (!(den > 0)) throw UndefinedSchmidtNumber("schmidt_number: all squeezing parameters vanish");
  double num = s2.sum();
  return num * num / den;
}

JsaMatrix jsa(const SchmidtDecomposition& d, const FrequencyGrid& grid) {
  JsaMatrix j;
  j.values = d.rho_s * d.r.cast<cdouble>().asDiagonal() * d.rho_i.transpose();
  j.axis_signal = grid.points();
  j.axis_idler = grid.points();
  return j;
}

double mode_fidelity(const CVec& a, const CVec& b, double delta_omega) {
  if (a.size() != b.size()) throw DimensionMismatch("mode_fidelity: size mismatch");
  for (const CVec* v : {&a, &b})
    if (std::abs(v->squaredNorm() * delta_omega - 1.0) > 1e-6)
      throw InvalidParameter("mode_fidelity: modes must be unit-normalized on the grid");
  cdouble ov = b.dot(a) * delta_omega;  // sum a conj(b)
  return std::norm(ov);
}

CalibrationResult calibrate_pump_power(double target_ns, const std::function<double(double)>& mean_photons_of_np,
                                       const CalibrationOptions& opts) {
  if (!(target_ns >= 0)) throw InvalidParameter("calibrate_pump_power: target must be nonnegative");
  CalibrationResult res;
  if (target_ns == 0.0) return res;
  if (!(opts.initial_guess > 0)) throw InvalidParameter("calibrate_pump_power: initial guess must be positive");

  const double yt = std::log(target_ns);
  auto eval = [&](double x) {
    double ns = mean_photons_of_np(std::exp(x));
    ++res.evaluations;
    if (!std::isfinite(ns) || ns < 0) throw NumericalError("calibrate_pump_power: invalid photon number");
    return ns;
  };
  auto done = [&](double x, double ns) {
    if (std::abs(ns - target_ns) < opts.rel_tol * target_ns) {
      res.n_pump = std::exp(x);
      res.mean_photons = ns;
      return true;
    }
    return false;
  };

  // Work in log-log coordinates. The slope d log N_S / d log N_P is 1 at low gain and grows with gain,
  // so a unit-slope step from either side lands on the far side of the target and brackets it.
  double x0 = std::log(opts.initial_guess);
  double n0 = eval(x0);
  if (done(x0, n0)) return res;
  if (n0 == 0) throw CalibrationError("calibrate_pump_power: no photons generated at the initial guess");
  double y0 = std::log(n0);
  double x1 = x0, y1 = y0;
  bool hinted = opts.slope_hint >= 1.0;
  while (res.evaluations < opts.max_iterations) {
    // a hinted first step usually lands on the target; unit steps afterwards are guaranteed to bracket
    x1 = x1 + (yt - y1) / (hinted ? opts.slope_hint : 1.0);
    hinted = false;
    double n1 = eval(x1);
    if (done(x1, n1)) return res;
    if (n1 == 0) throw CalibrationError("calibrate_pump_power: no photons generated");
    y1 = std::log(n1);
    if ((y0 - yt) * (y1 - yt) < 0) break;
    x0 = x1, y0 = y1;
  }

  // False position on the bracket with the Anderson-Bjorck weight for the retained end.
  double fa = y0 - yt, fb = y1 - yt, a = x0, b = x1;
  while (res.evaluations < opts.max_iterations) {
    double c = b - fb * (b - a) / (fb - fa);
    double ns = eval(c);
    if (done(c, ns)) return res;
    if (ns == 0) throw CalibrationError("calibrate_pump_power: no photons generated");
    double fc = std::log(ns) - yt;
    if (fc * fb < 0) {
      a = b, fa = fb;
    } else {
      double m = 1.0 - fc / fb;
      fa *= m > 0 ? m : 0.5;
    }
    b = c, fb = fc;
  }
  throw CalibrationError("calibrate_pump_power: no convergence within " + std::to_string(opts.max_iterations) +
                         " evaluations");
}

} // namespace twinbeam

#include "twinbeam/errors.hpp"
#include "twinbeam/schmidt.hpp"

#include <gtest/gtest.h>

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

using namespace twinbeam;

namespace {

const double kOmegaP = 291.56;

struct Source {
  FrequencyGrid grid;
  MediumSpec medium;
  PolingProfile profile;

  Source(int n = 41, double kappa = 3.0, int domains = 40)
      : grid(FrequencyGrid::symmetric(6, n)),
        medium(MediumSpec::symmetric_gvm(kappa, kOmegaP, 1.0, domains, 0.1)),
        profile(PolingProfile::uniform(1.0, domains)) {}

  PumpSpectrum pump(double np) const { return {1.0, np, kOmegaP}; }
  Propagator prop(double np) const { return stitch(profile, grid, medium, pump(np)); }
};

} // namespace

TEST(Schmidt, ZeroPumpHasNoSqueezing) {
  Source s(21);
  auto d = schmidt_decompose(s.prop(0.0), s.grid);
  EXPECT_EQ(d.r.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(mean_signal_photons(d), 0.0);
  EXPECT_THROW(schmidt_number(d), UndefinedSchmidtNumber);
}

TEST(Schmidt, PhotonNumberAndSchmidtNumberFormulas) {
  SchmidtDecomposition d;
  d.r = Vec::Constant(1, std::asinh(1.0));
  EXPECT_NEAR(mean_signal_photons(d), 1.0, 1e-15);
  EXPECT_NEAR(schmidt_number(d), 1.0, 1e-15);
  d.r = Vec::Constant(2, 0.7);
  EXPECT_NEAR(schmidt_number(d), 2.0, 1e-14);
  d.r = Vec::Constant(5, 0.3);
  EXPECT_NEAR(schmidt_number(d), 5.0, 1e-13);
  d.r.resize(3);
  d.r << 1.0, 0.5, 0.1;
  double s1 = std::pow(std::sinh(1.0), 2), s2 = std::pow(std::sinh(0.5), 2), s3 = std::pow(std::sinh(0.1), 2);
  EXPECT_NEAR(schmidt_number(d), std::pow(s1 + s2 + s3, 2) / (s1 * s1 + s2 * s2 + s3 * s3), 1e-13);
  EXPECT_GE(schmidt_number(d), 1.0);
}

TEST(Schmidt, PhotonNumberMatchesTrace) {
  Source s;
  for (double np : {1e-4, 0.01, 0.05}) {
    auto u = s.prop(np);
    auto d = schmidt_decompose(u, s.grid);
    EXPECT_NEAR(mean_signal_photons(d), u.mean_signal_photons(), 1e-10 * u.mean_signal_photons()) << np;
    EXPECT_GE(schmidt_number(d), 1.0);
  }
}

TEST(Schmidt, ModesAreOrthonormalAndDescending) {
  Source s;
  auto d = schmidt_decompose(s.prop(0.03), s.grid);
  const double dw = s.grid.delta_omega();
  const int k = d.n_modes();
  ASSERT_GT(k, 3);
  EXPECT_LT(((d.rho_s.adjoint() * d.rho_s) * dw - CMat::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(((d.rho_i.adjoint() * d.rho_i) * dw - CMat::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
  for (int l = 1; l < k; ++l) EXPECT_LE(d.r[l], d.r[l - 1]);
  EXPECT_GE(d.r[k - 1], 0.0);
}

TEST(Schmidt, ReconstructsSecondMoments) {
  Source s;
  for (double np : {1e-4, 0.02}) {
    auto u = s.prop(np);
    auto d = schmidt_decompose(u, s.grid);
    const double dw = s.grid.delta_omega();
    const CMat usi = u.U_si(), uis = u.U_is();
    // direct moments from the propagator blocks
    CMat ns = usi.conjugate() * usi.transpose() / dw, m = u.U_ss() * uis.transpose() / dw;
    const CVec s2 = d.r.array().sinh().square().matrix().cast<cdouble>();
    const CVec sc = (0.5 * (2.0 * d.r.array()).sinh()).matrix().cast<cdouble>();
    CMat ns_r = d.rho_s.conjugate() * s2.asDiagonal() * d.rho_s.transpose();
    CMat m_r = d.rho_s * sc.asDiagonal() * d.rho_i.transpose();
    EXPECT_LT((ns_r - ns).norm(), 1e-8 * ns.norm()) << np;
    EXPECT_LT((m_r - m).norm(), 1e-8 * m.norm()) << np;
    // singular values of U_SI are sinh r
    Eigen::JacobiSVD<CMat> svd(usi);
    for (int l = 0; l < std::min(5, d.n_modes()); ++l)
      EXPECT_NEAR(std::sinh(d.r[l]), svd.singularValues()[l], 1e-10 * svd.singularValues()[0]);
  }
}

TEST(Jsa, LowGainIsRankOneForSeparableDesign) {
  // Gaussian phase matching of the right width factorizes with the Gaussian pump.
  const double kappa = 4.0;
  auto grid = FrequencyGrid::symmetric(6, 61);
  auto medium = MediumSpec::symmetric_gvm(kappa, kOmegaP, 1.0, 600, 0.1);
  double sth = sigma_th_from_separability(1.0, medium.v_signal, medium.v_pump);
  auto design = design_domains({sth, 1.0}, 600);
  auto u = stitch(design.profile, grid, medium, {1.0, 1e-6, kOmegaP});
  auto d = schmidt_decompose(u, grid);
  EXPECT_LT(schmidt_number(d) - 1.0, 0.02);
}

TEST(Jsa, ExchangeAndInversionSymmetry) {
  Source s;
  auto d = schmidt_decompose(s.prop(0.03), s.grid);
  auto j = jsa(d, s.grid);
  const int n = s.grid.size();
  double peak = j.values.cwiseAbs().maxCoeff();
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      EXPECT_NEAR(std::abs(j.values(a, b)), std::abs(j.values(b, a)), 1e-8 * peak);
      EXPECT_NEAR(std::abs(j.values(a, b)), std::abs(j.values(n - 1 - a, n - 1 - b)), 1e-8 * peak);
    }
  // the leading (non-degenerate) mode pair mirrors onto itself
  for (int a = 0; a < n; ++a) EXPECT_NEAR(std::abs(d.rho_s(a, 0)), std::abs(d.rho_i(n - 1 - a, 0)), 1e-6);
}

// First-order perturbation theory: |JSA| = |F_nm| / dw * L |sinc(kappa (w_n - w_m) L / 2)| for uniform poling.
TEST(Jsa, LowGainMatchesSincTimesPump) {
  Source s(41, 3.0, 40);
  const double np = 1e-6;
  auto d = schmidt_decompose(s.prop(np), s.grid);
  auto j = jsa(d, s.grid);
  auto blocks = assemble_generator(s.grid, s.medium, s.pump(np), 1);
  const double dw = s.grid.delta_omega(), kappa = 3.0;
  Mat oracle(41, 41);
  for (int a = 0; a < 41; ++a)
    for (int b = 0; b < 41; ++b) {
      double x = 0.5 * kappa * (s.grid.omega(a) - s.grid.omega(b));
      double sinc = x == 0 ? 1.0 : std::sin(x) / x;
      oracle(a, b) = std::abs(blocks.F(a, b)) / dw * std::abs(sinc);
    }
  double peak = oracle.maxCoeff();
  EXPECT_LT((j.values.cwiseAbs() - oracle).cwiseAbs().maxCoeff(), 1e-2 * peak);
}

TEST(Fidelity, BasicProperties) {
  const int n = 30;
  const double dw = 0.2;
  CVec a = CVec::Random(n), b = CVec::Random(n);
  a /= a.norm() * std::sqrt(dw);
  b /= b.norm() * std::sqrt(dw);
  EXPECT_NEAR(mode_fidelity(a, a, dw), 1.0, 1e-14);
  EXPECT_NEAR(mode_fidelity(a, std::polar(1.0, 0.7) * a, dw), 1.0, 1e-14);
  double f = mode_fidelity(a, b, dw);
  EXPECT_NEAR(f, mode_fidelity(b, a, dw), 1e-15);
  EXPECT_GE(f, 0.0);
  EXPECT_LE(f, 1.0);
  CVec e1 = CVec::Zero(n), e2 = CVec::Zero(n);
  e1[0] = e2[1] = 1.0 / std::sqrt(dw);
  EXPECT_EQ(mode_fidelity(e1, e2, dw), 0.0);
  EXPECT_THROW(mode_fidelity(a * 2.0, b, dw), InvalidParameter);
  EXPECT_THROW(mode_fidelity(a, CVec(a.head(5)), dw), DimensionMismatch);
}

TEST(Calibration, ZeroTarget) {
  int calls = 0;
  auto r = calibrate_pump_power(0.0, [&](double) { return ++calls, 1.0; });
  EXPECT_EQ(r.n_pump, 0.0);
  EXPECT_EQ(calls, 0);
  EXPECT_THROW(calibrate_pump_power(-1.0, [](double x) { return x; }), InvalidParameter);
}

TEST(Calibration, AnalyticModel) {
  // three-mode toy spectrum: <N_S> = sum sinh^2(sqrt(q_l N_P))
  auto f = [](double np) {
    double q[] = {1.0, 0.3, 0.05};
    double s = 0;
    for (double ql : q) s += std::pow(std::sinh(std::sqrt(ql * np)), 2);
    return s;
  };
  double prev = 0;
  for (double target : {3e-4, 0.01, 0.5, 2.0, 10.6, 40.0}) {
    auto r = calibrate_pump_power(target, f);
    EXPECT_LT(std::abs(f(r.n_pump) - target), 1e-3 * target) << target;
    EXPECT_DOUBLE_EQ(r.mean_photons, f(r.n_pump));
    EXPECT_GT(r.n_pump, prev);
    EXPECT_LE(r.evaluations, 15);
    prev = r.n_pump;
  }
}

TEST(Calibration, ExactHintConvergesInTwoEvaluations) {
  auto f = [](double np) { return 2.0 * np; };
  auto r = calibrate_pump_power(1.0, f, {.initial_guess = 1e-3, .slope_hint = 1.0});
  EXPECT_EQ(r.evaluations, 2);
  EXPECT_NEAR(r.n_pump, 0.5, 1e-12);
}

TEST(Calibration, NoConvergenceThrows) {
  auto f = [](double np) { return std::pow(std::sinh(std::sqrt(np)), 2); };
  EXPECT_THROW(calibrate_pump_power(100.0, f, {.max_iterations = 2}), CalibrationError);
  EXPECT_THROW(calibrate_pump_power(1.0, [](double) { return 0.0; }), CalibrationError);
  EXPECT_THROW(calibrate_pump_power(1.0, [](double) { return std::nan(""); }), NumericalError);
}

TEST(Calibration, PhysicalPropagator) {
  Source s(31);
  auto r = calibrate_pump_power(1.0, [&](double np) { return s.prop(np).mean_signal_photons(); });
  EXPECT_NEAR(s.prop(r.n_pump).mean_signal_photons(), 1.0, 1e-3);
}

TEST(Gate, CorruptedPropagatorIsRejected) {
  Source s(21);
  auto u = s.prop(0.1);
  CMat raw = u.raw();
  raw(3, 30) += 1e-6;
  Propagator bad(raw, u.free_phase_signal(), u.free_phase_idler());
  double resid = 0;
  EXPECT_THROW(schmidt_decompose(bad, s.grid, &resid), InconsistentPropagator);
  EXPECT_GT(resid, kBogoliubovGate);
  EXPECT_NO_THROW(schmidt_decompose(u, s.grid, &resid));
  EXPECT_LT(resid, 1e-10);
  EXPECT_THROW(schmidt_decompose(u, FrequencyGrid::symmetric(6, 11)), DimensionMismatch);
}

#include "twinbeam/errors.hpp"
#include "twinbeam/gaussian.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <random>

using namespace twinbeam;

namespace {

const double kOmegaP = 291.56;

// Orthosymplectic matrix of a random unitary: [[Re U, -Im U], [Im U, Re U]].
Mat random_passive(int n, std::mt19937& rng) {
  std::normal_distribution<double> g;
  CMat z(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) z(i, j) = cdouble(g(rng), g(rng));
  CMat u = Eigen::HouseholderQR<CMat>(z).householderQ();
  Mat o(2 * n, 2 * n);
  o << u.real(), -u.imag(), u.imag(), u.real();
  return o;
}

Mat squeezer(const Vec& r) {
  const int n = static_cast<int>(r.size());
  Vec d(2 * n);
  d << r.array().exp().matrix(), (-r.array()).exp().matrix();
  return d.asDiagonal();
}

double symplectic_error(const Mat& s) {
  const Mat om = symplectic_form(static_cast<int>(s.rows() / 2));
  return (s * om * s.transpose() - om).cwiseAbs().maxCoeff();
}

struct RandomState {
  Mat S, V;
  Vec nu, r;
};

RandomState random_state(int n, std::mt19937& rng) {
  std::uniform_real_distribution<double> ur(0.0, 1.0), un(0.5, 3.0);
  RandomState s;
  s.r.resize(n);
  s.nu.resize(n);
  for (int k = 0; k < n; ++k) s.r[k] = ur(rng), s.nu[k] = un(rng);
  s.S = random_passive(n, rng) * squeezer(s.r) * random_passive(n, rng);
  Vec d(2 * n);
  d << s.nu, s.nu;
  s.V = s.S * d.asDiagonal() * s.S.transpose();
  s.V = 0.5 * (s.V + s.V.transpose()).eval();
  return s;
}

struct Source {
  FrequencyGrid grid = FrequencyGrid::symmetric(6, 41);
  MediumSpec medium;
  PolingProfile profile;

  explicit Source(double kappa = 3.0, std::optional<double> sth = std::nullopt, int domains = 120)
      : medium(MediumSpec::symmetric_gvm(kappa, kOmegaP, 1.0, domains, 0.1)) {
    profile = sth ? design_domains({*sth, 1.0}, domains).profile : PolingProfile::uniform(1.0, domains);
  }
  Propagator prop(double np) const { return stitch(profile, grid, medium, {1.0, np, kOmegaP}); }
  SchmidtDecomposition decompose(double np) const { return schmidt_decompose(prop(np), grid); }
};

double max_abs(const CMat& m) { return m.cwiseAbs().maxCoeff(); }

// Exactly single-mode twin beam with Gaussian (chirped) mode functions.
SchmidtDecomposition single_mode_state(const FrequencyGrid& grid, double r) {
  SchmidtDecomposition d;
  d.delta_omega = grid.delta_omega();
  d.r = Vec::Constant(1, r);
  d.rho_s.resize(grid.size(), 1);
  d.rho_i.resize(grid.size(), 1);
  for (int k = 0; k < grid.size(); ++k) {
    double w = grid.omega(k);
    d.rho_s(k, 0) = std::exp(-0.5 * (w - 0.3) * (w - 0.3)) * std::polar(1.0, 0.2 * w * w);
    d.rho_i(k, 0) = std::exp(-0.5 * (w + 0.3) * (w + 0.3) / 1.5) * std::polar(1.0, -0.1 * w);
  }
  d.rho_s /= d.rho_s.norm() * std::sqrt(d.delta_omega);
  d.rho_i /= d.rho_i.norm() * std::sqrt(d.delta_omega);
  return d;
}

} // namespace

TEST(Correlators, PropagatorAndSchmidtRoutesAgree) {
  Source s;
  auto u = s.prop(0.03);
  auto a = correlators_from_propagator(u, s.grid);
  auto b = correlators_from_schmidt(schmidt_decompose(u, s.grid));
  double scale = max_abs(a.m);
  EXPECT_LT(max_abs(a.n_signal - b.n_signal), 1e-8 * scale);
  EXPECT_LT(max_abs(a.n_idler - b.n_idler), 1e-8 * scale);
  EXPECT_LT(max_abs(a.m - b.m), 1e-8 * scale);
  // <N_S> as the trace of the signal correlator
  EXPECT_NEAR(a.n_signal.trace().real() * s.grid.delta_omega(), u.mean_signal_photons(), 1e-10);
}

TEST(Correlators, FilterLimits) {
  Source s;
  auto c = correlators_from_schmidt(s.decompose(0.02));
  const int n = s.grid.size();
  auto same = filtered_correlators(c, Vec::Ones(n));
  EXPECT_EQ(same.n_signal, c.n_signal);
  EXPECT_EQ(same.m, c.m);
  auto none = filtered_correlators(c, Vec::Zero(n));
  EXPECT_EQ(max_abs(none.n_signal), 0.0);
  EXPECT_EQ(max_abs(none.m), 0.0);
  auto part = filtered_correlators(c, filter_on_grid(FilterFunction::top_hat(0.0, 1.0), s.grid));
  EXPECT_LT(part.n_signal.trace().real(), c.n_signal.trace().real());
  EXPECT_LT(part.n_idler.trace().real(), c.n_idler.trace().real());
  EXPECT_THROW(filtered_correlators(c, Vec::Ones(3)), DimensionMismatch);
}

TEST(PureFilter, IdentityFilterKeepsTheMode) {
  Source s;
  auto d = single_mode_state(s.grid, 0.9);
  auto p = filter_pure_mode(d, Vec::Ones(s.grid.size()));
  EXPECT_NEAR(p.eta_signal, 1.0, 1e-12);
  EXPECT_NEAR(p.eta_idler, 1.0, 1e-12);
  EXPECT_NEAR(mode_fidelity(p.a_signal, d.rho_s.col(0), d.delta_omega), 1.0, 1e-12);
  EXPECT_NEAR(p.sinh2_eff, std::pow(std::sinh(d.r[0]), 2), 1e-12);
}

TEST(PureFilter, TransmissionIsInBandFraction) {
  Source s;
  auto d = single_mode_state(s.grid, 0.9);
  Vec t = filter_on_grid(FilterFunction::top_hat(0.0, 1.0), s.grid);
  auto p = filter_pure_mode(d, t);
  double inband = 0;
  for (int k = 0; k < s.grid.size(); ++k) inband += t[k] * std::norm(d.rho_s(k, 0));
  EXPECT_NEAR(p.eta_signal, inband * d.delta_omega, 1e-12);
  EXPECT_GT(p.eta_signal, 0.3);
  EXPECT_LT(p.eta_signal, 1.0);
  EXPECT_NEAR(p.sinh2_eff, p.eta_signal * std::pow(std::sinh(d.r[0]), 2), 1e-12);
}

TEST(PureFilter, RejectsMultimodeStates) {
  EXPECT_THROW(filter_pure_mode(SchmidtDecomposition{}, Vec()), InvalidParameter);
  Source s(3.0);
  auto d = s.decompose(0.005);
  ASSERT_GT(schmidt_number(d) - 1.0, kPurePathThreshold);
  EXPECT_THROW(filter_pure_mode(d, Vec::Ones(s.grid.size())), MixedStateError);
}

// The single-mode shortcut and the full covariance route describe the same filtered state.
TEST(PureFilter, AgreesWithCovariancePath) {
  Source s;
  auto d = single_mode_state(s.grid, 0.9);
  Vec t = filter_on_grid(FilterFunction::top_hat(0.0, 1.5), s.grid);
  auto p = filter_pure_mode(d, t);

  auto cov = covariance_from_state(d, t);
  auto w = williamson(cov.V);
  auto b = bloch_messiah(w.S);
  auto modes = extract_mode_sets(cov, w, b);
  EXPECT_GT(mode_fidelity(p.a_signal, modes.squeeze_signal.col(0), d.delta_omega), 1 - 1e-6);
  EXPECT_GT(mode_fidelity(p.a_idler, modes.squeeze_idler.col(0), d.delta_omega), 1 - 1e-6);

  auto cp = covariance_from_state(p.filtered, Vec());
  EXPECT_NEAR(purity(cp.V), purity(cov.V), 1e-6);
}

TEST(Covariance, VacuumAndTwoModeSqueezedVacuum) {
  Source s;
  auto vac = covariance_from_state(s.decompose(0.0));
  EXPECT_LT((vac.V - 0.5 * Mat::Identity(vac.V.rows(), vac.V.rows())).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(purity(vac.V), 1.0, 1e-12);

  auto d = s.decompose(0.03);
  auto cov = covariance_from_state(d);
  auto w = williamson(cov.V);
  EXPECT_LT((w.nu.array() - 0.5).abs().maxCoeff(), 1e-8);
  EXPECT_NEAR(purity(cov.V), 1.0, 1e-8);

  // filtering a multimode state leaves a mixed one
  auto f = covariance_from_state(d, filter_on_grid(FilterFunction::top_hat(0.0, 1.5), s.grid));
  EXPECT_LT(purity(f.V), 1.0 - 1e-4);
  EXPECT_GE(williamson(f.V).nu.minCoeff(), 0.5 - 1e-10);
}

TEST(Covariance, FullEmbedsVacuumOutsideSupport) {
  Source s;
  auto d = s.decompose(0.03);
  Vec t = filter_on_grid(FilterFunction::top_hat(0.0, 1.0), s.grid);
  auto cov = covariance_from_state(d, t);
  const int n = s.grid.size();
  EXPECT_EQ(cov.n_grid, n);
  EXPECT_LT(static_cast<int>(cov.support.size()), n);
  Mat f = cov.full();
  ASSERT_EQ(f.rows(), 4 * n);
  int outside = 0;
  while (t[outside] != 0.0) ++outside;
  EXPECT_EQ(f(outside, outside), 0.5);
  EXPECT_EQ(f.row(outside).cwiseAbs().sum(), 0.5);
  EXPECT_NEAR(purity(f), purity(cov.V), 1e-10);
}

TEST(Williamson, IdentityAndThermal) {
  auto w = williamson(0.5 * Mat::Identity(6, 6));
  EXPECT_LT((w.nu.array() - 0.5).abs().maxCoeff(), 1e-14);
  EXPECT_LT(symplectic_error(w.S), 1e-12);
  Vec d(6);
  d << 3.5, 1.5, 0.5, 3.5, 1.5, 0.5;
  auto t = williamson(Mat(d.asDiagonal()));
  EXPECT_NEAR(t.nu[0], 3.5, 1e-12);
  EXPECT_NEAR(t.nbar[0], 3.0, 1e-12);
  EXPECT_NEAR(t.nbar[1], 1.0, 1e-12);
  EXPECT_NEAR(t.nbar[2], 0.0, 1e-12);
  EXPECT_NEAR(purity(Mat(d.asDiagonal())), 1.0 / (7.0 * 3.0), 1e-12);
}

TEST(Williamson, RandomInstances) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + trial % 5;
    auto st = random_state(n, rng);
    auto w = williamson(st.V);
    EXPECT_LT((w.S * w.D() * w.S.transpose() - st.V).cwiseAbs().maxCoeff(), 1e-6 * st.V.cwiseAbs().maxCoeff());
    EXPECT_LT(symplectic_error(w.S), 1e-8);
    Vec want = st.nu;
    std::sort(want.data(), want.data() + n, std::greater<>());
    EXPECT_LT((w.nu - want).cwiseAbs().maxCoeff(), 1e-8);
    auto p = purity_routes(st.V, w.nu);
    EXPECT_NEAR(p.from_symplectic, p.from_determinant, 1e-8 * p.from_symplectic);
  }
}

TEST(Williamson, RejectsUnphysical) {
  EXPECT_THROW(williamson(0.3 * Mat::Identity(4, 4)), NonPhysicalState);
  EXPECT_THROW(williamson(Mat::Identity(3, 3)), DimensionMismatch);
  Mat a = Mat::Identity(4, 4);
  a(0, 1) = 0.2;
  EXPECT_THROW(williamson(a), NonPhysicalState);
}

TEST(BlochMessiah, SingleModeSqueezer) {
  Vec r(1);
  r << 0.8;
  auto b = bloch_messiah(squeezer(r));
  EXPECT_NEAR(b.r[0], 0.8, 1e-12);
  EXPECT_LT((b.O * b.Lambda() * b.O_tilde.transpose() - squeezer(r)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BlochMessiah, PassiveMatrixHasNoSqueezing) {
  std::mt19937 rng(3);
  Mat o = random_passive(4, rng);
  auto b = bloch_messiah(o);
  EXPECT_LT(b.r.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((b.O * b.Lambda() * b.O_tilde.transpose() - o).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(symplectic_error(b.O), 1e-8);
}

TEST(BlochMessiah, RandomInstances) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + trial % 5;
    auto st = random_state(n, rng);
    auto b = bloch_messiah(st.S);
    const Mat id = Mat::Identity(2 * n, 2 * n);
    EXPECT_LT((b.O * b.Lambda() * b.O_tilde.transpose() - st.S).cwiseAbs().maxCoeff(), 1e-8 * st.S.norm());
    EXPECT_LT((b.O.transpose() * b.O - id).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((b.O_tilde.transpose() * b.O_tilde - id).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(symplectic_error(b.O), 1e-8);
    EXPECT_LT(symplectic_error(b.O_tilde), 1e-8);
    Vec want = st.r;
    std::sort(want.data(), want.data() + n, std::greater<>());
    EXPECT_LT((b.r - want).cwiseAbs().maxCoeff(), 1e-8);
  }
  Mat bad = Mat::Identity(4, 4);
  bad(0, 0) = 2.0;
  EXPECT_THROW(bloch_messiah(bad), InvalidParameter);
}

TEST(ModeSets, FullChainReconstructsCovariance) {
  Source s;
  auto d = s.decompose(0.03);
  auto cov = covariance_from_state(d, filter_on_grid(FilterFunction::top_hat(0.0, 1.5), s.grid));
  auto w = williamson(cov.V);
  auto b = bloch_messiah(w.S);
  auto m = extract_mode_sets(cov, w, b);
  const int n = cov.n_modes();
  // V = O Lambda O~^T D O~ Lambda O^T in the pair-adapted frame
  Mat rebuilt = m.O * m.lambda.asDiagonal() * m.O_tilde.transpose() * w.D() * m.O_tilde * m.lambda.asDiagonal() *
                m.O.transpose();
  EXPECT_LT((rebuilt - cov.V).cwiseAbs().maxCoeff(), 1e-6);
  // near-degenerate squeezing values are grouped (relative 1e-9), which costs a little orthogonality
  EXPECT_LT((m.O.transpose() * m.O - Mat::Identity(2 * n, 2 * n)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(symplectic_error(m.O), 1e-6);
  EXPECT_LT((m.W.transpose() * m.W - Mat::Identity(2 * n, 2 * n)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(symplectic_error(m.W), 1e-14);
  // squeezing modes live on one arm each and are unit-normalized
  for (int p = 0; p < m.r.size(); ++p) {
    EXPECT_NEAR(m.squeeze_signal.col(p).squaredNorm() * m.delta_omega, 1.0, 1e-10);
    EXPECT_NEAR(m.squeeze_idler.col(p).squaredNorm() * m.delta_omega, 1.0, 1e-10);
  }
  for (int p = 1; p < m.r.size(); ++p) EXPECT_LE(m.r[p], m.r[p - 1] + 1e-12);
  EXPECT_EQ(m.thermal_signal.cols(), m.thermal_idler.cols());
  EXPECT_GE(m.nbar_signal.minCoeff(), 0.0);
  EXPECT_GE(filtered_schmidt_number(m), 1.0);
}

TEST(ModeSets, UnfilteredStateRecoversSchmidtModes) {
  Source s;
  auto d = s.decompose(0.03);
  auto cov = covariance_from_state(d);
  auto w = williamson(cov.V);
  auto m = extract_mode_sets(cov, w, bloch_messiah(w.S));
  EXPECT_NEAR(purity(cov.V), 1.0, 1e-8);
  EXPECT_NEAR(m.r[0], d.r[0], 1e-8);
  // the leading pair is non-degenerate, so its modes are determined up to phase
  EXPECT_GT(mode_fidelity(m.squeeze_signal.col(0), d.rho_s.col(0), d.delta_omega), 1 - 1e-8);
  EXPECT_GT(mode_fidelity(m.squeeze_idler.col(0), d.rho_i.col(0), d.delta_omega), 1 - 1e-8);
  EXPECT_NEAR(filtered_schmidt_number(m), schmidt_number(d), 1e-6);
}

TEST(FidelityMatrix, IdentityAndAllOnes) {
  const double dw = 0.5;
  std::vector<CVec> basis;
  for (int k = 0; k < 4; ++k) {
    CVec e = CVec::Zero(4);
    e[k] = 1.0 / std::sqrt(dw);
    basis.push_back(e);
  }
  EXPECT_EQ(fidelity_matrix(basis, dw), Mat::Identity(4, 4));
  std::vector<CVec> same(3, basis[2]);
  same[1] *= cdouble(0, 1);
  EXPECT_LT((fidelity_matrix(same, dw) - Mat::Ones(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Purity, ThermalState) {
  for (double nbar : {0.0, 0.1, 1.0, 7.5}) {
    Mat v = (nbar + 0.5) * Mat::Identity(2, 2);
    EXPECT_NEAR(purity(v), 1.0 / (2 * nbar + 1), 1e-12);
    auto p = purity_routes(v, williamson(v).nu);
    EXPECT_NEAR(p.from_symplectic, p.from_determinant, 1e-14);
  }
}

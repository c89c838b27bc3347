#include "twinbeam/gaussian.hpp"
#include "twinbeam/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace twinbeam {

Correlators correlators_from_propagator(const Propagator& u, const FrequencyGrid& grid) {
  if (u.n() != grid.size()) throw DimensionMismatch("correlators_from_propagator: size mismatch");
  const double dw = grid.delta_omega();
  const CMat usi = u.U_si(), uis = u.U_is();
  Correlators c;
  c.delta_omega = dw;
  c.n_signal = usi.conjugate() * usi.transpose() / dw;
  c.n_idler = uis.conjugate() * uis.transpose() / dw;
  c.m = u.U_ss() * uis.transpose() / dw;
  return c;
}

Correlators correlators_from_schmidt(const SchmidtDecomposition& d) {
  Correlators c;
  c.delta_omega = d.delta_omega;
  const CVec s2 = d.r.array().sinh().square().matrix().cast<cdouble>();
  const CVec sc = (0.5 * (2.0 * d.r.array()).sinh()).matrix().cast<cdouble>();
  c.n_signal = d.rho_s.conjugate() * s2.asDiagonal() * d.rho_s.transpose();
  c.n_idler = d.rho_i.conjugate() * s2.asDiagonal() * d.rho_i.transpose();
  c.m = d.rho_s * sc.asDiagonal() * d.rho_i.transpose();
  return c;
}

Correlators filtered_correlators(const Correlators& c, const Vec& t) {
  if (t.size() != c.n_signal.rows()) throw DimensionMismatch("filtered_correlators: filter length differs from grid");
  Correlators f = c;
  const auto tt = t.cast<cdouble>().asDiagonal();
  f.n_signal = tt * c.n_signal * tt;
  f.n_idler = tt * c.n_idler * tt;
  f.m = tt * c.m * tt;
  return f;
}

PureFilterResult filter_pure_mode(const SchmidtDecomposition& d, const Vec& t, double threshold) {
  if (d.n_modes() == 0) throw InvalidParameter("filter_pure_mode: empty decomposition");
  if (t.size() != d.rho_s.rows()) throw DimensionMismatch("filter_pure_mode: filter length differs from grid");
  if (d.r[0] > 0 && schmidt_number(d) - 1.0 >= threshold)
    throw MixedStateError("filter_pure_mode: state is not single-mode; use the covariance path");
  const double dw = d.delta_omega;
  PureFilterResult p;
  CVec as = t.cast<cdouble>().cwiseProduct(d.rho_s.col(0));
  CVec ai = t.cast<cdouble>().cwiseProduct(d.rho_i.col(0));
  p.eta_signal = as.squaredNorm() * dw;
  p.eta_idler = ai.squaredNorm() * dw;
  if (!(p.eta_signal > 0 && p.eta_idler > 0)) throw InvalidParameter("filter_pure_mode: filter removes the mode");
  p.a_signal = as / std::sqrt(p.eta_signal);
  p.a_idler = ai / std::sqrt(p.eta_idler);
  const double sh = std::sinh(d.r[0]), ch = std::cosh(d.r[0]);
  p.sinh2_eff = p.eta_signal * sh * sh;
  p.filtered.delta_omega = dw;
  p.filtered.n_signal = p.eta_signal * sh * sh * p.a_signal.conjugate() * p.a_signal.transpose();
  p.filtered.n_idler = p.eta_idler * sh * sh * p.a_idler.conjugate() * p.a_idler.transpose();
  p.filtered.m = std::sqrt(p.eta_signal * p.eta_idler) * sh * ch * p.a_signal * p.a_idler.transpose();
  return p;
}

Mat CovarianceMatrix::full() const {
  const int m = static_cast<int>(support.size()), n = n_grid;
  Mat f = 0.5 * Mat::Identity(4 * n, 4 * n);
  auto g = [&](int local) {
    int block = local / m, k = local % m;
    return block * n + support[k];
  };
  for (int j = 0; j < 4 * m; ++j)
    for (int i = 0; i < 4 * m; ++i) f(g(i), g(j)) = V(i, j);
  return f;
}

Mat symplectic_form(int n) {
  Mat o = Mat::Zero(2 * n, 2 * n);
  o.topRightCorner(n, n).setIdentity();
  o.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return o;
}

static void check_physical(const Mat& V) {
  const int n = static_cast<int>(V.rows() / 2);
  CMat h = V.cast<cdouble>() + cdouble(0.0, 0.5) * symplectic_form(n).cast<cdouble>();
  Eigen::SelfAdjointEigenSolver<CMat> es(h, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (lo < -1e-8 * std::max(1.0, hi))
    throw NonPhysicalState("covariance_from_state: V + i Omega/2 has eigenvalue " + std::to_string(lo));
}

CovarianceMatrix covariance_from_state(const Correlators& c0, const Vec& t) {
  const int n = static_cast<int>(c0.n_signal.rows());
  CovarianceMatrix cov;
  cov.n_grid = n;
  cov.delta_omega = c0.delta_omega;
  Correlators c = t.size() ? filtered_correlators(c0, t) : c0;
  for (int k = 0; k < n; ++k)
    if (t.size() == 0 || t[k] != 0.0) cov.support.push_back(k);
  const int m = static_cast<int>(cov.support.size());
  const double dw = c.delta_omega;

  // discrete modes b = sqrt(dw) a; N_jk = <b_j^dag b_k>, M_jk = <b_j b_k> over (signal, idler)
  CMat nn = CMat::Zero(2 * m, 2 * m), mm = CMat::Zero(2 * m, 2 * m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      int a = cov.support[i], b = cov.support[j];
      nn(i, j) = c.n_signal(a, b) * dw;
      nn(m + i, m + j) = c.n_idler(a, b) * dw;
      mm(i, m + j) = c.m(a, b) * dw;
      mm(m + j, i) = c.m(a, b) * dw;
    }
  const Mat half = 0.5 * Mat::Identity(2 * m, 2 * m);
  cov.V.resize(4 * m, 4 * m);
  cov.V.topLeftCorner(2 * m, 2 * m) = (nn + mm).real() + half;
  cov.V.bottomRightCorner(2 * m, 2 * m) = (nn - mm).real() + half;
  cov.V.topRightCorner(2 * m, 2 * m) = (nn + mm).imag();
  cov.V.bottomLeftCorner(2 * m, 2 * m) = (nn + mm).imag().transpose();
  cov.V = 0.5 * (cov.V + cov.V.transpose()).eval();
  if (m > 0) check_physical(cov.V);
  return cov;
}

CovarianceMatrix covariance_from_state(const SchmidtDecomposition& d, const Vec& t) {
  return covariance_from_state(correlators_from_schmidt(d), t);
}

Mat WilliamsonResult::D() const {
  const int n = static_cast<int>(nu.size());
  Vec d(2 * n);
  d << nu, nu;
  return d.asDiagonal();
}

WilliamsonResult williamson(const Mat& V) {
  if (V.rows() != V.cols() || V.rows() % 2) throw DimensionMismatch("williamson: V must be square of even size");
  const int n = static_cast<int>(V.rows() / 2);
  if ((V - V.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, V.cwiseAbs().maxCoeff()))
    throw NonPhysicalState("williamson: V is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(V);
  if (!(es.eigenvalues().minCoeff() > 0)) throw NonPhysicalState("williamson: V is not positive definite");
  const Mat& q = es.eigenvectors();
  const Vec sq = es.eigenvalues().cwiseSqrt();
  const Mat vh = q * sq.asDiagonal() * q.transpose();
  const Mat vmh = q * sq.cwiseInverse().asDiagonal() * q.transpose();
  Mat a = vmh * symplectic_form(n) * vmh;
  a = 0.5 * (a - a.transpose()).eval();

  // i A is Hermitian with eigenvalues +-1/nu; the positive half (ascending) gives nu descending.
  Eigen::SelfAdjointEigenSolver<CMat> eh(cdouble(0.0, 1.0) * a.cast<cdouble>());
  WilliamsonResult w;
  w.nu.resize(n);
  Mat k(2 * n, 2 * n);
  for (int j = 0; j < n; ++j) {
    double mu = eh.eigenvalues()[n + j];
    if (!(mu > 0)) throw NonPhysicalState("williamson: degenerate symplectic spectrum");
    w.nu[j] = 1.0 / mu;
    const CVec u = eh.eigenvectors().col(n + j);
    k.col(j) = std::numbers::sqrt2 * u.imag();
    k.col(n + j) = std::numbers::sqrt2 * u.real();
  }
  if (w.nu.minCoeff() < 0.5 - 1e-8)
    throw NonPhysicalState("williamson: symplectic eigenvalue below 1/2 (" + std::to_string(w.nu.minCoeff()) + ")");
  Vec dmh(2 * n);
  dmh << w.nu.cwiseSqrt().cwiseInverse(), w.nu.cwiseSqrt().cwiseInverse();
  w.S = vh * k * dmh.asDiagonal();
  w.nbar = (w.nu.array() - 0.5).max(0.0).matrix();
  return w;
}

Mat BlochMessiahResult::Lambda() const {
  const int n = static_cast<int>(r.size());
  Vec d(2 * n);
  d << r.array().exp().matrix(), (-r.array()).exp().matrix();
  return d.asDiagonal();
}

static double symplectic_defect(const Mat& s) {
  const int n = static_cast<int>(s.rows() / 2);
  const Mat om = symplectic_form(n);
  double scale = std::max(1.0, s.rowwise().squaredNorm().maxCoeff());
  return (s * om * s.transpose() - om).cwiseAbs().maxCoeff() / scale;
}

BlochMessiahResult bloch_messiah(const Mat& S) {
  if (S.rows() != S.cols() || S.rows() % 2) throw DimensionMismatch("bloch_messiah: S must be square of even size");
  const int n = static_cast<int>(S.rows() / 2);
  if (symplectic_defect(S) > 1e-8) throw InvalidParameter("bloch_messiah: S is not symplectic");
  const Mat om = symplectic_form(n);
  Mat p2 = S * S.transpose();
  p2 = 0.5 * (p2 + p2.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(p2);
  const Vec& ev = es.eigenvalues();
  const Mat& vecs = es.eigenvectors();

  // Stretched directions (eigenvalue e^{2r} > 1) give the x-columns of O; Omega^T maps each to its
  // compressed partner. Eigenvalues indistinguishable from 1 are completed with a basis closed under
  // Omega^T so that O stays symplectic.
  constexpr double one_tol = 1e-10;
  std::vector<int> large, near;
  for (int i = 2 * n - 1; i >= 0; --i) {
    if (ev[i] > 1.0 + one_tol) large.push_back(i);
    else if (ev[i] >= 1.0 - one_tol) near.push_back(i);
  }
  if (static_cast<int>(large.size()) > n) throw NumericalError("bloch_messiah: inconsistent stretch spectrum");
  Mat xcols(2 * n, n);
  Vec lam(n);
  int col = 0;
  for (int i : large) {
    xcols.col(col) = vecs.col(i);
    lam[col++] = std::sqrt(ev[i]);
  }
  const Mat omt = om.transpose();
  // Pivoted Gram-Schmidt over the near-one eigenvectors: always take the candidate with the largest
  // residual, then remove both it and its Omega^T partner from every other candidate.
  Mat cand(2 * n, near.size());
  for (size_t k = 0; k < near.size(); ++k) cand.col(k) = vecs.col(near[k]);
  while (col < n && cand.cols() > 0) {
    Eigen::Index best;
    double nv = cand.colwise().norm().maxCoeff(&best);
    if (nv < 1e-6) break;
    Vec v = cand.col(best) / nv;
    Vec jv = omt * v;
    jv -= v.dot(jv) * v;
    jv.normalize();
    cand -= v * (v.transpose() * cand);
    cand -= jv * (jv.transpose() * cand);
    xcols.col(col) = v;
    lam[col++] = 1.0;
  }
  if (col != n) throw NumericalError("bloch_messiah: could not complete the symplectic basis");

  BlochMessiahResult b;
  b.O.resize(2 * n, 2 * n);
  b.O.leftCols(n) = xcols;
  b.O.rightCols(n) = omt * xcols;
  b.r = lam.array().log().matrix();
  Vec linv(2 * n);
  linv << lam.cwiseInverse(), lam;
  b.O_tilde = S.transpose() * b.O * linv.asDiagonal();
  return b;
}

Mat pair_beamsplitter(int n) {
  if (n % 2) throw PairingError("pair_beamsplitter: odd number of modes");
  const double h = 1.0 / std::numbers::sqrt2;
  CMat bm = CMat::Zero(n, n);
  for (int k = 0; k < n; k += 2) {
    bm(k, k) = h;
    bm(k + 1, k + 1) = h;
    bm(k, k + 1) = cdouble(0.0, h);
    bm(k + 1, k) = cdouble(0.0, h);
  }
  Mat w(2 * n, 2 * n);
  w.topLeftCorner(n, n) = bm.real();
  w.topRightCorner(n, n) = bm.imag();
  w.bottomLeftCorner(n, n) = -bm.imag();
  w.bottomRightCorner(n, n) = bm.real();
  return w;
}

namespace {

// real (x; p) vector <-> complex amplitude x + i p
CVec to_complex(const Vec& v) {
  const Eigen::Index n = v.size() / 2;
  return v.head(n).cast<cdouble>() + cdouble(0.0, 1.0) * v.tail(n).cast<cdouble>();
}

Vec to_real_vec(const CVec& c) {
  Vec v(2 * c.size());
  v << c.real(), c.imag();
  return v;
}

// Phase rotation generator of the twin-beam symmetry: signal amplitudes times i, idler times -i.
Vec apply_z(const Vec& v, int m) {
  CVec c = to_complex(v);
  c.head(m) *= cdouble(0.0, 1.0);
  c.tail(m) *= cdouble(0.0, -1.0);
  return to_real_vec(c);
}

void fix_gauge(CVec& v) {
  if (v.size() == 0) return;
  Eigen::Index at;
  v.cwiseAbs().maxCoeff(&at);
  if (std::abs(v[at]) == 0) return;
  v *= std::polar(1.0, -std::arg(v[at]));
  v[at] = std::abs(v[at]);
}

CVec embed(const CVec& part, const std::vector<int>& support, int n_grid, double dw) {
  CVec f = CVec::Zero(n_grid);
  for (size_t k = 0; k < support.size(); ++k) f[support[k]] = part[k];
  double nrm = f.norm();
  if (nrm > 0) f /= nrm * std::sqrt(dw);
  fix_gauge(f);
  return f;
}

} // namespace

FilteredModeSet extract_mode_sets(const CovarianceMatrix& cov, const WilliamsonResult& w, const BlochMessiahResult& b) {
  const int n = cov.n_modes();
  const int m = static_cast<int>(cov.support.size());
  if (2 * m != n || w.S.rows() != 2 * n || b.O.rows() != 2 * n)
    throw DimensionMismatch("extract_mode_sets: inconsistent dimensions");
  const Mat omt = symplectic_form(n).transpose();

  // --- pair-adapted Bloch-Messiah frame ---
  // Within each group of equal squeezing the stretched subspace is invariant under the twin-beam
  // phase rotation Z, so x-columns are chosen as (v, Z v); then the pair beamsplitter W turns each
  // pair into one pure-signal and one pure-idler mode.
  Mat xcols(2 * n, n);
  Vec lam(n);
  int col = 0;
  constexpr double one_tol = 5e-11, group_tol = 1e-9;
  int k = 0;
  while (k < n && b.r[k] >= one_tol) {
    int end = k + 1;
    while (end < n && b.r[end] >= one_tol && std::abs(std::expm1(2.0 * (b.r[k] - b.r[end]))) <= group_tol) ++end;
    const int g = end - k;
    if (g % 2) throw PairingError("extract_mode_sets: squeezing value without a +-r partner");
    double lsum = 0;
    for (int i = k; i < end; ++i) lsum += b.r[i];
    const double lg = std::exp(lsum / g);
    // pivoted: take the candidate with the largest residual, then project out both v and Z v
    Mat cand = b.O.middleCols(k, g);
    int found = 0;
    while (found < g) {
      Eigen::Index best;
      double nv = cand.colwise().norm().maxCoeff(&best);
      if (nv < 1e-6) break;
      Vec v = cand.col(best) / nv;
      Vec zv = apply_z(v, m);
      zv -= v.dot(zv) * v;
      zv.normalize();
      cand -= v * (v.transpose() * cand);
      cand -= zv * (zv.transpose() * cand);
      xcols.col(col) = v;
      xcols.col(col + 1) = zv;
      lam[col] = lam[col + 1] = lg;
      col += 2;
      found += 2;
    }
    if (found != g) throw PairingError("extract_mode_sets: could not pair a squeezing group");
    k = end;
  }
  if (k < n) {
    // Unsqueezed remainder: any split into signal and idler modes works; pair them in order.
    const int q = n - k;
    CMat c(n, q);
    for (int i = 0; i < q; ++i) c.col(i) = to_complex(b.O.col(k + i));
    Eigen::JacobiSVD<CMat> ss(c.topRows(m), Eigen::ComputeThinU), si(c.bottomRows(m), Eigen::ComputeThinU);
    int qs = 0, qi = 0;
    while (qs < ss.singularValues().size() && ss.singularValues()[qs] > 0.5) ++qs;
    while (qi < si.singularValues().size() && si.singularValues()[qi] > 0.5) ++qi;
    if (qs != qi || qs + qi != q) throw PairingError("extract_mode_sets: unsqueezed subspace is not balanced");
    const double h = 1.0 / std::numbers::sqrt2;
    for (int i = 0; i < qs; ++i) {
      CVec s = CVec::Zero(n), t = CVec::Zero(n);
      s.head(m) = ss.matrixU().col(i);
      t.tail(m) = si.matrixU().col(i);
      xcols.col(col) = to_real_vec(h * (s + t));
      xcols.col(col + 1) = to_real_vec(cdouble(0.0, h) * (s - t));
      lam[col] = lam[col + 1] = 1.0;
      col += 2;
    }
  }

  FilteredModeSet out;
  out.delta_omega = cov.delta_omega;
  out.O.resize(2 * n, 2 * n);
  out.O.leftCols(n) = xcols;
  out.O.rightCols(n) = omt * xcols;
  out.lambda.resize(2 * n);
  out.lambda << lam, lam.cwiseInverse();
  out.O_tilde = w.S.transpose() * out.O * out.lambda.cwiseInverse().asDiagonal();
  out.W = pair_beamsplitter(n);

  const Mat owt = out.O * out.W.transpose();
  const int pairs = n / 2;
  out.squeeze_signal.resize(cov.n_grid, pairs);
  out.squeeze_idler.resize(cov.n_grid, pairs);
  out.r.resize(pairs);
  for (int p = 0; p < pairs; ++p) {
    CVec c0 = to_complex(owt.col(2 * p)), c1 = to_complex(owt.col(2 * p + 1));
    if (c0.head(m).squaredNorm() < c1.head(m).squaredNorm()) std::swap(c0, c1);
    out.squeeze_signal.col(p) = embed(c0.head(m), cov.support, cov.n_grid, cov.delta_omega);
    out.squeeze_idler.col(p) = embed(c1.tail(m), cov.support, cov.n_grid, cov.delta_omega);
    out.r[p] = std::log(lam[2 * p]);
  }

  // --- thermal modes: columns of the passive factor O O~^T, Williamson order ---
  const Mat qm = out.O * out.O_tilde.transpose();
  struct Thermal { CVec v; double nu; };
  std::vector<Thermal> ts, ti;
  k = 0;
  while (k < n) {
    int end = k + 1;
    while (end < n && std::abs(w.nu[k] - w.nu[end]) <= group_tol * w.nu[k]) ++end;
    const int g = end - k;
    CMat c(n, g);
    for (int i = 0; i < g; ++i) c.col(i) = to_complex(qm.col(k + i));
    // rotate within the degenerate block to separate signal-only and idler-only modes
    CMat gram = c.topRows(m).adjoint() * c.topRows(m);
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (gram + gram.adjoint()));
    CMat rot = c * es.eigenvectors();
    for (int i = 0; i < g; ++i) {
      double nu = w.nu[k];
      if (es.eigenvalues()[i] > 0.5) ts.push_back({rot.col(i).head(m), nu});
      else ti.push_back({rot.col(i).tail(m), nu});
    }
    k = end;
  }
  auto by_nu = [](const Thermal& a, const Thermal& c) { return a.nu > c.nu; };
  std::stable_sort(ts.begin(), ts.end(), by_nu);
  std::stable_sort(ti.begin(), ti.end(), by_nu);
  out.thermal_signal.resize(cov.n_grid, ts.size());
  out.thermal_idler.resize(cov.n_grid, ti.size());
  out.nbar_signal.resize(ts.size());
  out.nbar_idler.resize(ti.size());
  for (size_t i = 0; i < ts.size(); ++i) {
    out.thermal_signal.col(i) = embed(ts[i].v, cov.support, cov.n_grid, cov.delta_omega);
    out.nbar_signal[i] = std::max(0.0, ts[i].nu - 0.5);
  }
  for (size_t i = 0; i < ti.size(); ++i) {
    out.thermal_idler.col(i) = embed(ti[i].v, cov.support, cov.n_grid, cov.delta_omega);
    out.nbar_idler[i] = std::max(0.0, ti[i].nu - 0.5);
  }
  return out;
}

double filtered_schmidt_number(const FilteredModeSet& m) {
  Eigen::ArrayXd s2 = m.r.array().sinh().square();
  double den = s2.square().sum();
  if (!(den > 0)) throw UndefinedSchmidtNumber("filtered_schmidt_number: no squeezing");
  return s2.sum() * s2.sum() / den;
}

PurityRoutes purity_routes(const Mat& V, const Vec& nu) {
  PurityRoutes p;
  double lp = 0;
  for (double x : nu) lp += std::log(0.5 / x);
  p.from_symplectic = std::exp(lp);
  Eigen::LLT<Mat> llt(V);
  if (llt.info() != Eigen::Success) throw NonPhysicalState("purity: V is not positive definite");
  double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  p.from_determinant = std::exp(0.5 * V.rows() * std::log(0.5) - 0.5 * logdet);
  return p;
}

double purity(const Mat& V) {
  WilliamsonResult w = williamson(V);
  PurityRoutes p = purity_routes(V, w.nu);
  if (std::abs(p.from_symplectic - p.from_determinant) > 1e-8)
    throw NumericalError("purity: symplectic and determinant routes disagree");
  return p.from_symplectic;
}

Mat fidelity_matrix(const std::vector<CVec>& modes, double delta_omega) {
  const int k = static_cast<int>(modes.size());
  Mat f(k, k);
  for (int i = 0; i < k; ++i) {
    f(i, i) = 1.0;
    for (int j = 0; j < i; ++j) f(i, j) = f(j, i) = mode_fidelity(modes[i], modes[j], delta_omega);
  }
  if (k == 1) mode_fidelity(modes[0], modes[0], delta_omega);
  return f;
}

} // namespace twinbeam

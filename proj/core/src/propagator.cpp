#include "twinbeam/propagator.hpp"
#include "twinbeam/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>

namespace twinbeam {

CMat GeneratorBlocks::full() const {
  const int n = this->n();
  CMat q = CMat::Zero(2 * n, 2 * n);
  q.topLeftCorner(n, n).diagonal() = G.cast<cdouble>();
  q.topRightCorner(n, n) = F;
  q.bottomLeftCorner(n, n) = -F.adjoint();
  q.bottomRightCorner(n, n).diagonal() = -H.cast<cdouble>();
  return q;
}

GeneratorBlocks assemble_generator(const FrequencyGrid& grid, const MediumSpec& medium, const PumpSpectrum& pump,
                                   int g_sign) {
  medium.validate();
  if (g_sign != 1 && g_sign != -1 && g_sign != 0) throw InvalidParameter("assemble_generator: g must be +1, -1 or 0");
  if (std::abs(pump.omega_bar_pump - medium.omega_bar_pump) > 1e-9 * std::max(1.0, std::abs(medium.omega_bar_pump)))
    throw InvalidParameter("assemble_generator: pump and medium disagree on the pump central frequency");
  const int n = grid.size();
  GeneratorBlocks b;
  b.G.resize(n);
  b.H.resize(n);
  for (int k = 0; k < n; ++k) {
    b.G[k] = delta_k(medium, Mode::Signal, medium.omega_bar_signal + grid.omega(k));
    b.H[k] = delta_k(medium, Mode::Idler, medium.omega_bar_idler + grid.omega(k));
  }
  b.F = CMat::Zero(n, n);
  if (g_sign == 0 || pump.n_pump_photons == 0.0) return b;
  // beta_P is evaluated through the pump detuning omega_n + omega_m (energy matching makes this equal to
  // omega_S + omega_I - omega_bar_P); summing detunings keeps F exactly symmetric.
  pump_amplitude(pump, pump.omega_bar_pump);  // parameter validation
  const double pref = medium.gamma * g_sign / std::sqrt(2.0 * std::numbers::pi) *
                      std::sqrt(pump.omega_bar_pump * pump.n_pump_photons) * std::pow(std::numbers::pi, -0.25) /
                      std::sqrt(pump.sigma) * grid.delta_omega();
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      double s = (grid.omega(k) + grid.omega(m)) / pump.sigma;
      b.F(k, m) = pref * std::exp(-0.5 * s * s);
    }
  return b;
}

Propagator::Propagator(CMat raw, Vec free_phase_signal, Vec free_phase_idler)
    : raw_(std::move(raw)), phase_s_(std::move(free_phase_signal)), phase_i_(std::move(free_phase_idler)) {
  const auto n = phase_s_.size();
  if (phase_i_.size() != n || raw_.rows() != 2 * n || raw_.cols() != 2 * n)
    throw DimensionMismatch("Propagator: inconsistent block sizes");
}

Propagator Propagator::identity(int n) {
  return Propagator(CMat::Identity(2 * n, 2 * n), Vec::Zero(n), Vec::Zero(n));
}

CMat Propagator::matrix() const {
  const int n = this->n();
  CMat u = raw_;
  for (int k = 0; k < n; ++k) {
    u.row(k) *= std::polar(1.0, -phase_s_[k]);
    u.row(n + k) *= std::polar(1.0, phase_i_[k]);
  }
  return u;
}

CMat Propagator::U_ss() const {
  const int n = this->n();
  CMat b = raw_.topLeftCorner(n, n);
  for (int k = 0; k < n; ++k) b.row(k) *= std::polar(1.0, -phase_s_[k]);
  return b;
}

CMat Propagator::U_si() const {
  const int n = this->n();
  CMat b = raw_.topRightCorner(n, n);
  for (int k = 0; k < n; ++k) b.row(k) *= std::polar(1.0, -phase_s_[k]);
  return b;
}

CMat Propagator::U_is() const {
  const int n = this->n();
  CMat b = raw_.bottomLeftCorner(n, n);
  for (int k = 0; k < n; ++k) b.row(k) *= std::polar(1.0, phase_i_[k]);
  return b.conjugate();
}

CMat Propagator::U_ii() const {
  const int n = this->n();
  CMat b = raw_.bottomRightCorner(n, n);
  for (int k = 0; k < n; ++k) b.row(k) *= std::polar(1.0, phase_i_[k]);
  return b.conjugate();
}

double Propagator::bogoliubov_residual() const {
  const int n = this->n();
  // Diagonal output phases commute with J, so the raw matrix gives the same residual.
  CMat uj = raw_;
  uj.rightCols(n) *= -1.0;
  CMat r = uj * raw_.adjoint();
  r.topLeftCorner(n, n).diagonal().array() -= 1.0;
  r.bottomRightCorner(n, n).diagonal().array() += 1.0;
  return r.norm();
}

double Propagator::mean_signal_photons() const {
  return raw_.topRightCorner(n(), n()).squaredNorm();
}

static void check_finite(const CMat& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + ": non-finite entries");
}

Propagator domain_propagator(const GeneratorBlocks& blocks, double dz) {
  if (!(dz > 0)) throw InvalidParameter("domain_propagator: dz must be positive");
  CMat q = blocks.full();
  check_finite(q, "domain_propagator");
  CMat u = (cdouble(0.0, dz) * q).exp();
  check_finite(u, "domain_propagator");
  return Propagator(std::move(u), dz * blocks.G, dz * blocks.H);
}

namespace {

// With M the index reversal on the 2N components (signal n <-> idler N-1-n), a matrix obeying
// M conj(U) M = U is mapped to a real matrix by T^-1 U T, T = (1 + iM)/sqrt2. Symmetric GVM on a
// symmetric grid gives generators (and hence all products) with this structure.
Mat to_real(const CMat& u, double* imag_residual = nullptr) {
  const Eigen::Index m = u.rows();
  Mat r(m, m);
  double resid = 0.0;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index ri = m - 1 - i, rj = m - 1 - j;
      r(i, j) = 0.5 * (u(i, j).real() + u(ri, rj).real() + u(ri, j).imag() - u(i, rj).imag());
      if (imag_residual)
        resid = std::max(resid, std::abs(u(i, j).imag() + u(ri, rj).imag() + u(i, rj).real() - u(ri, j).real()));
    }
  if (imag_residual) *imag_residual = resid;
  return r;
}

CMat from_real(const Mat& r) {
  const Eigen::Index m = r.rows();
  CMat u(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index ri = m - 1 - i, rj = m - 1 - j;
      u(i, j) = cdouble(0.5 * (r(i, j) + r(ri, rj)), 0.5 * (r(ri, j) - r(i, rj)));
    }
  return u;
}

int sign_slot(int s) { return s + 1; }  // -1, 0, +1 -> 0, 1, 2

template <class M>
M ordered_product(const PolingProfile& profile, const std::array<M, 3>& base, const std::array<bool, 3>& have,
                  StitchStats& st) {
  (void)have;
  const int n = profile.n_domains();
  const Eigen::Index dim = base[0].rows() ? base[0].rows() : (base[1].rows() ? base[1].rows() : base[2].rows());
  // pair products P(a, b) = E_b E_a, then chunk(a, b, c, d) = P(c, d) P(a, b)
  std::array<M, 9> pairs;
  std::array<bool, 9> pair_done{};
  auto pair = [&](int a, int b) -> const M& {
    int key = 3 * a + b;
    if (!pair_done[key]) {
      pairs[key] = base[b] * base[a];
      pair_done[key] = true;
      ++st.chunk_products;
    }
    return pairs[key];
  };
  std::array<M, 81> chunks;
  std::array<bool, 81> chunk_done{};
  M acc;
  bool started = false;
  auto apply = [&](const M& c) {
    if (!started) {
      acc = c;
      started = true;
    } else {
      acc = c * acc;
      ++st.multiplications;
    }
  };
  int k = 0;
  for (; k + 4 <= n; k += 4) {
    int a = sign_slot(profile.signs[k]), b = sign_slot(profile.signs[k + 1]);
    int c = sign_slot(profile.signs[k + 2]), d = sign_slot(profile.signs[k + 3]);
    int key = 27 * a + 9 * b + 3 * c + d;
    if (!chunk_done[key]) {
      chunks[key] = pair(c, d) * pair(a, b);
      chunk_done[key] = true;
      ++st.chunk_products;
    }
    apply(chunks[key]);
  }
  for (; k < n; ++k) apply(base[sign_slot(profile.signs[k])]);
  if (!started) acc = M::Identity(dim, dim);
  return acc;
}

} // namespace

Propagator stitch(const PolingProfile& profile, const FrequencyGrid& grid, const MediumSpec& medium,
                  const PumpSpectrum& pump, StitchStats* stats) {
  profile.validate();
  StitchStats st;
  const int n = grid.size();
  GeneratorBlocks plus = assemble_generator(grid, medium, pump, +1);
  const double dz = profile.domain_length;
  Vec phase_s = profile.n_domains() * dz * plus.G, phase_i = profile.n_domains() * dz * plus.H;
  if (profile.n_domains() == 0) {
    std::clog << "warning: stitch called with an empty poling profile; returning the identity\n";
    if (stats) *stats = st;
    return Propagator::identity(n);
  }

  std::array<bool, 3> have{};
  for (int s : profile.signs) have[sign_slot(s)] = true;
  auto generator = [&](int slot) {
    CMat q = plus.full();
    if (slot != 2) q.topRightCorner(n, n) *= double(slot - 1), q.bottomLeftCorner(n, n) *= double(slot - 1);
    check_finite(q, "stitch");
    return CMat(cdouble(0.0, dz) * q);
  };

  double resid = 0.0;
  Mat probe = to_real(generator(2), &resid);
  st.real_form = resid <= 1e-14 * std::max(1.0, probe.cwiseAbs().maxCoeff());

  CMat raw;
  if (st.real_form) {
    std::array<Mat, 3> base;
    for (int slot = 0; slot < 3; ++slot)
      if (have[slot]) {
        base[slot] = to_real(generator(slot)).exp();
        ++st.exponentials;
      }
    raw = from_real(ordered_product(profile, base, have, st));
  } else {
    std::array<CMat, 3> base;
    for (int slot = 0; slot < 3; ++slot)
      if (have[slot]) {
        base[slot] = generator(slot).exp();
        ++st.exponentials;
      }
    raw = ordered_product(profile, base, have, st);
  }
  check_finite(raw, "stitch");
  if (stats) *stats = st;
  return Propagator(std::move(raw), std::move(phase_s), std::move(phase_i));
}

Propagator stitch_naive(const PolingProfile& profile, const FrequencyGrid& grid, const MediumSpec& medium,
                        const PumpSpectrum& pump) {
  profile.validate();
  const int n = grid.size();
  Propagator u = Propagator::identity(n);
  for (int s : profile.signs) u = compose(u, domain_propagator(assemble_generator(grid, medium, pump, s), profile.domain_length));
  return u;
}

Propagator compose(const Propagator& first, const Propagator& second) {
  if (first.n() != second.n()) throw DimensionMismatch("compose: propagators live on different grids");
  return Propagator(second.raw() * first.raw(), first.free_phase_signal() + second.free_phase_signal(),
                    first.free_phase_idler() + second.free_phase_idler());
}

Propagator double_pass_propagator(const PolingProfile& profile, const FrequencyGrid& grid, const MediumSpec& medium,
                                  const PumpSpectrum& pump) {
  Propagator first = stitch(profile, grid, medium, pump);
  Propagator second = stitch(profile.reversed(), grid, medium.with_swapped_velocities(), pump);
  return compose(first, second);
}

// ---- cache files ----

namespace {

constexpr char kMagic[8] = {'T', 'W', 'B', 'P', 'R', 'O', 'P', '\0'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

PropagatorKey make_key(const FrequencyGrid& grid, const MediumSpec& medium, const PolingProfile& profile,
                       const PumpSpectrum& pump, const std::string& geometry_tag) {
  PropagatorKey k;
  k.grid = fnv1a(num(grid.omega_min()) + "|" + num(grid.omega_max()) + "|" + std::to_string(grid.size()));
  k.medium = fnv1a(geometry_tag + "|" + num(medium.v_pump) + "|" + num(medium.v_signal) + "|" + num(medium.v_idler) +
                   "|" + num(medium.omega_bar_pump) + "|" + num(medium.omega_bar_signal) + "|" +
                   num(medium.omega_bar_idler) + "|" + num(medium.gamma) + "|" + num(medium.length));
  std::string sig = num(profile.domain_length) + "|";
  for (int s : profile.signs) sig += static_cast<char>('1' + s);
  k.profile = fnv1a(sig);
  k.pump = fnv1a(num(pump.sigma) + "|" + num(pump.n_pump_photons) + "|" + num(pump.omega_bar_pump));
  return k;
}

void save_propagator(const std::string& path, const Propagator& u, const PropagatorKey& key) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write propagator cache " + tmp);
    std::int32_t n = u.n();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    for (std::uint64_t h : {key.grid, key.medium, key.profile, key.pump}) out.write(reinterpret_cast<const char*>(&h), sizeof h);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(u.raw().data()), sizeof(cdouble) * u.raw().size());
    out.write(reinterpret_cast<const char*>(u.free_phase_signal().data()), sizeof(double) * n);
    out.write(reinterpret_cast<const char*>(u.free_phase_idler().data()), sizeof(double) * n);
    if (!out) throw Error("failed writing propagator cache " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::optional<Propagator> load_propagator(const std::string& path, const PropagatorKey& key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t h[4];
  std::int32_t n = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(h), sizeof h);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8) || version != kVersion) return std::nullopt;
  if (PropagatorKey{h[0], h[1], h[2], h[3]} != key || n <= 0) return std::nullopt;
  CMat raw(2 * n, 2 * n);
  Vec ps(n), pi(n);
  in.read(reinterpret_cast<char*>(raw.data()), sizeof(cdouble) * raw.size());
  in.read(reinterpret_cast<char*>(ps.data()), sizeof(double) * n);
  in.read(reinterpret_cast<char*>(pi.data()), sizeof(double) * n);
  if (!in) return std::nullopt;
  return Propagator(std::move(raw), std::move(ps), std::move(pi));
}

} // namespace twinbeam

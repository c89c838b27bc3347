#pragma once

#include "twinbeam/grid_medium.hpp"
#include "twinbeam/poling.hpp"
#include "twinbeam/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace twinbeam {

// Q = [[G, F], [-F^dagger, -H]] with G = diag(dk_S), H = diag(dk_I).
struct GeneratorBlocks {
  Vec G;
  Vec H;
  CMat F;

  int n() const { return static_cast<int>(G.size()); }
  CMat full() const;
};

GeneratorBlocks assemble_generator(const FrequencyGrid& grid, const MediumSpec& medium, const PumpSpectrum& pump,
                                   int g_sign);

// Heisenberg map (a_S, a_I^dagger) -> (a_S, a_I^dagger) across a region. The raw matrix acts on the
// fields at the region boundaries; the free-propagation phases dk*z accumulated over the region are
// carried alongside so that the input/output (co-moving) convention can be recovered exactly and
// regions compose physically.
class Propagator {
 public:
  Propagator() = default;
  Propagator(CMat raw, Vec free_phase_signal, Vec free_phase_idler);
  static Propagator identity(int n);

  int n() const { return static_cast<int>(phase_s_.size()); }
  const CMat& raw() const { return raw_; }
  const Vec& free_phase_signal() const { return phase_s_; }
  const Vec& free_phase_idler() const { return phase_i_; }

  // 2N x 2N matrix in the input/output convention (free phases stripped at the output).
  CMat matrix() const;
  CMat U_ss() const;
  CMat U_si() const;
  CMat U_is() const;  // conjugate of the lower-left block
  CMat U_ii() const;  // conjugate of the lower-right block

  // ||U J U^dagger - J||_F (an upper bound on the operator-norm residual), J = diag(1, -1).
  double bogoliubov_residual() const;
  // sum |U_SI|^2 = <N_S>; cheap, no decomposition needed
  double mean_signal_photons() const;

 private:
  CMat raw_;
  Vec phase_s_, phase_i_;
};

// exp(i dz Q) for a single domain.
Propagator domain_propagator(const GeneratorBlocks& blocks, double dz);

struct StitchStats {
  int exponentials = 0;     // dense matrix exponentials evaluated
  int chunk_products = 0;   // distinct four-domain products built
  int multiplications = 0;  // 2N x 2N products in the final chain
  bool real_form = false;   // symmetric-GVM real representation used
};

// Ordered product over domains (last domain leftmost) using one exponential per distinct sign and a
// cache of four-domain products.
Propagator stitch(const PolingProfile& profile, const FrequencyGrid& grid, const MediumSpec& medium,
                  const PumpSpectrum& pump, StitchStats* stats = nullptr);

// Reference implementation: one exponential per domain, multiplied in sequence.
Propagator stitch_naive(const PolingProfile& profile, const FrequencyGrid& grid, const MediumSpec& medium,
                        const PumpSpectrum& pump);

// second after first; free space between regions is the identity.
Propagator compose(const Propagator& first, const Propagator& second);

// Two regions with a half-wave plate between them: the second region has v_S and v_I interchanged and
// the spatially mirrored poling sequence.
Propagator double_pass_propagator(const PolingProfile& profile, const FrequencyGrid& grid, const MediumSpec& medium,
                                  const PumpSpectrum& pump);

// Cache files: versioned binary dump keyed by hashes of everything that determines the propagator.
struct PropagatorKey {
  std::uint64_t grid = 0, medium = 0, profile = 0, pump = 0;
  bool operator==(const PropagatorKey&) const = default;
};

PropagatorKey make_key(const FrequencyGrid& grid, const MediumSpec& medium, const PolingProfile& profile,
                       const PumpSpectrum& pump, const std::string& geometry_tag);
void save_propagator(const std::string& path, const Propagator& u, const PropagatorKey& key);
// Returns nullopt if the file is missing, has a different version, or a different key.
std::optional<Propagator> load_propagator(const std::string& path, const PropagatorKey& key);

} // namespace twinbeam

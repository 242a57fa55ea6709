#pragma once

#include "hombif/dichotomy.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace hombif {

/// Desk-scale element of KO over a loop: [E] - [F] recorded as
/// (rank E - rank F, w1(E) + w1(F) mod 2).
struct KOClassDesk {
  int virtual_rank = 0;
  int delta_w1 = 0;
  std::string provenance;

  bool operator==(const KOClassDesk& o) const {
    return virtual_rank == o.virtual_rank && delta_w1 == o.delta_w1;
  }
};

/// [E] - [F] for two bundles over the same loop.
KOClassDesk ko_difference(const SampledBundle& e, const SampledBundle& f);

enum class BundlePart { image, kernel };

/// Orthonormal frames of im P or ker P for one projector per loop sample.
/// Frames are aligned with their predecessor (orthogonal Procrustes) so
/// that coordinates vary smoothly along the loop.
SampledBundle bundle_from_projectors(const ParameterLoop& loop,
                                     const std::vector<Matrix>& projectors,
                                     BundlePart part, std::string name = {});

/// Transports the first frame around the loop by projection onto the next
/// fibre and re-orthonormalization; 1 iff the monodromy reverses
/// orientation.
int first_sw_class(const SampledBundle& e);

/// Determinant sign of the transported monodromy, +1 or -1.
int monodromy_sign(const SampledBundle& e);

struct HalfLineBundles {
  SampledBundle stable;         // im P+(lambda, kappa_plus)
  SampledBundle unstable;       // ker P-(lambda, kappa_minus)
  SampledBundle minus_image;    // im P-(lambda, kappa_minus)
  long kappa_plus = 0;
  long kappa_minus = 0;
  std::vector<EDWitness> plus;  // one per loop sample
  std::vector<EDWitness> minus;
};

/// Certifies both half-line dichotomies at every loop sample (in parallel)
/// and assembles the stable bundle at kappa_plus and the unstable bundle at
/// kappa_minus. Failures name the offending sample.
HalfLineBundles stable_unstable_bundles(const DiscreteVectorField& field,
                                        const ParameterLoop& loop,
                                        long kappa_plus, long kappa_minus,
                                        long horizon = 100,
                                        const DichotomyOptions& opt = {});

/// [im P+(kappa_plus)] - [im P-(kappa_minus)].
KOClassDesk index_bundle_class(const HalfLineBundles& b);
KOClassDesk index_bundle_class(const DiscreteVectorField& field,
                               const ParameterLoop& loop, long kappa_plus,
                               long kappa_minus, long horizon = 100,
                               const DichotomyOptions& opt = {});

/// One row per sample: i, parameter coordinates, frame entries (column
/// major). Header row included.
void write_bundle_csv(std::ostream& os, const SampledBundle& e);

}  // namespace hombif

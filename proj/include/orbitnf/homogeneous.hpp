#ifndef ORBITNF_HOMOGENEOUS_HPP
#define ORBITNF_HOMOGENEOUS_HPP

#include "orbitnf/normalform.hpp"

namespace orbitnf {

// Fiberwise positively homogeneous Hamiltonians (Finsler-type).  Momentum
// can only be normalized to the constant level (P0, 0), but in exchange the
// full mixed q/p block of second derivatives can be removed, with
// homogeneous factors only.

struct HomogeneityCertificate {
  double degree = 0;
  double euler_residual = 0;    // max |p . dH/dp - a H| / (1 + |H|)
  double scaling_residual = 0;  // max |H(q, s p) - s^a H(q, p)| relative, s in {1/2, 2}
  double positivity_margin = 0; // min eigenvalue of d^2(H^2)/dp^2 over samples
  bool pass = false;
};

// Probe the declared degree on seeded samples with |p| in [1/2, 2].
HomogeneityCertificate homogeneity_probe(const HamiltonianField& H, double degree,
                                         int samples = 60, unsigned seed = 1,
                                         double tol = 1e-6);

// Same, but throws "not homogeneous of declared degree ..." on failure.
HomogeneityCertificate certify_homogeneous(const HamiltonianField& H, double degree,
                                           int samples = 60, unsigned seed = 1,
                                           double tol = 1e-6);

struct HomogeneousOptions {
  double delta = 0.4;
  int steps_per_unit = 512;
  int max_delta_shrinks = 4;
  double pad = 0.1;
  double margin_extra = 0.2;
  VerifyOptions verify;
  FlowBoxOptions flow_box;
  int certificate_samples = 60;
  unsigned seed = 1;
};

struct HomogeneousPipelineResult {
  HamPtr H_original;
  HamPtr H_final;
  FiberedMap psi_total; // homogeneous factors only
  NormalFormReport report;
  HomogeneityCertificate certificate;
  OrbitSegment orbit_original;
  PhaseState start_final;
  double delta_used = 0;
  double P0 = 0;              // constant first momentum component
  double p0_constancy = 0;    // max |P0(t) - a H(x0)| along the straightened orbit
  std::vector<std::string> log;
};

HomogeneousPipelineResult homogeneous_pipeline(HamPtr H, const PhaseState& x0,
                                               double degree,
                                               const HomogeneousOptions& opts = {});

// Conditions at the momentum level (P0, 0): straight orbit, constant
// momentum, the p0/p* block, the q/p* block, and the full q/p block.
NormalFormReport verify_homogeneous_conditions(const HamiltonianField& H,
                                               const PhaseState& x0, double P0,
                                               double delta,
                                               const VerifyOptions& opts = {});

} // namespace orbitnf

#endif

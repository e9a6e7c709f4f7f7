#ifndef ORBITNF_NORMALFORM_HPP
#define ORBITNF_NORMALFORM_HPP

#include <optional>
#include <string>
#include <vector>

#include "orbitnf/dynamics.hpp"
#include "orbitnf/transforms.hpp"

namespace orbitnf {

// Raised internally when a construction step needs a smaller segment; the
// pipeline driver halves delta and retries.
struct ShrinkDeltaRequest : Error {
  explicit ShrinkDeltaRequest(const std::string& why) : Error(why) {}
};

struct StepResult {
  HamPtr H;
  FiberedMap psi;
  OrbitSegment orbit;
};

// Transport an orbit through the inverse of a step map, recomputing node
// derivatives with the new field.  Nodes with |t| > t_keep are dropped
// (flow-backed maps are only defined on the tube).
OrbitSegment transport_orbit(const OrbitSegment& orbit, const FiberedMap& step,
                             const HamiltonianField& H_new, double t_keep);

// ---------------------------------------------------------------------------
// Pipeline steps.  Each returns the transformed Hamiltonian, the fibered
// factor that was applied, and the transported orbit.

// Straighten the base curve onto the axis: the base map is the frame chart
// xi(t, q*) = Q(t) + N q* with N a fixed orthonormal complement of Qdot(0).
StepResult straighten(HamPtr H, const OrbitSegment& orbit, double delta,
                      double pad = 0.1);

// Vertical kill of the momentum along the straightened orbit:
// u(q) = v(q0) + P*(q0).q* with v' = P0 (composite Simpson on the grid).
StepResult kill_momentum(HamPtr H, const OrbitSegment& orbit);

// Shear of the base making the p0/p* block of the fiber Hessian vanish on
// the axis; l(q0) solves the linear system with the p*p* block.
StepResult kill_p0pstar(HamPtr H, const OrbitSegment& orbit);

struct FlowBoxOptions {
  int substeps = 32;       // RK4 substeps per node flow
  int points_q0 = 21;      // Chebyshev points on the q0 axis
  int points_qstar = 17;   // per q* axis (d = 1); reduced for higher d
  double qstar_radius = 0.25;
  double guard_fraction = 0.1; // V0 >= guard_fraction * V0(0)
  int validation_samples = 16;
};

// Flow-box chart of the zero-section field V(q) = dH/dp (q, p_level); makes
// dH/dp* (q, p_level) vanish on the whole tube.
StepResult flow_box_straighten(HamPtr H, const OrbitSegment& orbit, const Vec& p_level,
                               double delta, double pad = 0.1,
                               const FlowBoxOptions& opts = {});

// Unique symmetric solution B of B A + A B = Aprime for SPD A, via the
// eigenbasis of A.
Mat lyapunov_solve(const Mat& A, const Mat& Aprime);

// The matrix path M(t) with M M^t = A, M' = B M, M(0) = A(0)^{1/2}, built
// from samples of A on a uniform grid containing t = 0.
struct LyapunovPath {
  double t0 = 0, dt = 1;
  std::vector<double> grid;
  std::vector<Mat> A_nodes, Aprime_nodes, B_nodes, M_nodes;
  SplineMat A, B, M;

  double residual_lyapunov() const;  // max |BA + AB - A'| over nodes
  double residual_factorization() const; // max |M M^t - A| over nodes
  double residual_sqrt0() const;     // |M(0) - A(0)^{1/2}|
};

LyapunovPath metric_path(double t0, double dt, const std::vector<Mat>& A_samples);

struct NormalizeMetricResult {
  HamPtr H;
  FiberedMap psi; // homogeneous metric factor then quadratic vertical factor
  OrbitSegment orbit;
  HamPtr H_mid;   // after the homogeneous factor alone (diagnostics)
};

NormalizeMetricResult normalize_metric(HamPtr H, const OrbitSegment& orbit,
                                       const LyapunovPath& path);

// ---------------------------------------------------------------------------
// Verification.

struct ConditionRecord {
  std::string name;
  double max_residual;
  double tolerance;
  bool pass;
};

struct NormalFormReport {
  std::vector<ConditionRecord> conditions;
  std::vector<double> grid;
  std::vector<Vec> obstruction_values;
  double obstruction_max = 0;
  bool obstruction_vanishes = true;
  double f_drift = 0;
  double w_drift = 0;
  double delta_used = 0;

  bool all_pass() const;
  const ConditionRecord& condition(const std::string& name) const;
  Json to_json() const;
};

struct VerifyOptions {
  int grid_points = 11;
  double tol_state = 1e-8;
  double tol_deriv = 1e-6;
  int steps_per_unit = 512;
  DerivativeStencil stencil;
};

// Orbit of H integrated with finite-difference Hamilton equations only (the
// verification side never trusts construction oracles).
OrbitSegment integrate_verification_orbit(const HamiltonianField& H,
                                          const PhaseState& x0, double T,
                                          int steps_per_unit);

// Independent check of the normal-form identities: integrates the orbit of
// H from x0 with finite-difference Hamilton equations and measures every
// residual with fd_field_partial, never with symbolic derivatives.
NormalFormReport verify_conditions(const HamiltonianField& H, const PhaseState& x0,
                                   double delta, const VerifyOptions& opts = {});

// The mixed second derivatives d^2 H / dq* dp0 at (t e0, 0) per grid point.
std::vector<Vec> obstruction(const HamiltonianField& H, const std::vector<double>& ts,
                             const DerivativeStencil& stencil = {});
bool obstruction_vanishes(const std::vector<Vec>& values, double tol = 1e-6);

// ---------------------------------------------------------------------------
// Full pipeline.

struct PipelineOptions {
  double delta = 0.5;
  int steps_per_unit = 512;
  int max_delta_shrinks = 4;
  double pad = 0.1;          // tube extends to |q0| <= delta + pad
  double margin_extra = 0.2; // orbit integrated to |t| <= delta + pad + extra
  VerifyOptions verify;
  FlowBoxOptions flow_box;
  double convexity_samples = 40;
  unsigned seed = 0;
};

struct PipelineResult {
  HamPtr H_original;
  HamPtr H_final;
  FiberedMap psi_total;
  OrbitSegment orbit_original;
  OrbitSegment orbit_final;
  PhaseState start_final;
  NormalFormReport report;
  double delta_used = 0;
  std::vector<std::string> log;
};

PipelineResult normal_form_pipeline(HamPtr H, const PhaseState& x0,
                                    const PipelineOptions& opts = {});

// ---------------------------------------------------------------------------
// Seeded admissible maps for the obstruction-invariance experiments.

enum class AdmissibleKind {
  VerticalFlat,         // u with du = 0 and d^2u/dq*dq0 = 0 on the axis
  HomogeneousBlockDiag, // base with block-diagonal differential on the axis
};

FiberedMap random_admissible_map(unsigned seed, double delta, AdmissibleKind kind,
                                 int d = 1);

} // namespace orbitnf

#endif

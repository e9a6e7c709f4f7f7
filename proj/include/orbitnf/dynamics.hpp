#ifndef ORBITNF_DYNAMICS_HPP
#define ORBITNF_DYNAMICS_HPP

#include <functional>
#include <optional>
#include <vector>

#include "orbitnf/hamiltonian.hpp"
#include "orbitnf/phase.hpp"

namespace orbitnf {

// Hamilton's equations: qdot = dH/dp, pdot = -dH/dq.
std::pair<Vec, Vec> hamiltonian_vector_field(const HamiltonianField& H,
                                             const PhaseState& x);

// Fixed-step RK4 trajectory on a uniform grid with Hermite dense output.
// Stored node derivatives make the interpolant C^1; when the field is
// closed form the second derivatives upgrade it to a C^2 quintic.
class OrbitSegment {
 public:
  OrbitSegment() = default;
  OrbitSegment(double t0, double dt, std::vector<Vec> states, std::vector<Vec> derivs,
               std::vector<Vec> seconds, std::vector<double> energies);

  double tmin() const { return t0_; }
  double tmax() const { return t0_ + dt_ * (static_cast<double>(states_.size()) - 1); }
  double dt() const { return dt_; }
  int nodes() const { return static_cast<int>(states_.size()); }
  double node_time(int i) const { return t0_ + dt_ * i; }
  PhaseState node_state(int i) const { return PhaseState::from_flat(states_[i]); }
  const Vec& node_flat(int i) const { return states_[i]; }
  const Vec& node_deriv(int i) const { return derivs_[i]; }
  bool has_second() const { return !second_.empty(); }
  const Vec& node_second(int i) const { return second_[i]; }
  double node_energy(int i) const { return energy_[i]; }

  PhaseState state_at(double t) const { return PhaseState::from_flat(flat_at(t)); }
  Vec flat_at(double t) const;
  Vec deriv_at(double t) const;

  double energy_drift() const;
  // Largest residual |x'(t) - X_H(x(t))| of the dense output at step
  // midpoints, measured with the supplied right-hand side.
  double hamilton_residual(const std::function<Vec(const Vec&)>& rhs) const;

  int index_of_time(double t) const; // exact node lookup (t on the grid)

 private:
  void locate(double t, int& cell, double& s) const;
  double t0_ = 0, dt_ = 1;
  std::vector<Vec> states_, derivs_, second_;
  std::vector<double> energy_;
};

struct IntegrationOptions {
  int steps_per_unit = 512;
  double energy_tolerance = 1e-8;
  bool check_energy = true;
};

// Orbit on [0, T] from x0 (steps = total RK4 steps, >= 16).
OrbitSegment integrate_orbit(const HamiltonianField& H, const PhaseState& x0,
                             double T, int steps);

// Orbit on [-Tback, Tfwd] from x0 at t = 0, grid aligned so that t = 0 is a
// node; used by the pipeline which needs both sides of the segment.
OrbitSegment integrate_orbit_centered(const HamiltonianField& H, const PhaseState& x0,
                                      double Tback, double Tfwd,
                                      const IntegrationOptions& opts = {});

using VecField = std::function<Vec(const Vec&)>;

// Flow of a vector field on R^(1+d) with fixed substep count per query, so
// the flow is a smooth function of its arguments.
class FlowMap {
 public:
  FlowMap(VecField field, int substeps = 32);
  Vec flow(const Vec& start, double t) const;
  // Variational Jacobian dPhi^t/dx alongside the trajectory.
  std::pair<Vec, Mat> flow_with_jacobian(const Vec& start, double t) const;
  const VecField& field() const { return field_; }
  int substeps() const { return substeps_; }

 private:
  VecField field_;
  int substeps_;
};

// Flow map of V/V0; throws when the guard V0 >= margin fails anywhere the
// field is evaluated.
FlowMap reparametrized_flow(const VecField& V, double margin, int substeps = 32);

Mat flow_jacobian(const FlowMap& flow, const Vec& start, double t);

// RK4 over a general field, exposed for the metric ODE and tests.
Vec rk4_step(const VecField& f, const Vec& x, double h);

} // namespace orbitnf

#endif

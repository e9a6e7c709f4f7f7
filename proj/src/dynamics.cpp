#include "orbitnf/dynamics.hpp"

#include <cmath>

namespace orbitnf {

std::pair<Vec, Vec> hamiltonian_vector_field(const HamiltonianField& H,
                                             const PhaseState& x) {
  Vec qdot = H.fiber_gradient(x);
  Vec pdot = -H.base_gradient(x);
  if (!qdot.allFinite() || !pdot.allFinite())
    throw Error("hamiltonian_vector_field: non-finite derivative");
  return {qdot, pdot};
}

namespace {

Vec hamilton_rhs(const HamiltonianField& H, const Vec& flat) {
  PhaseState x = PhaseState::from_flat(flat);
  auto [qd, pd] = hamiltonian_vector_field(H, x);
  Vec out(flat.size());
  out << qd, pd;
  return out;
}

} // namespace

Vec rk4_step(const VecField& f, const Vec& x, double h) {
  Vec k1 = f(x);
  Vec k2 = f(x + (h / 2) * k1);
  Vec k3 = f(x + (h / 2) * k2);
  Vec k4 = f(x + h * k3);
  return x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

OrbitSegment::OrbitSegment(double t0, double dt, std::vector<Vec> states,
                           std::vector<Vec> derivs, std::vector<Vec> seconds,
                           std::vector<double> energies)
    : t0_(t0), dt_(dt), states_(std::move(states)), derivs_(std::move(derivs)),
      second_(std::move(seconds)), energy_(std::move(energies)) {
  if (states_.size() < 2 || states_.size() != derivs_.size() ||
      states_.size() != energy_.size())
    throw Error("OrbitSegment: inconsistent node arrays");
  if (!second_.empty() && second_.size() != states_.size())
    throw Error("OrbitSegment: inconsistent second-derivative array");
}

void OrbitSegment::locate(double t, int& cell, double& s) const {
  const int n = nodes();
  double u = (t - t0_) / dt_;
  cell = static_cast<int>(std::floor(u));
  if (cell < 0) cell = 0;
  if (cell > n - 2) cell = n - 2;
  s = u - cell;
}

int OrbitSegment::index_of_time(double t) const {
  double u = (t - t0_) / dt_;
  int i = static_cast<int>(std::lround(u));
  if (i < 0 || i >= nodes() || std::abs(u - i) > 1e-9)
    throw Error("OrbitSegment: time is not a grid node");
  return i;
}

Vec OrbitSegment::flat_at(double t) const {
  int i;
  double s;
  locate(t, i, s);
  const Vec &x0 = states_[i], &x1 = states_[i + 1];
  const Vec v0 = dt_ * derivs_[i], v1 = dt_ * derivs_[i + 1];
  if (second_.empty()) {
    // cubic Hermite
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    double h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s);
    double h11 = s * s * (s - 1);
    return h00 * x0 + h10 * v0 + h01 * x1 + h11 * v1;
  }
  // quintic Hermite matching value, first and second derivative at both ends
  const Vec a0 = dt_ * dt_ * second_[i], a1 = dt_ * dt_ * second_[i + 1];
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  const double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
  const double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
  const double H2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5);
  const double H3 = 0.5 * (s3 - 2 * s4 + s5);
  const double H4 = -4 * s3 + 7 * s4 - 3 * s5;
  const double H5 = 10 * s3 - 15 * s4 + 6 * s5;
  return H0 * x0 + H1 * v0 + H2 * a0 + H3 * a1 + H4 * v1 + H5 * x1;
}

Vec OrbitSegment::deriv_at(double t) const {
  int i;
  double s;
  locate(t, i, s);
  const Vec &x0 = states_[i], &x1 = states_[i + 1];
  const Vec v0 = dt_ * derivs_[i], v1 = dt_ * derivs_[i + 1];
  if (second_.empty()) {
    double d00 = 6 * s * (s - 1);
    double d10 = (1 - s) * (1 - 3 * s);
    double d01 = 6 * s * (1 - s);
    double d11 = s * (3 * s - 2);
    return (d00 * x0 + d10 * v0 + d01 * x1 + d11 * v1) / dt_;
  }
  const Vec a0 = dt_ * dt_ * second_[i], a1 = dt_ * dt_ * second_[i + 1];
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
  const double H0 = -30 * s2 + 60 * s3 - 30 * s4;
  const double H1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
  const double H2 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4);
  const double H3 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4);
  const double H4 = -12 * s2 + 28 * s3 - 15 * s4;
  const double H5 = 30 * s2 - 60 * s3 + 30 * s4;
  return (H0 * x0 + H1 * v0 + H2 * a0 + H3 * a1 + H4 * v1 + H5 * x1) / dt_;
}

double OrbitSegment::energy_drift() const {
  double drift = 0;
  for (double e : energy_) drift = std::max(drift, std::abs(e - energy_.front()));
  return drift;
}

double OrbitSegment::hamilton_residual(const std::function<Vec(const Vec&)>& rhs) const {
  double worst = 0;
  for (int i = 0; i + 1 < nodes(); ++i) {
    double tm = node_time(i) + dt_ / 2;
    Vec x = flat_at(tm);
    Vec r = deriv_at(tm) - rhs(x);
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

namespace {

OrbitSegment integrate_impl(const HamiltonianField& H, const PhaseState& x0,
                            double t0, double dt, int back_steps, int fwd_steps,
                            const IntegrationOptions& opts) {
  const auto* cf = dynamic_cast<const ClosedFormField*>(&H);
  auto rhs = [&](const Vec& v) { return hamilton_rhs(H, v); };

  const int total = back_steps + fwd_steps + 1;
  std::vector<Vec> states(total), derivs(total), seconds;
  if (cf) seconds.resize(total);
  std::vector<double> energy(total);

  states[back_steps] = x0.flat();
  for (int k = back_steps; k > 0; --k)
    states[k - 1] = rk4_step(rhs, states[k], -dt);
  for (int k = back_steps; k + 1 < total; ++k)
    states[k + 1] = rk4_step(rhs, states[k], dt);

  for (int k = 0; k < total; ++k) {
    if (!states[k].allFinite())
      throw Error("integrate_orbit: non-finite state at t=" +
                  std::to_string(t0 + k * dt));
    derivs[k] = rhs(states[k]);
    PhaseState x = PhaseState::from_flat(states[k]);
    energy[k] = H.value(x);
    if (cf) seconds[k] = cf->field_jacobian(x) * derivs[k];
  }

  OrbitSegment orbit(t0, dt, std::move(states), std::move(derivs),
                     std::move(seconds), std::move(energy));
  if (opts.check_energy) {
    const double tol =
        opts.energy_tolerance * std::max(1.0, std::abs(orbit.node_energy(0)));
    if (orbit.energy_drift() > 10 * tol)
      throw Error("integrate_orbit: energy drift " + std::to_string(orbit.energy_drift()) +
                  " exceeds 10x tolerance; increase the step count");
  }
  return orbit;
}

} // namespace

OrbitSegment integrate_orbit(const HamiltonianField& H, const PhaseState& x0,
                             double T, int steps) {
  if (steps < 16) throw Error("integrate_orbit: need at least 16 steps");
  if (T <= 0) throw Error("integrate_orbit: T must be positive");
  IntegrationOptions opts;
  return integrate_impl(H, x0, 0.0, T / steps, 0, steps, opts);
}

OrbitSegment integrate_orbit_centered(const HamiltonianField& H, const PhaseState& x0,
                                      double Tback, double Tfwd,
                                      const IntegrationOptions& opts) {
  const double dt = 1.0 / opts.steps_per_unit;
  const int nb = static_cast<int>(std::ceil(Tback / dt));
  const int nf = static_cast<int>(std::ceil(Tfwd / dt));
  return integrate_impl(H, x0, -nb * dt, dt, nb, nf, opts);
}

FlowMap::FlowMap(VecField field, int substeps)
    : field_(std::move(field)), substeps_(substeps) {
  if (substeps_ < 1) throw Error("FlowMap: substeps must be >= 1");
}

Vec FlowMap::flow(const Vec& start, double t) const {
  Vec x = start;
  const double h = t / substeps_;
  if (t == 0.0) return x;
  for (int k = 0; k < substeps_; ++k) x = rk4_step(field_, x, h);
  return x;
}

std::pair<Vec, Mat> FlowMap::flow_with_jacobian(const Vec& start, double t) const {
  const int n = static_cast<int>(start.size());
  // Augmented state [x | vec(Y)], Y' = DV(x) Y with DV by central differences.
  auto aug_rhs = [&](const Vec& z) {
    Vec x = z.head(n);
    Vec fx = field_(x);
    Mat DV(n, n);
    const double h = 1e-6 * (1.0 + x.cwiseAbs().maxCoeff());
    for (int j = 0; j < n; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      DV.col(j) = (field_(xp) - field_(xm)) / (2 * h);
    }
    Mat Y = Eigen::Map<const Mat>(z.data() + n, n, n);
    Mat Yd = DV * Y;
    Vec out(n + n * n);
    out.head(n) = fx;
    Eigen::Map<Mat>(out.data() + n, n, n) = Yd;
    return out;
  };
  Vec z(n + n * n);
  z.head(n) = start;
  Eigen::Map<Mat>(z.data() + n, n, n) = Mat::Identity(n, n);
  const double h = t / substeps_;
  if (t != 0.0)
    for (int k = 0; k < substeps_; ++k) z = rk4_step(aug_rhs, z, h);
  Vec x = z.head(n);
  Mat Y = Eigen::Map<const Mat>(z.data() + n, n, n);
  return {x, Y};
}

FlowMap reparametrized_flow(const VecField& V, double margin, int substeps) {
  if (margin <= 0) throw Error("reparametrized_flow: margin must be positive");
  VecField scaled = [V, margin](const Vec& q) {
    Vec v = V(q);
    if (v[0] < margin)
      throw Error("flow box not applicable here: V0=" + std::to_string(v[0]) +
                  " below margin " + std::to_string(margin));
    return (v / v[0]).eval();
  };
  return FlowMap(std::move(scaled), substeps);
}

Mat flow_jacobian(const FlowMap& flow, const Vec& start, double t) {
  return flow.flow_with_jacobian(start, t).second;
}

} // namespace orbitnf

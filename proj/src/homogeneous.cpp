#include "orbitnf/homogeneous.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace orbitnf {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::vector<PhaseState> homogeneity_samples(int d, int count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> radius(0.5, 2.0);
  std::vector<PhaseState> out;
  out.reserve(count);
  Tube tube;
  while (static_cast<int>(out.size()) < count) {
    Vec q(d + 1), p(d + 1);
    q[0] = unit(rng) * tube.q0_half;
    for (int i = 1; i <= d; ++i) q[i] = unit(rng) * tube.qstar_radius;
    for (int i = 0; i <= d; ++i) p[i] = unit(rng);
    if (p.norm() < 1e-3) continue;
    p *= radius(rng) / p.norm();
    out.emplace_back(std::move(q), std::move(p));
  }
  return out;
}

} // namespace

HomogeneityCertificate homogeneity_probe(const HamiltonianField& H, double degree,
                                         int samples, unsigned seed, double tol) {
  HomogeneityCertificate cert;
  cert.degree = degree;
  cert.positivity_margin = std::numeric_limits<double>::infinity();
  for (const PhaseState& x : homogeneity_samples(H.dimension(), samples, seed)) {
    const double h = H.value(x);
    const double euler = std::abs(x.p.dot(H.fiber_gradient(x)) - degree * h) /
                         (1.0 + std::abs(h));
    cert.euler_residual = std::max(cert.euler_residual, euler);
    for (double s : {0.5, 2.0}) {
      PhaseState xs(x.q, (s * x.p).eval());
      const double expect = std::pow(s, degree) * h;
      cert.scaling_residual = std::max(
          cert.scaling_residual,
          std::abs(H.value(xs) - expect) / (1.0 + std::abs(expect)));
    }
    // d^2(H^2)/dp^2 = 2 (dH dH^t + H d^2H); exact from the field oracles
    Vec g = H.fiber_gradient(x);
    Mat hess2 = 2.0 * (g * g.transpose() + h * H.fiber_hessian(x));
    Eigen::SelfAdjointEigenSolver<Mat> es((hess2 + hess2.transpose()) / 2);
    cert.positivity_margin = std::min(cert.positivity_margin, es.eigenvalues().minCoeff());
  }
  cert.pass = cert.euler_residual < tol && cert.scaling_residual < tol &&
              cert.positivity_margin > 0;
  return cert;
}

HomogeneityCertificate certify_homogeneous(const HamiltonianField& H, double degree,
                                           int samples, unsigned seed, double tol) {
  HomogeneityCertificate cert = homogeneity_probe(H, degree, samples, seed, tol);
  if (!cert.pass)
    throw Error("not homogeneous of declared degree " + fmt(degree) +
                " (euler residual " + fmt(cert.euler_residual) + ", scaling " +
                fmt(cert.scaling_residual) + ", fiber positivity " +
                fmt(cert.positivity_margin) + ")");
  return cert;
}

// ---------------------------------------------------------------------------

NormalFormReport verify_homogeneous_conditions(const HamiltonianField& H,
                                               const PhaseState& x0, double P0,
                                               double delta, const VerifyOptions& opts) {
  const int d = H.dimension();
  NormalFormReport rep;
  rep.delta_used = delta;

  auto f = [&H](const Vec& v) { return H.value_flat(v); };
  OrbitSegment orbit = integrate_verification_orbit(H, x0, delta, opts.steps_per_unit);

  Vec plevel = Vec::Zero(d + 1);
  plevel[0] = P0;

  double c2 = 0, c9 = 0, c4 = 0, c5 = 0, c10 = 0;
  for (int k = 0; k < opts.grid_points; ++k) {
    const double t = delta * k / (opts.grid_points - 1);
    rep.grid.push_back(t);
    PhaseState xt = orbit.state_at(t);

    c2 = std::max(c2, (xt.q - axis_point(d, t)).cwiseAbs().maxCoeff());
    c9 = std::max(c9, (xt.p - plevel).cwiseAbs().maxCoeff());

    const Vec at = PhaseState(axis_point(d, t), plevel).flat();
    for (int j = 1; j <= d; ++j)
      c4 = std::max(c4, std::abs(fd_partial(f, {pvar(0, d), pvar(j, d)}, at, opts.stencil)));
    for (int i = 0; i <= d; ++i)
      for (int j = 0; j <= d; ++j) {
        double v = std::abs(fd_partial(f, {qvar(i), pvar(j, d)}, at, opts.stencil));
        c10 = std::max(c10, v);
        if (j >= 1) c5 = std::max(c5, v);
      }

    Vec obs(d);
    for (int j = 1; j <= d; ++j)
      obs[j - 1] = fd_partial(f, {qvar(j), pvar(0, d)}, at, opts.stencil);
    rep.obstruction_max = std::max(rep.obstruction_max, obs.cwiseAbs().maxCoeff());
    rep.obstruction_values.push_back(std::move(obs));

    rep.f_drift = std::max(rep.f_drift,
                           std::abs(H.value(PhaseState(axis_point(d, t), plevel)) -
                                    H.value(PhaseState(axis_point(d, 0), plevel))));
  }
  rep.obstruction_vanishes = rep.obstruction_max < opts.tol_deriv;
  rep.conditions = {
      {"orbit-straight", c2, opts.tol_state, c2 < opts.tol_state},
      {"momentum-constant", c9, opts.tol_state, c9 < opts.tol_state},
      {"p0-pstar-block", c4, opts.tol_deriv, c4 < opts.tol_deriv},
      {"q-pstar-block", c5, opts.tol_deriv, c5 < opts.tol_deriv},
      {"qp-block-full", c10, opts.tol_deriv, c10 < opts.tol_deriv},
  };
  return rep;
}

// ---------------------------------------------------------------------------

HomogeneousPipelineResult homogeneous_pipeline(HamPtr H, const PhaseState& x0,
                                               double degree,
                                               const HomogeneousOptions& opts) {
  if (opts.delta <= 0) throw Error("delta must be positive");
  HomogeneityCertificate cert =
      certify_homogeneous(*H, degree, opts.certificate_samples, opts.seed);
  if (H->fiber_gradient(x0).norm() < 1e-10)
    throw Error("critical orbit point: Qdot(0) = 0");

  const double energy = H->value(x0);
  double delta = opts.delta;
  std::vector<std::string> log;
  std::string last_reason;

  for (int attempt = 0; attempt <= opts.max_delta_shrinks; ++attempt) {
    try {
      IntegrationOptions io;
      io.steps_per_unit = opts.steps_per_unit;
      const double T = delta + opts.pad + opts.margin_extra;
      OrbitSegment orbit0 = integrate_orbit_centered(*H, x0, T, T, io);

      StepResult s1 = straighten(H, orbit0, delta, opts.pad);
      log.push_back("straighten: ok");

      // Euler identity: the first straightened momentum component is the
      // constant a H(x0).
      double P0 = s1.orbit.node_state(s1.orbit.index_of_time(0.0)).p[0];
      double p0_constancy = 0;
      for (int i = 0; i < s1.orbit.nodes(); ++i) {
        if (std::abs(s1.orbit.node_time(i)) > delta + opts.pad) continue;
        p0_constancy = std::max(
            p0_constancy, std::abs(s1.orbit.node_state(i).p[0] - degree * energy));
      }
      if (std::abs(P0) < 1e-8)
        throw Error("homogeneous_pipeline: P0(0) = 0, the orbit would be constant");
      log.push_back("P0 constancy residual " + fmt(p0_constancy));

      // shear the transverse momentum away: l = -P*(t)/P0
      std::vector<Vec> ls(s1.orbit.nodes());
      for (int i = 0; i < s1.orbit.nodes(); ++i)
        ls[i] = (-s1.orbit.node_state(i).pstar() / P0).eval();
      SplineVec lspl(s1.orbit.tmin(), s1.orbit.dt(), ls);
      FiberedMap psi2 = homogeneous_map(std::make_shared<ShearBase>(lspl));
      HamPtr H2 = pullback(s1.H, psi2);
      OrbitSegment orbit2 = transport_orbit(s1.orbit, psi2, *H2, 0.0);
      Vec plevel = Vec::Zero(H->n());
      plevel[0] = P0;
      double dev = 0;
      for (int i = 0; i < orbit2.nodes(); ++i)
        dev = std::max(dev, (orbit2.node_state(i).p - plevel).cwiseAbs().maxCoeff());
      if (dev > 1e-8)
        throw Error("homogeneous_pipeline: momentum level residual " + fmt(dev));
      log.push_back("shear: ok");

      StepResult s3 = flow_box_straighten(H2, orbit2, plevel, delta, opts.pad,
                                          opts.flow_box);
      log.push_back("flow_box_straighten: ok");

      FiberedMap psi_total = s1.psi;
      psi_total = compose(psi_total, psi2);
      psi_total = compose(psi_total, s3.psi);

      PhaseState start_final = psi_total.inverse_apply(x0);
      NormalFormReport report =
          verify_homogeneous_conditions(*s3.H, start_final, P0, delta, opts.verify);
      report.delta_used = delta;

      HomogeneousPipelineResult result;
      result.H_original = H;
      result.H_final = s3.H;
      result.psi_total = psi_total;
      result.report = std::move(report);
      result.certificate = cert;
      result.orbit_original = orbit0;
      result.start_final = start_final;
      result.delta_used = delta;
      result.P0 = P0;
      result.p0_constancy = p0_constancy;
      result.log = std::move(log);
      return result;
    } catch (const ShrinkDeltaRequest& e) {
      last_reason = e.what();
      log.push_back("delta " + fmt(delta) + " rejected: " + last_reason);
      delta /= 2;
    }
  }
  throw Error("homogeneous_pipeline: all delta retries failed (" + last_reason + ")");
}

} // namespace orbitnf

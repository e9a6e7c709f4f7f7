#include "orbitnf/normalform.hpp"

#include <algorithm>
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

Mat symmetrized(const Mat& m) { return (m + m.transpose()) / 2.0; }

Mat spd_sqrt(const Mat& A) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(A));
  if (es.eigenvalues().minCoeff() <= 1e-10)
    throw Error("matrix square root: eigenvalue below the SPD floor");
  return es.operatorSqrt();
}

} // namespace

OrbitSegment transport_orbit(const OrbitSegment& orbit, const FiberedMap& step,
                             const HamiltonianField& H_new, double t_keep) {
  const int i0 = orbit.index_of_time(0.0);
  int lo = 0, hi = orbit.nodes() - 1;
  if (t_keep > 0) {
    int k = static_cast<int>(std::floor((t_keep + 1e-12) / orbit.dt()));
    lo = std::max(0, i0 - k);
    hi = std::min(orbit.nodes() - 1, i0 + k);
  }
  std::vector<Vec> states, derivs;
  std::vector<double> energy;
  states.reserve(hi - lo + 1);
  for (int i = lo; i <= hi; ++i) {
    PhaseState x = step.inverse_apply(orbit.node_state(i));
    auto [qd, pd] = hamiltonian_vector_field(H_new, x);
    Vec der(2 * x.n());
    der << qd, pd;
    states.push_back(x.flat());
    derivs.push_back(std::move(der));
    energy.push_back(orbit.node_energy(i));
  }
  return OrbitSegment(orbit.node_time(lo), orbit.dt(), std::move(states),
                      std::move(derivs), {}, std::move(energy));
}

// ---------------------------------------------------------------------------

StepResult straighten(HamPtr H, const OrbitSegment& orbit, double delta, double pad) {
  const int d = H->dimension();
  const int n = d + 1;
  const int i0 = orbit.index_of_time(0.0);

  Vec v0 = orbit.deriv_at(orbit.node_time(i0)).head(n);
  if (v0.norm() < 1e-10)
    throw Error("straighten: critical orbit point (Qdot(0) = 0)");

  Mat v0col = v0;
  Eigen::HouseholderQR<Mat> qr(v0col);
  Mat Q = qr.householderQ();
  Mat N = Q.rightCols(d);

  const int nodes = orbit.nodes();
  std::vector<Vec> y(nodes), dy(nodes), ddy;
  if (orbit.has_second()) ddy.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    y[i] = orbit.node_flat(i).head(n);
    dy[i] = orbit.node_deriv(i).head(n);
    if (orbit.has_second()) ddy[i] = orbit.node_second(i).head(n);
  }

  HermiteCurve curve(orbit.tmin(), orbit.dt(), y, dy, ddy);
  // small overhang so finite-difference probes at the boundary nodes stay legal
  const double t_limit = std::min(-orbit.tmin(), orbit.tmax()) + 0.01;
  auto frame = std::make_shared<FrameBase>(curve, N, t_limit);

  // conditioning of the frame Jacobian over the working range; a sign
  // change of the determinant means the chart folds
  const double range = delta + pad;
  double det_sign = 0;
  for (int k = 0; k <= 32; ++k) {
    double t = -range + 2 * range * k / 32.0;
    Mat J(n, n);
    J.col(0) = curve.deriv(t);
    J.rightCols(d) = N;
    Eigen::JacobiSVD<Mat> svd(J);
    double cond = svd.singularValues()(0) / svd.singularValues()(n - 1);
    if (cond > 100.0)
      throw ShrinkDeltaRequest("straighten: frame condition number " + fmt(cond) +
                               " exceeds 100, shrink delta");
    double det = J.determinant();
    if (k == 0) det_sign = det > 0 ? 1.0 : -1.0;
    if (det * det_sign <= 0)
      throw ShrinkDeltaRequest("straighten: frame chart folds inside the segment, "
                               "shrink delta");
  }

  FiberedMap psi = homogeneous_map(frame);
  HamPtr H1 = pullback(H, psi);
  OrbitSegment orbit1 = transport_orbit(orbit, psi, *H1, 0.0);

  double dev = 0;
  for (int i = 0; i < orbit1.nodes(); ++i) {
    double t = orbit1.node_time(i);
    if (std::abs(t) > range) continue;
    Vec q = orbit1.node_flat(i).head(n);
    q[0] -= t;
    dev = std::max(dev, q.cwiseAbs().maxCoeff());
  }
  if (dev > 1e-8)
    throw ShrinkDeltaRequest("straighten: transported orbit deviates from the axis by " +
                             fmt(dev));
  return {H1, psi, std::move(orbit1)};
}

StepResult kill_momentum(HamPtr H, const OrbitSegment& orbit) {
  const int nodes = orbit.nodes();
  const int i0 = orbit.index_of_time(0.0);
  const double dt = orbit.dt();

  std::vector<double> p0(nodes);
  std::vector<Vec> ps(nodes);
  for (int i = 0; i < nodes; ++i) {
    PhaseState x = orbit.node_state(i);
    p0[i] = x.p[0];
    ps[i] = x.pstar();
  }
  Spline p0spl(orbit.tmin(), dt, p0);
  SplineVec psspl(orbit.tmin(), dt, ps);

  // v' = P0 with v(0) = 0: cumulative Simpson with spline midpoints, which
  // integrates the interpolant exactly.
  std::vector<double> v(nodes, 0.0);
  for (int i = i0; i + 1 < nodes; ++i) {
    double t = orbit.node_time(i);
    v[i + 1] = v[i] + dt / 6.0 *
                          (p0spl.eval(t) + 4.0 * p0spl.eval(t + dt / 2) +
                           p0spl.eval(t + dt));
  }
  for (int i = i0; i > 0; --i) {
    double t = orbit.node_time(i - 1);
    v[i - 1] = v[i] - dt / 6.0 *
                          (p0spl.eval(t) + 4.0 * p0spl.eval(t + dt / 2) +
                           p0spl.eval(t + dt));
  }
  Spline vspl(orbit.tmin(), dt, v);

  auto u = std::make_shared<MomentumKillVertical>(p0spl, psspl, vspl);
  FiberedMap psi = vertical_map(u);
  HamPtr H2 = pullback(H, psi);
  OrbitSegment orbit2 = transport_orbit(orbit, psi, *H2, 0.0);

  double dev = 0;
  for (int i = 0; i < orbit2.nodes(); ++i)
    dev = std::max(dev, orbit2.node_state(i).p.cwiseAbs().maxCoeff());
  if (dev > 1e-8)
    throw Error("kill_momentum: transported momentum remains " + fmt(dev));
  return {H2, psi, std::move(orbit2)};
}

StepResult kill_p0pstar(HamPtr H, const OrbitSegment& orbit) {
  const int d = H->dimension();
  const int nodes = orbit.nodes();
  std::vector<Vec> ls(nodes);
  for (int i = 0; i < nodes; ++i) {
    double t = orbit.node_time(i);
    Mat h = H->fiber_hessian(axis_state(d, t));
    Mat A = symmetrized(h.block(1, 1, d, d));
    Eigen::SelfAdjointEigenSolver<Mat> es(A);
    if (es.eigenvalues().minCoeff() <= 1e-10)
      throw Error("kill_p0pstar: p*p* block not positive definite on the axis");
    Vec C = h.block(1, 0, d, 1);
    ls[i] = A.ldlt().solve(C);
  }
  SplineVec lspl(orbit.tmin(), orbit.dt(), ls);
  FiberedMap psi = homogeneous_map(std::make_shared<ShearBase>(lspl));
  HamPtr H3 = pullback(H, psi);
  OrbitSegment orbit3 = transport_orbit(orbit, psi, *H3, 0.0);

  // the block must vanish on the axis now
  double dev = 0;
  for (double t : {orbit.tmin() / 2, 0.0, orbit.tmax() / 2}) {
    Mat h = H3->fiber_hessian(axis_state(d, t));
    dev = std::max(dev, h.block(1, 0, d, 1).cwiseAbs().maxCoeff());
  }
  if (dev > 1e-8)
    throw Error("kill_p0pstar: residual mixed block " + fmt(dev));
  return {H3, psi, std::move(orbit3)};
}

StepResult flow_box_straighten(HamPtr H, const OrbitSegment& orbit, const Vec& p_level,
                               double delta, double pad, const FlowBoxOptions& opts) {
  const int d = H->dimension();
  PhaseState origin(Vec::Zero(d + 1), p_level);
  Vec Vorigin = H->fiber_gradient(origin);
  if (Vorigin[0] <= 0)
    throw ShrinkDeltaRequest("flow box not applicable here: V0(0) = " + fmt(Vorigin[0]));
  const double margin = opts.guard_fraction * Vorigin[0];

  VecField V = [H, p_level](const Vec& q) {
    return H->fiber_gradient(PhaseState(q, p_level));
  };

  const double a = delta + pad;
  const double r = opts.qstar_radius;
  std::vector<double> lo = {-a}, hi = {a};
  std::vector<int> np = {opts.points_q0};
  const int nq = d == 1 ? opts.points_qstar : (d == 2 ? 13 : 9);
  for (int i = 0; i < d; ++i) {
    lo.push_back(-r);
    hi.push_back(r);
    np.push_back(nq);
  }
  ChebTensor proto(lo, hi, np);

  FlowMap flow = [&]() {
    try {
      return reparametrized_flow(V, margin, opts.substeps);
    } catch (const Error& e) {
      throw ShrinkDeltaRequest(e.what());
    }
  }();

  const std::vector<Vec> cnodes = proto.nodes();
  std::vector<std::vector<double>> vals(d, std::vector<double>(cnodes.size()));
  try {
    for (size_t k = 0; k < cnodes.size(); ++k) {
      Vec start = cnodes[k];
      const double t = start[0];
      start[0] = 0.0;
      Vec out = flow.flow(start, t);
      for (int c = 0; c < d; ++c) vals[c][k] = out[c + 1];
    }
  } catch (const Error& e) {
    throw ShrinkDeltaRequest(e.what());
  }

  std::vector<ChebTensor> comps(d, proto);
  for (int c = 0; c < d; ++c) comps[c].fit(vals[c]);
  auto base = std::make_shared<FlowBoxBase>(comps, p_level);

  // validate the interpolant against the flow it was fitted from
  std::mt19937_64 rng(20240u);
  std::uniform_real_distribution<double> unit(-0.9, 0.9);
  double map_dev = 0, jac_dev = 0;
  for (int k = 0; k < opts.validation_samples; ++k) {
    Vec q(d + 1);
    q[0] = unit(rng) * a;
    for (int i = 1; i <= d; ++i) q[i] = unit(rng) * r;
    Vec start = q;
    start[0] = 0.0;
    auto [end, Y] = flow.flow_with_jacobian(start, q[0]);
    Vec direct = end;
    Vec fitted = base->forward(q);
    map_dev = std::max(map_dev, (fitted.tail(d) - direct.tail(d)).cwiseAbs().maxCoeff());
    Mat J = base->jacobian(q);
    Mat Jblock = J.block(1, 1, d, d);
    jac_dev = std::max(jac_dev, (Jblock - Y.block(1, 1, d, d)).cwiseAbs().maxCoeff());
  }
  if (map_dev > 1e-8 || jac_dev > 1e-6)
    throw Error("flow_box_straighten: interpolation validation failed (map " +
                fmt(map_dev) + ", jacobian " + fmt(jac_dev) + ")");

  FiberedMap psi = homogeneous_map(base);
  HamPtr H4 = pullback(H, psi);
  OrbitSegment orbit4 = transport_orbit(orbit, psi, *H4, a - orbit.dt() / 2);

  return {H4, psi, std::move(orbit4)};
}

// ---------------------------------------------------------------------------

Mat lyapunov_solve(const Mat& A, const Mat& Aprime) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(A));
  const Vec ev = es.eigenvalues();
  if (ev.minCoeff() <= 1e-10)
    throw Error("lyapunov_solve: matrix not positive definite");
  const Mat O = es.eigenvectors();
  Mat X = O.transpose() * symmetrized(Aprime) * O;
  for (int i = 0; i < X.rows(); ++i)
    for (int j = 0; j < X.cols(); ++j) X(i, j) /= (ev[i] + ev[j]);
  return symmetrized(O * X * O.transpose());
}

LyapunovPath metric_path(double t0, double dt, const std::vector<Mat>& A_samples) {
  LyapunovPath path;
  path.t0 = t0;
  path.dt = dt;
  const int nodes = static_cast<int>(A_samples.size());
  if (nodes < 3) throw Error("metric_path: need at least 3 samples");

  const int i0 = static_cast<int>(std::lround(-t0 / dt));
  if (i0 < 0 || i0 >= nodes || std::abs(t0 + i0 * dt) > 1e-9)
    throw Error("metric_path: grid must contain t = 0");
  for (int i = 0; i < nodes; ++i) path.grid.push_back(t0 + i * dt);

  path.A_nodes.reserve(nodes);
  for (const Mat& m : A_samples) path.A_nodes.push_back(symmetrized(m));
  path.A = SplineMat(t0, dt, path.A_nodes);

  path.Aprime_nodes.resize(nodes);
  path.B_nodes.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    path.Aprime_nodes[i] = symmetrized(path.A.deriv(path.grid[i]));
    path.B_nodes[i] = lyapunov_solve(path.A_nodes[i], path.Aprime_nodes[i]);
  }
  path.B = SplineMat(t0, dt, path.B_nodes);

  // M' = B(t) M, M(0) = A(0)^{1/2}, RK4 on the grid with substeps
  path.M_nodes.assign(nodes, Mat());
  path.M_nodes[i0] = spd_sqrt(path.A_nodes[i0]);
  auto field_at = [&](double t, const Mat& M) { return (path.B.eval(t) * M).eval(); };
  auto advance = [&](Mat M, double t, double h) {
    const int sub = 4;
    const double hs = h / sub;
    for (int s = 0; s < sub; ++s) {
      Mat k1 = field_at(t, M);
      Mat k2 = field_at(t + hs / 2, M + (hs / 2) * k1);
      Mat k3 = field_at(t + hs / 2, M + (hs / 2) * k2);
      Mat k4 = field_at(t + hs, M + hs * k3);
      M += (hs / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
      t += hs;
    }
    return M;
  };
  for (int i = i0; i + 1 < nodes; ++i)
    path.M_nodes[i + 1] = advance(path.M_nodes[i], path.grid[i], dt);
  for (int i = i0; i > 0; --i)
    path.M_nodes[i - 1] = advance(path.M_nodes[i], path.grid[i], -dt);
  path.M = SplineMat(t0, dt, path.M_nodes);
  return path;
}

double LyapunovPath::residual_lyapunov() const {
  double worst = 0;
  for (size_t i = 0; i < grid.size(); ++i) {
    Mat r = B_nodes[i] * A_nodes[i] + A_nodes[i] * B_nodes[i] - Aprime_nodes[i];
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

double LyapunovPath::residual_factorization() const {
  double worst = 0;
  for (size_t i = 0; i < grid.size(); ++i) {
    Mat r = M_nodes[i] * M_nodes[i].transpose() - A_nodes[i];
    worst = std::max(worst, r.cwiseAbs().maxCoeff());
  }
  return worst;
}

double LyapunovPath::residual_sqrt0() const {
  int i0 = static_cast<int>(std::lround(-t0 / dt));
  Mat r = M_nodes[i0] - spd_sqrt(A_nodes[i0]);
  return r.cwiseAbs().maxCoeff();
}

NormalizeMetricResult normalize_metric(HamPtr H, const OrbitSegment& orbit,
                                       const LyapunovPath& path) {
  FiberedMap psiM = homogeneous_map(std::make_shared<MetricBase>(path.M));
  HamPtr H_mid = pullback(H, psiM);
  FiberedMap psiB = vertical_map(std::make_shared<QuadraticVertical>(path.B));
  HamPtr H_out = pullback(H_mid, psiB);
  FiberedMap psi = compose(psiM, psiB);
  OrbitSegment orbit_out = transport_orbit(orbit, psi, *H_out, 0.0);
  return {H_out, psi, std::move(orbit_out), H_mid};
}

// ---------------------------------------------------------------------------

bool NormalFormReport::all_pass() const {
  for (const auto& c : conditions)
    if (!c.pass) return false;
  return true;
}

const ConditionRecord& NormalFormReport::condition(const std::string& name) const {
  for (const auto& c : conditions)
    if (c.name == name) return c;
  throw Error("no condition named '" + name + "' in report");
}

Json NormalFormReport::to_json() const {
  Json j;
  Json conds = Json::array();
  for (const auto& c : conditions) {
    Json e;
    e["name"] = c.name;
    e["max_residual"] = c.max_residual;
    e["tolerance"] = c.tolerance;
    e["pass"] = c.pass;
    conds.push_back(e);
  }
  j["conditions"] = conds;
  Json obs;
  Json vals = Json::array();
  for (const Vec& v : obstruction_values) {
    Json row = Json::array();
    for (int i = 0; i < v.size(); ++i) row.push_back(v[i]);
    vals.push_back(row);
  }
  obs["values"] = vals;
  obs["max_abs"] = obstruction_max;
  obs["vanishes"] = obstruction_vanishes;
  j["obstruction"] = obs;
  Json exp;
  exp["f_drift"] = f_drift;
  exp["w_drift"] = w_drift;
  j["expansion"] = exp;
  j["delta_used"] = delta_used;
  j["grid"] = grid;
  return j;
}

namespace {

// FD-only Hamilton right-hand side: the verification path never trusts the
// construction-side oracles.
Vec fd_rhs(const HamiltonianField& H, const Vec& flat) {
  const int n = static_cast<int>(flat.size()) / 2;
  auto f = [&H](const Vec& v) { return H.value_flat(v); };
  Vec out(2 * n);
  for (int i = 0; i < n; ++i) out[i] = fd_first_plain(f, n + i, flat, 1e-5);
  for (int i = 0; i < n; ++i) out[n + i] = -fd_first_plain(f, i, flat, 1e-5);
  return out;
}

} // namespace

OrbitSegment integrate_verification_orbit(const HamiltonianField& H,
                                          const PhaseState& x0, double T,
                                          int steps_per_unit) {
  const int steps = std::max(64, static_cast<int>(std::ceil(T * steps_per_unit)));
  const double dt = T / steps;
  auto rhs = [&H](const Vec& v) { return fd_rhs(H, v); };
  std::vector<Vec> states(steps + 1), derivs(steps + 1);
  std::vector<double> energy(steps + 1);
  states[0] = x0.flat();
  for (int k = 0; k < steps; ++k) states[k + 1] = rk4_step(rhs, states[k], dt);
  for (int k = 0; k <= steps; ++k) {
    derivs[k] = rhs(states[k]);
    energy[k] = H.value(PhaseState::from_flat(states[k]));
  }
  return OrbitSegment(0.0, dt, std::move(states), std::move(derivs), {},
                      std::move(energy));
}

NormalFormReport verify_conditions(const HamiltonianField& H, const PhaseState& x0,
                                   double delta, const VerifyOptions& opts) {
  const int d = H.dimension();
  NormalFormReport rep;
  rep.delta_used = delta;

  OrbitSegment orbit = integrate_verification_orbit(H, x0, delta, opts.steps_per_unit);

  double c2 = 0, c3 = 0, c4 = 0, c5 = 0, c6 = 0;
  rep.obstruction_max = 0;
  auto f = [&H](const Vec& v) { return H.value_flat(v); };

  for (int k = 0; k < opts.grid_points; ++k) {
    const double t = delta * k / (opts.grid_points - 1);
    rep.grid.push_back(t);
    PhaseState xt = orbit.state_at(t);

    Vec dq = xt.q - axis_point(d, t);
    c2 = std::max(c2, dq.cwiseAbs().maxCoeff());
    c3 = std::max(c3, xt.p.cwiseAbs().maxCoeff());

    const Vec at = PhaseState(axis_point(d, t), xt.p).flat();
    for (int j = 1; j <= d; ++j)
      c4 = std::max(c4, std::abs(fd_partial(f, {pvar(0, d), pvar(j, d)}, at,
                                            opts.stencil)));
    for (int i = 0; i <= d; ++i)
      for (int j = 1; j <= d; ++j)
        c5 = std::max(c5, std::abs(fd_partial(f, {qvar(i), pvar(j, d)}, at,
                                              opts.stencil)));
    for (int i = 1; i <= d; ++i)
      for (int j = i; j <= d; ++j) {
        double v = fd_partial(f, {pvar(i, d), pvar(j, d)}, at, opts.stencil);
        c6 = std::max(c6, std::abs(v - (i == j ? 1.0 : 0.0)));
      }

    const Vec at0 = axis_state(d, t).flat();
    Vec obs(d);
    for (int j = 1; j <= d; ++j)
      obs[j - 1] = fd_partial(f, {qvar(j), pvar(0, d)}, at0, opts.stencil);
    rep.obstruction_max = std::max(rep.obstruction_max, obs.cwiseAbs().maxCoeff());
    rep.obstruction_values.push_back(std::move(obs));

    rep.f_drift = std::max(
        rep.f_drift, std::abs(H.value(axis_state(d, t)) - H.value(axis_state(d, 0))));
    rep.w_drift = std::max(
        rep.w_drift, std::abs(fd_partial(f, {pvar(0, d)}, at0, opts.stencil) - 1.0));
  }
  rep.obstruction_vanishes = rep.obstruction_max < opts.tol_deriv;

  rep.conditions = {
      {"orbit-straight", c2, opts.tol_state, c2 < opts.tol_state},
      {"momentum-zero", c3, opts.tol_state, c3 < opts.tol_state},
      {"p0-pstar-block", c4, opts.tol_deriv, c4 < opts.tol_deriv},
      {"q-pstar-block", c5, opts.tol_deriv, c5 < opts.tol_deriv},
      {"pstar-identity", c6, opts.tol_deriv, c6 < opts.tol_deriv},
  };
  return rep;
}

std::vector<Vec> obstruction(const HamiltonianField& H, const std::vector<double>& ts,
                             const DerivativeStencil& stencil) {
  const int d = H.dimension();
  auto f = [&H](const Vec& v) { return H.value_flat(v); };
  std::vector<Vec> out;
  out.reserve(ts.size());
  for (double t : ts) {
    const Vec at = axis_state(d, t).flat();
    Vec row(d);
    for (int j = 1; j <= d; ++j)
      row[j - 1] = fd_partial(f, {qvar(j), pvar(0, d)}, at, stencil);
    out.push_back(std::move(row));
  }
  return out;
}

bool obstruction_vanishes(const std::vector<Vec>& values, double tol) {
  for (const Vec& v : values)
    if (v.cwiseAbs().maxCoeff() >= tol) return false;
  return true;
}

// ---------------------------------------------------------------------------

PipelineResult normal_form_pipeline(HamPtr H, const PhaseState& x0,
                                    const PipelineOptions& opts) {
  if (opts.delta <= 0) throw Error("delta must be positive");
  if (x0.d() != H->dimension()) throw Error("initial condition dimension mismatch");
  if (H->fiber_gradient(x0).norm() < 1e-10)
    throw Error("critical orbit point: Qdot(0) = 0");

  double delta = opts.delta;
  std::vector<std::string> log;
  std::string last_reason;

  for (int attempt = 0; attempt <= opts.max_delta_shrinks; ++attempt) {
    try {
      Tube tube{delta + opts.pad, 0.25, 1.0};
      double margin = convexity_margin(*H, tube, static_cast<int>(opts.convexity_samples),
                                       2024u + opts.seed);
      if (margin <= 0)
        throw Error("field is not convex on the working tube (margin " + fmt(margin) + ")");

      IntegrationOptions io;
      io.steps_per_unit = opts.steps_per_unit;
      const double T = delta + opts.pad + opts.margin_extra;
      OrbitSegment orbit0 = integrate_orbit_centered(*H, x0, T, T, io);

      StepResult s1 = straighten(H, orbit0, delta, opts.pad);
      log.push_back("straighten: ok");
      StepResult s2 = kill_momentum(s1.H, s1.orbit);
      log.push_back("kill_momentum: ok");
      StepResult s3 = kill_p0pstar(s2.H, s2.orbit);
      log.push_back("kill_p0pstar: ok");
      StepResult s4 = flow_box_straighten(s3.H, s3.orbit, Vec::Zero(H->n()), delta,
                                          opts.pad, opts.flow_box);
      log.push_back("flow_box_straighten: ok");

      const int d = H->dimension();
      std::vector<Mat> As;
      As.reserve(s4.orbit.nodes());
      for (int i = 0; i < s4.orbit.nodes(); ++i) {
        Mat h = s4.H->fiber_hessian(axis_state(d, s4.orbit.node_time(i)));
        As.push_back(h.block(1, 1, d, d));
      }
      LyapunovPath path = metric_path(s4.orbit.tmin(), s4.orbit.dt(), As);
      log.push_back("metric_path: lyapunov residual " + fmt(path.residual_lyapunov()));
      NormalizeMetricResult s6 = normalize_metric(s4.H, s4.orbit, path);
      log.push_back("normalize_metric: ok");

      FiberedMap psi_total = s1.psi;
      psi_total = compose(psi_total, s2.psi);
      psi_total = compose(psi_total, s3.psi);
      psi_total = compose(psi_total, s4.psi);
      psi_total = compose(psi_total, s6.psi);

      PhaseState start_final = psi_total.inverse_apply(x0);
      NormalFormReport report = verify_conditions(*s6.H, start_final, delta, opts.verify);
      report.delta_used = delta;

      PipelineResult result;
      result.H_original = H;
      result.H_final = s6.H;
      result.psi_total = psi_total;
      result.orbit_original = orbit0;
      result.orbit_final = s6.orbit;
      result.start_final = start_final;
      result.report = std::move(report);
      result.delta_used = delta;
      result.log = std::move(log);
      return result;
    } catch (const ShrinkDeltaRequest& e) {
      last_reason = e.what();
      log.push_back("delta " + fmt(delta) + " rejected: " + last_reason);
      delta /= 2;
    }
  }
  throw Error("normal_form_pipeline: all delta retries failed (" + last_reason + ")");
}

// ---------------------------------------------------------------------------

FiberedMap random_admissible_map(unsigned seed, double /*delta*/, AdmissibleKind kind,
                                 int d) {
  std::mt19937_64 rng(0x5eed0000u + seed);
  std::uniform_real_distribution<double> small(-0.3, 0.3);
  std::uniform_real_distribution<double> tiny(-0.12, 0.12);
  auto qstar = [&]() { return 1 + static_cast<int>(rng() % d); };

  if (kind == AdmissibleKind::VerticalFlat) {
    // u = sum of monomials with at least two q* factors: du and the mixed
    // second derivatives with q0 vanish identically on the axis.
    ExprPtr u = expr_const(0);
    for (int k = 0; k < 3; ++k) {
      ExprPtr m = expr_mul(expr_var(qstar()), expr_var(qstar()));
      switch (rng() % 3) {
        case 1: m = expr_mul(expr_var(0), m); break;          // q0 q*_i q*_j
        case 2: m = expr_mul(expr_var(qstar()), m); break;    // q*_k q*_i q*_j
        default: break;                                       // q*_i q*_j
      }
      u = expr_add(u, expr_mul(expr_const(small(rng)), m));
    }
    return vertical_map(std::make_shared<ExprVertical>(d, u));
  }

  // Homogeneous with block-diagonal differential along the axis: the first
  // component is exactly q0 and the q* block is Z(q0) = I + a + q0 b plus a
  // small quadratic in q*.
  const double scale = 1.0 / d;
  std::vector<ExprPtr> comps(d + 1);
  comps[0] = expr_var(0);
  for (int i = 1; i <= d; ++i) {
    ExprPtr e = expr_var(i);
    for (int j = 1; j <= d; ++j) {
      double a = tiny(rng) * scale;
      double b = tiny(rng) * scale;
      e = expr_add(e, expr_mul(expr_const(a), expr_var(j)));
      e = expr_add(e, expr_mul(expr_const(b), expr_mul(expr_var(0), expr_var(j))));
    }
    double c = tiny(rng) * scale;
    e = expr_add(e, expr_mul(expr_const(c), expr_mul(expr_var(qstar()), expr_var(qstar()))));
    comps[i] = e;
  }
  return homogeneous_map(std::make_shared<ExprBase>(d, comps));
}

} // namespace orbitnf

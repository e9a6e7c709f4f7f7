#include <doctest.h>

#include <cmath>

#include "orbitnf/dynamics.hpp"

using namespace orbitnf;

namespace {

PhaseState st(std::initializer_list<double> q, std::initializer_list<double> p) {
  Vec vq(static_cast<int>(q.size())), vp(static_cast<int>(p.size()));
  int i = 0;
  for (double v : q) vq[i++] = v;
  i = 0;
  for (double v : p) vp[i++] = v;
  return PhaseState(vq, vp);
}

} // namespace

TEST_CASE("hamiltonian_vector_field on the builtins") {
  auto Hf = make_builtin("free");
  auto [qd, pd] = hamiltonian_vector_field(*Hf, st({0, 0}, {1, 0}));
  CHECK(qd[0] == doctest::Approx(1.0));
  CHECK(qd[1] == doctest::Approx(0.0));
  CHECK(pd.norm() == doctest::Approx(0.0));

  auto Ho = make_builtin("osc");
  auto [qo, po] = hamiltonian_vector_field(*Ho, st({0, 0.1}, {1, 0}));
  CHECK(qo[0] == doctest::Approx(1.0));
  CHECK(po[1] == doctest::Approx(-0.1));

  auto Hc = make_builtin("cross");
  auto [qc, pc] = hamiltonian_vector_field(*Hc, st({0, 0}, {1, 0}));
  CHECK(qc[0] == doctest::Approx(1.0));
  CHECK(qc[1] == doctest::Approx(0.0));
  CHECK(pc[0] == doctest::Approx(0.0));
  CHECK(pc[1] == doctest::Approx(-0.1)); // -dH/dq1 = -eps*p0
}

TEST_CASE("integrate_orbit: free particle is exact") {
  auto H = make_builtin("free");
  OrbitSegment orbit = integrate_orbit(*H, builtin_entry("free").start, 1.0, 64);
  for (double t : {0.25, 0.5, 1.0}) {
    PhaseState x = orbit.state_at(t);
    CHECK(std::abs(x.q[0] - t) < 1e-13);
    CHECK(std::abs(x.q[1]) < 1e-13);
    CHECK(std::abs(x.p[0] - 1) < 1e-13);
    CHECK(std::abs(x.p[1]) < 1e-13);
  }
}

TEST_CASE("integrate_orbit: harmonic closed form") {
  auto H = make_builtin("osc");
  OrbitSegment orbit = integrate_orbit(*H, builtin_entry("osc").start, 1.0, 512);
  PhaseState x1 = orbit.state_at(1.0);
  CHECK(std::abs(x1.q[1] - 0.1 * std::cos(1.0)) < 1e-8);
  CHECK(std::abs(x1.p[1] + 0.1 * std::sin(1.0)) < 1e-8);
}

TEST_CASE("integrate_orbit: aniso axis is invariant") {
  auto H = make_builtin("aniso");
  OrbitSegment orbit = integrate_orbit(*H, builtin_entry("aniso").start, 1.0, 256);
  for (int i = 0; i < orbit.nodes(); ++i) {
    PhaseState x = orbit.node_state(i);
    CHECK(std::abs(x.q[0] - orbit.node_time(i)) < 1e-12);
    CHECK(std::abs(x.q[1]) < 1e-12);
    CHECK(std::abs(x.p[0] - 1) < 1e-12);
    CHECK(std::abs(x.p[1]) < 1e-12);
  }
}

TEST_CASE("energy conservation on builtins") {
  for (const char* name : {"free", "aniso", "cross", "osc"}) {
    auto H = make_builtin(name);
    OrbitSegment orbit = integrate_orbit(*H, builtin_entry(name).start, 1.0, 512);
    CHECK_MESSAGE(orbit.energy_drift() <= 1e-8, name);
  }
}

TEST_CASE("RK4 convergence order on osc") {
  auto H = make_builtin("osc");
  PhaseState x0 = builtin_entry("osc").start;
  auto endpoint_error = [&](int steps) {
    OrbitSegment orbit = integrate_orbit(*H, x0, 1.0, steps);
    PhaseState x = orbit.state_at(1.0);
    Vec exact(4);
    exact << 1.0, 0.1 * std::cos(1.0), 1.0, -0.1 * std::sin(1.0);
    return (x.flat() - exact).norm();
  };
  double e16 = endpoint_error(16);
  double e32 = endpoint_error(32);
  double factor = e16 / e32;
  CHECK(factor >= 12.0);
  CHECK(factor <= 20.0);
}

TEST_CASE("hamilton residual of dense output") {
  auto H = make_builtin("osc");
  OrbitSegment orbit = integrate_orbit(*H, builtin_entry("osc").start, 1.0, 256);
  auto rhs = [&](const Vec& flat) {
    auto [qd, pd] = hamiltonian_vector_field(*H, PhaseState::from_flat(flat));
    Vec out(4);
    out << qd, pd;
    return out;
  };
  CHECK(orbit.hamilton_residual(rhs) < 1e-8);
}

TEST_CASE("centered integration covers both sides") {
  auto H = make_builtin("cross");
  IntegrationOptions opts;
  OrbitSegment orbit = integrate_orbit_centered(*H, builtin_entry("cross").start, 0.8, 0.8, opts);
  CHECK(orbit.tmin() <= -0.8);
  CHECK(orbit.tmax() >= 0.8);
  int i0 = orbit.index_of_time(0.0);
  CHECK((orbit.node_state(i0).flat() - builtin_entry("cross").start.flat()).norm() < 1e-15);
}

TEST_CASE("reparametrized flow") {
  // V = e0: identity transport.
  VecField Ve0 = [](const Vec& q) {
    Vec v = Vec::Zero(q.size());
    v[0] = 1.0;
    return v;
  };
  FlowMap f0 = reparametrized_flow(Ve0, 0.1);
  Vec start(2);
  start << 0.0, 0.37;
  Vec out = f0.flow(start, 0.7);
  CHECK(std::abs(out[0] - 0.7) < 1e-12);
  CHECK(std::abs(out[1] - 0.37) < 1e-12);

  // V = (1, q1): q1 grows like e^t (scalar linear ODE oracle).
  VecField Vlin = [](const Vec& q) {
    Vec v(2);
    v << 1.0, q[1];
    return v;
  };
  FlowMap f1 = reparametrized_flow(Vlin, 0.1);
  Vec s1(2);
  s1 << 0.0, 0.2;
  Vec o1 = f1.flow(s1, 1.0);
  CHECK(std::abs(o1[0] - 1.0) < 1e-10);
  CHECK(std::abs(o1[1] - 0.2 * std::exp(1.0)) < 1e-8);

  // V = (2, 0) reparametrizes to (1, 0).
  VecField V2 = [](const Vec& q) {
    Vec v = Vec::Zero(q.size());
    v[0] = 2.0;
    return v;
  };
  FlowMap f2 = reparametrized_flow(V2, 0.1);
  Vec o2 = f2.flow(start, 0.5);
  CHECK(std::abs(o2[0] - 0.5) < 1e-12);
  CHECK(std::abs(o2[1] - 0.37) < 1e-12);

  // guard violation
  VecField Vbad = [](const Vec& q) {
    Vec v(2);
    v << q[0], 1.0; // V0 = q0 vanishes at the start
    return v;
  };
  FlowMap fb = reparametrized_flow(Vbad, 0.1);
  CHECK_THROWS_WITH_AS(fb.flow(start, 0.5), doctest::Contains("flow box not applicable"),
                       Error);
}

TEST_CASE("flow invertibility") {
  VecField V = [](const Vec& q) {
    Vec v(2);
    v << 1.0, std::sin(q[0]) + 0.3 * q[1];
    return v;
  };
  FlowMap f(V, 32);
  Vec start(2);
  start << 0.1, -0.2;
  Vec there = f.flow(start, 0.8);
  Vec back = f.flow(there, -0.8);
  CHECK((back - start).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("flow_jacobian: variational equation") {
  VecField Ve0 = [](const Vec& q) {
    Vec v = Vec::Zero(q.size());
    v[0] = 1.0;
    return v;
  };
  FlowMap f0(Ve0, 16);
  Vec start = Vec::Zero(2);
  Mat J0 = flow_jacobian(f0, start, 0.5);
  CHECK((J0 - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);

  VecField Vlin = [](const Vec& q) {
    Vec v(2);
    v << 1.0, q[1];
    return v;
  };
  FlowMap f1(Vlin, 64);
  Mat J1 = flow_jacobian(f1, start, 1.0);
  CHECK(std::abs(J1(0, 0) - 1.0) < 1e-9);
  CHECK(std::abs(J1(1, 1) - std::exp(1.0)) < 1e-8);
  CHECK(std::abs(J1(0, 1)) < 1e-9);
  CHECK(std::abs(J1(1, 0)) < 1e-9);
  CHECK(J1.determinant() > 0);

  // variational vs finite-difference Jacobian of the flow itself
  VecField Van = [](const Vec& q) {
    Vec v(2);
    v << 1.0 + 0.2 * q[1] * q[1], 0.4 * q[0];
    return v;
  };
  FlowMap fa(Van, 32);
  Vec s(2);
  s << 0.05, -0.1;
  Mat Jv = flow_jacobian(fa, s, 0.6);
  const double h = 1e-6;
  Mat Jfd(2, 2);
  for (int i = 0; i < 2; ++i) {
    Vec sp = s, sm = s;
    sp[i] += h;
    sm[i] -= h;
    Jfd.col(i) = (fa.flow(sp, 0.6) - fa.flow(sm, 0.6)) / (2 * h);
  }
  CHECK((Jv - Jfd).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("too few steps for a stiff field is reported as energy drift") {
  auto H = parse_hamiltonian("0.5*(p0^2+p1^2)+50*q1^2", 1);
  Vec q(2), p(2);
  q << 0, 0.3;
  p << 1, 0;
  CHECK_THROWS_WITH_AS(integrate_orbit(*H, PhaseState(q, p), 2.0, 32),
                       doctest::Contains("energy drift"), Error);
  CHECK_THROWS_AS(integrate_orbit(*H, PhaseState(q, p), 2.0, 8), Error); // steps < 16
}

TEST_CASE("variational Jacobian on a field derived from aniso") {
  // V(q) = dH/dp of aniso at a fixed momentum level
  auto H = make_builtin("aniso");
  Vec pbar(2);
  pbar << 1.0, 0.3;
  VecField V = [&](const Vec& q) { return H->fiber_gradient(PhaseState(q, pbar)); };
  FlowMap f(V, 48);
  Vec s(2);
  s << 0.0, 0.05;
  Mat Jv = flow_jacobian(f, s, 0.5);
  const double h = 1e-6;
  Mat Jfd(2, 2);
  for (int i = 0; i < 2; ++i) {
    Vec sp = s, sm = s;
    sp[i] += h;
    sm[i] -= h;
    Jfd.col(i) = (f.flow(sp, 0.5) - f.flow(sm, 0.5)) / (2 * h);
  }
  CHECK((Jv - Jfd).cwiseAbs().maxCoeff() < 1e-6);
}

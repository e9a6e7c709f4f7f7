#include <doctest.h>

#include <cmath>

#include "orbitnf/homogeneous.hpp"

using namespace orbitnf;

TEST_CASE("certify_homogeneous: quadratic kinetic energy") {
  auto H = make_builtin("free");
  HomogeneityCertificate cert = certify_homogeneous(*H, 2.0);
  CHECK(cert.pass);
  CHECK(cert.euler_residual < 1e-12);
  CHECK(cert.scaling_residual < 1e-12);
  CHECK(cert.positivity_margin > 0);
}

TEST_CASE("certify_homogeneous: degree-1 metric norm") {
  auto H = make_builtin("riem1");
  HomogeneityCertificate cert = certify_homogeneous(*H, 1.0);
  CHECK(cert.pass);
  CHECK(cert.euler_residual < 1e-8);
  CHECK(cert.scaling_residual < 1e-8);
  CHECK(cert.positivity_margin > 0);
}

TEST_CASE("certify_homogeneous rejects a potential term") {
  // Euler defect of 1/2 |p|^2 + q1 at degree 2 is exactly -2 q1.
  auto H = parse_hamiltonian("0.5*(p0^2+p1^2)+q1", 1);
  HomogeneityCertificate probe = homogeneity_probe(*H, 2.0);
  CHECK_FALSE(probe.pass);
  CHECK(probe.euler_residual > 0.01);
  CHECK_THROWS_WITH_AS(certify_homogeneous(*H, 2.0),
                       doctest::Contains("not homogeneous of declared degree"), Error);

  // osc has a potential too (drives the CLI error path)
  auto Hosc = make_builtin("osc");
  CHECK_THROWS_AS(certify_homogeneous(*Hosc, 2.0), Error);
}

TEST_CASE("flat norm: momentum and energy constants") {
  auto H = parse_hamiltonian("sqrt(p0^2+p1^2)", 1);
  HomogeneityCertificate cert = certify_homogeneous(*H, 1.0);
  CHECK(cert.pass);
  Vec q = Vec::Zero(2), p(2);
  p << 1, 0;
  PhaseState x0(q, p);
  CHECK(H->value(x0) == doctest::Approx(1.0));
  // P0 = a H along the orbit (here trivially: straight line)
  HomogeneousOptions opts;
  opts.delta = 0.4;
  HomogeneousPipelineResult r = homogeneous_pipeline(H, x0, 1.0, opts);
  CHECK(r.P0 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(r.p0_constancy < 1e-8);
  for (const auto& c : r.report.conditions) {
    INFO(c.name, " residual ", c.max_residual);
    CHECK(c.pass);
  }
}

TEST_CASE("quadratic kinetic: P0 = 2H at the canonical start") {
  auto H = make_builtin("free");
  PhaseState x0 = builtin_entry("free").start;
  CHECK(H->value(x0) == doctest::Approx(0.5));
  HomogeneousOptions opts;
  opts.delta = 0.4;
  HomogeneousPipelineResult r = homogeneous_pipeline(H, x0, 2.0, opts);
  CHECK(r.P0 == doctest::Approx(2.0 * 0.5).epsilon(1e-10));
  CHECK(r.p0_constancy < 1e-8);
}

TEST_CASE("riem1 pipeline reaches the homogeneous normal form") {
  auto H = make_builtin("riem1");
  PhaseState x0 = builtin_entry("riem1").start;
  HomogeneousOptions opts;
  opts.delta = 0.4;
  HomogeneousPipelineResult r = homogeneous_pipeline(H, x0, 1.0, opts);

  for (const auto& c : r.report.conditions) {
    INFO(c.name, " residual ", c.max_residual);
    CHECK(c.pass);
  }
  CHECK(r.p0_constancy < 1e-8);
  // P0 = a H(x0) = sqrt(1.04), the transported first momentum component
  CHECK(r.P0 == doctest::Approx(std::sqrt(1.04)).epsilon(1e-9));

  // psi_total is homogeneous only: the zero section maps to the zero section
  // exactly
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-0.2, 0.2);
  for (int k = 0; k < 20; ++k) {
    Vec q(2);
    q << unif(rng) * 2, unif(rng);
    PhaseState z(q, Vec::Zero(2));
    PhaseState y = r.psi_total.apply(z);
    CHECK(y.p.cwiseAbs().maxCoeff() == 0.0);
  }

  // and every factor passes the symplectic check
  CHECK(check_symplectic(r.psi_total,
                         sample_tube(Tube{0.45, 0.2, 0.9}, 1, 60, 12)) < 1e-8);
}

TEST_CASE("riem1 conditions before the pipeline") {
  auto H = make_builtin("riem1");
  PhaseState x0 = builtin_entry("riem1").start;
  NormalFormReport rep = verify_homogeneous_conditions(*H, x0, x0.p[0], 0.4);
  // the raw orbit curves away from the axis and carries transverse momentum
  CHECK_FALSE(rep.condition("orbit-straight").pass);
  CHECK_FALSE(rep.condition("momentum-constant").pass);
  CHECK(rep.condition("momentum-constant").max_residual >= 0.19);
}

TEST_CASE("automatic conditions come from homogeneity, not extra steps") {
  // after the shear, the p0/p* block and the q/p0 column vanish without a
  // dedicated construction step
  auto H = make_builtin("riem1");
  PhaseState x0 = builtin_entry("riem1").start;
  HomogeneousOptions opts;
  opts.delta = 0.4;
  HomogeneousPipelineResult r = homogeneous_pipeline(H, x0, 1.0, opts);
  auto f = [&](const Vec& v) { return r.H_final->value_flat(v); };
  Vec plevel = Vec::Zero(2);
  plevel[0] = r.P0;
  for (double t : {0.0, 0.2, 0.4}) {
    Vec at = PhaseState(axis_point(1, t), plevel).flat();
    CHECK(std::abs(fd_partial(f, {pvar(0, 1), pvar(1, 1)}, at, {})) < 1e-6);
    CHECK(std::abs(fd_partial(f, {qvar(0), pvar(0, 1)}, at, {})) < 1e-6);
    CHECK(std::abs(fd_partial(f, {qvar(1), pvar(0, 1)}, at, {})) < 1e-6);
  }
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "orbitnf/normalform.hpp"
#include "orbitnf/transfer.hpp"

using namespace orbitnf;

namespace {

// The closed-form normal-form representative of the free particle.
HamPtr free_normal() { return parse_hamiltonian("0.5*((p0+1)^2+p1^2)", 1); }

const PipelineResult& aniso_pipeline() {
  static PipelineResult r = [] {
    PipelineOptions opts;
    opts.delta = 0.5;
    return normal_form_pipeline(make_builtin("aniso"), builtin_entry("aniso").start,
                                opts);
  }();
  return r;
}

} // namespace

TEST_CASE("maupertuis_normalize: closed-form expansion") {
  auto H = free_normal();
  HamPtr Ht = maupertuis_normalize(H);
  // algebraic oracle: H(0) = 1/2, w = 1, so Ht = p0 + p0^2/2 + p1^2/2
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (int k = 0; k < 30; ++k) {
    Vec q(2), p(2);
    q << unif(rng), unif(rng);
    p << unif(rng), unif(rng);
    PhaseState x(q, p);
    double expected = p[0] + 0.5 * p[0] * p[0] + 0.5 * p[1] * p[1];
    CHECK(Ht->value(x) == doctest::Approx(expected).epsilon(1e-13));
  }
  MaupertuisDiagnostics diag = maupertuis_diagnostics(*Ht, 0.5);
  CHECK(diag.value_drift < 1e-10);
  CHECK(diag.slope_drift < 1e-10);
}

TEST_CASE("maupertuis_normalize is idempotent once normalized") {
  auto H = free_normal();
  HamPtr Ht = maupertuis_normalize(H);
  HamPtr Htt = maupertuis_normalize(Ht);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-0.4, 0.4);
  for (int k = 0; k < 20; ++k) {
    Vec q(2), p(2);
    q << unif(rng), unif(rng);
    p << unif(rng), unif(rng);
    PhaseState x(q, p);
    CHECK(Htt->value(x) == doctest::Approx(Ht->value(x)).epsilon(1e-12));
  }
}

TEST_CASE("maupertuis weight guard") {
  auto H = make_builtin("free"); // w(q) = dH/dp0 (q, 0) = 0
  HamPtr Ht = maupertuis_normalize(H);
  CHECK_THROWS_WITH_AS(Ht->value(axis_state(1, 0.1)), doctest::Contains("margin"),
                       Error);
}

TEST_CASE("maupertuis diagnostics on the aniso pipeline output") {
  const PipelineResult& r = aniso_pipeline();
  HamPtr Ht = maupertuis_normalize(r.H_final);
  MaupertuisDiagnostics diag = maupertuis_diagnostics(*Ht, r.delta_used);
  CHECK(diag.value_drift < 1e-6);
  CHECK(diag.slope_drift < 1e-6);
}

TEST_CASE("section_map: free-shell closed forms") {
  auto H = free_normal();
  // the orbit itself
  Vec y0 = Vec::Zero(2);
  Vec out = section_map(*H, 0.5, y0, 0.5);
  CHECK(out.cwiseAbs().maxCoeff() < 1e-10);

  // shifted transverse momentum: q1(delta) = p1 delta / sqrt(1 - p1^2)
  Vec y1(2);
  y1 << 0.0, 0.1;
  Vec out1 = section_map(*H, 0.5, y1, 0.5);
  double expected = 0.1 * 0.5 / std::sqrt(1 - 0.01);
  CHECK(out1[0] == doctest::Approx(expected).epsilon(1e-7));
  CHECK(out1[1] == doctest::Approx(0.1).epsilon(1e-10));

  // energy conservation along the shot
  Vec xe = section_event_state(*H, 0.5, y1, 0.5);
  CHECK(std::abs(H->value(PhaseState::from_flat(xe)) - 0.5) < 1e-8);

  // unreachable energy reports a completion failure
  CHECK_THROWS_AS(section_map(*H, -5.0, y0, 0.5), Error);
}

TEST_CASE("linearize_transfer: free particle shear") {
  auto H = free_normal();
  TransferMatrix T = linearize_transfer(*H, 0.5, 0.5);
  Mat expected(2, 2);
  expected << 1.0, 0.5, 0.0, 1.0;
  CHECK((T.L - expected).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(T.symplecticity_residual < 1e-6);

  // delta -> 0 gives the identity
  TransferMatrix T0 = linearize_transfer(*H, 0.5, 1e-3);
  CHECK((T0.L - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 2e-3);
}

TEST_CASE("reparam invariance: free particle") {
  auto H = free_normal();
  ReparamCheck rc = reparam_invariance_check(H, 0.5);
  CHECK(rc.difference < 1e-5);
  CHECK(rc.L_H.symplecticity_residual < 1e-6);
  CHECK(rc.L_Ht.symplecticity_residual < 1e-6);
  CHECK(rc.surface_coincidence < 1e-9);
}

TEST_CASE("reparam invariance: idempotent case has only FD noise") {
  auto H = free_normal();
  HamPtr Ht = maupertuis_normalize(H);
  ReparamCheck rc = reparam_invariance_check(Ht, 0.5);
  CHECK(rc.difference < 1e-6);
}

TEST_CASE("reparam invariance on the aniso pipeline output") {
  const PipelineResult& r = aniso_pipeline();
  ReparamCheck rc = reparam_invariance_check(r.H_final, r.delta_used);
  CHECK(rc.difference < 1e-5);
  CHECK(rc.L_H.symplecticity_residual < 1e-6);
  CHECK(rc.L_Ht.symplecticity_residual < 1e-6);
}

TEST_CASE("mane experiment: identity is exact, effect is linear") {
  auto H = free_normal();
  std::vector<double> eps = {1e-3, 1e-2, 1e-1};
  auto rows = mane_perturbation_experiment(H, "0.5*q1^2", eps, 0.5);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    INFO("eps = ", row.eps);
    CHECK(row.identity_residual < 1e-5);
    CHECK(row.symplecticity_1 < 1e-6);
    CHECK(row.symplecticity_2 < 1e-6);
  }
  CHECK(rows[1].effect_size > 1e-3);
  CHECK(rows[1].effect_size > 10 * rows[1].identity_residual);
  // effect grows linearly in eps (slope constant within 20%)
  double s1 = rows[0].effect_size / rows[0].eps;
  double s2 = rows[1].effect_size / rows[1].eps;
  CHECK(std::abs(s2 - s1) / s1 < 0.2);

  // g = 0 reduces to the plain reparametrization check
  auto zero_rows = mane_perturbation_experiment(H, "0*q1", {1e-2}, 0.5);
  ReparamCheck rc = reparam_invariance_check(H, 0.5);
  CHECK(zero_rows[0].identity_residual ==
        doctest::Approx(rc.difference).epsilon(1e-6));

  // momentum-dependent perturbations are rejected
  CHECK_THROWS_WITH_AS(mane_perturbation_experiment(H, "q1*p0", {1e-2}, 0.5),
                       doctest::Contains("potential"), Error);
}

TEST_CASE("section error paths: tangential crossing and time budget") {
  // the axis deceleration stalls the shot just at the section
  auto H = parse_hamiltonian("p0+0.5*p0^2+0.5*p1^2+2.2*q0", 1);
  Vec y0 = Vec::Zero(2);
  CHECK_THROWS_WITH_AS(section_map(*H, 0.0, y0, 0.227),
                       doctest::Contains("tangential"), Error);
  CHECK_THROWS_WITH_AS(section_map(*H, 0.0, y0, 0.3),
                       doctest::Contains("time budget"), Error);
}

TEST_CASE("transfer machinery in two transverse dimensions") {
  auto H = parse_hamiltonian("0.5*((p0+1)^2+p1^2+p2^2)", 2);
  const double delta = 0.5;
  TransferMatrix T = linearize_transfer(*H, 0.5, delta);
  Mat expected = Mat::Identity(4, 4);
  expected(0, 2) = delta;
  expected(1, 3) = delta;
  CHECK((T.L - expected).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(T.symplecticity_residual < 1e-6);

  ReparamCheck rc = reparam_invariance_check(H, delta);
  CHECK(rc.difference < 1e-5);
}

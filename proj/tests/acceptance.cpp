// Acceptance suite: runs every stated criterion at its stated tolerance and
// prints one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "orbitnf/homogeneous.hpp"
#include "orbitnf/normalform.hpp"
#include "orbitnf/transfer.hpp"
#include "test_util.hpp"

using namespace orbitnf;

namespace {

int failures = 0;

void report(int id, const std::string& label, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, label.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PipelineRun {
  PipelineResult result;
  double seconds;
};

std::map<std::string, PipelineRun>& pipeline_cache() {
  static std::map<std::string, PipelineRun> cache;
  return cache;
}

const PipelineRun& run_pipeline(const std::string& name) {
  auto& cache = pipeline_cache();
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  PipelineOptions opts;
  opts.delta = builtin_entry(name).delta;
  auto t0 = std::chrono::steady_clock::now();
  PipelineResult r = normal_form_pipeline(make_builtin(name), builtin_entry(name).start,
                                          opts);
  double secs = seconds_since(t0);
  return cache.emplace(name, PipelineRun{std::move(r), secs}).first->second;
}

// every fibered map the suite produces, with the sampling box it is valid on
struct ProducedMap {
  std::string what;
  FiberedMap map;
  Tube tube;
  int d;
};
std::vector<ProducedMap> produced_maps;

void collect_map(const std::string& what, const FiberedMap& map, double q0_half, int d) {
  produced_maps.push_back({what, map, Tube{q0_half, 0.2, 1.0}, d});
}

// ---------------------------------------------------------------------------

void criterion_1_pipeline_soundness() {
  const std::vector<std::string> fields = {"free", "aniso", "cross", "aniso2"};
  bool pass = true;
  double worst_state = 0, worst_deriv = 0, slowest = 0;
  std::string note;
  for (const auto& name : fields) {
    const PipelineRun& run = run_pipeline(name);
    const NormalFormReport& rep = run.result.report;
    slowest = std::max(slowest, run.seconds);
    for (const auto& c : rep.conditions) {
      bool state = c.name == "orbit-straight" || c.name == "momentum-zero";
      double tol = state ? 1e-8 : 1e-6;
      if (state) worst_state = std::max(worst_state, c.max_residual);
      else worst_deriv = std::max(worst_deriv, c.max_residual);
      if (c.max_residual >= tol) {
        pass = false;
        note += " " + name + ":" + c.name;
      }
    }
    if (run.seconds >= 10.0) {
      pass = false;
      note += " " + name + ":slow";
    }
    collect_map("pipeline " + name, run.result.psi_total,
                run.result.delta_used + 0.05, builtin_entry(name).d);
  }
  report(1, "pipeline soundness on free/aniso/cross/aniso2", pass,
         "state residual " + fmt(worst_state) + ", derivative residual " +
             fmt(worst_deriv) + ", slowest " + fmt(slowest) + " s" + note);
}

void criterion_3_lyapunov() {
  bool pass = true;
  std::string note;

  // closed form: the anisotropic fiber metric grows linearly, A(t) = 1 + t
  const double dt = 1.0 / 512, t0 = -307 * dt;
  const int nodes = 615;
  std::vector<Mat> As;
  for (int i = 0; i < nodes; ++i) {
    Mat a(1, 1);
    a(0, 0) = 1.0 + (t0 + i * dt);
    As.push_back(a);
  }
  LyapunovPath path = metric_path(t0, dt, As);
  double devB = 0, devM = 0;
  for (int k = 0; k <= 10; ++k) {
    double t = 0.5 * k / 10;
    devB = std::max(devB, std::abs(path.B.eval(t)(0, 0) - 1.0 / (2 * (1 + t))));
    devM = std::max(devM, std::abs(path.M.eval(t)(0, 0) - std::sqrt(1 + t)));
  }
  if (devB >= 1e-6 || devM >= 1e-6) {
    pass = false;
    note += " closed-form dev";
  }

  double worst = 0, worst_oracle = 0;
  for (int d = 1; d <= 3; ++d) {
    for (unsigned seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(1000u * d + seed);
      Mat A = testutil::random_spd(d, rng);
      Mat Ap = testutil::random_sym(d, rng);
      Mat B = lyapunov_solve(A, Ap);
      worst = std::max(worst, (B * A + A * B - Ap).cwiseAbs().maxCoeff());
      Mat Bo = testutil::lyapunov_vectorized_oracle(A, Ap);
      worst_oracle = std::max(worst_oracle, (B - Bo).cwiseAbs().maxCoeff());
    }
  }
  if (worst >= 1e-8 || worst_oracle >= 1e-8) {
    pass = false;
    note += " random-spd residual";
  }
  report(3, "matrix-path construction and the symmetric-solution solve", pass,
         "B dev " + fmt(devB) + ", M dev " + fmt(devM) + ", equation residual " +
             fmt(worst) + ", vs oracle " + fmt(worst_oracle) + note);
}

void criterion_4_obstruction_invariance() {
  auto Hf = make_builtin("free");
  auto Hc = make_builtin("cross");
  std::vector<double> ts;
  for (int k = 0; k <= 10; ++k) ts.push_back(0.5 * k / 10);

  int cases = 0, ok = 0;
  double min_cross = 1e300;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    for (AdmissibleKind kind :
         {AdmissibleKind::VerticalFlat, AdmissibleKind::HomogeneousBlockDiag}) {
      FiberedMap psi = random_admissible_map(seed, 0.5, kind, 1);
      std::string kname = kind == AdmissibleKind::VerticalFlat ? "vertical-flat"
                                                               : "homog-blockdiag";
      collect_map("admissible " + kname + " seed " + std::to_string(seed), psi, 0.55, 1);

      auto vf = obstruction(*pullback(Hf, psi), ts);
      ++cases;
      if (obstruction_vanishes(vf, 1e-6)) ++ok;

      auto vc = obstruction(*pullback(Hc, psi), ts);
      ++cases;
      double mag = 1e300;
      for (const Vec& v : vc) mag = std::min(mag, v.cwiseAbs().maxCoeff());
      min_cross = std::min(min_cross, mag);
      if (!obstruction_vanishes(vc, 1e-6) && mag > 1e-3) ++ok;
    }
  }
  report(4, "obstruction vanishing is invariant under admissible maps", ok == cases,
         std::to_string(ok) + "/" + std::to_string(cases) +
             " cases, min cross magnitude " + fmt(min_cross));
}

void criterion_5_flow_box_strength() {
  auto H = parse_hamiltonian("0.5*(p0^2+p1^2)+p0+0.2*q0*p1", 1);
  IntegrationOptions io;
  OrbitSegment grid_orbit = integrate_orbit_centered(
      *make_builtin("free"), builtin_entry("free").start, 0.8, 0.8, io);
  StepResult s = flow_box_straighten(H, grid_orbit, Vec(Vec::Zero(2)), 0.5);
  collect_map("flow box on planted field", s.psi, 0.55, 1);

  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0;
  auto f = [&](const Vec& v) { return s.H->value_flat(v); };
  for (int k = 0; k < 50; ++k) {
    Vec q(2);
    q << 0.5 * unif(rng), 0.02 + 0.18 * std::abs(unif(rng)); // strictly off-axis
    if (unif(rng) < 0) q[1] = -q[1];
    PhaseState x(q, Vec::Zero(2));
    worst = std::max(worst, std::abs(fd_partial(f, {pvar(1, 1)}, x.flat(), {})));
  }
  report(5, "flow box kills the off-axis fiber slope", worst < 1e-6,
         "max |dH/dp*| over 50 off-axis points " + fmt(worst));
}

void criterion_6_expansion_diagnostics() {
  bool pass = true;
  double worst_f = 0, worst_w = 0;
  std::string note;
  for (const auto& entry : builtin_library()) {
    if (!entry.convex) continue;
    const PipelineRun& run = run_pipeline(entry.name);
    worst_f = std::max(worst_f, run.result.report.f_drift);
    worst_w = std::max(worst_w, run.result.report.w_drift);
    if (run.result.report.f_drift >= 1e-6 || run.result.report.w_drift >= 1e-6) {
      pass = false;
      note += " " + entry.name;
    }
  }
  report(6, "post-pipeline expansion coefficients are pinned", pass,
         "f drift " + fmt(worst_f) + ", w drift " + fmt(worst_w) + note);
}

void criterion_7_transfer() {
  bool pass = true;
  std::string note;
  double worst_sym = 0;

  // free particle: the transfer matrix is the shear by delta
  const PipelineRun& free_run = run_pipeline("free");
  const double delta = free_run.result.delta_used;
  ReparamCheck rc_free = reparam_invariance_check(free_run.result.H_final, delta);
  Mat expected(2, 2);
  expected << 1.0, delta, 0.0, 1.0;
  double dev_free = (rc_free.L_H.L - expected).cwiseAbs().maxCoeff();
  if (dev_free >= 1e-6) {
    pass = false;
    note += " free-matrix";
  }

  double worst_invariance = 0;
  for (const char* name : {"free", "aniso", "cross", "osc"}) {
    const PipelineRun& run = run_pipeline(name);
    ReparamCheck rc = reparam_invariance_check(run.result.H_final, run.result.delta_used);
    worst_invariance = std::max(worst_invariance, rc.difference);
    worst_sym = std::max({worst_sym, rc.L_H.symplecticity_residual,
                          rc.L_Ht.symplecticity_residual});
    if (rc.difference >= 1e-5) {
      pass = false;
      note += std::string(" ") + name + ":invariance";
    }
  }

  auto rows = mane_perturbation_experiment(free_run.result.H_final, "0.5*q1^2",
                                           {1e-3, 1e-2, 1e-1}, delta);
  double worst_identity = 0, effect_mid = 0, identity_mid = 0;
  for (const auto& row : rows) {
    worst_identity = std::max(worst_identity, row.identity_residual);
    worst_sym = std::max({worst_sym, row.symplecticity_1, row.symplecticity_2});
    if (row.eps == 1e-2) {
      effect_mid = row.effect_size;
      identity_mid = row.identity_residual;
    }
  }
  if (worst_identity >= 1e-5) {
    pass = false;
    note += " mane-identity";
  }
  if (effect_mid <= 10 * identity_mid) {
    pass = false;
    note += " effect-size";
  }
  if (worst_sym >= 1e-6) {
    pass = false;
    note += " symplecticity";
  }
  report(7, "transfer and reparametrization identities", pass,
         "free-matrix dev " + fmt(dev_free) + ", invariance " + fmt(worst_invariance) +
             ", identity " + fmt(worst_identity) + ", effect at 1e-2 " +
             fmt(effect_mid) + ", matrix symplecticity " + fmt(worst_sym) + note);
}

void criterion_8_homogeneous() {
  HomogeneousOptions opts;
  opts.delta = builtin_entry("riem1").delta;
  HomogeneousPipelineResult r = homogeneous_pipeline(
      make_builtin("riem1"), builtin_entry("riem1").start, 1.0, opts);
  collect_map("homogeneous pipeline riem1", r.psi_total, r.delta_used + 0.05, 1);

  bool pass = true;
  std::string note;
  double worst = 0;
  for (const auto& c : r.report.conditions) {
    worst = std::max(worst, c.max_residual);
    if (c.max_residual >= 1e-6) {
      pass = false;
      note += " " + c.name;
    }
  }
  if (r.p0_constancy >= 1e-8) {
    pass = false;
    note += " p0-constancy";
  }
  // zero section preserved exactly (homogeneous factors only)
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unif(-0.2, 0.2);
  double zs = 0;
  for (int k = 0; k < 25; ++k) {
    Vec q(2);
    q << 2 * unif(rng), unif(rng);
    zs = std::max(zs, r.psi_total.apply(PhaseState(q, Vec::Zero(2))).p.cwiseAbs().maxCoeff());
  }
  if (zs != 0.0) {
    pass = false;
    note += " zero-section";
  }
  report(8, "homogeneous pipeline on the metric-norm field", pass,
         "worst condition " + fmt(worst) + ", P0 constancy " + fmt(r.p0_constancy) +
             ", zero-section image " + fmt(zs) + note);
}

void criterion_2_symplecticity() {
  bool pass = true;
  double worst = 0;
  std::string worst_what = "none";
  collect_map("identity", FiberedMap::identity(1), 0.55, 1);
  for (const auto& pm : produced_maps) {
    double res = check_symplectic(pm.map, sample_tube(pm.tube, pm.d, 100, 777));
    if (res > worst) {
      worst = res;
      worst_what = pm.what;
    }
    if (res >= 1e-8) pass = false;
  }
  report(2, "every produced fibered map is symplectic", pass,
         std::to_string(produced_maps.size()) + " maps, worst " + fmt(worst) +
             " (" + worst_what + ")");
}

void criterion_9_hygiene() {
  bool pass = true;
  std::string note;

  // RK4 convergence factor on the oscillator
  auto Ho = make_builtin("osc");
  PhaseState x0 = builtin_entry("osc").start;
  auto endpoint_error = [&](int steps) {
    OrbitSegment orbit = integrate_orbit(*Ho, x0, 1.0, steps);
    Vec exact(4);
    exact << 1.0, 0.1 * std::cos(1.0), 1.0, -0.1 * std::sin(1.0);
    return (orbit.state_at(1.0).flat() - exact).norm();
  };
  double factor = endpoint_error(16) / endpoint_error(32);
  if (factor < 12.0 || factor > 20.0) {
    pass = false;
    note += " rk4-order";
  }

  // symbolic vs finite-difference derivatives across the builtin library
  double worst_rel = 0;
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (const auto& entry : builtin_library()) {
    auto H = make_builtin(entry.name);
    const int nv = 2 * (entry.d + 1);
    for (int k = 0; k < 100; ++k) {
      Vec q(entry.d + 1), p(entry.d + 1);
      for (int i = 0; i <= entry.d; ++i) q[i] = unif(rng);
      for (int i = 0; i <= entry.d; ++i) p[i] = unif(rng);
      if (entry.name == "riem1" && p.norm() < 0.5) p *= (0.6 / std::max(p.norm(), 1e-6));
      PhaseState x(q, p);
      std::vector<int> order;
      int m = 1 + static_cast<int>(rng() % 2);
      for (int j = 0; j < m; ++j) order.push_back(static_cast<int>(rng() % nv));
      double sym = partial(*H, order, x);
      double num = fd_field_partial(*H, order, x);
      worst_rel = std::max(worst_rel, std::abs(sym - num) / (1 + std::abs(sym)));
    }
  }
  if (worst_rel >= 1e-6) {
    pass = false;
    note += " derivative-crosscheck";
  }

  // determinism: two pipeline runs produce byte-identical reports
  PipelineOptions opts;
  opts.delta = 0.5;
  opts.seed = 11;
  auto Hc = make_builtin("cross");
  PhaseState xc = builtin_entry("cross").start;
  std::string rep1 = normal_form_pipeline(Hc, xc, opts).report.to_json().dump();
  std::string rep2 = normal_form_pipeline(Hc, xc, opts).report.to_json().dump();
  if (rep1 != rep2) {
    pass = false;
    note += " determinism";
  }

  report(9, "numerics hygiene", pass,
         "rk4 factor " + fmt(factor) + ", derivative cross-check " + fmt(worst_rel) +
             ", reports identical: " + (rep1 == rep2 ? "yes" : "no") + note);
}

} // namespace

int main() {
  try {
    criterion_1_pipeline_soundness();
    criterion_3_lyapunov();
    criterion_4_obstruction_invariance();
    criterion_5_flow_box_strength();
    criterion_6_expansion_diagnostics();
    criterion_7_transfer();
    criterion_8_homogeneous();
    criterion_2_symplecticity(); // after the others so it sees every map
    criterion_9_hygiene();
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance suite aborted: %s\n", e.what());
    return 1;
  }
  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", failures);
  return 1;
}

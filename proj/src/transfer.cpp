#include "orbitnf/transfer.hpp"

#include <cmath>
#include <sstream>

namespace orbitnf {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

} // namespace

ShiftedScaledField::ShiftedScaledField(HamPtr root, double shift, double w_margin)
    : HamiltonianField(root->dimension()), root_(std::move(root)), shift_(shift),
      w_margin_(w_margin) {}

double ShiftedScaledField::weight(const Vec& q) const {
  double w = root_->fiber_gradient(PhaseState(q, Vec::Zero(q.size())))[0];
  if (w < w_margin_)
    throw Error("maupertuis weight w(q) = " + fmt(w) + " below margin " +
                fmt(w_margin_));
  return w;
}

double ShiftedScaledField::value_impl(const PhaseState& x) const {
  return (root_->value(x) - shift_) / weight(x.q);
}

Vec ShiftedScaledField::fiber_gradient(const PhaseState& x) const {
  return root_->fiber_gradient(x) / weight(x.q);
}

Mat ShiftedScaledField::fiber_hessian(const PhaseState& x) const {
  return root_->fiber_hessian(x) / weight(x.q);
}

PotentialSumField::PotentialSumField(HamPtr root, ExprPtr potential, double coeff,
                                     bool weight_by_w)
    : HamiltonianField(root->dimension()), root_(std::move(root)),
      g_(std::move(potential)), coeff_(coeff), weight_by_w_(weight_by_w) {
  if (expr_uses_momentum(g_, dimension()))
    throw Error("perturbation must be a potential depending on q only");
}

double PotentialSumField::value_impl(const PhaseState& x) const {
  double w = 1.0;
  if (weight_by_w_)
    w = root_->fiber_gradient(PhaseState(x.q, Vec::Zero(x.q.size())))[0];
  Vec padded = Vec::Zero(2 * n());
  padded.head(n()) = x.q;
  return root_->value(x) + coeff_ * w * expr_eval(g_, padded);
}

Vec PotentialSumField::fiber_gradient(const PhaseState& x) const {
  return root_->fiber_gradient(x); // the added term is p-free
}

Mat PotentialSumField::fiber_hessian(const PhaseState& x) const {
  return root_->fiber_hessian(x);
}

HamPtr maupertuis_normalize(HamPtr H, double w_margin) {
  const int d = H->dimension();
  double shift = H->value(axis_state(d, 0));
  return std::make_shared<ShiftedScaledField>(std::move(H), shift, w_margin);
}

MaupertuisDiagnostics maupertuis_diagnostics(const HamiltonianField& Ht, double delta,
                                             int grid_points) {
  MaupertuisDiagnostics diag{0, 0};
  const int d = Ht.dimension();
  auto f = [&Ht](const Vec& v) { return Ht.value_flat(v); };
  for (int k = 0; k < grid_points; ++k) {
    double t = delta * k / (grid_points - 1);
    diag.value_drift = std::max(diag.value_drift, std::abs(Ht.value(axis_state(d, t))));
    double w = fd_partial(f, {pvar(0, d)}, axis_state(d, t).flat(), {});
    diag.slope_drift = std::max(diag.slope_drift, std::abs(w - 1.0));
  }
  return diag;
}

// ---------------------------------------------------------------------------

namespace {

// p0 from H(0, q*, p0, p*) = e; Newton with a bisection fallback.
double complete_p0(const HamiltonianField& H, double e, const Vec& qstar,
                   const Vec& pstar, double bracket) {
  const int d = H.dimension();
  Vec q = Vec::Zero(d + 1);
  q.tail(d) = qstar;
  auto value = [&](double p0) {
    Vec p(d + 1);
    p[0] = p0;
    p.tail(d) = pstar;
    return H.value(PhaseState(q, p));
  };
  auto slope = [&](double p0) {
    Vec p(d + 1);
    p[0] = p0;
    p.tail(d) = pstar;
    return H.fiber_gradient(PhaseState(q, p))[0];
  };
  double p0 = 0.0;
  for (int it = 0; it < 40; ++it) {
    double r = value(p0) - e;
    if (std::abs(r) < 1e-13 * (1.0 + std::abs(e))) return p0;
    double s = slope(p0);
    if (std::abs(s) < 1e-10) break;
    double step = r / s;
    if (std::abs(step) > 0.5) step = step > 0 ? 0.5 : -0.5;
    p0 -= step;
    if (std::abs(p0) > 2.0) break;
  }
  // bisection fallback on [-bracket, bracket]
  double lo = -bracket, hi = bracket;
  double flo = value(lo) - e, fhi = value(hi) - e;
  if (flo * fhi > 0)
    throw Error("section_map: cannot complete p0 at energy " + fmt(e) +
                " (no sign change on the bracket)");
  for (int it = 0; it < 200; ++it) {
    double mid = (lo + hi) / 2;
    double fm = value(mid) - e;
    if (std::abs(fm) < 1e-13 * (1.0 + std::abs(e))) return mid;
    if (flo * fm <= 0) {
      hi = mid;
      fhi = fm;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  return (lo + hi) / 2;
}

Vec hamilton_rhs_flat(const HamiltonianField& H, const Vec& flat) {
  PhaseState x = PhaseState::from_flat(flat);
  auto [qd, pd] = hamiltonian_vector_field(H, x);
  Vec out(flat.size());
  out << qd, pd;
  return out;
}

// cubic Hermite interpolation of one integration step
Vec hermite_step(const Vec& x0, const Vec& d0, const Vec& x1, const Vec& d1,
                 double h, double s) {
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  return h00 * x0 + (h * h10) * d0 + h01 * x1 + (h * h11) * d1;
}

} // namespace

Vec section_event_state(const HamiltonianField& H, double e, const Vec& transverse,
                        double delta, const SectionOptions& opts) {
  const int d = H.dimension();
  if (transverse.size() != 2 * d)
    throw Error("section_map: transverse point must have dimension 2d");
  const Vec qstar = transverse.head(d);
  const Vec pstar = transverse.tail(d);
  const double p0 = complete_p0(H, e, qstar, pstar, opts.p0_bracket);

  Vec x(2 * (d + 1));
  x.head(d + 1).setZero();
  x.head(d + 1).tail(d) = qstar;
  x[d + 1] = p0;
  x.tail(d) = pstar;

  auto rhs = [&H](const Vec& v) { return hamilton_rhs_flat(H, v); };
  const double dt = 1.0 / opts.steps_per_unit;

  Vec prev = x;
  Vec dprev = rhs(prev);
  if (prev[0] >= delta) throw Error("section_map: start already beyond the section");
  double t = 0;
  while (t < opts.time_budget) {
    Vec next = rk4_step(rhs, prev, dt);
    Vec dnext = rhs(next);
    if (next[0] >= delta) {
      // root of q0(s) = delta on this step: bisection bracket on the dense
      // output well past the required time accuracy, then land the final
      // RK4 substep exactly on the section (keeps the event state a smooth
      // function of the shot data, which the transfer-matrix differences
      // need)
      double lo = 0, hi = 1;
      for (int it = 0; it < 40; ++it) {
        double mid = (lo + hi) / 2;
        double q0 = hermite_step(prev, dprev, next, dnext, dt, mid)[0];
        if (q0 < delta) lo = mid;
        else hi = mid;
        if ((hi - lo) * dt < opts.event_time_tol) break;
      }
      double s = (lo + hi) / 2;
      Vec xe = rk4_step(rhs, prev, s * dt);
      for (int it = 0; it < 6; ++it) {
        double r = xe[0] - delta;
        if (std::abs(r) < 1e-14 * (1.0 + std::abs(delta))) break;
        double slope = rhs(xe)[0];
        if (std::abs(slope) < 1e-12) break;
        s -= r / (slope * dt);
        s = std::clamp(s, -0.5, 1.5);
        xe = rk4_step(rhs, prev, s * dt);
      }
      Vec de = rhs(xe);
      if (std::abs(de[0]) < opts.transversality_margin)
        throw Error("section_map: tangential crossing (qdot0 = " + fmt(de[0]) + ")");
      return xe;
    }
    prev = std::move(next);
    dprev = std::move(dnext);
    t += dt;
  }
  throw Error("section_map: no crossing of q0 = " + fmt(delta) +
              " within the time budget");
}

Vec section_map(const HamiltonianField& H, double e, const Vec& transverse,
                double delta, const SectionOptions& opts) {
  const int d = H.dimension();
  Vec xe = section_event_state(H, e, transverse, delta, opts);
  Vec out(2 * d);
  out.head(d) = xe.head(d + 1).tail(d);
  out.tail(d) = xe.tail(d);
  return out;
}

Json TransferMatrix::to_json() const {
  Json j;
  j["rows"] = L.rows();
  j["cols"] = L.cols();
  Json data = Json::array();
  for (int i = 0; i < L.rows(); ++i)
    for (int c = 0; c < L.cols(); ++c) data.push_back(L(i, c));
  j["data"] = data;
  j["symplecticity_residual"] = symplecticity_residual;
  j["e"] = energy;
  j["delta"] = delta;
  j["fd_step"] = fd_step;
  return j;
}

TransferMatrix linearize_transfer(const HamiltonianField& H, double e, double delta,
                                  double fd_step, const SectionOptions& opts) {
  const int d = H.dimension();
  Mat L(2 * d, 2 * d);
  for (int i = 0; i < 2 * d; ++i) {
    auto column = [&](double h) {
      Vec yp = Vec::Zero(2 * d), ym = Vec::Zero(2 * d);
      yp[i] += h;
      ym[i] -= h;
      return ((section_map(H, e, yp, delta, opts) -
               section_map(H, e, ym, delta, opts)) /
              (2 * h))
          .eval();
    };
    Vec D1 = column(fd_step);
    Vec D2 = column(fd_step / 2);
    L.col(i) = (4.0 * D2 - D1) / 3.0;
  }
  const Mat J = canonical_J(d);
  TransferMatrix out;
  out.L = L;
  out.symplecticity_residual = (L.transpose() * J * L - J).cwiseAbs().maxCoeff();
  out.energy = e;
  out.delta = delta;
  out.fd_step = fd_step;
  return out;
}

ReparamCheck reparam_invariance_check(HamPtr H, double delta,
                                      const SectionOptions& opts) {
  const int d = H->dimension();
  const double e = H->value(axis_state(d, 0));
  HamPtr Ht = maupertuis_normalize(H);

  ReparamCheck out{linearize_transfer(*H, e, delta, 1e-4, opts),
                   linearize_transfer(*Ht, 0.0, delta, 1e-4, opts), 0, 0};
  out.difference = (out.L_H.L - out.L_Ht.L).cwiseAbs().maxCoeff();

  // the zero level of Ht coincides with {H = H(0)}: complete p0 on one
  // surface and measure the other Hamiltonian there
  std::mt19937_64 rng(97);
  std::uniform_real_distribution<double> unif(-0.05, 0.05);
  for (int k = 0; k < 8; ++k) {
    Vec y(2 * d);
    for (int i = 0; i < 2 * d; ++i) y[i] = unif(rng);
    Vec q = Vec::Zero(d + 1), p(d + 1);
    q.tail(d) = y.head(d);
    double p0 = 0;
    {
      // complete on {Ht = 0}
      Vec qs = y.head(d), ps = y.tail(d);
      auto val = [&](double c) {
        Vec pp(d + 1);
        pp[0] = c;
        pp.tail(d) = ps;
        return Ht->value(PhaseState(q, pp));
      };
      double lo = -opts.p0_bracket, hi = opts.p0_bracket;
      double flo = val(lo);
      for (int it = 0; it < 100; ++it) {
        double mid = (lo + hi) / 2;
        double fm = val(mid);
        if (flo * fm <= 0) hi = mid;
        else {
          lo = mid;
          flo = fm;
        }
      }
      p0 = (lo + hi) / 2;
    }
    p[0] = p0;
    p.tail(d) = y.tail(d);
    out.surface_coincidence = std::max(
        out.surface_coincidence, std::abs(H->value(PhaseState(q, p)) - e));
  }
  return out;
}

std::vector<ManeRow> mane_perturbation_experiment(HamPtr H, const std::string& g_text,
                                                  const std::vector<double>& eps_list,
                                                  double delta,
                                                  const SectionOptions& opts) {
  const int d = H->dimension();
  ExprPtr g = parse_expression(g_text, d);
  if (expr_uses_momentum(g, d))
    throw Error("perturbation must be a potential depending on q only");

  const double e = H->value(axis_state(d, 0));
  HamPtr Ht = maupertuis_normalize(H);
  TransferMatrix base = linearize_transfer(*H, e, delta, 1e-4, opts);

  std::vector<ManeRow> rows;
  for (double eps : eps_list) {
    HamPtr Hpert = std::make_shared<PotentialSumField>(H, g, eps, true);
    HamPtr Htpert = std::make_shared<PotentialSumField>(Ht, g, eps, false);
    // {H + eps w g = H(0)} is the zero level of Ht + eps g
    TransferMatrix L1 = linearize_transfer(*Hpert, e, delta, 1e-4, opts);
    TransferMatrix L2 = linearize_transfer(*Htpert, 0.0, delta, 1e-4, opts);
    ManeRow row;
    row.eps = eps;
    row.identity_residual = (L1.L - L2.L).cwiseAbs().maxCoeff();
    row.effect_size = (L1.L - base.L).cwiseAbs().maxCoeff();
    row.symplecticity_1 = L1.symplecticity_residual;
    row.symplecticity_2 = L2.symplecticity_residual;
    rows.push_back(row);
  }
  return rows;
}

} // namespace orbitnf

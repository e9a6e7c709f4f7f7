#include "orbitnf/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace orbitnf {

namespace {

std::string point_string(const PhaseState& x) {
  std::ostringstream os;
  os << "q=(";
  for (int i = 0; i < x.q.size(); ++i) os << (i ? "," : "") << x.q[i];
  os << ") p=(";
  for (int i = 0; i < x.p.size(); ++i) os << (i ? "," : "") << x.p[i];
  os << ")";
  return os.str();
}

} // namespace

double HamiltonianField::value(const PhaseState& x) const {
  if (x.d() != dimension())
    throw Error("HamiltonianField: dimension mismatch (state has d=" +
                std::to_string(x.d()) + ", field has d=" + std::to_string(dimension()) + ")");
  double v = value_impl(x);
  if (!std::isfinite(v))
    throw Error("HamiltonianField: non-finite value at " + point_string(x));
  return v;
}

Vec HamiltonianField::fiber_gradient(const PhaseState& x) const {
  const int m = n();
  Vec g(m);
  const Vec flat = x.flat();
  auto f = [this](const Vec& v) { return value_flat(v); };
  for (int i = 0; i < m; ++i) g[i] = fd_first_plain(f, m + i, flat, 1e-5);
  return g;
}

Mat HamiltonianField::fiber_hessian(const PhaseState& x) const {
  const int m = n();
  Mat Hpp(m, m);
  const Vec flat = x.flat();
  auto f = [this](const Vec& v) { return value_flat(v); };
  DerivativeStencil st;
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      double v = fd_partial(f, {m + i, m + j}, flat, st);
      Hpp(i, j) = Hpp(j, i) = v;
    }
  return Hpp;
}

Vec HamiltonianField::base_gradient(const PhaseState& x) const {
  // step sized for composed evaluators: wide enough that their piecewise
  // representation does not leak noise into integrated trajectories
  const int m = n();
  Vec g(m);
  const Vec flat = x.flat();
  auto f = [this](const Vec& v) { return value_flat(v); };
  for (int i = 0; i < m; ++i) g[i] = fd_first_plain(f, i, flat, 1e-4);
  return g;
}

// ---------------------------------------------------------------------------

ClosedFormField::ClosedFormField(int d, ExprPtr expr, std::string source_text)
    : HamiltonianField(d), expr_(std::move(expr)), source_(std::move(source_text)) {
  const int nv = 2 * (d + 1);
  d1_.resize(nv);
  for (int i = 0; i < nv; ++i) d1_[i] = differentiate(expr_, i);
  d2_.resize(nv);
  for (int i = 0; i < nv; ++i) {
    d2_[i].resize(nv);
    for (int j = i; j < nv; ++j) d2_[i][j] = differentiate(d1_[i], j);
  }
  for (int i = 0; i < nv; ++i)
    for (int j = i; j < nv; ++j)
      for (int k = j; k < nv; ++k)
        d3_[{i, j, k}] = differentiate(d2_[i][j], k);
}

double ClosedFormField::value_impl(const PhaseState& x) const {
  return expr_eval(expr_, x.flat());
}

double ClosedFormField::symbolic_partial(const std::vector<int>& order,
                                         const PhaseState& x) const {
  const Vec flat = x.flat();
  if (order.empty()) return expr_eval(expr_, flat);
  std::vector<int> idx = order;
  std::sort(idx.begin(), idx.end());
  if (idx.size() == 1) return expr_eval(d1_[idx[0]], flat);
  if (idx.size() == 2) return expr_eval(d2_[idx[0]][idx[1]], flat);
  if (idx.size() == 3) return expr_eval(d3_.at(idx), flat);
  throw Error("symbolic_partial: order exceeds supported degree 3");
}

Vec ClosedFormField::fiber_gradient(const PhaseState& x) const {
  const int m = n();
  const Vec flat = x.flat();
  Vec g(m);
  for (int i = 0; i < m; ++i) g[i] = expr_eval(d1_[m + i], flat);
  return g;
}

Mat ClosedFormField::fiber_hessian(const PhaseState& x) const {
  const int m = n();
  const Vec flat = x.flat();
  Mat Hpp(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      double v = expr_eval(d2_[m + i][m + j], flat);
      Hpp(i, j) = Hpp(j, i) = v;
    }
  return Hpp;
}

Vec ClosedFormField::base_gradient(const PhaseState& x) const {
  const int m = n();
  const Vec flat = x.flat();
  Vec g(m);
  for (int i = 0; i < m; ++i) g[i] = expr_eval(d1_[i], flat);
  return g;
}

Mat ClosedFormField::field_jacobian(const PhaseState& x) const {
  const int m = n();
  const Vec flat = x.flat();
  auto second = [&](int i, int j) {
    return expr_eval(i <= j ? d2_[i][j] : d2_[j][i], flat);
  };
  Mat J(2 * m, 2 * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      J(i, j) = second(m + i, j);            // d(qdot)/dq = H_pq
      J(i, m + j) = second(m + i, m + j);    // d(qdot)/dp = H_pp
      J(m + i, j) = -second(i, j);           // d(pdot)/dq = -H_qq
      J(m + i, m + j) = -second(i, m + j);   // d(pdot)/dp = -H_qp
    }
  }
  return J;
}

std::shared_ptr<const ClosedFormField> parse_hamiltonian(
    const std::string& text, int d, const std::map<std::string, double>& params) {
  ExprPtr e = parse_expression(text, d, params);
  return std::make_shared<ClosedFormField>(d, e, text);
}

// ---------------------------------------------------------------------------

double partial(const HamiltonianField& H, const std::vector<int>& order,
               const PhaseState& x, const DerivativeStencil& stencil) {
  if (order.size() > 3)
    throw Error("partial: multi-index order exceeds supported degree 3");
  if (auto* cf = dynamic_cast<const ClosedFormField*>(&H))
    return cf->symbolic_partial(order, x);
  return fd_field_partial(H, order, x, stencil);
}

double fd_field_partial(const HamiltonianField& H, const std::vector<int>& order,
                        const PhaseState& x, const DerivativeStencil& stencil) {
  auto f = [&H](const Vec& v) { return H.value_flat(v); };
  return fd_partial(f, order, x.flat(), stencil);
}

FiberHessian hessian_pp(const HamiltonianField& H, const PhaseState& x,
                        const DerivativeStencil& stencil) {
  const int m = H.n(), d = H.dimension();
  Mat M(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j)
      M(i, j) = M(j, i) = partial(H, {pvar(i, d), pvar(j, d)}, x, stencil);
  M = ((M + M.transpose()) / 2.0).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(M);
  return {M, es.eigenvalues().minCoeff()};
}

FiberHessian hessian_pp(const HamiltonianField& H, const Vec& q,
                        const DerivativeStencil& stencil) {
  return hessian_pp(H, PhaseState(q, Vec::Zero(q.size())), stencil);
}

double convexity_margin(const HamiltonianField& H, const Tube& tube, int samples,
                        unsigned seed) {
  double margin = std::numeric_limits<double>::infinity();
  for (const PhaseState& x : sample_tube(tube, H.dimension(), samples, seed))
    margin = std::min(margin, hessian_pp(H, x).min_eigenvalue);
  return margin;
}

// ---------------------------------------------------------------------------

const std::vector<BuiltinEntry>& builtin_library() {
  auto state = [](std::initializer_list<double> q, std::initializer_list<double> p) {
    Vec vq(static_cast<int>(q.size())), vp(static_cast<int>(p.size()));
    int i = 0;
    for (double v : q) vq[i++] = v;
    i = 0;
    for (double v : p) vp[i++] = v;
    return PhaseState(vq, vp);
  };
  static const std::vector<BuiltinEntry> lib = {
      {"free", 1, "0.5*(p0^2+p1^2)", {}, state({0, 0}, {1, 0}), 0.5, true, 2.0},
      {"aniso", 1, "0.5*p0^2+0.5*(1+q0)*p1^2", {}, state({0, 0}, {1, 0}), 0.5, true, 2.0},
      {"cross", 1, "0.5*(p0^2+p1^2)+eps*q1*p0", {{"eps", 0.1}},
       state({0, 0}, {1, 0}), 0.5, true, 0.0},
      {"riem1", 1, "sqrt(p0^2+(1+q0^2)*p1^2)", {}, state({0, 0}, {1, 0.2}), 0.4,
       false, 1.0},
      {"osc", 1, "0.5*(p0^2+p1^2)+0.5*q1^2", {}, state({0, 0.1}, {1, 0}), 0.5,
       true, 0.0},
      {"aniso2", 2,
       "0.5*p0^2+0.5*(1+0.8*q0)*p1^2+0.5*(1+0.4*q0)*p2^2+0.05*q0*p1*p2", {},
       state({0, 0, 0}, {1, 0, 0}), 0.5, true, 2.0},
  };
  return lib;
}

const BuiltinEntry& builtin_entry(const std::string& name) {
  for (const auto& e : builtin_library())
    if (e.name == name) return e;
  throw Error("unknown hamiltonian '" + name + "'");
}

std::shared_ptr<const ClosedFormField> make_builtin(
    const std::string& name, const std::map<std::string, double>& overrides) {
  const BuiltinEntry& e = builtin_entry(name);
  std::map<std::string, double> params = e.params;
  for (const auto& [k, v] : overrides) params[k] = v;
  return parse_hamiltonian(e.expression, e.d, params);
}

} // namespace orbitnf

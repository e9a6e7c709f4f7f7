#include "orbitnf/transforms.hpp"

#include <cmath>

namespace orbitnf {

namespace {

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from(const Json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

Json mat_json(const Mat& m) {
  Json a;
  a["rows"] = m.rows();
  a["cols"] = m.cols();
  Json data = Json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  a["data"] = data;
  return a;
}

Mat mat_from(const Json& j) {
  const int r = j.at("rows").get<int>(), c = j.at("cols").get<int>();
  Mat m(r, c);
  const Json& data = j.at("data");
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < c; ++k) m(i, k) = data[i * c + k].get<double>();
  return m;
}

Json vecs_json(const std::vector<Vec>& vs) {
  Json a = Json::array();
  for (const Vec& v : vs) a.push_back(vec_json(v));
  return a;
}

std::vector<Vec> vecs_from(const Json& j) {
  std::vector<Vec> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(vec_from(e));
  return out;
}

Json spline_json(const Spline& s) {
  Json j;
  j["x0"] = s.x0();
  j["dx"] = s.dx();
  j["values"] = s.values();
  return j;
}

Spline spline_from(const Json& j) {
  return Spline(j.at("x0").get<double>(), j.at("dx").get<double>(),
                j.at("values").get<std::vector<double>>());
}

Json spline_vec_json(const SplineVec& s) {
  Json j;
  j["x0"] = s.component(0).x0();
  j["dx"] = s.component(0).dx();
  Json vals = Json::array();
  const size_t nodes = s.component(0).values().size();
  for (size_t k = 0; k < nodes; ++k) {
    Json row = Json::array();
    for (int c = 0; c < s.size(); ++c) row.push_back(s.component(c).values()[k]);
    vals.push_back(row);
  }
  j["values"] = vals;
  return j;
}

SplineVec spline_vec_from(const Json& j) {
  return SplineVec(j.at("x0").get<double>(), j.at("dx").get<double>(),
                   vecs_from(j.at("values")));
}

Json spline_mat_json(const SplineMat& s) {
  Json j;
  j["x0"] = s.component(0, 0).x0();
  j["dx"] = s.component(0, 0).dx();
  j["rows"] = s.rows();
  j["cols"] = s.cols();
  Json vals = Json::array();
  const size_t nodes = s.component(0, 0).values().size();
  for (size_t k = 0; k < nodes; ++k) {
    Json row = Json::array();
    for (int i = 0; i < s.rows(); ++i)
      for (int c = 0; c < s.cols(); ++c) row.push_back(s.component(i, c).values()[k]);
    vals.push_back(row);
  }
  j["values"] = vals;
  return j;
}

SplineMat spline_mat_from(const Json& j) {
  const int r = j.at("rows").get<int>(), c = j.at("cols").get<int>();
  std::vector<Mat> mats;
  for (const auto& row : j.at("values")) {
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
      for (int k = 0; k < c; ++k) m(i, k) = row[i * c + k].get<double>();
    mats.push_back(std::move(m));
  }
  return SplineMat(j.at("x0").get<double>(), j.at("dx").get<double>(), mats);
}

Json curve_json(const HermiteCurve& c) {
  Json j;
  j["t0"] = c.t0();
  j["dt"] = c.dt();
  j["y"] = vecs_json(c.values());
  j["dy"] = vecs_json(c.derivs());
  if (!c.seconds().empty()) j["ddy"] = vecs_json(c.seconds());
  return j;
}

HermiteCurve curve_from(const Json& j) {
  std::vector<Vec> ddy;
  if (j.contains("ddy")) ddy = vecs_from(j.at("ddy"));
  return HermiteCurve(j.at("t0").get<double>(), j.at("dt").get<double>(),
                      vecs_from(j.at("y")), vecs_from(j.at("dy")), std::move(ddy));
}

Json cheb_json(const ChebTensor& c) {
  Json j;
  j["lo"] = c.lo();
  j["hi"] = c.hi();
  j["npts"] = c.points();
  j["coef"] = c.coefficients();
  return j;
}

ChebTensor cheb_from(const Json& j) {
  ChebTensor c(j.at("lo").get<std::vector<double>>(),
               j.at("hi").get<std::vector<double>>(),
               j.at("npts").get<std::vector<int>>());
  c.set_coefficients(j.at("coef").get<std::vector<double>>());
  return c;
}

// Damped Newton for forward(x) = target.
Vec newton_invert(const BaseMap& map, const Vec& target, Vec guess,
                  const char* what) {
  const double tol = 1e-13 * (1.0 + target.cwiseAbs().maxCoeff());
  Vec x = std::move(guess);
  Vec r = map.forward(x) - target;
  for (int it = 0; it < 60; ++it) {
    if (r.cwiseAbs().maxCoeff() < tol) return x;
    Vec step = map.jacobian(x).partialPivLu().solve(r);
    double lambda = 1.0;
    for (;;) {
      Vec xn = x - lambda * step;
      Vec rn = map.forward(xn) - target;
      if (rn.norm() < r.norm() || lambda < 1.0 / 64) {
        x = std::move(xn);
        r = std::move(rn);
        break;
      }
      lambda /= 2;
    }
  }
  if (r.cwiseAbs().maxCoeff() < 1e3 * tol) return x;
  throw Error(std::string(what) + ": Newton inversion did not converge");
}

} // namespace

// --------------------------------------------------------------------------

Json IdentityBase::recipe() const {
  Json j;
  j["kind"] = "identity";
  j["n"] = n_;
  return j;
}

LinearBase::LinearBase(Mat M) : M_(std::move(M)), lu_(M_) {
  if (M_.rows() != M_.cols()) throw Error("LinearBase: matrix must be square");
  if (std::abs(lu_.determinant()) < 1e-14)
    throw Error("LinearBase: singular matrix");
}

Json LinearBase::recipe() const {
  Json j;
  j["kind"] = "linear";
  j["matrix"] = mat_json(M_);
  return j;
}

ExprBase::ExprBase(int d, std::vector<ExprPtr> components)
    : d_(d), comp_(std::move(components)) {
  if (static_cast<int>(comp_.size()) != d_ + 1)
    throw Error("ExprBase: need 1+d components");
  for (const auto& c : comp_)
    if (expr_uses_momentum(c, d_))
      throw Error("ExprBase: base map components must not use momenta");
  jac_.resize(comp_.size());
  for (size_t i = 0; i < comp_.size(); ++i) {
    jac_[i].resize(d_ + 1);
    for (int j = 0; j <= d_; ++j) jac_[i][j] = differentiate(comp_[i], j);
  }
}

Vec ExprBase::forward(const Vec& q) const {
  Vec out(d_ + 1);
  for (int i = 0; i <= d_; ++i) out[i] = expr_eval(comp_[i], q);
  return out;
}

Vec ExprBase::inverse(const Vec& q) const {
  return newton_invert(*this, q, q, "ExprBase");
}

Mat ExprBase::jacobian(const Vec& q) const {
  Mat J(d_ + 1, d_ + 1);
  for (int i = 0; i <= d_; ++i)
    for (int j = 0; j <= d_; ++j) J(i, j) = expr_eval(jac_[i][j], q);
  return J;
}

Json ExprBase::recipe() const {
  Json j;
  j["kind"] = "expr-base";
  j["d"] = d_;
  Json comps = Json::array();
  for (const auto& c : comp_) comps.push_back(expr_to_string(c, d_));
  j["components"] = comps;
  return j;
}

FrameBase::FrameBase(HermiteCurve curve, Mat N, double t_limit)
    : curve_(std::move(curve)), N_(std::move(N)), t_limit_(t_limit) {
  if (N_.rows() != N_.cols() + 1)
    throw Error("FrameBase: N must be (1+d) x d");
}

int FrameBase::config_dim() const { return static_cast<int>(N_.rows()); }

Vec FrameBase::forward(const Vec& q) const {
  const double t = q[0];
  if (std::abs(t) > t_limit_ + 1e-9)
    throw Error("FrameBase: out-of-tube evaluation (t=" + std::to_string(t) + ")");
  return curve_.eval(t) + N_ * q.tail(N_.cols());
}

Mat FrameBase::jacobian(const Vec& q) const {
  Mat J(config_dim(), config_dim());
  J.col(0) = curve_.deriv(q[0]);
  J.rightCols(N_.cols()) = N_;
  return J;
}

Vec FrameBase::inverse(const Vec& q) const {
  const Vec v0 = curve_.deriv(0.0);
  double t_guess = v0.dot(q - curve_.eval(0.0)) / v0.squaredNorm();
  return inverse_hint(q, t_guess);
}

Vec FrameBase::inverse_hint(const Vec& q, double t_hint) const {
  Vec guess(config_dim());
  double t = std::clamp(t_hint, -t_limit_, t_limit_);
  guess[0] = t;
  guess.tail(N_.cols()) = N_.transpose() * (q - curve_.eval(t));
  return newton_invert(*this, q, guess, "FrameBase");
}

Json FrameBase::recipe() const {
  Json j;
  j["kind"] = "frame";
  j["curve"] = curve_json(curve_);
  j["normal_frame"] = mat_json(N_);
  j["t_limit"] = t_limit_;
  return j;
}

ShearBase::ShearBase(SplineVec l) : l_(std::move(l)) {}

Vec ShearBase::forward(const Vec& q) const {
  Vec out = q;
  out[0] = q[0] + l_.eval(q[0]).dot(q.tail(l_.size()));
  return out;
}

Vec ShearBase::inverse(const Vec& q) const {
  const Vec qs = q.tail(l_.size());
  double q0 = q[0];
  for (int it = 0; it < 50; ++it) {
    double f = q0 + l_.eval(q0).dot(qs) - q[0];
    if (std::abs(f) < 1e-14 * (1.0 + std::abs(q[0]))) break;
    double fp = 1.0 + l_.deriv(q0).dot(qs);
    q0 -= f / fp;
  }
  Vec out = q;
  out[0] = q0;
  return out;
}

Mat ShearBase::jacobian(const Vec& q) const {
  const int n = config_dim();
  Mat J = Mat::Identity(n, n);
  const Vec qs = q.tail(l_.size());
  J(0, 0) = 1.0 + l_.deriv(q[0]).dot(qs);
  J.row(0).tail(l_.size()) = l_.eval(q[0]).transpose();
  return J;
}

Json ShearBase::recipe() const {
  Json j;
  j["kind"] = "shear";
  j["l"] = spline_vec_json(l_);
  return j;
}

MetricBase::MetricBase(SplineMat M) : M_(std::move(M)) {
  if (M_.rows() != M_.cols()) throw Error("MetricBase: M must be square");
}

Vec MetricBase::forward(const Vec& q) const {
  Vec out = q;
  out.tail(M_.rows()) = M_.eval(q[0]) * q.tail(M_.rows());
  return out;
}

Vec MetricBase::inverse(const Vec& q) const {
  Vec out = q;
  out.tail(M_.rows()) =
      M_.eval(q[0]).partialPivLu().solve(q.tail(M_.rows())).eval();
  return out;
}

Mat MetricBase::jacobian(const Vec& q) const {
  const int n = config_dim();
  Mat J = Mat::Identity(n, n);
  J.block(1, 1, M_.rows(), M_.rows()) = M_.eval(q[0]);
  J.block(1, 0, M_.rows(), 1) = M_.deriv(q[0]) * q.tail(M_.rows());
  return J;
}

Json MetricBase::recipe() const {
  Json j;
  j["kind"] = "metric";
  j["M"] = spline_mat_json(M_);
  return j;
}

FlowBoxBase::FlowBoxBase(std::vector<ChebTensor> components, Vec p_level)
    : comp_(std::move(components)), p_level_(std::move(p_level)) {
  if (comp_.empty()) throw Error("FlowBoxBase: no components");
}

void FlowBoxBase::guard(const Vec& q) const {
  const auto& lo = comp_[0].lo();
  const auto& hi = comp_[0].hi();
  for (size_t a = 0; a < lo.size(); ++a) {
    const double slack = 1e-6 * (hi[a] - lo[a]);
    if (q[static_cast<int>(a)] < lo[a] - slack || q[static_cast<int>(a)] > hi[a] + slack)
      throw Error("FlowBoxBase: out-of-tube evaluation of a flow-backed factor");
  }
}

Vec FlowBoxBase::forward(const Vec& q) const {
  guard(q);
  Vec out = q;
  for (size_t c = 0; c < comp_.size(); ++c)
    out[static_cast<int>(c) + 1] = comp_[c].eval(q);
  return out;
}

Mat FlowBoxBase::jacobian(const Vec& q) const {
  guard(q);
  const int n = config_dim();
  Mat J = Mat::Zero(n, n);
  J(0, 0) = 1.0;
  Vec grad;
  for (size_t c = 0; c < comp_.size(); ++c) {
    comp_[c].eval_grad(q, grad);
    J.row(static_cast<int>(c) + 1) = grad.transpose();
  }
  return J;
}

Vec FlowBoxBase::inverse(const Vec& q) const {
  // First component is untouched; Newton in the q* block only.
  const int d = static_cast<int>(comp_.size());
  Vec x = q;
  Vec grad;
  for (int it = 0; it < 60; ++it) {
    Vec r(d);
    Mat Js(d, d);
    for (int c = 0; c < d; ++c) {
      r[c] = comp_[c].eval_grad(x, grad) - q[c + 1];
      Js.row(c) = grad.tail(d).transpose();
    }
    if (r.cwiseAbs().maxCoeff() < 1e-13 * (1.0 + q.cwiseAbs().maxCoeff())) return x;
    x.tail(d) -= Js.partialPivLu().solve(r);
  }
  throw Error("FlowBoxBase: inverse Newton did not converge");
}

Json FlowBoxBase::recipe() const {
  Json j;
  j["kind"] = "flow-box";
  Json comps = Json::array();
  for (const auto& c : comp_) comps.push_back(cheb_json(c));
  j["components"] = comps;
  j["p_level"] = vec_json(p_level_);
  return j;
}

// --------------------------------------------------------------------------

ExprVertical::ExprVertical(int d, ExprPtr u) : d_(d), u_(std::move(u)) {
  if (expr_uses_momentum(u_, d_))
    throw Error("ExprVertical: u must depend on q only");
  du_.resize(d_ + 1);
  for (int i = 0; i <= d_; ++i) du_[i] = differentiate(u_, i);
}

double ExprVertical::u(const Vec& q) const { return expr_eval(u_, q); }

Vec ExprVertical::du(const Vec& q) const {
  Vec g(d_ + 1);
  for (int i = 0; i <= d_; ++i) g[i] = expr_eval(du_[i], q);
  return g;
}

Json ExprVertical::recipe() const {
  Json j;
  j["kind"] = "vertical-expr";
  j["d"] = d_;
  j["u"] = expr_to_string(u_, d_);
  return j;
}

MomentumKillVertical::MomentumKillVertical(Spline p0, SplineVec pstar, Spline v)
    : p0_(std::move(p0)), pstar_(std::move(pstar)), v_(std::move(v)) {}

double MomentumKillVertical::u(const Vec& q) const {
  return v_.eval(q[0]) + pstar_.eval(q[0]).dot(q.tail(pstar_.size()));
}

Vec MomentumKillVertical::du(const Vec& q) const {
  // d/dq0 uses v' = p0 exactly, so du is closed by construction.
  Vec g(pstar_.size() + 1);
  g[0] = p0_.eval(q[0]) + pstar_.deriv(q[0]).dot(q.tail(pstar_.size()));
  g.tail(pstar_.size()) = pstar_.eval(q[0]);
  return g;
}

Json MomentumKillVertical::recipe() const {
  Json j;
  j["kind"] = "vertical-momentum";
  j["p0"] = spline_json(p0_);
  j["pstar"] = spline_vec_json(pstar_);
  j["v"] = spline_json(v_);
  return j;
}

QuadraticVertical::QuadraticVertical(SplineMat B) : B_(std::move(B)) {
  if (B_.rows() != B_.cols()) throw Error("QuadraticVertical: B must be square");
}

double QuadraticVertical::u(const Vec& q) const {
  const Vec qs = q.tail(B_.rows());
  return 0.5 * qs.dot(B_.eval(q[0]) * qs);
}

Vec QuadraticVertical::du(const Vec& q) const {
  const Vec qs = q.tail(B_.rows());
  Vec g(B_.rows() + 1);
  g[0] = 0.5 * qs.dot(B_.deriv(q[0]) * qs);
  g.tail(B_.rows()) = B_.eval(q[0]) * qs;
  return g;
}

Json QuadraticVertical::recipe() const {
  Json j;
  j["kind"] = "vertical-quadratic";
  j["B"] = spline_mat_json(B_);
  return j;
}

// --------------------------------------------------------------------------

FiberedMap FiberedMap::vertical(VerticalPtr u) {
  FiberedMap m;
  m.tag_ = Tag::Vertical;
  m.vert_ = std::move(u);
  return m;
}

FiberedMap FiberedMap::homogeneous(BasePtr base) {
  FiberedMap m;
  m.tag_ = Tag::Homogeneous;
  m.base_ = std::move(base);
  return m;
}

FiberedMap FiberedMap::composite(std::vector<FiberedMap> factors) {
  FiberedMap m;
  m.tag_ = Tag::Composite;
  for (auto& f : factors) {
    if (f.tag_ == Tag::Composite) {
      for (auto& g : f.factors_) m.factors_.push_back(std::move(g));
    } else {
      m.factors_.push_back(std::move(f));
    }
  }
  return m;
}

FiberedMap FiberedMap::identity(int d) {
  return homogeneous(std::make_shared<IdentityBase>(d + 1));
}

int FiberedMap::config_dim() const {
  switch (tag_) {
    case Tag::Vertical: return vert_->config_dim();
    case Tag::Homogeneous: return base_->config_dim();
    case Tag::Composite:
      if (factors_.empty()) throw Error("FiberedMap: empty composite");
      return factors_.front().config_dim();
  }
  throw Error("FiberedMap: unreachable");
}

PhaseState FiberedMap::apply(const PhaseState& x) const {
  switch (tag_) {
    case Tag::Vertical:
      return PhaseState(x.q, x.p + vert_->du(x.q));
    case Tag::Homogeneous: {
      Mat Jt = base_->jacobian(x.q).transpose();
      Vec p_new = Jt.partialPivLu().solve(x.p);
      if (!p_new.allFinite())
        throw Error("FiberedMap: singular base Jacobian at the queried point");
      return PhaseState(base_->forward(x.q), std::move(p_new));
    }
    case Tag::Composite: {
      PhaseState y = x;
      for (const auto& f : factors_) y = f.apply(y);
      return y;
    }
  }
  throw Error("FiberedMap: unreachable");
}

PhaseState FiberedMap::apply_with_fiber(const PhaseState& x, Mat& F) const {
  const int n = x.n();
  switch (tag_) {
    case Tag::Vertical:
      F = Mat::Identity(n, n);
      return PhaseState(x.q, x.p + vert_->du(x.q));
    case Tag::Homogeneous: {
      Mat Jt = base_->jacobian(x.q).transpose();
      F = Jt.partialPivLu().inverse();
      return PhaseState(base_->forward(x.q), F * x.p);
    }
    case Tag::Composite: {
      PhaseState y = x;
      F = Mat::Identity(n, n);
      Mat Fk;
      for (const auto& f : factors_) {
        y = f.apply_with_fiber(y, Fk);
        F = (Fk * F).eval();
      }
      return y;
    }
  }
  throw Error("FiberedMap: unreachable");
}

PhaseState FiberedMap::inverse_apply(const PhaseState& x) const {
  switch (tag_) {
    case Tag::Vertical:
      return PhaseState(x.q, x.p - vert_->du(x.q));
    case Tag::Homogeneous: {
      Vec q_in = base_->inverse(x.q);
      Mat Jt = base_->jacobian(q_in).transpose();
      return PhaseState(std::move(q_in), Jt * x.p);
    }
    case Tag::Composite: {
      PhaseState y = x;
      for (auto it = factors_.rbegin(); it != factors_.rend(); ++it)
        y = it->inverse_apply(y);
      return y;
    }
  }
  throw Error("FiberedMap: unreachable");
}

Json FiberedMap::recipe() const {
  Json j;
  switch (tag_) {
    case Tag::Vertical:
      j["type"] = "vertical";
      j["field"] = vert_->recipe();
      return j;
    case Tag::Homogeneous:
      j["type"] = "homogeneous";
      j["base"] = base_->recipe();
      return j;
    case Tag::Composite: {
      j["type"] = "composite";
      Json fs = Json::array();
      for (const auto& f : factors_) fs.push_back(f.recipe());
      j["factors"] = fs;
      return j;
    }
  }
  throw Error("FiberedMap: unreachable");
}

namespace {

BasePtr base_from_recipe(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return std::make_shared<IdentityBase>(j.at("n").get<int>());
  if (kind == "linear") return std::make_shared<LinearBase>(mat_from(j.at("matrix")));
  if (kind == "expr-base") {
    const int d = j.at("d").get<int>();
    std::vector<ExprPtr> comps;
    for (const auto& s : j.at("components"))
      comps.push_back(parse_expression(s.get<std::string>(), d));
    return std::make_shared<ExprBase>(d, std::move(comps));
  }
  if (kind == "frame")
    return std::make_shared<FrameBase>(curve_from(j.at("curve")),
                                       mat_from(j.at("normal_frame")),
                                       j.at("t_limit").get<double>());
  if (kind == "shear") return std::make_shared<ShearBase>(spline_vec_from(j.at("l")));
  if (kind == "metric") return std::make_shared<MetricBase>(spline_mat_from(j.at("M")));
  if (kind == "flow-box") {
    std::vector<ChebTensor> comps;
    for (const auto& c : j.at("components")) comps.push_back(cheb_from(c));
    return std::make_shared<FlowBoxBase>(std::move(comps), vec_from(j.at("p_level")));
  }
  throw Error("unknown base-map kind '" + kind + "' in recipe");
}

VerticalPtr vertical_from_recipe(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "vertical-expr") {
    const int d = j.at("d").get<int>();
    return std::make_shared<ExprVertical>(d, parse_expression(j.at("u").get<std::string>(), d));
  }
  if (kind == "vertical-momentum")
    return std::make_shared<MomentumKillVertical>(spline_from(j.at("p0")),
                                                  spline_vec_from(j.at("pstar")),
                                                  spline_from(j.at("v")));
  if (kind == "vertical-quadratic")
    return std::make_shared<QuadraticVertical>(spline_mat_from(j.at("B")));
  throw Error("unknown vertical kind '" + kind + "' in recipe");
}

} // namespace

FiberedMap FiberedMap::from_recipe(const Json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "vertical") return vertical(vertical_from_recipe(j.at("field")));
  if (type == "homogeneous") return homogeneous(base_from_recipe(j.at("base")));
  if (type == "composite") {
    std::vector<FiberedMap> fs;
    for (const auto& f : j.at("factors")) fs.push_back(from_recipe(f));
    return composite(std::move(fs));
  }
  throw Error("unknown fibered-map type '" + type + "' in recipe");
}

FiberedMap compose(const FiberedMap& outer, const FiberedMap& inner) {
  return FiberedMap::composite({inner, outer});
}

FiberedMap vertical_map(VerticalPtr u) { return FiberedMap::vertical(std::move(u)); }

FiberedMap vertical_map(int d, const ExprPtr& u) {
  return FiberedMap::vertical(std::make_shared<ExprVertical>(d, u));
}

FiberedMap homogeneous_map(BasePtr base) {
  return FiberedMap::homogeneous(std::move(base));
}

// --------------------------------------------------------------------------

TransformedField::TransformedField(HamPtr root, FiberedMap psi)
    : HamiltonianField(root->dimension()), root_(std::move(root)), psi_(std::move(psi)) {}

double TransformedField::value_impl(const PhaseState& x) const {
  return root_->value(psi_.apply(x));
}

Vec TransformedField::fiber_gradient(const PhaseState& x) const {
  Mat F;
  PhaseState y = psi_.apply_with_fiber(x, F);
  return F.transpose() * root_->fiber_gradient(y);
}

Mat TransformedField::fiber_hessian(const PhaseState& x) const {
  Mat F;
  PhaseState y = psi_.apply_with_fiber(x, F);
  return F.transpose() * root_->fiber_hessian(y) * F;
}

HamPtr pullback(HamPtr H, const FiberedMap& psi) {
  // Flatten nested pullbacks so evaluation walks one composite only.
  if (auto* t = dynamic_cast<const TransformedField*>(H.get()))
    return std::make_shared<TransformedField>(t->root(), compose(t->map(), psi));
  return std::make_shared<TransformedField>(std::move(H), psi);
}

double check_symplectic(const std::function<PhaseState(const PhaseState&)>& map,
                        const std::vector<PhaseState>& points) {
  double worst = 0;
  for (const PhaseState& x : points) {
    const int n = x.n();
    const Mat J = canonical_J(n);
    auto flat_map = [&](const Vec& v) { return map(PhaseState::from_flat(v)).flat(); };
    // Small step ladder: truncation shrinks with h while the evaluation
    // noise of deep composites grows, so the sharpest estimate of the
    // defect is the best of the three.
    const double scale = 1.0 + x.flat().cwiseAbs().maxCoeff();
    double best = std::numeric_limits<double>::infinity();
    for (double h : {1e-4, 3e-5, 1e-5}) {
      Mat D = fd_jacobian(flat_map, x.flat(), h * scale);
      best = std::min(best, (D.transpose() * J * D - J).cwiseAbs().maxCoeff());
    }
    worst = std::max(worst, best);
  }
  return worst;
}

double check_symplectic(const FiberedMap& psi, const std::vector<PhaseState>& points) {
  return check_symplectic([&psi](const PhaseState& x) { return psi.apply(x); }, points);
}

Admissibility is_admissible(const FiberedMap& psi, double delta, int grid_points) {
  double dev = 0;
  const int d = psi.d();
  for (int k = 0; k < grid_points; ++k) {
    double t = delta * k / std::max(1, grid_points - 1);
    PhaseState y = psi.apply(axis_state(d, t));
    Vec target = axis_point(d, t);
    dev = std::max(dev, (y.q - target).cwiseAbs().maxCoeff());
  }
  return {dev < 1e-9, dev};
}

} // namespace orbitnf

#ifndef ORBITNF_TRANSFORMS_HPP
#define ORBITNF_TRANSFORMS_HPP

#include <functional>
#include <memory>
#include <vector>

#include <json.hpp>

#include "orbitnf/chebyshev.hpp"
#include "orbitnf/hamiltonian.hpp"
#include "orbitnf/phase.hpp"
#include "orbitnf/spline.hpp"

namespace orbitnf {

using Json = nlohmann::ordered_json;

// --------------------------------------------------------------------------
// Base diffeomorphisms of R^(1+d).  jacobian() is always the exact Jacobian
// of forward(), which is what makes the lifted fibered maps symplectic to
// machine precision.

class BaseMap {
 public:
  virtual ~BaseMap() = default;
  virtual int config_dim() const = 0; // 1+d
  virtual Vec forward(const Vec& q) const = 0;
  virtual Vec inverse(const Vec& q) const = 0;
  virtual Mat jacobian(const Vec& q) const = 0;
  virtual std::string kind() const = 0;
  virtual Json recipe() const = 0;
};

using BasePtr = std::shared_ptr<const BaseMap>;

class IdentityBase final : public BaseMap {
 public:
  explicit IdentityBase(int n) : n_(n) {}
  int config_dim() const override { return n_; }
  Vec forward(const Vec& q) const override { return q; }
  Vec inverse(const Vec& q) const override { return q; }
  Mat jacobian(const Vec&) const override { return Mat::Identity(n_, n_); }
  std::string kind() const override { return "identity"; }
  Json recipe() const override;

 private:
  int n_;
};

class LinearBase final : public BaseMap {
 public:
  explicit LinearBase(Mat M);
  int config_dim() const override { return static_cast<int>(M_.rows()); }
  Vec forward(const Vec& q) const override { return M_ * q; }
  Vec inverse(const Vec& q) const override { return lu_.solve(q); }
  Mat jacobian(const Vec&) const override { return M_; }
  std::string kind() const override { return "linear"; }
  Json recipe() const override;

 private:
  Mat M_;
  Eigen::PartialPivLU<Mat> lu_;
};

// Components given as expressions in q0..qd; Jacobian symbolic, inverse by
// damped Newton.
class ExprBase final : public BaseMap {
 public:
  ExprBase(int d, std::vector<ExprPtr> components);
  int config_dim() const override { return d_ + 1; }
  Vec forward(const Vec& q) const override;
  Vec inverse(const Vec& q) const override;
  Mat jacobian(const Vec& q) const override;
  std::string kind() const override { return "expr-base"; }
  Json recipe() const override;

 private:
  int d_;
  std::vector<ExprPtr> comp_;
  std::vector<std::vector<ExprPtr>> jac_;
};

// Frame map xi(t, q*) = Q(t) + N q* around a sampled base curve; its
// inverse straightens the curve onto the axis.
class FrameBase final : public BaseMap {
 public:
  FrameBase(HermiteCurve curve, Mat N, double t_limit);
  int config_dim() const override;
  Vec forward(const Vec& q) const override;
  Vec inverse(const Vec& q) const override;
  Mat jacobian(const Vec& q) const override;
  std::string kind() const override { return "frame"; }
  Json recipe() const override;
  const HermiteCurve& curve() const { return curve_; }
  const Mat& normal_frame() const { return N_; }
  // Newton with an explicit starting guess for the curve parameter.
  Vec inverse_hint(const Vec& q, double t_hint) const;

 private:
  HermiteCurve curve_;
  Mat N_;
  double t_limit_;
};

// Shear (q0, q*) -> (q0 + l(q0).q*, q*).
class ShearBase final : public BaseMap {
 public:
  explicit ShearBase(SplineVec l);
  int config_dim() const override { return l_.size() + 1; }
  Vec forward(const Vec& q) const override;
  Vec inverse(const Vec& q) const override;
  Mat jacobian(const Vec& q) const override;
  std::string kind() const override { return "shear"; }
  Json recipe() const override;
  const SplineVec& shear() const { return l_; }

 private:
  SplineVec l_;
};

// Fiber-frame normalization (q0, q*) -> (q0, M(q0) q*).
class MetricBase final : public BaseMap {
 public:
  explicit MetricBase(SplineMat M);
  int config_dim() const override { return M_.rows() + 1; }
  Vec forward(const Vec& q) const override;
  Vec inverse(const Vec& q) const override;
  Mat jacobian(const Vec& q) const override;
  std::string kind() const override { return "metric"; }
  Json recipe() const override;
  const SplineMat& metric() const { return M_; }

 private:
  SplineMat M_;
};

// Flow-box chart (q0, q*) -> (q0, [Phi^{q0}(0, q*)]_*), held as a Chebyshev
// tensor per q* component.  Nodes come from an RK4 flow; the Jacobian is the
// differentiated interpolant.
class FlowBoxBase final : public BaseMap {
 public:
  FlowBoxBase(std::vector<ChebTensor> components, Vec p_level);
  int config_dim() const override { return static_cast<int>(comp_.size()) + 1; }
  Vec forward(const Vec& q) const override;
  Vec inverse(const Vec& q) const override;
  Mat jacobian(const Vec& q) const override;
  std::string kind() const override { return "flow-box"; }
  Json recipe() const override;
  const Vec& p_level() const { return p_level_; }

 private:
  void guard(const Vec& q) const;
  std::vector<ChebTensor> comp_;
  Vec p_level_;
};

// --------------------------------------------------------------------------
// Vertical generators: psi(q, p) = (q, p + du(q)), du exactly closed.

class VerticalField {
 public:
  virtual ~VerticalField() = default;
  virtual int config_dim() const = 0;
  virtual double u(const Vec& q) const = 0;
  virtual Vec du(const Vec& q) const = 0;
  virtual std::string kind() const = 0;
  virtual Json recipe() const = 0;
};

using VerticalPtr = std::shared_ptr<const VerticalField>;

class ExprVertical final : public VerticalField {
 public:
  ExprVertical(int d, ExprPtr u);
  int config_dim() const override { return d_ + 1; }
  double u(const Vec& q) const override;
  Vec du(const Vec& q) const override;
  std::string kind() const override { return "vertical-expr"; }
  Json recipe() const override;

 private:
  int d_;
  ExprPtr u_;
  std::vector<ExprPtr> du_;
};

// u(q) = v(q0) + P*(q0).q* with v' = P0; kills the momentum along the
// straightened orbit.
class MomentumKillVertical final : public VerticalField {
 public:
  MomentumKillVertical(Spline p0, SplineVec pstar, Spline v);
  int config_dim() const override { return pstar_.size() + 1; }
  double u(const Vec& q) const override;
  Vec du(const Vec& q) const override;
  std::string kind() const override { return "vertical-momentum"; }
  Json recipe() const override;
  const Spline& p0() const { return p0_; }
  const SplineVec& pstar() const { return pstar_; }
  const Spline& antiderivative() const { return v_; }

 private:
  Spline p0_;
  SplineVec pstar_;
  Spline v_;
};

// u(q) = <B(q0) q*, q*>/2 with symmetric B; restores the mixed-derivative
// condition after the metric factor.
class QuadraticVertical final : public VerticalField {
 public:
  explicit QuadraticVertical(SplineMat B);
  int config_dim() const override { return B_.rows() + 1; }
  double u(const Vec& q) const override;
  Vec du(const Vec& q) const override;
  std::string kind() const override { return "vertical-quadratic"; }
  Json recipe() const override;
  const SplineMat& B() const { return B_; }

 private:
  SplineMat B_;
};

// --------------------------------------------------------------------------

// A fibered symplectic diffeomorphism: vertical, homogeneous, or an ordered
// composite.  apply() evaluates composite factors in stored order.
class FiberedMap {
 public:
  enum class Tag { Vertical, Homogeneous, Composite };

  static FiberedMap vertical(VerticalPtr u);
  static FiberedMap homogeneous(BasePtr base);
  static FiberedMap composite(std::vector<FiberedMap> factors);
  static FiberedMap identity(int d);

  Tag tag() const { return tag_; }
  int config_dim() const;
  int d() const { return config_dim() - 1; }

  PhaseState apply(const PhaseState& x) const;
  PhaseState inverse_apply(const PhaseState& x) const;
  // y = apply(x) together with F = d(p_out)/d(p_in); fibers are affine in p
  // so F depends on q only.
  PhaseState apply_with_fiber(const PhaseState& x, Mat& F) const;

  const std::vector<FiberedMap>& factors() const { return factors_; }
  const BaseMap* base() const { return base_.get(); }
  const VerticalField* vertical_field() const { return vert_.get(); }

  Json recipe() const;
  static FiberedMap from_recipe(const Json& j);

  // An empty composite; usable only after assignment.
  FiberedMap() = default;

 private:
  Tag tag_ = Tag::Composite;
  BasePtr base_;
  VerticalPtr vert_;
  std::vector<FiberedMap> factors_;
};

// compose(outer, inner)(x) = outer(inner(x)); factor lists concatenate.
FiberedMap compose(const FiberedMap& outer, const FiberedMap& inner);

FiberedMap vertical_map(VerticalPtr u);
FiberedMap vertical_map(int d, const ExprPtr& u);
FiberedMap homogeneous_map(BasePtr base);

// Pullback H o psi as a new field; derivative oracles on the result go
// through finite differences of the composed evaluator, the exact fiber
// chain stays available for construction.
class TransformedField final : public HamiltonianField {
 public:
  TransformedField(HamPtr root, FiberedMap psi);
  std::string kind() const override { return "transformed"; }
  Vec fiber_gradient(const PhaseState& x) const override;
  Mat fiber_hessian(const PhaseState& x) const override;
  const FiberedMap& map() const { return psi_; }
  const HamPtr& root() const { return root_; }

 protected:
  double value_impl(const PhaseState& x) const override;

 private:
  HamPtr root_;
  FiberedMap psi_;
};

HamPtr pullback(HamPtr H, const FiberedMap& psi);

// Max |Dpsi^T J Dpsi - J| over the sample points, full Jacobian by central
// differences.
double check_symplectic(const std::function<PhaseState(const PhaseState&)>& map,
                        const std::vector<PhaseState>& points);
double check_symplectic(const FiberedMap& psi, const std::vector<PhaseState>& points);

struct Admissibility {
  bool admissible;
  double max_deviation;
};
// Does the base fix the axis segment [0, delta] e0 pointwise?
Admissibility is_admissible(const FiberedMap& psi, double delta, int grid_points);

} // namespace orbitnf

#endif

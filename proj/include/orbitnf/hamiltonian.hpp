#ifndef ORBITNF_HAMILTONIAN_HPP
#define ORBITNF_HAMILTONIAN_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "orbitnf/expr.hpp"
#include "orbitnf/phase.hpp"
#include "orbitnf/stencil.hpp"

namespace orbitnf {

// Evaluable Hamiltonian on T*R^(1+d).  Closed-form fields carry symbolic
// derivatives to order 3; every other kind (pullbacks, Maupertuis rescales,
// potential sums) is differentiated numerically on the composed evaluator.
// The fiber oracles (gradient/Hessian in p) are exact for every kind because
// all transformations in this project are affine in p; they power the
// construction side, while verification goes through fd_partial only.
class HamiltonianField {
 public:
  explicit HamiltonianField(int d) : d_(d) {
    if (d < 1) throw Error("HamiltonianField: d must be >= 1");
  }
  virtual ~HamiltonianField() = default;

  int dimension() const { return d_; }
  int n() const { return d_ + 1; }

  double value(const PhaseState& x) const;
  double value_flat(const Vec& flat) const { return value(PhaseState::from_flat(flat)); }

  virtual std::string kind() const = 0;
  virtual bool closed_form() const { return false; }

  // dH/dp as a column vector (exact chain rule through affine fibers).
  virtual Vec fiber_gradient(const PhaseState& x) const;
  // d^2H/dp dp, symmetric (1+d)x(1+d).
  virtual Mat fiber_hessian(const PhaseState& x) const;
  // dH/dq; symbolic for closed forms, light central differences otherwise.
  virtual Vec base_gradient(const PhaseState& x) const;

 protected:
  virtual double value_impl(const PhaseState& x) const = 0;

 private:
  int d_;
};

using HamPtr = std::shared_ptr<const HamiltonianField>;

class ClosedFormField : public HamiltonianField {
 public:
  ClosedFormField(int d, ExprPtr expr, std::string source_text = {});

  std::string kind() const override { return "closed-form"; }
  bool closed_form() const override { return true; }

  Vec fiber_gradient(const PhaseState& x) const override;
  Mat fiber_hessian(const PhaseState& x) const override;
  Vec base_gradient(const PhaseState& x) const override;

  const ExprPtr& expression() const { return expr_; }
  const std::string& source() const { return source_; }

  // Symbolic partial for a flat multi-index, |order| <= 3.
  double symbolic_partial(const std::vector<int>& order, const PhaseState& x) const;

  // Jacobian of the Hamiltonian vector field (for dense-output second
  // derivatives of integrated orbits).
  Mat field_jacobian(const PhaseState& x) const;

 protected:
  double value_impl(const PhaseState& x) const override;

 private:
  ExprPtr expr_;
  std::string source_;
  std::vector<ExprPtr> d1_;              // n_vars
  std::vector<std::vector<ExprPtr>> d2_; // upper triangle
  std::map<std::vector<int>, ExprPtr> d3_;
};

// Parse a closed-form Hamiltonian over q0..qd, p0..pd with parameters bound
// at parse time.
std::shared_ptr<const ClosedFormField> parse_hamiltonian(
    const std::string& text, int d, const std::map<std::string, double>& params = {});

// Derivative oracle used by everything downstream: symbolic when the field
// is closed form, Richardson-extrapolated central differences otherwise.
double partial(const HamiltonianField& H, const std::vector<int>& order,
               const PhaseState& x, const DerivativeStencil& stencil = {});

// Same but always finite differences, regardless of kind (the independent
// verification route).
double fd_field_partial(const HamiltonianField& H, const std::vector<int>& order,
                        const PhaseState& x, const DerivativeStencil& stencil = {});

// Flat index helpers.
inline int qvar(int i) { return i; }
inline int pvar(int i, int d) { return (d + 1) + i; }

struct FiberHessian {
  Mat matrix;
  double min_eigenvalue;
};

// Symmetrized p-Hessian with its smallest eigenvalue, at momentum p (the
// overload taking only q evaluates on the zero section).
FiberHessian hessian_pp(const HamiltonianField& H, const PhaseState& x,
                        const DerivativeStencil& stencil = {});
FiberHessian hessian_pp(const HamiltonianField& H, const Vec& q,
                        const DerivativeStencil& stencil = {});

// Smallest fiber-Hessian eigenvalue over seeded samples of the tube.
double convexity_margin(const HamiltonianField& H, const Tube& tube, int samples,
                        unsigned seed);

struct BuiltinEntry {
  std::string name;
  int d;
  std::string expression;
  std::map<std::string, double> params;
  PhaseState start;
  double delta;
  bool convex;         // positive-definite fiber Hessian on the tube
  double homogeneous_degree; // 0 when not fiberwise homogeneous
};

const std::vector<BuiltinEntry>& builtin_library();
const BuiltinEntry& builtin_entry(const std::string& name);
std::shared_ptr<const ClosedFormField> make_builtin(
    const std::string& name, const std::map<std::string, double>& param_overrides = {});

} // namespace orbitnf

#endif

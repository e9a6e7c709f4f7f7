#ifndef ORBITNF_STENCIL_HPP
#define ORBITNF_STENCIL_HPP

#include <functional>
#include <vector>

#include "orbitnf/phase.hpp"

namespace orbitnf {

// Central-difference stencil with Richardson extrapolation.  base_step is
// multiplied by the per-variable scale; third-order derivatives use the
// wider third_step to keep cancellation in check.
struct DerivativeStencil {
  double base_step = 1e-4;
  int richardson_levels = 1;
  double third_step = 1e-3;
  Vec scale; // empty means all ones

  double step_for(int var) const {
    return base_step * (scale.size() > var ? scale[var] : 1.0);
  }
  double third_step_for(int var) const {
    return third_step * (scale.size() > var ? scale[var] : 1.0);
  }
};

using FlatFn = std::function<double(const Vec&)>;

// Partial derivative of f at x for a multi-index given as a list of flat
// variable indices (|order| <= 3).
double fd_partial(const FlatFn& f, const std::vector<int>& order, const Vec& x,
                  const DerivativeStencil& stencil = {});

// Plain central differences without Richardson, for cheap inner loops
// (integration right-hand sides).  |order| = 1 only.
double fd_first_plain(const FlatFn& f, int var, const Vec& x, double h);

// Full Jacobian of a map R^n -> R^m by central differences.
Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h);

} // namespace orbitnf

#endif

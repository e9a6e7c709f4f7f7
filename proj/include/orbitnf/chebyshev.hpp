#ifndef ORBITNF_CHEBYSHEV_HPP
#define ORBITNF_CHEBYSHEV_HPP

#include <functional>
#include <vector>

#include "orbitnf/phase.hpp"

namespace orbitnf {

// Tensor-product Chebyshev interpolant on a box, used as the smooth
// representation of flow-backed base maps.  Nodes are Chebyshev roots per
// axis; coefficients come from the discrete cosine transform (naive O(n^2)
// per axis, the grids here are tiny).
class ChebTensor {
 public:
  ChebTensor() = default;
  ChebTensor(std::vector<double> lo, std::vector<double> hi, std::vector<int> npts);

  int dims() const { return static_cast<int>(n_.size()); }
  const std::vector<double>& coefficients() const { return coef_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  const std::vector<int>& points() const { return n_; }

  // Tensor grid of interpolation nodes, row-major over the index tuple.
  std::vector<Vec> nodes() const;
  // Fit from values at exactly the node order produced by nodes().
  void fit(const std::vector<double>& node_values);
  void set_coefficients(std::vector<double> coef);

  double eval(const Vec& x) const;
  // Value and gradient together.
  double eval_grad(const Vec& x, Vec& grad) const;

 private:
  void basis(int axis, double x, std::vector<double>& T, std::vector<double>* dT) const;
  std::vector<double> lo_, hi_;
  std::vector<int> n_;
  std::vector<double> coef_;
};

} // namespace orbitnf

#endif

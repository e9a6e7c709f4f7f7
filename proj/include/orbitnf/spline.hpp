#ifndef ORBITNF_SPLINE_HPP
#define ORBITNF_SPLINE_HPP

#include <vector>

#include "orbitnf/phase.hpp"

namespace orbitnf {

// Natural cubic spline on a uniform grid.  The axis quantities of the
// pipeline (momenta, shear coefficients, metric paths) are all sampled on
// the orbit grid and interpolated with these.
class Spline {
 public:
  Spline() = default;
  Spline(double x0, double dx, std::vector<double> values);

  double eval(double x) const;
  double deriv(double x) const;
  double second(double x) const;

  double x0() const { return x0_; }
  double dx() const { return dx_; }
  double xmin() const { return x0_; }
  double xmax() const { return x0_ + dx_ * (static_cast<double>(y_.size()) - 1); }
  const std::vector<double>& values() const { return y_; }

 private:
  void locate(double x, int& cell, double& t) const;
  double x0_ = 0, dx_ = 1;
  std::vector<double> y_;
  std::vector<double> m_; // second derivatives at knots
};

// Component-wise vector- and matrix-valued splines on a shared grid.
class SplineVec {
 public:
  SplineVec() = default;
  SplineVec(double x0, double dx, const std::vector<Vec>& values);
  Vec eval(double x) const;
  Vec deriv(double x) const;
  int size() const { return static_cast<int>(comp_.size()); }
  const Spline& component(int i) const { return comp_[i]; }

 private:
  std::vector<Spline> comp_;
};

class SplineMat {
 public:
  SplineMat() = default;
  SplineMat(double x0, double dx, const std::vector<Mat>& values);
  Mat eval(double x) const;
  Mat deriv(double x) const;
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Spline& component(int i, int j) const { return comp_[i * cols_ + j]; }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<Spline> comp_;
};

// Hermite interpolation of a sampled curve t -> R^m on a uniform grid;
// cubic from (y, y'), quintic when second derivatives are supplied.  The
// reported derivative is exactly the derivative of the interpolant, so maps
// built on top of it have consistent Jacobians.
class HermiteCurve {
 public:
  HermiteCurve() = default;
  HermiteCurve(double t0, double dt, std::vector<Vec> y, std::vector<Vec> dy,
               std::vector<Vec> ddy = {});

  Vec eval(double t) const;
  Vec deriv(double t) const;
  double tmin() const { return t0_; }
  double tmax() const { return t0_ + dt_ * (static_cast<double>(y_.size()) - 1); }
  double t0() const { return t0_; }
  double dt() const { return dt_; }
  int nodes() const { return static_cast<int>(y_.size()); }
  const std::vector<Vec>& values() const { return y_; }
  const std::vector<Vec>& derivs() const { return dy_; }
  const std::vector<Vec>& seconds() const { return ddy_; }

 private:
  void locate(double t, int& cell, double& s) const;
  double t0_ = 0, dt_ = 1;
  std::vector<Vec> y_, dy_, ddy_;
};

} // namespace orbitnf

#endif

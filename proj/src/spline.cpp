#include "orbitnf/spline.hpp"

#include <cmath>

namespace orbitnf {

Spline::Spline(double x0, double dx, std::vector<double> values)
    : x0_(x0), dx_(dx), y_(std::move(values)) {
  const int n = static_cast<int>(y_.size());
  if (n < 2) throw Error("Spline: need at least two knots");
  if (dx_ <= 0) throw Error("Spline: dx must be positive");
  m_.assign(n, 0.0);
  if (n == 2) return;
  // Tridiagonal system for natural end conditions, uniform spacing.
  std::vector<double> diag(n - 2, 4.0), rhs(n - 2);
  for (int i = 1; i <= n - 2; ++i)
    rhs[i - 1] = 6.0 * (y_[i - 1] - 2.0 * y_[i] + y_[i + 1]) / (dx_ * dx_);
  for (int i = 1; i < n - 2; ++i) {
    double w = 1.0 / diag[i - 1];
    diag[i] -= w;
    rhs[i] -= w * rhs[i - 1];
  }
  for (int i = n - 3; i >= 0; --i) {
    double upper = (i + 1 < n - 2) ? m_[i + 2] : 0.0;
    m_[i + 1] = (rhs[i] - upper) / diag[i];
  }
}

void Spline::locate(double x, int& cell, double& t) const {
  const int n = static_cast<int>(y_.size());
  double s = (x - x0_) / dx_;
  cell = static_cast<int>(std::floor(s));
  if (cell < 0) cell = 0;
  if (cell > n - 2) cell = n - 2;
  t = s - cell;
}

double Spline::eval(double x) const {
  int i;
  double t;
  locate(x, i, t);
  const double a = 1.0 - t;
  return a * y_[i] + t * y_[i + 1] +
         (dx_ * dx_ / 6.0) *
             ((a * a * a - a) * m_[i] + (t * t * t - t) * m_[i + 1]);
}

double Spline::deriv(double x) const {
  int i;
  double t;
  locate(x, i, t);
  const double a = 1.0 - t;
  return (y_[i + 1] - y_[i]) / dx_ +
         (dx_ / 6.0) *
             ((3.0 * t * t - 1.0) * m_[i + 1] - (3.0 * a * a - 1.0) * m_[i]);
}

double Spline::second(double x) const {
  int i;
  double t;
  locate(x, i, t);
  return (1.0 - t) * m_[i] + t * m_[i + 1];
}

SplineVec::SplineVec(double x0, double dx, const std::vector<Vec>& values) {
  if (values.empty()) throw Error("SplineVec: empty sample list");
  const int m = static_cast<int>(values.front().size());
  comp_.reserve(m);
  for (int c = 0; c < m; ++c) {
    std::vector<double> ys(values.size());
    for (size_t k = 0; k < values.size(); ++k) ys[k] = values[k][c];
    comp_.emplace_back(x0, dx, std::move(ys));
  }
}

Vec SplineVec::eval(double x) const {
  Vec out(size());
  for (int c = 0; c < size(); ++c) out[c] = comp_[c].eval(x);
  return out;
}

Vec SplineVec::deriv(double x) const {
  Vec out(size());
  for (int c = 0; c < size(); ++c) out[c] = comp_[c].deriv(x);
  return out;
}

SplineMat::SplineMat(double x0, double dx, const std::vector<Mat>& values) {
  if (values.empty()) throw Error("SplineMat: empty sample list");
  rows_ = static_cast<int>(values.front().rows());
  cols_ = static_cast<int>(values.front().cols());
  comp_.reserve(rows_ * cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) {
      std::vector<double> ys(values.size());
      for (size_t k = 0; k < values.size(); ++k) ys[k] = values[k](i, j);
      comp_.emplace_back(x0, dx, std::move(ys));
    }
}

Mat SplineMat::eval(double x) const {
  Mat out(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) out(i, j) = comp_[i * cols_ + j].eval(x);
  return out;
}

Mat SplineMat::deriv(double x) const {
  Mat out(rows_, cols_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) out(i, j) = comp_[i * cols_ + j].deriv(x);
  return out;
}

HermiteCurve::HermiteCurve(double t0, double dt, std::vector<Vec> y,
                           std::vector<Vec> dy, std::vector<Vec> ddy)
    : t0_(t0), dt_(dt), y_(std::move(y)), dy_(std::move(dy)), ddy_(std::move(ddy)) {
  if (y_.size() < 2 || y_.size() != dy_.size())
    throw Error("HermiteCurve: inconsistent node arrays");
  if (!ddy_.empty() && ddy_.size() != y_.size())
    throw Error("HermiteCurve: inconsistent second-derivative array");
  if (dt_ <= 0) throw Error("HermiteCurve: dt must be positive");
}

void HermiteCurve::locate(double t, int& cell, double& s) const {
  const int n = nodes();
  double u = (t - t0_) / dt_;
  cell = static_cast<int>(std::floor(u));
  if (cell < 0) cell = 0;
  if (cell > n - 2) cell = n - 2;
  s = u - cell;
}

Vec HermiteCurve::eval(double t) const {
  int i;
  double s;
  locate(t, i, s);
  const Vec &x0 = y_[i], &x1 = y_[i + 1];
  const Vec v0 = dt_ * dy_[i], v1 = dt_ * dy_[i + 1];
  if (ddy_.empty()) {
    double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    double h10 = s * (1 - s) * (1 - s);
    double h01 = s * s * (3 - 2 * s);
    double h11 = s * s * (s - 1);
    return h00 * x0 + h10 * v0 + h01 * x1 + h11 * v1;
  }
  const Vec a0 = dt_ * dt_ * ddy_[i], a1 = dt_ * dt_ * ddy_[i + 1];
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
  const double H0 = 1 - 10 * s3 + 15 * s4 - 6 * s5;
  const double H1 = s - 6 * s3 + 8 * s4 - 3 * s5;
  const double H2 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5);
  const double H3 = 0.5 * (s3 - 2 * s4 + s5);
  const double H4 = -4 * s3 + 7 * s4 - 3 * s5;
  const double H5 = 10 * s3 - 15 * s4 + 6 * s5;
  return H0 * x0 + H1 * v0 + H2 * a0 + H3 * a1 + H4 * v1 + H5 * x1;
}

Vec HermiteCurve::deriv(double t) const {
  int i;
  double s;
  locate(t, i, s);
  const Vec &x0 = y_[i], &x1 = y_[i + 1];
  const Vec v0 = dt_ * dy_[i], v1 = dt_ * dy_[i + 1];
  if (ddy_.empty()) {
    double d00 = 6 * s * (s - 1);
    double d10 = (1 - s) * (1 - 3 * s);
    double d01 = 6 * s * (1 - s);
    double d11 = s * (3 * s - 2);
    return (d00 * x0 + d10 * v0 + d01 * x1 + d11 * v1) / dt_;
  }
  const Vec a0 = dt_ * dt_ * ddy_[i], a1 = dt_ * dt_ * ddy_[i + 1];
  const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
  const double H0 = -30 * s2 + 60 * s3 - 30 * s4;
  const double H1 = 1 - 18 * s2 + 32 * s3 - 15 * s4;
  const double H2 = 0.5 * (2 * s - 9 * s2 + 12 * s3 - 5 * s4);
  const double H3 = 0.5 * (3 * s2 - 8 * s3 + 5 * s4);
  const double H4 = -12 * s2 + 28 * s3 - 15 * s4;
  const double H5 = 30 * s2 - 60 * s3 + 30 * s4;
  return (H0 * x0 + H1 * v0 + H2 * a0 + H3 * a1 + H4 * v1 + H5 * x1) / dt_;
}

} // namespace orbitnf

#include "orbitnf/chebyshev.hpp"

#include <cmath>
#include <numeric>

namespace orbitnf {

ChebTensor::ChebTensor(std::vector<double> lo, std::vector<double> hi,
                       std::vector<int> npts)
    : lo_(std::move(lo)), hi_(std::move(hi)), n_(std::move(npts)) {
  if (lo_.size() != hi_.size() || lo_.size() != n_.size() || lo_.empty())
    throw Error("ChebTensor: inconsistent box specification");
  for (size_t a = 0; a < n_.size(); ++a) {
    if (n_[a] < 2) throw Error("ChebTensor: need at least 2 points per axis");
    if (!(hi_[a] > lo_[a])) throw Error("ChebTensor: empty axis interval");
  }
}

std::vector<Vec> ChebTensor::nodes() const {
  const int m = dims();
  long total = 1;
  for (int a = 0; a < m; ++a) total *= n_[a];
  std::vector<Vec> out;
  out.reserve(total);
  std::vector<int> idx(m, 0);
  for (long c = 0; c < total; ++c) {
    Vec x(m);
    for (int a = 0; a < m; ++a) {
      double u = std::cos(M_PI * (idx[a] + 0.5) / n_[a]); // root nodes in [-1,1]
      x[a] = lo_[a] + (hi_[a] - lo_[a]) * (u + 1.0) / 2.0;
    }
    out.push_back(std::move(x));
    for (int a = m - 1; a >= 0; --a) {
      if (++idx[a] < n_[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

void ChebTensor::fit(const std::vector<double>& values) {
  const int m = dims();
  long total = 1;
  for (int a = 0; a < m; ++a) total *= n_[a];
  if (static_cast<long>(values.size()) != total)
    throw Error("ChebTensor::fit: wrong number of node values");
  std::vector<double> work = values;
  // Transform along each axis in turn.  Axis m-1 is contiguous (row-major).
  long stride = 1;
  for (int a = m - 1; a >= 0; --a) {
    const int n = n_[a];
    const long blocks = total / n;
    std::vector<double> line(n), tline(n);
    for (long b = 0; b < blocks; ++b) {
      // Compute the base offset of this line.
      long inner = b % stride;
      long outer = b / stride;
      long base = outer * stride * n + inner;
      for (int k = 0; k < n; ++k) line[k] = work[base + k * stride];
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int k = 0; k < n; ++k)
          s += line[k] * std::cos(M_PI * j * (k + 0.5) / n);
        tline[j] = s * (j == 0 ? 1.0 : 2.0) / n;
      }
      for (int j = 0; j < n; ++j) work[base + j * stride] = tline[j];
    }
    stride *= n;
  }
  coef_ = std::move(work);
}

void ChebTensor::set_coefficients(std::vector<double> coef) {
  long total = 1;
  for (int a = 0; a < dims(); ++a) total *= n_[a];
  if (static_cast<long>(coef.size()) != total)
    throw Error("ChebTensor::set_coefficients: wrong size");
  coef_ = std::move(coef);
}

void ChebTensor::basis(int axis, double x, std::vector<double>& T,
                       std::vector<double>* dT) const {
  const int n = n_[axis];
  const double scale = 2.0 / (hi_[axis] - lo_[axis]);
  double u = (x - lo_[axis]) * scale - 1.0;
  T.resize(n);
  T[0] = 1.0;
  if (n > 1) T[1] = u;
  for (int k = 2; k < n; ++k) T[k] = 2.0 * u * T[k - 1] - T[k - 2];
  if (dT) {
    // T_k' = k U_{k-1}; U recurrence.
    std::vector<double> U(n);
    U[0] = 1.0;
    if (n > 1) U[1] = 2.0 * u;
    for (int k = 2; k < n; ++k) U[k] = 2.0 * u * U[k - 1] - U[k - 2];
    dT->resize(n);
    (*dT)[0] = 0.0;
    for (int k = 1; k < n; ++k) (*dT)[k] = k * U[k - 1] * scale;
  }
}

double ChebTensor::eval(const Vec& x) const {
  Vec dummy;
  const int m = dims();
  std::vector<std::vector<double>> T(m);
  for (int a = 0; a < m; ++a) basis(a, x[a], T[a], nullptr);
  long total = static_cast<long>(coef_.size());
  std::vector<int> idx(m, 0);
  double acc = 0;
  for (long c = 0; c < total; ++c) {
    double prod = coef_[c];
    for (int a = 0; a < m; ++a) prod *= T[a][idx[a]];
    acc += prod;
    for (int a = m - 1; a >= 0; --a) {
      if (++idx[a] < n_[a]) break;
      idx[a] = 0;
    }
  }
  return acc;
}

double ChebTensor::eval_grad(const Vec& x, Vec& grad) const {
  const int m = dims();
  std::vector<std::vector<double>> T(m), dT(m);
  for (int a = 0; a < m; ++a) basis(a, x[a], T[a], &dT[a]);
  grad = Vec::Zero(m);
  double value = 0;
  long total = static_cast<long>(coef_.size());
  std::vector<int> idx(m, 0);
  for (long c = 0; c < total; ++c) {
    const double cf = coef_[c];
    double prod = cf;
    for (int a = 0; a < m; ++a) prod *= T[a][idx[a]];
    value += prod;
    for (int g = 0; g < m; ++g) {
      double dp = cf;
      for (int a = 0; a < m; ++a) dp *= (a == g) ? dT[a][idx[a]] : T[a][idx[a]];
      grad[g] += dp;
    }
    for (int a = m - 1; a >= 0; --a) {
      if (++idx[a] < n_[a]) break;
      idx[a] = 0;
    }
  }
  return value;
}

} // namespace orbitnf

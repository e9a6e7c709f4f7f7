#include "orbitnf/stencil.hpp"

#include <cmath>

namespace orbitnf {

namespace {

// Richardson/Neville table over step halving; central stencils have even
// error expansions, so the extrapolation ratio is 4^j.
double richardson(const std::function<double(double)>& estimate, double h,
                  int levels) {
  std::vector<double> row(levels + 1);
  for (int k = 0; k <= levels; ++k) {
    double cur = estimate(h / std::pow(2.0, k));
    double factor = 4.0;
    for (int j = 0; j < k; ++j) {
      double prev = row[j];
      double next = (factor * cur - prev) / (factor - 1.0);
      row[j] = cur;
      cur = next;
      factor *= 4.0;
    }
    row[k] = cur;
  }
  return row[levels];
}

double shifted(const FlatFn& f, Vec x, int i, double hi) {
  x[i] += hi;
  return f(x);
}

double shifted2(const FlatFn& f, Vec x, int i, double hi, int j, double hj) {
  x[i] += hi;
  x[j] += hj;
  return f(x);
}

double second_estimate(const FlatFn& f, const Vec& x, int i, int j, double hi,
                       double hj) {
  if (i == j) {
    double c = f(x);
    return (shifted(f, x, i, hi) - 2.0 * c + shifted(f, x, i, -hi)) / (hi * hi);
  }
  return (shifted2(f, x, i, hi, j, hj) - shifted2(f, x, i, hi, j, -hj) -
          shifted2(f, x, i, -hi, j, hj) + shifted2(f, x, i, -hi, j, -hj)) /
         (4.0 * hi * hj);
}

} // namespace

double fd_partial(const FlatFn& f, const std::vector<int>& order, const Vec& x,
                  const DerivativeStencil& st) {
  if (order.empty()) return f(x);
  if (order.size() > 3)
    throw Error("fd_partial: multi-index order exceeds supported degree 3");

  double result = 0.0;
  if (order.size() == 1) {
    const int i = order[0];
    result = richardson(
        [&](double h) {
          return (shifted(f, x, i, h) - shifted(f, x, i, -h)) / (2.0 * h);
        },
        st.step_for(i), st.richardson_levels);
  } else if (order.size() == 2) {
    const int i = order[0], j = order[1];
    const double ratio = st.step_for(j) / st.step_for(i);
    result = richardson(
        [&](double h) { return second_estimate(f, x, i, j, h, h * ratio); },
        st.step_for(i), st.richardson_levels);
  } else {
    // Nested: outer first derivative of an inner second derivative, both on
    // the wider third-order step.
    const int i = order[0], j = order[1], k = order[2];
    const double hi = st.third_step_for(i), hj = st.third_step_for(j);
    const double hk = st.third_step_for(k);
    auto inner = [&](const Vec& y) { return second_estimate(f, y, i, j, hi, hj); };
    Vec xp = x, xm = x;
    xp[k] += hk;
    xm[k] -= hk;
    result = (inner(xp) - inner(xm)) / (2.0 * hk);
  }
  if (!std::isfinite(result))
    throw Error("fd_partial: non-finite derivative estimate");
  return result;
}

double fd_first_plain(const FlatFn& f, int var, const Vec& x, double h) {
  return (shifted(f, x, var, h) - shifted(f, x, var, -h)) / (2.0 * h);
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
  Vec probe = x;
  probe[0] += h;
  Vec f0 = f(probe);
  Mat J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

} // namespace orbitnf

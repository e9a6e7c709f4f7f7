#ifndef ORBITNF_PHASE_HPP
#define ORBITNF_PHASE_HPP

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace orbitnf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A point of T*R^(1+d).  q = (q0, q*) is the configuration, p = (p0, p*)
// the momentum covector; both have length 1+d with d >= 1.
struct PhaseState {
  Vec q;
  Vec p;

  PhaseState() = default;
  PhaseState(Vec q_, Vec p_) : q(std::move(q_)), p(std::move(p_)) {
    if (q.size() != p.size() || q.size() < 2)
      throw Error("PhaseState: q and p must have equal length >= 2");
  }

  int d() const { return static_cast<int>(q.size()) - 1; }
  int n() const { return static_cast<int>(q.size()); }

  Vec qstar() const { return q.tail(d()); }
  Vec pstar() const { return p.tail(d()); }

  Vec flat() const {
    Vec v(2 * n());
    v << q, p;
    return v;
  }
  static PhaseState from_flat(const Vec& v) {
    const int n = static_cast<int>(v.size()) / 2;
    return PhaseState(v.head(n), v.tail(n));
  }
};

inline Vec axis_point(int d, double t) {
  Vec q = Vec::Zero(d + 1);
  q[0] = t;
  return q;
}

inline PhaseState axis_state(int d, double t) {
  return PhaseState(axis_point(d, t), Vec::Zero(d + 1));
}

// Canonical symplectic matrix on R^{2n}, block form [[0, I], [-I, 0]].
inline Mat canonical_J(int n) {
  Mat J = Mat::Zero(2 * n, 2 * n);
  J.topRightCorner(n, n) = Mat::Identity(n, n);
  J.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  return J;
}

// Local working region around the straightened segment.  The normal form
// only holds near the orbit, so every sampled check stays inside this box.
struct Tube {
  double q0_half = 0.6;       // |q0| bound
  double qstar_radius = 0.25; // |q*_i| bound
  double p_radius = 1.0;      // |p_i| bound

  bool contains_base(const Vec& q) const {
    if (std::abs(q[0]) > q0_half) return false;
    for (int i = 1; i < q.size(); ++i)
      if (std::abs(q[i]) > qstar_radius) return false;
    return true;
  }
  bool contains(const PhaseState& x) const {
    if (!contains_base(x.q)) return false;
    for (int i = 0; i < x.p.size(); ++i)
      if (std::abs(x.p[i]) > p_radius) return false;
    return true;
  }
};

inline std::vector<PhaseState> sample_tube(const Tube& tube, int d, int count,
                                           unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<PhaseState> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vec q(d + 1), p(d + 1);
    q[0] = unit(rng) * tube.q0_half;
    for (int i = 1; i <= d; ++i) q[i] = unit(rng) * tube.qstar_radius;
    for (int i = 0; i <= d; ++i) p[i] = unit(rng) * tube.p_radius;
    out.emplace_back(std::move(q), std::move(p));
  }
  return out;
}

} // namespace orbitnf

#endif

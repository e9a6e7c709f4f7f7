#ifndef ORBITNF_TEST_UTIL_HPP
#define ORBITNF_TEST_UTIL_HPP

#include <random>
#include <vector>

#include "orbitnf/phase.hpp"

namespace orbitnf::testutil {

// Brute-force oracle for the Lyapunov equation: solve the vectorized
// d(d+1)/2 linear system B A + A B = A' with a dense LU factorization.
// Independent of the eigenbasis route used by the library.
inline Mat lyapunov_vectorized_oracle(const Mat& A, const Mat& Ap) {
  const int d = static_cast<int>(A.rows());
  std::vector<std::pair<int, int>> idx;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) idx.emplace_back(i, j);
  const int m = static_cast<int>(idx.size());
  Mat S = Mat::Zero(m, m);
  Vec rhs(m);
  for (int r = 0; r < m; ++r) {
    auto [i, j] = idx[r];
    rhs[r] = Ap(i, j);
    for (int c = 0; c < m; ++c) {
      auto [k, l] = idx[c];
      double coeff = 0;
      coeff += (k == i) ? A(l, j) : 0;
      coeff += (l == i && k != l) ? A(k, j) : 0;
      coeff += (l == j) ? A(i, k) : 0;
      coeff += (k == j && k != l) ? A(i, l) : 0;
      S(r, c) = coeff;
    }
  }
  Vec b = S.fullPivLu().solve(rhs);
  Mat B(d, d);
  for (int c = 0; c < m; ++c) {
    auto [k, l] = idx[c];
    B(k, l) = B(l, k) = b[c];
  }
  return B;
}

inline Mat random_spd(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Mat G(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) G(i, j) = unif(rng);
  return Mat(G * G.transpose() + 0.3 * Mat::Identity(d, d));
}

inline Mat random_sym(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Mat G(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) G(i, j) = unif(rng);
  return Mat((G + G.transpose()) / 2);
}

} // namespace orbitnf::testutil

#endif

#include <doctest.h>

#include <cmath>
#include <random>

#include "orbitnf/expr.hpp"

using namespace orbitnf;

namespace {

Vec vars4(double q0, double q1, double p0, double p1) {
  Vec v(4);
  v << q0, q1, p0, p1;
  return v;
}

// Independent derivative oracle for the cross-check property: plain central
// differences on the evaluator, no Richardson.
double fd1(const ExprPtr& e, const Vec& x, int i, double h = 1e-6) {
  Vec a = x, b = x;
  a[i] += h;
  b[i] -= h;
  return (expr_eval(e, a) - expr_eval(e, b)) / (2 * h);
}

} // namespace

TEST_CASE("parse and evaluate simple expressions") {
  auto e = parse_expression("0.5*(p0^2+p1^2)", 1);
  CHECK(expr_eval(e, vars4(0, 0, 1, 0)) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(expr_eval(e, vars4(3, -2, 1, 2)) == doctest::Approx(2.5).epsilon(1e-14));

  auto f = parse_expression("1+2*3^2", 1);
  CHECK(expr_eval(f, vars4(0, 0, 0, 0)) == doctest::Approx(19.0));

  auto g = parse_expression("-p0^2", 1); // unary minus binds weaker than ^
  CHECK(expr_eval(g, vars4(0, 0, 2, 0)) == doctest::Approx(-4.0));
}

TEST_CASE("parameters are bound at parse time") {
  auto e = parse_expression("0.5*(p0^2+p1^2)+eps*q1*p0", 1, {{"eps", 0.1}});
  CHECK(expr_eval(e, vars4(0, 1, 1, 0)) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK_THROWS_AS(parse_expression("eps*q1", 1), ParseError);
}

TEST_CASE("parse errors carry a position") {
  try {
    parse_expression("q0+*q1", 1);
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.pos == 3);
  }
  CHECK_THROWS_AS(parse_expression("q0+(q1", 1), ParseError);
  CHECK_THROWS_AS(parse_expression("q2+1", 1), ParseError); // dimension mismatch
  CHECK_THROWS_AS(parse_expression("foo+1", 1), ParseError);
}

TEST_CASE("print-parse is a fixed point") {
  const char* cases[] = {
      "0.5*(p0^2+p1^2)",
      "0.5*p0^2+0.5*(1+q0)*p1^2",
      "sqrt(p0^2+(1+q0^2)*p1^2)",
      "0.5*(p0^2+p1^2)+0.5*q1^2",
      "q0-q1-p0",
      "q0/(q1*p0)",
      "-(q0+q1)^3",
      "sin(q0)*cos(p1)+exp(q1)/log(2+q0)",
  };
  for (const char* text : cases) {
    auto e1 = parse_expression(text, 1);
    std::string s1 = expr_to_string(e1, 1);
    auto e2 = parse_expression(s1, 1);
    std::string s2 = expr_to_string(e2, 1);
    CHECK(s1 == s2);
    // and identical values
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.1, 0.9);
    for (int k = 0; k < 20; ++k) {
      Vec x = vars4(unif(rng), unif(rng), unif(rng), unif(rng));
      CHECK(expr_eval(e1, x) == doctest::Approx(expr_eval(e2, x)).epsilon(1e-15));
    }
  }
}

TEST_CASE("symbolic differentiation agrees with finite differences") {
  const char* cases[] = {
      "0.5*(p0^2+p1^2)",
      "sqrt(p0^2+(1+q0^2)*p1^2)",
      "sin(q0*p1)+cos(q1)^2",
      "exp(0.3*q0)*log(2+p0^2)",
      "(1+q0)^3/(2+p1^2)",
      "p0^p1",
  };
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.2, 0.8);
  for (const char* text : cases) {
    auto e = parse_expression(text, 1);
    for (int var = 0; var < 4; ++var) {
      auto de = differentiate(e, var);
      for (int k = 0; k < 10; ++k) {
        Vec x = vars4(unif(rng), unif(rng), unif(rng), unif(rng));
        double sym = expr_eval(de, x);
        double num = fd1(e, x, var);
        CHECK(sym == doctest::Approx(num).epsilon(1e-6 * (1 + std::abs(sym)) + 1e-8));
      }
    }
  }
}

TEST_CASE("third derivatives terminate and evaluate") {
  auto e = parse_expression("0.5*(p0^2+(1+q0)*p1^2)", 1);
  auto d3 = differentiate(differentiate(differentiate(e, 3), 3), 0);
  CHECK(expr_eval(d3, vars4(0, 0, 0, 0)) == doctest::Approx(1.0));
}

TEST_CASE("momentum usage detection") {
  CHECK(expr_uses_momentum(parse_expression("q0*p1", 1), 1));
  CHECK_FALSE(expr_uses_momentum(parse_expression("q0*q1^2", 1), 1));
}

#ifndef ORBITNF_EXPR_HPP
#define ORBITNF_EXPR_HPP

#include <map>
#include <memory>
#include <string>

#include "orbitnf/phase.hpp"

namespace orbitnf {

// Expression mini-language over the variables q0..qd, p0..pd with
// +, -, *, /, ^, sqrt, sin, cos, exp, log and named parameters bound at
// parse time.  Variables are addressed by flat index: q_i -> i,
// p_i -> (1+d)+i.

struct ParseError : Error {
  ParseError(const std::string& what, int position)
      : Error(what + " at position " + std::to_string(position)),
        pos(position) {}
  int pos;
};

enum class ExprKind {
  Constant,
  Variable,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Sqrt,
  Sin,
  Cos,
  Exp,
  Log
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind;
  double value = 0.0; // Constant
  int var = -1;       // Variable (flat index)
  ExprPtr a, b;
};

// Node builders with constant folding and unit/zero simplification.
ExprPtr expr_const(double v);
ExprPtr expr_var(int flat_index);
ExprPtr expr_add(ExprPtr a, ExprPtr b);
ExprPtr expr_sub(ExprPtr a, ExprPtr b);
ExprPtr expr_mul(ExprPtr a, ExprPtr b);
ExprPtr expr_div(ExprPtr a, ExprPtr b);
ExprPtr expr_pow(ExprPtr a, ExprPtr b);
ExprPtr expr_neg(ExprPtr a);
ExprPtr expr_func(ExprKind kind, ExprPtr a);

ExprPtr parse_expression(const std::string& text, int d,
                         const std::map<std::string, double>& params = {});

// Canonical printing; parse(print(e)) evaluates identically to e and
// printing is a fixed point of parse-then-print.
std::string expr_to_string(const ExprPtr& e, int d);

ExprPtr differentiate(const ExprPtr& e, int flat_index);

double expr_eval(const ExprPtr& e, const Vec& flat_vars);

// True if the expression references any momentum variable p0..pd.
bool expr_uses_momentum(const ExprPtr& e, int d);

} // namespace orbitnf

#endif

#include "orbitnf/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>

namespace orbitnf {

namespace {

bool is_const(const ExprPtr& e, double v) {
  return e->kind == ExprKind::Constant && e->value == v;
}

ExprPtr make(ExprKind k, ExprPtr a = nullptr, ExprPtr b = nullptr) {
  auto e = std::make_shared<Expr>();
  e->kind = k;
  e->a = std::move(a);
  e->b = std::move(b);
  return e;
}

} // namespace

ExprPtr expr_const(double v) {
  auto e = std::make_shared<Expr>();
  e->kind = ExprKind::Constant;
  e->value = v;
  return e;
}

ExprPtr expr_var(int flat_index) {
  auto e = std::make_shared<Expr>();
  e->kind = ExprKind::Variable;
  e->var = flat_index;
  return e;
}

ExprPtr expr_add(ExprPtr a, ExprPtr b) {
  if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
    return expr_const(a->value + b->value);
  if (is_const(a, 0)) return b;
  if (is_const(b, 0)) return a;
  return make(ExprKind::Add, std::move(a), std::move(b));
}

ExprPtr expr_sub(ExprPtr a, ExprPtr b) {
  if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
    return expr_const(a->value - b->value);
  if (is_const(b, 0)) return a;
  if (is_const(a, 0)) return expr_neg(std::move(b));
  return make(ExprKind::Sub, std::move(a), std::move(b));
}

ExprPtr expr_mul(ExprPtr a, ExprPtr b) {
  if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
    return expr_const(a->value * b->value);
  if (is_const(a, 0) || is_const(b, 0)) return expr_const(0);
  if (is_const(a, 1)) return b;
  if (is_const(b, 1)) return a;
  return make(ExprKind::Mul, std::move(a), std::move(b));
}

ExprPtr expr_div(ExprPtr a, ExprPtr b) {
  if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant &&
      b->value != 0)
    return expr_const(a->value / b->value);
  if (is_const(a, 0)) return expr_const(0);
  if (is_const(b, 1)) return a;
  return make(ExprKind::Div, std::move(a), std::move(b));
}

ExprPtr expr_pow(ExprPtr a, ExprPtr b) {
  if (a->kind == ExprKind::Constant && b->kind == ExprKind::Constant)
    return expr_const(std::pow(a->value, b->value));
  if (is_const(b, 0)) return expr_const(1);
  if (is_const(b, 1)) return a;
  return make(ExprKind::Pow, std::move(a), std::move(b));
}

ExprPtr expr_neg(ExprPtr a) {
  if (a->kind == ExprKind::Constant) return expr_const(-a->value);
  if (a->kind == ExprKind::Neg) return a->a;
  return make(ExprKind::Neg, std::move(a));
}

ExprPtr expr_func(ExprKind kind, ExprPtr a) {
  if (a->kind == ExprKind::Constant) {
    switch (kind) {
      case ExprKind::Sqrt: return expr_const(std::sqrt(a->value));
      case ExprKind::Sin: return expr_const(std::sin(a->value));
      case ExprKind::Cos: return expr_const(std::cos(a->value));
      case ExprKind::Exp: return expr_const(std::exp(a->value));
      case ExprKind::Log: return expr_const(std::log(a->value));
      default: break;
    }
  }
  return make(kind, std::move(a));
}

// ---------------------------------------------------------------------------
// Parser: recursive descent, case-sensitive identifiers, parameters are
// substituted as constants so a parsed tree is self-contained.

namespace {

struct Parser {
  const std::string& text;
  int d;
  const std::map<std::string, double>& params;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  }

  bool eat(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  [[noreturn]] void fail(const std::string& msg) {
    throw ParseError(msg, static_cast<int>(pos));
  }

  ExprPtr parse() {
    ExprPtr e = expression();
    skip_ws();
    if (pos != text.size()) fail("syntax error: unexpected '" + std::string(1, text[pos]) + "'");
    return e;
  }

  ExprPtr expression() {
    ExprPtr e = term();
    for (;;) {
      if (eat('+')) e = expr_add(e, term());
      else if (eat('-')) e = expr_sub(e, term());
      else return e;
    }
  }

  ExprPtr term() {
    ExprPtr e = unary();
    for (;;) {
      if (eat('*')) e = expr_mul(e, unary());
      else if (eat('/')) e = expr_div(e, unary());
      else return e;
    }
  }

  ExprPtr unary() {
    if (eat('-')) return expr_neg(unary());
    if (eat('+')) return unary();
    return power();
  }

  ExprPtr power() {
    ExprPtr base = atom();
    if (eat('^')) return expr_pow(base, unary());
    return base;
  }

  ExprPtr atom() {
    skip_ws();
    if (pos >= text.size()) fail("syntax error: unexpected end of input");
    char c = text[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    if (c == '(') {
      ++pos;
      ExprPtr e = expression();
      if (!eat(')')) fail("syntax error: expected ')'");
      return e;
    }
    fail("syntax error: unexpected '" + std::string(1, c) + "'");
  }

  ExprPtr number() {
    size_t start = pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.'))
      ++pos;
    if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
      size_t mark = pos;
      ++pos;
      if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
      if (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos])))
          ++pos;
      } else {
        pos = mark; // 'e' belongs to a following identifier, not this literal
      }
    }
    const std::string tok = text.substr(start, pos - start);
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) {
      pos = start;
      fail("syntax error: bad number '" + tok + "'");
    }
    return expr_const(v);
  }

  ExprPtr identifier() {
    size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    const std::string name = text.substr(start, pos - start);

    static const std::map<std::string, ExprKind> funcs = {
        {"sqrt", ExprKind::Sqrt}, {"sin", ExprKind::Sin}, {"cos", ExprKind::Cos},
        {"exp", ExprKind::Exp},   {"log", ExprKind::Log}};
    auto f = funcs.find(name);
    if (f != funcs.end()) {
      if (!eat('(')) fail("syntax error: expected '(' after '" + name + "'");
      ExprPtr arg = expression();
      if (!eat(')')) fail("syntax error: expected ')'");
      return expr_func(f->second, arg);
    }

    if ((name[0] == 'q' || name[0] == 'p') && name.size() > 1) {
      bool digits = true;
      for (size_t i = 1; i < name.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
      if (digits) {
        int idx = std::atoi(name.c_str() + 1);
        if (idx > d) {
          pos = start;
          fail("dimension mismatch: variable '" + name + "' needs d >= " +
               std::to_string(idx) + " but d = " + std::to_string(d));
        }
        return expr_var(name[0] == 'q' ? idx : (d + 1) + idx);
      }
    }

    auto p = params.find(name);
    if (p != params.end()) return expr_const(p->second);
    pos = start;
    fail("unknown identifier '" + name + "'");
  }
};

} // namespace

ExprPtr parse_expression(const std::string& text, int d,
                         const std::map<std::string, double>& params) {
  if (d < 1) throw Error("parse_expression: d must be >= 1");
  Parser parser{text, d, params};
  return parser.parse();
}

// ---------------------------------------------------------------------------

namespace {

int precedence(ExprKind k) {
  switch (k) {
    case ExprKind::Add:
    case ExprKind::Sub: return 1;
    case ExprKind::Mul:
    case ExprKind::Div: return 2;
    case ExprKind::Neg: return 3;
    case ExprKind::Pow: return 4;
    default: return 5;
  }
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void print(const ExprPtr& e, int d, std::string& out);

void print_child(const ExprPtr& child, int d, int parent_prec, bool needs_paren_on_tie,
                 std::string& out) {
  int cp = precedence(child->kind);
  bool paren = cp < parent_prec || (cp == parent_prec && needs_paren_on_tie);
  if (paren) out += '(';
  print(child, d, out);
  if (paren) out += ')';
}

void print(const ExprPtr& e, int d, std::string& out) {
  switch (e->kind) {
    case ExprKind::Constant:
      if (e->value < 0) {
        out += '(' + format_double(e->value) + ')';
      } else {
        out += format_double(e->value);
      }
      break;
    case ExprKind::Variable:
      out += (e->var <= d) ? "q" + std::to_string(e->var)
                           : "p" + std::to_string(e->var - d - 1);
      break;
    case ExprKind::Add:
      print_child(e->a, d, 1, false, out);
      out += '+';
      print_child(e->b, d, 1, true, out);
      break;
    case ExprKind::Sub:
      print_child(e->a, d, 1, false, out);
      out += '-';
      print_child(e->b, d, 1, true, out);
      break;
    case ExprKind::Mul:
      print_child(e->a, d, 2, false, out);
      out += '*';
      print_child(e->b, d, 2, true, out);
      break;
    case ExprKind::Div:
      print_child(e->a, d, 2, false, out);
      out += '/';
      print_child(e->b, d, 2, true, out);
      break;
    case ExprKind::Neg:
      out += '-';
      print_child(e->a, d, 3, true, out);
      break;
    case ExprKind::Pow:
      print_child(e->a, d, 5, false, out);
      out += '^';
      print_child(e->b, d, 4, false, out);
      break;
    case ExprKind::Sqrt: out += "sqrt("; print(e->a, d, out); out += ')'; break;
    case ExprKind::Sin: out += "sin("; print(e->a, d, out); out += ')'; break;
    case ExprKind::Cos: out += "cos("; print(e->a, d, out); out += ')'; break;
    case ExprKind::Exp: out += "exp("; print(e->a, d, out); out += ')'; break;
    case ExprKind::Log: out += "log("; print(e->a, d, out); out += ')'; break;
  }
}

} // namespace

std::string expr_to_string(const ExprPtr& e, int d) {
  std::string out;
  print(e, d, out);
  return out;
}

ExprPtr differentiate(const ExprPtr& e, int i) {
  switch (e->kind) {
    case ExprKind::Constant: return expr_const(0);
    case ExprKind::Variable: return expr_const(e->var == i ? 1 : 0);
    case ExprKind::Add: return expr_add(differentiate(e->a, i), differentiate(e->b, i));
    case ExprKind::Sub: return expr_sub(differentiate(e->a, i), differentiate(e->b, i));
    case ExprKind::Mul:
      return expr_add(expr_mul(differentiate(e->a, i), e->b),
                      expr_mul(e->a, differentiate(e->b, i)));
    case ExprKind::Div:
      return expr_div(expr_sub(expr_mul(differentiate(e->a, i), e->b),
                               expr_mul(e->a, differentiate(e->b, i))),
                      expr_mul(e->b, e->b));
    case ExprKind::Pow: {
      if (e->b->kind == ExprKind::Constant) {
        const double c = e->b->value;
        return expr_mul(expr_const(c),
                        expr_mul(expr_pow(e->a, expr_const(c - 1)),
                                 differentiate(e->a, i)));
      }
      // a^b = exp(b log a)
      ExprPtr da = differentiate(e->a, i);
      ExprPtr db = differentiate(e->b, i);
      ExprPtr self = expr_pow(e->a, e->b);
      return expr_mul(self, expr_add(expr_mul(db, expr_func(ExprKind::Log, e->a)),
                                     expr_div(expr_mul(e->b, da), e->a)));
    }
    case ExprKind::Neg: return expr_neg(differentiate(e->a, i));
    case ExprKind::Sqrt:
      return expr_div(differentiate(e->a, i),
                      expr_mul(expr_const(2), expr_func(ExprKind::Sqrt, e->a)));
    case ExprKind::Sin:
      return expr_mul(expr_func(ExprKind::Cos, e->a), differentiate(e->a, i));
    case ExprKind::Cos:
      return expr_neg(expr_mul(expr_func(ExprKind::Sin, e->a), differentiate(e->a, i)));
    case ExprKind::Exp:
      return expr_mul(expr_func(ExprKind::Exp, e->a), differentiate(e->a, i));
    case ExprKind::Log:
      return expr_div(differentiate(e->a, i), e->a);
  }
  throw Error("differentiate: unreachable");
}

double expr_eval(const ExprPtr& e, const Vec& vars) {
  switch (e->kind) {
    case ExprKind::Constant: return e->value;
    case ExprKind::Variable: return vars[e->var];
    case ExprKind::Add: return expr_eval(e->a, vars) + expr_eval(e->b, vars);
    case ExprKind::Sub: return expr_eval(e->a, vars) - expr_eval(e->b, vars);
    case ExprKind::Mul: return expr_eval(e->a, vars) * expr_eval(e->b, vars);
    case ExprKind::Div: return expr_eval(e->a, vars) / expr_eval(e->b, vars);
    case ExprKind::Pow: return std::pow(expr_eval(e->a, vars), expr_eval(e->b, vars));
    case ExprKind::Neg: return -expr_eval(e->a, vars);
    case ExprKind::Sqrt: return std::sqrt(expr_eval(e->a, vars));
    case ExprKind::Sin: return std::sin(expr_eval(e->a, vars));
    case ExprKind::Cos: return std::cos(expr_eval(e->a, vars));
    case ExprKind::Exp: return std::exp(expr_eval(e->a, vars));
    case ExprKind::Log: return std::log(expr_eval(e->a, vars));
  }
  throw Error("expr_eval: unreachable");
}

bool expr_uses_momentum(const ExprPtr& e, int d) {
  if (e->kind == ExprKind::Variable) return e->var > d;
  if (e->a && expr_uses_momentum(e->a, d)) return true;
  if (e->b && expr_uses_momentum(e->b, d)) return true;
  return false;
}

} // namespace orbitnf

#pragma once

// Lagrangian expressions: parsing, printing, evaluation and jets.

#include <array>
#include <cctype>
#include <functional>
#include <charconv>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ffr/error.hpp"
#include "ffr/taylor.hpp"

namespace ffr {

enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Sinh, Cosh, Tanh };

inline constexpr std::array<const char*, 9> kFuncNames = {"sin",  "cos",  "tan",  "exp", "log",
                                                           "sqrt", "sinh", "cosh", "tanh"};

inline const char* func_name(Func f) { return kFuncNames[static_cast<int>(f)]; }

struct Node {
  enum class Kind { Const, Var, Neg, Add, Sub, Mul, Div, Pow, Call };
  Kind kind = Kind::Const;
  double value = 0.0;  // Const, and the folded exponent of Pow
  int var = 0;         // Var: 0-based index into (x1..xn, y1..yn)
  Func func = Func::Sin;
  std::shared_ptr<const Node> a, b;  // operands; Pow keeps its exponent in b as a Const
  std::size_t offset = 0;            // byte offset in the source text
};

using NodePtr = std::shared_ptr<const Node>;

class Expr {
 public:
  Expr() = default;
  Expr(NodePtr root, int n) : root_(std::move(root)), n_(n) {}
  const Node& root() const { return *root_; }
  const NodePtr& root_ptr() const { return root_; }
  int n() const { return n_; }
  bool empty() const { return !root_; }

 private:
  NodePtr root_;
  int n_ = 0;
};

namespace expr_detail {

inline NodePtr make(Node::Kind k, NodePtr a, NodePtr b, std::size_t off) {
  auto p = std::make_shared<Node>();
  p->kind = k;
  p->a = std::move(a);
  p->b = std::move(b);
  p->offset = off;
  return p;
}

inline NodePtr make_const(double v, std::size_t off) {
  auto p = std::make_shared<Node>();
  p->kind = Node::Kind::Const;
  p->value = v;
  p->offset = off;
  return p;
}

inline bool has_var(const Node& n) {
  if (n.kind == Node::Kind::Var) return true;
  return (n.a && has_var(*n.a)) || (n.b && has_var(*n.b));
}

class Parser {
 public:
  Parser(std::string_view src, int n) : s_(src), n_(n) {}

  NodePtr parse() {
    skip();
    if (pos_ >= s_.size()) throw ParseError("empty expression", pos_, primary_set());
    NodePtr e = expr();
    skip();
    if (pos_ < s_.size()) throw ParseError("unexpected input", pos_, {"+", "-", "*", "/", "^", "end of input"});
    return e;
  }

 private:
  static std::vector<std::string> primary_set() { return {"number", "variable", "function", "(", "-"}; }

  void skip() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r'))
      ++pos_;
  }
  bool peek(char c) {
    skip();
    return pos_ < s_.size() && s_[pos_] == c;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    while (true) {
      skip();
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
        std::size_t off = pos_;
        auto k = s_[pos_] == '+' ? Node::Kind::Add : Node::Kind::Sub;
        ++pos_;
        lhs = make(k, lhs, term(), off);
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = factor();
    while (true) {
      skip();
      if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
        std::size_t off = pos_;
        auto k = s_[pos_] == '*' ? Node::Kind::Mul : Node::Kind::Div;
        ++pos_;
        lhs = make(k, lhs, factor(), off);
      } else {
        return lhs;
      }
    }
  }

  NodePtr factor() {
    NodePtr base = unary();
    if (!peek('^')) return base;
    std::size_t off = pos_++;
    std::size_t eoff = (skip(), pos_);
    NodePtr e = factor();
    if (has_var(*e)) throw ParseError("non-constant exponent", eoff);
    double v = eval_const(*e);
    return make(Node::Kind::Pow, base, make_const(v, eoff), off);
  }

  NodePtr unary() {
    skip();
    if (pos_ < s_.size() && s_[pos_] == '-') {
      std::size_t off = pos_++;
      return make(Node::Kind::Neg, unary(), nullptr, off);
    }
    return primary();
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_, primary_set());
    const char c = s_[pos_];
    const std::size_t off = pos_;
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!peek(')')) throw ParseError("unbalanced parenthesis", pos_, {")"});
      ++pos_;
      return e;
    }
    if ((c >= '0' && c <= '9') || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < s_.size() && std::isalpha(static_cast<unsigned char>(s_[end]))) ++end;
      std::string_view word = s_.substr(pos_, end - pos_);
      std::size_t dend = end;
      while (dend < s_.size() && std::isdigit(static_cast<unsigned char>(s_[dend]))) ++dend;
      if ((word == "x" || word == "y") && dend > end) {
        int idx = 0;
        for (std::size_t i = end; i < dend; ++i) {
          idx = idx * 10 + (s_[i] - '0');
          if (idx > 1000000) break;
        }
        if (idx < 1 || idx > n_)
          throw ParseError("variable index out of range: " + std::string(s_.substr(pos_, dend - pos_)), off);
        pos_ = dend;
        auto p = std::make_shared<Node>();
        p->kind = Node::Kind::Var;
        p->var = (word == "x" ? 0 : n_) + idx - 1;
        p->offset = off;
        return p;
      }
      for (std::size_t f = 0; f < kFuncNames.size(); ++f) {
        if (word == kFuncNames[f] && dend == end) {
          pos_ = end;
          if (!peek('(')) throw ParseError("expected '(' after function name", pos_, {"("});
          ++pos_;
          NodePtr arg = expr();
          if (!peek(')')) throw ParseError("unbalanced parenthesis", pos_, {")"});
          ++pos_;
          auto p = std::make_shared<Node>();
          p->kind = Node::Kind::Call;
          p->func = static_cast<Func>(f);
          p->a = arg;
          p->offset = off;
          return p;
        }
      }
      throw ParseError("unknown identifier '" + std::string(s_.substr(pos_, dend - pos_)) + "'", off);
    }
    throw ParseError("unexpected character '" + std::string(1, c) + "'", off, primary_set());
  }

  NodePtr number() {
    std::size_t end = pos_;
    auto digits = [&] {
      std::size_t st = end;
      while (end < s_.size() && std::isdigit(static_cast<unsigned char>(s_[end]))) ++end;
      return end > st;
    };
    bool any = digits();
    if (end < s_.size() && s_[end] == '.') {
      ++end;
      any = digits() || any;
    }
    if (!any) throw ParseError("malformed number", pos_, {"digit"});
    if (end < s_.size() && (s_[end] == 'e' || s_[end] == 'E')) {
      std::size_t save = end++;
      if (end < s_.size() && (s_[end] == '+' || s_[end] == '-')) ++end;
      if (!digits()) {
        end = save;
        throw ParseError("malformed exponent", save + 1, {"digit"});
      }
    }
    double v = 0.0;
    std::string text(s_.substr(pos_, end - pos_));
    if (text.front() == '.') text.insert(text.begin(), '0');
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc()) throw ParseError("number out of range", pos_);
    NodePtr p = make_const(v, pos_);
    pos_ = end;
    return p;
  }

  static double eval_const(const Node& n);

  std::string_view s_;
  int n_;
  std::size_t pos_ = 0;
};

}  // namespace expr_detail

inline Expr parse(std::string_view source, int n) {
  if (n < 2) throw ConfigError("base dimension n must be at least 2");
  return Expr(expr_detail::Parser(source, n).parse(), n);
}

namespace expr_detail {

inline bool additive(const Node& n) { return n.kind == Node::Kind::Add || n.kind == Node::Kind::Sub; }
inline bool multiplicative(const Node& n) { return n.kind == Node::Kind::Mul || n.kind == Node::Kind::Div; }
inline bool binary(const Node& n) { return additive(n) || multiplicative(n) || n.kind == Node::Kind::Pow; }

inline std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string print_with(const Node& node, int n);

inline std::string wrap(const Node& node, int n, bool paren) {
  return paren ? "(" + print_with(node, n) + ")" : print_with(node, n);
}

inline std::string print_with(const Node& node, int n) {
  using K = Node::Kind;
  switch (node.kind) {
    case K::Const:
      return num(node.value);
    case K::Var:
      return node.var < n ? "x" + std::to_string(node.var + 1) : "y" + std::to_string(node.var - n + 1);
    case K::Neg:
      return "-" + wrap(*node.a, n, binary(*node.a));
    case K::Add:
    case K::Sub:
      return print_with(*node.a, n) + (node.kind == K::Add ? " + " : " - ") + wrap(*node.b, n, additive(*node.b));
    case K::Mul:
    case K::Div:
      return wrap(*node.a, n, additive(*node.a)) + (node.kind == K::Mul ? "*" : "/") +
             wrap(*node.b, n, additive(*node.b) || multiplicative(*node.b));
    case K::Pow:
      return wrap(*node.a, n, binary(*node.a)) + "^" + num(node.b->value);
    case K::Call:
      return std::string(func_name(node.func)) + "(" + print_with(*node.a, n) + ")";
  }
  return {};
}

}  // namespace expr_detail

// Canonical printer; parse(print(e)) reproduces e.
inline std::string print(const Expr& e) { return expr_detail::print_with(e.root(), e.n()); }

// Structural equality of two trees (constants compared bitwise).
inline bool same_tree(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::Const:
      return std::memcmp(&a.value, &b.value, sizeof(double)) == 0;
    case Node::Kind::Var:
      return a.var == b.var;
    case Node::Kind::Call:
      return a.func == b.func && same_tree(*a.a, *b.a);
    case Node::Kind::Neg:
      return same_tree(*a.a, *b.a);
    default:
      return same_tree(*a.a, *b.a) && same_tree(*a.b, *b.b);
  }
}

namespace expr_detail {

inline double apply(Func f, double x) {
  switch (f) {
    case Func::Sin: return std::sin(x);
    case Func::Cos: return std::cos(x);
    case Func::Tan:
      if (std::cos(x) == 0.0) throw DomainError("tan at a pole");
      return std::tan(x);
    case Func::Exp: return std::exp(x);
    case Func::Log:
      if (!(x > 0.0)) throw DomainError("log of a non-positive value");
      return std::log(x);
    case Func::Sqrt:
      if (x < 0.0) throw DomainError("sqrt of a negative value");
      return std::sqrt(x);
    case Func::Sinh: return std::sinh(x);
    case Func::Cosh: return std::cosh(x);
    case Func::Tanh: return std::tanh(x);
  }
  return 0.0;
}

inline Taylor apply(Func f, const Taylor& x) {
  switch (f) {
    case Func::Sin: return sin(x);
    case Func::Cos: return cos(x);
    case Func::Tan: return tan(x);
    case Func::Exp: return exp(x);
    case Func::Log: return log(x);
    case Func::Sqrt: return sqrt(x);
    case Func::Sinh: return sinh(x);
    case Func::Cosh: return cosh(x);
    case Func::Tanh: return tanh(x);
  }
  return x;
}

inline double power(double x, double p) {
  if (p != std::floor(p) && x < 0.0) throw DomainError("non-integer power of a negative value");
  if (x == 0.0 && p < 0.0) throw DomainError("division by zero");
  return std::pow(x, p);
}
inline Taylor power(const Taylor& x, double p) { return pow(x, p); }

inline double divide(double a, double b) {
  if (b == 0.0) throw DomainError("division by zero");
  return a / b;
}
inline Taylor divide(const Taylor& a, const Taylor& b) { return a / b; }

template <class T>
struct Evaluator {
  const std::vector<T>& vars;
  const std::function<T(double)>& lift;
  int n;

  T eval(const Node& node) const {
    try {
      return eval_raw(node);
    } catch (const DomainError& e) {
      std::string msg = e.what();
      if (msg.find(" in '") != std::string::npos) throw;
      throw DomainError(msg + " in '" + print_with(node, n) + "' at offset " + std::to_string(node.offset));
    }
  }

  T eval_raw(const Node& node) const {
    using K = Node::Kind;
    switch (node.kind) {
      case K::Const: return lift(node.value);
      case K::Var: return vars[node.var];
      case K::Neg: return -eval(*node.a);
      case K::Add: return eval(*node.a) + eval(*node.b);
      case K::Sub: return eval(*node.a) - eval(*node.b);
      case K::Mul: return eval(*node.a) * eval(*node.b);
      case K::Div: return divide(eval(*node.a), eval(*node.b));
      case K::Pow: return power(eval(*node.a), node.b->value);
      case K::Call: return apply(node.func, eval(*node.a));
    }
    return lift(0.0);
  }
};

inline double Parser::eval_const(const Node& n) {
  std::vector<double> none;
  std::function<double(double)> id = [](double v) { return v; };
  return Evaluator<double>{none, id, 0}.eval(n);
}

}  // namespace expr_detail

// Evaluate at u = (x1..xn, y1..yn).
inline double evaluate(const Expr& e, const std::vector<double>& u) {
  if (static_cast<int>(u.size()) != 2 * e.n()) throw Error("evaluate: point dimension mismatch");
  std::function<double(double)> id = [](double v) { return v; };
  return expr_detail::Evaluator<double>{u, id, e.n()}.eval(e.root());
}

// Truncated Taylor expansion of e around u in all 2n variables.
inline Taylor taylor(const Expr& e, const std::vector<double>& u, int order) {
  if (order < 0 || order > kMaxJetOrder) throw Error("jet order must be in [0, " + std::to_string(kMaxJetOrder) + "]");
  if (static_cast<int>(u.size()) != 2 * e.n()) throw Error("jet: point dimension mismatch");
  const TaylorLayout& L = TaylorLayout::get(2 * e.n(), order);
  std::vector<Taylor> vars;
  for (int v = 0; v < 2 * e.n(); ++v) vars.push_back(Taylor::variable(L, v, u[v]));
  std::function<Taylor(double)> lift = [&L](double c) { return Taylor::constant(L, c); };
  return expr_detail::Evaluator<Taylor>{vars, lift, e.n()}.eval(e.root());
}

// All mixed partials of L up to a fixed order at a point.
class Jet {
 public:
  Jet(const Expr& e, std::vector<double> u, int order) : u_(std::move(u)), t_(::ffr::taylor(e, u_, order)) {}

  int order() const { return t_.order(); }
  const std::vector<double>& point() const { return u_; }
  double value() const { return t_.value(); }

  // Partial derivative along the listed 0-based variables, e.g. {n, n} = d2L/dy1dy1.
  double d(std::initializer_list<int> vars) const { return d(std::vector<int>(vars)); }
  double d(const std::vector<int>& vars) const {
    std::vector<int> alpha(u_.size(), 0);
    for (int v : vars) ++alpha.at(v);
    return t_.partial(alpha);
  }
  // Partial by multi-index alpha (exponent per variable).
  double at(const std::vector<int>& alpha) const { return t_.partial(alpha); }
  const Taylor& taylor() const { return t_; }

 private:
  std::vector<double> u_;
  Taylor t_;
};

inline Jet jet(const Expr& e, const std::vector<double>& u, int order) { return Jet(e, u, order); }

}  // namespace ffr

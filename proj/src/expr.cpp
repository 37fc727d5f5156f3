#include "confwave/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "confwave/errors.hpp"

namespace confwave {

struct Expression::Node {
  enum Kind { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Sqrt } kind = Num;
  double value = 0.0;
  int var = 0;
  std::shared_ptr<const Node> a, b;

  double eval(const Vec3& x) const {
    switch (kind) {
      case Num: return value;
      case Var: return x[var];
      case Neg: return -a->eval(x);
      case Add: return a->eval(x) + b->eval(x);
      case Sub: return a->eval(x) - b->eval(x);
      case Mul: return a->eval(x) * b->eval(x);
      case Div: return a->eval(x) / b->eval(x);
      case Pow: return std::pow(a->eval(x), b->eval(x));
      case Sin: return std::sin(a->eval(x));
      case Cos: return std::cos(a->eval(x));
      case Exp: return std::exp(a->eval(x));
      case Sqrt: return std::sqrt(a->eval(x));
    }
    return 0.0;
  }

  bool constant() const {
    if (kind == Var) return false;
    return (!a || a->constant()) && (!b || b->constant());
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

NodePtr make(Node::Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr number(double v) {
  auto n = std::make_shared<Node>();
  n->value = v;
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("expression '" + s_ + "': " + what + " at column " + std::to_string(pos_ + 1));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr l = term();
    for (;;) {
      if (accept('+')) l = make(Node::Add, l, term());
      else if (accept('-')) l = make(Node::Sub, l, term());
      else return l;
    }
  }

  NodePtr term() {
    NodePtr l = unary();
    for (;;) {
      if (accept('*')) l = make(Node::Mul, l, unary());
      else if (accept('/')) l = make(Node::Div, l, unary());
      else return l;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Node::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return make(Node::Pow, base, unary());
    return base;
  }

  NodePtr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (accept('(')) {
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      return number(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "x" || id == "y" || id == "z") {
        auto n = std::make_shared<Node>();
        n->kind = Node::Var;
        n->var = id[0] - 'x';
        return n;
      }
      if (id == "pi") return number(std::numbers::pi);
      if (id == "e") return number(std::numbers::e);
      Node::Kind k;
      if (id == "sin") k = Node::Sin;
      else if (id == "cos") k = Node::Cos;
      else if (id == "exp") k = Node::Exp;
      else if (id == "sqrt") k = Node::Sqrt;
      else {
        pos_ = start;
        fail("unknown identifier '" + id + "'");
      }
      if (!accept('(')) fail("expected '(' after " + id);
      NodePtr arg = expr();
      if (!accept(')')) fail("expected ')'");
      return make(k, arg);
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
};

}  // namespace

Expression::Expression() : root_(number(0.0)), text_("0") {}

Expression Expression::parse(const std::string& text) {
  Expression e;
  e.root_ = Parser(text).parse();
  e.text_ = text;
  return e;
}

Expression Expression::constant(double v) {
  Expression e;
  e.root_ = number(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  e.text_ = buf;
  return e;
}

double Expression::operator()(const Vec3& x) const { return root_->eval(x); }

bool Expression::is_constant() const { return root_->constant(); }

}  // namespace confwave

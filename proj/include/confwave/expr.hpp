#pragma once

#include <memory>
#include <string>

#include "confwave/grid.hpp"

namespace confwave {

// Scalar expressions in x, y, z:
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('+' | '-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | x | y | z | pi | e | fn '(' expr ')' | '(' expr ')'
//   fn     := sin | cos | exp | sqrt
class Expression {
 public:
  Expression();  // constant 0
  // Throws ValidationError naming the offending column.
  static Expression parse(const std::string& text);
  static Expression constant(double v);

  double operator()(const Vec3& x) const;
  const std::string& text() const { return text_; }
  bool is_constant() const;

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace confwave

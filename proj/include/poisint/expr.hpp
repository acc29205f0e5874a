#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace poisint {

// Immutable expression tree in the single variable `s`.
//
// Grammar (standard precedence, `^` right-associative, unary minus looser
// than `^` so that -s^2 == -(s^2)):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | 's' | 'pi' | 'e' | func '(' args ')' | '(' expr ')'
//
// Functions: sin cos tan exp log sqrt abs (one argument), min max (two).
//
// Copies share the tree; evaluation is const and thread-safe.
class Expression {
 public:
  enum class Kind { Number, Variable, Constant, Negate, Add, Sub, Mul, Div, Pow, Call };
  enum class Func { Sin, Cos, Tan, Exp, Log, Sqrt, Abs, Min, Max };
  enum class Named { Pi, E };

  struct Node {
    Kind kind;
    double value = 0.0;  // Number literal, or the value of a Constant
    Named named = Named::Pi;
    Func func = Func::Sin;
    std::vector<std::shared_ptr<const Node>> children;
  };

  // Throws SyntaxError / UnknownIdentifier carrying the byte offset.
  static Expression parse(std::string_view text);

  static Expression number(double value);
  static Expression variable();
  static Expression constant(Named which);
  static Expression negate(const Expression& operand);
  static Expression binary(Kind op, const Expression& lhs, const Expression& rhs);
  static Expression call(Func func, std::vector<Expression> args);

  // Throws DomainError naming the offending sub-expression.
  double evaluate(double s) const;
  double operator()(double s) const { return evaluate(s); }

  // Minimal-parenthesis rendering that parses back to the same tree.
  std::string to_string() const;

  bool structurally_equal(const Expression& other) const;
  bool is_constant() const;  // no occurrence of `s`

  // Replace every `s` by `replacement`.
  Expression substitute(const Expression& replacement) const;

  const Node& root() const { return *root_; }

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

std::string_view function_name(Expression::Func func);
int function_arity(Expression::Func func);

}  // namespace poisint

#include "poisint/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <optional>

#include "poisint/errors.hpp"

namespace poisint {

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Kind;
using Func = Expression::Func;

struct FuncInfo {
  std::string_view name;
  Func func;
  int arity;
};

constexpr std::array<FuncInfo, 9> kFunctions{{
    {"sin", Func::Sin, 1},
    {"cos", Func::Cos, 1},
    {"tan", Func::Tan, 1},
    {"exp", Func::Exp, 1},
    {"log", Func::Log, 1},
    {"sqrt", Func::Sqrt, 1},
    {"abs", Func::Abs, 1},
    {"min", Func::Min, 2},
    {"max", Func::Max, 2},
}};

NodePtr make_node(Expression::Node node) { return std::make_shared<const Expression::Node>(std::move(node)); }

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse_all() {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "empty expression");
    NodePtr node = parse_expr();
    skip_space();
    if (pos_ < text_.size()) throw SyntaxError(pos_, std::string("unexpected '") + text_[pos_] + "'");
    return node;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, std::string("expected '") + c + "' but input ended");
    if (text_[pos_] != c) throw SyntaxError(pos_, std::string("expected '") + c + "'");
    ++pos_;
  }

  NodePtr parse_expr() {
    NodePtr lhs = parse_term();
    for (;;) {
      if (accept('+')) {
        lhs = make_node({Kind::Add, 0.0, {}, {}, {lhs, parse_term()}});
      } else if (accept('-')) {
        lhs = make_node({Kind::Sub, 0.0, {}, {}, {lhs, parse_term()}});
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_term() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_node({Kind::Mul, 0.0, {}, {}, {lhs, parse_unary()}});
      } else if (accept('/')) {
        lhs = make_node({Kind::Div, 0.0, {}, {}, {lhs, parse_unary()}});
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    if (accept('-')) return make_node({Kind::Negate, 0.0, {}, {}, {parse_unary()}});
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    if (accept('^')) return make_node({Kind::Pow, 0.0, {}, {}, {base, parse_unary()}});
    return base;
  }

  NodePtr parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) throw SyntaxError(pos_, "unexpected end of input");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (c == '(') {
      ++pos_;
      NodePtr inner = parse_expr();
      expect(')');
      return inner;
    }
    throw SyntaxError(pos_, std::string("unexpected '") + c + "'");
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    auto is_digit = [&](std::size_t i) {
      return i < text_.size() && std::isdigit(static_cast<unsigned char>(text_[i]));
    };
    std::size_t end = pos_;
    while (is_digit(end)) ++end;
    if (end < text_.size() && text_[end] == '.') {
      ++end;
      while (is_digit(end)) ++end;
    }
    // Exponent only when digits follow, so "2e" stays a syntax error rather
    // than silently reading the constant e.
    if (end < text_.size() && (text_[end] == 'e' || text_[end] == 'E')) {
      std::size_t probe = end + 1;
      if (probe < text_.size() && (text_[probe] == '+' || text_[probe] == '-')) ++probe;
      if (is_digit(probe)) {
        end = probe;
        while (is_digit(end)) ++end;
      }
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + end, value);
    if (ec != std::errc() || ptr != text_.data() + end || !std::isfinite(value)) {
      throw SyntaxError(start, "malformed number");
    }
    pos_ = end;
    return make_node({Kind::Number, value, {}, {}, {}});
  }

  NodePtr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = text_.substr(start, pos_ - start);
    if (name == "s") return make_node({Kind::Variable, 0.0, {}, {}, {}});
    if (name == "pi") return make_node({Kind::Constant, std::numbers::pi, Expression::Named::Pi, {}, {}});
    if (name == "e") return make_node({Kind::Constant, std::numbers::e, Expression::Named::E, {}, {}});
    for (const FuncInfo& info : kFunctions) {
      if (info.name != name) continue;
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] != '(') {
        throw SyntaxError(pos_, "expected '(' after " + std::string(name));
      }
      ++pos_;
      std::vector<NodePtr> args;
      args.push_back(parse_expr());
      while (accept(',')) args.push_back(parse_expr());
      if (static_cast<int>(args.size()) != info.arity) {
        throw SyntaxError(start, std::string(name) + " takes " + std::to_string(info.arity) +
                                     " argument(s), got " + std::to_string(args.size()));
      }
      expect(')');
      return make_node({Kind::Call, 0.0, {}, info.func, std::move(args)});
    }
    throw UnknownIdentifier(start, std::string(name));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

// Binding strength used by the printer; atoms and calls bind tightest.
int precedence(const Expression::Node& node) {
  switch (node.kind) {
    case Kind::Add:
    case Kind::Sub:
      return 1;
    case Kind::Mul:
    case Kind::Div:
      return 2;
    case Kind::Negate:
      return 3;
    case Kind::Pow:
      return 4;
    case Kind::Number:
      return node.value < 0 || std::signbit(node.value) ? 3 : 5;
    default:
      return 5;
  }
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  (void)ec;
  return std::string(buf.data(), ptr);
}

void print(const Expression::Node& node, std::string& out);

void print_child(const Expression::Node& child, bool parens, std::string& out) {
  if (parens) out += '(';
  print(child, out);
  if (parens) out += ')';
}

void print(const Expression::Node& node, std::string& out) {
  const int prec = precedence(node);
  switch (node.kind) {
    case Kind::Number:
      if (std::signbit(node.value)) {
        out += "-";
        out += format_number(-node.value);
      } else {
        out += format_number(node.value);
      }
      return;
    case Kind::Variable:
      out += 's';
      return;
    case Kind::Constant:
      out += node.named == Expression::Named::Pi ? "pi" : "e";
      return;
    case Kind::Negate:
      out += '-';
      print_child(*node.children[0], precedence(*node.children[0]) < 3, out);
      return;
    case Kind::Add:
    case Kind::Sub:
    case Kind::Mul:
    case Kind::Div: {
      const char* op = node.kind == Kind::Add   ? " + "
                       : node.kind == Kind::Sub ? " - "
                       : node.kind == Kind::Mul ? "*"
                                                : "/";
      const auto& lhs = *node.children[0];
      const auto& rhs = *node.children[1];
      print_child(lhs, precedence(lhs) < prec, out);
      out += op;
      print_child(rhs, precedence(rhs) <= prec, out);
      return;
    }
    case Kind::Pow: {
      const auto& base = *node.children[0];
      const auto& exponent = *node.children[1];
      print_child(base, precedence(base) < 5, out);
      out += '^';
      print_child(exponent, precedence(exponent) < 3, out);
      return;
    }
    case Kind::Call: {
      out += function_name(node.func);
      out += '(';
      for (std::size_t i = 0; i < node.children.size(); ++i) {
        if (i) out += ", ";
        print(*node.children[i], out);
      }
      out += ')';
      return;
    }
  }
}

std::string render(const Expression::Node& node) {
  std::string out;
  print(node, out);
  return out;
}

[[noreturn]] void domain_fail(const Expression::Node& node, const char* why) { throw DomainError(render(node), why); }

double eval(const Expression::Node& node, double s) {
  double result = 0.0;
  switch (node.kind) {
    case Kind::Number:
    case Kind::Constant:
      return node.value;
    case Kind::Variable:
      return s;
    case Kind::Negate:
      return -eval(*node.children[0], s);
    case Kind::Add:
      result = eval(*node.children[0], s) + eval(*node.children[1], s);
      break;
    case Kind::Sub:
      result = eval(*node.children[0], s) - eval(*node.children[1], s);
      break;
    case Kind::Mul:
      result = eval(*node.children[0], s) * eval(*node.children[1], s);
      break;
    case Kind::Div: {
      const double num = eval(*node.children[0], s);
      const double den = eval(*node.children[1], s);
      if (den == 0.0) domain_fail(node, "division by zero");
      result = num / den;
      break;
    }
    case Kind::Pow:
      result = std::pow(eval(*node.children[0], s), eval(*node.children[1], s));
      break;
    case Kind::Call: {
      const double x = eval(*node.children[0], s);
      switch (node.func) {
        case Func::Sin:
          result = std::sin(x);
          break;
        case Func::Cos:
          result = std::cos(x);
          break;
        case Func::Tan:
          result = std::tan(x);
          break;
        case Func::Exp:
          result = std::exp(x);
          break;
        case Func::Log:
          if (x <= 0.0) domain_fail(node, "log of non-positive argument");
          result = std::log(x);
          break;
        case Func::Sqrt:
          if (x < 0.0) domain_fail(node, "sqrt of negative argument");
          result = std::sqrt(x);
          break;
        case Func::Abs:
          result = std::fabs(x);
          break;
        case Func::Min:
          result = std::min(x, eval(*node.children[1], s));
          break;
        case Func::Max:
          result = std::max(x, eval(*node.children[1], s));
          break;
      }
      break;
    }
  }
  if (!std::isfinite(result)) domain_fail(node, "non-finite result");
  return result;
}

bool equal_nodes(const Expression::Node& a, const Expression::Node& b) {
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case Kind::Number:
      if (a.value != b.value || std::signbit(a.value) != std::signbit(b.value)) return false;
      break;
    case Kind::Constant:
      if (a.named != b.named) return false;
      break;
    case Kind::Call:
      if (a.func != b.func) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i) {
    if (!equal_nodes(*a.children[i], *b.children[i])) return false;
  }
  return true;
}

bool contains_variable(const Expression::Node& node) {
  if (node.kind == Kind::Variable) return true;
  for (const auto& child : node.children) {
    if (contains_variable(*child)) return true;
  }
  return false;
}

NodePtr substitute_node(const NodePtr& node, const NodePtr& replacement) {
  if (node->kind == Kind::Variable) return replacement;
  if (node->children.empty()) return node;
  Expression::Node copy = *node;
  for (auto& child : copy.children) child = substitute_node(child, replacement);
  return make_node(std::move(copy));
}

}  // namespace

std::string_view function_name(Expression::Func func) {
  for (const FuncInfo& info : kFunctions) {
    if (info.func == func) return info.name;
  }
  return "?";
}

int function_arity(Expression::Func func) {
  for (const FuncInfo& info : kFunctions) {
    if (info.func == func) return info.arity;
  }
  return 0;
}

Expression Expression::parse(std::string_view text) { return Expression(Parser(text).parse_all()); }

Expression Expression::number(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("expression literal must be finite");
  return Expression(make_node({Kind::Number, value, {}, {}, {}}));
}

Expression Expression::variable() { return Expression(make_node({Kind::Variable, 0.0, {}, {}, {}})); }

Expression Expression::constant(Named which) {
  const double value = which == Named::Pi ? std::numbers::pi : std::numbers::e;
  return Expression(make_node({Kind::Constant, value, which, {}, {}}));
}

Expression Expression::negate(const Expression& operand) {
  return Expression(make_node({Kind::Negate, 0.0, {}, {}, {operand.root_}}));
}

Expression Expression::binary(Kind op, const Expression& lhs, const Expression& rhs) {
  if (op != Kind::Add && op != Kind::Sub && op != Kind::Mul && op != Kind::Div && op != Kind::Pow) {
    throw InvalidArgument("not a binary operator");
  }
  return Expression(make_node({op, 0.0, {}, {}, {lhs.root_, rhs.root_}}));
}

Expression Expression::call(Func func, std::vector<Expression> args) {
  if (static_cast<int>(args.size()) != function_arity(func)) {
    throw InvalidArgument(std::string(function_name(func)) + ": wrong number of arguments");
  }
  Node node{Kind::Call, 0.0, {}, func, {}};
  for (auto& arg : args) node.children.push_back(arg.root_);
  return Expression(make_node(std::move(node)));
}

double Expression::evaluate(double s) const { return eval(*root_, s); }

std::string Expression::to_string() const { return render(*root_); }

bool Expression::structurally_equal(const Expression& other) const { return equal_nodes(*root_, *other.root_); }

bool Expression::is_constant() const { return !contains_variable(*root_); }

Expression Expression::substitute(const Expression& replacement) const {
  return Expression(substitute_node(root_, replacement.root_));
}

}  // namespace poisint

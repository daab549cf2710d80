#include "moderoute/expression.hpp"

#include <cctype>
#include <map>
#include <memory>
#include <variant>

#include <boost/multiprecision/cpp_int.hpp>

#include "moderoute/error.hpp"

namespace moderoute::expr {

namespace {

using Int = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using Value = std::variant<bool, Rational>;

constexpr std::size_t kMaxNesting = 256;

[[noreturn]] void parse_error(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

enum class TokKind { Number, Name, Op, End };

struct Tok {
  TokKind kind = TokKind::End;
  std::string text;
};

std::vector<Tok> lex(std::string_view src) {
  std::vector<Tok> out;
  std::size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t start = i;
      while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      if (i < src.size() && src[i] == '.') {
        ++i;
        if (i >= src.size() || !std::isdigit(static_cast<unsigned char>(src[i]))) parse_error("bad number");
        while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      }
      out.push_back({TokKind::Number, std::string(src.substr(start, i - start))});
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = i;
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
      out.push_back({TokKind::Name, std::string(src.substr(start, i - start))});
    } else {
      static constexpr std::string_view two[] = {"==", "!=", "<=", ">=", "&&", "||"};
      std::string op(1, c);
      for (auto t : two)
        if (src.substr(i, 2) == t) op = std::string(t);
      if (op.size() == 1 && std::string_view("+-*/%()<>!=,;").find(c) == std::string_view::npos)
        parse_error(std::string("unexpected character '") + c + "'");
      i += op.size();
      out.push_back({TokKind::Op, std::move(op)});
    }
  }
  out.push_back({TokKind::End, ""});
  return out;
}

struct Node {
  enum class Kind { Literal, Var, Unary, Binary, Call } kind;
  Value literal;
  std::string name;  // variable, operator or function name
  std::vector<std::unique_ptr<Node>> args;
};

using NodePtr = std::unique_ptr<Node>;

NodePtr make(Node::Kind kind, std::string name = {}) {
  auto n = std::make_unique<Node>();
  n->kind = kind;
  n->name = std::move(name);
  return n;
}

Rational parse_number(const std::string& text) {
  auto dot = text.find('.');
  if (dot == std::string::npos) return Rational(Int(text));
  std::string digits = text.substr(0, dot) + text.substr(dot + 1);
  Int scale = boost::multiprecision::pow(Int(10), static_cast<unsigned>(text.size() - dot - 1));
  return Rational(Int(digits), scale);
}

class Parser {
 public:
  explicit Parser(std::vector<Tok> toks) : toks_(std::move(toks)) {}

  struct Program {
    std::vector<std::pair<std::string, NodePtr>> bindings;
    NodePtr body;
  };

  Program program() {
    Program p;
    while (peek().kind == TokKind::Name && peek().text == "let") {
      next();
      if (peek().kind != TokKind::Name) parse_error("expected a name after 'let'");
      std::string name = next().text;
      expect("=");
      auto value = expr();
      expect(";");
      p.bindings.emplace_back(std::move(name), std::move(value));
    }
    p.body = expr();
    if (is_op(";")) next();
    if (peek().kind != TokKind::End) parse_error("unexpected '" + peek().text + "'");
    return p;
  }

 private:
  const Tok& peek() const { return toks_[pos_]; }
  const Tok& next() { return toks_[pos_++]; }
  bool is_op(std::string_view op) const { return peek().kind == TokKind::Op && peek().text == op; }
  void expect(std::string_view op) {
    if (!is_op(op)) parse_error("expected '" + std::string(op) + "'");
    next();
  }

  NodePtr binary(std::string op, NodePtr lhs, NodePtr rhs) {
    auto n = make(Node::Kind::Binary, std::move(op));
    n->args.push_back(std::move(lhs));
    n->args.push_back(std::move(rhs));
    return n;
  }

  NodePtr expr() {
    if (++depth_ > kMaxNesting) parse_error("expression nested too deeply");
    auto n = or_expr();
    --depth_;
    return n;
  }

  NodePtr or_expr() {
    auto lhs = and_expr();
    while (is_op("||")) {
      next();
      lhs = binary("||", std::move(lhs), and_expr());
    }
    return lhs;
  }

  NodePtr and_expr() {
    auto lhs = cmp_expr();
    while (is_op("&&")) {
      next();
      lhs = binary("&&", std::move(lhs), cmp_expr());
    }
    return lhs;
  }

  NodePtr cmp_expr() {
    auto lhs = add_expr();
    for (std::string_view op : {"==", "!=", "<=", ">=", "<", ">"}) {
      if (is_op(op)) {
        next();
        return binary(std::string(op), std::move(lhs), add_expr());
      }
    }
    return lhs;
  }

  NodePtr add_expr() {
    auto lhs = mul_expr();
    while (is_op("+") || is_op("-")) {
      std::string op = next().text;
      lhs = binary(op, std::move(lhs), mul_expr());
    }
    return lhs;
  }

  NodePtr mul_expr() {
    auto lhs = unary();
    while (is_op("*") || is_op("/") || is_op("%")) {
      std::string op = next().text;
      lhs = binary(op, std::move(lhs), unary());
    }
    return lhs;
  }

  NodePtr unary() {
    if (is_op("-") || is_op("!")) {
      if (++depth_ > kMaxNesting) parse_error("expression nested too deeply");
      auto n = make(Node::Kind::Unary, next().text);
      n->args.push_back(unary());
      --depth_;
      return n;
    }
    return primary();
  }

  NodePtr primary() {
    const Tok& t = peek();
    if (t.kind == TokKind::Number) {
      auto n = make(Node::Kind::Literal);
      n->literal = parse_number(next().text);
      return n;
    }
    if (t.kind == TokKind::Name) {
      std::string name = next().text;
      if (name == "true" || name == "false") {
        auto n = make(Node::Kind::Literal);
        n->literal = (name == "true");
        return n;
      }
      if (!is_op("(")) return make(Node::Kind::Var, std::move(name));
      next();
      auto n = make(Node::Kind::Call, std::move(name));
      if (!is_op(")")) {
        n->args.push_back(expr());
        while (is_op(",")) {
          next();
          n->args.push_back(expr());
        }
      }
      expect(")");
      return n;
    }
    if (is_op("(")) {
      next();
      auto n = expr();
      expect(")");
      return n;
    }
    parse_error(t.kind == TokKind::End ? "unexpected end of input" : "unexpected '" + t.text + "'");
  }

  std::vector<Tok> toks_;
  std::size_t pos_ = 0;
  std::size_t depth_ = 0;
};

std::string render(const Value& v) {
  if (const bool* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  const auto& r = std::get<Rational>(v);
  auto num = boost::multiprecision::numerator(r);
  auto den = boost::multiprecision::denominator(r);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

// Upper bound on the decimal digits of |x|.
std::size_t digit_bound(const Int& x) {
  if (x == 0) return 1;
  Int a = boost::multiprecision::abs(x);
  return static_cast<std::size_t>(static_cast<double>(boost::multiprecision::msb(a) + 1) * 0.30103) + 1;
}

class Evaluator {
 public:
  Evaluator(const Budget& budget, std::vector<TraceStep>& trace) : budget_(budget), trace_(trace) {}

  std::size_t steps() const { return steps_; }

  void tick() {
    if (++steps_ > budget_.max_steps)
      throw Error(ErrorCode::BudgetExceeded, "step budget of " + std::to_string(budget_.max_steps) + " exhausted");
  }

  void bind(const std::string& name, Value v) { env_[name] = std::move(v); }

  Value eval(const Node& n) {
    tick();
    switch (n.kind) {
      case Node::Kind::Literal: return n.literal;
      case Node::Kind::Var: {
        auto it = env_.find(n.name);
        if (it == env_.end()) parse_error("unbound name '" + n.name + "'");
        return it->second;
      }
      case Node::Kind::Unary: {
        Value v = eval(*n.args[0]);
        if (n.name == "!") return !as_bool(v);
        return check(Rational(-as_number(v)));
      }
      case Node::Kind::Binary: return binary(n);
      case Node::Kind::Call: return call(n);
    }
    parse_error("bad node");
  }

 private:
  static bool as_bool(const Value& v) {
    if (const bool* b = std::get_if<bool>(&v)) return *b;
    parse_error("expected a boolean");
  }
  static const Rational& as_number(const Value& v) {
    if (const auto* r = std::get_if<Rational>(&v)) return *r;
    parse_error("expected a number");
  }
  static Int as_integer(const Value& v) {
    const auto& r = as_number(v);
    if (boost::multiprecision::denominator(r) != 1) parse_error("expected an integer");
    return boost::multiprecision::numerator(r);
  }

  Rational check(Rational r) {
    std::size_t bound =
        digit_bound(boost::multiprecision::numerator(r)) + digit_bound(boost::multiprecision::denominator(r)) + 2;
    if (bound > budget_.max_value_symbols && render(r).size() > budget_.max_value_symbols)
      throw Error(ErrorCode::BudgetExceeded, "value exceeds the size budget");
    return r;
  }

  Value record(const std::string& a, const std::string& op, const std::string& b, Value result) {
    trace_.push_back({a + " " + op + " " + b, render(result)});
    return result;
  }

  static Int floor_mod(const Int& a, const Int& b) {
    Int r = a % b;
    if (r != 0 && ((r < 0) != (b < 0))) r += b;
    return r;
  }

  Value binary(const Node& n) {
    const std::string& op = n.name;
    if (op == "&&" || op == "||") {
      bool lhs = as_bool(eval(*n.args[0]));
      if (op == "&&" && !lhs) return false;
      if (op == "||" && lhs) return true;
      return as_bool(eval(*n.args[1]));
    }
    Value lv = eval(*n.args[0]);
    Value rv = eval(*n.args[1]);
    if (op == "==" || op == "!=") {
      if (lv.index() != rv.index()) parse_error("cannot compare a boolean with a number");
      bool eq = lv == rv;
      return record(render(lv), op, render(rv), op == "==" ? eq : !eq);
    }
    const Rational& a = as_number(lv);
    const Rational& b = as_number(rv);
    if (op == "<") return record(render(lv), op, render(rv), a < b);
    if (op == "<=") return record(render(lv), op, render(rv), a <= b);
    if (op == ">") return record(render(lv), op, render(rv), a > b);
    if (op == ">=") return record(render(lv), op, render(rv), a >= b);
    Rational r;
    if (op == "+") {
      r = a + b;
    } else if (op == "-") {
      r = a - b;
    } else if (op == "*") {
      r = a * b;
    } else if (op == "/") {
      if (b == 0) throw Error(ErrorCode::DivisionByZero, "division by zero");
      r = a / b;
    } else {  // %
      Int bi = as_integer(rv);
      if (bi == 0) throw Error(ErrorCode::DivisionByZero, "modulo by zero");
      r = Rational(floor_mod(as_integer(lv), bi));
    }
    return record(render(lv), op, render(rv), check(std::move(r)));
  }

  Value call(const Node& n) {
    auto arity = [&](std::size_t k) {
      if (n.args.size() != k)
        parse_error(n.name + " takes " + std::to_string(k) + " argument" + (k == 1 ? "" : "s"));
    };
    std::vector<Value> args;
    for (const auto& a : n.args) args.push_back(eval(*a));
    if (n.name == "abs") {
      arity(1);
      return check(boost::multiprecision::abs(as_number(args[0])));
    }
    if (n.name == "min" || n.name == "max") {
      arity(2);
      const auto& a = as_number(args[0]);
      const auto& b = as_number(args[1]);
      return n.name == "min" ? (b < a ? b : a) : (b > a ? b : a);
    }
    if (n.name == "mod") {
      arity(2);
      Int b = as_integer(args[1]);
      if (b == 0) throw Error(ErrorCode::DivisionByZero, "modulo by zero");
      return record(render(args[0]), "mod", render(args[1]), Rational(floor_mod(as_integer(args[0]), b)));
    }
    if (n.name == "pow") {
      arity(2);
      const Rational& base = as_number(args[0]);
      Int exp = as_integer(args[1]);
      Int mag = boost::multiprecision::abs(exp);
      if (base == 0 && exp < 0) throw Error(ErrorCode::DivisionByZero, "zero to a negative power");
      bool trivial = base == 0 || base == 1 || base == -1;
      if (!trivial) {
        // |num|^e * den^e has at least e * (msb(num) + msb(den)) * log10(2) digits.
        Int a = boost::multiprecision::abs(boost::multiprecision::numerator(base));
        double log2_lower = static_cast<double>(a == 0 ? 0 : boost::multiprecision::msb(a)) +
                            static_cast<double>(boost::multiprecision::msb(boost::multiprecision::denominator(base)));
        double lower_digits = log2_lower * 0.30103 * static_cast<double>(mag.convert_to<long double>());
        if (lower_digits > static_cast<double>(budget_.max_value_symbols))
          throw Error(ErrorCode::BudgetExceeded, "power exceeds the size budget");
      }
      unsigned e = trivial ? static_cast<unsigned>(mag % 2) : static_cast<unsigned>(mag);
      Int num = boost::multiprecision::pow(boost::multiprecision::numerator(base), e);
      Int den = boost::multiprecision::pow(boost::multiprecision::denominator(base), e);
      if (base == 0 && mag != 0) num = 0;
      Rational r = exp < 0 ? Rational(den, num) : Rational(num, den);
      return record(render(args[0]), "^", render(args[1]), check(std::move(r)));
    }
    parse_error("unknown function '" + n.name + "'");
  }

  const Budget& budget_;
  std::vector<TraceStep>& trace_;
  std::map<std::string, Value> env_;
  std::size_t steps_ = 0;
};

}  // namespace

Evaluation evaluate(std::string_view code, const Budget& budget) {
  auto program = Parser(lex(code)).program();
  Evaluation out;
  Evaluator ev(budget, out.trace);
  for (auto& [name, node] : program.bindings) {
    ev.tick();
    ev.bind(name, ev.eval(*node));
  }
  Value v = ev.eval(*program.body);
  out.value = render(v);
  if (out.value.size() > budget.max_value_symbols)
    throw Error(ErrorCode::BudgetExceeded, "printed value exceeds the size budget");
  out.steps = ev.steps();
  return out;
}

}  // namespace moderoute::expr

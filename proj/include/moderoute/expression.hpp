#pragma once

// Bounded evaluator for the code_execute tool.
//
//   program  := { "let" name "=" expr ";" } expr [";"]
//   expr     := or;  or := and {"||" and};  and := cmp {"&&" cmp}
//   cmp      := add [("=="|"!="|"<"|"<="|">"|">=") add]
//   add      := mul {("+"|"-") mul};  mul := unary {("*"|"/"|"%") unary}
//   unary    := ("-"|"!") unary | primary
//   primary  := number | "true" | "false" | name | name "(" args ")" | "(" expr ")"
//
// Numbers are exact rationals; "%" follows floored (Python) semantics.
// Built-ins: pow, mod, abs, min, max.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace moderoute::expr {

struct Budget {
  std::size_t max_steps = 10'000;
  std::size_t max_value_symbols = 4'096;
};

/// One applied operator, e.g. {"17 * 23", "391"}.
struct TraceStep {
  std::string operation;
  std::string result;
};

struct Evaluation {
  std::string value;
  std::size_t steps = 0;
  std::vector<TraceStep> trace;
};

/// Throws Error with ParseError, BudgetExceeded or DivisionByZero.
Evaluation evaluate(std::string_view code, const Budget& budget = {});

}  // namespace moderoute::expr

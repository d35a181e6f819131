#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace indukt::dsl {

using Value = std::int64_t;
using List = std::vector<Value>;

/// Arithmetic results saturate to this magnitude.
inline constexpr Value kSaturation = 2147483647;
inline constexpr std::size_t kDefaultStepBudget = 10000;

/// Version of the primitive table. Bump when primitives are added.
inline constexpr int kPrimitiveSetVersion = 1;

enum class Primitive {
  Identity,
  Reverse,
  Sort,
  Unique,
  Head,
  Tail,
  Last,
  Init,
  Length,
  Sum,
  Max,
  Min,
  Take,
  Drop,
  Append,
  Prepend,
  Remove,
  Count,
  Add,
  Sub,
  Mul,
  Mod,
  RotateLeft,
  RotateRight,
  Repeat,
  FilterEven,
  FilterOdd,
  FilterGt,
  FilterLt,
  Index,
  Slice,
  Replace,
  Insert,
  ConcatSelf,
};

struct PrimitiveInfo {
  Primitive op;
  std::string_view name;
  int arity;
};

/// The full primitive table, in declaration order.
std::span<const PrimitiveInfo> primitives();

std::optional<PrimitiveInfo> lookup(std::string_view name);
const PrimitiveInfo& info(Primitive op);

struct Stage {
  Primitive op;
  std::vector<Value> args;

  friend bool operator==(const Stage&, const Stage&) = default;
};

struct Program {
  std::vector<Stage> stages;

  friend bool operator==(const Program&, const Program&) = default;
};

/// Raised by parse(). `position` is a byte offset into the source text.
class ParseError : public std::runtime_error {
public:
  enum class Kind { Syntax, UnknownPrimitive, Arity, BadArgument };

  ParseError(Kind kind, std::size_t position, const std::string& message);

  Kind kind() const noexcept { return kind_; }
  std::size_t position() const noexcept { return position_; }

private:
  Kind kind_;
  std::size_t position_;
};

// program := stage ("|" stage)* ; stage := NAME INT*
Program parse(std::string_view text);

/// Canonical text: tokens separated by single spaces, stages joined by " | ".
std::string pretty(const Program& program);

enum class EvalStatus { Ok, StepBudgetExceeded, ArityOrNameError };

std::string_view to_string(EvalStatus status);

struct EvalOutcome {
  EvalStatus status = EvalStatus::Ok;
  std::optional<List> output;  // present iff status == Ok
  std::size_t steps_used = 0;
  std::string diagnostic;      // empty when ok

  friend bool operator==(const EvalOutcome&, const EvalOutcome&) = default;
};

/// Step cost of one stage application: 1 + max(|input|, |output|).
/// The output length is known before any element is produced, so oversized
/// stages are rejected without being materialized.
std::size_t stage_cost(std::size_t input_length, std::size_t output_length);

EvalOutcome evaluate(const Program& program, std::span<const Value> input,
                     std::size_t budget = kDefaultStepBudget);

/// Parses then evaluates; parse failures become ArityOrNameError outcomes.
EvalOutcome evaluate_text(std::string_view text, std::span<const Value> input,
                          std::size_t budget = kDefaultStepBudget);

std::string format_list(std::span<const Value> values);

}  // namespace indukt::dsl

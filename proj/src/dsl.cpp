#include "indukt/dsl.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace indukt::dsl {

namespace {

constexpr std::array kPrimitives{
    PrimitiveInfo{Primitive::Identity, "identity", 0},
    PrimitiveInfo{Primitive::Reverse, "reverse", 0},
    PrimitiveInfo{Primitive::Sort, "sort", 0},
    PrimitiveInfo{Primitive::Unique, "unique", 0},
    PrimitiveInfo{Primitive::Head, "head", 0},
    PrimitiveInfo{Primitive::Tail, "tail", 0},
    PrimitiveInfo{Primitive::Last, "last", 0},
    PrimitiveInfo{Primitive::Init, "init", 0},
    PrimitiveInfo{Primitive::Length, "length", 0},
    PrimitiveInfo{Primitive::Sum, "sum", 0},
    PrimitiveInfo{Primitive::Max, "max", 0},
    PrimitiveInfo{Primitive::Min, "min", 0},
    PrimitiveInfo{Primitive::Take, "take", 1},
    PrimitiveInfo{Primitive::Drop, "drop", 1},
    PrimitiveInfo{Primitive::Append, "append", 1},
    PrimitiveInfo{Primitive::Prepend, "prepend", 1},
    PrimitiveInfo{Primitive::Remove, "remove", 1},
    PrimitiveInfo{Primitive::Count, "count", 1},
    PrimitiveInfo{Primitive::Add, "add", 1},
    PrimitiveInfo{Primitive::Sub, "sub", 1},
    PrimitiveInfo{Primitive::Mul, "mul", 1},
    PrimitiveInfo{Primitive::Mod, "mod", 1},
    PrimitiveInfo{Primitive::RotateLeft, "rotate_left", 1},
    PrimitiveInfo{Primitive::RotateRight, "rotate_right", 1},
    PrimitiveInfo{Primitive::Repeat, "repeat", 1},
    PrimitiveInfo{Primitive::FilterEven, "filter_even", 0},
    PrimitiveInfo{Primitive::FilterOdd, "filter_odd", 0},
    PrimitiveInfo{Primitive::FilterGt, "filter_gt", 1},
    PrimitiveInfo{Primitive::FilterLt, "filter_lt", 1},
    PrimitiveInfo{Primitive::Index, "index", 1},
    PrimitiveInfo{Primitive::Slice, "slice", 2},
    PrimitiveInfo{Primitive::Replace, "replace", 2},
    PrimitiveInfo{Primitive::Insert, "insert", 2},
    PrimitiveInfo{Primitive::ConcatSelf, "concat_self", 0},
};

Value saturate(__int128 v) {
  if (v > kSaturation) return kSaturation;
  if (v < -kSaturation) return -kSaturation;
  return static_cast<Value>(v);
}

bool is_name_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

class Parser {
public:
  explicit Parser(std::string_view text) : text_(text) {}

  Program run() {
    Program program;
    program.stages.push_back(stage());
    skip_space();
    while (pos_ < text_.size()) {
      if (text_[pos_] != '|') {
        throw ParseError(ParseError::Kind::Syntax, pos_,
                         "expected '|' or end of program, found '" +
                             std::string(1, text_[pos_]) + "'");
      }
      ++pos_;
      program.stages.push_back(stage());
      skip_space();
    }
    return program;
  }

private:
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  Stage stage() {
    skip_space();
    const std::size_t start = pos_;
    if (pos_ >= text_.size() || !is_name_start(text_[pos_])) {
      throw ParseError(ParseError::Kind::Syntax, pos_, "expected primitive name");
    }
    while (pos_ < text_.size() && is_name_char(text_[pos_])) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);
    const auto prim = lookup(name);
    if (!prim) {
      throw ParseError(ParseError::Kind::UnknownPrimitive, start,
                       "unknown primitive '" + std::string(name) + "'");
    }

    Stage st{prim->op, {}};
    std::vector<std::size_t> arg_positions;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] == '|') break;
      arg_positions.push_back(pos_);
      st.args.push_back(integer());
    }

    if (static_cast<int>(st.args.size()) != prim->arity) {
      std::ostringstream msg;
      msg << "'" << prim->name << "' takes " << prim->arity << " argument"
          << (prim->arity == 1 ? "" : "s") << ", got " << st.args.size();
      throw ParseError(ParseError::Kind::Arity, start, msg.str());
    }
    if (prim->op == Primitive::Mod && st.args[0] == 0) {
      throw ParseError(ParseError::Kind::BadArgument, arg_positions[0],
                       "'mod' argument must be nonzero");
    }
    if (prim->op == Primitive::Repeat && st.args[0] < 0) {
      throw ParseError(ParseError::Kind::BadArgument, arg_positions[0],
                       "'repeat' argument must be >= 0");
    }
    return st;
  }

  Value integer() {
    const std::size_t start = pos_;
    bool negative = false;
    if (text_[pos_] == '-') {
      negative = true;
      ++pos_;
    }
    if (pos_ >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      throw ParseError(ParseError::Kind::Syntax, start, "expected integer argument");
    }
    __int128 value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + (text_[pos_] - '0');
      if (value > kSaturation) {
        throw ParseError(ParseError::Kind::BadArgument, start,
                         "integer argument out of range");
      }
      ++pos_;
    }
    if (pos_ < text_.size() && is_name_char(text_[pos_])) {
      throw ParseError(ParseError::Kind::Syntax, pos_, "malformed integer argument");
    }
    return static_cast<Value>(negative ? -value : value);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::size_t saturating_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) {
    return std::numeric_limits<std::size_t>::max();
  }
  return a * b;
}

// Output length when it can exceed the input length; otherwise the input
// length is an upper bound.
std::size_t predicted_length(const Stage& st, std::size_t n) {
  switch (st.op) {
    case Primitive::Append:
    case Primitive::Prepend:
    case Primitive::Insert:
      return n + 1;
    case Primitive::ConcatSelf:
      return saturating_mul(n, 2);
    case Primitive::Repeat:
      return saturating_mul(n, static_cast<std::size_t>(st.args[0]));
    case Primitive::Length:
    case Primitive::Sum:
    case Primitive::Count:
      return 1;
    default:
      return n;
  }
}

std::size_t rotation(Value k, std::size_t n) {
  const auto m = static_cast<Value>(n);
  return static_cast<std::size_t>(((k % m) + m) % m);
}

List apply_stage(const Stage& st, const List& xs) {
  const std::size_t n = xs.size();
  auto arg = [&](std::size_t i) { return st.args[i]; };
  List out;
  switch (st.op) {
    case Primitive::Identity:
      return xs;
    case Primitive::Reverse:
      return List(xs.rbegin(), xs.rend());
    case Primitive::Sort:
      out = xs;
      std::sort(out.begin(), out.end());
      return out;
    case Primitive::Unique: {
      std::unordered_set<Value> seen;
      for (Value x : xs)
        if (seen.insert(x).second) out.push_back(x);
      return out;
    }
    case Primitive::Head:
      return n ? List{xs.front()} : List{};
    case Primitive::Tail:
      return n ? List(xs.begin() + 1, xs.end()) : List{};
    case Primitive::Last:
      return n ? List{xs.back()} : List{};
    case Primitive::Init:
      return n ? List(xs.begin(), xs.end() - 1) : List{};
    case Primitive::Length:
      return {saturate(static_cast<__int128>(n))};
    case Primitive::Sum: {
      __int128 total = 0;
      for (Value x : xs) total += x;
      return {saturate(total)};
    }
    case Primitive::Max:
      return n ? List{*std::max_element(xs.begin(), xs.end())} : List{};
    case Primitive::Min:
      return n ? List{*std::min_element(xs.begin(), xs.end())} : List{};
    case Primitive::Take: {
      const auto k = static_cast<std::size_t>(std::clamp<Value>(arg(0), 0, static_cast<Value>(n)));
      return List(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k));
    }
    case Primitive::Drop: {
      const auto k = static_cast<std::size_t>(std::clamp<Value>(arg(0), 0, static_cast<Value>(n)));
      return List(xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
    }
    case Primitive::Append:
      out = xs;
      out.push_back(arg(0));
      return out;
    case Primitive::Prepend:
      out.reserve(n + 1);
      out.push_back(arg(0));
      out.insert(out.end(), xs.begin(), xs.end());
      return out;
    case Primitive::Remove:
      for (Value x : xs)
        if (x != arg(0)) out.push_back(x);
      return out;
    case Primitive::Count:
      return {static_cast<Value>(std::count(xs.begin(), xs.end(), arg(0)))};
    case Primitive::Add:
      for (Value x : xs) out.push_back(saturate(static_cast<__int128>(x) + arg(0)));
      return out;
    case Primitive::Sub:
      for (Value x : xs) out.push_back(saturate(static_cast<__int128>(x) - arg(0)));
      return out;
    case Primitive::Mul:
      for (Value x : xs) out.push_back(saturate(static_cast<__int128>(x) * arg(0)));
      return out;
    case Primitive::Mod:
      // Result takes the sign of the divisor (floored modulo).
      for (Value x : xs) {
        if (arg(0) == 1 || arg(0) == -1) {
          out.push_back(0);
          continue;
        }
        Value r = x % arg(0);
        if (r != 0 && ((r < 0) != (arg(0) < 0))) r += arg(0);
        out.push_back(r);
      }
      return out;
    case Primitive::RotateLeft: {
      if (n == 0) return {};
      const std::size_t k = rotation(arg(0), n);
      out.insert(out.end(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
      out.insert(out.end(), xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k));
      return out;
    }
    case Primitive::RotateRight: {
      if (n == 0) return {};
      const std::size_t k = (n - rotation(arg(0), n)) % n;
      out.insert(out.end(), xs.begin() + static_cast<std::ptrdiff_t>(k), xs.end());
      out.insert(out.end(), xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(k));
      return out;
    }
    case Primitive::Repeat:
      out.reserve(n * static_cast<std::size_t>(arg(0)));
      for (Value i = 0; i < arg(0); ++i) out.insert(out.end(), xs.begin(), xs.end());
      return out;
    case Primitive::FilterEven:
      for (Value x : xs)
        if (x % 2 == 0) out.push_back(x);
      return out;
    case Primitive::FilterOdd:
      for (Value x : xs)
        if (x % 2 != 0) out.push_back(x);
      return out;
    case Primitive::FilterGt:
      for (Value x : xs)
        if (x > arg(0)) out.push_back(x);
      return out;
    case Primitive::FilterLt:
      for (Value x : xs)
        if (x < arg(0)) out.push_back(x);
      return out;
    case Primitive::Index:
      if (arg(0) < 1 || arg(0) > static_cast<Value>(n)) return {};
      return {xs[static_cast<std::size_t>(arg(0) - 1)]};
    case Primitive::Slice: {
      const Value lo = std::max<Value>(arg(0), 1);
      const Value hi = std::min<Value>(arg(1), static_cast<Value>(n));
      if (lo > hi) return {};
      return List(xs.begin() + (lo - 1), xs.begin() + hi);
    }
    case Primitive::Replace:
      for (Value x : xs) out.push_back(x == arg(0) ? arg(1) : x);
      return out;
    case Primitive::Insert: {
      const Value pos = std::clamp<Value>(arg(0), 1, static_cast<Value>(n) + 1);
      out = xs;
      out.insert(out.begin() + (pos - 1), arg(1));
      return out;
    }
    case Primitive::ConcatSelf:
      out.reserve(2 * n);
      out.insert(out.end(), xs.begin(), xs.end());
      out.insert(out.end(), xs.begin(), xs.end());
      return out;
  }
  return out;
}

}  // namespace

ParseError::ParseError(Kind kind, std::size_t position, const std::string& message)
    : std::runtime_error("at " + std::to_string(position) + ": " + message),
      kind_(kind),
      position_(position) {}

std::span<const PrimitiveInfo> primitives() { return kPrimitives; }

std::optional<PrimitiveInfo> lookup(std::string_view name) {
  for (const auto& p : kPrimitives)
    if (p.name == name) return p;
  return std::nullopt;
}

const PrimitiveInfo& info(Primitive op) {
  return kPrimitives[static_cast<std::size_t>(op)];
}

Program parse(std::string_view text) { return Parser(text).run(); }

std::string pretty(const Program& program) {
  std::string out;
  for (std::size_t i = 0; i < program.stages.size(); ++i) {
    if (i) out += " | ";
    const auto& st = program.stages[i];
    out += info(st.op).name;
    for (Value a : st.args) {
      out += ' ';
      out += std::to_string(a);
    }
  }
  return out;
}

std::string_view to_string(EvalStatus status) {
  switch (status) {
    case EvalStatus::Ok:
      return "ok";
    case EvalStatus::StepBudgetExceeded:
      return "step_budget_exceeded";
    case EvalStatus::ArityOrNameError:
      return "arity_or_name_error";
  }
  return "unknown";
}

std::size_t stage_cost(std::size_t input_length, std::size_t output_length) {
  const std::size_t touched = std::max(input_length, output_length);
  return touched == std::numeric_limits<std::size_t>::max() ? touched : touched + 1;
}

EvalOutcome evaluate(const Program& program, std::span<const Value> input,
                     std::size_t budget) {
  EvalOutcome outcome;
  List current(input.begin(), input.end());
  for (const auto& st : program.stages) {
    const std::size_t cost = stage_cost(current.size(), predicted_length(st, current.size()));
    if (cost > budget - outcome.steps_used) {
      outcome.status = EvalStatus::StepBudgetExceeded;
      outcome.diagnostic = "step budget of " + std::to_string(budget) +
                           " exceeded at '" + std::string(info(st.op).name) + "'";
      return outcome;
    }
    outcome.steps_used += cost;
    current = apply_stage(st, current);
  }
  outcome.output = std::move(current);
  return outcome;
}

EvalOutcome evaluate_text(std::string_view text, std::span<const Value> input,
                          std::size_t budget) {
  try {
    return evaluate(parse(text), input, budget);
  } catch (const ParseError& e) {
    EvalOutcome outcome;
    outcome.status = EvalStatus::ArityOrNameError;
    outcome.diagnostic = e.what();
    return outcome;
  }
}

std::string format_list(std::span<const Value> values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(values[i]);
  }
  out += ']';
  return out;
}

}  // namespace indukt::dsl

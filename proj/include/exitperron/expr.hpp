#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace exitperron {

/// Raised when an expression cannot be evaluated at the given point
/// (sqrt of a negative number, division by zero).
struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised by the expression and problem-file parsers; message carries a
/// position annotation ("col N" / "line N").
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A scalar expression over state variables x1..xd and control variables
/// a1..ak. Grammar: constants, + - * /, unary -, and the functions
/// sin cos exp sqrt abs min max (min/max are binary).
///
/// Immutable after parsing; evaluation is reentrant and allocation-free.
class Expression {
public:
    Expression() = default;

    /// Parse `text` with the given variable dimensions. Throws ParseError
    /// with a column annotation on malformed input or out-of-range
    /// variable indices.
    static Expression parse(const std::string& text, int dim_state, int dim_control);

    /// Constant expression.
    static Expression constant(double value);

    double eval(std::span<const double> x, std::span<const double> a) const;

    /// Canonical text form; parse(print()) evaluates identically.
    std::string print() const;

    int dim_state() const { return dim_state_; }
    int dim_control() const { return dim_control_; }

    /// True if the expression is a literal constant (no variables, no ops).
    bool is_literal_constant() const;

private:
    enum class Op : uint8_t {
        push_const,
        push_state,
        push_control,
        add,
        sub,
        mul,
        div,
        neg,
        fn_sin,
        fn_cos,
        fn_exp,
        fn_sqrt,
        fn_abs,
        fn_min,
        fn_max,
    };
    struct Instr {
        Op op;
        int32_t index = 0;  // variable index for push_state/push_control
        double value = 0;   // literal for push_const
    };

    std::vector<Instr> code_;  // postfix program
    int dim_state_ = 0;
    int dim_control_ = 0;

    friend class ExprParser;
};

}  // namespace exitperron

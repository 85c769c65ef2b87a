#include "exitperron/expr.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace exitperron {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

class ExprParser {
public:
    ExprParser(const std::string& text, int dim_state, int dim_control)
        : text_(text), d_(dim_state), k_(dim_control) {}

    Expression run() {
        Expression e;
        e.dim_state_ = d_;
        e.dim_control_ = k_;
        out_ = &e.code_;
        skip_ws();
        parse_sum();
        skip_ws();
        if (pos_ != text_.size())
            fail("unexpected trailing input");
        return e;
    }

private:
    using Op = Expression::Op;

    const std::string& text_;
    int d_;
    int k_;
    size_t pos_ = 0;
    std::vector<Expression::Instr>* out_ = nullptr;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("expression: col " + std::to_string(pos_ + 1) + ": " + msg);
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    bool consume(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void emit(Op op, int32_t index = 0, double value = 0) {
        out_->push_back({op, index, value});
    }

    void parse_sum() {
        parse_term();
        for (;;) {
            skip_ws();
            if (consume('+')) {
                parse_term();
                emit(Op::add);
            } else if (consume('-')) {
                parse_term();
                emit(Op::sub);
            } else {
                return;
            }
        }
    }

    void parse_term() {
        parse_unary();
        for (;;) {
            skip_ws();
            if (consume('*')) {
                parse_unary();
                emit(Op::mul);
            } else if (consume('/')) {
                parse_unary();
                emit(Op::div);
            } else {
                return;
            }
        }
    }

    void parse_unary() {
        skip_ws();
        if (consume('-')) {
            parse_unary();
            emit(Op::neg);
            return;
        }
        parse_primary();
    }

    void parse_primary() {
        skip_ws();
        char c = peek();
        if (c == '(') {
            ++pos_;
            parse_sum();
            skip_ws();
            if (!consume(')')) fail("expected ')'");
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            parse_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            parse_ident();
            return;
        }
        fail(c ? std::string("unexpected character '") + c + "'" : "unexpected end of input");
    }

    void parse_number() {
        const char* start = text_.c_str() + pos_;
        char* end = nullptr;
        double v = std::strtod(start, &end);
        if (end == start) fail("malformed number");
        pos_ += static_cast<size_t>(end - start);
        emit(Op::push_const, 0, v);
    }

    void parse_ident() {
        size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name = text_.substr(start, pos_ - start);

        // variable: x<i> or a<i>, 1-based
        if ((name[0] == 'x' || name[0] == 'a') && name.size() > 1 &&
            std::isdigit(static_cast<unsigned char>(name[1]))) {
            int idx = std::atoi(name.c_str() + 1);
            int limit = name[0] == 'x' ? d_ : k_;
            if (idx < 1 || idx > limit)
                fail("variable '" + name + "' out of range (dimension " + std::to_string(limit) + ")");
            emit(name[0] == 'x' ? Op::push_state : Op::push_control, idx - 1);
            return;
        }

        int arity;
        Op op;
        if (name == "sin") { op = Op::fn_sin; arity = 1; }
        else if (name == "cos") { op = Op::fn_cos; arity = 1; }
        else if (name == "exp") { op = Op::fn_exp; arity = 1; }
        else if (name == "sqrt") { op = Op::fn_sqrt; arity = 1; }
        else if (name == "abs") { op = Op::fn_abs; arity = 1; }
        else if (name == "min") { op = Op::fn_min; arity = 2; }
        else if (name == "max") { op = Op::fn_max; arity = 2; }
        else fail("unknown identifier '" + name + "'");

        skip_ws();
        if (!consume('(')) fail("expected '(' after function '" + name + "'");
        parse_sum();
        for (int i = 1; i < arity; ++i) {
            skip_ws();
            if (!consume(',')) fail("function '" + name + "' takes " + std::to_string(arity) + " arguments");
            parse_sum();
        }
        skip_ws();
        if (!consume(')')) fail("expected ')'");
        emit(op);
    }
};

Expression Expression::parse(const std::string& text, int dim_state, int dim_control) {
    return ExprParser(text, dim_state, dim_control).run();
}

Expression Expression::constant(double value) {
    Expression e;
    e.code_.push_back({Op::push_const, 0, value});
    return e;
}

bool Expression::is_literal_constant() const {
    return code_.size() == 1 && code_[0].op == Op::push_const;
}

double Expression::eval(std::span<const double> x, std::span<const double> a) const {
    std::array<double, 64> stack;
    size_t top = 0;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::push_const: stack[top++] = in.value; break;
            case Op::push_state: stack[top++] = x[static_cast<size_t>(in.index)]; break;
            case Op::push_control: stack[top++] = a[static_cast<size_t>(in.index)]; break;
            case Op::add: --top; stack[top - 1] += stack[top]; break;
            case Op::sub: --top; stack[top - 1] -= stack[top]; break;
            case Op::mul: --top; stack[top - 1] *= stack[top]; break;
            case Op::div:
                --top;
                if (stack[top] == 0.0) throw EvalError("division by zero");
                stack[top - 1] /= stack[top];
                break;
            case Op::neg: stack[top - 1] = -stack[top - 1]; break;
            case Op::fn_sin: stack[top - 1] = std::sin(stack[top - 1]); break;
            case Op::fn_cos: stack[top - 1] = std::cos(stack[top - 1]); break;
            case Op::fn_exp: stack[top - 1] = std::exp(stack[top - 1]); break;
            case Op::fn_sqrt:
                if (stack[top - 1] < 0.0) throw EvalError("sqrt of negative value");
                stack[top - 1] = std::sqrt(stack[top - 1]);
                break;
            case Op::fn_abs: stack[top - 1] = std::fabs(stack[top - 1]); break;
            case Op::fn_min: --top; stack[top - 1] = std::fmin(stack[top - 1], stack[top]); break;
            case Op::fn_max: --top; stack[top - 1] = std::fmax(stack[top - 1], stack[top]); break;
        }
    }
    return stack[0];
}

std::string Expression::print() const {
    // Rebuild infix text by running the postfix program on a stack of
    // (text, precedence) pairs. Precedence: sum 1, product 2, unary 3, atom 4.
    struct Frag {
        std::string text;
        int prec;
    };
    std::vector<Frag> stack;
    auto paren_if = [](const Frag& f, int need) {
        return f.prec < need ? "(" + f.text + ")" : f.text;
    };
    // the right operand is always parenthesized at equal precedence so
    // the printed text reassociates exactly like the original tree
    auto binary = [&](const char* sym, int prec) {
        Frag rhs = stack.back();
        stack.pop_back();
        Frag lhs = stack.back();
        stack.pop_back();
        std::string t = paren_if(lhs, prec) + " " + sym + " " + paren_if(rhs, prec + 1);
        stack.push_back({t, prec});
    };
    auto fn1 = [&](const char* name) {
        Frag v = stack.back();
        stack.pop_back();
        stack.push_back({std::string(name) + "(" + v.text + ")", 4});
    };
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::push_const: {
                double v = in.value;
                if (v < 0)
                    stack.push_back({"-" + format_double(-v), 3});
                else
                    stack.push_back({format_double(v), 4});
                break;
            }
            case Op::push_state:
                stack.push_back({"x" + std::to_string(in.index + 1), 4});
                break;
            case Op::push_control:
                stack.push_back({"a" + std::to_string(in.index + 1), 4});
                break;
            case Op::add: binary("+", 1); break;
            case Op::sub: binary("-", 1); break;
            case Op::mul: binary("*", 2); break;
            case Op::div: binary("/", 2); break;
            case Op::neg: {
                Frag v = stack.back();
                stack.pop_back();
                stack.push_back({"-" + paren_if(v, 3), 3});
                break;
            }
            case Op::fn_sin: fn1("sin"); break;
            case Op::fn_cos: fn1("cos"); break;
            case Op::fn_exp: fn1("exp"); break;
            case Op::fn_sqrt: fn1("sqrt"); break;
            case Op::fn_abs: fn1("abs"); break;
            case Op::fn_min:
            case Op::fn_max: {
                Frag rhs = stack.back();
                stack.pop_back();
                Frag lhs = stack.back();
                stack.pop_back();
                const char* name = in.op == Op::fn_min ? "min" : "max";
                stack.push_back({std::string(name) + "(" + lhs.text + ", " + rhs.text + ")", 4});
                break;
            }
        }
    }
    return stack.empty() ? "0" : stack[0].text;
}

}  // namespace exitperron

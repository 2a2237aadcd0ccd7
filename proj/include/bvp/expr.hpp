#pragma once

// Closed-form scalar expressions over the collar cotangent data (x, t, xi, lam).
// The grammar covers complex constants, the four variables, finite Fourier
// sums in x (via exp/cos/sin), |xi|, polynomials in lam, sums, products,
// quotients and integer powers.  Evaluation is exact floating-point
// arithmetic on the parsed tree, so identical inputs give identical outputs.

#include <cctype>
#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "bvp/errors.hpp"

namespace bvp {

using Complex = std::complex<double>;

struct EvalPoint {
    double x = 0.0;    // boundary coordinate
    double t = 0.0;    // collar coordinate
    double xi = 0.0;   // tangential covariable
    Complex lam = 0.0; // normal covariable
};

namespace detail {

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    enum class Kind { Const, VarX, VarT, VarXi, VarLam, Add, Sub, Mul, Div, Neg, Pow, Abs, Exp, Cos, Sin, Alpha };
    Kind kind;
    Complex value{};   // Const
    long exponent = 0; // Pow
    ExprPtr a, b;

    Complex eval(const EvalPoint& p) const {
        switch (kind) {
            case Kind::Const: return value;
            case Kind::VarX: return p.x;
            case Kind::VarT: return p.t;
            case Kind::VarXi: return p.xi;
            case Kind::VarLam: return p.lam;
            case Kind::Add: return a->eval(p) + b->eval(p);
            case Kind::Sub: return a->eval(p) - b->eval(p);
            case Kind::Mul: return a->eval(p) * b->eval(p);
            case Kind::Div: return a->eval(p) / b->eval(p);
            case Kind::Neg: return -a->eval(p);
            case Kind::Pow: {
                Complex base = a->eval(p);
                Complex r = 1.0;
                long n = exponent >= 0 ? exponent : -exponent;
                for (long k = 0; k < n; ++k) r *= base;
                return exponent >= 0 ? r : Complex(1.0) / r;
            }
            case Kind::Abs: return std::abs(a->eval(p));
            case Kind::Exp: return std::exp(a->eval(p));
            case Kind::Cos: return std::cos(a->eval(p));
            case Kind::Sin: return std::sin(a->eval(p));
            case Kind::Alpha: {
                EvalPoint q = p;
                q.xi = -q.xi;
                q.lam = -q.lam;
                return a->eval(q);
            }
        }
        return {};
    }
};

inline ExprPtr make_const(Complex v) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Const;
    n->value = v;
    return n;
}

inline ExprPtr make_node(ExprNode::Kind k, ExprPtr a, ExprPtr b = nullptr) {
    auto n = std::make_shared<ExprNode>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

// Recursive-descent parser for the grammar above.
class Parser {
  public:
    explicit Parser(std::string src) : src_(std::move(src)) {}

    ExprPtr parse() {
        ExprPtr e = parse_sum();
        skip_ws();
        if (pos_ != src_.size())
            fail("unexpected trailing input");
        return e;
    }

  private:
    std::string src_;
    size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw MalformedSymbolError("expression '" + src_ + "' at position " +
                                   std::to_string(pos_) + ": " + what);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    ExprPtr parse_sum() {
        ExprPtr e = parse_term();
        for (;;) {
            if (consume('+'))
                e = make_node(ExprNode::Kind::Add, e, parse_term());
            else if (consume('-'))
                e = make_node(ExprNode::Kind::Sub, e, parse_term());
            else
                return e;
        }
    }

    ExprPtr parse_term() {
        ExprPtr e = parse_factor();
        for (;;) {
            if (consume('*'))
                e = make_node(ExprNode::Kind::Mul, e, parse_factor());
            else if (consume('/'))
                e = make_node(ExprNode::Kind::Div, e, parse_factor());
            else
                return e;
        }
    }

    ExprPtr parse_factor() {
        ExprPtr e = parse_unary();
        if (consume('^')) {
            skip_ws();
            bool neg = consume('-');
            size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (pos_ == start) fail("integer exponent expected after '^'");
            long exp = std::stol(src_.substr(start, pos_ - start));
            auto n = std::make_shared<ExprNode>();
            n->kind = ExprNode::Kind::Pow;
            n->exponent = neg ? -exp : exp;
            n->a = e;
            return n;
        }
        return e;
    }

    ExprPtr parse_unary() {
        if (consume('-')) return make_node(ExprNode::Kind::Neg, parse_unary());
        if (consume('+')) return parse_unary();
        return parse_primary();
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
        if (consume('(')) {
            ExprPtr e = parse_sum();
            if (!consume(')')) fail("expected ')'");
            return e;
        }
        fail("unexpected character");
    }

    ExprPtr parse_number() {
        size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                src_[pos_] == 'e' || src_[pos_] == 'E' ||
                ((src_[pos_] == '+' || src_[pos_] == '-') && pos_ > start &&
                 (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))))
            ++pos_;
        return make_const(std::stod(src_.substr(start, pos_ - start)));
    }

    ExprPtr parse_ident() {
        size_t start = pos_;
        while (pos_ < src_.size() && std::isalpha(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        std::string name = src_.substr(start, pos_ - start);
        if (name == "i") return make_const(Complex(0.0, 1.0));
        if (name == "pi") return make_const(Complex(M_PI, 0.0));
        if (name == "x") return make_node(ExprNode::Kind::VarX, nullptr);
        if (name == "t") return make_node(ExprNode::Kind::VarT, nullptr);
        if (name == "xi") return make_node(ExprNode::Kind::VarXi, nullptr);
        if (name == "lam") return make_node(ExprNode::Kind::VarLam, nullptr);
        ExprNode::Kind fk;
        if (name == "abs") fk = ExprNode::Kind::Abs;
        else if (name == "exp") fk = ExprNode::Kind::Exp;
        else if (name == "cos") fk = ExprNode::Kind::Cos;
        else if (name == "sin") fk = ExprNode::Kind::Sin;
        else fail("unknown identifier '" + name + "'");
        if (!consume('(')) fail("expected '(' after function name");
        ExprPtr arg = parse_sum();
        if (!consume(')')) fail("expected ')'");
        return make_node(fk, arg);
    }
};

}  // namespace detail

/// Immutable scalar expression; value semantics over a shared parse tree.
class Expr {
  public:
    Expr() : node_(detail::make_const(0.0)) {}
    /* implicit */ Expr(double v) : node_(detail::make_const(v)) {}
    /* implicit */ Expr(Complex v) : node_(detail::make_const(v)) {}

    static Expr parse(const std::string& src) { return Expr(detail::Parser(src).parse()); }
    static Expr constant(Complex v) { return Expr(detail::make_const(v)); }
    static Expr var_x() { return Expr(detail::make_node(detail::ExprNode::Kind::VarX, nullptr)); }
    static Expr var_t() { return Expr(detail::make_node(detail::ExprNode::Kind::VarT, nullptr)); }
    static Expr var_xi() { return Expr(detail::make_node(detail::ExprNode::Kind::VarXi, nullptr)); }
    static Expr var_lam() { return Expr(detail::make_node(detail::ExprNode::Kind::VarLam, nullptr)); }
    static Expr abs_xi() {
        return Expr(detail::make_node(detail::ExprNode::Kind::Abs,
                                      detail::make_node(detail::ExprNode::Kind::VarXi, nullptr)));
    }

    Complex eval(const EvalPoint& p) const { return node_->eval(p); }

    /// Pullback by the antipodal involution (xi, lam) -> (-xi, -lam).
    /// Applying it twice removes the wrapper, so the involution is exact.
    Expr alpha() const {
        if (node_->kind == detail::ExprNode::Kind::Alpha) return Expr(node_->a);
        return Expr(detail::make_node(detail::ExprNode::Kind::Alpha, node_));
    }

    friend Expr operator+(const Expr& a, const Expr& b) {
        return Expr(detail::make_node(detail::ExprNode::Kind::Add, a.node_, b.node_));
    }
    friend Expr operator-(const Expr& a, const Expr& b) {
        return Expr(detail::make_node(detail::ExprNode::Kind::Sub, a.node_, b.node_));
    }
    friend Expr operator*(const Expr& a, const Expr& b) {
        return Expr(detail::make_node(detail::ExprNode::Kind::Mul, a.node_, b.node_));
    }
    friend Expr operator-(const Expr& a) {
        return Expr(detail::make_node(detail::ExprNode::Kind::Neg, a.node_));
    }

  private:
    explicit Expr(detail::ExprPtr n) : node_(std::move(n)) {}
    detail::ExprPtr node_;
};

}  // namespace bvp

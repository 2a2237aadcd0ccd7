#pragma once

// Matrix-valued symbols on the collar cotangent data.  A symbol is either a
// grid of parsed expressions or a computed evaluator (used by the homotopy
// constructions, whose steps involve spectral projectors that have no
// closed-form expression).  Both are pure functions of the evaluation point.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "bvp/expr.hpp"

namespace bvp {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class MatrixSymbol {
  public:
    using EvalFn = std::function<Matrix(const EvalPoint&)>;

    MatrixSymbol() = default;

    /// Symbol from a row-major grid of expressions.
    MatrixSymbol(int rows, int cols, int degree, std::vector<Expr> entries)
        : rows_(rows), cols_(cols), degree_(degree), entries_(std::move(entries)) {
        if (static_cast<int>(entries_.size()) != rows_ * cols_)
            throw ShapeError("entry count does not match declared shape");
    }

    /// Symbol from a computed evaluator.
    MatrixSymbol(int rows, int cols, int degree, EvalFn fn)
        : rows_(rows), cols_(cols), degree_(degree), fn_(std::move(fn)) {}

    static MatrixSymbol from_strings(int rows, int cols, int degree,
                                     const std::vector<std::string>& exprs) {
        std::vector<Expr> entries;
        entries.reserve(exprs.size());
        for (const auto& s : exprs) entries.push_back(Expr::parse(s));
        return MatrixSymbol(rows, cols, degree, std::move(entries));
    }

    static MatrixSymbol scalar(const Expr& e, int degree) {
        return MatrixSymbol(1, 1, degree, std::vector<Expr>{e});
    }

    static MatrixSymbol identity(int n) {
        std::vector<Expr> entries(static_cast<size_t>(n) * n, Expr(0.0));
        for (int k = 0; k < n; ++k) entries[static_cast<size_t>(k) * n + k] = Expr(1.0);
        return MatrixSymbol(n, n, 0, std::move(entries));
    }

    static MatrixSymbol zero(int rows, int cols, int degree = 0) {
        return MatrixSymbol(rows, cols, degree,
                            std::vector<Expr>(static_cast<size_t>(rows) * cols, Expr(0.0)));
    }

    static MatrixSymbol constant(const Matrix& m, int degree = 0) {
        std::vector<Expr> entries;
        entries.reserve(static_cast<size_t>(m.rows()) * m.cols());
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) entries.push_back(Expr(m(r, c)));
        return MatrixSymbol(static_cast<int>(m.rows()), static_cast<int>(m.cols()), degree,
                            std::move(entries));
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int degree() const { return degree_; }
    bool valid() const { return rows_ > 0; }

    Matrix eval(const EvalPoint& p) const {
        if (fn_) {
            Matrix m = fn_(p);
            if (m.rows() != rows_ || m.cols() != cols_)
                throw ShapeError("symbol evaluator returned wrong shape");
            return m;
        }
        Matrix m(rows_, cols_);
        for (int r = 0; r < rows_; ++r)
            for (int c = 0; c < cols_; ++c)
                m(r, c) = entries_[static_cast<size_t>(r) * cols_ + c].eval(p);
        return m;
    }

    Matrix eval(double x, double t, double xi, Complex lam) const {
        return eval(EvalPoint{x, t, xi, lam});
    }

    /// Pullback by alpha(x, xi, lam) = (x, -xi, -lam).  Involutive.
    MatrixSymbol alpha() const {
        if (fn_) {
            EvalFn inner = fn_;
            if (alpha_wrapped_) {
                MatrixSymbol s(rows_, cols_, degree_, alpha_inner_);
                return s;
            }
            MatrixSymbol s(rows_, cols_, degree_, [inner](const EvalPoint& p) {
                EvalPoint q = p;
                q.xi = -q.xi;
                q.lam = -q.lam;
                return inner(q);
            });
            s.alpha_wrapped_ = true;
            s.alpha_inner_ = inner;
            return s;
        }
        std::vector<Expr> entries;
        entries.reserve(entries_.size());
        for (const auto& e : entries_) entries.push_back(e.alpha());
        return MatrixSymbol(rows_, cols_, degree_, std::move(entries));
    }

    friend MatrixSymbol operator+(const MatrixSymbol& a, const MatrixSymbol& b) {
        if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw ShapeError("symbol sum shape mismatch");
        if (!a.fn_ && !b.fn_) {
            std::vector<Expr> entries;
            entries.reserve(a.entries_.size());
            for (size_t k = 0; k < a.entries_.size(); ++k)
                entries.push_back(a.entries_[k] + b.entries_[k]);
            return MatrixSymbol(a.rows_, a.cols_, std::max(a.degree_, b.degree_), std::move(entries));
        }
        MatrixSymbol sa = a, sb = b;
        return MatrixSymbol(a.rows_, a.cols_, std::max(a.degree_, b.degree_),
                            [sa, sb](const EvalPoint& p) { return sa.eval(p) + sb.eval(p); });
    }

    friend MatrixSymbol operator*(const MatrixSymbol& a, const MatrixSymbol& b) {
        if (a.cols_ != b.rows_) throw ShapeError("symbol product shape mismatch");
        MatrixSymbol sa = a, sb = b;
        return MatrixSymbol(a.rows_, b.cols_, a.degree_ + b.degree_,
                            [sa, sb](const EvalPoint& p) { return sa.eval(p) * sb.eval(p); });
    }

    MatrixSymbol scaled(Complex c) const {
        MatrixSymbol s = *this;
        return MatrixSymbol(rows_, cols_, degree_,
                            [s, c](const EvalPoint& p) { return Matrix(c * s.eval(p)); });
    }

    static MatrixSymbol block_diag(const MatrixSymbol& a, const MatrixSymbol& b) {
        MatrixSymbol sa = a, sb = b;
        int rows = a.rows_ + b.rows_, cols = a.cols_ + b.cols_;
        return MatrixSymbol(rows, cols, std::max(a.degree_, b.degree_),
                            [sa, sb, rows, cols](const EvalPoint& p) {
                                Matrix m = Matrix::Zero(rows, cols);
                                m.topLeftCorner(sa.rows(), sa.cols()) = sa.eval(p);
                                m.bottomRightCorner(sb.rows(), sb.cols()) = sb.eval(p);
                                return m;
                            });
    }

    /// Horizontal concatenation [a b] (used for jet-row assembly).
    static MatrixSymbol hcat(const MatrixSymbol& a, const MatrixSymbol& b) {
        if (a.rows_ != b.rows_) throw ShapeError("hcat row mismatch");
        MatrixSymbol sa = a, sb = b;
        int cols = a.cols_ + b.cols_;
        return MatrixSymbol(a.rows_, cols, std::max(a.degree_, b.degree_),
                            [sa, sb, cols](const EvalPoint& p) {
                                Matrix m(sa.rows(), cols);
                                m.leftCols(sa.cols()) = sa.eval(p);
                                m.rightCols(sb.cols()) = sb.eval(p);
                                return m;
                            });
    }

  private:
    int rows_ = 0, cols_ = 0, degree_ = 0;
    std::vector<Expr> entries_;
    EvalFn fn_;
    bool alpha_wrapped_ = false;
    EvalFn alpha_inner_;
};

/// eval_symbol operation from the module contract.
inline Matrix eval_symbol(const MatrixSymbol& sym, const EvalPoint& p) { return sym.eval(p); }

inline MatrixSymbol alpha_pullback(const MatrixSymbol& sym) { return sym.alpha(); }

}  // namespace bvp

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "trajkit/errors.hpp"

// A minimal reverse-mode autodiff kernel over dense double matrices: the
// forward/backward rules the sequence model needs, plus a finite-difference
// gradient checker. The tape is rebuilt per forward pass (define-by-run) and
// is single-owner; independent tapes may run concurrently.

namespace trajkit {

// ---------------------------------------------------------------------------
// Matrix

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    static Matrix zeros(int r, int c) { return Matrix(r, c); }

    static Matrix filled(int r, int c, double v) {
        Matrix m(r, c);
        std::fill(m.data.begin(), m.data.end(), v);
        return m;
    }

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows_init) {
        Matrix m(static_cast<int>(rows_init.size()),
                 rows_init.size() ? static_cast<int>(rows_init.begin()->size()) : 0);
        int r = 0;
        for (const auto& row : rows_init) {
            int c = 0;
            for (double v : row) m(r, c++) = v;
            ++r;
        }
        return m;
    }

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline Matrix matmul_values(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<std::size_t>(k) * b.cols];
            double* crow = &c.data[static_cast<std::size_t>(i) * c.cols];
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose_values(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// mt19937_64 output is pinned by the standard; the gaussian/shuffle
// transformations are hand-rolled here because the std distributions are
// implementation-defined and would break bitwise reproducibility.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double sd) { return mean + sd * gaussian(); }

    std::uint64_t below(std::uint64_t n) {
        // modulo rejection keeps the draw unbiased
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// Tape

class Tape {
public:
    using Id = int;

    // Leaf owning a copy of the value.
    Id input(Matrix value) {
        Node n;
        n.owned = std::move(value);
        nodes_.push_back(std::move(n));
        Node& stored = nodes_.back();
        stored.val = &stored.owned;
        return static_cast<Id>(nodes_.size()) - 1;
    }

    // Leaf referencing external storage (parameters). The pointee must
    // outlive the tape and stay unmodified until backward() is done.
    Id input_ref(const Matrix* value) {
        Node n;
        n.val = value;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size()) - 1;
    }

    const Matrix& value(Id id) const { return *nodes_[static_cast<std::size_t>(id)].val; }
    const Matrix& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // ----- ops ------------------------------------------------------------

    Id matmul(Id a, Id b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        Id out = push(matmul_values(A, B));
        nodes_.back().back = [this, a, b, out] {
            const Matrix& d = grad_of(out);
            accumulate(a, matmul_values(d, transpose_values(value(b))));
            accumulate(b, matmul_values(transpose_values(value(a)), d));
        };
        return out;
    }

    Id transpose(Id a) {
        Id out = push(transpose_values(value(a)));
        nodes_.back().back = [this, a, out] { accumulate(a, transpose_values(grad_of(out))); };
        return out;
    }

    Id add(Id a, Id b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("add: shapes differ");
        Matrix c = A;
        for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += B.data[i];
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, b, out] {
            accumulate(a, grad_of(out));
            accumulate(b, grad_of(out));
        };
        return out;
    }

    // X (n x d) plus a (1 x d) row broadcast over every row; the bias add.
    Id add_row(Id a, Id row) {
        const Matrix& A = value(a);
        const Matrix& R = value(row);
        if (R.rows != 1 || R.cols != A.cols) throw ShapeError("add_row: need 1 x cols row vector");
        Matrix c = A;
        for (int i = 0; i < c.rows; ++i)
            for (int j = 0; j < c.cols; ++j) c(i, j) += R(0, j);
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, row, out] {
            const Matrix& d = grad_of(out);
            accumulate(a, d);
            Matrix dr(1, d.cols);
            for (int i = 0; i < d.rows; ++i)
                for (int j = 0; j < d.cols; ++j) dr(0, j) += d(i, j);
            accumulate(row, std::move(dr));
        };
        return out;
    }

    Id scale(Id a, double s) {
        Matrix c = value(a);
        for (double& v : c.data) v *= s;
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, s, out] {
            Matrix d = grad_of(out);
            for (double& v : d.data) v *= s;
            accumulate(a, std::move(d));
        };
        return out;
    }

    Id relu(Id a) {
        Matrix c = value(a);
        for (double& v : c.data) v = v > 0.0 ? v : 0.0;
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, out] {
            const Matrix& A = value(a);
            Matrix d = grad_of(out);
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (A.data[i] <= 0.0) d.data[i] = 0.0;
            }
            accumulate(a, std::move(d));
        };
        return out;
    }

    // Row-wise softmax with max subtraction.
    Id softmax_rows(Id a) {
        const Matrix& A = value(a);
        Matrix c(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < A.cols; ++j) mx = std::max(mx, A(i, j));
            double sum = 0.0;
            for (int j = 0; j < A.cols; ++j) {
                c(i, j) = std::exp(A(i, j) - mx);
                sum += c(i, j);
            }
            for (int j = 0; j < A.cols; ++j) c(i, j) /= sum;
        }
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, out] {
            const Matrix& S = value(out);
            const Matrix& d = grad_of(out);
            Matrix da(S.rows, S.cols);
            for (int i = 0; i < S.rows; ++i) {
                double dot = 0.0;
                for (int j = 0; j < S.cols; ++j) dot += d(i, j) * S(i, j);
                for (int j = 0; j < S.cols; ++j) da(i, j) = S(i, j) * (d(i, j) - dot);
            }
            accumulate(a, std::move(da));
        };
        return out;
    }

    // Per-row layer normalization with learned gain/bias (1 x cols each).
    Id layer_norm_rows(Id a, Id gamma, Id beta, double eps = 1e-5) {
        if (!(eps > 0.0)) throw ShapeError("layer_norm: eps must be positive");
        const Matrix& A = value(a);
        const Matrix& G = value(gamma);
        const Matrix& B = value(beta);
        if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols) {
            throw ShapeError("layer_norm: gain/bias must be 1 x cols");
        }
        const int n = A.cols;
        Matrix xhat(A.rows, n);
        Matrix inv_sd(A.rows, 1);
        Matrix c(A.rows, n);
        for (int i = 0; i < A.rows; ++i) {
            double mean = 0.0;
            for (int j = 0; j < n; ++j) mean += A(i, j);
            mean /= n;
            double var = 0.0;
            for (int j = 0; j < n; ++j) {
                const double d = A(i, j) - mean;
                var += d * d;
            }
            var /= n;
            const double isd = 1.0 / std::sqrt(var + eps);
            inv_sd(i, 0) = isd;
            for (int j = 0; j < n; ++j) {
                xhat(i, j) = (A(i, j) - mean) * isd;
                c(i, j) = G(0, j) * xhat(i, j) + B(0, j);
            }
        }
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, gamma, beta, out, xhat = std::move(xhat), inv_sd = std::move(inv_sd)] {
            const Matrix& G = value(gamma);
            const Matrix& d = grad_of(out);
            const int n = d.cols;
            Matrix da(d.rows, n);
            Matrix dg(1, n);
            Matrix db(1, n);
            for (int i = 0; i < d.rows; ++i) {
                double sum_dxhat = 0.0;
                double sum_dxhat_xhat = 0.0;
                for (int j = 0; j < n; ++j) {
                    dg(0, j) += d(i, j) * xhat(i, j);
                    db(0, j) += d(i, j);
                    const double dxh = d(i, j) * G(0, j);
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xhat(i, j);
                }
                const double isd = inv_sd(i, 0);
                for (int j = 0; j < n; ++j) {
                    const double dxh = d(i, j) * G(0, j);
                    da(i, j) = isd * (dxh - sum_dxhat / n - xhat(i, j) * sum_dxhat_xhat / n);
                }
            }
            accumulate(a, std::move(da));
            accumulate(gamma, std::move(dg));
            accumulate(beta, std::move(db));
        };
        return out;
    }

    Id concat_cols(Id a, Id b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.rows != B.rows) throw ShapeError("concat_cols: row counts differ");
        Matrix c(A.rows, A.cols + B.cols);
        for (int i = 0; i < A.rows; ++i) {
            for (int j = 0; j < A.cols; ++j) c(i, j) = A(i, j);
            for (int j = 0; j < B.cols; ++j) c(i, A.cols + j) = B(i, j);
        }
        Id out = push(std::move(c));
        const int a_cols = A.cols;
        const int b_cols = B.cols;
        nodes_.back().back = [this, a, b, out, a_cols, b_cols] {
            const Matrix& d = grad_of(out);
            Matrix da(d.rows, a_cols);
            Matrix db(d.rows, b_cols);
            for (int i = 0; i < d.rows; ++i) {
                for (int j = 0; j < a_cols; ++j) da(i, j) = d(i, j);
                for (int j = 0; j < b_cols; ++j) db(i, j) = d(i, a_cols + j);
            }
            accumulate(a, std::move(da));
            accumulate(b, std::move(db));
        };
        return out;
    }

    Id select_cols(Id a, int begin, int count) {
        const Matrix& A = value(a);
        if (begin < 0 || count < 0 || begin + count > A.cols) throw ShapeError("select_cols: slice out of range");
        Matrix c(A.rows, count);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < count; ++j) c(i, j) = A(i, begin + j);
        Id out = push(std::move(c));
        const int a_cols = A.cols;
        nodes_.back().back = [this, a, out, begin, count, a_cols] {
            const Matrix& d = grad_of(out);
            Matrix da(d.rows, a_cols);
            for (int i = 0; i < d.rows; ++i)
                for (int j = 0; j < count; ++j) da(i, begin + j) = d(i, j);
            accumulate(a, std::move(da));
        };
        return out;
    }

    Id select_rows(Id a, int begin, int count) {
        const Matrix& A = value(a);
        if (begin < 0 || count < 0 || begin + count > A.rows) throw ShapeError("select_rows: slice out of range");
        Matrix c(count, A.cols);
        for (int i = 0; i < count; ++i)
            for (int j = 0; j < A.cols; ++j) c(i, j) = A(begin + i, j);
        Id out = push(std::move(c));
        const int a_rows = A.rows;
        nodes_.back().back = [this, a, out, begin, count, a_rows] {
            const Matrix& d = grad_of(out);
            Matrix da(a_rows, d.cols);
            for (int i = 0; i < count; ++i)
                for (int j = 0; j < d.cols; ++j) da(begin + i, j) = d(i, j);
            accumulate(a, std::move(da));
        };
        return out;
    }

    // Adds a constant matrix (positional encodings, attention masks).
    Id add_const(Id a, const Matrix& m) {
        const Matrix& A = value(a);
        if (!A.same_shape(m)) throw ShapeError("add_const: shapes differ");
        Matrix c = A;
        for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += m.data[i];
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, out] { accumulate(a, grad_of(out)); };
        return out;
    }

    // Inverted dropout with a mask drawn from `rng`; identity when rate == 0.
    Id dropout(Id a, double rate, Rng& rng) {
        if (rate == 0.0) return a;
        if (!(rate > 0.0 && rate < 1.0)) throw ShapeError("dropout: rate must be in [0,1)");
        const Matrix& A = value(a);
        Matrix mask(A.rows, A.cols);
        const double keep = 1.0 - rate;
        for (double& v : mask.data) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
        Matrix c = A;
        for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= mask.data[i];
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, out, mask = std::move(mask)] {
            Matrix d = grad_of(out);
            for (std::size_t i = 0; i < d.size(); ++i) d.data[i] *= mask.data[i];
            accumulate(a, std::move(d));
        };
        return out;
    }

    // Scalar mean over all entries of (a - target)^2.
    Id mean_sq_diff(Id a, const Matrix& target) {
        const Matrix& A = value(a);
        if (!A.same_shape(target)) throw ShapeError("mean_sq_diff: shapes differ");
        const double n = static_cast<double>(A.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < A.size(); ++i) {
            const double d = A.data[i] - target.data[i];
            sum += d * d;
        }
        Matrix c(1, 1);
        c(0, 0) = sum / n;
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, out, target] {
            const Matrix& A = value(a);
            const double g = grad_of(out)(0, 0);
            const double n = static_cast<double>(A.size());
            Matrix da(A.rows, A.cols);
            for (std::size_t i = 0; i < A.size(); ++i) {
                da.data[i] = g * 2.0 * (A.data[i] - target.data[i]) / n;
            }
            accumulate(a, std::move(da));
        };
        return out;
    }

    Id sum(Id a) {
        const Matrix& A = value(a);
        double s = 0.0;
        for (double v : A.data) s += v;
        Matrix c(1, 1);
        c(0, 0) = s;
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, out] {
            const Matrix& A = value(a);
            accumulate(a, Matrix::filled(A.rows, A.cols, grad_of(out)(0, 0)));
        };
        return out;
    }

    Id mul_elem(Id a, Id b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (!A.same_shape(B)) throw ShapeError("mul_elem: shapes differ");
        Matrix c = A;
        for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= B.data[i];
        Id out = push(std::move(c));
        nodes_.back().back = [this, a, b, out] {
            const Matrix& d = grad_of(out);
            Matrix da = d;
            Matrix db = d;
            const Matrix& A = value(a);
            const Matrix& B = value(b);
            for (std::size_t i = 0; i < d.size(); ++i) {
                da.data[i] *= B.data[i];
                db.data[i] *= A.data[i];
            }
            accumulate(a, std::move(da));
            accumulate(b, std::move(db));
        };
        return out;
    }

    // ----- backward --------------------------------------------------------

    // Seeds the scalar root with gradient 1 and sweeps the tape once in
    // reverse creation order (a reverse topological order by construction).
    void backward(Id root) {
        const Matrix& r = value(root);
        if (r.rows != 1 || r.cols != 1) throw ShapeError("backward: root must be a 1x1 scalar");
        for (Node& n : nodes_) n.grad = Matrix(n.val->rows, n.val->cols);
        nodes_[static_cast<std::size_t>(root)].grad(0, 0) = 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (nodes_[i].back) nodes_[i].back();
        }
    }

private:
    struct Node {
        Matrix owned;
        const Matrix* val = nullptr;
        Matrix grad;
        std::function<void()> back;
    };

    Id push(Matrix value) {
        Node n;
        n.owned = std::move(value);
        nodes_.push_back(std::move(n));
        Node& stored = nodes_.back();
        stored.val = &stored.owned;
        return static_cast<Id>(nodes_.size()) - 1;
    }

    const Matrix& grad_of(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    void accumulate(Id id, Matrix contribution) {
        Matrix& g = nodes_[static_cast<std::size_t>(id)].grad;
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += contribution.data[i];
    }

    // deque keeps node addresses stable so `val` can point into `owned`.
    std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

struct GradCheckResult {
    int n_checked = 0;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    bool pass = true;
};

// f(params, grads): evaluates the scalar objective at the current parameter
// values; when grads != nullptr it must also fill one gradient matrix per
// parameter (same order). The checker compares those analytic gradients
// against central differences at up to n_samples randomly chosen entries.
using GradCheckFn = std::function<double(const std::vector<Matrix*>&, std::vector<Matrix>*)>;

inline GradCheckResult grad_check(const GradCheckFn& f, const std::vector<Matrix*>& params,
                                  double eps, double tol, int n_samples, std::uint64_t seed,
                                  double zero_floor = 1e-6) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("grad_check: eps out of [1e-7, 1e-3]");
    std::vector<Matrix> analytic;
    f(params, &analytic);

    // flat index space over all parameter entries
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p]->size(); ++i) entries.emplace_back(p, i);

    Rng rng(seed);
    rng.shuffle(entries);
    const std::size_t n = std::min<std::size_t>(entries.size(), static_cast<std::size_t>(n_samples));

    GradCheckResult res;
    for (std::size_t k = 0; k < n; ++k) {
        auto [p, i] = entries[k];
        double& slot = params[p]->data[i];
        const double saved = slot;
        slot = saved + eps;
        const double up = f(params, nullptr);
        slot = saved - eps;
        const double down = f(params, nullptr);
        slot = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic[p].data[i];
        const double denom = std::max(std::abs(a), std::abs(numeric));
        const double abs_err = std::abs(a - numeric);
        res.max_abs_err = std::max(res.max_abs_err, abs_err);
        if (denom < zero_floor) {
            // near-zero gradient: relative error is meaningless, fall back
            // to an absolute threshold
            if (abs_err > tol) res.pass = false;
        } else {
            const double rel = abs_err / denom;
            res.max_rel_err = std::max(res.max_rel_err, rel);
            if (rel > tol) res.pass = false;
        }
        ++res.n_checked;
    }
    return res;
}

} // namespace trajkit

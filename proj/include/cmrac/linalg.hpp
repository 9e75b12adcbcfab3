#pragma once

// =============================================================================
// cmrac/linalg.hpp - small dense real matrix/vector kernel
// =============================================================================
// Sized for low-order control problems (n <= 10 or so everywhere it is used):
// Lyapunov solve, symmetric eigenvalue bounds, determinant, linear solve.
// Row-major storage, value semantics, no external dependencies.
// =============================================================================

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cmrac {

// Centralized numeric tolerances. Values are referenced by the contract of
// the operation that uses them; change with care.
namespace tol {
inline constexpr double pivot_min          = 1e-12;  // elimination pivot gate
inline constexpr double lyapunov_residual  = 1e-9;   // max-norm of A_r^T P + P A_r + Q
inline constexpr double symmetry           = 1e-10;  // input gate for sym_eig_bounds
inline constexpr double jacobi_offdiag     = 1e-12;  // Jacobi sweep stop criterion
inline constexpr double matching_residual  = 1e-8;   // matching-condition residual gate
inline constexpr double effectiveness_min  = 1e-9;   // rank-1 de-factoring gate
inline constexpr double eta_unit           = 1e-6;   // |det(Phi_m) - 1| gate before clamping
}  // namespace tol

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct Singular : Error {
    explicit Singular(const std::string& msg) : Error(msg) {}
};

struct NotHurwitz : Error {
    explicit NotHurwitz(const std::string& msg) : Error(msg) {}
};

struct NotSymmetric : Error {
    explicit NotSymmetric(const std::string& msg) : Error(msg) {}
};

// =============================================================================
// Vec
// =============================================================================

class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t len, double fill = 0.0) : d_(len, fill) {}
    Vec(std::initializer_list<double> init) : d_(init) {}

    [[nodiscard]] std::size_t size() const noexcept { return d_.size(); }
    [[nodiscard]] bool empty() const noexcept { return d_.empty(); }

    double& operator[](std::size_t i) { return d_[i]; }
    double operator[](std::size_t i) const { return d_[i]; }

    [[nodiscard]] const std::vector<double>& data() const noexcept { return d_; }
    [[nodiscard]] std::vector<double>& data() noexcept { return d_; }

    Vec& operator+=(const Vec& o) {
        for (std::size_t i = 0; i < d_.size(); ++i) d_[i] += o.d_[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (std::size_t i = 0; i < d_.size(); ++i) d_[i] -= o.d_[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (double& v : d_) v *= s;
        return *this;
    }

    friend Vec operator+(Vec a, const Vec& b) { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
    friend Vec operator*(Vec a, double s) { return a *= s; }
    friend Vec operator*(double s, Vec a) { return a *= s; }
    friend Vec operator-(Vec a) {
        for (double& v : a.d_) v = -v;
        return a;
    }
    friend bool operator==(const Vec& a, const Vec& b) { return a.d_ == b.d_; }

private:
    std::vector<double> d_;
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(const Vec& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

inline bool all_finite(const Vec& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

// =============================================================================
// Mat
// =============================================================================

class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), d_(rows * cols, fill) {}

    // Row-major entry list.
    Mat(std::size_t rows, std::size_t cols, std::initializer_list<double> entries)
        : rows_(rows), cols_(cols), d_(entries) {
        if (d_.size() != rows * cols)
            throw std::invalid_argument("Mat: entry count does not match rows*cols");
    }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }

    [[nodiscard]] const std::vector<double>& data() const noexcept { return d_; }

    [[nodiscard]] Vec col(std::size_t c) const {
        Vec v(rows_);
        for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
        return v;
    }
    void set_col(std::size_t c, const Vec& v) {
        for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
    }

    Mat& operator+=(const Mat& o) {
        for (std::size_t i = 0; i < d_.size(); ++i) d_[i] += o.d_[i];
        return *this;
    }
    Mat& operator-=(const Mat& o) {
        for (std::size_t i = 0; i < d_.size(); ++i) d_[i] -= o.d_[i];
        return *this;
    }
    Mat& operator*=(double s) {
        for (double& v : d_) v *= s;
        return *this;
    }

    friend Mat operator+(Mat a, const Mat& b) { return a += b; }
    friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
    friend Mat operator*(Mat a, double s) { return a *= s; }
    friend Mat operator*(double s, Mat a) { return a *= s; }
    friend bool operator==(const Mat& a, const Mat& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.d_ == b.d_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> d_;  // row-major
};

inline Mat operator*(const Mat& a, const Mat& b) {
    Mat c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline Vec operator*(const Mat& a, const Vec& x) {
    Vec y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

inline Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

// x y^T
inline Mat outer(const Vec& x, const Vec& y) {
    Mat m(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) m(i, j) = x[i] * y[j];
    return m;
}

// y = M^T x without forming the transpose
inline Vec transpose_times(const Mat& m, const Vec& x) {
    Vec y(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += m(i, j) * x[i];
    return y;
}

inline double norm_inf(const Mat& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
    return m;
}

inline bool all_finite(const Mat& a) {
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (!std::isfinite(a(i, j))) return false;
    return true;
}

// =============================================================================
// linsolve - Gaussian elimination with partial pivoting
// =============================================================================

inline Vec linsolve(Mat m, Vec rhs) {
    if (m.rows() != m.cols() || m.rows() != rhs.size())
        throw std::invalid_argument("linsolve: dimension mismatch");
    const std::size_t n = m.rows();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
        if (std::abs(m(piv, k)) < tol::pivot_min)
            throw Singular("linsolve: pivot below " + std::to_string(tol::pivot_min));
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(rhs[k], rhs[piv]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            const double factor = m(r, k) / m(k, k);
            if (factor == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) m(r, j) -= factor * m(k, j);
            rhs[r] -= factor * rhs[k];
        }
    }
    Vec x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= m(i, j) * x[j];
        x[i] = s / m(i, i);
    }
    return x;
}

// =============================================================================
// det - LU with partial pivoting, exact sign handling of row swaps
// =============================================================================

inline double det(Mat m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("det: matrix not square");
    const std::size_t n = m.rows();
    double sign = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
        if (m(piv, k) == 0.0) return 0.0;
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            sign = -sign;
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            const double factor = m(r, k) / m(k, k);
            if (factor == 0.0) continue;
            for (std::size_t j = k; j < n; ++j) m(r, j) -= factor * m(k, j);
        }
    }
    double d = sign;
    for (std::size_t k = 0; k < n; ++k) d *= m(k, k);
    return d;
}

// =============================================================================
// sym_eig_bounds - extreme eigenvalues of a symmetric matrix (cyclic Jacobi)
// =============================================================================

struct EigBounds {
    double lambda_min;
    double lambda_max;
};

inline EigBounds sym_eig_bounds(Mat m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("sym_eig_bounds: matrix not square");
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(m(i, j) - m(j, i)) > tol::symmetry)
                throw NotSymmetric("sym_eig_bounds: asymmetry exceeds tolerance");

    // Cyclic Jacobi sweeps until the off-diagonal max-norm is negligible.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off = std::max(off, std::abs(m(i, j)));
        if (off < tol::jacobi_offdiag) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (std::abs(apq) < tol::jacobi_offdiag) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p);
                    const double mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k);
                    const double mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }

    double lo = m(0, 0);
    double hi = m(0, 0);
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, m(i, i));
        hi = std::max(hi, m(i, i));
    }
    return {lo, hi};
}

// =============================================================================
// solve_lyapunov - A_r^T P + P A_r + Q = 0 by Kronecker vectorization
// =============================================================================
// n <= 10 in every target use, so the O(n^6) dense solve is fine and keeps the
// kernel dependency-free.

inline Mat solve_lyapunov(const Mat& a_r, const Mat& q) {
    if (a_r.rows() != a_r.cols()) throw std::invalid_argument("solve_lyapunov: A_r not square");
    if (q.rows() != q.cols() || q.rows() != a_r.rows())
        throw std::invalid_argument("solve_lyapunov: Q dimension mismatch");
    const std::size_t n = a_r.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(q(i, j) - q(j, i)) > tol::symmetry)
                throw std::invalid_argument("solve_lyapunov: Q not symmetric");

    // Unknowns u = vec(P) row-major: u[k*n + l] = P(k, l).
    // Equation (i, j): sum_k A_r(k,i) P(k,j) + sum_l A_r(l,j) P(i,l) = -Q(i,j).
    Mat k_mat(n * n, n * n);
    Vec rhs(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t e = i * n + j;
            for (std::size_t k = 0; k < n; ++k) k_mat(e, k * n + j) += a_r(k, i);
            for (std::size_t l = 0; l < n; ++l) k_mat(e, i * n + l) += a_r(l, j);
            rhs[e] = -q(i, j);
        }
    }

    Vec u;
    try {
        u = linsolve(std::move(k_mat), std::move(rhs));
    } catch (const Singular&) {
        throw NotHurwitz("solve_lyapunov: Lyapunov operator singular (A_r has eigenvalues "
                         "with nonnegative real part)");
    }

    Mat p(n, n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) p(k, l) = u[k * n + l];
    // The exact solution is symmetric; strip elimination roundoff.
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = k + 1; l < n; ++l) {
            const double avg = 0.5 * (p(k, l) + p(l, k));
            p(k, l) = avg;
            p(l, k) = avg;
        }

    const Mat residual = transpose(a_r) * p + p * a_r + q;
    if (norm_inf(residual) > tol::lyapunov_residual)
        throw NotHurwitz("solve_lyapunov: residual exceeds tolerance");
    if (sym_eig_bounds(p).lambda_min <= 0.0)
        throw NotHurwitz("solve_lyapunov: computed P is not positive definite");
    return p;
}

}  // namespace cmrac

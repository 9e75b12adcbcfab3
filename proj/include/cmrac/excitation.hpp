#pragma once

// =============================================================================
// cmrac/excitation.hpp - filtered regressor memory under finite excitation
// =============================================================================
// The plant in linear-in-parameter form reads x' = W^T phi_stacked. Both sides
// are passed through the stable filter f/(s+f); whenever the filtered
// regressor carries a direction not yet represented in the memory, a modified
// Gram-Schmidt step appends an orthonormal column to Phi_b together with the
// matching column of Y_b, preserving Y_b = W^T Phi_b. Once q independent
// columns are stored, Phi_m = Phi_b Phi_b^T = I and Y_m = Y_b Phi_b^T recovers
// W^T, from which the plant parameters are read off directly.
// =============================================================================

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cmrac/linalg.hpp"

namespace cmrac {

struct DegenerateEffectiveness : Error {
    explicit DegenerateEffectiveness(const std::string& msg) : Error(msg) {}
};

// =============================================================================
// First-order filter  f/(s+f)
// =============================================================================

// state' = -f * state + f * input
inline Vec lowpass_deriv(double f, const Vec& state, const Vec& input) {
    Vec d(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) d[i] = f * (input[i] - state[i]);
    return d;
}

// Filtered x' reconstructed without differentiation:
//   y_f = f x - e^{-f (t - t0)} f x(t0) - f x_f
inline Vec filtered_state_deriv(double f, const Vec& x, const Vec& x0, double t, double t0,
                                const Vec& x_f) {
    const double decay = std::exp(-f * (t - t0)) * f;
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f * x[i] - decay * x0[i] - f * x_f[i];
    return y;
}

struct FilterState {
    double f = 1.0;   // cut-off frequency, > 0
    Vec x_f;          // filtered state, zero at t0
    Vec phi_f;        // filtered stacked regressor, zero at t0
    Vec x0;           // plant state at t0
    double t0 = 0.0;

    FilterState() = default;
    FilterState(double cutoff, std::size_t q, Vec x_at_t0, double t_start)
        : f(cutoff), x_f(x_at_t0.size()), phi_f(q), x0(std::move(x_at_t0)), t0(t_start) {
        if (f <= 0.0) throw std::invalid_argument("FilterState: f must be positive");
    }
};

inline std::pair<Vec, Vec> filter_derivs(const FilterState& fs, const Vec& x, const Vec& phi) {
    return {lowpass_deriv(fs.f, fs.x_f, x), lowpass_deriv(fs.f, fs.phi_f, phi)};
}

inline Vec filtered_output(const FilterState& fs, const Vec& x, double t) {
    return filtered_state_deriv(fs.f, x, fs.x0, t, fs.t0, fs.x_f);
}

// =============================================================================
// MemoryBuilder - streaming modified Gram-Schmidt memory
// =============================================================================

enum class InsertOutcome {
    accepted,
    rejected_low_norm,   // ||phi_f|| <= eps1
    rejected_dependent,  // MGS residual ||v|| <= ||phi_f|| * eps2
    already_complete,
};

struct MemoryOutput {
    Mat phi_m;   // q x q; zero until the memory completes, then Phi_b Phi_b^T
    Mat y_m;     // n x q; zero until the memory completes, then Y_b Phi_b^T
    double eta;  // det(Phi_m), clamped to exactly 1 on completion
};

class MemoryBuilder {
public:
    MemoryBuilder(std::size_t n, std::size_t q, double eps1, double eps2)
        : n_(n), q_(q), eps1_(eps1), eps2_(eps2), phi_b_(q, q), y_b_(n, q) {
        if (n == 0 || q == 0) throw std::invalid_argument("MemoryBuilder: empty dimensions");
        if (eps1 <= 0.0 || eps2 <= 0.0)
            throw std::invalid_argument("MemoryBuilder: gates must be positive");
    }

    [[nodiscard]] std::size_t q() const noexcept { return q_; }
    [[nodiscard]] std::size_t accepted() const noexcept { return count_; }
    [[nodiscard]] bool complete() const noexcept { return complete_; }
    [[nodiscard]] const Mat& phi_b() const noexcept { return phi_b_; }
    [[nodiscard]] const Mat& y_b() const noexcept { return y_b_; }

    // One streaming sample. Gates follow the two-stage test: an absolute norm
    // gate eps1 on the filtered regressor, then a relative residual gate eps2
    // after orthogonalization against the accepted columns.
    InsertOutcome try_insert(const Vec& phi_f, const Vec& y_f) {
        if (complete_) return InsertOutcome::already_complete;
        if (phi_f.size() != q_ || y_f.size() != n_)
            throw std::invalid_argument("MemoryBuilder: sample dimension mismatch");

        const double phi_norm = norm(phi_f);
        if (phi_norm <= eps1_) return InsertOutcome::rejected_low_norm;

        Vec v = phi_f;
        Vec y = y_f;
        orthogonalize(v, y);
        double v_norm = norm(v);

        // Re-orthogonalize when cancellation has eaten nearly all of v; does
        // not change accept/reject outcomes at default gate values.
        if (v_norm < 1e3 * std::numeric_limits<double>::epsilon() * phi_norm) {
            orthogonalize(v, y);
            v_norm = norm(v);
        }

        if (v_norm <= phi_norm * eps2_) return InsertOutcome::rejected_dependent;

        const double inv = 1.0 / v_norm;
        for (std::size_t r = 0; r < q_; ++r) phi_b_(r, count_) = v[r] * inv;
        for (std::size_t r = 0; r < n_; ++r) y_b_(r, count_) = y[r] * inv;
        ++count_;
        complete_ = (count_ == q_);
        return InsertOutcome::accepted;
    }

    // Memory snapshot. Incomplete memory yields zeros with eta = 0; a complete
    // one yields Phi_m = Phi_b Phi_b^T, Y_m = Y_b Phi_b^T and eta pinned to 1
    // after checking det(Phi_m) is within rounding of 1.
    [[nodiscard]] MemoryOutput output() const {
        if (!complete_) return {Mat(q_, q_), Mat(n_, q_), 0.0};
        const Mat phi_bt = transpose(phi_b_);
        Mat phi_m = phi_b_ * phi_bt;
        Mat y_m = y_b_ * phi_bt;
        const double raw = det(phi_m);
        if (std::abs(raw - 1.0) > tol::eta_unit)
            throw Error("MemoryBuilder: det(Phi_m) strayed from 1 beyond tolerance, "
                        "orthogonality lost");
        return {std::move(phi_m), std::move(y_m), 1.0};
    }

private:
    // Modified Gram-Schmidt pass over the accepted columns; the y recursion
    // reuses the projection coefficients of the v recursion, which preserves
    // Y_b = W^T Phi_b whenever the inserted pairs satisfy y_f = W^T phi_f.
    void orthogonalize(Vec& v, Vec& y) const {
        for (std::size_t c = 0; c < count_; ++c) {
            double coeff = 0.0;
            for (std::size_t r = 0; r < q_; ++r) coeff += phi_b_(r, c) * v[r];
            for (std::size_t r = 0; r < q_; ++r) v[r] -= coeff * phi_b_(r, c);
            for (std::size_t r = 0; r < n_; ++r) y[r] -= coeff * y_b_(r, c);
        }
    }

    std::size_t n_;
    std::size_t q_;
    double eps1_;
    double eps2_;
    std::size_t count_ = 0;
    bool complete_ = false;
    Mat phi_b_;  // q x q, first count_ columns valid and orthonormal
    Mat y_b_;    // n x q, first count_ columns valid
};

inline MemoryOutput memory_output(const MemoryBuilder& builder) { return builder.output(); }

// =============================================================================
// Parameter extraction from a completed memory
// =============================================================================

struct ExtractedParams {
    Mat a_hat;           // n x n
    Vec bkp_hat;         // n
    Mat bkp_theta_hat;   // n x p
    Vec theta_hat;       // p
};

// Y_m columns partition as [A | b k_p | b k_p theta^T]; theta is recovered by
// de-factoring the rank-1 block with the left pseudo-inverse of b k_p.
inline ExtractedParams extract_params(const Mat& y_m, std::size_t n, std::size_t p) {
    if (y_m.rows() != n || y_m.cols() != n + 1 + p)
        throw std::invalid_argument("extract_params: Y_m dimension mismatch");

    Mat a_hat(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a_hat(i, j) = y_m(i, j);

    const Vec bkp_hat = y_m.col(n);
    const double denom = dot(bkp_hat, bkp_hat);
    if (std::sqrt(denom) < tol::effectiveness_min)
        throw DegenerateEffectiveness("extract_params: effectiveness column is numerically zero");

    Mat bkp_theta_hat(n, p);
    Vec theta_hat(p);
    for (std::size_t j = 0; j < p; ++j) {
        double num = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            bkp_theta_hat(i, j) = y_m(i, n + 1 + j);
            num += bkp_hat[i] * bkp_theta_hat(i, j);
        }
        theta_hat[j] = num / denom;
    }
    return {std::move(a_hat), bkp_hat, std::move(bkp_theta_hat), std::move(theta_hat)};
}

// =============================================================================
// Excitation-level diagnostic
// =============================================================================

// gamma = ||[phi(t_1) ... phi(t_q)]^{-1}||, the spectral norm of the inverse
// of the stacked sample matrix: 1/sqrt(lambda_min(M^T M)).
inline double excitation_level(const std::vector<Vec>& samples) {
    if (samples.empty()) throw std::invalid_argument("excitation_level: no samples");
    const std::size_t q = samples[0].size();
    if (samples.size() != q)
        throw std::invalid_argument("excitation_level: need exactly q samples of dimension q");

    Mat m(q, q);
    for (std::size_t j = 0; j < q; ++j) {
        if (samples[j].size() != q)
            throw std::invalid_argument("excitation_level: sample dimension mismatch");
        m.set_col(j, samples[j]);
    }
    const Mat gram = transpose(m) * m;
    const EigBounds eig = sym_eig_bounds(gram);
    if (eig.lambda_min <= tol::pivot_min * std::max(1.0, eig.lambda_max))
        throw Singular("excitation_level: stacked sample matrix is rank-deficient");
    return 1.0 / std::sqrt(eig.lambda_min);
}

}  // namespace cmrac

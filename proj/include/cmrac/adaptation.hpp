#pragma once

// =============================================================================
// cmrac/adaptation.hpp - gradient and combined adaptation laws
// =============================================================================
// The gradient law drives the gain estimates from the tracking error alone.
// The combined law adds a memory term built from the extracted plant
// parameters; the determinant eta of the memory Gram matrix acts as a 0/1
// switch, so before the memory completes the combined law reduces to the
// gradient law bit for bit.
// =============================================================================

#include <cstddef>

#include "cmrac/linalg.hpp"
#include "cmrac/plant.hpp"

namespace cmrac {

// Gain-mismatch terms computed from the memory snapshot Y_m and the current
// estimates. With Y_m = W^T and the matching condition these collapse to
//   E1 = -b k_p k~_x^T,  E2 = -b k_p k~_r,  E3 = -b k_p theta~^T.
struct MismatchErrors {
    Mat e1;  // n x n
    Vec e2;  // n
    Mat e3;  // n x p
};

inline MismatchErrors mismatch_errors(const Mat& y_m, const ReferenceModel& ref,
                                      const ControllerGains& gains) {
    const std::size_t n = y_m.rows();
    const std::size_t p = gains.theta_hat.size();

    const Vec bkp_hat = y_m.col(n);

    Mat e1 = ref.A_r();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            e1(i, j) -= y_m(i, j) + bkp_hat[i] * gains.k_x_hat[j];

    Vec e2 = ref.b_r();
    for (std::size_t i = 0; i < n; ++i) e2[i] -= bkp_hat[i] * gains.k_r_hat;

    Mat e3(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j)
            e3(i, j) = y_m(i, n + 1 + j) - bkp_hat[i] * gains.theta_hat[j];

    return {std::move(e1), std::move(e2), std::move(e3)};
}

struct GainsDeriv {
    Vec k_x_dot;
    double k_r_dot = 0.0;
    Vec theta_dot;
};

// Transient bundle of everything the laws read; holds references only.
struct AdaptationInputs {
    const Vec& e;
    const Vec& x;
    double r;
    const Vec& phi;
    const Mat& P;
    const Vec& b;
    double sign_kp;
    double eta;
    const Mat& e1;
    const Vec& e2;
    const Mat& e3;
    double gain = 1.0;  // scalar multiplier, unity by default
};

// k_x_hat' = -x e^T P b k_p', k_r_hat' = -r e^T P b k_p', theta_hat' = phi e^T P b k_p'
inline GainsDeriv gradient_law(const AdaptationInputs& inp) {
    const double s = inp.gain * dot(inp.e, inp.P * inp.b) * inp.sign_kp;
    GainsDeriv d;
    d.k_x_dot = inp.x * (-s);
    d.k_r_dot = -inp.r * s;
    d.theta_dot = inp.phi * s;
    return d;
}

// Gradient law plus eta-gated memory terms E_i^T b k_p'. When eta is zero the
// memory terms are skipped entirely so the output matches gradient_law exactly.
inline GainsDeriv combined_law(const AdaptationInputs& inp) {
    GainsDeriv d = gradient_law(inp);
    if (inp.eta == 0.0) return d;

    const double scale = inp.gain * inp.eta * inp.sign_kp;
    const Vec e1tb = transpose_times(inp.e1, inp.b);
    for (std::size_t j = 0; j < d.k_x_dot.size(); ++j) d.k_x_dot[j] += scale * e1tb[j];
    d.k_r_dot += scale * dot(inp.e2, inp.b);
    const Vec e3tb = transpose_times(inp.e3, inp.b);
    for (std::size_t j = 0; j < d.theta_dot.size(); ++j) d.theta_dot[j] += scale * e3tb[j];
    return d;
}

}  // namespace cmrac

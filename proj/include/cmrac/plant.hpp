#pragma once

// =============================================================================
// cmrac/plant.hpp - uncertain plant, reference model, control law, matching
// =============================================================================
// Single-input plant  x' = A x + b k_p (u + theta^T phi(x))  with known b and
// known sign of the effectiveness k_p, tracked against a Hurwitz reference
// x_r' = A_r x_r + b_r r.  Basis functions are data (monomial descriptors plus
// a named-builtin registry) so a config file can define the uncertainty
// without recompilation.
// =============================================================================

#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cmrac/linalg.hpp"

namespace cmrac {

struct NonFinite : Error {
    explicit NonFinite(const std::string& msg) : Error(msg) {}
};

struct Unmatchable : Error {
    explicit Unmatchable(const std::string& msg) : Error(msg) {}
};

// =============================================================================
// Basis functions
// =============================================================================

inline const std::map<std::string, double (*)(double)>& builtin_basis_registry() {
    static const std::map<std::string, double (*)(double)> registry = {
        {"sin", [](double v) { return std::sin(v); }},
        {"cos", [](double v) { return std::cos(v); }},
        {"tanh", [](double v) { return std::tanh(v); }},
        {"abs", [](double v) { return std::abs(v); }},
        {"exp", [](double v) { return std::exp(v); }},
    };
    return registry;
}

struct BasisDescriptor {
    enum class Kind { monomial, builtin };

    Kind kind = Kind::monomial;
    std::vector<int> exponents;  // monomial: one exponent per state component
    std::string name;            // builtin: registry key
    std::size_t arg = 0;         // builtin: state component it applies to

    static BasisDescriptor monomial(std::vector<int> exps) {
        BasisDescriptor d;
        d.kind = Kind::monomial;
        d.exponents = std::move(exps);
        return d;
    }

    static BasisDescriptor builtin(std::string fn, std::size_t arg_index) {
        if (builtin_basis_registry().find(fn) == builtin_basis_registry().end())
            throw std::invalid_argument("unknown builtin basis function '" + fn + "'");
        BasisDescriptor d;
        d.kind = Kind::builtin;
        d.name = std::move(fn);
        d.arg = arg_index;
        return d;
    }

    [[nodiscard]] double eval(const Vec& x) const {
        if (kind == Kind::builtin) return builtin_basis_registry().at(name)(x[arg]);
        double v = 1.0;
        for (std::size_t i = 0; i < exponents.size(); ++i) {
            for (int e = 0; e < exponents[i]; ++e) v *= x[i];
        }
        return v;
    }
};

// Parses a basis term such as "x2^2", "x1*x2", "1", or "sin(x1)".
// State indices in the text are 1-based.
inline BasisDescriptor parse_basis_descriptor(const std::string& text, std::size_t n) {
    const auto fail = [&](const std::string& why) {
        throw std::invalid_argument("basis term '" + text + "': " + why);
    };

    const auto paren = text.find('(');
    if (paren != std::string::npos) {
        if (text.back() != ')') fail("missing closing parenthesis");
        const std::string fn = text.substr(0, paren);
        const std::string inner = text.substr(paren + 1, text.size() - paren - 2);
        if (inner.size() < 2 || inner[0] != 'x') fail("builtin argument must be a state, e.g. sin(x1)");
        const std::size_t idx = std::stoul(inner.substr(1));
        if (idx < 1 || idx > n) fail("state index out of range");
        return BasisDescriptor::builtin(fn, idx - 1);
    }

    std::vector<int> exps(n, 0);
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t star = text.find('*', pos);
        const std::string factor = text.substr(pos, star == std::string::npos ? star : star - pos);
        pos = (star == std::string::npos) ? text.size() : star + 1;
        if (factor == "1") continue;
        if (factor.empty() || factor[0] != 'x') fail("expected a factor like x1 or x2^2");
        const auto caret = factor.find('^');
        const std::string idx_str = factor.substr(1, caret == std::string::npos ? caret : caret - 1);
        std::size_t idx = 0;
        int exp = 1;
        try {
            idx = std::stoul(idx_str);
            if (caret != std::string::npos) exp = std::stoi(factor.substr(caret + 1));
        } catch (const std::exception&) {
            fail("malformed factor '" + factor + "'");
        }
        if (idx < 1 || idx > n) fail("state index out of range");
        if (exp < 0) fail("negative exponent");
        exps[idx - 1] += exp;
    }
    return BasisDescriptor::monomial(std::move(exps));
}

// =============================================================================
// Domain types
// =============================================================================

class PlantModel {
public:
    PlantModel(Mat a, Vec b, double k_p, Vec theta, std::vector<BasisDescriptor> basis)
        : a_(std::move(a)),
          b_(std::move(b)),
          k_p_(k_p),
          theta_(std::move(theta)),
          basis_(std::move(basis)) {
        if (a_.rows() != a_.cols() || a_.rows() == 0)
            throw std::invalid_argument("PlantModel: A must be square and nonempty");
        if (b_.size() != a_.rows()) throw std::invalid_argument("PlantModel: b length mismatch");
        if (dot(b_, b_) <= 0.0) throw std::invalid_argument("PlantModel: b must be nonzero");
        if (k_p_ == 0.0 || !std::isfinite(k_p_))
            throw std::invalid_argument("PlantModel: k_p must be finite and nonzero");
        if (theta_.size() != basis_.size())
            throw std::invalid_argument("PlantModel: theta length must match basis count");
        if (!all_finite(a_) || !all_finite(b_) || !all_finite(theta_))
            throw std::invalid_argument("PlantModel: entries must be finite");
        sign_kp_ = (k_p_ > 0.0) ? 1.0 : -1.0;
    }

    [[nodiscard]] const Mat& A() const noexcept { return a_; }
    [[nodiscard]] const Vec& b() const noexcept { return b_; }
    [[nodiscard]] double k_p() const noexcept { return k_p_; }
    [[nodiscard]] double sign_kp() const noexcept { return sign_kp_; }
    [[nodiscard]] const Vec& theta() const noexcept { return theta_; }
    [[nodiscard]] const std::vector<BasisDescriptor>& basis() const noexcept { return basis_; }

    [[nodiscard]] std::size_t n() const noexcept { return a_.rows(); }
    [[nodiscard]] std::size_t p() const noexcept { return theta_.size(); }
    // stacked-regressor dimension [x, u, phi]
    [[nodiscard]] std::size_t q() const noexcept { return n() + 1 + p(); }

private:
    Mat a_;
    Vec b_;
    double k_p_;
    double sign_kp_;
    Vec theta_;
    std::vector<BasisDescriptor> basis_;
};

class ReferenceModel {
public:
    // Solves A_r^T P + P A_r + Q = 0 once at construction; throws NotHurwitz
    // when A_r is not Hurwitz.
    ReferenceModel(Mat a_r, Vec b_r, Mat q)
        : a_r_(std::move(a_r)), b_r_(std::move(b_r)), q_(std::move(q)), p_(solve_lyapunov(a_r_, q_)) {
        if (b_r_.size() != a_r_.rows())
            throw std::invalid_argument("ReferenceModel: b_r length mismatch");
    }

    [[nodiscard]] const Mat& A_r() const noexcept { return a_r_; }
    [[nodiscard]] const Vec& b_r() const noexcept { return b_r_; }
    [[nodiscard]] const Mat& Q() const noexcept { return q_; }
    [[nodiscard]] const Mat& P() const noexcept { return p_; }
    [[nodiscard]] std::size_t n() const noexcept { return a_r_.rows(); }

private:
    Mat a_r_;
    Vec b_r_;
    Mat q_;
    Mat p_;
};

struct ControllerGains {
    Vec k_x_hat;
    double k_r_hat = 0.0;
    Vec theta_hat;

    friend bool operator==(const ControllerGains&, const ControllerGains&) = default;
};

struct IdealGains {
    Vec k_x;
    double k_r = 0.0;
    Vec theta;
};

// =============================================================================
// Operations
// =============================================================================

inline Vec eval_phi(const PlantModel& model, const Vec& x) {
    Vec phi(model.p());
    for (std::size_t i = 0; i < model.p(); ++i) {
        phi[i] = model.basis()[i].eval(x);
        if (!std::isfinite(phi[i]))
            throw NonFinite("eval_phi: basis term " + std::to_string(i + 1) + " is not finite");
    }
    return phi;
}

// u = k_x_hat^T x + k_r_hat r - theta_hat^T phi
inline double control_input(const ControllerGains& gains, const Vec& x, double r, const Vec& phi) {
    return dot(gains.k_x_hat, x) + gains.k_r_hat * r - dot(gains.theta_hat, phi);
}

// x' = A x + b k_p (u + theta^T phi(x))
inline Vec plant_deriv(const PlantModel& model, const Vec& x, double u) {
    const Vec phi = eval_phi(model, x);
    Vec dx = model.A() * x;
    const double effect = model.k_p() * (u + dot(model.theta(), phi));
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += model.b()[i] * effect;
    return dx;
}

// x_r' = A_r x_r + b_r r
inline Vec reference_deriv(const ReferenceModel& ref, const Vec& x_r, double r) {
    Vec dx = ref.A_r() * x_r;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += ref.b_r()[i] * r;
    return dx;
}

// phi_stacked = [x^T, u, phi^T]^T
inline Vec stacked_regressor(const Vec& x, double u, const Vec& phi) {
    Vec s(x.size() + 1 + phi.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s[k++] = x[i];
    s[k++] = u;
    for (std::size_t i = 0; i < phi.size(); ++i) s[k++] = phi[i];
    return s;
}

// Ideal gains from the matching condition A + b k_p k_x^T = A_r, b k_p k_r = b_r.
// Solved by least squares against the rank-1 factor b k_p; the residual gate
// rejects mismatches outside span(b).
inline IdealGains matching_gains(const PlantModel& model, const ReferenceModel& ref) {
    if (model.n() != ref.n()) throw std::invalid_argument("matching_gains: dimension mismatch");
    const std::size_t n = model.n();
    Vec bkp(n);
    for (std::size_t i = 0; i < n; ++i) bkp[i] = model.b()[i] * model.k_p();
    const double denom = dot(bkp, bkp);

    const Mat target = ref.A_r() - model.A();
    Vec k_x(n);
    for (std::size_t j = 0; j < n; ++j) k_x[j] = dot(bkp, target.col(j)) / denom;
    const Mat residual_a = target - outer(bkp, k_x);
    if (norm_inf(residual_a) > tol::matching_residual)
        throw Unmatchable("matching_gains: A_r - A is not in the range of b k_p");

    const double k_r = dot(bkp, ref.b_r()) / denom;
    Vec residual_b = ref.b_r();
    for (std::size_t i = 0; i < n; ++i) residual_b[i] -= bkp[i] * k_r;
    if (norm_inf(residual_b) > tol::matching_residual)
        throw Unmatchable("matching_gains: b_r is not in the range of b k_p");

    return {std::move(k_x), k_r, model.theta()};
}

// Linear-in-parameter form of the plant: x' = M * [x^T, u, phi^T]^T with
// M = [A | b k_p | b k_p theta^T], the ground truth the memory recovers.
inline Mat plant_lip_matrix(const PlantModel& model) {
    const std::size_t n = model.n();
    const std::size_t p = model.p();
    Mat m(n, n + 1 + p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = model.A()(i, j);
        m(i, n) = model.b()[i] * model.k_p();
        for (std::size_t j = 0; j < p; ++j) m(i, n + 1 + j) = m(i, n) * model.theta()[j];
    }
    return m;
}

// e' = A_r e + b k_p k~_x^T x + b k_p k~_r r - b k_p theta~^T phi, with the
// estimation errors taken as (estimate - ideal). Cross-check oracle only; the
// closed loop never integrates this directly.
inline Vec tracking_error_deriv(const ReferenceModel& ref, const PlantModel& model,
                                const IdealGains& ideal, const ControllerGains& gains,
                                const Vec& e, const Vec& x, double r, const Vec& phi) {
    Vec k_x_err = gains.k_x_hat - ideal.k_x;
    const double k_r_err = gains.k_r_hat - ideal.k_r;
    Vec theta_err = gains.theta_hat - ideal.theta;

    Vec de = ref.A_r() * e;
    const double effect = model.k_p() * (dot(k_x_err, x) + k_r_err * r - dot(theta_err, phi));
    for (std::size_t i = 0; i < de.size(); ++i) de[i] += model.b()[i] * effect;
    return de;
}

}  // namespace cmrac

#pragma once

// =============================================================================
// cmrac/sim.hpp - fixed-step closed-loop simulation and metrics
// =============================================================================
// Integrates the augmented system (plant, reference, filters, gain estimates)
// with classical RK4. Memory insertion is a discrete event layered on the
// continuous dynamics: one try_insert per completed step, never per stage, so
// the ODE right-hand side stays a pure function of the current state and the
// latest memory snapshot.
// =============================================================================

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cmrac/adaptation.hpp"
#include "cmrac/excitation.hpp"
#include "cmrac/linalg.hpp"
#include "cmrac/plant.hpp"

namespace cmrac {

struct Diverged : Error {
    explicit Diverged(const std::string& msg) : Error(msg) {}
};

struct NoExcitation : Error {
    explicit NoExcitation(const std::string& msg) : Error(msg) {}
};

// =============================================================================
// Command signal
// =============================================================================

struct CommandSignal {
    enum class Kind { constant, step, sine };

    Kind kind = Kind::constant;
    double level = 0.0;     // constant: value; step: value before t_switch
    double level2 = 0.0;    // step: value from t_switch on
    double t_switch = 0.0;  // step
    double amp = 0.0;       // sine
    double omega = 0.0;     // sine, rad/s
    double offset = 0.0;    // sine

    static CommandSignal constant(double value) {
        CommandSignal c;
        c.kind = Kind::constant;
        c.level = value;
        return c;
    }
    static CommandSignal step(double before, double after, double at) {
        CommandSignal c;
        c.kind = Kind::step;
        c.level = before;
        c.level2 = after;
        c.t_switch = at;
        return c;
    }
    static CommandSignal sine(double amp, double omega, double offset) {
        CommandSignal c;
        c.kind = Kind::sine;
        c.amp = amp;
        c.omega = omega;
        c.offset = offset;
        return c;
    }

    [[nodiscard]] double operator()(double t) const {
        switch (kind) {
            case Kind::step: return t < t_switch ? level : level2;
            case Kind::sine: return offset + amp * std::sin(omega * t);
            case Kind::constant:
            default: return level;
        }
    }
};

// =============================================================================
// Configuration and state
// =============================================================================

enum class AdaptationLaw { gradient, combined };

struct SimConfig {
    double dt = 1e-3;
    double t_end = 40.0;
    double f = 1.0;       // filter cut-off frequency
    double eps1 = 1.0;    // memory norm gate
    double eps2 = 0.01;   // memory residual gate
    AdaptationLaw law = AdaptationLaw::combined;
    CommandSignal command = CommandSignal::constant(0.0);
    Vec x0;   // empty means zero
    Vec xr0;  // empty means zero
    double estimate_error_fraction = 0.0;  // gains start at (1 - fraction) * ideal
    double adaptation_gain = 1.0;
    double divergence_guard = 1e6;
    std::size_t csv_stride = 1;
};

struct AugmentedState {
    Vec x;
    Vec x_r;
    Vec x_f;
    Vec phi_f;
    ControllerGains gains;
    double t = 0.0;
};

struct AugmentedDeriv {
    Vec x;
    Vec x_r;
    Vec x_f;
    Vec phi_f;
    GainsDeriv gains;
};

// =============================================================================
// RK4
// =============================================================================

// Classical RK4 over a flat state vector. Throws NonFinite when any stage
// derivative leaves the reals (instability or an oversized step).
template <class Rhs>
Vec rk4_step(const Vec& y, Rhs&& rhs, double t, double dt) {
    const auto stage = [&](double ts, const Vec& ys) {
        Vec k = rhs(ts, ys);
        if (!all_finite(k)) throw NonFinite("rk4_step: non-finite stage derivative");
        return k;
    };
    const Vec k1 = stage(t, y);
    const Vec k2 = stage(t + 0.5 * dt, y + k1 * (0.5 * dt));
    const Vec k3 = stage(t + 0.5 * dt, y + k2 * (0.5 * dt));
    const Vec k4 = stage(t + dt, y + k3 * dt);

    Vec out = y;
    const double w = dt / 6.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

namespace detail {

inline std::size_t flat_size(const AugmentedState& s) {
    return s.x.size() + s.x_r.size() + s.x_f.size() + s.phi_f.size() + s.gains.k_x_hat.size() +
           1 + s.gains.theta_hat.size();
}

inline Vec pack(const AugmentedState& s) {
    Vec y(flat_size(s));
    std::size_t k = 0;
    const auto put = [&](const Vec& v) {
        for (std::size_t i = 0; i < v.size(); ++i) y[k++] = v[i];
    };
    put(s.x);
    put(s.x_r);
    put(s.x_f);
    put(s.phi_f);
    put(s.gains.k_x_hat);
    y[k++] = s.gains.k_r_hat;
    put(s.gains.theta_hat);
    return y;
}

inline void unpack(const Vec& y, AugmentedState& s) {
    std::size_t k = 0;
    const auto take = [&](Vec& v) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = y[k++];
    };
    take(s.x);
    take(s.x_r);
    take(s.x_f);
    take(s.phi_f);
    take(s.gains.k_x_hat);
    s.gains.k_r_hat = y[k++];
    take(s.gains.theta_hat);
}

inline Vec pack_deriv(const AugmentedDeriv& d, std::size_t size) {
    Vec y(size);
    std::size_t k = 0;
    const auto put = [&](const Vec& v) {
        for (std::size_t i = 0; i < v.size(); ++i) y[k++] = v[i];
    };
    put(d.x);
    put(d.x_r);
    put(d.x_f);
    put(d.phi_f);
    put(d.gains.k_x_dot);
    y[k++] = d.gains.k_r_dot;
    put(d.gains.theta_dot);
    return y;
}

}  // namespace detail

// RK4 update of every continuous field of the augmented state; t advances by dt.
template <class Rhs>
AugmentedState rk4_step(const AugmentedState& s, Rhs&& rhs, double dt) {
    const std::size_t size = detail::flat_size(s);
    AugmentedState scratch = s;
    const auto flat_rhs = [&](double t, const Vec& y) {
        detail::unpack(y, scratch);
        scratch.t = t;
        return detail::pack_deriv(rhs(scratch), size);
    };
    AugmentedState out = s;
    detail::unpack(rk4_step(detail::pack(s), flat_rhs, s.t, dt), out);
    out.t = s.t + dt;
    return out;
}

// =============================================================================
// Trajectory
// =============================================================================

struct TrajectorySample {
    double t = 0.0;
    Vec x;
    Vec x_r;
    double u = 0.0;
    double e_norm = 0.0;
    double kx_err_norm = 0.0;
    double kr_err = 0.0;
    double theta_err_norm = 0.0;
    double chi_norm = 0.0;
    double V = 0.0;
    double eta = 0.0;

    friend bool operator==(const TrajectorySample&, const TrajectorySample&) = default;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::optional<double> t_q;  // time of memory completion
    double dt = 0.0;
    MemoryOutput memory;  // final snapshot (zeros with eta = 0 if never completed)
};

// =============================================================================
// Metrics
// =============================================================================

// ||chi|| with chi = [e^T, k~_x^T, k~_r, theta~^T]^T
inline double combined_error_norm(const AugmentedState& s, const IdealGains& ideal) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        const double e = s.x[i] - s.x_r[i];
        acc += e * e;
    }
    for (std::size_t i = 0; i < ideal.k_x.size(); ++i) {
        const double d = s.gains.k_x_hat[i] - ideal.k_x[i];
        acc += d * d;
    }
    const double dr = s.gains.k_r_hat - ideal.k_r;
    acc += dr * dr;
    for (std::size_t i = 0; i < ideal.theta.size(); ++i) {
        const double d = s.gains.theta_hat[i] - ideal.theta[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// V = e^T P e + |k_p| (||k~_x||^2 + k~_r^2 + ||theta~||^2)
inline double lyapunov_value(const AugmentedState& s, const IdealGains& ideal, const Mat& P,
                             double k_p) {
    Vec e = s.x - s.x_r;
    double v = dot(e, P * e);
    double gain_err = 0.0;
    for (std::size_t i = 0; i < ideal.k_x.size(); ++i) {
        const double d = s.gains.k_x_hat[i] - ideal.k_x[i];
        gain_err += d * d;
    }
    const double dr = s.gains.k_r_hat - ideal.k_r;
    gain_err += dr * dr;
    for (std::size_t i = 0; i < ideal.theta.size(); ++i) {
        const double d = s.gains.theta_hat[i] - ideal.theta[i];
        gain_err += d * d;
    }
    return v + std::abs(k_p) * gain_err;
}

struct RateInfo {
    double kappa_bar;  // Lyapunov decay rate after memory completion
    double kappa;      // kappa_bar / 2, the state-norm decay rate
    double alpha;      // overshoot constant of the exponential envelope
};

// kappa_bar = min{lambda_min(Q), 2 k_p^2 b^T b} / max{lambda_max(P), |k_p|};
// alpha    = sqrt(max{lambda_max(P), |k_p|} / min{lambda_min(P), |k_p|}).
inline RateInfo theoretical_rate(const Mat& Q, const Mat& P, const Vec& b, double k_p) {
    const EigBounds q_eig = sym_eig_bounds(Q);
    const EigBounds p_eig = sym_eig_bounds(P);
    const double abs_kp = std::abs(k_p);
    const double num = std::min(q_eig.lambda_min, 2.0 * k_p * k_p * dot(b, b));
    const double den = std::max(p_eig.lambda_max, abs_kp);
    const double kappa_bar = num / den;
    const double alpha = std::sqrt(den / std::min(p_eig.lambda_min, abs_kp));
    return {kappa_bar, 0.5 * kappa_bar, alpha};
}

struct DecayTime {
    double t_hit;    // first recorded time after t_q at or below the 2% threshold
    double elapsed;  // t_hit - t_q
};

// First recorded sample time t_i > t_q with
//   ||chi(t_i)|| <= 2% * ||[x_r(t_i)^T, k_x^T, k_r, theta^T]^T||.
// The reference vector uses x_r at the candidate time and the constant ideal
// gains. Returns nothing if the threshold is never reached within the horizon.
inline std::optional<DecayTime> decay_time(const Trajectory& traj, const IdealGains& ideal) {
    if (!traj.t_q) throw NoExcitation("decay_time: memory never completed");
    double gain_part = dot(ideal.k_x, ideal.k_x) + ideal.k_r * ideal.k_r +
                       dot(ideal.theta, ideal.theta);
    for (const TrajectorySample& s : traj.samples) {
        if (s.t <= *traj.t_q) continue;
        const double threshold = 0.02 * std::sqrt(dot(s.x_r, s.x_r) + gain_part);
        if (s.chi_norm <= threshold) return DecayTime{s.t, s.t - *traj.t_q};
    }
    return std::nullopt;
}

// =============================================================================
// Episode driver
// =============================================================================

inline Trajectory run_episode(const SimConfig& cfg, const PlantModel& model,
                              const ReferenceModel& ref) {
    if (cfg.dt <= 0.0 || cfg.t_end <= 0.0 || cfg.f <= 0.0)
        throw std::invalid_argument("run_episode: dt, t_end and f must be positive");
    const std::size_t n = model.n();
    const std::size_t q = model.q();

    const IdealGains ideal = matching_gains(model, ref);

    AugmentedState s;
    s.x = cfg.x0.empty() ? Vec(n) : cfg.x0;
    s.x_r = cfg.xr0.empty() ? Vec(n) : cfg.xr0;
    if (s.x.size() != n || s.x_r.size() != n)
        throw std::invalid_argument("run_episode: initial state dimension mismatch");
    s.x_f = Vec(n);
    s.phi_f = Vec(q);
    s.t = 0.0;

    const double scale = 1.0 - cfg.estimate_error_fraction;
    s.gains.k_x_hat = ideal.k_x * scale;
    s.gains.k_r_hat = ideal.k_r * scale;
    s.gains.theta_hat = ideal.theta * scale;

    MemoryBuilder builder(n, q, cfg.eps1, cfg.eps2);
    MemoryOutput memory = builder.output();

    Trajectory traj;
    traj.dt = cfg.dt;
    const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
    traj.samples.reserve(steps + 1);

    const auto record = [&](const AugmentedState& st) {
        TrajectorySample sample;
        sample.t = st.t;
        sample.x = st.x;
        sample.x_r = st.x_r;
        const double r = cfg.command(st.t);
        const Vec phi = eval_phi(model, st.x);
        sample.u = control_input(st.gains, st.x, r, phi);
        const Vec e = st.x - st.x_r;
        sample.e_norm = norm(e);
        sample.kx_err_norm = norm(st.gains.k_x_hat - ideal.k_x);
        sample.kr_err = std::abs(st.gains.k_r_hat - ideal.k_r);
        sample.theta_err_norm = norm(st.gains.theta_hat - ideal.theta);
        sample.chi_norm = combined_error_norm(st, ideal);
        sample.V = lyapunov_value(st, ideal, ref.P(), model.k_p());
        sample.eta = memory.eta;
        traj.samples.push_back(std::move(sample));
    };
    record(s);

    const auto rhs = [&](const AugmentedState& st) -> AugmentedDeriv {
        const double r = cfg.command(st.t);
        const Vec phi = eval_phi(model, st.x);
        const double u = control_input(st.gains, st.x, r, phi);
        const Vec e = st.x - st.x_r;

        AugmentedDeriv d;
        d.x = plant_deriv(model, st.x, u);
        d.x_r = reference_deriv(ref, st.x_r, r);
        d.x_f = lowpass_deriv(cfg.f, st.x_f, st.x);
        d.phi_f = lowpass_deriv(cfg.f, st.phi_f, stacked_regressor(st.x, u, phi));

        if (cfg.law == AdaptationLaw::combined && memory.eta != 0.0) {
            const MismatchErrors me = mismatch_errors(memory.y_m, ref, st.gains);
            d.gains = combined_law({e, st.x, r, phi, ref.P(), model.b(), model.sign_kp(),
                                    memory.eta, me.e1, me.e2, me.e3, cfg.adaptation_gain});
        } else {
            static const Mat unused_mat;
            static const Vec unused_vec;
            d.gains = gradient_law({e, st.x, r, phi, ref.P(), model.b(), model.sign_kp(), 0.0,
                                    unused_mat, unused_vec, unused_mat, cfg.adaptation_gain});
        }
        return d;
    };

    FilterState fs(cfg.f, q, s.x, s.t);
    for (std::size_t k = 0; k < steps; ++k) {
        s = rk4_step(s, rhs, cfg.dt);
        if (norm(s.x) > cfg.divergence_guard)
            throw Diverged("run_episode: ||x|| exceeded " + std::to_string(cfg.divergence_guard) +
                           " at t = " + std::to_string(s.t));

        fs.x_f = s.x_f;
        fs.phi_f = s.phi_f;
        const Vec y_f = filtered_output(fs, s.x, s.t);
        if (builder.try_insert(s.phi_f, y_f) == InsertOutcome::accepted) {
            memory = builder.output();
            if (builder.complete() && !traj.t_q) traj.t_q = s.t;
        }
        record(s);
    }

    traj.memory = std::move(memory);
    return traj;
}

// =============================================================================
// Trajectory serialization
// =============================================================================

// Shortest representation that round-trips a double (17 significant digits).
inline std::string to_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os,
                                 std::size_t stride = 1) {
    if (stride == 0) stride = 1;
    const std::size_t n = traj.samples.empty() ? 0 : traj.samples.front().x.size();
    os << "t";
    for (std::size_t i = 1; i <= n; ++i) os << ",x" << i;
    for (std::size_t i = 1; i <= n; ++i) os << ",xr" << i;
    os << ",u,e_norm,kx_err_norm,kr_err,theta_err_norm,chi_norm,V,eta\n";
    for (std::size_t k = 0; k < traj.samples.size(); k += stride) {
        const TrajectorySample& s = traj.samples[k];
        os << to_g17(s.t);
        for (std::size_t i = 0; i < n; ++i) os << ',' << to_g17(s.x[i]);
        for (std::size_t i = 0; i < n; ++i) os << ',' << to_g17(s.x_r[i]);
        os << ',' << to_g17(s.u) << ',' << to_g17(s.e_norm) << ',' << to_g17(s.kx_err_norm)
           << ',' << to_g17(s.kr_err) << ',' << to_g17(s.theta_err_norm) << ','
           << to_g17(s.chi_norm) << ',' << to_g17(s.V) << ',' << to_g17(s.eta) << '\n';
    }
}

}  // namespace cmrac

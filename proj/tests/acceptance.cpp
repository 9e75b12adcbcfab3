// Acceptance suite for the combined adaptive-control library. Each check runs
// the full stack at its stated tolerance and prints one pass/fail line; the
// process exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <cmrac/cmrac.hpp>

#include "test_support.hpp"

using namespace cmrac;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- 1. convergence-rate formula ---------------------------------------------

void criterion_rate_formula(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const RateInfo rate =
        theoretical_rate(cfg.reference.Q(), cfg.reference.P(), cfg.plant.b(), cfg.plant.k_p());
    const double elapsed = seconds_since(start);

    const bool values_ok =
        std::abs(rate.kappa_bar - 0.5) <= 1e-12 && std::abs(rate.kappa - 0.25) <= 1e-12;
    const bool fast = elapsed < 1e-3;
    report("1. convergence-rate formula", values_ok && fast,
           "kappa_bar = " + to_g17(rate.kappa_bar) + ", kappa = " + to_g17(rate.kappa) + ", " +
               std::to_string(elapsed * 1e6) + " us");
}

// --- 2. parameter extraction --------------------------------------------------

void criterion_extraction(const ExperimentConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.t_end = 5.0;
    sim.law = AdaptationLaw::combined;

    const auto start = std::chrono::steady_clock::now();
    const Trajectory traj = run_episode(sim, cfg.plant, cfg.reference);
    const double wall = seconds_since(start);

    const Mat w_t = plant_lip_matrix(cfg.plant);
    double err = std::numeric_limits<double>::infinity();
    if (traj.t_q) err = norm_inf(traj.memory.y_m - w_t);

    const bool ok = traj.t_q.has_value() && err <= 1e-4 && wall < 2.0;
    report("2. parameter extraction", ok,
           std::string("t_q = ") + (traj.t_q ? to_g17(*traj.t_q) : "unset") +
               ", max |Y_m - W^T| = " + (traj.t_q ? to_g17(err) : "n/a") + ", " +
               std::to_string(wall) + " s");
}

// --- 3. exponential envelope ---------------------------------------------------

void criterion_envelope(const ExperimentConfig& cfg, const Trajectory& combined) {
    const RateInfo rate =
        theoretical_rate(cfg.reference.Q(), cfg.reference.P(), cfg.plant.b(), cfg.plant.k_p());
    bool ok = combined.t_q.has_value();
    double worst_ratio = 0.0;
    if (ok) {
        const double chi0 = combined.samples.front().chi_norm;
        for (const TrajectorySample& s : combined.samples) {
            if (s.t <= *combined.t_q) continue;
            const double bound =
                rate.alpha * std::exp(-rate.kappa * (s.t - *combined.t_q)) * chi0 * (1.0 + 1e-3);
            worst_ratio = std::max(worst_ratio, s.chi_norm / bound);
            if (s.chi_norm > bound) ok = false;
        }
    }
    report("3. exponential envelope", ok,
           "worst ||chi||/bound = " + std::to_string(worst_ratio));
}

// --- 4. Lyapunov monotonicity ---------------------------------------------------

bool v_monotone(const Trajectory& traj, double& worst_rise) {
    bool ok = true;
    for (std::size_t k = 1; k < traj.samples.size(); ++k) {
        const double prev = traj.samples[k - 1].V;
        const double rise = traj.samples[k].V - prev;
        if (rise > 1e-6 * std::max(1.0, prev)) {
            ok = false;
            worst_rise = std::max(worst_rise, rise);
        }
    }
    return ok;
}

void criterion_lyapunov(const ExperimentConfig& cfg, const Trajectory& combined,
                        const Trajectory& gradient) {
    double worst = 0.0;
    bool ok = v_monotone(combined, worst) && v_monotone(gradient, worst);

    std::mt19937_64 gen(101);
    for (int run = 0; run < 20 && ok; ++run) {
        SimConfig sim = cfg.sim;
        sim.t_end = 10.0;
        sim.law = (run % 2 == 0) ? AdaptationLaw::combined : AdaptationLaw::gradient;
        sim.command = CommandSignal::constant(testsup::uniform(gen, 2.0, 6.0));
        sim.estimate_error_fraction = testsup::uniform(gen, 0.2, 0.8);
        sim.x0 = Vec{testsup::uniform(gen, 0.0, 1.0), testsup::uniform(gen, -0.1, 0.1)};
        const Trajectory traj = run_episode(sim, cfg.plant, cfg.reference);
        ok = v_monotone(traj, worst);
    }
    report("4. Lyapunov monotonicity", ok, "worst rise = " + std::to_string(worst));
}

// --- 5. pre-completion reduction -------------------------------------------------

void criterion_prefix_identity(const Trajectory& combined, const Trajectory& gradient) {
    bool ok = combined.t_q.has_value() && gradient.t_q.has_value() &&
              *combined.t_q == *gradient.t_q;
    std::size_t compared = 0;
    if (ok) {
        for (std::size_t k = 0; k < combined.samples.size(); ++k) {
            if (combined.samples[k].t > *combined.t_q) break;
            if (!(combined.samples[k] == gradient.samples[k])) {
                ok = false;
                break;
            }
            ++compared;
        }
    }
    report("5. pre-completion reduction", ok,
           std::to_string(compared) + " samples bitwise identical up to t_q");
}

// --- 6. Monte Carlo study ----------------------------------------------------------

void criterion_monte_carlo(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<SampleResult> results = run_monte_carlo(cfg, 100);
    const double wall = seconds_since(start);

    const RateInfo rate =
        theoretical_rate(cfg.reference.Q(), cfg.reference.P(), cfg.plant.b(), cfg.plant.k_p());

    std::size_t hits = 0;
    bool bounds_ok = true;
    for (const SampleResult& r : results) {
        if (!r.elapsed) continue;
        ++hits;
        const double bound =
            std::log(rate.alpha * r.chi0 / *r.threshold_at_hit) / rate.kappa;
        if (*r.elapsed > bound) bounds_ok = false;
    }
    const bool ok = hits >= 99 && bounds_ok && wall < 300.0;
    report("6. Monte Carlo study", ok,
           std::to_string(hits) + "/100 reached the 2% threshold, envelopes " +
               (bounds_ok ? "respected" : "violated") + ", " + std::to_string(wall) + " s");
}

// --- 7. property suites ----------------------------------------------------------

void criterion_properties(const ExperimentConfig& cfg) {
    std::mt19937_64 gen(211);
    bool ok = true;
    std::string detail;

    // MGS orthonormality across 1000 random insertion sequences.
    {
        double worst = 0.0;
        for (int seq = 0; seq < 1000; ++seq) {
            const std::size_t q = 3 + seq % 6;
            MemoryBuilder builder(2, q, 0.5, 0.01);
            for (int k = 0; k < 40 && !builder.complete(); ++k) {
                const Vec phi = testsup::random_vec(gen, q, -3.0, 3.0);
                Vec y(2);
                y[0] = phi[0];
                y[1] = phi[q - 1];
                builder.try_insert(phi, y);
            }
            for (std::size_t i = 0; i < builder.accepted(); ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    double d = 0.0;
                    for (std::size_t r = 0; r < q; ++r)
                        d += builder.phi_b()(r, i) * builder.phi_b()(r, j);
                    worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
                }
        }
        if (worst > 1e-9) {
            ok = false;
            detail += "MGS defect " + std::to_string(worst) + "; ";
        }
    }

    // Extraction round-trip on 100 random (A, b k_p, theta) triples.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 2 + trial % 3;
            const std::size_t p = 1 + trial % 2;
            const std::size_t q = n + 1 + p;
            const Mat a = testsup::random_mat(gen, n, n, -2.0, 2.0);
            Vec bkp = testsup::random_vec(gen, n, -2.0, 2.0);
            bkp[0] += (bkp[0] >= 0.0 ? 1.0 : -1.0);
            const Vec theta = testsup::random_vec(gen, p, -2.0, 2.0);

            Mat w_t(n, q);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) w_t(i, j) = a(i, j);
                w_t(i, n) = bkp[i];
                for (std::size_t j = 0; j < p; ++j) w_t(i, n + 1 + j) = bkp[i] * theta[j];
            }
            MemoryBuilder builder(n, q, 0.5, 0.01);
            while (!builder.complete()) {
                const Vec phi = testsup::random_vec(gen, q, -3.0, 3.0);
                builder.try_insert(phi, w_t * phi);
            }
            const ExtractedParams params = extract_params(builder.output().y_m, n, p);
            worst = std::max(worst, norm_inf(params.a_hat - a));
            for (std::size_t i = 0; i < n; ++i)
                worst = std::max(worst, std::abs(params.bkp_hat[i] - bkp[i]));
            for (std::size_t j = 0; j < p; ++j)
                worst = std::max(worst, std::abs(params.theta_hat[j] - theta[j]));
        }
        if (worst > 1e-10) {
            ok = false;
            detail += "round-trip error " + std::to_string(worst) + "; ";
        }
    }

    // Memory-term identity (Y_m - W_hat^T Phi_m)^T = -(W_hat - W).
    {
        const Mat w_t = plant_lip_matrix(cfg.plant);
        MemoryBuilder builder(2, 4, 0.5, 0.01);
        while (!builder.complete()) {
            const Vec phi = testsup::random_vec(gen, 4, -3.0, 3.0);
            builder.try_insert(phi, w_t * phi);
        }
        const MemoryOutput mem = builder.output();
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const Mat w_hat_t = testsup::random_mat(gen, 2, 4, -2.0, 2.0);
            const Mat defect =
                mem.y_m - testsup::mul_oracle(w_hat_t, mem.phi_m) + w_hat_t - w_t;
            worst = std::max(worst, norm_inf(defect));
        }
        if (worst > 1e-8) {
            ok = false;
            detail += "memory-term defect " + std::to_string(worst) + "; ";
        }
    }

    // Tracking-error derivative consistency on 100 random states.
    {
        const IdealGains ideal = matching_gains(cfg.plant, cfg.reference);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const Vec x = testsup::random_vec(gen, 2, -2.0, 2.0);
            const Vec x_r = testsup::random_vec(gen, 2, -2.0, 2.0);
            const double r = testsup::uniform(gen, -3.0, 3.0);
            const ControllerGains gains{testsup::random_vec(gen, 2),
                                        testsup::uniform(gen, -2.0, 2.0),
                                        testsup::random_vec(gen, 1)};
            const Vec phi = eval_phi(cfg.plant, x);
            const double u = control_input(gains, x, r, phi);
            const Vec lhs = tracking_error_deriv(cfg.reference, cfg.plant, ideal, gains,
                                                 x - x_r, x, r, phi);
            const Vec rhs =
                plant_deriv(cfg.plant, x, u) - reference_deriv(cfg.reference, x_r, r);
            worst = std::max(worst, norm_inf(lhs - rhs));
        }
        if (worst > 1e-10) {
            ok = false;
            detail += "error-dynamics defect " + std::to_string(worst) + "; ";
        }
    }

    // RK4 against the analytic exponential.
    {
        Vec y{1.0};
        y = rk4_step(y, [](double, const Vec& s) { return Vec{-s[0]}; }, 0.0, 0.1);
        const double err = std::abs(y[0] - std::exp(-0.1));
        if (err > 1e-7) {
            ok = false;
            detail += "rk4 exponential error " + std::to_string(err) + "; ";
        }
    }

    // Lyapunov solve on 100 random Hurwitz instances.
    {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 2 + trial % 5;
            const Mat a_r = testsup::random_hurwitz(gen, n);
            const Mat q = testsup::random_spd(gen, n);
            const Mat p = solve_lyapunov(a_r, q);
            worst = std::max(worst, testsup::lyapunov_residual_oracle(a_r, p, q));
        }
        if (worst > 1e-9) {
            ok = false;
            detail += "Lyapunov residual " + std::to_string(worst) + "; ";
        }
    }

    report("7. property suites", ok, ok ? "all six oracle suites within tolerance" : detail);
}

// --- 8. baseline contrast ----------------------------------------------------------

void criterion_baseline_contrast(const Trajectory& combined, const Trajectory& gradient) {
    const TrajectorySample& g = gradient.samples.back();
    const TrajectorySample& c = combined.samples.back();
    const double grad_err = g.kx_err_norm + g.kr_err + g.theta_err_norm;
    const double comb_err = c.kx_err_norm + c.kr_err + c.theta_err_norm;

    const bool ok = g.e_norm < 1e-3 && grad_err > 10.0 * comb_err;
    report("8. baseline contrast", ok,
           "gradient ||e|| = " + to_g17(g.e_norm) + ", gradient gain error = " + to_g17(grad_err) +
               ", combined gain error = " + to_g17(comb_err));
}

}  // namespace

int main() {
    const ExperimentConfig cfg = load_config(CMRAC_CONFIG_DIR "/nominal.cfg");

    criterion_rate_formula(cfg);
    criterion_extraction(cfg);

    SimConfig combined_sim = cfg.sim;
    combined_sim.law = AdaptationLaw::combined;
    const Trajectory combined = run_episode(combined_sim, cfg.plant, cfg.reference);

    SimConfig gradient_sim = cfg.sim;
    gradient_sim.law = AdaptationLaw::gradient;
    const Trajectory gradient = run_episode(gradient_sim, cfg.plant, cfg.reference);

    criterion_envelope(cfg, combined);
    criterion_lyapunov(cfg, combined, gradient);
    criterion_prefix_identity(combined, gradient);
    criterion_monte_carlo(cfg);
    criterion_properties(cfg);
    criterion_baseline_contrast(combined, gradient);

    std::printf("%s\n", failures == 0 ? "all acceptance checks passed"
                                      : "acceptance checks FAILED");
    return failures;
}

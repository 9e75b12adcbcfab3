// Command-line driver: single simulations, Monte Carlo studies, and an
// invariant verification pass over a configured scenario.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <cmrac/cmrac.hpp>

namespace {

using namespace cmrac;

int cmd_simulate(const std::string& config_path, const std::string& law,
                 const std::string& out_dir) {
    ExperimentConfig cfg = load_config(config_path);
    if (law == "gradient") cfg.sim.law = AdaptationLaw::gradient;
    else if (law == "combined") cfg.sim.law = AdaptationLaw::combined;

    const Trajectory traj = run_episode(cfg.sim, cfg.plant, cfg.reference);
    write_episode_results(cfg, traj, out_dir);

    const TrajectorySample& last = traj.samples.back();
    std::cout << "simulated " << traj.samples.size() - 1 << " steps, dt = " << traj.dt << "\n";
    if (traj.t_q) std::cout << "memory complete at t_q = " << *traj.t_q << "\n";
    else std::cout << "memory incomplete at horizon end\n";
    std::cout << "terminal ||e|| = " << last.e_norm << ", ||chi|| = " << last.chi_norm << "\n"
              << "results in " << out_dir << "\n";
    return 0;
}

int cmd_montecarlo(const std::string& config_path, std::optional<std::size_t> samples,
                   std::optional<std::uint64_t> seed, const std::string& out_dir) {
    const ExperimentConfig cfg = load_config(config_path);
    const std::vector<SampleResult> results = run_monte_carlo(cfg, samples, seed);
    write_results(cfg, results, out_dir);

    std::size_t hits = 0;
    std::size_t diverged = 0;
    for (const SampleResult& r : results) {
        if (r.elapsed) ++hits;
        if (r.diverged) ++diverged;
    }
    std::cout << results.size() << " samples: " << hits << " reached the 2% threshold, "
              << diverged << " diverged\n"
              << "results in " << out_dir << "\n";
    return 0;
}

bool report(const std::string& name, bool ok, const std::string& detail = {}) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!ok && !detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n";
    return ok;
}

// Invariant suite over the configured scenario: memory extraction round-trip
// on synthetic spanning data, Lyapunov monotonicity along the episode, and
// the exponential envelope after memory completion.
int cmd_verify(const std::string& config_path) {
    const ExperimentConfig cfg = load_config(config_path);
    const std::size_t n = cfg.plant.n();
    const std::size_t q = cfg.plant.q();
    bool ok = true;

    {
        const Mat w_t = plant_lip_matrix(cfg.plant);
        MemoryBuilder builder(n, q, cfg.sim.eps1, cfg.sim.eps2);
        const double scale = 2.0 * std::max(1.0, cfg.sim.eps1);
        for (std::size_t j = 0; j < q; ++j) {
            Vec phi(q);
            phi[j] = scale;
            builder.try_insert(phi, w_t * phi);
        }
        double err = std::numeric_limits<double>::infinity();
        if (builder.complete()) {
            const MemoryOutput mem = builder.output();
            const ExtractedParams params = extract_params(mem.y_m, n, cfg.plant.p());
            err = norm_inf(params.a_hat - cfg.plant.A());
            for (std::size_t i = 0; i < n; ++i)
                err = std::max(err,
                               std::abs(params.bkp_hat[i] - cfg.plant.b()[i] * cfg.plant.k_p()));
            for (std::size_t j = 0; j < cfg.plant.p(); ++j)
                err = std::max(err, std::abs(params.theta_hat[j] - cfg.plant.theta()[j]));
        }
        ok &= report("extraction round-trip", builder.complete() && err <= 1e-8,
                     "max error " + std::to_string(err));
    }

    const Trajectory traj = run_episode(cfg.sim, cfg.plant, cfg.reference);
    {
        bool monotone = true;
        double worst = 0.0;
        for (std::size_t k = 1; k < traj.samples.size(); ++k) {
            const double prev = traj.samples[k - 1].V;
            const double rise = traj.samples[k].V - prev;
            if (rise > 1e-6 * std::max(1.0, prev)) {
                monotone = false;
                worst = std::max(worst, rise);
            }
        }
        ok &= report("Lyapunov monotonicity", monotone, "worst rise " + std::to_string(worst));
    }
    {
        bool envelope = true;
        std::string detail = "memory never completed";
        if (cfg.sim.law == AdaptationLaw::combined && traj.t_q) {
            const RateInfo rate = theoretical_rate(cfg.reference.Q(), cfg.reference.P(),
                                                   cfg.plant.b(), cfg.plant.k_p());
            const double chi0 = traj.samples.front().chi_norm;
            for (const TrajectorySample& s : traj.samples) {
                if (s.t <= *traj.t_q) continue;
                const double bound =
                    rate.alpha * std::exp(-rate.kappa * (s.t - *traj.t_q)) * chi0 * (1.0 + 1e-3);
                if (s.chi_norm > bound) {
                    envelope = false;
                    detail = "violated at t = " + std::to_string(s.t);
                    break;
                }
            }
            if (envelope) detail.clear();
            ok &= report("exponential envelope", envelope, detail);
        } else {
            std::cout << "[SKIP] exponential envelope (" << detail << ")\n";
        }
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"combined model-reference adaptive control simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::string law;

    CLI::App* simulate = app.add_subcommand("simulate", "run a single closed-loop episode");
    simulate->add_option("--config", config_path, "scenario config file")->required();
    simulate->add_option("--law", law, "adaptation law override")
        ->check(CLI::IsMember({"gradient", "combined"}));
    simulate->add_option("--out", out_dir, "output directory");

    std::optional<std::size_t> samples;
    std::optional<std::uint64_t> seed;
    CLI::App* montecarlo = app.add_subcommand("montecarlo", "run a Monte Carlo study");
    montecarlo->add_option("--config", config_path, "scenario config file")->required();
    montecarlo->add_option("--samples", samples, "sample count override");
    montecarlo->add_option("--seed", seed, "seed override");
    montecarlo->add_option("--out", out_dir, "output directory");

    CLI::App* verify = app.add_subcommand("verify", "run the invariant suite");
    verify->add_option("--config", config_path, "scenario config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(config_path, law, out_dir);
        if (montecarlo->parsed()) return cmd_montecarlo(config_path, samples, seed, out_dir);
        if (verify->parsed()) return cmd_verify(config_path);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}

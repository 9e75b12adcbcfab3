#pragma once

// =============================================================================
// cmrac/harness.hpp - experiment drivers and result persistence
// =============================================================================
// Single-run and Monte Carlo drivers over run_episode, with deterministic
// counter-based sampling: every draw is a pure function of (seed, sample
// index, draw index), so results are independent of execution order and
// thread count. Outputs are plain CSV/text, 17 significant digits throughout.
// =============================================================================

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cmrac/config.hpp"
#include "cmrac/sim.hpp"

namespace cmrac {

// =============================================================================
// Deterministic per-sample random draws
// =============================================================================

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace rng

// Stream of uniform draws keyed by (seed, sample_index); draw k never depends
// on draws of other samples.
class SampleRng {
public:
    SampleRng(std::uint64_t seed, std::uint64_t sample_index)
        : key_(rng::splitmix64(seed ^ rng::splitmix64(sample_index + 0x51ed270b0a1ce86dULL))) {}

    double uniform(double lo, double hi) {
        const std::uint64_t bits = rng::splitmix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_));
        const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
        return lo + u * (hi - lo);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// =============================================================================
// Monte Carlo driver
// =============================================================================

struct SampleResult {
    std::size_t index = 0;
    double command = 0.0;
    double error_fraction = 0.0;
    Vec x0;
    std::optional<double> t_q;
    std::optional<double> elapsed;         // memory completion to 2% threshold
    std::optional<double> empirical_rate;  // ln(alpha ||chi(t0)|| / ||chi(t_hit)||) / elapsed
    std::optional<double> terminal_chi;
    double chi0 = 0.0;                       // ||chi|| at t0
    std::optional<double> threshold_at_hit;  // 2% reference-vector norm at the hit sample
    bool diverged = false;
    // Retained only for flagged samples (diverged or threshold never reached).
    std::shared_ptr<const Trajectory> trajectory;

    [[nodiscard]] bool flagged() const { return diverged || !elapsed.has_value(); }
};

namespace detail {

inline SampleResult run_sample(const ExperimentConfig& cfg, const MonteCarloConfig& mc,
                               std::size_t index, std::uint64_t seed) {
    const std::size_t n = cfg.plant.n();
    SampleRng rng(seed, index);

    SampleResult result;
    result.index = index;
    result.command = rng.uniform(mc.command_range.first, mc.command_range.second);
    result.error_fraction =
        rng.uniform(mc.error_fraction_range.first, mc.error_fraction_range.second);
    result.x0 = Vec(n);
    for (std::size_t i = 0; i < n; ++i)
        result.x0[i] = rng.uniform(mc.x0_ranges[i].first, mc.x0_ranges[i].second);

    SimConfig sim = cfg.sim;
    sim.command = CommandSignal::constant(result.command);
    sim.estimate_error_fraction = result.error_fraction;
    sim.x0 = result.x0;
    sim.xr0 = Vec(n);
    sim.law = AdaptationLaw::combined;

    Trajectory traj;
    try {
        traj = run_episode(sim, cfg.plant, cfg.reference);
    } catch (const Diverged&) {
        result.diverged = true;
        return result;
    }

    result.t_q = traj.t_q;
    result.terminal_chi = traj.samples.back().chi_norm;
    result.chi0 = traj.samples.front().chi_norm;
    if (traj.t_q) {
        const IdealGains ideal = matching_gains(cfg.plant, cfg.reference);
        if (const auto hit = decay_time(traj, ideal)) {
            result.elapsed = hit->elapsed;
            const RateInfo rate = theoretical_rate(cfg.reference.Q(), cfg.reference.P(),
                                                   cfg.plant.b(), cfg.plant.k_p());
            const double gain_part = dot(ideal.k_x, ideal.k_x) + ideal.k_r * ideal.k_r +
                                     dot(ideal.theta, ideal.theta);
            double chi_hit = 0.0;
            for (const TrajectorySample& s : traj.samples)
                if (s.t == hit->t_hit) {
                    chi_hit = s.chi_norm;
                    result.threshold_at_hit = 0.02 * std::sqrt(dot(s.x_r, s.x_r) + gain_part);
                    break;
                }
            if (chi_hit > 0.0 && hit->elapsed > 0.0)
                result.empirical_rate = std::log(rate.alpha * result.chi0 / chi_hit) / hit->elapsed;
        }
    }
    if (result.flagged()) result.trajectory = std::make_shared<const Trajectory>(std::move(traj));
    return result;
}

}  // namespace detail

// Runs the configured Monte Carlo study: command level, initial-estimate error
// fraction and initial state are drawn uniformly from the configured ranges,
// the reference starts at the origin, and every episode uses the combined law.
// A diverged episode becomes a flagged SampleResult rather than aborting the
// batch. Optional arguments override the config's sample count and seed.
inline std::vector<SampleResult> run_monte_carlo(const ExperimentConfig& cfg,
                                                 std::optional<std::size_t> n_samples = {},
                                                 std::optional<std::uint64_t> seed = {},
                                                 unsigned workers = 0) {
    if (!cfg.monte_carlo)
        throw ValidationError("config has no [monte_carlo] section");
    const MonteCarloConfig& mc = *cfg.monte_carlo;
    const std::size_t n = n_samples.value_or(mc.n_samples);
    const std::uint64_t s = seed.value_or(mc.seed);
    if (n < 1) throw ValidationError("n_samples must be at least 1");

    std::vector<SampleResult> results(n);
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                results[i] = detail::run_sample(cfg, mc, i, s);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

// =============================================================================
// Result persistence
// =============================================================================

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    return os;
}

inline std::string opt_cell(const std::optional<double>& v) {
    return v ? to_g17(*v) : std::string{};
}

inline void write_rate_summary(std::ostream& os, const ExperimentConfig& cfg) {
    const RateInfo rate =
        theoretical_rate(cfg.reference.Q(), cfg.reference.P(), cfg.plant.b(), cfg.plant.k_p());
    os << "kappa_bar=" << to_g17(rate.kappa_bar) << '\n'
       << "kappa=" << to_g17(rate.kappa) << '\n'
       << "alpha=" << to_g17(rate.alpha) << '\n';
}

}  // namespace detail

// Writes montecarlo.csv (one row per sample), summary.txt, and a full
// trajectory CSV for every flagged sample.
inline void write_results(const ExperimentConfig& cfg, const std::vector<SampleResult>& results,
                          const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir.string());

    const std::size_t n = cfg.plant.n();
    {
        std::ofstream os = detail::open_out(out_dir / "montecarlo.csv");
        os << "sample,command,error_fraction";
        for (std::size_t i = 1; i <= n; ++i) os << ",x0_" << i;
        os << ",t_q,elapsed,empirical_rate,terminal_chi,diverged\n";
        for (const SampleResult& r : results) {
            os << r.index << ',' << to_g17(r.command) << ',' << to_g17(r.error_fraction);
            for (std::size_t i = 0; i < n; ++i) os << ',' << to_g17(r.x0[i]);
            os << ',' << detail::opt_cell(r.t_q) << ',' << detail::opt_cell(r.elapsed) << ','
               << detail::opt_cell(r.empirical_rate) << ',' << detail::opt_cell(r.terminal_chi)
               << ',' << (r.diverged ? 1 : 0) << '\n';
        }
        if (os.fail()) throw IoError("write failed: montecarlo.csv");
    }
    {
        std::ofstream os = detail::open_out(out_dir / "summary.txt");
        detail::write_rate_summary(os, cfg);
        std::size_t hits = 0;
        for (const SampleResult& r : results)
            if (r.elapsed) ++hits;
        os << "samples=" << results.size() << '\n' << "threshold_hits=" << hits << '\n';
        if (os.fail()) throw IoError("write failed: summary.txt");
    }
    for (const SampleResult& r : results) {
        if (!r.flagged() || !r.trajectory) continue;
        char name[32];
        std::snprintf(name, sizeof(name), "trajectory_%03zu.csv", r.index);
        std::ofstream os = detail::open_out(out_dir / name);
        write_trajectory_csv(*r.trajectory, os, cfg.sim.csv_stride);
        if (os.fail()) throw IoError(std::string("write failed: ") + name);
    }
}

// Writes trajectory.csv and summary.txt for a single episode.
inline void write_episode_results(const ExperimentConfig& cfg, const Trajectory& traj,
                                  const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir.string());

    {
        std::ofstream os = detail::open_out(out_dir / "trajectory.csv");
        write_trajectory_csv(traj, os, cfg.sim.csv_stride);
        if (os.fail()) throw IoError("write failed: trajectory.csv");
    }
    {
        std::ofstream os = detail::open_out(out_dir / "summary.txt");
        detail::write_rate_summary(os, cfg);
        if (traj.t_q) {
            os << "t_q=" << to_g17(*traj.t_q) << '\n';
            const IdealGains ideal = matching_gains(cfg.plant, cfg.reference);
            if (const auto hit = decay_time(traj, ideal))
                os << "elapsed_to_2pct=" << to_g17(hit->elapsed) << '\n';
        }
        if (!traj.samples.empty())
            os << "terminal_chi=" << to_g17(traj.samples.back().chi_norm) << '\n';
        if (os.fail()) throw IoError("write failed: summary.txt");
    }
}

}  // namespace cmrac

#pragma once

// =============================================================================
// cmrac/config.hpp - experiment configuration file format
// =============================================================================
// Flat key-value text with nested [section] headers. Matrices are written
// row-major as bracketed number lists; lists may also hold plain tokens
// (basis terms). '#' and ';' start comments.
//
//   [plant]
//   n = 2
//   A = [0, 1, 1, 0]
//   b = [0, 1]
//   k_p = 2
//   theta = [-0.1]
//   basis = [x2^2]
//   ...
// =============================================================================

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cmrac/linalg.hpp"
#include "cmrac/plant.hpp"
#include "cmrac/sim.hpp"

namespace cmrac {

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

struct MonteCarloConfig {
    std::size_t n_samples = 1;
    std::uint64_t seed = 0;
    std::pair<double, double> command_range{0.0, 0.0};
    std::pair<double, double> error_fraction_range{0.0, 0.0};
    std::vector<std::pair<double, double>> x0_ranges;  // one interval per state component
};

struct ExperimentConfig {
    PlantModel plant;
    ReferenceModel reference;
    SimConfig sim;
    std::optional<MonteCarloConfig> monte_carlo;
};

// =============================================================================
// Raw key-value layer
// =============================================================================

namespace cfgdetail {

struct RawEntry {
    std::string value;
    int line = 0;
};

using Section = std::map<std::string, RawEntry>;

struct RawConfig {
    std::string origin;  // file name for error context
    std::map<std::string, Section> sections;
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline RawConfig parse_raw(std::istream& in, const std::string& origin) {
    RawConfig raw;
    raw.origin = origin;
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError(origin + ":" + std::to_string(line_no) +
                                 ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ParseError(origin + ":" + std::to_string(line_no) + ": empty section name");
            raw.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": expected 'key = value': " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        if (section.empty())
            throw ParseError(origin + ":" + std::to_string(line_no) +
                             ": key '" + key + "' outside any [section]");
        auto [it, inserted] = raw.sections[section].insert({key, RawEntry{value, line_no}});
        if (!inserted)
            throw ParseError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                             "' in [" + section + "]");
    }
    return raw;
}

// Splits "[a, b, c]" or "a b c" into tokens.
inline std::vector<std::string> tokenize(std::string value) {
    value = trim(value);
    if (!value.empty() && value.front() == '[') {
        if (value.back() != ']') throw std::invalid_argument("unterminated '[' list");
        value = value.substr(1, value.size() - 2);
    }
    for (char& c : value)
        if (c == ',') c = ' ';
    std::vector<std::string> tokens;
    std::istringstream iss(value);
    std::string tok;
    while (iss >> tok) tokens.push_back(tok);
    return tokens;
}

inline double to_real(const std::string& tok) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number: '" + tok + "'");
    }
    if (used != tok.size()) throw std::invalid_argument("not a number: '" + tok + "'");
    return v;
}

// Typed access to one section with file:line error context.
class SectionView {
public:
    SectionView(const RawConfig& raw, std::string name) : raw_(raw), name_(std::move(name)) {
        const auto it = raw.sections.find(name_);
        section_ = (it == raw.sections.end()) ? nullptr : &it->second;
    }

    [[nodiscard]] bool exists() const { return section_ != nullptr; }
    [[nodiscard]] bool has(const std::string& key) const {
        return section_ && section_->count(key) > 0;
    }

    [[nodiscard]] const RawEntry& entry(const std::string& key) const {
        if (!section_)
            throw ParseError(raw_.origin + ": missing required section [" + name_ + "]");
        const auto it = section_->find(key);
        if (it == section_->end())
            throw ParseError(raw_.origin + ": missing key '" + key + "' in [" + name_ + "]");
        return it->second;
    }

    [[nodiscard]] std::string context(const std::string& key) const {
        return raw_.origin + ":" + std::to_string(entry(key).line) + ": [" + name_ + "] " + key;
    }

    [[nodiscard]] double real(const std::string& key) const {
        try {
            return to_real(entry(key).value);
        } catch (const std::invalid_argument& ex) {
            throw ParseError(context(key) + ": " + ex.what());
        }
    }

    [[nodiscard]] double real_or(const std::string& key, double fallback) const {
        return has(key) ? real(key) : fallback;
    }

    [[nodiscard]] std::uint64_t count(const std::string& key) const {
        const double v = real(key);
        if (v < 0.0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
            throw ParseError(context(key) + ": expected a nonnegative integer");
        return static_cast<std::uint64_t>(v);
    }

    [[nodiscard]] std::vector<std::string> tokens(const std::string& key) const {
        try {
            return tokenize(entry(key).value);
        } catch (const std::invalid_argument& ex) {
            throw ParseError(context(key) + ": " + ex.what());
        }
    }

    [[nodiscard]] Vec vec(const std::string& key, std::size_t expected) const {
        const auto toks = tokens(key);
        if (toks.size() != expected)
            throw ParseError(context(key) + ": expected " + std::to_string(expected) +
                             " numbers, found " + std::to_string(toks.size()));
        Vec v(expected);
        for (std::size_t i = 0; i < expected; ++i) {
            try {
                v[i] = to_real(toks[i]);
            } catch (const std::invalid_argument& ex) {
                throw ParseError(context(key) + ": " + ex.what());
            }
        }
        return v;
    }

    [[nodiscard]] Mat mat(const std::string& key, std::size_t rows, std::size_t cols) const {
        const Vec flat = vec(key, rows * cols);
        Mat m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) m(i, j) = flat[i * cols + j];
        return m;
    }

private:
    const RawConfig& raw_;
    std::string name_;
    const Section* section_ = nullptr;
};

inline CommandSignal parse_command(const SectionView& sim, const std::string& key) {
    const auto toks = sim.tokens(key);
    const auto arg = [&](std::size_t i) {
        if (i >= toks.size()) throw ParseError(sim.context(key) + ": missing argument");
        try {
            return to_real(toks[i]);
        } catch (const std::invalid_argument& ex) {
            throw ParseError(sim.context(key) + ": " + ex.what());
        }
    };
    if (toks.empty()) throw ParseError(sim.context(key) + ": empty command descriptor");
    const std::string& kind = toks[0];
    if (kind == "const" || kind == "constant") return CommandSignal::constant(arg(1));
    if (kind == "step") return CommandSignal::step(arg(1), arg(2), arg(3));
    if (kind == "sine") return CommandSignal::sine(arg(1), arg(2), arg(3));
    throw ParseError(sim.context(key) + ": unknown command kind '" + kind + "'");
}

inline std::pair<double, double> parse_range(const SectionView& view, const std::string& key) {
    const Vec v = view.vec(key, 2);
    if (v[0] > v[1]) throw ValidationError(key + " range must satisfy lo <= hi");
    return {v[0], v[1]};
}

}  // namespace cfgdetail

// =============================================================================
// load_config
// =============================================================================

inline ExperimentConfig load_config_stream(std::istream& in, const std::string& origin) {
    using cfgdetail::SectionView;
    const cfgdetail::RawConfig raw = cfgdetail::parse_raw(in, origin);

    const SectionView plant_sec(raw, "plant");
    const SectionView ref_sec(raw, "reference");
    const SectionView sim_sec(raw, "sim");
    const SectionView mc_sec(raw, "monte_carlo");

    const auto n = static_cast<std::size_t>(plant_sec.count("n"));
    if (n == 0) throw ValidationError("n must be at least 1");

    const auto basis_tokens = plant_sec.has("basis") ? plant_sec.tokens("basis")
                                                     : std::vector<std::string>{};
    std::vector<BasisDescriptor> basis;
    basis.reserve(basis_tokens.size());
    for (const std::string& tok : basis_tokens) {
        try {
            basis.push_back(parse_basis_descriptor(tok, n));
        } catch (const std::invalid_argument& ex) {
            throw ParseError(plant_sec.context("basis") + ": " + ex.what());
        }
    }
    const std::size_t p = basis.size();

    ExperimentConfig cfg{
        PlantModel([&] {
            try {
                return PlantModel(plant_sec.mat("A", n, n), plant_sec.vec("b", n),
                                  plant_sec.real("k_p"),
                                  p > 0 ? plant_sec.vec("theta", p) : Vec(0),
                                  std::move(basis));
            } catch (const std::invalid_argument& ex) {
                throw ValidationError(std::string("plant: ") + ex.what());
            }
        }()),
        ReferenceModel([&] {
            try {
                return ReferenceModel(ref_sec.mat("A_r", n, n), ref_sec.vec("b_r", n),
                                      ref_sec.mat("Q", n, n));
            } catch (const std::invalid_argument& ex) {
                throw ValidationError(std::string("reference: ") + ex.what());
            } catch (const NotHurwitz& ex) {
                throw ValidationError(std::string("reference: A_r must be Hurwitz (") +
                                      ex.what() + ")");
            }
        }()),
        SimConfig{},
        std::nullopt,
    };

    SimConfig& sim = cfg.sim;
    sim.dt = sim_sec.real_or("dt", 1e-3);
    sim.t_end = sim_sec.real_or("t_end", 40.0);
    sim.f = sim_sec.real_or("f", 1.0);
    sim.eps1 = sim_sec.real_or("eps1", 1.0);
    sim.eps2 = sim_sec.real_or("eps2", 0.01);
    sim.estimate_error_fraction = sim_sec.real_or("estimate_error_fraction", 0.0);
    sim.adaptation_gain = sim_sec.real_or("adaptation_gain", 1.0);
    sim.divergence_guard = sim_sec.real_or("divergence_guard", 1e6);
    sim.csv_stride = sim_sec.has("csv_stride")
                         ? static_cast<std::size_t>(sim_sec.count("csv_stride"))
                         : 1;
    sim.command = cfgdetail::parse_command(sim_sec, "command");
    sim.x0 = sim_sec.has("x0") ? sim_sec.vec("x0", n) : Vec(n);
    sim.xr0 = sim_sec.has("xr0") ? sim_sec.vec("xr0", n) : Vec(n);
    if (sim_sec.has("law")) {
        const std::string law = sim_sec.entry("law").value;
        if (law == "gradient") sim.law = AdaptationLaw::gradient;
        else if (law == "combined") sim.law = AdaptationLaw::combined;
        else throw ParseError(sim_sec.context("law") + ": expected 'gradient' or 'combined'");
    }

    if (sim.f <= 0.0) throw ValidationError("f must be positive");
    if (sim.dt <= 0.0) throw ValidationError("dt must be positive");
    if (sim.t_end <= 0.0) throw ValidationError("t_end must be positive");
    if (sim.eps1 <= 0.0) throw ValidationError("eps1 must be positive");
    if (sim.eps2 <= 0.0) throw ValidationError("eps2 must be positive");
    if (sim.divergence_guard <= 0.0) throw ValidationError("divergence_guard must be positive");
    if (sim.csv_stride == 0) throw ValidationError("csv_stride must be at least 1");

    if (mc_sec.exists()) {
        MonteCarloConfig mc;
        mc.n_samples = static_cast<std::size_t>(mc_sec.count("n_samples"));
        if (mc.n_samples < 1) throw ValidationError("n_samples must be at least 1");
        mc.seed = mc_sec.count("seed");
        mc.command_range = cfgdetail::parse_range(mc_sec, "command_range");
        mc.error_fraction_range = cfgdetail::parse_range(mc_sec, "error_fraction_range");
        const Vec flat = mc_sec.vec("x0_ranges", 2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            if (flat[2 * i] > flat[2 * i + 1])
                throw ValidationError("x0_ranges intervals must satisfy lo <= hi");
            mc.x0_ranges.emplace_back(flat[2 * i], flat[2 * i + 1]);
        }
        cfg.monte_carlo = std::move(mc);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return load_config_stream(in, path);
}

}  // namespace cmrac

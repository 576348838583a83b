#pragma once

// Experiment configuration: flat key = value text files with '#' comments,
// the same keys exposed as CLI flags (flags win). Serialization is canonical
// so that parse(serialize(parse(x))) == parse(x).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spde/errors.hpp"
#include "spde/sde_engine.hpp"

namespace spde {

enum class ExperimentKind {
    uncontrolled,
    closed_loop,
    as_exponent,
    null_control,
    convergence,
    gram_report,
};

inline ExperimentKind parse_kind(const std::string& s) {
    if (s == "uncontrolled") return ExperimentKind::uncontrolled;
    if (s == "closed_loop") return ExperimentKind::closed_loop;
    if (s == "as_exponent") return ExperimentKind::as_exponent;
    if (s == "null_control") return ExperimentKind::null_control;
    if (s == "convergence") return ExperimentKind::convergence;
    if (s == "gram_report") return ExperimentKind::gram_report;
    throw validation_error("kind: unknown experiment kind '" + s + "'");
}

inline std::string format_kind(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::uncontrolled: return "uncontrolled";
        case ExperimentKind::closed_loop: return "closed_loop";
        case ExperimentKind::as_exponent: return "as_exponent";
        case ExperimentKind::null_control: return "null_control";
        case ExperimentKind::convergence: return "convergence";
        case ExperimentKind::gram_report: return "gram_report";
    }
    return "?";
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::uncontrolled;

    // domain and dynamics
    double length = kPi;
    int truncation = 1;
    double a = 1.0;
    double c = 0.0;

    // simulation
    double dt = 0.01;
    double t_end = 5.0;
    std::string scheme = "exact_transform";
    uint64_t seed = 12345;
    long n_paths = 1000;
    int workers = 0; // 0 = available parallelism
    std::string y0 = "e1"; // e1 | equal | decay | comma-separated coefficients

    // control
    std::string region; // "a1-b1,a2-b2", empty = no control
    double lambda = 9.0;
    std::vector<double> lambda_grid = {1.0, 4.0, 9.0, 16.0, 25.0, 36.0};

    // estimation
    double fit_t_lo = 0.0; // 0 = default window [0.2 t_end, t_end]
    double fit_t_hi = 0.0;
    double t_eval = 0.0;   // as_exponent horizon; 0 = t_end
    double sup_from = 0.0;

    // null-control plan
    double plan_T = 1.0;
    double plan_gamma = 0.0; // 0 = derive from the calibrated constant
    bool plan_enforce_gamma_bound = true;
    int plan_n_max = 3;

    // convergence study
    std::vector<double> dt_levels = {0.015625,     0.0078125,     0.00390625,  0.001953125,
                                     0.0009765625, 0.00048828125, 0.000244140625};

    // output
    std::string out_dir = "out";
    int dump_trajectories = 0; // how many paths to dump as trajectory_<k>.csv
    bool strict = false;       // unreliable fits become exit code 4

    SimConfig sim() const {
        SimConfig s;
        s.a = a;
        s.c = c;
        s.dt = dt;
        s.t_end = (kind == ExperimentKind::as_exponent && t_eval > 0.0) ? t_eval : t_end;
        s.truncation = truncation;
        s.scheme = parse_scheme(scheme);
        s.seed = seed;
        s.n_paths = n_paths;
        return s;
    }
};

namespace detail {

inline std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            out.push_back(std::stod(part));
        } catch (const std::exception&) {
            throw validation_error(key + ": cannot parse number '" + part + "'");
        }
    }
    if (out.empty()) throw validation_error(key + ": empty list");
    return out;
}

inline std::string format_double_list(const std::vector<double>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
        os << buf;
    }
    return os.str();
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw validation_error(key + ": expected true/false");
}

} // namespace detail

inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    try {
        if (key == "kind") cfg.kind = parse_kind(value);
        else if (key == "length") cfg.length = std::stod(value);
        else if (key == "truncation") cfg.truncation = std::stoi(value);
        else if (key == "a") cfg.a = std::stod(value);
        else if (key == "c") cfg.c = std::stod(value);
        else if (key == "dt") cfg.dt = std::stod(value);
        else if (key == "t_end") cfg.t_end = std::stod(value);
        else if (key == "scheme") cfg.scheme = value;
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "n_paths") cfg.n_paths = std::stol(value);
        else if (key == "workers") cfg.workers = std::stoi(value);
        else if (key == "y0") cfg.y0 = value;
        else if (key == "region") cfg.region = value;
        else if (key == "lambda") cfg.lambda = std::stod(value);
        else if (key == "lambda_grid") cfg.lambda_grid = detail::parse_double_list(value, key);
        else if (key == "fit_t_lo") cfg.fit_t_lo = std::stod(value);
        else if (key == "fit_t_hi") cfg.fit_t_hi = std::stod(value);
        else if (key == "t_eval") cfg.t_eval = std::stod(value);
        else if (key == "sup_from") cfg.sup_from = std::stod(value);
        else if (key == "plan_T") cfg.plan_T = std::stod(value);
        else if (key == "plan_gamma") cfg.plan_gamma = std::stod(value);
        else if (key == "plan_enforce_gamma_bound")
            cfg.plan_enforce_gamma_bound = detail::parse_bool(value, key);
        else if (key == "plan_n_max") cfg.plan_n_max = std::stoi(value);
        else if (key == "dt_levels") cfg.dt_levels = detail::parse_double_list(value, key);
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "dump_trajectories") cfg.dump_trajectories = std::stoi(value);
        else if (key == "strict") cfg.strict = detail::parse_bool(value, key);
        else throw validation_error("unknown config key '" + key + "'");
    } catch (const validation_error&) {
        throw;
    } catch (const std::exception&) {
        throw validation_error(key + ": cannot parse value '" + value + "'");
    }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw validation_error("config line " + std::to_string(line_no) +
                                   ": expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open config file " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_config_text(os.str());
}

inline std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream os;
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "kind = " << format_kind(c.kind) << '\n'
       << "length = " << num(c.length) << '\n'
       << "truncation = " << c.truncation << '\n'
       << "a = " << num(c.a) << '\n'
       << "c = " << num(c.c) << '\n'
       << "dt = " << num(c.dt) << '\n'
       << "t_end = " << num(c.t_end) << '\n'
       << "scheme = " << c.scheme << '\n'
       << "seed = " << c.seed << '\n'
       << "n_paths = " << c.n_paths << '\n'
       << "workers = " << c.workers << '\n'
       << "y0 = " << c.y0 << '\n'
       << "region = " << c.region << '\n'
       << "lambda = " << num(c.lambda) << '\n'
       << "lambda_grid = " << detail::format_double_list(c.lambda_grid) << '\n'
       << "fit_t_lo = " << num(c.fit_t_lo) << '\n'
       << "fit_t_hi = " << num(c.fit_t_hi) << '\n'
       << "t_eval = " << num(c.t_eval) << '\n'
       << "sup_from = " << num(c.sup_from) << '\n'
       << "plan_T = " << num(c.plan_T) << '\n'
       << "plan_gamma = " << num(c.plan_gamma) << '\n'
       << "plan_enforce_gamma_bound = " << (c.plan_enforce_gamma_bound ? "true" : "false") << '\n'
       << "plan_n_max = " << c.plan_n_max << '\n'
       << "dt_levels = " << detail::format_double_list(c.dt_levels) << '\n'
       << "out_dir = " << c.out_dir << '\n'
       << "dump_trajectories = " << c.dump_trajectories << '\n'
       << "strict = " << (c.strict ? "true" : "false") << '\n';
    return os.str();
}

// initial mode vector from the y0 descriptor
inline ModeVector parse_initial_state(const std::string& text, int truncation) {
    ModeVector y(truncation, 0.0);
    if (text == "e1") {
        y[0] = 1.0;
    } else if (text == "equal") {
        const double v = 1.0 / std::sqrt(static_cast<double>(truncation));
        for (double& x : y) x = v;
    } else if (text == "decay") {
        double s = 0.0;
        for (int k = 1; k <= truncation; ++k) s += 1.0 / (static_cast<double>(k) * k);
        for (int k = 1; k <= truncation; ++k) y[k - 1] = 1.0 / (k * std::sqrt(s));
    } else {
        const std::vector<double> coeffs = detail::parse_double_list(text, "y0");
        if (static_cast<int>(coeffs.size()) != truncation)
            throw validation_error("y0: explicit list must have exactly M entries");
        y = coeffs;
    }
    return y;
}

} // namespace spde

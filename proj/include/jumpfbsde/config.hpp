#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>

#include "jumpfbsde/model.hpp"
#include "jumpfbsde/problems.hpp"

namespace jumpfbsde {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Declarative problem file: `key = value` lines, `#` starts a comment.
struct ProblemConfig {
    std::string problem;
    BuiltinParams params;
    std::optional<std::size_t> n_steps;
    std::optional<GeneratorKind> kind;
    Constants constants;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& v, const std::string& where) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(where + ": '" + v + "' is not a number");
    }
    if (used != v.size() || !std::isfinite(out)) throw ConfigError(where + ": '" + v + "' is not a finite number");
    return out;
}

}  // namespace detail

inline ProblemConfig parse_config(std::istream& in) {
    ProblemConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
        const auto real = [&] { return detail::parse_real(value, where); };
        if (key == "problem") {
            cfg.problem = value;
        } else if (key == "T") {
            cfg.params.horizon = real();
        } else if (key == "x0") {
            cfg.params.x0 = real();
        } else if (key == "lambda_const") {
            cfg.params.lambda = real();
        } else if (key == "beta_const") {
            cfg.params.beta = real();
        } else if (key == "n_steps") {
            std::size_t n = 0;
            const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
            if (ec != std::errc{} || ptr != value.data() + value.size() || n == 0) {
                throw ConfigError(where + ": n_steps must be a positive integer");
            }
            cfg.n_steps = n;
        } else if (key == "generator_kind") {
            if (value == "lipschitz" || value == "Lipschitz") {
                cfg.kind = GeneratorKind::lipschitz;
            } else if (value == "quadratic" || value == "Quadratic") {
                cfg.kind = GeneratorKind::quadratic;
            } else {
                throw ConfigError(where + ": generator_kind must be lipschitz or quadratic");
            }
        } else if (key == "K") {
            cfg.constants.K = real();
        } else if (key == "K_g") {
            cfg.constants.K_g = real();
        } else if (key == "K_q") {
            cfg.constants.K_q = real();
        } else if (key == "K_f") {
            cfg.constants.K_f = real();
        } else if (key == "L_fz") {
            cfg.constants.L_fz = real();
        } else if (key == "L_a") {
            cfg.constants.L_a = real();
        } else if (key == "K_a") {
            cfg.constants.K_a = real();
        } else if (key == "M_g") {
            cfg.constants.M_g = real();
        } else {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
    if (cfg.problem.empty()) throw ConfigError("config does not name a problem");
    return cfg;
}

inline ProblemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in);
}

/// Builtin problem with the config's parameters and constant overrides.
inline Problem make_problem(const ProblemConfig& cfg) {
    Problem p = builtin_problem(cfg.problem, cfg.params);
    if (cfg.kind) p.spec.kind = *cfg.kind;
    Constants& c = p.spec.constants;
    const Constants& o = cfg.constants;
    for (auto [dst, src] : {std::pair{&c.K, &o.K}, {&c.K_g, &o.K_g}, {&c.K_q, &o.K_q}, {&c.K_f, &o.K_f},
                            {&c.L_fz, &o.L_fz}, {&c.L_a, &o.L_a}, {&c.K_a, &o.K_a}, {&c.M_g, &o.M_g}}) {
        if (*src) *dst = *src;
    }
    return p;
}

}  // namespace jumpfbsde

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpfbsde/model.hpp"

namespace jumpfbsde {

/// Exact (X, Y, Z, U) at time t given W_t and the jump time.
struct ExactValues {
    double x, y, z, u;
};
using ClosedForm = std::function<ExactValues(double t, double w, double tau)>;

struct BuiltinParams {
    double horizon = 1.0;
    double x0 = 0.0;
    double lambda = 1.0;
    double beta = 0.5;
};

struct Problem {
    ProblemSpec spec;
    std::optional<ClosedForm> closed_form;
};

inline const std::vector<std::string>& builtin_ids() {
    static const std::vector<std::string> ids{"driftless", "linear_jump", "ou_lipschitz", "quadratic_toy"};
    return ids;
}

/// Growth rate of the linear_jump generator in y.
inline constexpr double kLinearJumpRate = 0.5;

namespace detail {

/// driftless / linear_jump: X = x + W + beta 1{t >= tau}, g(x) = x,
/// f = a y + lambda u. Y0 = e^{a(T-t)} (x + W + beta (1 - e^{-lambda (T-t)})).
inline Problem linear_family(const std::string& name, const BuiltinParams& p, double a) {
    Problem out;
    ProblemSpec& s = out.spec;
    s.name = name;
    s.horizon = p.horizon;
    s.x0 = p.x0;
    s.jump = JumpModel::constant(p.lambda);
    s.drift = [](double, double) { return 0.0; };
    s.diffusion = [](double, double) { return 1.0; };
    s.jump_size = [beta = p.beta](double, double) { return beta; };
    s.terminal = [](double x) { return x; };
    const double lambda = p.lambda;
    if (a == 0.0) {
        s.generator = [lambda](double, double, double, double, double u) { return lambda * u; };
    } else {
        s.generator = [lambda, a](double, double, double y, double, double u) { return a * y + lambda * u; };
    }
    s.kind = GeneratorKind::lipschitz;
    s.constants.K = std::max({std::abs(p.x0) + 4.0, 1.0 + std::abs(p.beta), a + lambda});
    out.closed_form = [x = p.x0, beta = p.beta, lambda, a, T = p.horizon](double t, double w, double tau) {
        const double growth = std::exp(a * (T - t));
        const double survive = std::exp(-lambda * (T - t));
        const double base = x + w;
        if (t < tau) {
            return ExactValues{base, growth * (base + beta * (1.0 - survive)), growth, growth * beta * survive};
        }
        const double u = t <= tau ? growth * beta * survive : 0.0;
        return ExactValues{base + beta, growth * (base + beta), growth, u};
    };
    return out;
}

}  // namespace detail

inline Problem builtin_problem(const std::string& id, const BuiltinParams& p = {}) {
    if (id == "driftless") return detail::linear_family(id, p, 0.0);
    if (id == "linear_jump") return detail::linear_family(id, p, kLinearJumpRate);
    Problem out;
    ProblemSpec& s = out.spec;
    s.name = id;
    s.horizon = p.horizon;
    s.x0 = p.x0;
    s.jump = JumpModel::constant(p.lambda);
    s.diffusion = [](double, double) { return 1.0; };
    s.jump_size = [beta = p.beta](double, double) { return beta; };
    s.terminal = [](double x) { return std::tanh(x); };
    if (id == "ou_lipschitz") {
        s.drift = [](double, double x) { return -x; };
        s.generator = [](double, double, double y, double z, double u) {
            return 0.2 * y + 0.1 * std::sin(z) + 0.3 * u;
        };
        s.kind = GeneratorKind::lipschitz;
        s.constants.K = std::max(1.0, 1.0 + std::abs(p.beta));
        return out;
    }
    if (id == "quadratic_toy") {
        s.drift = [](double, double x) { return -0.5 * x; };
        s.generator = [](double, double, double y, double z, double u) { return 0.1 * y + 0.5 * z * z + 0.2 * u; };
        s.kind = GeneratorKind::quadratic;
        Constants& c = s.constants;
        c.K = std::max(1.0, 1.0 + std::abs(p.beta));
        c.L_a = 0.5;
        c.K_a = 1.0;
        c.K_g = 1.0;
        c.M_g = 1.0;
        c.K_q = 0.5;
        c.K_f = 0.2;
        c.L_fz = 0.5;
        return out;
    }
    throw std::invalid_argument("unknown problem id '" + id + "'");
}

}  // namespace jumpfbsde

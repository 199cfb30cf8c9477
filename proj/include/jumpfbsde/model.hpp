#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "jumpfbsde/random.hpp"

namespace jumpfbsde {

using Coefficient = std::function<double(double t, double x)>;
using Terminal = std::function<double(double x)>;
using Generator = std::function<double(double t, double x, double y, double z, double u)>;

enum class GeneratorKind { lipschitz, quadratic };

inline const char* to_string(GeneratorKind kind) {
    return kind == GeneratorKind::lipschitz ? "lipschitz" : "quadratic";
}

/// Declared constants. Absent values are simply not checked; operations
/// that need a specific constant throw when it is missing.
struct Constants {
    std::optional<double> K;
    std::optional<double> K_g;
    std::optional<double> K_q;
    std::optional<double> K_f;
    std::optional<double> L_fz;
    std::optional<double> L_a;
    std::optional<double> K_a;
    std::optional<double> M_g;
};

/// Deterministic hazard rate lambda(t) of a jump time independent of W.
class JumpModel {
public:
    enum class Kind { constant, piecewise_constant, general };

    JumpModel() : JumpModel(constant(0.0)) {}

    static JumpModel constant(double rate) {
        if (!(rate >= 0.0) || !std::isfinite(rate)) {
            throw std::invalid_argument("hazard rate must be finite and >= 0");
        }
        JumpModel m(Kind::constant);
        m.rates_ = {rate};
        m.max_rate_ = rate;
        return m;
    }

    /// Rate rates[k] on [breaks[k-1], breaks[k]) with breaks[-1] = 0 and the
    /// last rate extending to infinity. breaks must be positive and increasing.
    static JumpModel piecewise_constant(std::vector<double> breaks, std::vector<double> rates) {
        if (rates.size() != breaks.size() + 1) {
            throw std::invalid_argument("piecewise hazard needs one more rate than breakpoints");
        }
        double prev = 0.0;
        for (double b : breaks) {
            if (!(b > prev) || !std::isfinite(b)) {
                throw std::invalid_argument("hazard breakpoints must be positive and increasing");
            }
            prev = b;
        }
        for (double r : rates) {
            if (!(r >= 0.0) || !std::isfinite(r)) {
                throw std::invalid_argument("hazard rate must be finite and >= 0");
            }
        }
        JumpModel m(Kind::piecewise_constant);
        m.max_rate_ = *std::max_element(rates.begin(), rates.end());
        m.breaks_ = std::move(breaks);
        m.rates_ = std::move(rates);
        return m;
    }

    /// Arbitrary bounded hazard; max_rate is the declared bound.
    static JumpModel general(std::function<double(double)> hazard, double max_rate) {
        if (!hazard) throw std::invalid_argument("hazard function is empty");
        if (!(max_rate >= 0.0) || !std::isfinite(max_rate)) {
            throw std::invalid_argument("hazard bound must be finite and >= 0");
        }
        JumpModel m(Kind::general);
        m.hazard_ = std::move(hazard);
        m.max_rate_ = max_rate;
        return m;
    }

    Kind kind() const { return kind_; }
    double max_hazard() const { return max_rate_; }

    double hazard(double t) const {
        switch (kind_) {
            case Kind::constant: return rates_[0];
            case Kind::piecewise_constant: {
                auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
                return rates_[static_cast<std::size_t>(it - breaks_.begin())];
            }
            case Kind::general: return hazard_(t);
        }
        return 0.0;
    }

    /// Lambda(t) = int_0^t lambda(s) ds.
    double cumulative(double t) const {
        if (t <= 0.0) return 0.0;
        switch (kind_) {
            case Kind::constant: return rates_[0] * t;
            case Kind::piecewise_constant: {
                double acc = 0.0;
                double left = 0.0;
                for (std::size_t k = 0; k < breaks_.size() && left < t; ++k) {
                    const double right = std::min(t, breaks_[k]);
                    acc += rates_[k] * (right - left);
                    left = breaks_[k];
                }
                if (left < t) acc += rates_.back() * (t - left);
                return acc;
            }
            case Kind::general:
                return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(hazard_, 0.0, t, 15, 1e-13);
        }
        return 0.0;
    }

    double survival(double t) const { return std::exp(-cumulative(t)); }
    double density(double t) const { return hazard(t) * survival(t); }

    /// Inverse cumulative hazard at -log(1-u). Returns +infinity when the
    /// hazard mass is insufficient; any value > horizon means "no jump".
    double sample(double u, double horizon) const {
        const double target = -std::log1p(-u);
        switch (kind_) {
            case Kind::constant:
                return rates_[0] > 0.0 ? target / rates_[0] : std::numeric_limits<double>::infinity();
            case Kind::piecewise_constant: {
                double acc = 0.0;
                double left = 0.0;
                for (std::size_t k = 0; k <= breaks_.size(); ++k) {
                    const double rate = rates_[k];
                    const double right = k < breaks_.size() ? breaks_[k] : std::numeric_limits<double>::infinity();
                    const double mass = rate * (right - left);
                    if (rate > 0.0 && acc + mass >= target) return left + (target - acc) / rate;
                    if (std::isfinite(mass)) acc += mass;
                    left = right;
                }
                return std::numeric_limits<double>::infinity();
            }
            case Kind::general: {
                double lo = 0.0;
                double hi = horizon + (max_rate_ > 0.0 ? 10.0 / max_rate_ : 0.0);
                if (cumulative(hi) < target) return std::numeric_limits<double>::infinity();
                while (hi - lo > 1e-12) {
                    const double mid = 0.5 * (lo + hi);
                    if (mid <= lo || mid >= hi) break;
                    (cumulative(mid) < target ? lo : hi) = mid;
                }
                return hi;
            }
        }
        return std::numeric_limits<double>::infinity();
    }

    /// Probes lambda on [0, horizon] against 0 <= lambda <= max_hazard.
    std::vector<std::string> validate(double horizon, std::size_t probes) const {
        std::vector<std::string> out;
        for (std::size_t k = 0; k <= probes; ++k) {
            const double t = horizon * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(probes, 1));
            const double h = hazard(t);
            if (!(h >= 0.0) || h > max_rate_ * (1.0 + 1e-9)) {
                std::ostringstream msg;
                msg << "hazard " << h << " at t=" << t << " outside [0, " << max_rate_ << "]";
                out.push_back(msg.str());
                break;
            }
        }
        return out;
    }

private:
    explicit JumpModel(Kind kind) : kind_(kind) {}

    Kind kind_;
    std::vector<double> breaks_;
    std::vector<double> rates_;
    std::function<double(double)> hazard_;
    double max_rate_ = 0.0;
};

/// Coefficients, horizon, jump law and declared constants of one problem.
/// Coefficient functions must be pure: they are called concurrently.
struct ProblemSpec {
    std::string name = "custom";
    Coefficient drift;
    Coefficient diffusion;
    Coefficient jump_size;
    Terminal terminal;
    Generator generator;
    double x0 = 0.0;
    double horizon = 1.0;
    JumpModel jump;
    GeneratorKind kind = GeneratorKind::lipschitz;
    Constants constants;
};

struct Violation {
    std::string assumption;
    std::string detail;
    std::size_t count = 1;
};

struct ValidationReport {
    std::vector<Violation> violations;
    std::size_t probes = 0;

    bool ok() const { return violations.empty(); }

    std::string summary() const {
        if (ok()) return "all assumption probes passed";
        std::ostringstream out;
        for (const auto& v : violations) {
            out << v.assumption << ": " << v.detail;
            if (v.count > 1) out << " (" << v.count << " violating samples)";
            out << '\n';
        }
        return out.str();
    }
};

inline constexpr double kProbeSlack = 1.0 + 1e-9;

namespace detail {

class ProbeRecorder {
public:
    explicit ProbeRecorder(ValidationReport& report) : report_(report) {}

    template <class Describe>
    void check(const std::string& assumption, double lhs, double rhs, Describe&& describe) {
        if (std::isfinite(lhs) && lhs <= rhs * kProbeSlack) return;
        for (auto& v : report_.violations) {
            if (v.assumption == assumption) {
                ++v.count;
                return;
            }
        }
        std::ostringstream msg;
        msg.precision(17);
        msg << describe() << ": lhs " << lhs << " > rhs " << rhs;
        report_.violations.push_back({assumption, msg.str(), 1});
    }

    void missing(const std::string& assumption, const std::string& constant) {
        report_.violations.push_back({assumption, "constant " + constant + " not declared", 1});
    }

private:
    ValidationReport& report_;
};

inline std::string point(std::initializer_list<std::pair<const char*, double>> values) {
    std::ostringstream out;
    out.precision(17);
    bool first = true;
    for (const auto& [name, v] : values) {
        out << (first ? "" : ", ") << name << "=" << v;
        first = false;
    }
    return out.str();
}

}  // namespace detail

/// Probes the declared inequalities of the active assumption set at random
/// points: t in [0, T], x in x0 +/- 4, y, z, u in [-4, 4].
inline ValidationReport validate_assumptions(const ProblemSpec& spec, std::size_t probe_count, std::uint64_t seed) {
    ValidationReport report;
    report.probes = probe_count;
    detail::ProbeRecorder rec(report);
    const Constants& c = spec.constants;
    const double T = spec.horizon;

    const std::pair<const char*, bool> present[] = {
        {"drift", static_cast<bool>(spec.drift)},       {"diffusion", static_cast<bool>(spec.diffusion)},
        {"jump_size", static_cast<bool>(spec.jump_size)}, {"terminal", static_cast<bool>(spec.terminal)},
        {"generator", static_cast<bool>(spec.generator)},
    };
    for (const auto& [name, set] : present) {
        if (!set) report.violations.push_back({"spec", std::string(name) + " is not set", 1});
    }
    if (!(T > 0.0) || !std::isfinite(T)) report.violations.push_back({"spec", "horizon must be > 0", 1});
    if (!report.ok()) return report;

    const auto check_constant = [&](const char* name, const std::optional<double>& v) {
        if (v && (!(*v >= 0.0) || !std::isfinite(*v))) {
            report.violations.push_back({"constants", std::string(name) + " must be finite and >= 0", 1});
        }
    };
    check_constant("K", c.K);
    check_constant("K_g", c.K_g);
    check_constant("K_q", c.K_q);
    check_constant("K_f", c.K_f);
    check_constant("L_fz", c.L_fz);
    check_constant("L_a", c.L_a);
    check_constant("K_a", c.K_a);
    check_constant("M_g", c.M_g);
    if (!report.ok()) return report;

    for (auto& s : spec.jump.validate(T, 64)) report.violations.push_back({"hazard", s, 1});

    const bool lipschitz = spec.kind == GeneratorKind::lipschitz;
    if (!c.K) rec.missing("HF", "K");
    if (lipschitz) {
        if (!c.K) rec.missing("HBL", "K");
    } else {
        if (!c.M_g) rec.missing("HBQ", "M_g");
        if (!c.K_g) rec.missing("HBQ", "K_g");
        if (!c.K_q) rec.missing("HBQ", "K_q");
        if (!c.K_f) rec.missing("HBQD", "K_f");
        if (!c.L_fz) rec.missing("HBQD", "L_fz");
        if (!c.L_a) rec.missing("quadratic forward", "L_a");
        if (!c.K_a) rec.missing("quadratic forward", "K_a");
    }

    CounterRng rng(seed, 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> box(-4.0, 4.0);
    const auto& b = spec.drift;
    const auto& s = spec.diffusion;
    const auto& be = spec.jump_size;
    const auto& g = spec.terminal;
    const auto& f = spec.generator;

    for (std::size_t k = 0; k < probe_count; ++k) {
        const double t = T * unit(rng), t2 = T * unit(rng);
        const double x = spec.x0 + box(rng), x2 = spec.x0 + box(rng);
        const double y = box(rng), y2 = box(rng);
        const double z = box(rng), z2 = box(rng);
        const double u = box(rng), u2 = box(rng);
        const double dt = std::abs(t - t2), dx = std::abs(x - x2);
        const double dy = std::abs(y - y2), dz = std::abs(z - z2), du = std::abs(u - u2);
        const auto at = [&] {
            return detail::point({{"t", t}, {"t'", t2}, {"x", x}, {"x'", x2}, {"y", y}, {"y'", y2},
                                  {"z", z}, {"z'", z2}, {"u", u}, {"u'", u2}});
        };

        if (c.K) {
            const double K = *c.K;
            rec.check("HF growth", std::abs(b(t, 0.0)) + std::abs(s(t, 0.0)) + std::abs(be(t, 0.0)), K, at);
            rec.check("HF Lipschitz",
                      std::abs(b(t, x) - b(t, x2)) + std::abs(s(t, x) - s(t, x2)) + std::abs(be(t, x) - be(t, x2)),
                      K * dx, at);
            rec.check("HFD Hoelder", std::abs(b(t, x) - b(t2, x)) + std::abs(s(t, x) - s(t2, x)), K * std::sqrt(dt),
                      at);
            rec.check("HFD jump", std::abs(be(t, x) - be(t2, x)), K * dt, at);
        }

        if (c.K_g) rec.check("g Lipschitz", std::abs(g(x) - g(x2)), *c.K_g * dx, at);

        if (lipschitz) {
            if (c.K) {
                const double K = *c.K;
                rec.check("HBL growth", std::abs(f(t, x, 0.0, 0.0, 0.0)) + std::abs(g(x)), K, at);
                rec.check("HBL Lipschitz", std::abs(f(t, x, y, z, u) - f(t, x, y2, z2, u2)), K * (dy + dz + du), at);
                rec.check("HBLD", std::abs(g(x) - g(x2)) + std::abs(f(t, x, y, z, u) - f(t2, x2, y, z, u)),
                          K * (dx + std::sqrt(dt)), at);
            }
        } else {
            if (c.M_g) rec.check("HBQ bound", std::abs(g(x)), *c.M_g, at);
            if (c.K_q) {
                const double Kq = *c.K_q;
                rec.check("HBQ Lipschitz y", std::abs(f(t, x, y, z, u) - f(t, x, y2, z, u)), Kq * dy, at);
                rec.check("HBQ growth", std::abs(f(t, x, y, z, u)),
                          Kq * (1.0 + std::abs(y) + z * z + std::abs(u)), at);
            }
            if (c.K_f && c.L_fz) {
                rec.check("HBQD",
                          std::abs(f(t, x, y, z, u) - f(t2, x2, y2, z2, u2)),
                          *c.K_f * (dx + dy + du + std::sqrt(dt)) +
                              *c.L_fz * (1.0 + std::abs(z) + std::abs(z2)) * dz,
                          at);
            }
            rec.check("sigma state-independent", std::abs(s(t, x) - s(t, x2)), 0.0, at);
            if (c.K_a) rec.check("sigma bound", std::abs(s(t, x)), *c.K_a, at);
            if (c.L_a) rec.check("drift Lipschitz", std::abs(b(t, x) - b(t, x2)), *c.L_a * dx, at);
        }
    }
    return report;
}

/// Uniform bound on Z in the quadratic case.
inline double truncation_bound(double L_a, double K_f, double K_g, double K_a, double T) {
    const double first = std::exp((2.0 * L_a + K_f) * T) * (K_g + T * K_f) * K_a;
    const double second = std::exp(2.0 * (K_f + L_a) * T) * (K_g + K_f * T) *
                          (1.0 + T * K_f * std::exp(K_f * T) * (1.0 + L_a * std::exp(L_a * T))) * K_a;
    return std::max(first, second);
}

inline double truncation_bound(const ProblemSpec& spec) {
    if (spec.kind != GeneratorKind::quadratic) {
        throw std::invalid_argument("truncation bound is defined for the quadratic kind only");
    }
    const Constants& c = spec.constants;
    std::string missing;
    if (!c.L_a) missing += " L_a";
    if (!c.K_f) missing += " K_f";
    if (!c.K_g) missing += " K_g";
    if (!c.K_a) missing += " K_a";
    if (!missing.empty()) throw std::invalid_argument("truncation bound needs constants:" + missing);
    return truncation_bound(*c.L_a, *c.K_f, *c.K_g, *c.K_a, spec.horizon);
}

/// phi_M: identity on [-M, M], clamped outside.
inline double truncate_z(double z, double M) {
    return std::abs(z) <= M ? z : std::copysign(M, z);
}

/// Generator consumed by every backward scheme: f itself for the Lipschitz
/// kind, f(t, x, y, phi_M(z), u) for the quadratic kind.
inline Generator effective_generator(const ProblemSpec& spec) {
    if (spec.kind == GeneratorKind::lipschitz) return spec.generator;
    const double M = truncation_bound(spec);
    return [f = spec.generator, M](double t, double x, double y, double z, double u) {
        return f(t, x, y, truncate_z(z, M), u);
    };
}

/// Declared Lipschitz-in-y constant used by the implicit-step pre-check.
inline std::optional<double> declared_y_lipschitz(const ProblemSpec& spec) {
    return spec.kind == GeneratorKind::lipschitz ? spec.constants.K : spec.constants.K_f;
}

}  // namespace jumpfbsde

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "jumpfbsde/backward.hpp"
#include "jumpfbsde/forward.hpp"
#include "jumpfbsde/timegrid.hpp"

namespace jumpfbsde {

/// Every grid-resolution quantity of one path, recomputed from the stored
/// regressions. For training paths the values are bit-identical to those
/// produced during the backward pass.
struct PathTrace {
    double tau = 0.0;
    std::optional<std::size_t> jump;  ///< index of pi(tau) when tau <= T
    std::vector<double> x0, y0, z0;   ///< pre-jump chain; z0 has n entries
    std::vector<double> diag;         ///< Y1_{t_i}(t_i)
    std::vector<double> x1, y1, z1;   ///< branch pi(tau); y1, z1 valid from the jump index on
};

inline PathTrace trace_path(const SchemeSolution& sol, std::span<const double> dw, double tau) {
    const TimeGrid& grid = sol.grid;
    const std::size_t n = grid.steps();
    if (dw.size() != n) throw std::invalid_argument("increment row does not match the grid");
    const auto& f = sol.generator;
    const auto& g = sol.spec.terminal;
    const auto& opt = sol.options.picard;
    PathTrace tr;
    tr.tau = tau;
    tr.jump = jump_index(grid, tau);
    tr.x0.resize(n + 1);
    tr.y0.resize(n + 1);
    tr.z0.resize(n);
    tr.diag.resize(n + 1);
    x0_path(sol.spec, grid, dw, tr.x0.data());
    for (std::size_t i = 0; i <= n; ++i) {
        const double kicked = tr.x0[i] + branch_kick(sol.spec, grid, i, i == 0 ? sol.spec.x0 : tr.x0[i - 1]);
        double z = 0.0;
        tr.diag[i] = branch_value(f, g, grid, *sol.branches.fits[i], i, kicked, opt, z);
        tr.y0[i] = zero_value(f, g, grid, sol.zero.fits, i, tr.x0[i], tr.diag[i], opt, z);
        if (i < n) tr.z0[i] = z;
    }
    if (tr.jump) {
        const std::size_t J = *tr.jump;
        tr.x1.resize(n + 1);
        tr.y1.assign(n + 1, 0.0);
        tr.z1.assign(n, 0.0);
        x1_path(sol.spec, grid, dw, tr.x0.data(), J, tr.x1.data());
        const ChainFits& fits = *sol.branches.fits[J];
        for (std::size_t i = J; i <= n; ++i) {
            double z = 0.0;
            tr.y1[i] = branch_value(f, g, grid, fits, i, tr.x1[i], opt, z);
            if (i < n) tr.z1[i] = z;
        }
    }
    return tr;
}

struct SchemeValues {
    double x, y, z, u;
};

/// Global scheme at time t:
///   X, Y from the pre-jump chain for t < tau, from branch pi(tau) for t >= tau;
///   Z from the pre-jump chain for t <= tau, from branch pi(tau) for t > tau;
///   U = Y1_{pi(t)}(pi(t)) - Y0_{pi(t)} for t <= tau, 0 after.
/// Z at t = T reads the last defined index n - 1.
inline SchemeValues evaluate_trace(const PathTrace& tr, const TimeGrid& grid, double t) {
    const std::size_t i = grid.project(t).index;
    const std::size_t iz = std::min(i, grid.steps() - 1);
    SchemeValues v{};
    if (t < tr.tau) {
        v.x = tr.x0[i];
        v.y = tr.y0[i];
    } else {
        v.x = tr.x1[i];
        v.y = tr.y1[i];
    }
    v.z = t <= tr.tau ? tr.z0[iz] : tr.z1[iz];
    v.u = t <= tr.tau ? tr.diag[i] - tr.y0[i] : 0.0;
    return v;
}

/// Solution bound to the bundle it was trained on, evaluable per path at
/// any t in [0, T].
class GlobalSolution {
public:
    GlobalSolution(std::shared_ptr<const SchemeSolution> sol, std::shared_ptr<const PathBundle> bundle)
        : sol_(std::move(sol)), bundle_(std::move(bundle)) {
        if (!sol_ || !bundle_) throw std::invalid_argument("global solution needs a solution and a bundle");
    }

    const SchemeSolution& scheme() const { return *sol_; }
    const PathBundle& bundle() const { return *bundle_; }

    PathTrace trace(std::size_t path) const {
        if (path >= bundle_->paths()) throw std::out_of_range("path index beyond bundle");
        const auto r = static_cast<Eigen::Index>(path);
        std::vector<double> dw(bundle_->steps());
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = bundle_->increments(r, static_cast<Eigen::Index>(i));
        return trace_path(*sol_, dw, bundle_->tau[path]);
    }

    SchemeValues evaluate(double t, std::size_t path) const { return evaluate_trace(trace(path), sol_->grid, t); }

private:
    std::shared_ptr<const SchemeSolution> sol_;
    std::shared_ptr<const PathBundle> bundle_;
};

inline SchemeValues evaluate(const GlobalSolution& sol, double t, std::size_t path) { return sol.evaluate(t, path); }

}  // namespace jumpfbsde

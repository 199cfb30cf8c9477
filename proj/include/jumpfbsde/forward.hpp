#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "jumpfbsde/csv.hpp"
#include "jumpfbsde/errors.hpp"
#include "jumpfbsde/model.hpp"
#include "jumpfbsde/parallel.hpp"
#include "jumpfbsde/random.hpp"
#include "jumpfbsde/timegrid.hpp"

namespace jumpfbsde {

/// Brownian increments and jump times for a set of paths on one grid.
/// increments(p, i - 1) is W_{t_i} - W_{t_{i-1}} on path p. tau is the exact
/// jump time; any value > T means no jump on the horizon.
struct PathBundle {
    TimeGrid grid;
    Eigen::MatrixXd increments;
    std::vector<double> tau;
    std::uint64_t seed = 0;

    std::size_t paths() const { return tau.size(); }
    std::size_t steps() const { return grid.steps(); }

    /// First `count` paths (same increments and jump times).
    PathBundle head(std::size_t count) const {
        if (count > paths()) throw std::invalid_argument("head larger than bundle");
        return {grid, increments.topRows(static_cast<Eigen::Index>(count)),
                std::vector<double>(tau.begin(), tau.begin() + static_cast<std::ptrdiff_t>(count)), seed};
    }
};

/// The same Brownian paths on a coarse grid and on its refinement: every
/// coarse increment is the in-order sum of its `factor` fine increments.
struct CoupledBundle {
    PathBundle coarse;
    PathBundle fine;
    std::size_t factor = 1;
};

/// Draws per path, from the stream (seed, path): one uniform for tau, then
/// one standard normal per fine step.
inline CoupledBundle simulate_coupled(const TimeGrid& grid, std::size_t factor, const JumpModel& jump,
                                      std::size_t n_paths, std::uint64_t seed, unsigned threads = 1) {
    if (n_paths == 0) throw std::invalid_argument("need at least one path");
    TimeGrid fine_grid = grid.refine(factor);
    const std::size_t n = grid.steps();
    const std::size_t nf = fine_grid.steps();
    const auto rows = static_cast<Eigen::Index>(n_paths);
    Eigen::MatrixXd fine(rows, static_cast<Eigen::Index>(nf));
    Eigen::MatrixXd coarse(rows, static_cast<Eigen::Index>(n));
    std::vector<double> tau(n_paths);
    std::vector<double> sqrt_h(nf);
    for (std::size_t k = 0; k < nf; ++k) sqrt_h[k] = std::sqrt(fine_grid.step(k + 1));

    parallel_for(n_paths, threads, [&](std::size_t p) {
        CounterRng rng(seed, p);
        std::normal_distribution<double> normal(0.0, 1.0);
        tau[p] = jump.sample(rng.uniform_open(), grid.horizon());
        const auto r = static_cast<Eigen::Index>(p);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t m = 0; m < factor; ++m) {
                const std::size_t k = i * factor + m;
                const double dw = sqrt_h[k] * normal(rng);
                fine(r, static_cast<Eigen::Index>(k)) = dw;
                sum += dw;
            }
            coarse(r, static_cast<Eigen::Index>(i)) = sum;
        }
    });
    return {PathBundle{grid, std::move(coarse), tau, seed}, PathBundle{std::move(fine_grid), std::move(fine), tau, seed},
            factor};
}

inline PathBundle simulate_bundle(const TimeGrid& grid, const JumpModel& jump, std::size_t n_paths, std::uint64_t seed,
                                  unsigned threads = 1) {
    return simulate_coupled(grid, 1, jump, n_paths, seed, threads).coarse;
}

namespace detail {

[[noreturn]] inline void non_finite(const char* what, std::size_t step, std::size_t path, double state) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "non-finite " << what << " at step " << step << ", path " << path << ", state " << state;
    throw NumericalError(msg.str());
}

}  // namespace detail

/// One Euler step x + b(t, x) dt + sigma(t, x) dw.
inline double euler_step(const ProblemSpec& spec, double t, double x, double dt, double dw, std::size_t step = 0,
                         std::size_t path = 0) {
    const double next = x + spec.drift(t, x) * dt + spec.diffusion(t, x) * dw;
    if (!std::isfinite(next)) detail::non_finite("Euler state", step, path, x);
    return next;
}

/// Kick beta(t_{j-1}, X_{j-1}) received by branch j at t_j (x + beta(t_0, x) for j = 0).
inline double branch_kick(const ProblemSpec& spec, const TimeGrid& grid, std::size_t j, double x_prev,
                          std::size_t path = 0) {
    const double kick = j == 0 ? spec.jump_size(grid[0], spec.x0) : spec.jump_size(grid[j - 1], x_prev);
    if (!std::isfinite(kick)) detail::non_finite("jump size", j, path, x_prev);
    return kick;
}

/// Pre-jump chain of one path; out has n + 1 entries.
template <class Increments>
void x0_path(const ProblemSpec& spec, const TimeGrid& grid, const Increments& dw, double* out, std::size_t path = 0) {
    out[0] = spec.x0;
    for (std::size_t i = 1; i <= grid.steps(); ++i) {
        out[i] = euler_step(spec, grid[i - 1], out[i - 1], grid.step(i), dw[i - 1], i, path);
    }
}

/// Branch j of one path given its pre-jump chain; entries i < j copy x0.
template <class Increments>
void x1_path(const ProblemSpec& spec, const TimeGrid& grid, const Increments& dw, const double* x0, std::size_t j,
             double* out, std::size_t path = 0) {
    for (std::size_t i = 0; i < j; ++i) out[i] = x0[i];
    out[j] = x0[j] + branch_kick(spec, grid, j, j == 0 ? spec.x0 : x0[j - 1], path);
    for (std::size_t i = j + 1; i <= grid.steps(); ++i) {
        out[i] = euler_step(spec, grid[i - 1], out[i - 1], grid.step(i), dw[i - 1], i, path);
    }
}

/// X0 chain for every path: paths x (n + 1), column i holds X0_{t_i}.
inline Eigen::MatrixXd euler_x0(const ProblemSpec& spec, const PathBundle& bundle, unsigned threads = 1) {
    const std::size_t n = bundle.steps();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(bundle.paths()), static_cast<Eigen::Index>(n + 1));
    parallel_for(bundle.paths(), threads, [&](std::size_t p) {
        const auto r = static_cast<Eigen::Index>(p);
        std::vector<double> dw(n), out(n + 1);
        for (std::size_t i = 0; i < n; ++i) dw[i] = bundle.increments(r, static_cast<Eigen::Index>(i));
        x0_path(spec, bundle.grid, dw, out.data(), p);
        for (std::size_t i = 0; i <= n; ++i) x(r, static_cast<Eigen::Index>(i)) = out[i];
    });
    return x;
}

/// Branch j (jump date t_j) for every path, sharing the bundle increments.
/// Entries i < j equal the X0 chain bit-exactly.
inline Eigen::MatrixXd euler_x1(const ProblemSpec& spec, const PathBundle& bundle, const Eigen::MatrixXd& x0,
                                std::size_t j, unsigned threads = 1) {
    const std::size_t n = bundle.steps();
    if (j > n) throw std::out_of_range("branch index beyond grid");
    Eigen::MatrixXd x(x0.rows(), x0.cols());
    const auto J = static_cast<Eigen::Index>(j);
    if (J > 0) x.leftCols(J) = x0.leftCols(J);
    const TimeGrid& grid = bundle.grid;
    parallel_for(bundle.paths(), threads, [&](std::size_t p) {
        const auto r = static_cast<Eigen::Index>(p);
        double cur = x0(r, J) + branch_kick(spec, grid, j, j == 0 ? spec.x0 : x0(r, J - 1), p);
        x(r, J) = cur;
        for (std::size_t i = j + 1; i <= n; ++i) {
            cur = euler_step(spec, grid[i - 1], cur, grid.step(i), bundle.increments(r, static_cast<Eigen::Index>(i - 1)),
                             i, p);
            x(r, static_cast<Eigen::Index>(i)) = cur;
        }
    });
    return x;
}

inline Eigen::MatrixXd euler_x1(const ProblemSpec& spec, const PathBundle& bundle, std::size_t j,
                                unsigned threads = 1) {
    return euler_x1(spec, bundle, euler_x0(spec, bundle, threads), j, threads);
}

/// X0 chain plus all n + 1 branches, fully materialized. Memory is
/// O(paths * n^2); intended for tests and path dumps.
struct BranchEnsemble {
    Eigen::MatrixXd x0;
    std::vector<Eigen::MatrixXd> branches;
};

inline BranchEnsemble materialize_branches(const ProblemSpec& spec, const PathBundle& bundle, unsigned threads = 1) {
    BranchEnsemble e{euler_x0(spec, bundle, threads), {}};
    e.branches.reserve(bundle.steps() + 1);
    for (std::size_t j = 0; j <= bundle.steps(); ++j) e.branches.push_back(euler_x1(spec, bundle, e.x0, j, threads));
    return e;
}

/// Index of pi(tau) when tau <= T, otherwise no jump index.
inline std::optional<std::size_t> jump_index(const TimeGrid& grid, double tau) {
    if (!(tau <= grid.horizon())) return std::nullopt;
    return grid.project(tau).index;
}

/// Global forward scheme at time t: X0_{pi(t)} before tau, X1_{pi(t)}(pi(tau)) from tau on.
inline std::vector<double> assemble_x(const BranchEnsemble& e, const PathBundle& bundle, double t) {
    const auto i = static_cast<Eigen::Index>(bundle.grid.project(t).index);
    std::vector<double> out(bundle.paths());
    for (std::size_t p = 0; p < out.size(); ++p) {
        const auto r = static_cast<Eigen::Index>(p);
        if (t < bundle.tau[p]) {
            out[p] = e.x0(r, i);
        } else {
            out[p] = e.branches[*jump_index(bundle.grid, bundle.tau[p])](r, i);
        }
    }
    return out;
}

/// CSV `path,branch,i,t,x`; branch -1 is the X0 chain. Path-major, then branch, then i.
inline void write_paths_csv(std::ostream& out, const BranchEnsemble& e, const TimeGrid& grid) {
    out << "path,branch,i,t,x\n";
    const auto paths = e.x0.rows();
    const std::size_t n = grid.steps();
    for (Eigen::Index p = 0; p < paths; ++p) {
        for (long b = -1; b <= static_cast<long>(n); ++b) {
            const Eigen::MatrixXd& m = b < 0 ? e.x0 : e.branches[static_cast<std::size_t>(b)];
            for (std::size_t i = 0; i <= n; ++i) {
                out << p << ',' << b << ',' << i << ',' << format_real(grid[i]) << ','
                    << format_real(m(p, static_cast<Eigen::Index>(i))) << '\n';
            }
        }
    }
}

}  // namespace jumpfbsde
